//! Property tests: the segment store's incremental bookkeeping must agree
//! with brute-force recomputation, and permanences must stay in [0, 1]
//! under arbitrary interleavings of learning operations.

use proptest::prelude::*;
use seqmem::temporal_memory::{Segment, Synapse};
use seqmem::{CellId, Geometry, LearningParams, Sdr, SegmentStore, StepContext, TemporalMemory};

const M: u32 = 12;
const N: u32 = 3;

fn geometry() -> Geometry {
    Geometry {
        m_columns: M,
        cells_per_column: N,
    }
}

prop_compose! {
    fn arb_cell()(idx in 0..(M * N)) -> CellId {
        CellId(idx)
    }
}

prop_compose! {
    fn arb_synapse()(presyn in arb_cell(), perm in 0.0f64..=1.0) -> Synapse {
        Synapse { presyn, perm }
    }
}

prop_compose! {
    fn arb_segment()(cell in arb_cell(), synapses in prop::collection::vec(arb_synapse(), 1..12)) -> (CellId, Vec<Synapse>) {
        (cell, synapses)
    }
}

fn arb_active() -> impl Strategy<Value = Vec<CellId>> {
    prop::collection::btree_set(0..(M * N), 0..12)
        .prop_map(|s| s.into_iter().map(CellId).collect())
}

fn brute_force_overlap(seg: &Segment, active: &[CellId], perm_connected: f64) -> (u32, u32) {
    let mut connected = 0;
    let mut potential = 0;
    for syn in &seg.synapses {
        if syn.perm > 0.0 && active.contains(&syn.presyn) {
            potential += 1;
            if syn.perm >= perm_connected {
                connected += 1;
            }
        }
    }
    (connected, potential)
}

proptest! {
    #[test]
    fn overlap_counts_match_brute_force(
        segments in prop::collection::vec(arb_segment(), 1..20),
        active in arb_active(),
    ) {
        let mut store = SegmentStore::new(geometry());
        let mut ids = Vec::new();
        for (cell, synapses) in segments {
            ids.push(store.add_segment(cell, synapses));
        }
        let overlaps = store.overlaps(&active, 0.5);
        for id in ids {
            let seg = store.segment(id).unwrap();
            let (c, p) = brute_force_overlap(seg, &active, 0.5);
            prop_assert_eq!(overlaps.connected(id), c);
            prop_assert_eq!(overlaps.potential(id), p);
        }
    }

    #[test]
    fn overlap_counts_survive_removal_and_regrowth(
        segments in prop::collection::vec(arb_segment(), 2..20),
        remove_idx in 0usize..20,
        active in arb_active(),
    ) {
        let mut store = SegmentStore::new(geometry());
        let mut ids = Vec::new();
        for (cell, synapses) in segments {
            ids.push(store.add_segment(cell, synapses));
        }
        let victim = ids[remove_idx % ids.len()];
        store.remove_segment(victim);
        let regrown = store.add_segment(CellId(0), vec![Synapse { presyn: CellId(5), perm: 0.7 }]);
        prop_assert!(store.segment(victim).is_none());

        let overlaps = store.overlaps(&active, 0.5);
        prop_assert_eq!(overlaps.connected(victim), 0);
        for id in ids.into_iter().filter(|i| *i != victim).chain([regrown]) {
            let seg = store.segment(id).unwrap();
            let (c, p) = brute_force_overlap(seg, &active, 0.5);
            prop_assert_eq!(overlaps.connected(id), c);
            prop_assert_eq!(overlaps.potential(id), p);
        }
    }

    #[test]
    fn permanences_stay_in_unit_interval_under_random_training(
        seed in 0u64..1000,
        steps in prop::collection::vec(
            (prop::collection::btree_set(0..M, 1..5), any::<bool>(), any::<bool>()),
            1..40,
        ),
        decay in 0.0f64..0.02,
    ) {
        let mut tm = TemporalMemory::new(geometry(), LearningParams::default(), seed).unwrap();
        for (cols, reset, high) in steps {
            if reset {
                tm.reset();
            }
            let sdr = Sdr::new(cols.into_iter().collect(), M).unwrap();
            let p = &tm.params;
            let ctx = StepContext {
                learn: true,
                p_plus: if high { p.p_plus_high } else { p.p_plus_low },
            };
            tm.step(&sdr, ctx);
            tm.store_mut().decay(decay);
            for (_, seg) in tm.store().live_segments() {
                for syn in &seg.synapses {
                    prop_assert!((0.0..=1.0).contains(&syn.perm), "perm {} out of range", syn.perm);
                }
            }
        }
    }

    #[test]
    fn predictions_match_brute_force_threshold_rule(
        segments in prop::collection::vec(arb_segment(), 1..25),
        active in arb_active(),
    ) {
        let mut tm = TemporalMemory::new(geometry(), LearningParams::default(), 1).unwrap();
        for (cell, synapses) in segments {
            tm.store_mut().add_segment(cell, synapses);
        }
        let predicted = tm.compute_predictions(&active);
        let p = tm.params.clone();
        for idx in 0..(M * N) {
            let cell = CellId(idx);
            let expect = tm.store().segments_of(cell).iter().any(|id| {
                let seg = tm.store().segment(*id).unwrap();
                brute_force_overlap(seg, &active, p.perm_connected).0 > p.theta
            });
            prop_assert_eq!(predicted.binary_search(&cell).is_ok(), expect);
        }
    }

    #[test]
    fn active_cells_follow_predict_or_burst_rule(
        segments in prop::collection::vec(arb_segment(), 0..20),
        winning in prop::collection::btree_set(0..M, 1..6),
        warmup in prop::collection::btree_set(0..M, 1..6),
    ) {
        let mut tm = TemporalMemory::new(geometry(), LearningParams::default(), 2).unwrap();
        for (cell, synapses) in segments {
            tm.store_mut().add_segment(cell, synapses);
        }
        let warmup_sdr = Sdr::new(warmup.into_iter().collect(), M).unwrap();
        tm.step(&warmup_sdr, StepContext { learn: false, p_plus: 0.0 });
        let predicted: Vec<CellId> = tm.predicted_cells().to_vec();

        let sdr = Sdr::new(winning.iter().copied().collect(), M).unwrap();
        let out = tm.step(&sdr, StepContext { learn: false, p_plus: 0.0 });
        let mut expect = Vec::new();
        for &col in sdr.columns() {
            let in_col: Vec<CellId> = predicted
                .iter()
                .copied()
                .filter(|c| c.column(N) == col)
                .collect();
            if in_col.is_empty() {
                expect.extend((0..N).map(|i| CellId::new(col, i, N)));
            } else {
                expect.extend(in_col);
            }
        }
        expect.sort_unstable();
        prop_assert_eq!(out.active, expect);
        for cell in tm.active_cells() {
            prop_assert!(sdr.contains(cell.column(N)), "active cell outside winning columns");
        }
    }

    #[test]
    fn decay_reports_exactly_the_synapses_reaching_zero(
        segments in prop::collection::vec(arb_segment(), 1..15),
        amount in 0.001f64..0.5,
    ) {
        let mut store = SegmentStore::new(geometry());
        for (cell, synapses) in segments {
            store.add_segment(cell, synapses);
        }
        let expect: u64 = store
            .live_segments()
            .flat_map(|(_, s)| s.synapses.iter())
            .filter(|s| s.perm > 0.0 && s.perm - amount <= 0.0)
            .count() as u64;
        let survivors: usize = store
            .live_segments()
            .flat_map(|(_, s)| s.synapses.iter())
            .filter(|s| s.perm - amount > 0.0)
            .count();
        let reported = store.decay(amount);
        prop_assert_eq!(reported, expect);
        let live: usize = store
            .live_segments()
            .flat_map(|(_, s)| s.synapses.iter())
            .filter(|s| s.perm > 0.0)
            .count();
        prop_assert_eq!(live, survivors);
    }
}
