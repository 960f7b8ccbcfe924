//! Columnar temporal memory over discrete steps.
//!
//! State lives in a layer of `m_columns x cells_per_column` cells plus a
//! store of distal segments. Each step a set of winning columns is imposed;
//! cells fire per the prediction state (predicted cells fire alone,
//! unpredicted winning columns burst), learning reinforces the segments that
//! caused correct predictions, grows segments in bursting columns, and
//! punishes segments that predicted cells which stayed silent.
//!
//! All randomness flows through a seeded ChaCha stream owned by the layer,
//! so identical seeds and inputs replay identical trajectories.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::Sdr;
use crate::error::{Error, Result};

/// Flat cell index: `column * cells_per_column + cell_within_column`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub u32);

impl CellId {
    pub fn new(column: u32, cell: u32, cells_per_column: u32) -> Self {
        CellId(column * cells_per_column + cell)
    }

    pub fn column(self, cells_per_column: u32) -> u32 {
        self.0 / cells_per_column
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub m_columns: u32,
    pub cells_per_column: u32,
}

impl Geometry {
    pub fn cells(&self) -> u32 {
        self.m_columns * self.cells_per_column
    }

    pub fn column_cells(&self, column: u32) -> impl Iterator<Item = CellId> {
        let n = self.cells_per_column;
        (0..n).map(move |i| CellId(column * n + i))
    }
}

/// Plasticity and matching parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    /// A segment predicts when strictly more than `theta` connected synapses
    /// sit on currently active cells.
    pub theta: u32,
    /// Permanence at or above this value makes a synapse connected.
    pub perm_connected: f64,
    /// Permanence granted to newly grown synapses.
    pub perm_init: f64,
    /// Reinforcement increment when the plasticity gate is open.
    pub p_plus_high: f64,
    /// Reinforcement increment when the plasticity gate is closed.
    pub p_plus_low: f64,
    /// Decrement applied to every positive synapse of a reinforced segment.
    pub p_minus: f64,
    /// Decrement applied to segments that predicted a cell that stayed silent.
    pub p_punish: f64,
    /// Minimum potential overlap for a bursting column to reuse its best
    /// segment instead of growing a new one.
    pub min_match: u32,
    /// Cap on synapses sampled onto a newly grown segment.
    pub max_new_synapses: usize,
    pub max_segments_per_cell: usize,
    pub max_synapses_per_segment: usize,
}

impl Default for LearningParams {
    fn default() -> Self {
        let theta = 3u32;
        LearningParams {
            theta,
            perm_connected: 0.5,
            perm_init: 0.3,
            p_plus_high: 0.3,
            p_plus_low: 0.05,
            p_minus: 0.01,
            p_punish: 0.005,
            min_match: theta.div_ceil(2),
            max_new_synapses: 20,
            max_segments_per_cell: 32,
            max_synapses_per_segment: 64,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_minus > 0.0 && self.p_minus < self.p_plus_low) {
            return Err(Error::config(format!(
                "need 0 < p_minus < p_plus_low, got p_minus={} p_plus_low={}",
                self.p_minus, self.p_plus_low
            )));
        }
        if self.p_plus_low > self.p_plus_high || self.p_plus_high > 1.0 {
            return Err(Error::config(format!(
                "need p_plus_low <= p_plus_high <= 1, got {} and {}",
                self.p_plus_low, self.p_plus_high
            )));
        }
        if self.p_punish <= 0.0 {
            return Err(Error::config("p_punish must be positive"));
        }
        if !(self.perm_connected > 0.0 && self.perm_connected < 1.0) {
            return Err(Error::config("perm_connected must lie in (0, 1)"));
        }
        if !(self.perm_init > 0.0 && self.perm_init < 1.0) {
            return Err(Error::config("perm_init must lie in (0, 1)"));
        }
        if self.theta == 0 || self.min_match == 0 {
            return Err(Error::config("theta and min_match must be positive"));
        }
        if self.max_new_synapses == 0
            || self.max_segments_per_cell == 0
            || self.max_synapses_per_segment < self.max_new_synapses
        {
            return Err(Error::config("segment capacity parameters inconsistent"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub presyn: CellId,
    pub perm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub cell: CellId,
    pub synapses: Vec<Synapse>,
}

impl Segment {
    /// Sum of positive permanences; the eviction key.
    pub fn total_permanence(&self) -> f64 {
        self.synapses.iter().map(|s| s.perm.max(0.0)).sum()
    }
}

/// Distal segment store shared by the discrete and spiking realizations.
///
/// Segments live in a slab with stable ids; a per-presynaptic-cell index
/// maps active cells to the (segment, synapse slot) pairs that listen to
/// them, so overlap counting touches only relevant segments. Synapse slots
/// are never reordered; a permanence of exactly 0 marks a dead synapse that
/// participates in nothing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentStore {
    geometry: Geometry,
    /// Slab indexed by `SegmentId`. Ids are never reused: removal leaves a
    /// tombstone, so a dangling id can never alias a younger segment.
    slab: Vec<Option<Segment>>,
    cell_segments: Vec<Vec<SegmentId>>,
    #[serde(skip)]
    presyn_index: Vec<Vec<(SegmentId, u32)>>,
    /// Cumulative count of synapses driven to zero by decay.
    pub decayed_synapses: u64,
}

/// Per-step overlap counts against one active-cell set.
#[derive(Debug, Default, Clone)]
pub struct Overlaps {
    /// Sorted (segment, connected count, potential count) triples, one per
    /// segment with at least one positive synapse on an active cell.
    entries: Vec<(SegmentId, u32, u32)>,
}

impl Overlaps {
    pub fn connected(&self, seg: SegmentId) -> u32 {
        self.entries
            .binary_search_by_key(&seg, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn potential(&self, seg: SegmentId) -> u32 {
        self.entries
            .binary_search_by_key(&seg, |e| e.0)
            .map(|i| self.entries[i].2)
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SegmentId, u32, u32)> + '_ {
        self.entries.iter().copied()
    }
}

impl SegmentStore {
    pub fn new(geometry: Geometry) -> Self {
        let cells = geometry.cells() as usize;
        SegmentStore {
            geometry,
            slab: Vec::new(),
            cell_segments: vec![Vec::new(); cells],
            presyn_index: vec![Vec::new(); cells],
            decayed_synapses: 0,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Rebuilds the presynaptic index after deserialization.
    pub fn rebuild_index(&mut self) {
        let cells = self.geometry.cells() as usize;
        self.presyn_index = vec![Vec::new(); cells];
        if self.cell_segments.len() != cells {
            self.cell_segments = vec![Vec::new(); cells];
            for (i, slot) in self.slab.iter().enumerate() {
                if let Some(seg) = slot {
                    self.cell_segments[seg.cell.0 as usize].push(SegmentId(i as u32));
                }
            }
        }
        for (i, slot) in self.slab.iter().enumerate() {
            if let Some(seg) = slot {
                for (j, syn) in seg.synapses.iter().enumerate() {
                    self.presyn_index[syn.presyn.0 as usize].push((SegmentId(i as u32), j as u32));
                }
            }
        }
    }

    pub fn segment(&self, id: SegmentId) -> Option<&Segment> {
        self.slab.get(id.0 as usize).and_then(Option::as_ref)
    }

    pub fn segments_of(&self, cell: CellId) -> &[SegmentId] {
        &self.cell_segments[cell.0 as usize]
    }

    pub fn live_segments(&self) -> impl Iterator<Item = (SegmentId, &Segment)> {
        self.slab
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|seg| (SegmentId(i as u32), seg)))
    }

    pub fn segment_count(&self) -> usize {
        self.slab.iter().filter(|s| s.is_some()).count()
    }

    pub fn synapse_count(&self) -> usize {
        self.live_segments().map(|(_, s)| s.synapses.len()).sum()
    }

    /// Inserts a segment with the given synapses (used by learning and by
    /// tests building fixtures). Does not evict; callers enforce capacity.
    pub fn add_segment(&mut self, cell: CellId, synapses: Vec<Synapse>) -> SegmentId {
        debug_assert!(synapses.len() <= u32::MAX as usize);
        let id = SegmentId(self.slab.len() as u32);
        for (j, syn) in synapses.iter().enumerate() {
            self.presyn_index[syn.presyn.0 as usize].push((id, j as u32));
        }
        self.slab.push(Some(Segment { cell, synapses }));
        self.cell_segments[cell.0 as usize].push(id);
        id
    }

    /// Appends synapses to an existing segment (growth onto a reused best
    /// match). Callers enforce the per-segment cap.
    pub fn add_synapses(&mut self, id: SegmentId, synapses: Vec<Synapse>) {
        let Some(seg) = self.slab[id.0 as usize].as_mut() else {
            return;
        };
        for syn in synapses {
            let slot = seg.synapses.len() as u32;
            self.presyn_index[syn.presyn.0 as usize].push((id, slot));
            seg.synapses.push(syn);
        }
    }

    pub fn remove_segment(&mut self, id: SegmentId) {
        let Some(seg) = self.slab[id.0 as usize].take() else {
            return;
        };
        for syn in &seg.synapses {
            self.presyn_index[syn.presyn.0 as usize].retain(|(s, _)| *s != id);
        }
        self.cell_segments[seg.cell.0 as usize].retain(|s| *s != id);
    }

    /// Counts, for every segment listening to any active cell, how many of
    /// its connected and positive synapses sit on active cells.
    pub fn overlaps(&self, active: &[CellId], perm_connected: f64) -> Overlaps {
        let mut entries: Vec<(SegmentId, u32, u32)> = Vec::new();
        for cell in active {
            for &(seg_id, slot) in &self.presyn_index[cell.0 as usize] {
                let Some(seg) = self.slab[seg_id.0 as usize].as_ref() else {
                    continue;
                };
                let perm = seg.synapses[slot as usize].perm;
                if perm <= 0.0 {
                    continue;
                }
                let connected = perm >= perm_connected;
                match entries.binary_search_by_key(&seg_id, |e| e.0) {
                    Ok(i) => {
                        entries[i].2 += 1;
                        if connected {
                            entries[i].1 += 1;
                        }
                    }
                    Err(i) => {
                        entries.insert(i, (seg_id, u32::from(connected), 1));
                    }
                }
            }
        }
        Overlaps { entries }
    }

    /// Applies one reinforcement to a segment: positive synapses on active
    /// presynaptic cells gain `p_plus`, every positive synapse loses
    /// `p_minus`, results clamp to [0, 1]. Dead (zero) synapses stay dead.
    pub fn reinforce(&mut self, id: SegmentId, active: &[CellId], p_plus: f64, p_minus: f64) {
        let Some(seg) = self.slab[id.0 as usize].as_mut() else {
            return;
        };
        for syn in &mut seg.synapses {
            if syn.perm <= 0.0 {
                continue;
            }
            let boost = if active.binary_search(&syn.presyn).is_ok() {
                p_plus
            } else {
                0.0
            };
            syn.perm = (syn.perm + boost - p_minus).clamp(0.0, 1.0);
        }
    }

    /// Decrements every positive synapse of a segment by `p_punish`.
    pub fn punish(&mut self, id: SegmentId, p_punish: f64) {
        let Some(seg) = self.slab[id.0 as usize].as_mut() else {
            return;
        };
        for syn in &mut seg.synapses {
            if syn.perm > 0.0 {
                syn.perm = (syn.perm - p_punish).max(0.0);
            }
        }
    }

    /// Linear decay of every positive permanence by `amount`, clamped at 0.
    /// Segments whose synapses have all died are removed. Returns the number
    /// of synapses that reached zero in this call.
    pub fn decay(&mut self, amount: f64) -> u64 {
        if amount <= 0.0 {
            return 0;
        }
        let mut newly_dead = 0u64;
        let mut empty: Vec<SegmentId> = Vec::new();
        for (i, slot) in self.slab.iter_mut().enumerate() {
            let Some(seg) = slot.as_mut() else { continue };
            let mut alive = false;
            for syn in &mut seg.synapses {
                if syn.perm > 0.0 {
                    syn.perm = (syn.perm - amount).max(0.0);
                    if syn.perm == 0.0 {
                        newly_dead += 1;
                    } else {
                        alive = true;
                    }
                }
            }
            if !alive {
                empty.push(SegmentId(i as u32));
            }
        }
        for id in empty {
            self.remove_segment(id);
        }
        self.decayed_synapses += newly_dead;
        newly_dead
    }

    /// The (segment, synapse slot) pairs listening to a presynaptic cell.
    pub fn listeners(&self, cell: CellId) -> &[(SegmentId, u32)] {
        &self.presyn_index[cell.0 as usize]
    }

    /// Connected presynaptic cells of a segment (the weight row the spiking
    /// realization reads).
    pub fn connected_presyn(&self, id: SegmentId, perm_connected: f64) -> Vec<CellId> {
        self.segment(id)
            .map(|seg| {
                seg.synapses
                    .iter()
                    .filter(|s| s.perm >= perm_connected)
                    .map(|s| s.presyn)
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// What a single step produced. `predicted_before` is the prediction state
/// the step was entered with (the basis for accuracy at this step).
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub active: Vec<CellId>,
    pub predicted_before_columns: Vec<u32>,
    pub burst_columns: Vec<u32>,
    pub grown_segments: usize,
    pub reinforced_segments: usize,
    pub punished_segments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub learn: bool,
    /// Reinforcement increment for this presentation (gate-dependent).
    pub p_plus: f64,
}

/// Discrete-step layer: prediction state plus the segment store.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalMemory {
    pub params: LearningParams,
    geometry: Geometry,
    store: SegmentStore,
    active: Vec<CellId>,
    predicted: Vec<CellId>,
    /// Learning cells of the previous step: predicted cells of correctly
    /// predicted columns plus one chosen cell per bursting column. Segment
    /// growth samples these, never the full (possibly bursting) active set,
    /// so distinct contexts stay on distinct cells.
    #[serde(default)]
    winners: Vec<CellId>,
    rng: [u8; 32],
    #[serde(skip, default = "default_rng")]
    rng_state: ChaCha8Rng,
}

fn default_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

impl TemporalMemory {
    pub fn new(geometry: Geometry, params: LearningParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if geometry.m_columns == 0 || geometry.cells_per_column == 0 {
            return Err(Error::config("geometry must have positive dimensions"));
        }
        let mut seed_bytes = [0u8; 32];
        seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
        Ok(TemporalMemory {
            params,
            geometry,
            store: SegmentStore::new(geometry),
            active: Vec::new(),
            predicted: Vec::new(),
            winners: Vec::new(),
            rng: seed_bytes,
            rng_state: ChaCha8Rng::from_seed(seed_bytes),
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn store(&self) -> &SegmentStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut SegmentStore {
        &mut self.store
    }

    pub fn active_cells(&self) -> &[CellId] {
        &self.active
    }

    pub fn predicted_cells(&self) -> &[CellId] {
        &self.predicted
    }

    /// Columns containing at least one currently predicted cell.
    pub fn predicted_columns(&self) -> Vec<u32> {
        let mut cols: Vec<u32> = self
            .predicted
            .iter()
            .map(|c| c.column(self.geometry.cells_per_column))
            .collect();
        cols.dedup();
        cols
    }

    /// Clears temporal context (activity and predictions), not the store.
    pub fn reset(&mut self) {
        self.active.clear();
        self.predicted.clear();
        self.winners.clear();
    }

    /// Restores the seeded RNG after deserialization. Replay from a loaded
    /// checkpoint restarts the stream rather than resuming mid-sequence.
    pub fn reseed_rng(&mut self) {
        self.rng_state = ChaCha8Rng::from_seed(self.rng);
    }

    /// Advances one step with `sdr` as the winning columns.
    pub fn step(&mut self, sdr: &Sdr, ctx: StepContext) -> StepOutcome {
        let n = self.geometry.cells_per_column;
        let prev_active = std::mem::take(&mut self.active);
        let prev_predicted = std::mem::take(&mut self.predicted);

        let mut predicted_before_columns: Vec<u32> =
            prev_predicted.iter().map(|c| c.column(n)).collect();
        predicted_before_columns.dedup();

        // Activity: predicted cells of winning columns fire alone;
        // unpredicted winning columns burst every cell.
        let mut active: Vec<CellId> = Vec::new();
        let mut burst_columns: Vec<u32> = Vec::new();
        for &col in sdr.columns() {
            let lo = prev_predicted.partition_point(|c| c.0 < col * n);
            let hi = prev_predicted.partition_point(|c| c.0 < (col + 1) * n);
            if lo < hi {
                active.extend_from_slice(&prev_predicted[lo..hi]);
            } else {
                burst_columns.push(col);
                active.extend(self.geometry.column_cells(col));
            }
        }
        debug_assert!(active.windows(2).all(|w| w[0] < w[1]));

        let (mut grown, mut reinforced, mut punished) = (0, 0, 0);
        if ctx.learn {
            let prev_winners = std::mem::take(&mut self.winners);
            let outcome = self.apply_learning(
                sdr,
                &prev_active,
                &prev_winners,
                &active,
                &burst_columns,
                ctx.p_plus,
            );
            (grown, reinforced, punished) = (outcome.0, outcome.1, outcome.2);
            self.winners = outcome.3;
        }

        // Predictions for the next step, against post-learning permanences.
        let predicted = self.compute_predictions(&active);

        self.active = active.clone();
        self.predicted = predicted;

        StepOutcome {
            active,
            predicted_before_columns,
            burst_columns,
            grown_segments: grown,
            reinforced_segments: reinforced,
            punished_segments: punished,
        }
    }

    /// One step of plasticity for externally determined activity. The caller
    /// supplies the winning columns, the previous active and learning cell
    /// sets (sorted), the current active set, and the sorted subset of
    /// winning columns that burst; this lets a spiking realization drive the
    /// same weight updates from spikes. Returns (grown, reinforced, punished)
    /// segment counts plus this step's learning cells.
    ///
    /// Causal segments of correctly predicted winning columns and the best
    /// matching (or freshly grown) segment of each bursting column are
    /// reinforced; segments crossing the prediction threshold whose owner
    /// cell stayed silent are punished. Overlaps and reinforcement read the
    /// full previous active set; synapse growth samples only the previous
    /// learning cells, keeping distinct contexts on distinct cells even
    /// while their columns still burst.
    pub fn apply_learning(
        &mut self,
        sdr: &Sdr,
        prev_active: &[CellId],
        prev_winners: &[CellId],
        active: &[CellId],
        burst_columns: &[u32],
        p_plus: f64,
    ) -> (usize, usize, usize, Vec<CellId>) {
        let n = self.geometry.cells_per_column;
        let mut grown = 0;
        let overlaps_prev = self.store.overlaps(prev_active, self.params.perm_connected);
        let overlaps_winners = self.store.overlaps(prev_winners, self.params.perm_connected);
        let theta = self.params.theta;
        let mut winners: Vec<CellId> = Vec::new();

        // Segments that caused correct predictions. The predicted cells that
        // fired are their columns' learning cells.
        let mut targets: Vec<SegmentId> = Vec::new();
        for &col in sdr.columns() {
            if burst_columns.binary_search(&col).is_ok() {
                continue;
            }
            let lo = active.partition_point(|c| c.0 < col * n);
            let hi = active.partition_point(|c| c.0 < (col + 1) * n);
            for cell in &active[lo..hi] {
                winners.push(*cell);
                for &seg in self.store.segments_of(*cell) {
                    if overlaps_prev.connected(seg) > theta {
                        targets.push(seg);
                    }
                }
            }
        }

        // Bursting columns reuse their best matching segment or grow one;
        // the owning cell becomes the column's learning cell either way.
        for &col in burst_columns {
            let mut best: Option<(SegmentId, u32)> = None;
            for cell in self.geometry.column_cells(col) {
                for &seg in self.store.segments_of(cell) {
                    let pot = overlaps_prev.potential(seg);
                    let better = match best {
                        None => pot > 0,
                        Some((bseg, bpot)) => pot > bpot || (pot == bpot && seg < bseg),
                    };
                    if better {
                        best = Some((seg, pot));
                    }
                }
            }
            match best {
                Some((seg, pot)) if pot >= self.params.min_match => {
                    // New synapses join the reused match only when it already
                    // reads this step's learning cells. A bursting column's
                    // full population would also match same-item segments
                    // from other contexts, and extending one of those would
                    // permanently glue the contexts together.
                    let winner_pot = overlaps_winners.potential(seg);
                    if winner_pot >= self.params.min_match {
                        self.extend_segment(seg, winner_pot, prev_winners);
                    }
                    targets.push(seg);
                    if let Some(owner) = self.store.segment(seg).map(|s| s.cell) {
                        winners.push(owner);
                    }
                }
                _ => {
                    let (cell, seg) = self.grow_segment(col, prev_winners);
                    winners.push(cell);
                    if let Some(seg) = seg {
                        targets.push(seg);
                        grown += 1;
                    }
                }
            }
        }
        winners.sort_unstable();

        targets.sort_unstable();
        targets.dedup();
        for seg in &targets {
            self.store
                .reinforce(*seg, prev_active, p_plus, self.params.p_minus);
        }
        let reinforced = targets.len();

        // Segments that predicted a cell that stayed silent.
        let mut punished = 0;
        for (seg_id, connected, _) in overlaps_prev.iter() {
            if connected > theta {
                let owner = self.store.segment(seg_id).map(|s| s.cell);
                if let Some(owner) = owner {
                    if active.binary_search(&owner).is_err() {
                        self.store.punish(seg_id, self.params.p_punish);
                        punished += 1;
                    }
                }
            }
        }
        (grown, reinforced, punished, winners)
    }

    /// Cells owning a segment with strictly more than `theta` connected
    /// synapses on the given active cells.
    pub fn compute_predictions(&self, active: &[CellId]) -> Vec<CellId> {
        let overlaps = self.store.overlaps(active, self.params.perm_connected);
        let mut cells: Vec<CellId> = overlaps
            .iter()
            .filter(|(_, connected, _)| *connected > self.params.theta)
            .filter_map(|(seg, _, _)| self.store.segment(seg).map(|s| s.cell))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// Adds up to `max_new_synapses - active_potential` synapses to a reused
    /// best-match segment, sampling previous learning cells it does not
    /// already listen to, at `perm_init`.
    fn extend_segment(&mut self, seg: SegmentId, active_potential: u32, prev_winners: &[CellId]) {
        let Some(segment) = self.store.segment(seg) else {
            return;
        };
        let mut existing: Vec<CellId> = segment.synapses.iter().map(|s| s.presyn).collect();
        let room = self
            .params
            .max_synapses_per_segment
            .saturating_sub(existing.len());
        let desired = self
            .params
            .max_new_synapses
            .saturating_sub(active_potential as usize)
            .min(room);
        if desired == 0 {
            return;
        }
        existing.sort_unstable();
        let candidates: Vec<CellId> = prev_winners
            .iter()
            .copied()
            .filter(|c| existing.binary_search(c).is_err())
            .collect();
        if candidates.is_empty() {
            return;
        }
        let take = desired.min(candidates.len());
        let mut picks: Vec<CellId> = sample(&mut self.rng_state, candidates.len(), take)
            .iter()
            .map(|i| candidates[i])
            .collect();
        picks.sort_unstable();
        let synapses: Vec<Synapse> = picks
            .into_iter()
            .map(|presyn| Synapse {
                presyn,
                perm: self.params.perm_init,
            })
            .collect();
        self.store.add_synapses(seg, synapses);
    }

    /// Picks the least-used cell of a bursting column (seeded RNG tie-break)
    /// and grows a segment there sampling the previous learning cells. The
    /// cell is returned even when there is nothing to sample, so the column
    /// still exposes a learning cell to the next step.
    fn grow_segment(&mut self, column: u32, prev_winners: &[CellId]) -> (CellId, Option<SegmentId>) {
        let cells: Vec<CellId> = self.geometry.column_cells(column).collect();
        let min_segs = cells
            .iter()
            .map(|c| self.store.segments_of(*c).len())
            .min()
            .unwrap();
        let tied: Vec<CellId> = cells
            .into_iter()
            .filter(|c| self.store.segments_of(*c).len() == min_segs)
            .collect();
        let cell = tied[self.rng_state.gen_range(0..tied.len())];
        if prev_winners.is_empty() {
            return (cell, None);
        }

        if self.store.segments_of(cell).len() >= self.params.max_segments_per_cell {
            let victim = self
                .store
                .segments_of(cell)
                .iter()
                .copied()
                .min_by(|a, b| {
                    let ta = self.store.segment(*a).map(Segment::total_permanence);
                    let tb = self.store.segment(*b).map(Segment::total_permanence);
                    ta.partial_cmp(&tb).unwrap().then(a.cmp(b))
                })
                .unwrap();
            self.store.remove_segment(victim);
        }

        let take = self
            .params
            .max_new_synapses
            .min(self.params.max_synapses_per_segment)
            .min(prev_winners.len());
        let mut picks: Vec<CellId> = sample(&mut self.rng_state, prev_winners.len(), take)
            .iter()
            .map(|i| prev_winners[i])
            .collect();
        picks.sort_unstable();
        let synapses = picks
            .into_iter()
            .map(|presyn| Synapse {
                presyn,
                perm: self.params.perm_init,
            })
            .collect();
        (cell, Some(self.store.add_segment(cell, synapses)))
    }
}
