//! Long-term-association gating: a transition whose follower is primed by
//! the association graph learns at the high rate and connects in a single
//! presentation; the same transition without the edge needs five.
//!
//! Run with: cargo run --example ltm_gating

use seqmem::ltm::{AssociationNorms, GatePrimer, ItemGraph, LoadOptions, BUILTIN_NORMS_CSV};
use seqmem::{Backend, DiscreteBackend, GateMode, Geometry, LearningParams, TemporalMemory, Vocabulary};

fn main() -> seqmem::Result<()> {
    let mut vocab = Vocabulary::new(256, 6, 3)?;
    let wheels = vocab.register("wheels")?;
    let bus = vocab.register("bus")?;

    let (norms, report) = AssociationNorms::from_reader(BUILTIN_NORMS_CSV.as_bytes(), &LoadOptions::default())?;
    println!("bundled norms: {} rows read, {} edges kept", report.rows_read, report.edges_kept);
    let graph = ItemGraph::from_norms(&norms, &vocab);
    println!("graph over this 2-word vocabulary: {} edges (wheels -> bus: {})", graph.edge_count(), graph.contains_edge(wheels, bus));
    println!();

    let params = LearningParams::default();
    let geometry = Geometry { m_columns: 256, cells_per_column: 8 };
    let mut arm = |label: &str, graph: &ItemGraph| -> seqmem::Result<()> {
        let tm = TemporalMemory::new(geometry, params.clone(), 21)?;
        let primer = GatePrimer::new(graph, &vocab)?;
        let mut backend = DiscreteBackend::new(tm, GateMode::Primed(primer));
        println!("{label}");
        for pass in 1..=5 {
            backend.reset_context();
            backend.present(vocab.encode(wheels)?, true)?;
            let out = backend.present(vocab.encode(bus)?, true)?;
            // Strongest synapse of the transition segment, against the
            // connected threshold that makes it count for prediction.
            let perm = backend
                .memory()
                .store()
                .live_segments()
                .flat_map(|(_, seg)| seg.synapses.iter().map(|s| s.perm))
                .fold(0.0, f64::max);
            println!(
                "  pass {pass}: l_gate={} permanence {perm:.2} {}",
                out.l_gate,
                if perm >= params.perm_connected { "(connected)" } else { "" }
            );
        }
        println!();
        Ok(())
    };

    arm("with the wheels -> bus edge:", &graph)?;
    arm("no edges (control):", &ItemGraph::empty(&vocab))?;
    Ok(())
}
