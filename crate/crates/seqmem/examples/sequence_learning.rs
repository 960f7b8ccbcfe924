//! Learn one word sequence online and watch prediction accuracy climb.
//!
//! Run with: cargo run --example sequence_learning

use seqmem::{Backend, DiscreteBackend, GateMode, Geometry, LearningParams, TemporalMemory, Vocabulary};

fn main() -> seqmem::Result<()> {
    let mut vocab = Vocabulary::new(512, 6, 42)?;
    let words = ["wheels", "bus", "go", "round", "town"];
    let items: Vec<_> = words.iter().map(|w| vocab.register(w)).collect::<Result<_, _>>()?;

    let geometry = Geometry { m_columns: 512, cells_per_column: 8 };
    let tm = TemporalMemory::new(geometry, LearningParams::default(), 7)?;
    let mut backend = DiscreteBackend::new(tm, GateMode::AlwaysOpen);

    for pass in 1..=5 {
        backend.reset_context();
        let mut accuracies = Vec::new();
        for item in &items {
            let out = backend.present(vocab.encode(*item)?, true)?;
            accuracies.push(out.accuracy);
        }
        // The first element is never predictable (nothing precedes it), so
        // report the mean over the rest.
        let mean: f64 = accuracies[1..].iter().sum::<f64>() / (accuracies.len() - 1) as f64;
        println!("pass {pass}: transition accuracy {mean:.2}  (per step: {accuracies:.0?})");
    }

    println!();
    let store = backend.memory().store();
    println!(
        "layer now holds {} segments / {} synapses",
        store.segment_count(),
        store.synapse_count()
    );

    // Frozen replay: every transition is anticipated before its input arrives.
    backend.reset_context();
    for (word, item) in words.iter().zip(&items) {
        let predicted = backend.predicted_columns();
        let actual = vocab.encode(*item)?;
        let hit = predicted == actual.columns();
        backend.present(actual, false)?;
        println!("present {word:<7} predicted in advance: {}", if hit { "yes" } else { "no" });
    }
    Ok(())
}
