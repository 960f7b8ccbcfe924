//! Constant weight decay cleans up noise: synapses grown from random noise
//! words are never reinforced and decay to zero, while a transition that is
//! rehearsed now and then stays connected.
//!
//! Run with: cargo run --example noise_and_decay

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqmem::{Backend, DiscreteBackend, GateMode, Geometry, LearningParams, TemporalMemory, Vocabulary};

fn main() -> seqmem::Result<()> {
    let mut vocab = Vocabulary::new(512, 6, 8)?;
    let wheels = vocab.register("wheels")?;
    let bus = vocab.register("bus")?;

    let params = LearningParams::default();
    let geometry = Geometry { m_columns: 512, cells_per_column: 8 };
    let tm = TemporalMemory::new(geometry, params.clone(), 4)?;
    let mut backend = DiscreteBackend::new(tm, GateMode::AlwaysOpen);
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let decay_per_step = 2e-3;
    let rehearse_every = 25;
    println!("decay {decay_per_step}/step, pair rehearsed every {rehearse_every} noise words\n");
    println!("{:>5} {:>9} {:>8} {:>10} {:>10}", "step", "synapses", "decayed", "pair perm", "predicts");

    for step in 1..=300usize {
        if step % rehearse_every == 0 {
            backend.reset_context();
            backend.present(vocab.encode(wheels)?, true)?;
            backend.present(vocab.encode(bus)?, true)?;
        } else {
            let noise = vocab.noise_word(6, &mut rng)?;
            backend.present(&noise, true)?;
        }
        backend.decay(decay_per_step);

        if step % 50 == 0 {
            // The transition's strongest synapse and whether it still predicts.
            let pair_perm = backend
                .memory()
                .store()
                .live_segments()
                .flat_map(|(_, seg)| seg.synapses.iter().map(|s| s.perm))
                .fold(0.0, f64::max);
            backend.reset_context();
            backend.present(vocab.encode(wheels)?, false)?;
            let predicts = backend.predicted_columns() == vocab.encode(bus)?.columns();
            let store = backend.memory().store();
            println!(
                "{step:>5} {:>9} {:>8} {pair_perm:>10.2} {predicts:>10}",
                store.synapse_count(),
                store.decayed_synapses,
            );
        }
    }

    println!("\nnoise-grown synapses keep dying off; the rehearsed transition outlives them");
    Ok(())
}
