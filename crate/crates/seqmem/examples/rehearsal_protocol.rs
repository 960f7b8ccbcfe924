//! The two-phase training protocol: shuffled learning epochs, then rehearsal
//! epochs where under-learned adjacent pairs are probabilistically repeated
//! until they stick (with per-sequence fatigue).
//!
//! Run with: cargo run --example rehearsal_protocol

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqmem::experiments::{build_e2_corpus, ModelParams};
use seqmem::protocol::{run_training, Phase, ProtocolParams, TrainingLog};
use seqmem::{DiscreteBackend, GateMode, Stopwords, TemporalMemory, Vocabulary};

fn main() -> seqmem::Result<()> {
    let model = ModelParams::default();
    let mut vocab = Vocabulary::new(model.m_columns, model.columns_per_item, 1)?;
    let corpus = build_e2_corpus(&mut vocab, &Stopwords::builtin())?;
    println!(
        "corpus: {} sequences over {} words (start pattern included)",
        corpus.sequences.len(),
        vocab.len()
    );

    let tm = TemporalMemory::new(model.geometry(), model.learning.clone(), 2)?;
    let mut backend = DiscreteBackend::new(tm, GateMode::AlwaysOpen);
    let params = ProtocolParams {
        learn_epochs: 2,
        rehearsal_epochs: 6,
        rho: 1e-7,
        ..ProtocolParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut log = TrainingLog::new();
    let report = run_training(&mut backend, &vocab, &corpus, &params, &mut rng, &mut log)?;

    for em in &report.epoch_means {
        let phase = match em.phase {
            Phase::Learn => "learn    ",
            Phase::Rehearse => "rehearse ",
            Phase::Pair | Phase::Noise => "other    ",
        };
        let bar = em
            .mean_accuracy
            .map(|a| "#".repeat((a * 40.0).round() as usize))
            .unwrap_or_default();
        println!("epoch {:>2} {phase} {:.3} {bar}", em.epoch, em.mean_accuracy.unwrap_or(0.0));
    }
    println!();
    println!(
        "{} presentations, {} pair repeats injected by rehearsal, {} log rows",
        report.presentations.len(),
        report.pair_repeats,
        log.rows().len()
    );
    Ok(())
}
