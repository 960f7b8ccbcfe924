//! The spiking realization of the layer: each presentation simulates a window
//! of leaky integrate-and-fire dynamics (proximal drive, somatic
//! winner-take-all under lateral inhibition, dendritic segment units), and
//! reproduces the discrete layer's active sets exactly.
//!
//! Run with: cargo run --example spiking_microcircuit

use seqmem::protocol::SequenceSpec;
use seqmem::spiking::equivalence_probe;
use seqmem::{
    Backend, DiscreteBackend, GateMode, Geometry, LearningParams, SpikingBackend, SpikingParams,
    TemporalMemory, Vocabulary,
};

fn main() -> seqmem::Result<()> {
    let mut vocab = Vocabulary::new(128, 4, 9)?;
    let words = ["cows", "give", "milk"];
    let items: Vec<_> = words.iter().map(|w| vocab.register(w)).collect::<Result<_, _>>()?;

    // Four columns per item wants a lower prediction threshold: a learned
    // segment holds one synapse per presynaptic column and must exceed it.
    let params = LearningParams { theta: 2, ..LearningParams::default() };
    let geometry = Geometry { m_columns: 128, cells_per_column: 4 };
    let tm = TemporalMemory::new(geometry, params, 5)?;
    let mut trainer = DiscreteBackend::new(tm, GateMode::AlwaysOpen);
    for _ in 0..4 {
        trainer.reset_context();
        for item in &items {
            trainer.present(vocab.encode(*item)?, true)?;
        }
    }

    let spiking_params = SpikingParams::default();
    let mut spiking = SpikingBackend::new(trainer.memory().clone(), spiking_params.clone(), None, &vocab)?;
    let cal = spiking.calibration().clone();
    println!(
        "calibrated window: {} steps ({} compete), proximal kick at step {}, \
         predicted somata cross at steps {:?}, bursting at {:?}",
        cal.steps_window, cal.steps_compete, cal.p_spike_step, cal.pred_spike_steps, cal.burst_spike_steps
    );
    println!();

    for (word, item) in words.iter().zip(&items) {
        spiking.present(vocab.encode(*item)?, false)?;
        let ev = spiking.last_events();
        println!(
            "{word:<5} somatic spikes {:>2}  inhibitory {:>2}  segment units {:>2}  -> {} active cells, {} primed for next",
            ev.s_spikes.len(),
            ev.i_spikes.len(),
            ev.d_spikes.len(),
            spiking.active_cells().len(),
            spiking.primed_cells().len(),
        );
    }

    // First item bursts (4 columns x 4 cells), the rest fire one predicted
    // cell per column. The probe replays both realizations side by side.
    let seq = SequenceSpec { id: "demo".into(), items: items.clone() };
    let report = equivalence_probe(trainer.memory(), &spiking_params, &vocab, &[&seq, &seq], true)?;
    println!();
    println!(
        "equivalence probe: {} steps compared, {} mismatches",
        report.steps_compared,
        report.mismatches.len()
    );
    Ok(())
}
