//! Training protocol: a learning phase of plain exposures followed by a
//! rehearsal phase with per-sequence fatigue, probabilistic re-presentation
//! of unlearned adjacent pairs, optional noise-sequence interference, and
//! per-presentation weight decay.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::encoder::{ItemCode, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{mean, step_accuracy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub id: String,
    pub items: Vec<ItemCode>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub sequences: Vec<SequenceSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Learn,
    Rehearse,
    /// Re-presentation of a single adjacent pair during rehearsal.
    Pair,
    Noise,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Learn => "learn",
            Phase::Rehearse => "rehearse",
            Phase::Pair => "pair",
            Phase::Noise => "noise",
        }
    }
}

pub const NOISE_SEQ_ID: &str = "noise";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: u32,
    pub phase: Phase,
    pub seq_id: String,
    pub step: u32,
    pub accuracy: f64,
    pub l_gate: bool,
    /// Cumulative count of synapses eliminated by decay.
    pub decayed_synapses: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingLog {
    rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "phase", "seq_id", "step", "accuracy", "l_gate", "decayed_synapses"])
            .map_err(|e| Error::serde(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.epoch.to_string(),
                r.phase.as_str().to_string(),
                r.seq_id.clone(),
                r.step.to_string(),
                r.accuracy.to_string(),
                u8::from(r.l_gate).to_string(),
                r.decayed_synapses.to_string(),
            ])
            .map_err(|e| Error::serde(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub learn_epochs: u32,
    pub rehearsal_epochs: u32,
    /// Probability q of re-presenting a still-unlearned adjacent pair.
    pub rehearsal_prob: f64,
    /// A pair counts as learned when a frozen probe of the predecessor
    /// predicts at least this fraction of the successor's columns.
    pub rehearsal_threshold: f64,
    /// Safety cap on consecutive re-presentations of one pair.
    pub max_pair_repeats: u32,
    /// Presentations of each sequence per rehearsal epoch.
    pub fatigue: u32,
    /// Probability that a presentation slot is occupied by a noise sequence
    /// (rehearsal phase only).
    pub noise_prob: f64,
    /// Inclusive bounds on noise sequence length.
    pub noise_len: (u32, u32),
    /// Active columns per noise word.
    pub noise_columns: u32,
    /// Weight decay rate per second of simulated time.
    pub rho: f64,
    /// Simulated seconds that one presentation step stands for.
    pub seconds_per_step: f64,
    /// 0-based element index accuracy measurement starts from.
    pub measure_from: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            learn_epochs: 5,
            rehearsal_epochs: 20,
            rehearsal_prob: 0.7,
            rehearsal_threshold: 0.5,
            max_pair_repeats: 10,
            fatigue: 3,
            noise_prob: 0.0,
            noise_len: (7, 13),
            noise_columns: 6,
            rho: 0.0,
            // Chosen so the two decay rates separate: at 3e-7/s the noise
            // level visibly grades the no-gate control's accuracy, while at
            // 1e-7/s rehearsed transitions hold near ceiling.
            seconds_per_step: 1000.0,
            measure_from: 1,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rehearsal_prob) {
            return Err(Error::config("rehearsal_prob must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.rehearsal_threshold) {
            return Err(Error::config("rehearsal_threshold must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return Err(Error::config("noise_prob must lie in [0, 1]"));
        }
        if self.noise_len.0 == 0 || self.noise_len.0 > self.noise_len.1 {
            return Err(Error::config("noise_len bounds must satisfy 1 <= lo <= hi"));
        }
        if self.rho < 0.0 || self.seconds_per_step <= 0.0 {
            return Err(Error::config("rho must be >= 0 and seconds_per_step > 0"));
        }
        if self.fatigue == 0 {
            return Err(Error::config("fatigue must be at least 1"));
        }
        Ok(())
    }

    fn decay_per_step(&self) -> f64 {
        self.rho * self.seconds_per_step
    }
}

/// One full-sequence presentation, as remembered for learning curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresentationRecord {
    pub epoch: u32,
    pub phase: Phase,
    pub seq_id: String,
    /// Mean accuracy over measured steps, None when nothing was measured.
    pub measured: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMean {
    pub epoch: u32,
    pub phase: Phase,
    pub mean_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ProtocolReport {
    /// Per-epoch mean of measured accuracies over full data-sequence
    /// presentations (noise and pair repeats excluded).
    pub epoch_means: Vec<EpochMean>,
    /// Every full data-sequence presentation, in order.
    pub presentations: Vec<PresentationRecord>,
    pub pair_repeats: u64,
    pub noise_sequences: u64,
}

pub fn run_training(
    backend: &mut dyn Backend,
    vocab: &Vocabulary,
    corpus: &Corpus,
    params: &ProtocolParams,
    rng: &mut ChaCha8Rng,
    log: &mut TrainingLog,
) -> Result<ProtocolReport> {
    params.validate()?;
    if corpus.sequences.is_empty() {
        return Err(Error::config("corpus has no sequences"));
    }
    let mut report = ProtocolReport::default();

    for epoch in 0..params.learn_epochs {
        let mut order: Vec<usize> = (0..corpus.sequences.len()).collect();
        order.shuffle(rng);
        let mut measured = Vec::new();
        for si in order {
            let seq = &corpus.sequences[si];
            let m = present_full(backend, vocab, seq, epoch, Phase::Learn, params, log)?;
            report.presentations.push(PresentationRecord {
                epoch,
                phase: Phase::Learn,
                seq_id: seq.id.clone(),
                measured: m,
            });
            measured.extend(m);
        }
        report.epoch_means.push(EpochMean {
            epoch,
            phase: Phase::Learn,
            mean_accuracy: mean(&measured),
        });
    }

    for e in 0..params.rehearsal_epochs {
        let epoch = params.learn_epochs + e;
        let mut order: Vec<usize> = (0..corpus.sequences.len()).collect();
        order.shuffle(rng);
        let mut measured = Vec::new();
        for si in order {
            let seq = &corpus.sequences[si];
            for _ in 0..params.fatigue {
                // A presentation slot is noise with probability noise_prob;
                // the data presentation happens once a slot is not noise.
                while params.noise_prob > 0.0 && rng.gen::<f64>() < params.noise_prob {
                    present_noise(backend, vocab, epoch, params, rng, log)?;
                    report.noise_sequences += 1;
                }
                let m = present_full(backend, vocab, seq, epoch, Phase::Rehearse, params, log)?;
                report.presentations.push(PresentationRecord {
                    epoch,
                    phase: Phase::Rehearse,
                    seq_id: seq.id.clone(),
                    measured: m,
                });
                measured.extend(m);
            }
            for pair in seq.items.windows(2) {
                let (p, c) = (pair[0], pair[1]);
                let mut reps = 0;
                while reps < params.max_pair_repeats
                    && !pair_learned(backend, vocab, p, c, params.rehearsal_threshold)?
                    && rng.gen::<f64>() < params.rehearsal_prob
                {
                    present_pair(backend, vocab, &seq.id, p, c, epoch, params, log)?;
                    report.pair_repeats += 1;
                    reps += 1;
                }
            }
        }
        report.epoch_means.push(EpochMean {
            epoch,
            phase: Phase::Rehearse,
            mean_accuracy: mean(&measured),
        });
    }
    Ok(report)
}

/// Presents a sequence with learning on; returns the measured-step mean.
fn present_full(
    backend: &mut dyn Backend,
    vocab: &Vocabulary,
    seq: &SequenceSpec,
    epoch: u32,
    phase: Phase,
    params: &ProtocolParams,
    log: &mut TrainingLog,
) -> Result<Option<f64>> {
    backend.reset_context();
    let mut measured = Vec::new();
    for (i, item) in seq.items.iter().enumerate() {
        let sdr = vocab.encode(*item)?.clone();
        let out = backend.present(&sdr, true)?;
        if i >= params.measure_from {
            measured.push(out.accuracy);
        }
        log.push(LogRow {
            epoch,
            phase,
            seq_id: seq.id.clone(),
            step: i as u32,
            accuracy: out.accuracy,
            l_gate: out.l_gate,
            decayed_synapses: backend.memory().store().decayed_synapses,
        });
    }
    backend.decay(params.decay_per_step() * seq.items.len() as f64);
    Ok(mean(&measured))
}

fn present_noise(
    backend: &mut dyn Backend,
    vocab: &Vocabulary,
    epoch: u32,
    params: &ProtocolParams,
    rng: &mut ChaCha8Rng,
    log: &mut TrainingLog,
) -> Result<()> {
    backend.reset_context();
    let len = rng.gen_range(params.noise_len.0..=params.noise_len.1);
    for i in 0..len {
        let sdr = vocab.noise_word(params.noise_columns, rng)?;
        let out = backend.present(&sdr, true)?;
        log.push(LogRow {
            epoch,
            phase: Phase::Noise,
            seq_id: NOISE_SEQ_ID.to_string(),
            step: i,
            accuracy: out.accuracy,
            l_gate: out.l_gate,
            decayed_synapses: backend.memory().store().decayed_synapses,
        });
    }
    backend.decay(params.decay_per_step() * len as f64);
    Ok(())
}

/// Frozen probe: does presenting `p` alone predict at least `tau` of `c`'s
/// columns? Leaves the backend context reset.
pub fn pair_learned(
    backend: &mut dyn Backend,
    vocab: &Vocabulary,
    p: ItemCode,
    c: ItemCode,
    tau: f64,
) -> Result<bool> {
    backend.reset_context();
    let p_sdr = vocab.encode(p)?.clone();
    backend.present(&p_sdr, false)?;
    let predicted = backend.predicted_columns();
    let acc = step_accuracy(&predicted, vocab.encode(c)?);
    backend.reset_context();
    Ok(acc >= tau)
}

fn present_pair(
    backend: &mut dyn Backend,
    vocab: &Vocabulary,
    seq_id: &str,
    p: ItemCode,
    c: ItemCode,
    epoch: u32,
    params: &ProtocolParams,
    log: &mut TrainingLog,
) -> Result<()> {
    backend.reset_context();
    for (i, item) in [p, c].into_iter().enumerate() {
        let sdr = vocab.encode(item)?.clone();
        let out = backend.present(&sdr, true)?;
        log.push(LogRow {
            epoch,
            phase: Phase::Pair,
            seq_id: seq_id.to_string(),
            step: i as u32,
            accuracy: out.accuracy,
            l_gate: out.l_gate,
            decayed_synapses: backend.memory().store().decayed_synapses,
        });
    }
    backend.decay(params.decay_per_step() * 2.0);
    Ok(())
}
