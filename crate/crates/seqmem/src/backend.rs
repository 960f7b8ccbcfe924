//! Presentation-level interface over the two realizations of the layer.
//!
//! A backend consumes one item code per presentation and reports what the
//! layer did. The discrete backend applies the update rules directly; the
//! spiking backend reproduces them with leaky integrate-and-fire dynamics
//! and must produce the same presentation-level trajectory.

use crate::encoder::Sdr;
use crate::error::Result;
use crate::ltm::GatePrimer;
use crate::metrics::step_accuracy;
use crate::temporal_memory::{StepContext, TemporalMemory};

/// How the plasticity gate is driven.
pub enum GateMode {
    /// Gate pinned open: every presentation learns at the high rate.
    AlwaysOpen,
    /// Gate opens when a column primed by the long-term association graph
    /// wins; otherwise learning falls back to the low rate.
    Primed(GatePrimer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresentOutcome {
    /// Fraction of winning columns predicted before this presentation.
    pub accuracy: f64,
    /// Gate state during this presentation.
    pub l_gate: bool,
    pub burst_columns: usize,
    pub grown_segments: usize,
}

pub trait Backend {
    /// Presents one code and advances the layer a single step.
    fn present(&mut self, sdr: &Sdr, learn: bool) -> Result<PresentOutcome>;

    /// Clears temporal context between sequences (activity, predictions and
    /// gate priming), leaving the learned weights untouched.
    fn reset_context(&mut self);

    /// Applies linear weight decay; returns synapses newly driven to zero.
    fn decay(&mut self, amount: f64) -> u64;

    fn memory(&self) -> &TemporalMemory;
    fn memory_mut(&mut self) -> &mut TemporalMemory;

    /// Columns currently predicted for the next presentation.
    fn predicted_columns(&self) -> Vec<u32> {
        self.memory().predicted_columns()
    }
}

/// Direct implementation of the update rules, one step per presentation.
pub struct DiscreteBackend {
    tm: TemporalMemory,
    gate: GateMode,
    prev_columns: Vec<u32>,
}

impl DiscreteBackend {
    pub fn new(tm: TemporalMemory, gate: GateMode) -> Self {
        DiscreteBackend {
            tm,
            gate,
            prev_columns: Vec::new(),
        }
    }

    /// Columns the gate would treat as primed for the next presentation.
    pub fn primed_columns(&self) -> Vec<u32> {
        match &self.gate {
            GateMode::AlwaysOpen => Vec::new(),
            GateMode::Primed(primer) => primer.primed_columns(&self.prev_columns),
        }
    }
}

impl Backend for DiscreteBackend {
    fn present(&mut self, sdr: &Sdr, learn: bool) -> Result<PresentOutcome> {
        let l_gate = match &self.gate {
            GateMode::AlwaysOpen => true,
            GateMode::Primed(primer) => {
                let primed = primer.primed_columns(&self.prev_columns);
                sdr.columns().iter().any(|c| primed.binary_search(c).is_ok())
            }
        };
        let p_plus = if l_gate {
            self.tm.params.p_plus_high
        } else {
            self.tm.params.p_plus_low
        };
        let outcome = self.tm.step(sdr, StepContext { learn, p_plus });
        let accuracy = step_accuracy(&outcome.predicted_before_columns, sdr);
        self.prev_columns = sdr.columns().to_vec();
        Ok(PresentOutcome {
            accuracy,
            l_gate,
            burst_columns: outcome.burst_columns.len(),
            grown_segments: outcome.grown_segments,
        })
    }

    fn reset_context(&mut self) {
        self.tm.reset();
        self.prev_columns.clear();
    }

    fn decay(&mut self, amount: f64) -> u64 {
        self.tm.store_mut().decay(amount)
    }

    fn memory(&self) -> &TemporalMemory {
        &self.tm
    }

    fn memory_mut(&mut self) -> &mut TemporalMemory {
        &mut self.tm
    }
}
