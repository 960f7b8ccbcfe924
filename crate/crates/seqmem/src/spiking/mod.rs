//! Spiking realization: LIF primitives and the multi-compartment network
//! that reproduces the discrete layer's cell-level behaviour in continuous
//! time.

pub mod lif;
pub mod network;

pub use lif::{lif_decay, lif_step, LifNeuron, LifParams, Trace};
pub use network::{
    equivalence_probe, Calibration, EquivalenceMismatch, EquivalenceReport, SpikingBackend,
    SpikingParams, WindowEvents,
};
