//! Sequence memory simulator: a columnar temporal memory that learns
//! higher-order sequences, optionally gated by long-term association
//! weights, realized both as a discrete-step update and as a spiking
//! microcircuit of leaky integrate-and-fire neurons.

pub mod backend;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod error;
pub mod experiments;
pub mod harness;
pub mod ltm;
pub mod metrics;
pub mod protocol;
pub mod spiking;
pub mod temporal_memory;

pub use backend::{Backend, DiscreteBackend, GateMode, PresentOutcome};
pub use encoder::{ItemCode, Sdr, Stopwords, Vocabulary, START_TOKEN};
pub use error::{Error, Result};
pub use spiking::{SpikingBackend, SpikingParams};
pub use temporal_memory::{
    CellId, Geometry, LearningParams, SegmentId, SegmentStore, StepContext, StepOutcome,
    TemporalMemory,
};
