//! Event-driven simulator of the full graph process.
//!
//! The jump chain and the exponential clocks draw from separate ChaCha
//! streams of the same seed, so a run with clocks has the same sequence of
//! events as the run without them.

mod run;
mod state;
mod sumtree;

use thiserror::Error;

pub use run::{run, Row, RunConfig, RunStatus, Trajectory};
pub use state::{Counters, EdgeRecord, EventDescriptor, GraphState, Tracker, TrackerKind};
pub use sumtree::SumTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("no living edges at step {step}")]
    Extinct { step: u64 },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("invariant violated at step {step}: {message}")]
    Invariant { step: u64, message: String },
}
