//! Capacity-true thresholds for scored streams, anchored at valleys of an
//! online adaptive kernel density estimate.
//!
//! The pipeline per stream: [`OnlineDensity`] keeps a reflected, Abramson
//! adaptive estimate on a fixed grid; [`valleys`] finds persistent local
//! minima; [`capacity`] turns the tail-mass curve into cuts and snaps them to
//! valleys; [`Engine`] runs the loop on a refresh cadence and [`router`] sends
//! each score to a queue.

// `!(x >= 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// stencil loops index several grid arrays in step
#![allow(clippy::needless_range_loop)]

pub mod capacity;
pub mod density;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod metrics;
pub mod router;
pub mod simgen;
pub mod valleys;

pub use capacity::{CapacityTarget, DeployedCuts};
pub use density::{Boundary, DensityConfig, EstimatorMode, Grid, OnlineDensity, Snapshot};
pub use engine::{DecisionRecord, Engine, EngineConfig};
pub use error::{Error, Result};
pub use experiment::{run_stream, Policy, Scenario, StreamRun};
pub use metrics::IntervalRecord;
pub use router::{QueueLabel, RoutingDecision};
pub use simgen::{builtin_profile, BAStreamProfile};
pub use valleys::{Valley, ValleyConfig, ValleySet};
