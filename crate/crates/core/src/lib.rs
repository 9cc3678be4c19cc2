//! Event-triggered LQG control with value-of-information triggering.
//!
//! The crate covers the whole pipeline for a finite-horizon linear-Gaussian
//! plant whose sensor transmits to the controller over a priced channel with
//! one step of delay:
//!
//! - [`model`]: plant, sensor and cost definitions plus ZOH discretization;
//! - [`riccati`]: the backward Riccati recursion and the pathwise cost
//!   decomposition used to check simulated trajectories;
//! - [`estimators`]: the controller-side and trigger-side Gaussian estimators;
//! - [`policies`]: certainty-equivalence control, rollout value-of-information
//!   triggers, periodic baselines and the exact scalar dynamic program;
//! - [`simulate`]: closed-loop simulation, Monte-Carlo aggregation with common
//!   random numbers, and rate/performance trade-off sweeps.

pub mod error;
pub mod estimators;
pub mod model;
pub mod numerics;
pub mod policies;
pub mod riccati;
pub mod simulate;

pub use error::{Error, Result};
pub use numerics::{Matrix, Vector};
