//! Closed-loop robustness harness for scripted driving policies.
//!
//! The crate simulates a small 2D driving world, feeds observations through
//! optional perturbation processors (camera burst freezes, occlusion masks,
//! GPS and speed noise), delays the resulting commands through an action
//! buffer, and scores every rollout with closed-loop driving metrics and a
//! relative degradation statistic.

pub mod agents;
pub mod config;
pub mod error;
pub mod harness;
pub mod latency;
pub mod metrics;
pub mod perturb;
pub mod reference;
pub mod report;
pub mod seed;
pub mod types;
pub mod verify;
pub mod world;

pub use error::{Error, Result};
