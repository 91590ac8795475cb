//! Distributed zeroth-order policy gradient from simulated preference
//! feedback on networked multi-agent MDPs, with exact oracles for small
//! instances.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod baseline;
pub mod config;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod learner;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod preference;
pub mod rng;
pub mod rollout;
pub mod scalar;
pub mod zoo;

pub use error::{Error, Result};

pub type Policy = policy::PolicyTable<f64>;
pub type Policy32 = policy::PolicyTable<f32>;
pub type TabularMdp = mdp::TabularFactoredMdp<f64>;
pub type TabularMdp32 = mdp::TabularFactoredMdp<f32>;
pub type Model = oracle::JointModel<f64>;
pub type Model32 = oracle::JointModel<f32>;
pub type Trajectory = rollout::JointTrajectory<f64>;
pub type Estimate = learner::GradientEstimate<f64>;
