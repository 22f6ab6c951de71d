//! Reinforcement-learning control of stopped linear-quadratic systems.
//!
//! The crate provides the stopped LQ/LQG problem model, an exact Riccati
//! fixed-point oracle, TD(0) and Sarsa(0) learners with quadratic (linear in
//! parameters) value functions, a Kalman-filtered TD(0) learner for noisy
//! partial observation, and the experiment harness used by the `lqtd` CLI.
//!
//! Every episode terminates with probability `p` at each step, at which
//! point the final cost `xᵀ Qf x` is charged instead of the stage cost.

pub mod agents;
pub mod config;
pub mod error;
pub mod harness;
pub mod kalman;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod problem_file;
pub mod rng;

pub use error::{LqError, Result};
pub use matrix::{Mat, SymMat, Vector};
pub use model::{LqProblem, LqgProblem, Policy, StepOutcome};
pub use oracle::OracleSolution;
