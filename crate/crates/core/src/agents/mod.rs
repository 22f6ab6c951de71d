//! TD(0) and Sarsa(0) with quadratic value functions.
//!
//! A value estimate `V(x) = xᵀΠx` is linear in the entries of `Π`, so its
//! gradient with respect to `Π` is `x xᵀ` and the TD(0) update is the rank-one
//! step `Π ← Π + α δ x xᵀ`. Sarsa does the same on `Q(x, u) = zᵀΘz` with
//! `z = (x, u)`.

mod action_value;
mod diagnostics;
mod run;
mod schedule;
mod value;

pub use action_value::{greedy_control_q, stack, td_error_q, QEstimate};
pub use diagnostics::{
    epsilon2, expected_td_error, expected_update, step_diagnostics, StepDiagnostics,
};
pub use run::{run_sarsa0, run_td0, FilterInfo, RunRecord, Sarsa0Run, Td0Run};
pub(crate) use run::{check_divergence, Episodes};
pub use schedule::{ExplorationNoise, LearningRate, Schedule};
pub use value::{greedy_control_v, td_error_v, ValueEstimate};
