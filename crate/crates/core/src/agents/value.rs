use crate::error::{LqError, Result};
use crate::matrix::{spd_solve_vec, SymMat, Vector};
use crate::model::{LqProblem, StepOutcome};

/// `V(x) = xᵀΠx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimate {
    pub pi: SymMat,
}

impl ValueEstimate {
    pub fn new(pi: SymMat) -> Self {
        ValueEstimate { pi }
    }

    pub fn scaled_identity(n: usize, kappa: f64) -> Self {
        ValueEstimate::new(SymMat::scaled_identity(n, kappa))
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.pi.quad_form(x)
    }

    /// `Π ← Π + α δ x xᵀ`
    pub fn update(&mut self, alpha: f64, delta: f64, x: &Vector) {
        self.pi.rank_one_update(alpha * delta, x);
    }
}

/// `u = −(R + GᵀΠG)⁻¹ GᵀΠF x`, the minimizer of `uᵀRu + V(Fx + Gu)`.
pub fn greedy_control_v(prob: &LqProblem, est: &ValueEstimate, x: &Vector) -> Result<Vector> {
    let s = prob.r.add(&est.pi.congruence(&prob.g));
    let rhs = prob.g.transpose() * (est.pi.as_mat() * (&prob.f * x));
    let u = spd_solve_vec(&s, &rhs).map_err(|e| match e {
        LqError::NotPositiveDefinite { min_eigenvalue, .. } => LqError::not_pd("R + GᵀΠG", min_eigenvalue),
        other => other,
    })?;
    Ok(-u)
}

/// One-step TD error on the observed transition, charging the full stage
/// cost `xᵀQx + uᵀRu` (or `xᵀQf x` on stop).
pub fn td_error_v(prob: &LqProblem, est: &ValueEstimate, x: &Vector, u: &Vector, outcome: &StepOutcome) -> f64 {
    match (&outcome.next_state, outcome.stopped) {
        (_, true) | (None, _) => prob.final_cost(x) - est.value(x),
        (Some(next), false) => prob.stage_cost(x, u) + est.value(next) - est.value(x),
    }
}
