//! Closed-form expectations of the TD(0) update over the stop event, used to
//! check the descent and ordering properties behind the convergence result.

use crate::agents::{greedy_control_v, LearningRate, ValueEstimate};
use crate::error::Result;
use crate::matrix::{spectral_norm, SymMat, Vector};
use crate::model::{closed_loop, LqProblem};
use crate::oracle::OracleSolution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// `E[δ]` under greedy, noise-free control.
    pub expected_delta: f64,
    /// `A_t · E[δ] · xᵀ(Π − Π*)x`, the inner product of the expected update
    /// direction with `∇J`, `J(Π) = ½‖Π − Π*‖²_F`.
    pub descent_inner: Option<f64>,
    /// `1 − (1−p)·‖F + G L*‖²`
    pub epsilon2: Option<f64>,
    /// `λ_min(Π − Π*)`
    pub epsilon3: Option<f64>,
    /// `−ε₂ ε₃² min{‖x‖⁴, 1/α′}`
    pub descent_bound: Option<f64>,
}

/// `E[δ] = p·c_f(x) + (1−p)·(c(x, L x) + V((F + G L)x)) − V(x)` for the
/// greedy gain `L` of the current estimate.
pub fn expected_td_error(prob: &LqProblem, est: &ValueEstimate, x: &Vector) -> Result<f64> {
    let u = greedy_control_v(prob, est, x)?;
    let next = &prob.f * x + &prob.g * &u;
    let p = prob.p;
    Ok(p * prob.final_cost(x) + (1.0 - p) * (prob.stage_cost(x, &u) + est.value(&next)) - est.value(x))
}

/// `Π + α · E[δ] · x xᵀ`
pub fn expected_update(prob: &LqProblem, est: &ValueEstimate, x: &Vector, alpha: f64) -> Result<SymMat> {
    let ed = expected_td_error(prob, est, x)?;
    let mut pi = est.pi.clone();
    pi.rank_one_update(alpha * ed, x);
    Ok(pi)
}

pub fn epsilon2(prob: &LqProblem, oracle: &OracleSolution) -> Result<f64> {
    let norm = spectral_norm(&closed_loop(prob, &oracle.gain_star)?)?;
    Ok(1.0 - (1.0 - prob.p) * norm * norm)
}

pub fn step_diagnostics(
    prob: &LqProblem,
    est: &ValueEstimate,
    x: &Vector,
    oracle: Option<&OracleSolution>,
    rate: &LearningRate,
) -> Result<StepDiagnostics> {
    let expected_delta = expected_td_error(prob, est, x)?;
    let Some(oracle) = oracle else {
        return Ok(StepDiagnostics {
            expected_delta,
            descent_inner: None,
            epsilon2: None,
            epsilon3: None,
            descent_bound: None,
        });
    };
    let gap = est.pi.sub(&oracle.pi_star);
    let eps2 = epsilon2(prob, oracle)?;
    let eps3 = gap.min_eigenvalue();
    let x4 = x.norm().powi(4);
    Ok(StepDiagnostics {
        expected_delta,
        descent_inner: Some(rate.scaling * expected_delta * gap.quad_form(x)),
        epsilon2: Some(eps2),
        epsilon3: Some(eps3),
        descent_bound: Some(-eps2 * eps3 * eps3 * x4.min(1.0 / rate.alpha_prime)),
    })
}
