//! Exact dynamic-programming reference for the stopped LQ problem.
//!
//! Substituting `V(x) = xᵀΠx` and the greedy control into the stopped
//! Bellman equation gives the Riccati-type map
//!
//! ```text
//! T(Π) = p·Qf + (1−p)·[Q + FᵀΠF − FᵀΠG (R + GᵀΠG)⁻¹ GᵀΠF]
//! ```
//!
//! whose fixed point is `Π*`. `T` is monotone, so iterating from `Π = 0`
//! climbs to `Π*` from below.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{LqError, Result};
use crate::matrix::{self, spectral_radius, Mat, SymMat, Vector};
use crate::model::{closed_loop, LqProblem, Policy};
use crate::rng::indexed_rng;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub pi_star: SymMat,
    pub gain_star: Policy,
    pub theta_star: SymMat,
    /// `‖T(Π*) − Π*‖_F`
    pub residual: f64,
    pub iterations: usize,
}

impl OracleSolution {
    /// `‖Π* − (Θ*₁₁ − Θ*₁₂ Θ*₂₂⁻¹ Θ*₂₁)‖_F`.
    pub fn consistency_gap(&self) -> Result<f64> {
        let recovered = pi_from_theta(&self.theta_star, self.pi_star.dim())?;
        Ok(recovered.sub(&self.pi_star).frobenius_norm())
    }
}

pub fn riccati_map(prob: &LqProblem, pi: &SymMat) -> Result<SymMat> {
    let p = prob.p;
    let k = matrix::woodbury_gain(&prob.r, &prob.g, pi)?;
    let ft_pi = prob.f.transpose() * pi.as_mat();
    let correction = &ft_pi * &prob.g * k * &prob.f;
    let inner = prob.q.as_mat() + &ft_pi * &prob.f - correction;
    let out = prob.qf.as_mat() * p + inner * (1.0 - p);
    Ok(SymMat::symmetrize(&out))
}

/// Iterates `T` from zero until `‖T(Π) − Π‖_F ≤ tol`.
pub fn solve_pi_star(prob: &LqProblem, tol: f64, max_iter: usize) -> Result<OracleSolution> {
    prob.validate().into_result()?;
    let n = prob.state_dim();
    let mut pi = SymMat::zeros(n);
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let next = riccati_map(prob, &pi)?;
        residual = next.sub(&pi).frobenius_norm();
        if !residual.is_finite() || !next.is_finite() {
            return Err(LqError::Divergence(format!(
                "Riccati iterates overflowed after {} iterations: no gain keeps the stopped cost finite",
                it + 1
            )));
        }
        if residual <= tol {
            let gain_star = Policy::greedy(prob, &pi)?;
            let theta_star = theta_from_pi(prob, &pi);
            return Ok(OracleSolution {
                pi_star: pi,
                gain_star,
                theta_star,
                residual,
                iterations: it,
            });
        }
        pi = next;
    }
    Err(LqError::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

pub fn solve_default(prob: &LqProblem) -> Result<OracleSolution> {
    solve_pi_star(prob, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// `Θ = p·diag(Qf, 0) + (1−p)·(diag(Q, R) + [F G]ᵀ Π [F G])`, the
/// action-value matrix whose state-value is `Π` after one greedy step.
pub fn theta_from_pi(prob: &LqProblem, pi: &SymMat) -> SymMat {
    let (n, m) = (prob.state_dim(), prob.control_dim());
    let mut fg = Mat::zeros(n, n + m);
    fg.view_mut((0, 0), (n, n)).copy_from(&prob.f);
    fg.view_mut((0, n), (n, m)).copy_from(&prob.g);
    let stop = SymMat::block_diag(&prob.qf, &SymMat::zeros(m));
    let stage = SymMat::block_diag(&prob.q, &prob.r);
    let cont = stage.add(&pi.congruence(&fg));
    stop.scale(prob.p).add(&cont.scale(1.0 - prob.p))
}

/// Schur complement `Θ₁₁ − Θ₁₂ Θ₂₂⁻¹ Θ₂₁`, i.e. the state-value matrix of
/// `min_u Q(x, u)`. Requires `Θ₂₂` positive definite.
pub fn pi_from_theta(theta: &SymMat, n: usize) -> Result<SymMat> {
    let d = theta.dim();
    if n > d {
        return Err(LqError::dim(format!("state block {n} larger than Θ ({d})")));
    }
    let m = d - n;
    let t = theta.as_mat();
    let t11 = t.view((0, 0), (n, n));
    let t12 = t.view((0, n), (n, m));
    let t22 = SymMat::new(t.view((n, n), (m, m)).into_owned())?;
    let t21 = t.view((n, 0), (m, n)).into_owned();
    let solved = matrix::spd_solve(&t22, &t21).map_err(|e| match e {
        LqError::NotPositiveDefinite { min_eigenvalue, .. } => LqError::not_pd("Θ₂₂", min_eigenvalue),
        other => other,
    })?;
    Ok(SymMat::symmetrize(&(t11 - t12 * solved)))
}

/// Quadratic value `Π_L` of following `u = L x` forever, the solution of
/// `Π_L = p·Qf + (1−p)·(Q + LᵀRL + (F+GL)ᵀ Π_L (F+GL))`.
///
/// The defining series converges iff `ρ(F + G L) < q`; otherwise the value
/// is infinite and a divergence error is returned.
pub fn policy_value(prob: &LqProblem, pol: &Policy, tol: f64) -> Result<SymMat> {
    let n = prob.state_dim();
    let m = closed_loop(prob, pol)?;
    let q = prob.growth_bound();
    let rho = spectral_radius(&m)?;
    if rho >= q {
        return Err(LqError::Divergence(format!(
            "closed-loop spectral radius {rho:.6} >= q = {q:.6}; policy value is infinite"
        )));
    }
    let p = prob.p;
    let lrl = prob.r.congruence(&pol.gain);
    let c = prob.qf.scale(p).add(&prob.q.add(&lrl).scale(1.0 - p));
    let map = |x: &SymMat| c.add(&x.congruence(&m).scale(1.0 - p));

    // vec(Mᵀ X M) = (Mᵀ ⊗ Mᵀ) vec(X) for column-major vec.
    let mt = m.transpose();
    let system = DMatrix::<f64>::identity(n * n, n * n) - mt.kronecker(&mt) * (1.0 - p);
    let lu = system.lu();
    let solve = |rhs: &SymMat| -> Result<SymMat> {
        let b = Vector::from_column_slice(rhs.as_mat().as_slice());
        let v = lu
            .solve(&b)
            .ok_or_else(|| LqError::Divergence("policy-value system is singular".into()))?;
        Ok(SymMat::symmetrize(&Mat::from_column_slice(n, n, v.as_slice())))
    };

    let mut pi = solve(&c)?;
    let mut residual = map(&pi).sub(&pi).frobenius_norm();
    let mut rounds = 0;
    while residual > tol && rounds < 8 {
        let correction = solve(&map(&pi).sub(&pi))?;
        pi = pi.add(&correction);
        residual = map(&pi).sub(&pi).frobenius_norm();
        rounds += 1;
    }
    if residual > tol {
        return Err(LqError::NonConvergence {
            iterations: rounds,
            residual,
        });
    }
    Ok(pi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of the expected stopped return of `u = L x` from
/// `x0`. Episode `i` draws its stop events from stream `i` of `seed`, so the
/// result does not depend on the thread count.
pub fn monte_carlo_value(prob: &LqProblem, pol: &Policy, x0: &Vector, episodes: usize, seed: u64) -> Result<McEstimate> {
    use rand::Rng;

    let m = closed_loop(prob, pol)?;
    if x0.len() != prob.state_dim() {
        return Err(LqError::dim("x0 length does not match the problem"));
    }
    let rho = spectral_radius(&m)?;
    if rho >= prob.growth_bound() {
        return Err(LqError::Divergence(format!(
            "closed-loop spectral radius {rho:.6} >= q; returns have infinite mean"
        )));
    }
    if episodes == 0 {
        return Ok(McEstimate { mean: 0.0, stderr: 0.0 });
    }
    let returns: Vec<f64> = (0..episodes as u64)
        .into_par_iter()
        .map(|ep| {
            let mut rng = indexed_rng(seed, ep);
            let mut x = x0.clone();
            let mut total = 0.0;
            loop {
                if rng.random::<f64>() < prob.p {
                    total += prob.final_cost(&x);
                    return total;
                }
                let u = pol.control(&x);
                total += prob.stage_cost(&x, &u);
                x = &m * x;
            }
        })
        .collect();
    let count = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / count;
    let var = if returns.len() > 1 {
        returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr: (var / count).sqrt(),
    })
}
