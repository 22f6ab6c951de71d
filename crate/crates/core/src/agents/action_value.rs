use crate::error::{LqError, Result};
use crate::matrix::{spd_solve_vec, SymMat, Vector};
use crate::model::{LqProblem, StepOutcome};
use crate::oracle::pi_from_theta;

/// `Q(x, u) = zᵀΘz` with `z = (x, u)` and block view
/// `Θ = [[Θ₁₁, Θ₁₂], [Θ₂₁, Θ₂₂]]` (`Θ₁₁` is `n×n`).
#[derive(Debug, Clone, PartialEq)]
pub struct QEstimate {
    theta: SymMat,
    n: usize,
}

/// `z = (x, u)`.
pub fn stack(x: &Vector, u: &Vector) -> Vector {
    let mut z = Vector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

impl QEstimate {
    pub fn new(theta: SymMat, state_dim: usize) -> Result<Self> {
        if state_dim > theta.dim() {
            return Err(LqError::dim("state block larger than Θ"));
        }
        Ok(QEstimate { theta, n: state_dim })
    }

    pub fn scaled_identity(state_dim: usize, control_dim: usize, kappa: f64) -> Self {
        QEstimate {
            theta: SymMat::scaled_identity(state_dim + control_dim, kappa),
            n: state_dim,
        }
    }

    pub fn theta(&self) -> &SymMat {
        &self.theta
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.theta.dim() - self.n
    }

    pub fn value(&self, z: &Vector) -> f64 {
        self.theta.quad_form(z)
    }

    pub fn theta22(&self) -> SymMat {
        let m = self.control_dim();
        SymMat::new(self.theta.as_mat().view((self.n, self.n), (m, m)).into_owned())
            .expect("diagonal block of a symmetric matrix is symmetric")
    }

    /// `Θ₁₁ − Θ₁₂ Θ₂₂⁻¹ Θ₂₁`, the state-value matrix of the greedy policy.
    pub fn recovered_pi(&self) -> Result<SymMat> {
        pi_from_theta(&self.theta, self.n)
    }

    /// `Θ ← Θ + α δ z zᵀ`
    pub fn update(&mut self, alpha: f64, delta: f64, z: &Vector) {
        self.theta.rank_one_update(alpha * delta, z);
    }
}

/// `u = −Θ₂₂⁻¹ · ((Θ₂₁ + Θ₁₂ᵀ)/2) · x`, the minimizer of `Q(x, ·)`.
pub fn greedy_control_q(est: &QEstimate, x: &Vector) -> Result<Vector> {
    let (n, m) = (est.n, est.control_dim());
    if x.len() != n {
        return Err(LqError::dim(format!("state of length {} for Θ with n = {n}", x.len())));
    }
    let t = est.theta.as_mat();
    let t21 = t.view((n, 0), (m, n));
    let t12t = t.view((0, n), (n, m)).transpose();
    let cross = (t21 + t12t) * 0.5;
    let u = spd_solve_vec(&est.theta22(), &(cross * x)).map_err(|e| match e {
        LqError::NotPositiveDefinite { min_eigenvalue, .. } => LqError::not_pd("Θ₂₂", min_eigenvalue),
        other => other,
    })?;
    Ok(-u)
}

/// Sarsa TD error with the full stage cost. `z_next` is the next
/// state-action pair and is required unless the episode stopped.
pub fn td_error_q(
    prob: &LqProblem,
    est: &QEstimate,
    z: &Vector,
    z_next: Option<&Vector>,
    outcome: &StepOutcome,
) -> Result<f64> {
    let n = prob.state_dim();
    if z.len() != n + prob.control_dim() {
        return Err(LqError::dim("z length does not match n + m"));
    }
    let x = z.rows(0, n).into_owned();
    if outcome.stopped {
        return Ok(prob.final_cost(&x) - est.value(z));
    }
    let next = z_next.ok_or_else(|| LqError::dim("continuing transition needs the next state-action pair"))?;
    let u = z.rows(n, prob.control_dim()).into_owned();
    Ok(prob.stage_cost(&x, &u) + est.value(next) - est.value(z))
}
