//! The stopped LQ and LQG control problems.
//!
//! Dynamics `x' = F x + G u` (plus `ξ ~ N(0, Ω^ξ)` in the LQG case), stage
//! cost `xᵀQx + uᵀRu`, and at every step the episode stops with probability
//! `p`, charging the final cost `xᵀ Qf x` in place of the stage cost.

use rand::Rng;

use crate::error::{LqError, Result, ValidationReport};
use crate::matrix::{self, spectral_norm, Mat, SymMat, Vector};
use crate::rng::standard_normal;

/// Slack allowed on `λ_min(Q) ≥ 0` and on PSD noise covariances.
pub const PSD_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LqProblem {
    pub f: Mat,
    pub g: Mat,
    pub q: SymMat,
    pub r: SymMat,
    pub qf: SymMat,
    pub p: f64,
}

impl LqProblem {
    /// Builds a problem and rejects it unless [`LqProblem::validate`] is clean.
    pub fn new(f: Mat, g: Mat, q: SymMat, r: SymMat, qf: SymMat, p: f64) -> Result<Self> {
        let prob = LqProblem { f, g, q, r, qf, p };
        prob.validate().into_result()?;
        Ok(prob)
    }

    /// Scalar problem from plain numbers.
    pub fn scalar(f: f64, g: f64, q: f64, r: f64, qf: f64, p: f64) -> Result<Self> {
        Self::new(
            Mat::from_element(1, 1, f),
            Mat::from_element(1, 1, g),
            SymMat::from_diagonal(&[q]),
            SymMat::from_diagonal(&[r]),
            SymMat::from_diagonal(&[qf]),
            p,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.g.ncols()
    }

    /// `q = 1/√(1−p)`, the closed-loop growth factor that keeps stopped
    /// returns finite.
    pub fn growth_bound(&self) -> f64 {
        1.0 / (1.0 - self.p).sqrt()
    }

    /// Lists every violated invariant with the measured quantity.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.f.nrows();
        let m = self.g.ncols();
        let mut dims_ok = true;
        if !self.f.is_square() {
            report.push("F", "must be square", None);
            dims_ok = false;
        }
        if self.g.nrows() != n {
            report.push("G", &format!("must have {n} rows, has {}", self.g.nrows()), None);
            dims_ok = false;
        }
        for (key, s, want) in [("Q", &self.q, n), ("R", &self.r, m), ("Qf", &self.qf, n)] {
            if s.dim() != want {
                report.push(key, &format!("must be {want}x{want}, is {0}x{0}", s.dim()), None);
                dims_ok = false;
            }
        }
        let finite = self.f.iter().chain(self.g.iter()).all(|v| v.is_finite())
            && self.q.is_finite()
            && self.r.is_finite()
            && self.qf.is_finite();
        if !finite {
            report.push("matrices", "must have finite entries", None);
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            report.push("p", "out of range (0, 1)", Some(self.p));
        }
        if dims_ok && finite {
            let q_min = self.q.min_eigenvalue();
            if q_min < -PSD_SLACK {
                report.push("Q", "not positive semidefinite", Some(q_min));
            }
            let r_min = self.r.min_eigenvalue();
            if !(r_min > 0.0) {
                report.push("R", "not positive definite", Some(r_min));
            }
            let qf_min = self.qf.min_eigenvalue();
            if !(qf_min > 0.0) {
                report.push("Qf", "not positive definite", Some(qf_min));
            }
        }
        report
    }

    pub fn stage_cost(&self, x: &Vector, u: &Vector) -> f64 {
        self.q.quad_form(x) + self.r.quad_form(u)
    }

    pub fn final_cost(&self, x: &Vector) -> f64 {
        self.qf.quad_form(x)
    }

    fn check_xu(&self, x: &Vector, u: &Vector) -> Result<()> {
        if x.len() != self.state_dim() || u.len() != self.control_dim() {
            return Err(LqError::dim(format!(
                "state/control of length {}/{} for a problem with n={}, m={}",
                x.len(),
                u.len(),
                self.state_dim(),
                self.control_dim()
            )));
        }
        Ok(())
    }
}

/// Linear state feedback `u = L x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub gain: Mat,
}

impl Policy {
    pub fn new(gain: Mat) -> Self {
        Policy { gain }
    }

    pub fn zero(prob: &LqProblem) -> Self {
        Policy::new(Mat::zeros(prob.control_dim(), prob.state_dim()))
    }

    /// The greedy gain `L_Π = −(R + GᵀΠG)⁻¹ GᵀΠF` for a quadratic value `xᵀΠx`.
    pub fn greedy(prob: &LqProblem, pi: &SymMat) -> Result<Self> {
        let k = matrix::woodbury_gain(&prob.r, &prob.g, pi)?;
        Ok(Policy::new(-(k * &prob.f)))
    }

    pub fn control(&self, x: &Vector) -> Vector {
        &self.gain * x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub stopped: bool,
    pub next_state: Option<Vector>,
    /// `c(x, u)` when the episode continues, `c_f(x)` when it stops.
    pub stage_cost: f64,
}

/// One environment transition. The episode stops iff `stop_draw < p`.
pub fn step(prob: &LqProblem, x: &Vector, u: &Vector, stop_draw: f64) -> Result<StepOutcome> {
    prob.check_xu(x, u)?;
    if stop_draw < prob.p {
        Ok(StepOutcome {
            stopped: true,
            next_state: None,
            stage_cost: prob.final_cost(x),
        })
    } else {
        Ok(StepOutcome {
            stopped: false,
            next_state: Some(&prob.f * x + &prob.g * u),
            stage_cost: prob.stage_cost(x, u),
        })
    }
}

/// `F + G L`.
pub fn closed_loop(prob: &LqProblem, pol: &Policy) -> Result<Mat> {
    if pol.gain.nrows() != prob.control_dim() || pol.gain.ncols() != prob.state_dim() {
        return Err(LqError::dim(format!(
            "gain is {}x{}, problem needs {}x{}",
            pol.gain.nrows(),
            pol.gain.ncols(),
            prob.control_dim(),
            prob.state_dim()
        )));
    }
    Ok(&prob.f + &prob.g * &pol.gain)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMargin {
    /// `‖F + G L‖`
    pub norm: f64,
    /// `1/√(1−p)`
    pub q: f64,
    pub satisfies: bool,
}

pub fn stability_margin(prob: &LqProblem, pol: &Policy) -> Result<StabilityMargin> {
    let norm = spectral_norm(&closed_loop(prob, pol)?)?;
    let q = prob.growth_bound();
    Ok(StabilityMargin {
        norm,
        q,
        satisfies: norm <= q,
    })
}

/// Stopped LQ problem with Gaussian process noise and noisy partial
/// observations `y = H x + ζ`.
#[derive(Debug, Clone)]
pub struct LqgProblem {
    base: LqProblem,
    h: Mat,
    omega_xi: SymMat,
    omega_zeta: SymMat,
    x_hat_1: Vector,
    sigma_1: SymMat,
    xi_factor: Option<Mat>,
    zeta_factor: Option<Mat>,
    sigma_1_factor: Option<Mat>,
}

/// Already-scaled noise for one LQG transition.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgNoise {
    pub xi: Vector,
    pub zeta: Vector,
}

fn nonzero_factor(s: &SymMat) -> Option<Mat> {
    if s.as_mat().iter().all(|v| *v == 0.0) {
        None
    } else {
        Some(s.psd_factor())
    }
}

fn is_nonzero(v: &Vector) -> bool {
    v.iter().any(|e| *e != 0.0)
}

impl LqgProblem {
    pub fn new(
        base: LqProblem,
        h: Mat,
        omega_xi: SymMat,
        omega_zeta: SymMat,
        x_hat_1: Vector,
        sigma_1: SymMat,
    ) -> Result<Self> {
        let mut report = base.validate();
        let n = base.state_dim();
        let k = h.nrows();
        if h.ncols() != n {
            report.push("H", &format!("must have {n} columns, has {}", h.ncols()), None);
        }
        if omega_xi.dim() != n {
            report.push("OmegaXi", &format!("must be {n}x{n}"), None);
        }
        if omega_zeta.dim() != k {
            report.push("OmegaZeta", &format!("must be {k}x{k}"), None);
        }
        if sigma_1.dim() != n {
            report.push("Sigma1", &format!("must be {n}x{n}"), None);
        }
        if x_hat_1.len() != n {
            report.push("xhat1", &format!("must have length {n}"), None);
        }
        if report.is_valid() {
            for (key, s) in [("OmegaXi", &omega_xi), ("OmegaZeta", &omega_zeta), ("Sigma1", &sigma_1)] {
                let min = s.min_eigenvalue();
                if !s.is_finite() || min < -PSD_SLACK {
                    report.push(key, "not positive semidefinite", Some(min));
                }
            }
        }
        report.into_result()?;
        Ok(LqgProblem {
            xi_factor: nonzero_factor(&omega_xi),
            zeta_factor: nonzero_factor(&omega_zeta),
            sigma_1_factor: nonzero_factor(&sigma_1),
            base,
            h,
            omega_xi,
            omega_zeta,
            x_hat_1,
            sigma_1,
        })
    }

    /// Noise-free, fully observed embedding of an LQ problem (`H = I`, all
    /// covariances zero).
    pub fn noiseless(base: LqProblem) -> Self {
        let n = base.state_dim();
        LqgProblem::new(
            base,
            Mat::identity(n, n),
            SymMat::zeros(n),
            SymMat::zeros(n),
            Vector::zeros(n),
            SymMat::zeros(n),
        )
        .expect("noiseless embedding of a valid problem is valid")
    }

    pub fn base(&self) -> &LqProblem {
        &self.base
    }
    pub fn h(&self) -> &Mat {
        &self.h
    }
    pub fn omega_xi(&self) -> &SymMat {
        &self.omega_xi
    }
    pub fn omega_zeta(&self) -> &SymMat {
        &self.omega_zeta
    }
    pub fn x_hat_1(&self) -> &Vector {
        &self.x_hat_1
    }
    pub fn sigma_1(&self) -> &SymMat {
        &self.sigma_1
    }
    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Draws `ξ ~ N(0, Ω^ξ)` and `ζ ~ N(0, Ω^ζ)` from two separate streams.
    /// A zero covariance yields exact zeros without consuming draws.
    pub fn draw_noise<R1: Rng + ?Sized, R2: Rng + ?Sized>(&self, process: &mut R1, observation: &mut R2) -> LqgNoise {
        let n = self.base.state_dim();
        let xi = match &self.xi_factor {
            Some(w) => w * standard_normal(process, n),
            None => Vector::zeros(n),
        };
        let zeta = match &self.zeta_factor {
            Some(w) => w * standard_normal(observation, self.obs_dim()),
            None => Vector::zeros(self.obs_dim()),
        };
        LqgNoise { xi, zeta }
    }

    /// Draws an initial estimation error `e ~ N(0, Σ₁)`.
    pub fn draw_initial_error<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vector> {
        self.sigma_1_factor
            .as_ref()
            .map(|w| w * standard_normal(rng, self.base.state_dim()))
    }
}

/// One LQG transition: returns the outcome and the observation `y = Hx + ζ`
/// of the current state. Zero noise components are not added, so the
/// zero-covariance case is bitwise identical to [`step`].
pub fn step_lqg(
    prob: &LqgProblem,
    x: &Vector,
    u: &Vector,
    noise: &LqgNoise,
    stop_draw: f64,
) -> Result<(StepOutcome, Vector)> {
    let mut outcome = step(&prob.base, x, u, stop_draw)?;
    if noise.xi.len() != prob.base.state_dim() || noise.zeta.len() != prob.obs_dim() {
        return Err(LqError::dim("noise draw lengths do not match the LQG problem"));
    }
    if let Some(next) = outcome.next_state.as_mut() {
        if is_nonzero(&noise.xi) {
            *next += &noise.xi;
        }
    }
    let mut y = &prob.h * x;
    if is_nonzero(&noise.zeta) {
        y += &noise.zeta;
    }
    Ok((outcome, y))
}

/// A random problem together with a gain `L₀` satisfying `‖F + G L₀‖ < q`.
#[derive(Debug, Clone)]
pub struct WitnessedProblem {
    pub problem: LqProblem,
    pub witness: Policy,
}

/// Samples a stabilizable problem by construction: draw `p`, `G`, a gain
/// `L₀` and a matrix `M` with `‖M‖ < q`, then set `F = M − G L₀`. Entries are
/// uniform on `[−1, 1]`; `Q = AAᵀ`, `R = BBᵀ + 0.1 I`, `Qf = CCᵀ + 0.1 I`,
/// `p ~ U[0.05, 0.5]`.
pub fn random_stabilizable<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> WitnessedProblem {
    let mut uniform = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0));
    let g = uniform(n, m);
    let l0 = uniform(m, n);
    let mut mm = uniform(n, n);
    let a = uniform(n, n);
    let b = uniform(m, m);
    let c = uniform(n, n);
    let p = rng.random_range(0.05..0.5);
    let shrink = rng.random_range(0.0..1.0);
    let q = 1.0 / (1.0f64 - p).sqrt();
    let norm = spectral_norm(&mm).unwrap_or(0.0);
    if norm > 0.0 {
        mm *= shrink * q / norm;
    }
    let f = &mm - &g * &l0;
    let problem = LqProblem::new(
        f,
        g,
        SymMat::gram(&a),
        SymMat::gram(&b).add(&SymMat::scaled_identity(m, 0.1)),
        SymMat::gram(&c).add(&SymMat::scaled_identity(n, 0.1)),
        p,
    )
    .expect("construction satisfies every invariant");
    WitnessedProblem {
        problem,
        witness: Policy::new(l0),
    }
}
