//! Kalman filter in predictor form and TD(0) driven by the filtered state.

use rand_chacha::ChaCha8Rng;

use crate::agents::{
    check_divergence, greedy_control_v, td_error_v, Episodes, FilterInfo, RunRecord, Schedule, ValueEstimate,
};
use crate::config::TrainerConfig;
use crate::error::{LqError, Result};
use crate::matrix::{spd_solve, Mat, SymMat, Vector};
use crate::model::{step_lqg, LqgProblem, StepOutcome};
use crate::oracle::OracleSolution;
use crate::rng::{stream_rng, Stream};

/// Belief `x ~ N(x̂, Σ)` and the gain used by the last update.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x_hat: Vector,
    pub sigma: SymMat,
    pub gain: Mat,
}

impl KalmanState {
    pub fn new(prob: &LqgProblem, x_hat: Vector, sigma: SymMat) -> Self {
        KalmanState {
            x_hat,
            sigma,
            gain: Mat::zeros(prob.base().state_dim(), prob.obs_dim()),
        }
    }
}

/// `K = FΣHᵀ (HΣHᵀ + Ω^ζ)⁻¹`. When `FΣHᵀ` is exactly zero the gain is zero
/// whatever the innovation covariance, which covers the noiseless, fully
/// known case where `HΣHᵀ + Ω^ζ` is singular.
pub fn kalman_gain(prob: &LqgProblem, sigma: &SymMat) -> Result<Mat> {
    let base = prob.base();
    let ht = prob.h().transpose();
    let fsh = &base.f * sigma.as_mat() * &ht;
    if fsh.iter().all(|v| *v == 0.0) {
        return Ok(fsh);
    }
    let s = sigma.congruence(&ht).add(prob.omega_zeta());
    let kt = spd_solve(&s, &fsh.transpose()).map_err(|e| match e {
        LqError::NotPositiveDefinite { min_eigenvalue, .. } => LqError::not_pd("HΣHᵀ + Ω^ζ", min_eigenvalue),
        other => other,
    })?;
    Ok(kt.transpose())
}

/// One predictor step:
/// `K = FΣHᵀ(HΣHᵀ + Ω^ζ)⁻¹`, `x̂′ = F x̂ + G u + K (y − H x̂)`,
/// `Σ′ = Ω^ξ + FΣFᵀ − K H Σ Fᵀ`.
pub fn kf_step(prob: &LqgProblem, state: &KalmanState, u: &Vector, y: &Vector) -> Result<KalmanState> {
    let base = prob.base();
    if u.len() != base.control_dim() || y.len() != prob.obs_dim() || state.x_hat.len() != base.state_dim() {
        return Err(LqError::dim("filter input lengths do not match the LQG problem"));
    }
    let gain = kalman_gain(prob, &state.sigma)?;
    let innovation = y - prob.h() * &state.x_hat;
    let mut x_hat = &base.f * &state.x_hat + &base.g * u;
    if gain.iter().any(|v| *v != 0.0) {
        x_hat += &gain * innovation;
    }
    let fsft = state.sigma.congruence(&base.f.transpose());
    let correction = &gain * prob.h() * state.sigma.as_mat() * base.f.transpose();
    let sigma = SymMat::symmetrize(&(prob.omega_xi().as_mat() + fsft.as_mat() - correction));
    Ok(KalmanState { x_hat, sigma, gain })
}

/// TD(0) on the filtered state. The agent only sees observations: the TD
/// error, the update and the greedy control all use `x̂` in place of `x`,
/// and a stop charges `c_f(x̂)`.
///
/// Episodes start from the training restart distribution shifted by `x̂₁`;
/// the initial belief is `x̂ = x + e` with `e ~ N(0, Σ₁)`.
pub struct KfTd0Run<'a> {
    prob: &'a LqgProblem,
    oracle: Option<&'a OracleSolution>,
    est: ValueEstimate,
    schedule: Schedule,
    episodes: Episodes,
    process: ChaCha8Rng,
    observation: ChaCha8Rng,
    belief: ChaCha8Rng,
    ceiling: f64,
    initial_norm: f64,
    initial_pi_error: Option<f64>,
    steps: u64,
    t: u64,
    x: Vector,
    filter: KalmanState,
    u: Vector,
    nu: Vector,
    pending: Option<LqError>,
    done: bool,
}

fn episode_start(prob: &LqgProblem, episodes: &mut Episodes, belief: &mut ChaCha8Rng) -> (Vector, KalmanState) {
    let mut x = episodes.initial_state(prob.base().state_dim());
    if prob.x_hat_1().iter().any(|v| *v != 0.0) {
        x += prob.x_hat_1();
    }
    let x_hat = match prob.draw_initial_error(belief) {
        Some(e) => &x + e,
        None => x.clone(),
    };
    let filter = KalmanState::new(prob, x_hat, prob.sigma_1().clone());
    (x, filter)
}

pub fn run_kf_td0<'a>(
    prob: &'a LqgProblem,
    config: &TrainerConfig,
    oracle: Option<&'a OracleSolution>,
    seed: u64,
) -> Result<KfTd0Run<'a>> {
    config.validate()?;
    let base = prob.base();
    let kappa = config.resolve_pi0_scale(oracle)?;
    let est = ValueEstimate::scaled_identity(base.state_dim(), kappa);
    let mut episodes = Episodes::new(config, seed);
    let mut belief = stream_rng(seed, Stream::Belief);
    let (x, filter) = episode_start(prob, &mut episodes, &mut belief);
    let nu = episodes.nu(base.control_dim());
    let u = greedy_control_v(base, &est, &filter.x_hat)? + &nu;
    Ok(KfTd0Run {
        prob,
        oracle,
        initial_norm: est.pi.frobenius_norm(),
        initial_pi_error: oracle.map(|o| est.pi.sub(&o.pi_star).frobenius_norm()),
        est,
        schedule: config.schedule.into(),
        episodes,
        process: stream_rng(seed, Stream::ProcessNoise),
        observation: stream_rng(seed, Stream::ObservationNoise),
        belief,
        ceiling: config.divergence_ceiling,
        steps: config.steps,
        t: 0,
        x,
        filter,
        u,
        nu,
        pending: None,
        done: false,
    })
}

impl KfTd0Run<'_> {
    pub fn estimate(&self) -> &ValueEstimate {
        &self.est
    }

    pub fn kalman_state(&self) -> &KalmanState {
        &self.filter
    }

    pub fn initial_pi_error(&self) -> Option<f64> {
        self.initial_pi_error
    }

    pub fn episodes_completed(&self) -> u64 {
        self.episodes.episode
    }

    fn advance(&mut self) -> Result<RunRecord> {
        let base = self.prob.base();
        let noise = self.prob.draw_noise(&mut self.process, &mut self.observation);
        let draw = self.episodes.stop_draw();
        let (outcome, y) = step_lqg(self.prob, &self.x, &self.u, &noise, draw)?;
        let x_hat = self.filter.x_hat.clone();
        let (seen, next_filter) = if outcome.stopped {
            let seen = StepOutcome {
                stopped: true,
                next_state: None,
                stage_cost: base.final_cost(&x_hat),
            };
            (seen, None)
        } else {
            let next = kf_step(self.prob, &self.filter, &self.u, &y)?;
            let seen = StepOutcome {
                stopped: false,
                next_state: Some(next.x_hat.clone()),
                stage_cost: base.stage_cost(&x_hat, &self.u),
            };
            (seen, Some(next))
        };
        let delta = td_error_v(base, &self.est, &x_hat, &self.u, &seen);
        let rate = self.schedule.learning_rate(self.t, &x_hat);
        self.est.update(rate.alpha, delta, &x_hat);

        let record = RunRecord {
            t: self.t,
            episode: self.episodes.episode,
            x: self.x.clone(),
            u: self.u.clone(),
            nu: self.nu.clone(),
            delta,
            alpha: rate.alpha,
            alpha_prime: rate.alpha_prime,
            stopped: outcome.stopped,
            pi_error: self.oracle.map(|o| self.est.pi.sub(&o.pi_star).frobenius_norm()),
            state_norm: self.x.norm(),
            theta22_min: None,
            filter: Some(FilterInfo {
                est_error_norm: (&self.x - &x_hat).norm(),
                sigma_trace: self.filter.sigma.trace(),
                x_hat,
            }),
        };
        self.t += 1;

        let (x, filter) = match (outcome.next_state, next_filter) {
            (Some(x), Some(f)) => (x, f),
            _ => {
                self.episodes.end_episode();
                episode_start(self.prob, &mut self.episodes, &mut self.belief)
            }
        };
        let guard = check_divergence(
            self.est.pi.frobenius_norm(),
            self.est.pi.is_finite(),
            self.ceiling,
            self.initial_norm,
            record.t,
        );
        let chosen = guard.and_then(|_| {
            let nu = self.episodes.nu(base.control_dim());
            let u = greedy_control_v(base, &self.est, &filter.x_hat)? + &nu;
            Ok((u, nu))
        });
        match chosen {
            Ok((u, nu)) => {
                self.x = x;
                self.filter = filter;
                self.u = u;
                self.nu = nu;
            }
            Err(e) => self.pending = Some(e),
        }
        Ok(record)
    }
}

impl Iterator for KfTd0Run<'_> {
    type Item = Result<RunRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if let Some(e) = self.pending.take() {
            self.done = true;
            return Some(Err(e));
        }
        if self.t >= self.steps {
            self.done = true;
            return None;
        }
        let r = self.advance();
        if r.is_err() {
            self.done = true;
        }
        Some(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStats {
    /// Sample mean of `e_t = x_t − x̂_t`.
    pub mean_error: Vector,
    /// Sample mean of `e_t e_tᵀ`.
    pub mean_sq_error: SymMat,
    pub max_state_norm: f64,
}

pub fn estimation_error_stats(records: &[RunRecord]) -> Result<EstimationStats> {
    let first = records.first().ok_or(LqError::EmptyStats)?;
    let n = first.x.len();
    let mut sum = Vector::zeros(n);
    let mut outer = SymMat::zeros(n);
    let mut max_state_norm = 0.0f64;
    for r in records {
        let f = r
            .filter
            .as_ref()
            .ok_or_else(|| LqError::dim("record carries no filter information"))?;
        let e = &r.x - &f.x_hat;
        outer.rank_one_update(1.0, &e);
        sum += e;
        max_state_norm = max_state_norm.max(r.state_norm);
    }
    let count = records.len() as f64;
    Ok(EstimationStats {
        mean_error: sum / count,
        mean_sq_error: outer.scale(1.0 / count),
        max_state_norm,
    })
}
