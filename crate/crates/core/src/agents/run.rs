//! The TD(0) and Sarsa(0) training loops as iterators over per-step records.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    greedy_control_q, greedy_control_v, stack, td_error_q, td_error_v, ExplorationNoise, QEstimate, Schedule,
    ValueEstimate,
};
use crate::config::TrainerConfig;
use crate::error::{LqError, Result};
use crate::matrix::{SymMat, Vector};
use crate::model::{step, LqProblem};
use crate::oracle::OracleSolution;
use crate::rng::{on_sphere, standard_normal, stream_rng, Stream};

/// Filter quantities attached to records of the partially observed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterInfo {
    pub x_hat: Vector,
    pub sigma_trace: f64,
    /// `‖x_t − x̂_t‖`
    pub est_error_norm: f64,
}

/// One environment step. `x`, `u`, `state_norm` refer to the true state.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub t: u64,
    pub episode: u64,
    pub x: Vector,
    pub u: Vector,
    pub nu: Vector,
    pub delta: f64,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub stopped: bool,
    /// `‖Π_{t+1} − Π*‖_F` after this step's update, when an oracle is given.
    pub pi_error: Option<f64>,
    pub state_norm: f64,
    /// Sarsa only: `λ_min(Θ₂₂)` after the update.
    pub theta22_min: Option<f64>,
    pub filter: Option<FilterInfo>,
}

impl RunRecord {
    pub fn u_norm(&self) -> f64 {
        self.u.norm()
    }
}

/// Random streams and bookkeeping shared by every training loop: stop events,
/// restart states, exploration noise and the episode counter.
pub(crate) struct Episodes {
    stop: ChaCha8Rng,
    restart: ChaCha8Rng,
    explore: ChaCha8Rng,
    initial_action: ChaCha8Rng,
    radius: f64,
    start_action_std: f64,
    noise: ExplorationNoise,
    pub(crate) episode: u64,
}

impl Episodes {
    pub(crate) fn new(config: &TrainerConfig, seed: u64) -> Self {
        Episodes {
            stop: stream_rng(seed, Stream::Stop),
            restart: stream_rng(seed, Stream::Restart),
            explore: stream_rng(seed, Stream::Exploration),
            initial_action: stream_rng(seed, Stream::InitialAction),
            radius: config.restart_radius,
            start_action_std: config.start_action_std,
            noise: config.exploration.into(),
            episode: 0,
        }
    }

    pub(crate) fn initial_state(&mut self, n: usize) -> Vector {
        on_sphere(&mut self.restart, n, self.radius)
    }

    pub(crate) fn stop_draw(&mut self) -> f64 {
        self.stop.random::<f64>()
    }

    pub(crate) fn nu(&mut self, m: usize) -> Vector {
        self.noise.sample(&mut self.explore, m)
    }

    /// Random first action of an episode, `None` when disabled.
    pub(crate) fn start_action(&mut self, m: usize) -> Option<Vector> {
        (self.start_action_std > 0.0).then(|| standard_normal(&mut self.initial_action, m) * self.start_action_std)
    }

    pub(crate) fn end_episode(&mut self) {
        self.episode += 1;
        self.noise.end_episode();
    }
}

fn pi_error(pi: &SymMat, oracle: Option<&OracleSolution>) -> Option<f64> {
    oracle.map(|o| pi.sub(&o.pi_star).frobenius_norm())
}

pub(crate) fn check_divergence(norm: f64, finite: bool, ceiling: f64, initial_norm: f64, t: u64) -> Result<()> {
    if !finite || !norm.is_finite() {
        return Err(LqError::Divergence(format!("non-finite estimate at step {t}")));
    }
    if norm > ceiling * initial_norm {
        return Err(LqError::Divergence(format!(
            "‖estimate‖_F = {norm:e} exceeds {ceiling:e} × initial {initial_norm:e} at step {t}"
        )));
    }
    Ok(())
}

/// TD(0) on `Π` (value function `xᵀΠx`).
///
/// Each step acts with `u_t = L_{Π_t} x_t + ν_t`, observes the transition,
/// forms `δ_t` with the full stage cost, updates `Π` and then chooses the
/// next action from the updated estimate.
pub struct Td0Run<'a> {
    prob: &'a LqProblem,
    oracle: Option<&'a OracleSolution>,
    est: ValueEstimate,
    schedule: Schedule,
    episodes: Episodes,
    ceiling: f64,
    initial_norm: f64,
    initial_pi_error: Option<f64>,
    steps: u64,
    t: u64,
    x: Vector,
    u: Vector,
    nu: Vector,
    pending: Option<LqError>,
    done: bool,
}

pub fn run_td0<'a>(
    prob: &'a LqProblem,
    config: &TrainerConfig,
    oracle: Option<&'a OracleSolution>,
    seed: u64,
) -> Result<Td0Run<'a>> {
    config.validate()?;
    let kappa = config.resolve_pi0_scale(oracle)?;
    let est = ValueEstimate::scaled_identity(prob.state_dim(), kappa);
    let mut episodes = Episodes::new(config, seed);
    let x = episodes.initial_state(prob.state_dim());
    let nu = episodes.nu(prob.control_dim());
    let u = greedy_control_v(prob, &est, &x)? + &nu;
    Ok(Td0Run {
        prob,
        oracle,
        initial_norm: est.pi.frobenius_norm(),
        initial_pi_error: pi_error(&est.pi, oracle),
        est,
        schedule: config.schedule.into(),
        episodes,
        ceiling: config.divergence_ceiling,
        steps: config.steps,
        t: 0,
        x,
        u,
        nu,
        pending: None,
        done: false,
    })
}

impl Td0Run<'_> {
    pub fn estimate(&self) -> &ValueEstimate {
        &self.est
    }

    pub fn initial_pi_error(&self) -> Option<f64> {
        self.initial_pi_error
    }

    pub fn episodes_completed(&self) -> u64 {
        self.episodes.episode
    }

    fn advance(&mut self) -> Result<RunRecord> {
        let (n, m) = (self.prob.state_dim(), self.prob.control_dim());
        let draw = self.episodes.stop_draw();
        let outcome = step(self.prob, &self.x, &self.u, draw)?;
        let delta = td_error_v(self.prob, &self.est, &self.x, &self.u, &outcome);
        let rate = self.schedule.learning_rate(self.t, &self.x);
        self.est.update(rate.alpha, delta, &self.x);

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
            pi_error: pi_error(&self.est.pi, self.oracle),
            state_norm: self.x.norm(),
            theta22_min: None,
            filter: None,
        };
        self.t += 1;

        let next = match outcome.next_state {
            Some(next) => next,
            None => {
                self.episodes.end_episode();
                self.episodes.initial_state(n)
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
            let nu = self.episodes.nu(m);
            let u = greedy_control_v(self.prob, &self.est, &next)? + &nu;
            Ok((u, nu))
        });
        match chosen {
            Ok((u, nu)) => {
                self.x = next;
                self.u = u;
                self.nu = nu;
            }
            Err(e) => self.pending = Some(e),
        }
        Ok(record)
    }
}

impl Iterator for Td0Run<'_> {
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

/// Sarsa(0) on `Θ` (action value `zᵀΘz`, `z = (x, u)`).
///
/// The next action is chosen with `Θ_t` before the update, because the TD
/// error needs `Q_t(z_{t+1})`. Each episode opens with a random action when
/// `start_action_std > 0`, so the action block of `Θ` is excited beyond the
/// exploration noise. The step size is capped by `‖z_t‖`, which implies the
/// cap by `‖x_t‖`.
pub struct Sarsa0Run<'a> {
    prob: &'a LqProblem,
    oracle: Option<&'a OracleSolution>,
    est: QEstimate,
    schedule: Schedule,
    episodes: Episodes,
    ceiling: f64,
    initial_norm: f64,
    initial_pi_error: Option<f64>,
    min_theta22: f64,
    steps: u64,
    t: u64,
    x: Vector,
    u: Vector,
    nu: Vector,
    pending: Option<LqError>,
    done: bool,
}

fn first_action(episodes: &mut Episodes, est: &QEstimate, x: &Vector) -> Result<(Vector, Vector)> {
    let m = est.control_dim();
    match episodes.start_action(m) {
        Some(u) => Ok((u, Vector::zeros(m))),
        None => {
            let nu = episodes.nu(m);
            Ok((greedy_control_q(est, x)? + &nu, nu))
        }
    }
}

pub fn run_sarsa0<'a>(
    prob: &'a LqProblem,
    config: &TrainerConfig,
    oracle: Option<&'a OracleSolution>,
    seed: u64,
) -> Result<Sarsa0Run<'a>> {
    config.validate()?;
    let kappa = config.resolve_pi0_scale(oracle)?;
    let est = QEstimate::scaled_identity(prob.state_dim(), prob.control_dim(), kappa);
    let mut episodes = Episodes::new(config, seed);
    let x = episodes.initial_state(prob.state_dim());
    let (u, nu) = first_action(&mut episodes, &est, &x)?;
    let initial_pi_error = match oracle {
        Some(o) => Some(est.recovered_pi()?.sub(&o.pi_star).frobenius_norm()),
        None => None,
    };
    Ok(Sarsa0Run {
        prob,
        oracle,
        initial_norm: est.theta().frobenius_norm(),
        initial_pi_error,
        min_theta22: est.theta22().min_eigenvalue(),
        est,
        schedule: config.schedule.into(),
        episodes,
        ceiling: config.divergence_ceiling,
        steps: config.steps,
        t: 0,
        x,
        u,
        nu,
        pending: None,
        done: false,
    })
}

impl Sarsa0Run<'_> {
    pub fn estimate(&self) -> &QEstimate {
        &self.est
    }

    pub fn initial_pi_error(&self) -> Option<f64> {
        self.initial_pi_error
    }

    pub fn episodes_completed(&self) -> u64 {
        self.episodes.episode
    }

    /// Smallest `λ_min(Θ₂₂)` seen so far, including `Θ₀`.
    pub fn min_theta22(&self) -> f64 {
        self.min_theta22
    }

    fn advance(&mut self) -> Result<RunRecord> {
        let (n, m) = (self.prob.state_dim(), self.prob.control_dim());
        let z = stack(&self.x, &self.u);
        let draw = self.episodes.stop_draw();
        let outcome = step(self.prob, &self.x, &self.u, draw)?;
        let next = match &outcome.next_state {
            Some(next) => {
                let nu = self.episodes.nu(m);
                let u = greedy_control_q(&self.est, next)? + &nu;
                Some((next.clone(), u, nu))
            }
            None => None,
        };
        let z_next = next.as_ref().map(|(x, u, _)| stack(x, u));
        let delta = td_error_q(self.prob, &self.est, &z, z_next.as_ref(), &outcome)?;
        let rate = self.schedule.learning_rate(self.t, &z);
        self.est.update(rate.alpha, delta, &z);

        let theta22_min = self.est.theta22().min_eigenvalue();
        self.min_theta22 = self.min_theta22.min(theta22_min);
        let pi_error = match self.oracle {
            Some(o) if theta22_min > 0.0 => self.est.recovered_pi().ok().map(|pi| pi.sub(&o.pi_star).frobenius_norm()),
            Some(_) => Some(f64::NAN),
            None => None,
        };
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
            pi_error,
            state_norm: self.x.norm(),
            theta22_min: Some(theta22_min),
            filter: None,
        };
        self.t += 1;

        let guard = check_divergence(
            self.est.theta().frobenius_norm(),
            self.est.theta().is_finite(),
            self.ceiling,
            self.initial_norm,
            record.t,
        );
        let chosen = guard.and_then(|_| match next {
            Some(triple) => Ok(triple),
            None => {
                self.episodes.end_episode();
                let x = self.episodes.initial_state(n);
                let (u, nu) = first_action(&mut self.episodes, &self.est, &x)?;
                Ok((x, u, nu))
            }
        });
        match chosen {
            Ok((x, u, nu)) => {
                self.x = x;
                self.u = u;
                self.nu = nu;
            }
            Err(e) => self.pending = Some(e),
        }
        Ok(record)
    }
}

impl Iterator for Sarsa0Run<'_> {
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
