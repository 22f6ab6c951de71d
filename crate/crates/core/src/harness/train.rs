use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{run_sarsa0, run_td0, RunRecord, Sarsa0Run, Td0Run};
use crate::config::{Algorithm, TrainerConfig};
use crate::error::{LqError, Result};
use crate::harness::CsvSink;
use crate::kalman::{run_kf_td0, KfTd0Run};
use crate::matrix::{psd_order_geq, SymMat, DEFAULT_PSD_TOL};
use crate::model::LqgProblem;
use crate::oracle::OracleSolution;
use crate::problem_file::Problem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config_hash: String,
    pub steps_completed: u64,
    pub pi0_scale: f64,
    pub initial_pi_error: Option<f64>,
    pub final_pi_error: Option<f64>,
    pub episodes_completed: u64,
    pub max_state_norm: f64,
    /// Mean `|δ_t|` over the last tenth of the configured steps.
    pub mean_abs_delta_tail: f64,
    /// Whether `Π₀ = κI ⪰ Π*`, when an oracle was supplied.
    pub pi0_dominates: Option<bool>,
    /// Sarsa only: smallest `λ_min(Θ₂₂)` over the run.
    pub min_theta22: Option<f64>,
    pub error: Option<String>,
    /// Not serialized, so summaries stay byte-reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunSummary {
    /// `final / initial` pi error.
    pub fn pi_error_ratio(&self) -> Option<f64> {
        match (self.final_pi_error, self.initial_pi_error) {
            (Some(f), Some(i)) if i > 0.0 => Some(f / i),
            _ => None,
        }
    }
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_else(|| "-".into());
        writeln!(f, "algorithm          {}", self.algorithm)?;
        writeln!(f, "seed               {}", self.seed)?;
        writeln!(f, "config hash        {}", self.config_hash)?;
        writeln!(f, "steps completed    {}", self.steps_completed)?;
        writeln!(f, "kappa              {}", self.pi0_scale)?;
        writeln!(f, "episodes           {}", self.episodes_completed)?;
        writeln!(f, "initial pi error   {}", opt(self.initial_pi_error))?;
        writeln!(f, "final pi error     {}", opt(self.final_pi_error))?;
        writeln!(f, "ratio              {}", opt(self.pi_error_ratio()))?;
        writeln!(f, "max |x|            {:e}", self.max_state_norm)?;
        writeln!(f, "mean |delta| tail  {:e}", self.mean_abs_delta_tail)?;
        if let Some(d) = self.pi0_dominates {
            writeln!(f, "Pi0 >= Pi*         {d}")?;
        }
        if let Some(m) = self.min_theta22 {
            writeln!(f, "min eig Theta22    {m:e}")?;
        }
        writeln!(f, "wall clock         {:.3}s", self.wall_clock_secs)?;
        if let Some(e) = &self.error {
            writeln!(f, "error              {e}")?;
        }
        Ok(())
    }
}

/// A summary plus the error that ended the run early, if any. The CSV holds
/// every record emitted before the error.
#[derive(Debug)]
pub struct TrainOutcome {
    pub summary: RunSummary,
    pub error: Option<LqError>,
}

trait TrainingRun: Iterator<Item = Result<RunRecord>> {
    fn initial_pi_error(&self) -> Option<f64>;
}

impl TrainingRun for Td0Run<'_> {
    fn initial_pi_error(&self) -> Option<f64> {
        Td0Run::initial_pi_error(self)
    }
}

impl TrainingRun for Sarsa0Run<'_> {
    fn initial_pi_error(&self) -> Option<f64> {
        Sarsa0Run::initial_pi_error(self)
    }
}

impl TrainingRun for KfTd0Run<'_> {
    fn initial_pi_error(&self) -> Option<f64> {
        KfTd0Run::initial_pi_error(self)
    }
}

struct Drive {
    steps: u64,
    last_pi_error: Option<f64>,
    max_state_norm: f64,
    tail_sum: f64,
    tail_count: u64,
    error: Option<LqError>,
}

fn drive<R: TrainingRun, W: Write>(run: &mut R, tail_start: u64, sink: &mut CsvSink<W>) -> Result<Drive> {
    let mut d = Drive {
        steps: 0,
        last_pi_error: run.initial_pi_error(),
        max_state_norm: 0.0,
        tail_sum: 0.0,
        tail_count: 0,
        error: None,
    };
    for item in run.by_ref() {
        let r = match item {
            Ok(r) => r,
            Err(e) => {
                d.error = Some(e);
                break;
            }
        };
        sink.write(&r)?;
        d.steps += 1;
        d.last_pi_error = r.pi_error;
        d.max_state_norm = d.max_state_norm.max(r.state_norm);
        if r.t >= tail_start {
            d.tail_sum += r.delta.abs();
            d.tail_count += 1;
        }
    }
    Ok(d)
}

/// Runs the configured learner, streaming records to `out` as CSV.
///
/// With `compare`, the oracle fills `pi_error`. Without it the oracle (when
/// given) is only used to resolve an unset `κ`. A `kf-td0` run on a plain LQ
/// problem uses its noise-free, fully observed embedding.
pub fn train<W: Write>(
    problem: &Problem,
    config: &TrainerConfig,
    oracle: Option<&OracleSolution>,
    compare: bool,
    out: W,
) -> Result<(TrainOutcome, W)> {
    config.validate()?;
    if compare && oracle.is_none() {
        return Err(LqError::Config("comparison needs an oracle solution".into()));
    }
    let kappa = config.resolve_pi0_scale(oracle)?;
    let resolved = TrainerConfig {
        pi0_scale: Some(kappa),
        ..config.clone()
    };
    let run_oracle = if compare { oracle } else { None };
    let base = problem.base();
    let tail_start = config.steps - (config.steps / 10).max(1);
    let filter_columns = config.algorithm == Algorithm::KfTd0;
    let mut sink = CsvSink::new(out, config.metrics_stride, filter_columns)?;
    let started = Instant::now();

    let (d, initial, episodes, min_theta22) = match config.algorithm {
        Algorithm::Td0 => {
            let mut run = run_td0(base, &resolved, run_oracle, config.seed)?;
            let d = drive(&mut run, tail_start, &mut sink)?;
            (d, run.initial_pi_error(), run.episodes_completed(), None)
        }
        Algorithm::Sarsa0 => {
            let mut run = run_sarsa0(base, &resolved, run_oracle, config.seed)?;
            let d = drive(&mut run, tail_start, &mut sink)?;
            (d, run.initial_pi_error(), run.episodes_completed(), Some(run.min_theta22()))
        }
        Algorithm::KfTd0 => {
            let embedded;
            let lqg = match problem {
                Problem::Lqg(p) => p,
                Problem::Lq(p) => {
                    embedded = LqgProblem::noiseless(p.clone());
                    &embedded
                }
            };
            let mut run = run_kf_td0(lqg, &resolved, run_oracle, config.seed)?;
            let d = drive(&mut run, tail_start, &mut sink)?;
            (d, run.initial_pi_error(), run.episodes_completed(), None)
        }
    };
    let out = sink.finish()?;
    let n = base.state_dim();
    let pi0_dominates = match oracle {
        Some(o) => Some(psd_order_geq(&SymMat::scaled_identity(n, kappa), &o.pi_star, DEFAULT_PSD_TOL)?),
        None => None,
    };
    let summary = RunSummary {
        algorithm: config.algorithm,
        seed: config.seed,
        config_hash: config.hash(),
        steps_completed: d.steps,
        pi0_scale: kappa,
        initial_pi_error: initial,
        final_pi_error: if run_oracle.is_some() { d.last_pi_error } else { None },
        episodes_completed: episodes,
        max_state_norm: d.max_state_norm,
        mean_abs_delta_tail: if d.tail_count > 0 {
            d.tail_sum / d.tail_count as f64
        } else {
            0.0
        },
        pi0_dominates,
        min_theta22,
        error: d.error.as_ref().map(|e| e.to_string()),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((TrainOutcome { summary, error: d.error }, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LqProblem;
    use crate::oracle::solve_default;

    #[test]
    fn compare_without_oracle_is_a_config_error() {
        let prob = Problem::Lq(LqProblem::scalar(0.9, 1.0, 1.0, 1.0, 1.0, 0.1).unwrap());
        let cfg = TrainerConfig {
            steps: 10,
            pi0_scale: Some(5.0),
            ..Default::default()
        };
        assert!(matches!(train(&prob, &cfg, None, true, Vec::new()), Err(LqError::Config(_))));
        let (outcome, csv) = train(&prob, &cfg, None, false, Vec::new()).unwrap();
        assert_eq!(outcome.summary.steps_completed, 10);
        assert!(outcome.summary.final_pi_error.is_none());
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 2);
    }

    #[test]
    fn summary_serialization_is_deterministic() {
        let base = LqProblem::scalar(0.9, 1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let sol = solve_default(&base).unwrap();
        let prob = Problem::Lq(base);
        let cfg = TrainerConfig {
            steps: 500,
            metrics_stride: 1,
            ..Default::default()
        };
        let (a, csv_a) = train(&prob, &cfg, Some(&sol), true, Vec::new()).unwrap();
        let (b, csv_b) = train(&prob, &cfg, Some(&sol), true, Vec::new()).unwrap();
        assert_eq!(csv_a, csv_b);
        assert_eq!(serde_json::to_string(&a.summary).unwrap(), serde_json::to_string(&b.summary).unwrap());
        assert_eq!(a.summary.pi0_dominates, Some(true));
        assert!(a.summary.pi_error_ratio().unwrap() < 1.0);
    }
}
