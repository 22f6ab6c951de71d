use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{line_of, ScheduleConfig, TrainerConfig};
use crate::error::{LqError, Result};
use crate::harness::{exit_code, train, RunSummary};
use crate::oracle::OracleSolution;
use crate::problem_file::Problem;

/// Cartesian grid over seeds, schedules, exploration std and `κ`. Empty
/// axes fall back to the value in `base`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub base: TrainerConfig,
    pub seeds: Vec<u64>,
    pub schedules: Vec<ScheduleConfig>,
    pub sigmas: Vec<f64>,
    /// Absolute values of `κ`.
    pub pi0_scales: Vec<f64>,
    /// `κ` as multiples of `λ_max(Π*)`; needs an oracle.
    pub pi0_factors: Vec<f64>,
}

impl SweepGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LqError::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            key: "grid".into(),
            message: e.message().to_string(),
        })
    }

    /// Every cell of the grid, deduplicated by config hash.
    pub fn cells(&self, oracle: Option<&OracleSolution>) -> Result<Vec<TrainerConfig>> {
        fn or_base<T: Clone>(axis: &[T], base: T) -> Vec<T> {
            if axis.is_empty() {
                vec![base]
            } else {
                axis.to_vec()
            }
        }
        let seeds = or_base(&self.seeds, self.base.seed);
        let schedules = or_base(&self.schedules, self.base.schedule);
        let sigmas = or_base(&self.sigmas, self.base.exploration.sigma);
        let mut kappas: Vec<Option<f64>> = self.pi0_scales.iter().map(|k| Some(*k)).collect();
        if !self.pi0_factors.is_empty() {
            let o = oracle
                .ok_or_else(|| LqError::Config("pi0_factors need an oracle solution".into()))?;
            let lmax = o.pi_star.max_eigenvalue();
            kappas.extend(self.pi0_factors.iter().map(|f| Some(f * lmax)));
        }
        if kappas.is_empty() {
            kappas.push(self.base.pi0_scale);
        }
        let mut cells = Vec::new();
        for &seed in &seeds {
            for &schedule in &schedules {
                for &sigma in &sigmas {
                    for &pi0_scale in &kappas {
                        let mut c = self.base.clone();
                        c.seed = seed;
                        c.schedule = schedule;
                        c.exploration.sigma = sigma;
                        c.pi0_scale = pi0_scale;
                        c.validate()?;
                        cells.push(c);
                    }
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        cells.retain(|c| seen.insert(c.hash()));
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub config_hash: String,
    pub config: TrainerConfig,
    pub csv: String,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
    /// Exit code the cell would have produced as a single `train`.
    pub exit_code: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub entries: Vec<SweepEntry>,
}

impl SweepIndex {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.error.is_some()).count()
    }

    /// Largest cell exit code, zero when every cell succeeded.
    pub fn exit_code(&self) -> u8 {
        self.entries.iter().map(|e| e.exit_code).max().unwrap_or(0)
    }
}

fn run_cell(
    problem: &Problem,
    cfg: &TrainerConfig,
    oracle: Option<&OracleSolution>,
    compare: bool,
    out_dir: &Path,
) -> SweepEntry {
    let hash = cfg.hash();
    let csv = format!("{hash}.csv");
    let result = File::create(out_dir.join(&csv))
        .map_err(LqError::from)
        .and_then(|f| train(problem, cfg, oracle, compare, BufWriter::new(f)));
    let (summary, error) = match result {
        Ok((outcome, _)) => (Some(outcome.summary), outcome.error),
        Err(e) => (None, Some(e)),
    };
    SweepEntry {
        config_hash: hash,
        config: cfg.clone(),
        csv,
        summary,
        exit_code: error.as_ref().map_or(0, exit_code),
        error: error.map(|e| e.to_string()),
    }
}

/// Runs every cell on a pool of `parallel` threads, writes one CSV per cell
/// and `index.json` sorted by config hash. Cell failures are recorded in the
/// index rather than aborting the sweep.
pub fn run_sweep(
    problem: &Problem,
    grid: &SweepGrid,
    oracle: Option<&OracleSolution>,
    compare: bool,
    parallel: usize,
    out_dir: &Path,
) -> Result<SweepIndex> {
    let cells = grid.cells(oracle)?;
    std::fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| LqError::Config(format!("thread pool: {e}")))?;
    let mut entries: Vec<SweepEntry> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_cell(problem, c, oracle, compare, out_dir))
            .collect()
    });
    entries.sort_by(|a, b| a.config_hash.cmp(&b.config_hash));
    let index = SweepIndex { entries };
    let path: PathBuf = out_dir.join("index.json");
    let mut json = serde_json::to_string_pretty(&index).map_err(|e| LqError::Config(e.to_string()))?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LqProblem;
    use crate::oracle::solve_default;

    #[test]
    fn grid_expansion() {
        let prob = LqProblem::scalar(0.9, 1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let sol = solve_default(&prob).unwrap();
        let grid = SweepGrid::from_toml("seeds = [1, 2, 3]\npi0_factors = [0.1, 10.0]\n[base]\nsteps = 10\n").unwrap();
        let cells = grid.cells(Some(&sol)).unwrap();
        assert_eq!(cells.len(), 6);
        assert!(grid.cells(None).is_err());
        let single = SweepGrid::from_toml("[base]\nsteps = 5\npi0_scale = 3.0\n").unwrap();
        assert_eq!(single.cells(None).unwrap(), vec![single.base.clone()]);
    }

    #[test]
    fn index_does_not_depend_on_parallelism() {
        let base = LqProblem::scalar(0.9, 1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let sol = solve_default(&base).unwrap();
        let prob = Problem::Lq(base);
        let grid = SweepGrid::from_toml("seeds = [0, 1, 2, 3]\n[base]\nsteps = 200\nmetrics_stride = 7\n").unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d4 = tempfile::tempdir().unwrap();
        let a = run_sweep(&prob, &grid, Some(&sol), true, 1, d1.path()).unwrap();
        let b = run_sweep(&prob, &grid, Some(&sol), true, 4, d4.path()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let ia = std::fs::read(d1.path().join("index.json")).unwrap();
        let ib = std::fs::read(d4.path().join("index.json")).unwrap();
        assert_eq!(ia, ib);
        for e in &a.entries {
            assert_eq!(
                std::fs::read(d1.path().join(&e.csv)).unwrap(),
                std::fs::read(d4.path().join(&e.csv)).unwrap()
            );
        }
    }
}
