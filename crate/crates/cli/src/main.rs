use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lqtd::config::TrainerConfig;
use lqtd::harness::{self, exit_code, SweepGrid, EXIT_DIVERGENCE, EXIT_LEMMA_VIOLATION, EXIT_VALIDATION};
use lqtd::oracle::{solve_pi_star, DEFAULT_MAX_ITER, DEFAULT_TOL};
use lqtd::problem_file::{parse_problem, Problem};
use lqtd::{LqError, Result};

#[derive(Parser)]
#[command(name = "lqtd", version, about = "TD(0) / Sarsa(0) control of stopped LQ systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve for Π*, L*, Θ* and check ‖F + G L*‖ ≤ q.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Check the convergence hypotheses for the configured κ.
    Check {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `pi0_scale` from the config.
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run one learner and stream metrics to CSV.
    Train(TrainArgs),
    /// Run a grid of configurations, one CSV per cell plus index.json.
    Sweep {
        #[arg(long)]
        problem: PathBuf,
        /// Grid file (`base` config plus axis lists).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        compare: bool,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Randomized checks of the stability lemmas.
    Lemmas {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Solve the oracle and record ‖Π_t − Π*‖_F.
    #[arg(long)]
    compare: bool,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

fn out_dir() -> PathBuf {
    std::env::var_os(harness::OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("lqtd-out"))
}

fn load_config(path: Option<&Path>) -> Result<TrainerConfig> {
    match path {
        Some(p) => TrainerConfig::from_toml(&std::fs::read_to_string(p)?),
        None => Ok(TrainerConfig::default()),
    }
}

fn solve(problem: &Path, tol: f64) -> Result<u8> {
    let prob = parse_problem(problem)?;
    let report = harness::solve_report(prob.base(), tol, DEFAULT_MAX_ITER)?;
    print!("{report}");
    if report.margin.satisfies {
        Ok(0)
    } else {
        eprintln!("stability condition fails: ||F + G L*|| > q");
        Ok(EXIT_DIVERGENCE)
    }
}

fn check(problem: &Path, config: Option<&Path>, kappa: Option<f64>, tol: f64) -> Result<u8> {
    let prob = parse_problem(problem)?;
    let cfg = load_config(config)?;
    let oracle = solve_pi_star(prob.base(), tol, DEFAULT_MAX_ITER)?;
    let kappa = match kappa {
        Some(k) => k,
        None => cfg.resolve_pi0_scale(Some(&oracle))?,
    };
    let report = harness::check_report(prob.base(), &oracle, kappa)?;
    print!("{report}");
    Ok(if report.all_hold() { 0 } else { EXIT_VALIDATION })
}

fn needs_oracle(cfg: &TrainerConfig, compare: bool) -> bool {
    compare || cfg.pi0_scale.is_none()
}

fn train(args: &TrainArgs) -> Result<u8> {
    let prob = parse_problem(&args.problem)?;
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let oracle = if needs_oracle(&cfg, args.compare) {
        Some(solve_pi_star(prob.base(), args.tol, DEFAULT_MAX_ITER)?)
    } else {
        None
    };
    let path = match &args.out {
        Some(p) => p.clone(),
        None => {
            let dir = out_dir();
            std::fs::create_dir_all(&dir)?;
            dir.join(format!("train-{}.csv", cfg.hash()))
        }
    };
    let file = BufWriter::new(File::create(&path)?);
    let (outcome, _) = harness::train(&prob, &cfg, oracle.as_ref(), args.compare, file)?;
    print!("{}", outcome.summary);
    println!("csv                {}", path.display());
    match outcome.error {
        Some(e) => {
            eprintln!("run aborted: {e}");
            Ok(exit_code(&e))
        }
        None => Ok(0),
    }
}

fn sweep(problem: &Path, grid: &Path, out: Option<&Path>, parallel: usize, compare: bool, tol: f64) -> Result<u8> {
    let prob: Problem = parse_problem(problem)?;
    let grid = SweepGrid::from_toml(&std::fs::read_to_string(grid)?)?;
    let wants_oracle =
        compare || !grid.pi0_factors.is_empty() || (grid.pi0_scales.is_empty() && grid.base.pi0_scale.is_none());
    let oracle = if wants_oracle {
        Some(solve_pi_star(prob.base(), tol, DEFAULT_MAX_ITER)?)
    } else {
        None
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(out_dir);
    let index = harness::run_sweep(&prob, &grid, oracle.as_ref(), compare, parallel, &dir)?;
    for e in &index.entries {
        let ratio = e
            .summary
            .as_ref()
            .and_then(|s| s.pi_error_ratio())
            .map(|r| format!("{r:.3e}"))
            .unwrap_or_else(|| "-".into());
        let status = e.error.as_deref().unwrap_or("ok");
        println!("{}  seed {:>4}  ratio {ratio}  {status}", e.config_hash, e.config.seed);
    }
    println!("{} cells, {} failed, index {}", index.entries.len(), index.failures(), dir.join("index.json").display());
    Ok(index.exit_code())
}

fn lemmas(seed: u64, trials: usize) -> Result<u8> {
    let report = harness::run_lemmas(seed, trials)?;
    print!("{report}");
    Ok(if report.passed() { 0 } else { EXIT_LEMMA_VIOLATION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Solve { problem, tol } => solve(problem, *tol),
        Cmd::Check {
            problem,
            config,
            kappa,
            tol,
        } => check(problem, config.as_deref(), *kappa, *tol),
        Cmd::Train(args) => train(args),
        Cmd::Sweep {
            problem,
            config,
            out,
            parallel,
            compare,
            tol,
        } => sweep(problem, config, out.as_deref(), *parallel, *compare, *tol),
        Cmd::Lemmas { seed, trials } => lemmas(*seed, *trials),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let LqError::Invalid(report) = &e {
                for v in &report.violations {
                    eprintln!("  {v}");
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
