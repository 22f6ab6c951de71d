//! Experiment harness behind the `lqtd` CLI: CSV metrics, run summaries,
//! solve/check reports, the randomized lemma suite and parameter sweeps.

mod csv;
mod lemmas;
mod reports;
mod sweep;
mod train;

pub use csv::{CsvSink, BASE_COLUMNS, FILTER_COLUMNS};
pub use lemmas::{
    check_gain_stability, check_optimal_gain, check_ordering_pair, check_woodbury, run_lemmas, LemmaCheck, LemmaReport,
};
pub use reports::{check_report, solve_report, CheckReport, SolveReport};
pub use sweep::{run_sweep, SweepEntry, SweepGrid, SweepIndex};
pub use train::{train, RunSummary, TrainOutcome};

use crate::error::LqError;

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "LQTD_OUT_DIR";

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_NON_CONVERGENCE: u8 = 4;
pub const EXIT_LEMMA_VIOLATION: u8 = 5;
pub const EXIT_OTHER: u8 = 1;

/// Process exit code for an error.
pub fn exit_code(err: &LqError) -> u8 {
    match err {
        LqError::Invalid(_) | LqError::Config(_) | LqError::Parse { .. } | LqError::Dimension(_) => EXIT_VALIDATION,
        LqError::Divergence(_) | LqError::NotPositiveDefinite { .. } => EXIT_DIVERGENCE,
        LqError::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        LqError::EmptyStats | LqError::Io(_) => EXIT_OTHER,
    }
}
