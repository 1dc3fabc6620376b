//! Command-line front end: batch runs, evaluation reports and synthetic
//! dataset generation.
//!
//! Exit statuses: 0 when every clip succeeded, 1 when some clip failed or
//! had no output (partial results are kept), 2 on configuration or usage
//! errors (nothing is written).

pub mod commands;
pub mod config;
pub mod plot;
pub mod report;

use std::path::PathBuf;

use dtwin::evaluation::EvaluationError;
use dtwin::generation::RegistryError;
use dtwin::media::MediaError;
use dtwin::pipeline::PipelineError;
use thiserror::Error;

pub use commands::{
    cmd_evaluate, cmd_run, cmd_synth_dataset, EvaluateOutcome, RunOutcome, SynthSpec,
};
pub use config::{CliConfig, DistanceChoice, FileConfig, Overrides, CACHE_DIR_ENV};
pub use plot::plot_timeline;
pub use report::{MissingOutput, ReportBundle, FRAME_CSV_HEADER, SUMMARY_CSV_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] RegistryError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("failed to write {path}: {reason}")]
    WriteFailure { path: PathBuf, reason: String },
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(r) => Self::Backend(r),
            PipelineError::Storage(m) => Self::Media(m),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Backend(_) | Self::Precondition(_) => EXIT_CONFIG,
            _ => EXIT_PARTIAL,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Self::WriteFailure {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
