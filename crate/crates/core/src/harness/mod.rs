//! Experiment orchestration behind the `levyspec` binary: configuration,
//! per-trial pipelines under both measures, Monte Carlo studies and the
//! CSV/JSON artifacts they leave behind.

pub mod config;
pub mod pipeline;
pub mod record;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::adaptive::AdaptiveError;
use crate::calibration::CalibrationError;
use crate::ecf::EcfError;
use crate::levy_models::{ModelError, SamplingError};
use crate::option_market::{PricingError, QuoteError};
use crate::spectral::SpectralError;

pub use config::{ExperimentConfig, Group, Mode};
pub use pipeline::{pipeline_p, pipeline_q, DataSource, TrialContext, TrialOutcome};
pub use record::{read_trials_csv, trials_csv, TrialRecord, TRIAL_COLUMNS};
pub use run::{run, RunSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ecf(#[from] EcfError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Quotes(#[from] QuoteError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Adaptive(#[from] AdaptiveError),
    #[error("group {group}, trial {trial}: {source}")]
    Trial { group: usize, trial: usize, source: Box<HarnessError> },
}

impl HarnessError {
    /// Short machine-readable tag for `errors.json`.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Json(_) => "json",
            HarnessError::Csv(_) => "csv",
            HarnessError::Model(_) => "model",
            HarnessError::Ecf(_) => "ecf",
            HarnessError::Sampling(_) => "sampling",
            HarnessError::Pricing(_) => "pricing",
            HarnessError::Quotes(_) => "quotes",
            HarnessError::Calibration(_) => "calibration",
            HarnessError::Spectral(_) => "spectral",
            HarnessError::Adaptive(_) => "adaptive",
            HarnessError::Trial { source, .. } => source.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}
