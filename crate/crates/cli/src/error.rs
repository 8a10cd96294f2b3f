use std::path::Path;

use lobbench_core::backtest::BacktestError;
use lobbench_core::dataset::DatasetError;
use lobbench_core::ensemble::EnsembleError;
use lobbench_core::ingest::IngestError;
use lobbench_core::labeling::LabelError;
use lobbench_core::metrics::MetricsError;
use lobbench_core::predictor::{PredictionFileError, PredictorError};
use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const DATA: i32 = 2;
    pub const INTERNAL: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config values or hyperparameters.
    #[error("config: {0}")]
    Config(String),
    /// Missing, malformed or inconsistent input data.
    #[error("data: {0}")]
    Data(String),
    /// A broken invariant inside the pipeline.
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) => exit::DATA,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with `context`, keeping the category.
    pub fn context(self, context: impl std::fmt::Display) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{context}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{context}: {m}")),
            CliError::Internal(m) => CliError::Internal(format!("{context}: {m}")),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidSplit(_) => CliError::Config(e.to_string()),
            DatasetError::Label(LabelError::InvalidParams(_)) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        match e {
            LabelError::InvalidParams(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PredictorError> for CliError {
    fn from(e: PredictorError) -> Self {
        match e {
            // divergence is a hyperparameter problem
            PredictorError::InvalidConfig(_) | PredictorError::NonFiniteLoss { .. } => {
                CliError::Config(e.to_string())
            }
            PredictorError::EmptyData | PredictorError::ModelFile(_) => {
                CliError::Data(e.to_string())
            }
            PredictorError::DimensionMismatch { .. } | PredictorError::Metrics(_) => {
                CliError::Internal(e.to_string())
            }
        }
    }
}

impl From<PredictionFileError> for CliError {
    fn from(e: PredictionFileError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Predictor(p) => p.into(),
            EnsembleError::TooFewSamples(_) | EnsembleError::LabelMismatch { .. } => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::NonPositiveCapital | BacktestError::InvalidPeriod => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}
