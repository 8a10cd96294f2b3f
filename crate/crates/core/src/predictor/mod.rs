//! Baseline MLP classifier, its trainer and grid search, and the prediction
//! file interchange used by external models.

mod mlp;
mod predictions;
mod train;

use std::fs;
use std::path::Path;

use thiserror::Error;

pub use mlp::{init_mlp, Activation, LossGrad, Mlp, MlpConfig, N_CLASSES};
pub use predictions::*;
pub use train::{
    grid_search, predict, predict_labels, run_grid, train, CellOutcome, EpochStats, GridCell,
    LabeledData, Optimizer, OptimizerKind, TrainConfig, TrainOutcome, ADAM_BETA1, ADAM_BETA2,
    ADAM_EPSILON, GRID_BATCH_SIZES, GRID_LEARNING_RATES, RMSPROP_DECAY,
};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictorError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("training and validation sets must be non-empty")]
    EmptyData,
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Anything that maps a batch of flattened windows to class probabilities.
pub trait Classifier: Send + Sync {
    fn input_dim(&self) -> usize;

    /// Probabilities (up, stationary, down) for `n` row-major inputs.
    fn predict_batch(
        &self,
        inputs: &[f32],
        n: usize,
    ) -> Result<Vec<[f64; N_CLASSES]>, PredictorError>;
}

impl<T: Scalar> Classifier for Mlp<T> {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn predict_batch(
        &self,
        inputs: &[f32],
        n: usize,
    ) -> Result<Vec<[f64; N_CLASSES]>, PredictorError> {
        let x: Vec<T> = inputs.iter().map(|v| T::lit(f64::from(*v))).collect();
        Ok(self
            .predict_proba(&x, n)?
            .into_iter()
            .map(|p| p.map(|v| v.as_f64()))
            .collect())
    }
}

pub fn save_model<T: Scalar + serde::Serialize>(
    model: &Mlp<T>,
    path: &Path,
) -> Result<(), PredictorError> {
    let json = serde_json::to_vec(model).map_err(|e| PredictorError::ModelFile(e.to_string()))?;
    fs::write(path, json).map_err(|e| PredictorError::ModelFile(format!("{}: {e}", path.display())))
}

pub fn load_model<T: Scalar + serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Mlp<T>, PredictorError> {
    let bytes = fs::read(path)
        .map_err(|e| PredictorError::ModelFile(format!("{}: {e}", path.display())))?;
    let model: Mlp<T> =
        serde_json::from_slice(&bytes).map_err(|e| PredictorError::ModelFile(e.to_string()))?;
    model.config.validate()?;
    if model.params.len() != model.config.param_count() {
        return Err(PredictorError::ModelFile(
            "parameter count does not match configuration".into(),
        ));
    }
    Ok(model)
}
