//! Mini-batch training, optimizers and grid search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{init_mlp, Mlp, MlpConfig, N_CLASSES};
use super::{PredictionSet, PredictorError};
use crate::dataset::MarketObservation;
use crate::labeling::TrendLabel;
use crate::metrics::macro_f1;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam,
    Sgd,
    RmsProp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Baseline MLP settings: Adam, lr 0.001, batch 64, 100 epochs.
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 100,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Meta-classifier settings: SGD, lr 0.0001, batch 64, 100 epochs.
    pub fn meta() -> Self {
        Self {
            learning_rate: 1e-4,
            optimizer: OptimizerKind::Sgd,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || self.batch_size == 0
            || self.epochs == 0
        {
            return Err(PredictorError::InvalidConfig(
                "need lr > 0, batch >= 1 and epochs >= 1".into(),
            ));
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const RMSPROP_DECAY: f64 = 0.99;

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: T,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let state = if kind == OptimizerKind::Sgd {
            0
        } else {
            n_params
        };
        Self {
            kind,
            lr: T::lit(lr),
            m: vec![T::zero(); state],
            v: vec![T::zero(); state],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [T], grad: &[T]) {
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p = *p - lr * *g;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPSILON));
                let c1 = T::one() - b1.powi(self.step);
                let c2 = T::one() - b2.powi(self.step);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
                    self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            OptimizerKind::RmsProp => {
                let (a, eps) = (T::lit(RMSPROP_DECAY), T::lit(ADAM_EPSILON));
                for i in 0..params.len() {
                    let g = grad[i];
                    self.v[i] = a * self.v[i] + (T::one() - a) * g * g;
                    params[i] = params[i] - lr * g / (self.v[i].sqrt() + eps);
                }
            }
        }
    }
}

/// Flattened inputs with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData<T> {
    pub dim: usize,
    pub inputs: Vec<T>,
    pub labels: Vec<TrendLabel>,
}

impl<T: Scalar> LabeledData<T> {
    pub fn new(
        dim: usize,
        inputs: Vec<T>,
        labels: Vec<TrendLabel>,
    ) -> Result<Self, PredictorError> {
        if dim == 0 || inputs.len() != dim * labels.len() {
            return Err(PredictorError::DimensionMismatch {
                expected: dim * labels.len(),
                found: inputs.len(),
            });
        }
        Ok(Self {
            dim,
            inputs,
            labels,
        })
    }

    pub fn from_observations(obs: &[MarketObservation]) -> Result<Self, PredictorError> {
        let dim = obs.first().map_or(0, |o| o.window.len());
        if let Some(o) = obs.iter().find(|o| o.window.len() != dim) {
            return Err(PredictorError::DimensionMismatch {
                expected: dim,
                found: o.window.len(),
            });
        }
        let inputs = obs
            .iter()
            .flat_map(|o| o.window.iter().map(|v| T::lit(f64::from(*v))))
            .collect();
        Ok(Self {
            dim,
            inputs,
            labels: obs.iter().map(|o| o.label).collect(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> LabeledData<U> {
        LabeledData {
            dim: self.dim,
            inputs: self.inputs.iter().map(|v| U::lit(v.as_f64())).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the best validation macro-F1; the
    /// earlier epoch wins ties.
    pub model: Mlp<T>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub history: Vec<EpochStats>,
}

const PREDICT_CHUNK: usize = 256;

/// Argmax classes of `data` under `model`.
pub fn predict_labels<T: Scalar>(
    model: &Mlp<T>,
    data: &LabeledData<T>,
) -> Result<Vec<TrendLabel>, PredictorError> {
    Ok(predict_rows(model, data)?
        .iter()
        .map(|p| {
            super::PredictionRow {
                index: 0,
                probs: *p,
            }
            .argmax()
        })
        .collect())
}

fn predict_rows<T: Scalar>(
    model: &Mlp<T>,
    data: &LabeledData<T>,
) -> Result<Vec<[f64; N_CLASSES]>, PredictorError> {
    if data.dim != model.input_dim() {
        return Err(PredictorError::DimensionMismatch {
            expected: model.input_dim(),
            found: data.dim,
        });
    }
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.inputs.chunks(PREDICT_CHUNK * data.dim) {
        for p in model.predict_proba(chunk, chunk.len() / data.dim)? {
            let p = p.map(|v| v.as_f64());
            let s = p[0] + p[1] + p[2];
            out.push(p.map(|v| v / s));
        }
    }
    Ok(out)
}

/// Softmax outputs for every row of `data`, indexed from 0.
pub fn predict<T: Scalar>(
    model: &Mlp<T>,
    data: &LabeledData<T>,
    model_id: &str,
    horizon: usize,
    seed: u64,
) -> Result<PredictionSet, PredictorError> {
    Ok(PredictionSet::from_probs(
        model_id,
        horizon,
        seed,
        predict_rows(model, data)?,
    ))
}

/// Trains `model` with seeded per-epoch shuffling and keeps the checkpoint
/// with the best validation macro-F1.
pub fn train<T: Scalar>(
    model: Mlp<T>,
    train_set: &LabeledData<T>,
    val_set: &LabeledData<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, PredictorError> {
    config.validate()?;
    for d in [train_set, val_set] {
        if d.dim != model.input_dim() {
            return Err(PredictorError::DimensionMismatch {
                expected: model.input_dim(),
                found: d.dim,
            });
        }
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(PredictorError::EmptyData);
    }
    let mut model = model;
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, model.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, Vec<T>)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut batch_x: Vec<T> = Vec::with_capacity(config.batch_size * train_set.dim);
    let mut batch_y: Vec<usize> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            batch_x.clear();
            batch_y.clear();
            for &i in idx {
                batch_x.extend_from_slice(train_set.row(i));
                batch_y.push(train_set.labels[i].index());
            }
            let lg = model.loss_and_grad(&batch_x, &batch_y, idx.len())?;
            let loss = lg.loss.as_f64();
            if !loss.is_finite() || lg.grad.iter().any(|g| !g.is_finite()) {
                return Err(PredictorError::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                });
            }
            loss_sum += loss * idx.len() as f64;
            opt.update(&mut model.params, &lg.grad);
        }
        if !model.is_finite() {
            return Err(PredictorError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        let predicted = predict_labels(&model, val_set)?;
        let val_f1 = macro_f1(&val_set.labels, &predicted)
            .map_err(|e| PredictorError::Metrics(e.to_string()))?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_f1,
        });
        if best.as_ref().is_none_or(|(f, _, _)| val_f1 > *f) {
            best = Some((val_f1, epoch, model.params.clone()));
        }
    }
    let (best_val_f1, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_val_f1,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellOutcome {
    Trained { val_f1: f64, best_epoch: usize },
    Diverged { epoch: usize, batch: usize },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub outcome: CellOutcome,
}

impl GridCell {
    pub fn val_f1(&self) -> Option<f64> {
        match self.outcome {
            CellOutcome::Trained { val_f1, .. } => Some(val_f1),
            _ => None,
        }
    }
}

/// Learning rates searched for every model.
pub const GRID_LEARNING_RATES: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
/// Batch sizes searched for every model.
pub const GRID_BATCH_SIZES: [usize; 5] = [16, 32, 64, 128, 256];

/// Evaluates `run` on every (lr, batch) cell in parallel. Errors are
/// recorded per cell; rows come back ranked by validation F1 (descending),
/// failed cells last, ties in grid order.
pub fn run_grid<F>(
    learning_rates: &[f64],
    batch_sizes: &[usize],
    run: F,
) -> Result<Vec<GridCell>, PredictorError>
where
    F: Fn(f64, usize) -> Result<TrainOutcome<f64>, PredictorError> + Sync,
{
    run_grid_with(learning_rates, batch_sizes, |lr, b| {
        run(lr, b).map(|o| (o.best_val_f1, o.best_epoch))
    })
}

fn run_grid_with<F>(
    learning_rates: &[f64],
    batch_sizes: &[usize],
    run: F,
) -> Result<Vec<GridCell>, PredictorError>
where
    F: Fn(f64, usize) -> Result<(f64, usize), PredictorError> + Sync,
{
    if learning_rates.is_empty() || batch_sizes.is_empty() {
        return Err(PredictorError::InvalidConfig("empty grid".into()));
    }
    let cells: Vec<(f64, usize)> = batch_sizes
        .iter()
        .flat_map(|b| learning_rates.iter().map(move |lr| (*lr, *b)))
        .collect();
    let mut rows: Vec<GridCell> = cells
        .par_iter()
        .map(|&(lr, b)| GridCell {
            learning_rate: lr,
            batch_size: b,
            outcome: match run(lr, b) {
                Ok((val_f1, best_epoch)) => CellOutcome::Trained { val_f1, best_epoch },
                Err(PredictorError::NonFiniteLoss { epoch, batch }) => {
                    CellOutcome::Diverged { epoch, batch }
                }
                Err(e) => CellOutcome::Failed(e.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| match (a.val_f1(), b.val_f1()) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

/// Trains one freshly initialized model per cell, all from `base.seed`.
pub fn grid_search<T: Scalar>(
    model_config: &MlpConfig,
    train_set: &LabeledData<T>,
    val_set: &LabeledData<T>,
    base: &TrainConfig,
    learning_rates: &[f64],
    batch_sizes: &[usize],
) -> Result<Vec<GridCell>, PredictorError> {
    run_grid_with(learning_rates, batch_sizes, |lr, b| {
        let cfg = TrainConfig {
            learning_rate: lr,
            batch_size: b,
            ..base.clone()
        };
        let model = init_mlp::<T>(model_config, base.seed)?;
        train(model, train_set, val_set, &cfg).map(|o| (o.best_val_f1, o.best_epoch))
    })
}
