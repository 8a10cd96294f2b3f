//! Inference latency of classifiers on real observations.

use std::time::Instant;

use lobbench_core::predictor::{Classifier, PredictorError, N_CLASSES};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MIN_REPETITIONS: usize = 30;

/// Per-observation timings in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub model: String,
    pub repetitions: usize,
    pub warmup: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub batch: usize,
    /// Median batch time divided by the batch size.
    pub amortized_ms: f64,
}

/// Predicts uniform probabilities without looking at the input.
#[derive(Debug, Clone, Copy)]
pub struct ConstantModel {
    pub dim: usize,
}

impl Classifier for ConstantModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict_batch(
        &self,
        inputs: &[f32],
        n: usize,
    ) -> Result<Vec<[f64; N_CLASSES]>, PredictorError> {
        if inputs.len() != n * self.dim {
            return Err(PredictorError::DimensionMismatch {
                expected: n * self.dim,
                found: inputs.len(),
            });
        }
        Ok(vec![[1.0 / 3.0; N_CLASSES]; n])
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn median_of(sorted: &[f64]) -> f64 {
    lobbench_core::backtest::median(sorted)
}

/// Times `repetitions` single-observation predictions after `warmup`
/// untimed ones, cycling through the `n` row-major `observations`, then the
/// same number of `batch`-sized predictions.
pub fn measure_latency(
    name: &str,
    model: &dyn Classifier,
    observations: &[f32],
    n: usize,
    repetitions: usize,
    warmup: usize,
    batch: usize,
) -> Result<LatencyStats> {
    if repetitions < MIN_REPETITIONS {
        return Err(CliError::Config(format!(
            "latency needs at least {MIN_REPETITIONS} repetitions"
        )));
    }
    let dim = model.input_dim();
    if n == 0 || batch == 0 || observations.len() != n * dim {
        return Err(CliError::Data(format!(
            "latency needs observations of width {dim}"
        )));
    }
    let row = |i: usize| &observations[(i % n) * dim..(i % n + 1) * dim];
    let mut single = Vec::with_capacity(repetitions);
    for i in 0..warmup + repetitions {
        let start = Instant::now();
        std::hint::black_box(model.predict_batch(row(i), 1)?);
        if i >= warmup {
            single.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    let batch_input: Vec<f32> = (0..batch).flat_map(|i| row(i).iter().copied()).collect();
    let mut batched = Vec::with_capacity(repetitions);
    for i in 0..warmup + repetitions {
        let start = Instant::now();
        std::hint::black_box(model.predict_batch(&batch_input, batch)?);
        if i >= warmup {
            batched.push(start.elapsed().as_secs_f64() * 1e3 / batch as f64);
        }
    }
    single.sort_by(f64::total_cmp);
    batched.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        model: name.to_string(),
        repetitions,
        warmup,
        median_ms: median_of(&single),
        p95_ms: percentile(&single, 0.95),
        batch,
        amortized_ms: median_of(&batched),
    })
}
