//! Limit order book experimentation toolkit: book reconstruction, trend
//! labelling, dataset construction, a baseline MLP, ensembles, evaluation
//! metrics and a signal backtester.
//!
//! Numeric code is generic over [`Scalar`] (`f32`/`f64`) and, for the
//! backtester, over [`PriceValue`] so exact rationals can be used. The
//! aliases below fix the common concrete choices.

pub mod backtest;
pub mod dataset;
pub mod ensemble;
pub mod ingest;
pub mod labeling;
pub mod lob;
pub mod metrics;
pub mod predictor;
pub mod scalar;

pub use scalar::{PriceValue, Scalar};

/// Baseline classifier in single precision (training and inference).
pub type Mlp32 = predictor::Mlp<f32>;
/// Double-precision classifier (gradient checks, meta models).
pub type Mlp64 = predictor::Mlp<f64>;
pub type LabeledData32 = predictor::LabeledData<f32>;
pub type LabeledData64 = predictor::LabeledData<f64>;
pub type LabelParams64 = labeling::LabelParams<f64>;
pub type NormalizationStats64 = dataset::NormalizationStats<f64>;
pub type ScoreInputs64 = metrics::ScoreInputs<f64>;
pub type OhlcBar64 = backtest::OhlcBar<f64>;
pub type EquityCurve64 = backtest::EquityCurve<f64>;
