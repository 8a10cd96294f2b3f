//! Run configuration: a TOML file, then command-line overrides.
//!
//! ```toml
//! run_dir = "runs/demo"
//! horizons = [1, 2, 3, 5, 10]
//! theta = 0.002          # or "auto"
//! history = 100
//! stride = 10
//! seeds = [0, 1, 2, 3, 4]
//!
//! [source]
//! kind = "synthetic"     # "lobster" or "fi2010"
//! stocks = ["SYNA", "SYNB"]
//!
//! [claimed.MLP]
//! 5 = 49.0
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lobbench_core::backtest::DEFAULT_CAPITAL;
use lobbench_core::dataset::{SplitSpec, DEFAULT_HISTORY, DEFAULT_STRIDE};
use lobbench_core::labeling::{DEFAULT_HORIZONS, DEFAULT_THETA};
use lobbench_core::lob::DEFAULT_LEVELS;
use lobbench_core::predictor::{OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Fixed(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Theta {
    pub const AUTO: Theta = Theta::Auto(AutoTag::Auto);

    pub fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::AUTO);
        }
        s.parse::<f64>()
            .ok()
            .filter(|t| t.is_finite() && *t >= 0.0)
            .map(Theta::Fixed)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "theta must be a number >= 0 or \"auto\", got {s:?}"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceConfig {
    /// Generated order flow, one stream per stock and day.
    Synthetic {
        #[serde(default = "default_stocks")]
        stocks: Vec<String>,
        #[serde(default = "default_days")]
        days: usize,
        #[serde(default = "default_events")]
        events_per_day: u64,
        #[serde(default)]
        seed: u64,
    },
    /// A directory of LOBSTER file pairs named
    /// `<SYMBOL>_<YYYY-MM-DD>_<start>_<end>_{message,orderbook}_<L>.csv`.
    Lobster { dir: PathBuf },
    /// The FI-2010 normalized text files, used with their shipped labels.
    Fi2010 {
        train: PathBuf,
        test: PathBuf,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
}

fn default_stocks() -> Vec<String> {
    vec!["SYNA".into(), "SYNB".into()]
}

fn default_days() -> usize {
    10
}

fn default_events() -> u64 {
    10_000
}

fn default_val_fraction() -> f64 {
    0.2
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Synthetic {
            stocks: default_stocks(),
            days: default_days(),
            events_per_day: default_events(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            optimizer: t.optimizer,
            hidden: vec![256],
            leaky_slope: 0.01,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            optimizer: self.optimizer,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScope {
    /// One weight per model and horizon.
    PerHorizon,
    /// One weight per model: its mean F1 over the horizons.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    /// Externally trained models whose prediction files join the ensembles.
    pub external: Vec<String>,
    /// Where external prediction files live; defaults to the run's
    /// `predictions` directory.
    pub predictions_dir: Option<PathBuf>,
    pub weights: WeightScope,
    pub meta_hidden: usize,
    pub meta_learning_rate: f64,
    pub meta_batch_size: usize,
    pub meta_epochs: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let m = TrainConfig::meta();
        Self {
            external: Vec::new(),
            predictions_dir: None,
            weights: WeightScope::PerHorizon,
            meta_hidden: lobbench_core::ensemble::DEFAULT_META_HIDDEN,
            meta_learning_rate: m.learning_rate,
            meta_batch_size: m.batch_size,
            meta_epochs: m.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySection {
    pub repetitions: usize,
    pub warmup: usize,
    pub batch: usize,
}

impl Default for LatencySection {
    fn default() -> Self {
        Self {
            repetitions: 100,
            warmup: 10,
            batch: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    pub horizons: Vec<usize>,
    pub theta: Theta,
    pub history: usize,
    pub stride: usize,
    pub levels: usize,
    /// Days for train, validation and test.
    pub split: [usize; 3],
    pub seeds: Vec<u64>,
    pub capital: f64,
    pub source: SourceConfig,
    pub train: TrainSection,
    pub ensemble: EnsembleSection,
    pub latency: LatencySection,
    /// Published F1 (percentage points) per model and horizon.
    pub claimed: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_dir: PathBuf::from("run"),
            horizons: DEFAULT_HORIZONS.to_vec(),
            theta: Theta::Fixed(DEFAULT_THETA),
            history: DEFAULT_HISTORY,
            stride: DEFAULT_STRIDE,
            levels: DEFAULT_LEVELS,
            split: [6, 2, 2],
            seeds: vec![0, 1, 2, 3, 4],
            capital: DEFAULT_CAPITAL,
            source: SourceConfig::default(),
            train: TrainSection::default(),
            ensemble: EnsembleSection::default(),
            latency: LatencySection::default(),
            claimed: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("horizons must be a non-empty list of positive integers");
        }
        let mut sorted = self.horizons.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.horizons.len() {
            return bad("horizons must not repeat");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.history == 0 || self.stride == 0 || self.levels == 0 {
            return bad("history, stride and levels must be positive");
        }
        if !(self.capital > 0.0 && self.capital.is_finite()) {
            return bad("capital must be positive");
        }
        if self.latency.repetitions < 30 {
            return bad("latency repetitions must be at least 30");
        }
        if self.latency.batch == 0 {
            return bad("latency batch must be positive");
        }
        if self.train.hidden.is_empty() || self.train.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        self.train.train_config(0).validate()?;
        SplitSpec::from_counts(self.split[0], self.split[1], self.split[2]).validate()?;
        match &self.source {
            SourceConfig::Synthetic {
                stocks,
                days,
                events_per_day,
                ..
            } => {
                if stocks.is_empty() || *events_per_day == 0 {
                    return bad("synthetic source needs stocks and events");
                }
                if *days < self.split.iter().sum::<usize>() {
                    return bad("synthetic source has fewer days than the split needs");
                }
            }
            SourceConfig::Fi2010 { val_fraction, .. } => {
                if !(0.0..1.0).contains(val_fraction) {
                    return bad("val_fraction must lie in [0, 1)");
                }
                if let Some(k) = self
                    .horizons
                    .iter()
                    .find(|k| !lobbench_core::ingest::FI2010_HORIZONS.contains(k))
                {
                    return Err(CliError::Config(format!(
                        "FI-2010 ships no labels for horizon {k}"
                    )));
                }
            }
            SourceConfig::Lobster { .. } => {}
        }
        self.claimed_f1()?;
        Ok(())
    }

    /// Claimed F1 keyed by model, then horizon.
    pub fn claimed_f1(&self) -> Result<BTreeMap<String, BTreeMap<usize, f64>>> {
        self.claimed
            .iter()
            .map(|(model, per_k)| {
                let parsed = per_k
                    .iter()
                    .map(|(k, v)| {
                        k.parse::<usize>().map(|k| (k, *v)).map_err(|_| {
                            CliError::Config(format!("claimed.{model}: bad horizon {k:?}"))
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok((model.clone(), parsed))
            })
            .collect()
    }
}

/// Parses `1,2,5`.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim())
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<T>()
                .map_err(|_| CliError::Config(format!("bad list element {x:?} in {s:?}")))
        })
        .collect()
}
