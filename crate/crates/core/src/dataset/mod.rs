//! Model-ready datasets: day splits, z-score normalization, sliding-window
//! observations, multi-stock stacking and the LOBD file format.

mod file;
mod normalize;
mod split;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{
    decode_dataset, encode_dataset, read_dataset, write_dataset, FileHeader, OriginRun,
    FORMAT_VERSION, MAGIC,
};
pub use normalize::{apply_zscore, fit_normalization, NormalizationStats};
pub use split::{split_by_days, split_train_val_by_sample, Segment, Split, SplitSpec, Splits};

use crate::ingest::Fi2010Set;
use crate::labeling::{label, LabelError, LabelParams, TrendLabel};
use crate::lob::{mid_price, LobRecord};
use crate::scalar::Scalar;

/// Default number of records in an observation window.
pub const DEFAULT_HISTORY: usize = 100;
/// Default sampling stride (one record kept every `stride` events).
pub const DEFAULT_STRIDE: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("need {needed} days, found {found}")]
    InsufficientDays { needed: usize, found: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("{0} values are constant; cannot normalize")]
    ZeroVariance(&'static str),
    #[error("no records to fit")]
    EmptyInput,
    #[error("series too short: need {needed} records, found {found}")]
    SeriesTooShort { needed: usize, found: usize },
    #[error("incompatible bundles: {0}")]
    IncompatibleParams(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("not a LOBD file")]
    BadMagic,
    #[error("unsupported LOBD version {0}")]
    VersionUnsupported(u16),
    #[error("file is truncated")]
    TruncatedPayload,
    #[error("checksum mismatch: stored {stored:08x}, computed {actual:08x}")]
    ChecksumMismatch { stored: u32, actual: u32 },
    #[error("malformed metadata: {0}")]
    MalformedMetadata(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// Where an observation came from: stock position in the metadata stock
/// list, day position, and sample index of the window's last record within
/// the sampled day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub stock: u32,
    pub day: u32,
    pub index: u64,
}

/// An `h x 4L` window (row-major, oldest record first) and its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketObservation {
    pub window: Vec<f32>,
    pub label: TrendLabel,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Recomputed,
    /// Labels taken verbatim from the source files.
    Shipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub stats: NormalizationStats<f64>,
    pub fitted_on: String,
    pub std_convention: String,
}

impl NormalizationRecord {
    pub fn train_val(stats: NormalizationStats<f64>) -> Self {
        Self {
            stats,
            fitted_on: "train+val".into(),
            std_convention: "population".into(),
        }
    }
}

/// Dates per split, in chronological order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDays {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub horizon: usize,
    pub theta: f64,
    pub history: usize,
    pub stride: usize,
    pub levels: usize,
    pub normalization: Option<NormalizationRecord>,
    pub stocks: Vec<String>,
    pub split_days: SplitDays,
    pub label_source: LabelSource,
}

impl DatasetMetadata {
    pub fn window_len(&self) -> usize {
        self.history * 4 * self.levels
    }

    fn compatible(&self, other: &Self) -> Result<(), DatasetError> {
        let checks = [
            ("horizon", self.horizon == other.horizon),
            ("theta", self.theta.to_bits() == other.theta.to_bits()),
            ("history", self.history == other.history),
            ("stride", self.stride == other.stride),
            ("levels", self.levels == other.levels),
            ("normalization", self.normalization == other.normalization),
            ("label source", self.label_source == other.label_source),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(DatasetError::IncompatibleParams(format!("{name} differs"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub metadata: DatasetMetadata,
    pub train: Vec<MarketObservation>,
    pub val: Vec<MarketObservation>,
    pub test: Vec<MarketObservation>,
}

impl DatasetBundle {
    pub fn split(&self, split: Split) -> &[MarketObservation] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let width = self.metadata.window_len();
        for s in Split::ALL {
            let obs = self.split(s);
            if obs.is_empty() {
                return Err(DatasetError::EmptySplit(s.name()));
            }
            for o in obs {
                if o.window.len() != width {
                    return Err(DatasetError::InvalidObservation(format!(
                        "window of {} values, expected {width}",
                        o.window.len()
                    )));
                }
                if o.origin.stock as usize >= self.metadata.stocks.len().max(1) {
                    return Err(DatasetError::InvalidObservation(format!(
                        "unknown stock {}",
                        o.origin.stock
                    )));
                }
                if o.window.iter().any(|v| !v.is_finite()) {
                    return Err(DatasetError::InvalidObservation("non-finite value".into()));
                }
            }
        }
        Ok(())
    }

    /// Class counts of one split, optionally restricted to one stock.
    pub fn class_counts(&self, split: Split, stock: Option<u32>) -> [usize; 3] {
        let mut counts = [0; 3];
        for o in self
            .split(split)
            .iter()
            .filter(|o| stock.is_none_or(|s| o.origin.stock == s))
        {
            counts[o.label.index()] += 1;
        }
        counts
    }

    pub fn labels(&self, split: Split) -> Vec<TrendLabel> {
        self.split(split).iter().map(|o| o.label).collect()
    }
}

fn window_at<T: Scalar>(rows: &[Vec<T>], t: usize, history: usize) -> Vec<f32> {
    rows[t + 1 - history..=t]
        .iter()
        .flat_map(|r| r.iter().map(|v| v.to_f32().unwrap_or(f32::NAN)))
        .collect()
}

/// Cuts one contiguous series into windows of `history` rows ending at every
/// `t` that has a full history and a full horizon; the label at `t` is
/// computed from the raw `mids`. Yields `n - history - k + 1` observations.
/// `origin.index` is the day position of `rows[0]`.
pub fn make_observations<T: Scalar>(
    rows: &[Vec<T>],
    mids: &[T],
    history: usize,
    params: &LabelParams<T>,
    origin: Origin,
) -> Result<Vec<MarketObservation>, DatasetError> {
    if rows.len() != mids.len() {
        return Err(DatasetError::InvalidObservation(
            "rows and mids differ in length".into(),
        ));
    }
    if history == 0 {
        return Err(DatasetError::InvalidObservation(
            "history must be positive".into(),
        ));
    }
    let needed = history + params.horizon;
    if rows.len() < needed {
        return Err(DatasetError::SeriesTooShort {
            needed,
            found: rows.len(),
        });
    }
    (history - 1..rows.len() - params.horizon)
        .map(|t| {
            Ok(MarketObservation {
                window: window_at(rows, t, history),
                label: label(mids, t, params)?,
                origin: Origin {
                    index: origin.index + t as u64,
                    ..origin
                },
            })
        })
        .collect()
}

/// Like [`make_observations`] but with one supplied label per row. The
/// horizon only trims the tail.
pub fn observations_with_labels<T: Scalar>(
    rows: &[Vec<T>],
    labels: &[TrendLabel],
    history: usize,
    horizon: usize,
    origin: Origin,
) -> Result<Vec<MarketObservation>, DatasetError> {
    let needed = history + horizon;
    if rows.len() != labels.len() || history == 0 {
        return Err(DatasetError::InvalidObservation(
            "rows and labels differ in length".into(),
        ));
    }
    if rows.len() < needed {
        return Err(DatasetError::SeriesTooShort {
            needed,
            found: rows.len(),
        });
    }
    Ok((history - 1..rows.len() - horizon)
        .map(|t| MarketObservation {
            window: window_at(rows, t, history),
            label: labels[t],
            origin: Origin {
                index: origin.index + t as u64,
                ..origin
            },
        })
        .collect())
}

/// Concatenates per-stock bundles split by split in the given order.
pub fn stack_stocks(bundles: Vec<DatasetBundle>) -> Result<DatasetBundle, DatasetError> {
    let mut iter = bundles.into_iter();
    let Some(mut out) = iter.next() else {
        return Err(DatasetError::EmptyInput);
    };
    for b in iter {
        out.metadata.compatible(&b.metadata)?;
        let shift = out.metadata.stocks.len() as u32;
        let remap = |mut o: MarketObservation| {
            o.origin.stock += shift;
            o
        };
        out.train.extend(b.train.into_iter().map(remap));
        out.val.extend(b.val.into_iter().map(remap));
        out.test.extend(b.test.into_iter().map(remap));
        out.metadata.stocks.extend(b.metadata.stocks);
    }
    Ok(out)
}

/// Sampled, complete records of one trading day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRecords {
    pub date: String,
    pub records: Vec<LobRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StockDays {
    pub symbol: String,
    pub days: Vec<DayRecords>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitMode {
    Days(SplitSpec),
    /// First `train_val_days` days split by sample into train and the last
    /// `val_fraction` as validation; the next `test_days` days are test.
    TrainValBySample {
        train_val_days: usize,
        test_days: usize,
        val_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    pub horizon: usize,
    pub theta: f64,
    pub history: usize,
    pub stride: usize,
    pub levels: usize,
    pub split: SplitMode,
}

impl BuildParams {
    pub fn new(horizon: usize, theta: f64, levels: usize) -> Self {
        Self {
            horizon,
            theta,
            history: DEFAULT_HISTORY,
            stride: DEFAULT_STRIDE,
            levels,
            split: SplitMode::Days(SplitSpec::six_two_two()),
        }
    }
}

fn split_stock<R>(days: Vec<Vec<R>>, mode: &SplitMode) -> Result<Splits<R>, DatasetError> {
    match mode {
        SplitMode::Days(spec) => split_by_days(days, spec),
        SplitMode::TrainValBySample {
            train_val_days,
            test_days,
            val_fraction,
        } => split_train_val_by_sample(days, *train_val_days, *test_days, *val_fraction),
    }
}

fn dates_of(stock: &StockDays, splits: &Splits<LobRecord>) -> SplitDays {
    let names = |segs: &[Segment<LobRecord>]| {
        let mut v: Vec<String> = segs
            .iter()
            .map(|s| stock.days[s.day].date.clone())
            .collect();
        v.dedup();
        v
    };
    SplitDays {
        train: names(&splits.train),
        val: names(&splits.val),
        test: names(&splits.test),
    }
}

fn segment_observations(
    seg: &Segment<LobRecord>,
    stock: u32,
    stats: &NormalizationStats<f64>,
    history: usize,
    params: &LabelParams<f64>,
) -> Result<Vec<MarketObservation>, DatasetError> {
    let rows = apply_zscore(&seg.items, stats);
    let mids = seg
        .items
        .iter()
        .map(mid_price::<f64>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| DatasetError::InvalidObservation(e.to_string()))?;
    let origin = Origin {
        stock,
        day: seg.day as u32,
        index: seg.offset as u64,
    };
    make_observations(&rows, &mids, history, params, origin)
}

/// Builds one stacked bundle from several stocks. Normalization statistics
/// are fitted on the union of every stock's train and validation records and
/// applied to all splits; labels come from raw mid-prices.
pub fn build_dataset(
    stocks: &[StockDays],
    params: &BuildParams,
) -> Result<DatasetBundle, DatasetError> {
    if stocks.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let label_params = LabelParams::new(params.horizon, params.theta)?;
    let splits: Vec<Splits<LobRecord>> = stocks
        .iter()
        .map(|s| {
            split_stock(
                s.days.iter().map(|d| d.records.clone()).collect(),
                &params.split,
            )
        })
        .collect::<Result<_, _>>()?;
    for s in stocks {
        for d in &s.days {
            if let Some(r) = d
                .records
                .iter()
                .find(|r| r.levels != params.levels || !r.complete)
            {
                return Err(DatasetError::InvalidObservation(format!(
                    "{} {}: record {} has {} levels or is incomplete",
                    s.symbol, d.date, r.index, r.levels
                )));
            }
        }
    }
    let fit_set = splits
        .iter()
        .flat_map(|s| s.train.iter().chain(s.val.iter()))
        .flat_map(|seg| seg.items.iter());
    let stats: NormalizationStats<f64> = fit_normalization(fit_set)?;

    let bundles = stocks
        .par_iter()
        .zip(splits.par_iter())
        .map(|(stock, sp)| {
            let build =
                |segs: &[Segment<LobRecord>]| -> Result<Vec<MarketObservation>, DatasetError> {
                    let mut out = Vec::new();
                    for seg in segs {
                        out.extend(segment_observations(
                            seg,
                            0,
                            &stats,
                            params.history,
                            &label_params,
                        )?);
                    }
                    Ok(out)
                };
            Ok(DatasetBundle {
                metadata: DatasetMetadata {
                    horizon: params.horizon,
                    theta: params.theta,
                    history: params.history,
                    stride: params.stride,
                    levels: params.levels,
                    normalization: Some(NormalizationRecord::train_val(stats)),
                    stocks: vec![stock.symbol.clone()],
                    split_days: dates_of(stock, sp),
                    label_source: LabelSource::Recomputed,
                },
                train: build(&sp.train)?,
                val: build(&sp.val)?,
                test: build(&sp.test)?,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    stack_stocks(bundles)
}

/// Bundle from FI-2010 files used as shipped: features already normalized,
/// labels taken from the file. The training file is cut by sample into
/// train and the last `val_fraction` as validation.
pub fn build_fi2010_dataset(
    train: &Fi2010Set,
    test: &Fi2010Set,
    horizon: usize,
    history: usize,
    val_fraction: f64,
) -> Result<DatasetBundle, DatasetError> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(DatasetError::InvalidSplit(
            "validation fraction must lie in [0, 1)".into(),
        ));
    }
    let rows_of = |set: &Fi2010Set| {
        (0..set.len())
            .map(|i| set.sample(i).to_vec())
            .collect::<Vec<_>>()
    };
    let labels_of = |set: &Fi2010Set| {
        set.labels_at(horizon).ok_or_else(|| {
            DatasetError::InvalidObservation(format!("no shipped labels for horizon {horizon}"))
        })
    };
    let train_rows = rows_of(train);
    let train_labels = labels_of(train)?;
    let cut = train_rows.len() - (val_fraction * train_rows.len() as f64).floor() as usize;
    let origin = |day: u32, index: usize| Origin {
        stock: 0,
        day,
        index: index as u64,
    };
    let test_rows = rows_of(test);
    let test_labels = labels_of(test)?;
    Ok(DatasetBundle {
        metadata: DatasetMetadata {
            horizon,
            theta: crate::labeling::DEFAULT_THETA,
            history,
            stride: 1,
            levels: crate::ingest::FI2010_LOB_ROWS / 4,
            normalization: None,
            stocks: vec!["FI2010".into()],
            split_days: SplitDays {
                train: vec!["train".into()],
                val: vec!["train".into()],
                test: vec!["test".into()],
            },
            label_source: LabelSource::Shipped,
        },
        train: observations_with_labels(
            &train_rows[..cut],
            &train_labels[..cut],
            history,
            0,
            origin(0, 0),
        )?,
        val: observations_with_labels(
            &train_rows[cut..],
            &train_labels[cut..],
            history,
            0,
            origin(0, cut),
        )?,
        test: observations_with_labels(&test_rows, &test_labels, history, 0, origin(1, 0))?,
    })
}
