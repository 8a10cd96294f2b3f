//! Ternary trend labels from horizon-averaged mid-prices.
//!
//! The future average `a+(k, t)` is the mean of the next `k` mid-prices. A
//! sample is `Up` when `a+ > m(t)(1 + theta)`, `Down` when
//! `a+ < m(t)(1 - theta)` and `Stationary` otherwise; both band edges belong
//! to `Stationary`. Horizons count sampled records, not raw events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Prediction horizons used throughout the benchmark.
pub const DEFAULT_HORIZONS: [usize; 5] = [1, 2, 3, 5, 10];
/// Threshold shipped with FI-2010.
pub const DEFAULT_THETA: f64 = 0.002;

/// Lower and upper end of the threshold range searched by
/// [`balance_threshold`].
pub const THETA_SEARCH_RANGE: (f64, f64) = (1e-6, 0.05);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrendLabel {
    Up,
    Stationary,
    Down,
}

impl TrendLabel {
    pub const ALL: [TrendLabel; 3] = [TrendLabel::Up, TrendLabel::Stationary, TrendLabel::Down];

    /// 0 = up, 1 = stationary, 2 = down.
    pub fn index(self) -> usize {
        match self {
            TrendLabel::Up => 0,
            TrendLabel::Stationary => 1,
            TrendLabel::Down => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_fi2010_code(code: f64) -> Option<Self> {
        match code {
            c if c == 1.0 => Some(TrendLabel::Up),
            c if c == 2.0 => Some(TrendLabel::Stationary),
            c if c == 3.0 => Some(TrendLabel::Down),
            _ => None,
        }
    }

    pub fn fi2010_code(self) -> f64 {
        (self.index() + 1) as f64
    }

    pub fn letter(self) -> char {
        ['U', 'S', 'D'][self.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("need {k} future samples after index {t}, series has {len}")]
    HorizonOutOfBounds { t: usize, k: usize, len: usize },
    #[error("mid-price at index {t} is not positive")]
    NonPositiveMid { t: usize },
    #[error("invalid label parameters: {0}")]
    InvalidParams(&'static str),
    #[error("no labels to summarize")]
    EmptyInput,
    #[error("series is constant; every threshold labels everything stationary")]
    DegenerateSeries,
    #[error("series too short: need {needed} samples, found {found}")]
    SeriesTooShort { needed: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelParams<T> {
    pub horizon: usize,
    pub theta: T,
}

impl<T: Scalar> LabelParams<T> {
    pub fn new(horizon: usize, theta: T) -> Result<Self, LabelError> {
        if horizon == 0 {
            return Err(LabelError::InvalidParams("horizon must be at least 1"));
        }
        if !(theta > T::zero() && theta < T::one()) {
            return Err(LabelError::InvalidParams("theta must lie in (0, 1)"));
        }
        Ok(Self { horizon, theta })
    }
}

/// Mean of `mids[t+1..=t+k]`.
pub fn future_avg_mid<T: Scalar>(mids: &[T], t: usize, k: usize) -> Result<T, LabelError> {
    if k == 0 {
        return Err(LabelError::InvalidParams("horizon must be at least 1"));
    }
    if t + k >= mids.len() {
        return Err(LabelError::HorizonOutOfBounds {
            t,
            k,
            len: mids.len(),
        });
    }
    let sum: T = mids[t + 1..=t + k].iter().copied().sum();
    Ok(sum / T::from_usize_lossy(k))
}

fn classify<T: Scalar>(mid: T, avg: T, theta: T) -> TrendLabel {
    if avg > mid * (T::one() + theta) {
        TrendLabel::Up
    } else if avg < mid * (T::one() - theta) {
        TrendLabel::Down
    } else {
        TrendLabel::Stationary
    }
}

pub fn label<T: Scalar>(
    mids: &[T],
    t: usize,
    params: &LabelParams<T>,
) -> Result<TrendLabel, LabelError> {
    let avg = future_avg_mid(mids, t, params.horizon)?;
    let mid = mids[t];
    if !(mid > T::zero()) {
        return Err(LabelError::NonPositiveMid { t });
    }
    Ok(classify(mid, avg, params.theta))
}

/// Labels every index that has a full horizon ahead of it; trailing samples
/// are dropped.
pub fn label_series<T: Scalar>(
    mids: &[T],
    params: &LabelParams<T>,
) -> Result<Vec<TrendLabel>, LabelError> {
    let n = mids.len().saturating_sub(params.horizon);
    (0..n).map(|t| label(mids, t, params)).collect()
}

/// Class counts in (up, stationary, down) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: [usize; 3],
}

impl ClassDistribution {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Percentages in (up, stationary, down) order.
    pub fn shares(&self) -> [f64; 3] {
        let total = self.total().max(1) as f64;
        self.counts.map(|c| 100.0 * c as f64 / total)
    }

    /// Max share minus min share, in percentage points.
    pub fn imbalance(&self) -> f64 {
        let s = self.shares();
        let max = s.iter().copied().fold(f64::MIN, f64::max);
        let min = s.iter().copied().fold(f64::MAX, f64::min);
        max - min
    }
}

pub fn class_distribution(labels: &[TrendLabel]) -> Result<ClassDistribution, LabelError> {
    if labels.is_empty() {
        return Err(LabelError::EmptyInput);
    }
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    Ok(ClassDistribution { counts })
}

/// Finds the threshold that best balances the three classes at horizon `k`,
/// minimizing (max share − min share).
///
/// The class counts only change where `theta` crosses `|a+/m − 1|` of some
/// sample, so the objective is a step function. Every step inside the search
/// range is evaluated exactly and the midpoint of the first optimal step is
/// returned (ties resolve toward smaller thresholds).
pub fn balance_threshold<T: Scalar>(mids: &[T], k: usize) -> Result<T, LabelError> {
    balance_threshold_segments(&[mids], k)
}

/// [`balance_threshold`] over several independent series (e.g. trading
/// days); horizons never reach across series.
pub fn balance_threshold_segments<T: Scalar>(segments: &[&[T]], k: usize) -> Result<T, LabelError> {
    if k == 0 {
        return Err(LabelError::InvalidParams("horizon must be at least 1"));
    }
    let labelled: usize = segments.iter().map(|m| m.len().saturating_sub(k)).sum();
    if labelled < 3 * k {
        return Err(LabelError::SeriesTooShort {
            needed: 4 * k,
            found: segments.iter().map(|m| m.len()).sum(),
        });
    }
    let mut ups = Vec::new();
    let mut downs = Vec::new();
    for mids in segments {
        for t in 0..mids.len().saturating_sub(k) {
            let m = mids[t];
            if !(m > T::zero()) {
                return Err(LabelError::NonPositiveMid { t });
            }
            let r = (future_avg_mid(mids, t, k)? / m - T::one()).as_f64();
            if r > 0.0 {
                ups.push(r);
            } else if r < 0.0 {
                downs.push(-r);
            }
        }
    }
    if ups.is_empty() && downs.is_empty() {
        return Err(LabelError::DegenerateSeries);
    }
    ups.sort_by(f64::total_cmp);
    downs.sort_by(f64::total_cmp);

    let (lo, hi) = THETA_SEARCH_RANGE;
    let mut edges: Vec<f64> = ups
        .iter()
        .chain(downs.iter())
        .copied()
        .filter(|b| *b > lo && *b < hi)
        .collect();
    edges.push(lo);
    edges.push(hi);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    // samples with ratio strictly above theta
    let above = |sorted: &[f64], theta: f64| sorted.len() - sorted.partition_point(|r| *r <= theta);
    let mut best: Option<(usize, f64)> = None;
    for w in edges.windows(2) {
        let theta = 0.5 * (w[0] + w[1]);
        let u = above(&ups, theta);
        let d = above(&downs, theta);
        let s = labelled - u - d;
        let spread = u.max(s).max(d) - u.min(s).min(d);
        if best.is_none_or(|(b, _)| spread < b) {
            best = Some((spread, theta));
        }
    }
    let (_, theta) = best.expect("search range has at least one step");
    Ok(T::lit(theta))
}
