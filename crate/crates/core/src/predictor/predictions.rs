//! Per-sample class probabilities and their CSV interchange format.
//!
//! ```text
//! # model=MLP
//! # horizon=5
//! # seed=0
//! # dataset_hash=1a2b3c4d
//! index,p_up,p_stationary,p_down
//! 0,3.33333333e-1,3.33333333e-1,3.33333333e-1
//! ```
//!
//! Rows are written sorted by index with 9 significant digits. Readers accept
//! rows in any order and sort them.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::TrendLabel;

/// Tolerance on the probability sum of one row.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;
pub const PREDICTION_HEADER: &str = "index,p_up,p_stationary,p_down";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub index: u64,
    /// (up, stationary, down)
    pub probs: [f64; 3],
}

impl PredictionRow {
    /// Most probable class; the first maximum wins on exact ties.
    pub fn argmax(&self) -> TrendLabel {
        let mut best = 0;
        for i in 1..3 {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        TrendLabel::from_index(best).expect("index < 3")
    }
}

pub fn is_simplex(p: &[f64; 3]) -> bool {
    p.iter().all(|x| x.is_finite() && *x >= 0.0)
        && (p.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub model: String,
    pub horizon: usize,
    pub seed: u64,
    pub dataset_hash: Option<String>,
    /// Additional `# key=value` header lines, e.g. an ensemble's tie-break.
    pub extra: BTreeMap<String, String>,
    pub rows: Vec<PredictionRow>,
}

impl PredictionSet {
    pub fn new(
        model: impl Into<String>,
        horizon: usize,
        seed: u64,
        rows: Vec<PredictionRow>,
    ) -> Self {
        Self {
            model: model.into(),
            horizon,
            seed,
            dataset_hash: None,
            extra: BTreeMap::new(),
            rows,
        }
    }

    /// Builds a set from consecutive probability triplets indexed from zero.
    pub fn from_probs(
        model: impl Into<String>,
        horizon: usize,
        seed: u64,
        probs: Vec<[f64; 3]>,
    ) -> Self {
        let rows = probs
            .into_iter()
            .enumerate()
            .map(|(i, p)| PredictionRow {
                index: i as u64,
                probs: p,
            })
            .collect();
        Self::new(model, horizon, seed, rows)
    }

    /// One-hot rows for hard class decisions.
    pub fn from_labels(
        model: impl Into<String>,
        horizon: usize,
        seed: u64,
        labels: &[TrendLabel],
    ) -> Self {
        let probs = labels
            .iter()
            .map(|l| {
                let mut p = [0.0; 3];
                p[l.index()] = 1.0;
                p
            })
            .collect();
        Self::from_probs(model, horizon, seed, probs)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn argmax(&self) -> Vec<TrendLabel> {
        self.rows.iter().map(PredictionRow::argmax).collect()
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows.iter().map(|r| r.index)
    }

    /// Rows `start..end` as a new set with the same metadata.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            rows: self.rows[start..end].to_vec(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Error)]
pub enum PredictionFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing header: {0}")]
    MissingHeader(&'static str),
    #[error("line {line}: probabilities are not a simplex within 1e-6")]
    RowProbabilityInvalid { line: usize },
    #[error("duplicate sample index {index}")]
    DuplicateIndex { index: u64 },
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

fn fmt_prob(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn render_predictions(set: &PredictionSet) -> String {
    let mut rows = set.rows.clone();
    rows.sort_by_key(|r| r.index);
    let mut out = String::with_capacity(64 * rows.len() + 128);
    out.push_str(&format!(
        "# model={}\n# horizon={}\n# seed={}\n",
        set.model, set.horizon, set.seed
    ));
    if let Some(h) = &set.dataset_hash {
        out.push_str(&format!("# dataset_hash={h}\n"));
    }
    for (k, v) in &set.extra {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(PREDICTION_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.index,
            fmt_prob(r.probs[0]),
            fmt_prob(r.probs[1]),
            fmt_prob(r.probs[2])
        ));
    }
    out
}

pub fn write_predictions(set: &PredictionSet, path: &Path) -> Result<(), PredictionFileError> {
    fs::write(path, render_predictions(set)).map_err(|source| PredictionFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_predictions(text: &str) -> Result<PredictionSet, PredictionFileError> {
    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    let mut header_seen = false;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !header_seen {
            if line.replace(' ', "") != PREDICTION_HEADER {
                return Err(PredictionFileError::MissingHeader("column header"));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(PredictionFileError::MalformedRow {
                line: lineno,
                reason: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let index: u64 = cols[0]
            .parse()
            .map_err(|_| PredictionFileError::MalformedRow {
                line: lineno,
                reason: format!("bad index {:?}", cols[0]),
            })?;
        let mut probs = [0.0; 3];
        for (p, c) in probs.iter_mut().zip(&cols[1..]) {
            *p = c.parse().map_err(|_| PredictionFileError::MalformedRow {
                line: lineno,
                reason: format!("bad probability {c:?}"),
            })?;
        }
        if !is_simplex(&probs) {
            return Err(PredictionFileError::RowProbabilityInvalid { line: lineno });
        }
        rows.push(PredictionRow { index, probs });
    }
    if !header_seen {
        return Err(PredictionFileError::MissingHeader("column header"));
    }
    let model = meta
        .remove("model")
        .ok_or(PredictionFileError::MissingHeader("model"))?;
    let horizon = meta
        .remove("horizon")
        .ok_or(PredictionFileError::MissingHeader("horizon"))?
        .parse()
        .map_err(|_| PredictionFileError::MissingHeader("horizon"))?;
    let seed = match meta.remove("seed") {
        Some(s) => s
            .parse()
            .map_err(|_| PredictionFileError::MissingHeader("seed"))?,
        None => 0,
    };
    let dataset_hash = meta.remove("dataset_hash");
    rows.sort_by_key(|r| r.index);
    let mut seen = HashSet::with_capacity(rows.len());
    for r in &rows {
        if !seen.insert(r.index) {
            return Err(PredictionFileError::DuplicateIndex { index: r.index });
        }
    }
    Ok(PredictionSet {
        model,
        horizon,
        seed,
        dataset_hash,
        extra: meta,
        rows,
    })
}

pub fn read_predictions(path: &Path) -> Result<PredictionSet, PredictionFileError> {
    let text = fs::read_to_string(path).map_err(|source| PredictionFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_predictions(&text)
}
