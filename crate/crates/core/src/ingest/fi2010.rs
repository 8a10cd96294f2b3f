//! FI-2010 benchmark matrices.
//!
//! Each file is a 149-row text matrix with one sample per column: rows 0..40
//! are the raw LOB values (ask price, ask volume, bid price, bid volume per
//! level), rows 40..144 hand-crafted features we do not use, rows 144..149 the
//! labels for horizons 1, 2, 3, 5 and 10 coded 1 = up, 2 = stationary,
//! 3 = down.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::labeling::TrendLabel;

pub const FI2010_ROWS: usize = 149;
pub const FI2010_LOB_ROWS: usize = 40;
pub const FI2010_LABEL_ROW: usize = 144;
pub const FI2010_HORIZONS: [usize; 5] = [1, 2, 3, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fi2010Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fi2010Set {
    /// Row-major samples × 40.
    pub features: Vec<f64>,
    pub labels: Vec<[TrendLabel; 5]>,
    pub split: Fi2010Split,
}

impl Fi2010Set {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * FI2010_LOB_ROWS..(i + 1) * FI2010_LOB_ROWS]
    }

    /// Labels for one of [`FI2010_HORIZONS`].
    pub fn labels_at(&self, horizon: usize) -> Option<Vec<TrendLabel>> {
        let col = FI2010_HORIZONS.iter().position(|&k| k == horizon)?;
        Some(self.labels.iter().map(|l| l[col]).collect())
    }

    /// Level-1 mid of each sample in whatever units the file carries.
    pub fn mids(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let s = self.sample(i);
                (s[0] + s[2]) / 2.0
            })
            .collect()
    }
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>, IngestError> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|_| IngestError::MalformedRow {
                file: super::SourceFile::Fi2010,
                line: lineno,
                reason: format!("bad number {s:?}"),
            })
        })
        .collect()
}

pub fn parse_fi2010(path: &Path, split: Fi2010Split) -> Result<Fi2010Set, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(FI2010_ROWS);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if rows.len() == FI2010_ROWS {
            return Err(IngestError::UnexpectedRowCount {
                found: FI2010_ROWS + 1,
            });
        }
        // hand-crafted rows are never used; only check they are present
        if (FI2010_LOB_ROWS..FI2010_LABEL_ROW).contains(&rows.len()) {
            rows.push(Vec::new());
            continue;
        }
        rows.push(parse_row(&line, i + 1)?);
    }
    if rows.len() != FI2010_ROWS {
        return Err(IngestError::UnexpectedRowCount { found: rows.len() });
    }
    let n = rows[0].len();
    for (r, row) in rows.iter().enumerate() {
        let used = !(FI2010_LOB_ROWS..FI2010_LABEL_ROW).contains(&r);
        if used && row.len() != n {
            return Err(IngestError::RaggedMatrix {
                row: r,
                expected: n,
                found: row.len(),
            });
        }
    }
    let mut features = vec![0.0; n * FI2010_LOB_ROWS];
    for (r, row) in rows.iter().take(FI2010_LOB_ROWS).enumerate() {
        for (c, v) in row.iter().enumerate() {
            features[c * FI2010_LOB_ROWS + r] = *v;
        }
    }
    let mut labels = vec![[TrendLabel::Stationary; 5]; n];
    for h in 0..5 {
        for (c, v) in rows[FI2010_LABEL_ROW + h].iter().enumerate() {
            labels[c][h] =
                TrendLabel::from_fi2010_code(*v).ok_or(IngestError::LabelOutOfRange {
                    row: FI2010_LABEL_ROW + h,
                    column: c,
                    value: *v,
                })?;
        }
    }
    Ok(Fi2010Set {
        features,
        labels,
        split,
    })
}

/// Debug writer producing the same 149-row layout; unused feature rows are
/// written as zeros.
pub fn write_fi2010(set: &Fi2010Set, path: &Path) -> Result<(), IngestError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| IngestError::io(path, e))?);
    let n = set.len();
    let mut line = String::new();
    for r in 0..FI2010_ROWS {
        line.clear();
        for c in 0..n {
            if c > 0 {
                line.push(' ');
            }
            let v = if r < FI2010_LOB_ROWS {
                set.features[c * FI2010_LOB_ROWS + r]
            } else if r >= FI2010_LABEL_ROW {
                set.labels[c][r - FI2010_LABEL_ROW].fi2010_code()
            } else {
                0.0
            };
            line.push_str(&format!("{v:e}"));
        }
        writeln!(w, "{line}").map_err(|e| IngestError::io(path, e))?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_matrix(n: usize, label_code: &str) -> String {
        let mut s = String::new();
        for r in 0..FI2010_ROWS {
            let row: Vec<String> = (0..n)
                .map(|c| {
                    if r >= FI2010_LABEL_ROW {
                        label_code.to_string()
                    } else {
                        format!("{}", (r * 10 + c) as f64 * 0.5)
                    }
                })
                .collect();
            s.push_str(&row.join("  "));
            s.push('\n');
        }
        s
    }

    #[test]
    fn toy_all_stationary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("toy.txt");
        std::fs::write(&p, toy_matrix(5, "2.0000000e+00")).unwrap();
        let set = parse_fi2010(&p, Fi2010Split::Train).unwrap();
        assert_eq!(set.len(), 5);
        assert!(set
            .labels
            .iter()
            .all(|l| l.iter().all(|x| *x == TrendLabel::Stationary)));
        // sample 3, row 2 → (2*10+3)*0.5
        assert_eq!(set.sample(3)[2], 11.5);
        assert_eq!(set.labels_at(5).unwrap().len(), 5);
        assert!(set.labels_at(4).is_none());
    }

    #[test]
    fn wrong_row_count_and_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("short.txt");
        let body: String = toy_matrix(3, "1")
            .lines()
            .take(100)
            .map(|l| format!("{l}\n"))
            .collect();
        std::fs::write(&p, body).unwrap();
        assert!(matches!(
            parse_fi2010(&p, Fi2010Split::Test),
            Err(IngestError::UnexpectedRowCount { found: 100 })
        ));
        std::fs::write(&p, toy_matrix(3, "4")).unwrap();
        assert!(matches!(
            parse_fi2010(&p, Fi2010Split::Test),
            Err(IngestError::LabelOutOfRange { row: 144, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn parse_write_parse_is_fixed_point(
            values in proptest::collection::vec(-1e6f64..1e6, 40 * 4),
            codes in proptest::collection::vec(1u8..=3, 5 * 4),
        ) {
            let labels = (0..4)
                .map(|c| {
                    let mut l = [TrendLabel::Stationary; 5];
                    for h in 0..5 {
                        l[h] = TrendLabel::from_fi2010_code(f64::from(codes[c * 5 + h])).unwrap();
                    }
                    l
                })
                .collect();
            let set = Fi2010Set { features: values, labels, split: Fi2010Split::Train };
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("a.txt");
            write_fi2010(&set, &p).unwrap();
            let once = parse_fi2010(&p, Fi2010Split::Train).unwrap();
            prop_assert_eq!(&once, &set);
            let q = dir.path().join("b.txt");
            write_fi2010(&once, &q).unwrap();
            prop_assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
        }
    }
}
