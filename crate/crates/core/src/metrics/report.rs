use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{reliability_breakdown, ScoreInputs};

/// Observed F1 (percentage points) of one model per horizon and seed, plus
/// any claimed per-horizon F1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub observed: BTreeMap<usize, Vec<f64>>,
    pub claimed: BTreeMap<usize, f64>,
}

/// One line of the comparison table: claimed F1, measured F1 (mean and
/// population std over every horizon and seed), rank and reliability score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub claimed_f1: Option<f64>,
    pub measured_f1: f64,
    pub measured_std: f64,
    pub rank: usize,
    pub score: Option<f64>,
}

impl ModelSummary {
    pub fn table_row(&self) -> TableRow {
        let all: Vec<f64> = self.observed.values().flatten().copied().collect();
        let n = all.len().max(1) as f64;
        let mean = all.iter().sum::<f64>() / n;
        let std = (all.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        let claimed_f1 = (!self.claimed.is_empty())
            .then(|| self.claimed.values().sum::<f64>() / self.claimed.len() as f64);
        let score = reliability_breakdown(&ScoreInputs {
            claimed: self.claimed.clone(),
            observed: self.observed.clone(),
        })
        .ok()
        .map(|b| b.score);
        TableRow {
            model: self.model.clone(),
            claimed_f1,
            measured_f1: mean,
            measured_std: std,
            rank: 0,
            score,
        }
    }
}

/// Sorts rows by measured F1 (descending, ties by model name) and numbers
/// them from 1.
pub fn assign_ranks(rows: &mut [TableRow]) {
    rows.sort_by(|a, b| {
        b.measured_f1
            .total_cmp(&a.measured_f1)
            .then_with(|| a.model.cmp(&b.model))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
}

fn one_decimal(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.1}")).unwrap_or_default()
}

pub fn render_table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("model,claimed_f1,measured_f1,measured_std,rank,score\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.1},{:.1},{},{}\n",
            r.model,
            one_decimal(r.claimed_f1),
            r.measured_f1,
            r.measured_std,
            r.rank,
            one_decimal(r.score)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_row_and_ranks() {
        let a = ModelSummary {
            model: "A".into(),
            observed: [(1, vec![50.0, 52.0]), (5, vec![60.0, 62.0])]
                .into_iter()
                .collect(),
            claimed: [(1, 51.0), (5, 61.0)].into_iter().collect(),
        };
        let b = ModelSummary {
            model: "B".into(),
            observed: [(1, vec![70.0])].into_iter().collect(),
            claimed: BTreeMap::new(),
        };
        let mut rows = vec![a.table_row(), b.table_row()];
        assert_eq!(rows[0].measured_f1, 56.0);
        assert_eq!(rows[0].claimed_f1, Some(56.0));
        // differences are ±1 everywhere: A = 0, S = 1
        assert_eq!(rows[0].score, Some(99.0));
        assert_eq!(rows[1].score, None);
        assign_ranks(&mut rows);
        assert_eq!(rows[0].model, "B");
        assert_eq!((rows[0].rank, rows[1].rank), (1, 2));
        let csv = render_table_csv(&rows);
        assert_eq!(csv.lines().nth(1).unwrap(), "B,,70.0,0.0,1,");
        assert_eq!(csv.lines().nth(2).unwrap(), "A,56.0,56.0,5.1,2,99.0");
    }
}
