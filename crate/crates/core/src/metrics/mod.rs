//! Classification metrics, model agreement and the reliability score.

mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::TrendLabel;
use crate::predictor::PredictionSet;
use crate::scalar::Scalar;

pub use report::{assign_ranks, render_table_csv, ModelSummary, TableRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("prediction sets are not aligned: {0}")]
    MisalignedSets(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no declared horizons")]
    NoDeclaredHorizons,
    #[error("horizon {0} has a claimed score but no observations")]
    MissingObservations(usize),
}

/// 3×3 counts, rows = true class, columns = predicted class, both in
/// (up, stationary, down) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_labels(
        truth: &[TrendLabel],
        predicted: &[TrendLabel],
    ) -> Result<Self, MetricsError> {
        if truth.len() != predicted.len() {
            return Err(MetricsError::MisalignedSets(format!(
                "{} labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(predicted) {
            cm.counts[t.index()][p.index()] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..3).map(|i| self.counts[i][j]).sum()
    }
}

/// Tallies `(true, argmax)` pairs; `labels[i]` is the truth for `preds.rows[i]`.
pub fn confusion(
    preds: &PredictionSet,
    labels: &[TrendLabel],
) -> Result<ConfusionMatrix, MetricsError> {
    ConfusionMatrix::from_labels(labels, &preds.argmax())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: [ClassMetrics; 3],
    /// Set when some precision or recall had a zero denominator and was
    /// defined as 0.
    pub zero_division: bool,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Unweighted macro averages over the three classes.
pub fn macro_metrics(cm: &ConfusionMatrix) -> Result<MacroMetrics, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut zero_division = false;
    let mut per_class = [ClassMetrics::default(); 3];
    for (c, m) in per_class.iter_mut().enumerate() {
        let tp = cm.counts[c][c];
        let precision = ratio(tp, cm.col_sum(c), &mut zero_division);
        let recall = ratio(tp, cm.row_sum(c), &mut zero_division);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        *m = ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.row_sum(c),
        };
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
    Ok(MacroMetrics {
        accuracy: cm.trace() as f64 / total as f64,
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        per_class,
        zero_division,
    })
}

/// Macro F1 of hard predictions.
pub fn macro_f1(truth: &[TrendLabel], predicted: &[TrendLabel]) -> Result<f64, MetricsError> {
    Ok(macro_metrics(&ConfusionMatrix::from_labels(truth, predicted)?)?.f1)
}

pub(crate) fn check_aligned(sets: &[PredictionSet]) -> Result<(), MetricsError> {
    let Some(first) = sets.first() else {
        return Err(MetricsError::MisalignedSets("no prediction sets".into()));
    };
    for s in &sets[1..] {
        if s.len() != first.len() {
            return Err(MetricsError::MisalignedSets(format!(
                "{} has {} rows, {} has {}",
                first.model,
                first.len(),
                s.model,
                s.len()
            )));
        }
        if s.indices().ne(first.indices()) {
            return Err(MetricsError::MisalignedSets(format!(
                "{} and {} cover different sample indices",
                first.model, s.model
            )));
        }
    }
    Ok(())
}

/// `m[i][j]` is the fraction of samples on which models `i` and `j` predict
/// the same class.
pub fn agreement_matrix(sets: &[PredictionSet]) -> Result<Vec<Vec<f64>>, MetricsError> {
    check_aligned(sets)?;
    let n = sets[0].len();
    let votes: Vec<Vec<TrendLabel>> = sets.iter().map(PredictionSet::argmax).collect();
    let m = sets.len();
    let mut out = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let same = votes[i]
                .iter()
                .zip(&votes[j])
                .filter(|(a, b)| a == b)
                .count();
            let frac = if n == 0 { 1.0 } else { same as f64 / n as f64 };
            out[i][j] = frac;
            out[j][i] = frac;
        }
    }
    Ok(out)
}

/// Claimed F1 per declared horizon and observed F1 per (horizon, seed), all
/// in percentage points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreInputs<T> {
    pub claimed: BTreeMap<usize, T>,
    pub observed: BTreeMap<usize, Vec<T>>,
}

/// Summary statistics behind a reliability score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown<T> {
    /// Mean of observed − claimed.
    pub mean_difference: T,
    /// Population standard deviation of observed − claimed.
    pub std_difference: T,
    pub score: T,
    pub cells: usize,
}

/// `100 − (|A| + S)` where `A` and `S` are the mean and population standard
/// deviation of observed − claimed F1 over every declared horizon and seed.
pub fn reliability_breakdown<T: Scalar>(
    inputs: &ScoreInputs<T>,
) -> Result<ScoreBreakdown<T>, MetricsError> {
    if inputs.claimed.is_empty() {
        return Err(MetricsError::NoDeclaredHorizons);
    }
    let mut diffs = Vec::new();
    for (k, claim) in &inputs.claimed {
        let seeds = inputs
            .observed
            .get(k)
            .filter(|v| !v.is_empty())
            .ok_or(MetricsError::MissingObservations(*k))?;
        diffs.extend(seeds.iter().map(|o| *o - *claim));
    }
    let n = T::from_usize_lossy(diffs.len());
    let mean = diffs.iter().copied().sum::<T>() / n;
    let var = diffs.iter().map(|d| (*d - mean) * (*d - mean)).sum::<T>() / n;
    let std = var.sqrt();
    Ok(ScoreBreakdown {
        mean_difference: mean,
        std_difference: std,
        score: T::lit(100.0) - (mean.abs() + std),
        cells: diffs.len(),
    })
}

pub fn reliability_score<T: Scalar>(inputs: &ScoreInputs<T>) -> Result<T, MetricsError> {
    reliability_breakdown(inputs).map(|b| b.score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use TrendLabel::*;

    #[test]
    fn perfect_predictions_give_diagonal_and_unit_metrics() {
        let truth = vec![Up, Stationary, Down, Down, Up];
        let cm = ConfusionMatrix::from_labels(&truth, &truth).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(cm.counts[i][j], 0);
                }
            }
        }
        let m = macro_metrics(&cm).unwrap();
        assert_eq!(
            (m.accuracy, m.precision, m.recall, m.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn all_stationary_predictor_fills_one_column() {
        let mut truth = vec![Up; 25];
        truth.extend(vec![Stationary; 50]);
        truth.extend(vec![Down; 25]);
        let set = PredictionSet::from_labels("S", 1, 0, &[Stationary; 100]);
        let cm = confusion(&set, &truth).unwrap();
        assert_eq!(
            [cm.counts[0][1], cm.counts[1][1], cm.counts[2][1]],
            [25, 50, 25]
        );
        assert_eq!(cm.col_sum(0) + cm.col_sum(2), 0);
        let m = macro_metrics(&cm).unwrap();
        assert!(m.zero_division);
    }

    #[test]
    fn hand_computed_matrix() {
        let cm = ConfusionMatrix {
            counts: [[5, 5, 0], [0, 10, 0], [0, 5, 5]],
        };
        let m = macro_metrics(&cm).unwrap();
        assert!((m.accuracy - 20.0 / 30.0).abs() < 1e-15);
        // precision: U 5/5, S 10/20, D 5/5; recall: U 5/10, S 10/10, D 5/10
        assert!((m.precision - (1.0 + 0.5 + 1.0) / 3.0).abs() < 1e-15);
        assert!((m.recall - (0.5 + 1.0 + 0.5) / 3.0).abs() < 1e-15);
        // every class F1 is 2/3
        for c in m.per_class {
            assert!((c.f1 - 2.0 / 3.0).abs() < 1e-15);
        }
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(!m.zero_division);
    }

    #[test]
    fn absent_class_contributes_zero_f1() {
        let truth = vec![Up, Up, Stationary];
        let pred = vec![Up, Up, Stationary];
        let m = macro_metrics(&ConfusionMatrix::from_labels(&truth, &pred).unwrap()).unwrap();
        assert_eq!(m.per_class[2].f1, 0.0);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            macro_metrics(&ConfusionMatrix::default()),
            Err(MetricsError::EmptyMatrix)
        );
    }

    #[test]
    fn confusion_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth: Vec<_> = (0..1000)
            .map(|_| TrendLabel::from_index(rng.gen_range(0..3)).unwrap())
            .collect();
        let probs: Vec<[f64; 3]> = (0..1000)
            .map(|_| {
                let a: f64 = rng.gen();
                let b: f64 = rng.gen::<f64>() * (1.0 - a);
                [a, b, 1.0 - a - b]
            })
            .collect();
        let set = PredictionSet::from_probs("r", 1, 0, probs.clone());
        let cm = confusion(&set, &truth).unwrap();
        for ti in 0..3 {
            for pi in 0..3 {
                let mut n = 0;
                for (t, p) in truth.iter().zip(&probs) {
                    let mut best = 0;
                    for c in 0..3 {
                        if p[c] > p[best] {
                            best = c;
                        }
                    }
                    if t.index() == ti && best == pi {
                        n += 1;
                    }
                }
                assert_eq!(cm.counts[ti][pi], n);
            }
        }
        assert!(matches!(
            confusion(&set, &truth[..10]),
            Err(MetricsError::MisalignedSets(_))
        ));
    }

    #[test]
    fn agreement_examples() {
        let a = PredictionSet::from_labels("a", 1, 0, &[Up, Down, Stationary]);
        let m = agreement_matrix(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(m, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let b = PredictionSet::from_labels("b", 1, 0, &[Down, Up, Up]);
        let m = agreement_matrix(&[a.clone(), b]).unwrap();
        assert_eq!(m[0][1], 0.0);
        let short = PredictionSet::from_labels("c", 1, 0, &[Up]);
        assert!(agreement_matrix(&[a, short]).is_err());
    }

    #[test]
    fn agreement_matches_pairwise_comparison() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sets: Vec<_> = (0..3)
            .map(|m| {
                let labels: Vec<_> = (0..500)
                    .map(|_| TrendLabel::from_index(rng.gen_range(0..3)).unwrap())
                    .collect();
                PredictionSet::from_labels(format!("m{m}"), 1, 0, &labels)
            })
            .collect();
        let got = agreement_matrix(&sets).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut same = 0;
                for s in 0..500 {
                    if sets[i].rows[s].argmax() == sets[j].rows[s].argmax() {
                        same += 1;
                    }
                }
                assert_eq!(got[i][j], same as f64 / 500.0);
            }
        }
    }

    fn inputs(claimed: &[(usize, f64)], observed: &[(usize, &[f64])]) -> ScoreInputs<f64> {
        ScoreInputs {
            claimed: claimed.iter().copied().collect(),
            observed: observed.iter().map(|(k, v)| (*k, v.to_vec())).collect(),
        }
    }

    #[test]
    fn score_examples() {
        let exact = inputs(&[(1, 80.0), (5, 70.0)], &[(1, &[80.0, 80.0]), (5, &[70.0])]);
        assert_eq!(reliability_score(&exact).unwrap(), 100.0);
        let minus3 = inputs(&[(1, 80.0), (5, 70.0)], &[(1, &[77.0, 77.0]), (5, &[67.0])]);
        assert_eq!(reliability_score(&minus3).unwrap(), 97.0);
        let pm1 = inputs(&[(2, 50.0)], &[(2, &[49.0, 51.0])]);
        let b = reliability_breakdown(&pm1).unwrap();
        assert_eq!(
            (b.mean_difference, b.std_difference, b.score),
            (0.0, 1.0, 99.0)
        );
    }

    #[test]
    fn score_errors_and_undeclared_horizons() {
        assert_eq!(
            reliability_score(&ScoreInputs::<f64>::default()),
            Err(MetricsError::NoDeclaredHorizons)
        );
        let missing = inputs(&[(3, 50.0)], &[(1, &[49.0])]);
        assert_eq!(
            reliability_score(&missing),
            Err(MetricsError::MissingObservations(3))
        );
        // observations at undeclared horizons are ignored
        let extra = inputs(&[(1, 50.0)], &[(1, &[50.0]), (10, &[10.0])]);
        assert_eq!(reliability_score(&extra).unwrap(), 100.0);
    }

    proptest! {
        #[test]
        fn score_is_at_most_100_and_seed_order_free(diffs in proptest::collection::vec(-20.0f64..20.0, 1..12), rot in 0usize..12) {
            let claimed = 60.0;
            let obs: Vec<f64> = diffs.iter().map(|d| claimed + d).collect();
            let s = reliability_score(&inputs(&[(5, claimed)], &[(5, &obs)])).unwrap();
            prop_assert!(s <= 100.0);
            let mut rotated = obs.clone();
            rotated.rotate_left(rot % obs.len());
            let s2 = reliability_score(&inputs(&[(5, claimed)], &[(5, &rotated)])).unwrap();
            prop_assert!((s - s2).abs() < 1e-9);
            if obs.iter().any(|o| *o != claimed) {
                prop_assert!(s < 100.0);
            }
        }
    }
}
