//! Ensembles over aligned prediction sets: F1-weighted majority voting and a
//! small meta-classifier trained on the stacked base-model probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::TrendLabel;
use crate::metrics::{
    check_aligned, confusion, macro_f1, macro_metrics, MacroMetrics, MetricsError,
};
use crate::predictor::{
    init_mlp, predict, train, Activation, LabeledData, Mlp, MlpConfig, PredictionSet,
    PredictorError, TrainConfig, N_CLASSES,
};
use crate::scalar::Scalar;

pub const MAJORITY_ID: &str = "MAJORITY";
pub const METALOB_ID: &str = "METALOB";
/// Class priority used to break exact ties in the weighted vote.
pub const TIE_BREAK: [TrendLabel; 3] = [TrendLabel::Stationary, TrendLabel::Up, TrendLabel::Down];
pub const DEFAULT_META_HIDDEN: usize = 64;
/// Chronological train / validation shares of the meta split (percent); the
/// rest is held out.
pub const META_SPLIT_PERCENT: (usize, usize) = (70, 15);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("weights must be finite, non-negative, not all zero, one per model")]
    InvalidWeights,
    #[error("{labels} labels for {samples} samples")]
    LabelMismatch { labels: usize, samples: usize },
    #[error("too few samples for a 70/15/15 split: {0}")]
    TooFewSamples(usize),
}

/// Aligned base-model predictions with one weight per model.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleInput {
    pub sets: Vec<PredictionSet>,
    pub weights: Vec<f64>,
}

impl EnsembleInput {
    pub fn new(sets: Vec<PredictionSet>, weights: Vec<f64>) -> Result<Self, EnsembleError> {
        check_aligned(&sets)?;
        let ok = weights.len() == sets.len()
            && weights.iter().all(|w| w.is_finite() && *w >= 0.0)
            && weights.iter().any(|w| *w > 0.0);
        if !ok {
            return Err(EnsembleError::InvalidWeights);
        }
        Ok(Self { sets, weights })
    }

    /// Weights every model by its macro F1 against `labels`.
    pub fn f1_weighted(
        sets: Vec<PredictionSet>,
        labels: &[TrendLabel],
    ) -> Result<Self, EnsembleError> {
        let weights = f1_weights(&sets, labels)?;
        Self::new(sets, weights)
    }

    pub fn len(&self) -> usize {
        self.sets.first().map_or(0, PredictionSet::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The same models restricted to rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            sets: self.sets.iter().map(|s| s.slice(start, end)).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Macro F1 of each set against `labels`.
pub fn f1_weights(
    sets: &[PredictionSet],
    labels: &[TrendLabel],
) -> Result<Vec<f64>, EnsembleError> {
    sets.iter()
        .map(|s| {
            if s.len() != labels.len() {
                return Err(EnsembleError::LabelMismatch {
                    labels: labels.len(),
                    samples: s.len(),
                });
            }
            Ok(macro_f1(labels, &s.argmax())?)
        })
        .collect()
}

/// Winner of one weighted tally. Scores within a relative `1e-12` of the
/// best are tied so that rescaling all weights cannot flip a decision through
/// rounding; ties go to the first class in [`TIE_BREAK`].
pub fn weighted_winner(scores: &[f64; N_CLASSES]) -> TrendLabel {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = best.abs() * 1e-12;
    *TIE_BREAK
        .iter()
        .find(|c| scores[c.index()] >= best - slack)
        .expect("the best class is within its own slack")
}

/// Per sample, sums each model's weight onto its argmax class and emits the
/// winner as a one-hot row.
pub fn majority_vote(input: &EnsembleInput) -> Result<PredictionSet, EnsembleError> {
    check_aligned(&input.sets)?;
    let votes: Vec<Vec<TrendLabel>> = input.sets.iter().map(PredictionSet::argmax).collect();
    let first = &input.sets[0];
    let labels: Vec<TrendLabel> = (0..first.len())
        .map(|i| {
            let mut scores = [0.0; N_CLASSES];
            for (v, w) in votes.iter().zip(&input.weights) {
                scores[v[i].index()] += w;
            }
            weighted_winner(&scores)
        })
        .collect();
    let mut out = PredictionSet::from_labels(MAJORITY_ID, first.horizon, first.seed, &labels);
    for (row, src) in out.rows.iter_mut().zip(&first.rows) {
        row.index = src.index;
    }
    out.dataset_hash = first.dataset_hash.clone();
    out.extra.insert("tie_break".into(), "S>U>D".into());
    out.extra.insert(
        "members".into(),
        input
            .sets
            .iter()
            .map(|s| s.model.as_str())
            .collect::<Vec<_>>()
            .join(";"),
    );
    Ok(out)
}

/// `n x 3M` matrix (row-major): each row concatenates the models'
/// probability triplets in input order.
pub fn build_meta_features(sets: &[PredictionSet]) -> Result<Vec<f64>, EnsembleError> {
    check_aligned(sets)?;
    let n = sets[0].len();
    let mut out = Vec::with_capacity(n * N_CLASSES * sets.len());
    for i in 0..n {
        for s in sets {
            out.extend_from_slice(&s.rows[i].probs);
        }
    }
    Ok(out)
}

/// Chronological 70/15/15 sizes for `n` samples.
pub fn meta_split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * META_SPLIT_PERCENT.0 / 100;
    let val = n * META_SPLIT_PERCENT.1 / 100;
    (train, val, n - train - val)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_META_HIDDEN,
            activation: Activation::Relu,
            train: TrainConfig::meta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaOutcome<T> {
    pub model: Mlp<T>,
    pub split: (usize, usize, usize),
    pub best_epoch: usize,
    /// Meta-classifier predictions on the held-out rows.
    pub held_out: PredictionSet,
    pub held_out_metrics: MacroMetrics,
}

/// Trains the two-layer meta-classifier on a chronological 70/15/15 split of
/// the aligned samples and scores it on the last 15%.
pub fn train_metalob<T: Scalar>(
    sets: &[PredictionSet],
    labels: &[TrendLabel],
    config: &MetaConfig,
) -> Result<MetaOutcome<T>, EnsembleError> {
    let features = build_meta_features(sets)?;
    let n = sets[0].len();
    if labels.len() != n {
        return Err(EnsembleError::LabelMismatch {
            labels: labels.len(),
            samples: n,
        });
    }
    let (n_train, n_val, n_test) = meta_split_sizes(n);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(EnsembleError::TooFewSamples(n));
    }
    let dim = N_CLASSES * sets.len();
    let part = |a: usize, b: usize| -> Result<LabeledData<T>, PredictorError> {
        LabeledData::new(
            dim,
            features[a * dim..b * dim]
                .iter()
                .map(|v| T::lit(*v))
                .collect(),
            labels[a..b].to_vec(),
        )
    };
    let train_set = part(0, n_train)?;
    let val_set = part(n_train, n_train + n_val)?;
    let test_set = part(n_train + n_val, n)?;
    let mlp_config = MlpConfig {
        input_dim: dim,
        hidden: vec![config.hidden],
        activation: config.activation,
        output_dim: N_CLASSES,
    };
    let model = init_mlp::<T>(&mlp_config, config.train.seed)?;
    let outcome = train(model, &train_set, &val_set, &config.train)?;
    let mut held_out = predict(
        &outcome.model,
        &test_set,
        METALOB_ID,
        sets[0].horizon,
        config.train.seed,
    )?;
    for (row, src) in held_out
        .rows
        .iter_mut()
        .zip(&sets[0].rows[n_train + n_val..])
    {
        row.index = src.index;
    }
    held_out.dataset_hash = sets[0].dataset_hash.clone();
    let held_out_metrics = macro_metrics(&confusion(&held_out, &test_set.labels)?)?;
    Ok(MetaOutcome {
        model: outcome.model,
        split: (n_train, n_val, n_test),
        best_epoch: outcome.best_epoch,
        held_out,
        held_out_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn votes(models: &[&[TrendLabel]]) -> Vec<PredictionSet> {
        models
            .iter()
            .enumerate()
            .map(|(i, v)| PredictionSet::from_labels(format!("m{i}"), 5, 0, v))
            .collect()
    }

    use TrendLabel::{Down as D, Stationary as S, Up as U};

    #[test]
    fn plain_and_weighted_majority() {
        let sets = votes(&[&[U], &[U], &[D]]);
        let out = majority_vote(&EnsembleInput::new(sets.clone(), vec![1.0; 3]).unwrap()).unwrap();
        assert_eq!(out.argmax(), vec![U]);
        assert_eq!(out.model, "MAJORITY");
        let sets = votes(&[&[D], &[U], &[U]]);
        let out = majority_vote(&EnsembleInput::new(sets, vec![0.9, 0.3, 0.3]).unwrap()).unwrap();
        assert_eq!(out.argmax(), vec![D]);
    }

    #[test]
    fn ties_prefer_stationary_then_up() {
        let sets = votes(&[&[U, U, D], &[S, D, U]]);
        let out = majority_vote(&EnsembleInput::new(sets, vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(out.argmax(), vec![S, U, U]);
        assert_eq!(out.extra["tie_break"], "S>U>D");
    }

    #[test]
    fn invalid_weights() {
        let sets = votes(&[&[U], &[U]]);
        assert_eq!(
            EnsembleInput::new(sets.clone(), vec![0.0, 0.0]),
            Err(EnsembleError::InvalidWeights)
        );
        assert_eq!(
            EnsembleInput::new(sets.clone(), vec![1.0]),
            Err(EnsembleError::InvalidWeights)
        );
        assert_eq!(
            EnsembleInput::new(sets, vec![-1.0, 2.0]),
            Err(EnsembleError::InvalidWeights)
        );
    }

    #[test]
    fn meta_features_layout() {
        let a = PredictionSet::from_probs("a", 1, 0, vec![[1.0, 0.0, 0.0]]);
        let b = PredictionSet::from_probs("b", 1, 0, vec![[0.0, 1.0, 0.0]]);
        assert_eq!(
            build_meta_features(&[a.clone(), b.clone()]).unwrap(),
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(
            build_meta_features(&[b, a]).unwrap(),
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn split_sizes() {
        assert_eq!(meta_split_sizes(100), (70, 15, 15));
        assert_eq!(meta_split_sizes(1000), (700, 150, 150));
    }

    fn random_probs(rng: &mut ChaCha8Rng, n: usize, name: &str) -> PredictionSet {
        let probs = (0..n)
            .map(|_| {
                let a: f64 = rng.gen();
                let b = rng.gen::<f64>() * (1.0 - a);
                [a, b, 1.0 - a - b]
            })
            .collect();
        PredictionSet::from_probs(name, 5, 0, probs)
    }

    // With SGD at lr 1e-4 the meta model needs on the order of 10^4 samples
    // (about 2,000 updates) before it tracks a perfect base model.
    const META_N: usize = 20_000;

    #[test]
    fn meta_model_follows_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth: Vec<TrendLabel> = (0..META_N)
            .map(|_| TrendLabel::ALL[rng.gen_range(0..3)])
            .collect();
        let oracle = PredictionSet::from_labels("oracle", 5, 0, &truth);
        let sets = [
            oracle.clone(),
            random_probs(&mut rng, META_N, "r1"),
            random_probs(&mut rng, META_N, "r2"),
        ];
        let out = train_metalob::<f64>(&sets, &truth, &MetaConfig::default()).unwrap();
        assert_eq!(out.split, (14_000, 3_000, 3_000));
        let oracle_f1 = macro_f1(&truth[17_000..], &oracle.argmax()[17_000..]).unwrap();
        assert!(
            out.held_out_metrics.f1 >= oracle_f1 - 0.02,
            "{}",
            out.held_out_metrics.f1
        );
        assert_eq!(out.held_out.rows[0].index, 17_000);
    }

    #[test]
    fn meta_model_of_identical_members_matches_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth: Vec<TrendLabel> = (0..META_N)
            .map(|_| TrendLabel::ALL[rng.gen_range(0..3)])
            .collect();
        // right 70% of the time, otherwise a random class
        let noisy: Vec<TrendLabel> = truth
            .iter()
            .map(|t| {
                if rng.gen_bool(0.7) {
                    *t
                } else {
                    TrendLabel::ALL[rng.gen_range(0..3)]
                }
            })
            .collect();
        let member = PredictionSet::from_labels("m", 5, 0, &noisy);
        let out = train_metalob::<f64>(
            &[member.clone(), member.clone(), member],
            &truth,
            &MetaConfig::default(),
        )
        .unwrap();
        let member_f1 = macro_f1(&truth[17_000..], &noisy[17_000..]).unwrap();
        assert!(
            (out.held_out_metrics.f1 - member_f1).abs() <= 0.01,
            "{} vs {member_f1}",
            out.held_out_metrics.f1
        );
    }

    #[test]
    fn brute_force_weighted_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1000;
        let m = 15;
        let labels: Vec<Vec<TrendLabel>> = (0..m)
            .map(|_| {
                (0..n)
                    .map(|_| TrendLabel::ALL[rng.gen_range(0..3)])
                    .collect()
            })
            .collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let refs: Vec<&[TrendLabel]> = labels.iter().map(Vec::as_slice).collect();
        let out =
            majority_vote(&EnsembleInput::new(votes(&refs), weights.clone()).unwrap()).unwrap();
        for (i, got) in out.argmax().into_iter().enumerate() {
            let tally = |c: TrendLabel| -> f64 {
                (0..m)
                    .filter(|j| labels[*j][i] == c)
                    .map(|j| weights[j])
                    .sum()
            };
            let best = [U, S, D].into_iter().map(tally).fold(f64::MIN, f64::max);
            let expected = [S, U, D].into_iter().find(|c| tally(*c) == best).unwrap();
            assert_eq!(got, expected, "sample {i}");
        }
    }
}
