//! The pipeline steps. Every command reads its inputs from and writes its
//! outputs to the run directory named in the config.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;

use lobbench_core::backtest::{
    ohlc_aggregate, render_trade_log, returns_report, run_strategy, OhlcBar, ReturnSummary,
};
use lobbench_core::dataset::{
    build_dataset, build_fi2010_dataset, encode_dataset, read_dataset, BuildParams, DatasetBundle,
    Split, SplitMode, SplitSpec,
};
use lobbench_core::ensemble::{
    f1_weights, majority_vote, meta_split_sizes, train_metalob, EnsembleInput, MetaConfig,
    MAJORITY_ID, METALOB_ID,
};
use lobbench_core::ingest::{parse_fi2010, Fi2010Split};
use lobbench_core::labeling::{balance_threshold_segments, TrendLabel};
use lobbench_core::metrics::{
    agreement_matrix, assign_ranks, confusion, macro_metrics, render_table_csv, ConfusionMatrix,
    ModelSummary, TableRow,
};
use lobbench_core::predictor::{
    init_mlp, load_model, predict, read_predictions, save_model, train, write_predictions,
    Activation, LabeledData, MlpConfig, OptimizerKind, PredictionSet, PredictorError, TrainConfig,
    N_CLASSES,
};
use lobbench_core::Mlp32;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SourceConfig, Theta, WeightScope};
use crate::error::{CliError, Result};
use crate::latency::{measure_latency, ConstantModel, LatencyStats};
use crate::run_dir::{file_crc, write_file, write_json, RunDir};
use crate::source::{load_source, mids, SourceStock};

/// Model id of the baseline classifier.
pub const BASELINE_ID: &str = "MLP";

fn run_dir(config: &RunConfig) -> RunDir {
    RunDir::new(&config.run_dir)
}

/// Every (horizon, seed) pair of the config.
fn cells(config: &RunConfig) -> Vec<(usize, u64)> {
    config
        .horizons
        .iter()
        .flat_map(|k| config.seeds.iter().map(move |s| (*k, *s)))
        .collect()
}

fn load_dataset(run: &RunDir, k: usize) -> Result<(DatasetBundle, String)> {
    let path = run.dataset(k);
    let bundle = read_dataset(&path).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((bundle, file_crc(&path)?))
}

// ---------------------------------------------------------------- build

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub stock: String,
    pub split: String,
    pub count: usize,
    /// Class shares in percent: up, stationary, down.
    pub shares: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonBuild {
    pub horizon: usize,
    pub theta: f64,
    pub file: String,
    pub checksum: String,
    pub counts: [usize; 3],
    pub shares: Vec<ShareRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub source: String,
    pub theta_mode: String,
    pub horizons: Vec<HorizonBuild>,
}

fn share_rows(bundle: &DatasetBundle) -> Vec<ShareRow> {
    let mut out = Vec::new();
    for (i, stock) in bundle.metadata.stocks.iter().enumerate() {
        for split in Split::ALL {
            let c = bundle.class_counts(split, Some(i as u32));
            let n: usize = c.iter().sum();
            out.push(ShareRow {
                stock: stock.clone(),
                split: split.name().into(),
                count: n,
                shares: c.map(|x| {
                    if n == 0 {
                        0.0
                    } else {
                        100.0 * x as f64 / n as f64
                    }
                }),
            });
        }
    }
    out
}

/// θ for one horizon: the configured value, or the balancing threshold over
/// every stock's training days.
fn resolve_theta(config: &RunConfig, stocks: &[SourceStock], k: usize) -> Result<f64> {
    match config.theta {
        Theta::Fixed(t) => Ok(t),
        Theta::Auto(_) => {
            let series: Vec<Vec<f64>> = stocks
                .iter()
                .map(|s| s.sampled(config.stride))
                .flat_map(|s| s.days.into_iter().take(config.split[0]))
                .map(|d| mids(&d.records))
                .collect::<Result<_>>()?;
            let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
            Ok(balance_threshold_segments(&refs, k)?)
        }
    }
}

pub fn cmd_build_dataset(config: &RunConfig) -> Result<BuildReport> {
    let run = run_dir(config);
    write_file(&run.config(), config.to_toml().as_bytes())?;
    let mut builds = Vec::new();
    let source_name;
    match &config.source {
        SourceConfig::Fi2010 {
            train,
            test,
            val_fraction,
        } => {
            source_name = "fi2010".to_string();
            let tr = parse_fi2010(train, Fi2010Split::Train)
                .map_err(|e| CliError::from(e).context(train.display()))?;
            let te = parse_fi2010(test, Fi2010Split::Test)
                .map_err(|e| CliError::from(e).context(test.display()))?;
            if config.theta == Theta::AUTO {
                return Err(CliError::Config(
                    "FI-2010 uses its shipped labels; theta cannot be auto".into(),
                ));
            }
            for &k in &config.horizons {
                let bundle = build_fi2010_dataset(&tr, &te, k, config.history, *val_fraction)?;
                builds.push((k, bundle.metadata.theta, bundle));
            }
        }
        _ => {
            source_name = match config.source {
                SourceConfig::Synthetic { .. } => "synthetic",
                _ => "lobster",
            }
            .to_string();
            let stocks = load_source(config)?;
            let need = config.split.iter().sum::<usize>();
            if let Some(s) = stocks.iter().find(|s| s.days.len() < need) {
                return Err(CliError::Data(format!(
                    "{} has {} days, the split needs {need}",
                    s.symbol,
                    s.days.len()
                )));
            }
            let sampled: Vec<_> = stocks.iter().map(|s| s.sampled(config.stride)).collect();
            for &k in &config.horizons {
                let theta = resolve_theta(config, &stocks, k)?;
                let params = BuildParams {
                    horizon: k,
                    theta,
                    history: config.history,
                    stride: config.stride,
                    levels: config.levels,
                    split: SplitMode::Days(SplitSpec::from_counts(
                        config.split[0],
                        config.split[1],
                        config.split[2],
                    )),
                };
                let bundle = build_dataset(&sampled, &params)
                    .map_err(|e| CliError::from(e).context(format!("k={k}")))?;
                builds.push((k, theta, bundle));
            }
        }
    }
    let mut horizons = Vec::new();
    for (k, theta, bundle) in builds {
        let bytes = encode_dataset(&bundle)?;
        let path = run.dataset(k);
        write_file(&path, &bytes)?;
        horizons.push(HorizonBuild {
            horizon: k,
            theta,
            file: format!("datasets/k{k}.lobd"),
            checksum: crate::run_dir::crc_hex(&bytes),
            counts: [bundle.train.len(), bundle.val.len(), bundle.test.len()],
            shares: share_rows(&bundle),
        });
    }
    let report = BuildReport {
        source: source_name,
        theta_mode: match config.theta {
            Theta::Fixed(_) => "fixed".into(),
            Theta::Auto(_) => "auto".into(),
        },
        horizons,
    };
    write_json(&run.report("build.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub model: String,
    pub horizon: usize,
    pub seed: u64,
    pub parameters: usize,
    pub best_epoch: Option<usize>,
    pub best_val_f1: Option<f64>,
    pub error: Option<String>,
}

fn baseline_config(config: &RunConfig, input_dim: usize) -> MlpConfig {
    MlpConfig {
        input_dim,
        hidden: config.train.hidden.clone(),
        activation: Activation::LeakyRelu {
            slope: config.train.leaky_slope,
        },
        output_dim: N_CLASSES,
    }
}

fn labeled(obs: &[lobbench_core::dataset::MarketObservation]) -> Result<LabeledData<f32>> {
    Ok(LabeledData::from_observations(obs)?)
}

/// Trains the baseline for every (horizon, seed). Failed cells are recorded
/// and reported after the others finish.
pub fn cmd_train(config: &RunConfig) -> Result<Vec<TrainRecord>> {
    let run = run_dir(config);
    let models = run.root.join("models");
    fs::create_dir_all(&models).map_err(|e| CliError::io(&models, e))?;
    let mut records = Vec::new();
    for &k in &config.horizons {
        let (bundle, _) = load_dataset(&run, k)?;
        let tr = labeled(&bundle.train)?;
        let va = labeled(&bundle.val)?;
        let mlp = baseline_config(config, bundle.metadata.window_len());
        let out: Vec<Result<TrainRecord>> = config
            .seeds
            .par_iter()
            .map(|&seed| {
                let model = init_mlp::<f32>(&mlp, seed)?;
                let parameters = model.params.len();
                let mut rec = TrainRecord {
                    model: BASELINE_ID.into(),
                    horizon: k,
                    seed,
                    parameters,
                    best_epoch: None,
                    best_val_f1: None,
                    error: None,
                };
                match train(model, &tr, &va, &config.train.train_config(seed)) {
                    Ok(o) => {
                        save_model(&o.model, &run.model(BASELINE_ID, k, seed))?;
                        rec.best_epoch = Some(o.best_epoch);
                        rec.best_val_f1 = Some(o.best_val_f1);
                    }
                    Err(e @ PredictorError::NonFiniteLoss { .. }) => {
                        rec.error = Some(e.to_string())
                    }
                    Err(e) => return Err(e.into()),
                }
                Ok(rec)
            })
            .collect();
        for r in out {
            records.push(r?);
        }
    }
    write_json(&run.report("training.json"), &records)?;
    let failed: Vec<String> = records
        .iter()
        .filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| format!("k={} seed={}: {e}", r.horizon, r.seed))
        })
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Config(format!(
            "training diverged: {}",
            failed.join("; ")
        )));
    }
    Ok(records)
}

// ---------------------------------------------------------------- predict

/// Writes baseline test-split predictions for every trained (horizon, seed).
pub fn cmd_predict(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let run = run_dir(config);
    let mut written = Vec::new();
    for &k in &config.horizons {
        let (bundle, hash) = load_dataset(&run, k)?;
        let te = labeled(&bundle.test)?;
        let out: Vec<Result<PathBuf>> = config
            .seeds
            .par_iter()
            .map(|&seed| {
                let model: Mlp32 = load_model(&run.model(BASELINE_ID, k, seed))?;
                let mut set = predict(&model, &te, BASELINE_ID, k, seed)?;
                set.dataset_hash = Some(hash.clone());
                let path = run.predictions(BASELINE_ID, k, seed);
                write_file(
                    &path,
                    lobbench_core::predictor::render_predictions(&set).as_bytes(),
                )?;
                Ok(path)
            })
            .collect();
        for p in out {
            written.push(p?);
        }
    }
    Ok(written)
}

// ---------------------------------------------------------------- ensemble

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub horizon: usize,
    pub seed: u64,
    pub members: Vec<String>,
    pub weights: Vec<f64>,
    pub weight_scope: WeightScope,
    /// Rows used to fit, validate and evaluate (chronological).
    pub split: (usize, usize, usize),
    pub metalob_best_epoch: Option<usize>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub cells: Vec<EnsembleRecord>,
    /// Expected prediction files that were absent or unusable.
    pub missing: Vec<String>,
}

/// Loads one prediction file and checks it covers `n` test rows of the
/// dataset with checksum `hash`.
fn load_member(
    path: &std::path::Path,
    n: usize,
    hash: &str,
) -> std::result::Result<PredictionSet, String> {
    let set = read_predictions(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(h) = &set.dataset_hash {
        if h != hash {
            return Err(format!(
                "{}: built for dataset {h}, current is {hash}",
                path.display()
            ));
        }
    }
    if set.len() != n || set.indices().enumerate().any(|(i, x)| x != i as u64) {
        return Err(format!(
            "{}: expected rows 0..{n}, found {} rows",
            path.display(),
            set.len()
        ));
    }
    Ok(set)
}

fn external_dir(config: &RunConfig, run: &RunDir) -> PathBuf {
    config
        .ensemble
        .predictions_dir
        .clone()
        .unwrap_or_else(|| run.predictions_dir())
}

/// MAJORITY and METALOB for every (horizon, seed) with at least two
/// members. Members are the baseline plus the configured external models.
/// Both ensembles are scored on the last 15% of the test split; MAJORITY's
/// weights are member F1 on the first 70%, where METALOB also trains.
pub fn cmd_ensemble(config: &RunConfig) -> Result<EnsembleReport> {
    let run = run_dir(config);
    let ext_dir = external_dir(config, &run);
    let mut missing = Vec::new();
    struct Cell {
        k: usize,
        seed: u64,
        sets: Vec<PredictionSet>,
        labels: Vec<TrendLabel>,
        weights: Vec<f64>,
    }
    let mut prepared = Vec::new();
    for &k in &config.horizons {
        let (bundle, hash) = load_dataset(&run, k)?;
        let labels = bundle.labels(Split::Test);
        let n = labels.len();
        for &seed in &config.seeds {
            let mut sets = Vec::new();
            let mut candidates = vec![run.predictions(BASELINE_ID, k, seed)];
            candidates.extend(
                config
                    .ensemble
                    .external
                    .iter()
                    .map(|m| ext_dir.join(crate::run_dir::prediction_file_name(m, k, seed))),
            );
            for path in candidates {
                if !path.exists() {
                    missing.push(path.display().to_string());
                    continue;
                }
                match load_member(&path, n, &hash) {
                    Ok(s) => sets.push(s),
                    Err(m) => missing.push(m),
                }
            }
            let (n_tr, _, _) = meta_split_sizes(n);
            let weights = if sets.len() >= 2 && n_tr > 0 {
                let fit: Vec<PredictionSet> = sets.iter().map(|s| s.slice(0, n_tr)).collect();
                f1_weights(&fit, &labels[..n_tr])?
            } else {
                Vec::new()
            };
            prepared.push(Cell {
                k,
                seed,
                sets,
                labels: labels.clone(),
                weights,
            });
        }
    }
    if config.ensemble.weights == WeightScope::Global {
        // mean over horizons of each model's per-horizon weight, per seed
        let mut sums: BTreeMap<(u64, String), (f64, usize)> = BTreeMap::new();
        for c in &prepared {
            for (s, w) in c.sets.iter().zip(&c.weights) {
                let e = sums.entry((c.seed, s.model.clone())).or_default();
                e.0 += w;
                e.1 += 1;
            }
        }
        for c in &mut prepared {
            for (s, w) in c.sets.iter().zip(c.weights.iter_mut()) {
                let (sum, n) = sums[&(c.seed, s.model.clone())];
                *w = sum / n as f64;
            }
        }
    }
    let meta = |seed: u64| MetaConfig {
        hidden: config.ensemble.meta_hidden,
        activation: Activation::Relu,
        train: TrainConfig {
            learning_rate: config.ensemble.meta_learning_rate,
            batch_size: config.ensemble.meta_batch_size,
            epochs: config.ensemble.meta_epochs,
            optimizer: OptimizerKind::Sgd,
            seed,
        },
    };
    let records: Vec<Result<EnsembleRecord>> = prepared
        .par_iter()
        .map(|c| {
            let members: Vec<String> = c.sets.iter().map(|s| s.model.clone()).collect();
            let n = c.labels.len();
            let split = meta_split_sizes(n);
            let mut rec = EnsembleRecord {
                horizon: c.k,
                seed: c.seed,
                members,
                weights: c.weights.clone(),
                weight_scope: config.ensemble.weights,
                split,
                metalob_best_epoch: None,
                skipped: None,
            };
            if c.sets.len() < 2 {
                rec.skipped = Some(format!("{} member(s) available", c.sets.len()));
                return Ok(rec);
            }
            if split.0 == 0 || split.1 == 0 || split.2 == 0 {
                rec.skipped = Some(format!("{n} test rows are too few to split"));
                return Ok(rec);
            }
            let held = split.0 + split.1;
            let input = EnsembleInput::new(c.sets.clone(), c.weights.clone())?.slice(held, n);
            let mut maj = majority_vote(&input)?;
            maj.seed = c.seed;
            write_predictions(&maj, &run.predictions(MAJORITY_ID, c.k, c.seed))?;
            let outcome = train_metalob::<f32>(&c.sets, &c.labels, &meta(c.seed))?;
            write_predictions(&outcome.held_out, &run.predictions(METALOB_ID, c.k, c.seed))?;
            rec.metalob_best_epoch = Some(outcome.best_epoch);
            Ok(rec)
        })
        .collect();
    let report = EnsembleReport {
        cells: records.into_iter().collect::<Result<_>>()?,
        missing,
    };
    write_json(&run.report("ensembles.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub model: String,
    pub horizon: usize,
    pub seed: u64,
    pub rows: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub conventions: BTreeMap<String, String>,
    pub cells: Vec<MetricCell>,
    pub missing: Vec<String>,
}

/// Splits `<model>_k<k>_s<seed>.csv`.
pub fn parse_prediction_name(name: &str) -> Option<(String, usize, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (rest, seed) = stem.rsplit_once("_s")?;
    let (model, k) = rest.rsplit_once("_k")?;
    if model.is_empty() {
        return None;
    }
    Some((model.to_string(), k.parse().ok()?, seed.parse().ok()?))
}

fn conventions() -> BTreeMap<String, String> {
    [
        ("macro_average", "unweighted mean over up, stationary, down"),
        ("zero_denominator", "precision or recall defined as 0"),
        ("score_std", "population (divide by N)"),
        (
            "f1_units",
            "fraction in metrics, percentage points in tables",
        ),
        ("rows", "test split; ensembles cover the last 15% only"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

/// Scores every prediction file for the configured horizons and seeds
/// against the test labels, writes agreement matrices of the full-coverage
/// models, then renders the table.
pub fn cmd_evaluate(config: &RunConfig) -> Result<MetricsReport> {
    let run = run_dir(config);
    let mut found: BTreeMap<(usize, u64), Vec<PathBuf>> = BTreeMap::new();
    let mut dirs = vec![run.predictions_dir()];
    let ext = external_dir(config, &run);
    if !dirs.contains(&ext) {
        dirs.push(ext);
    }
    let wanted: BTreeSet<(usize, u64)> = cells(config).into_iter().collect();
    let mut seen_models = BTreeSet::new();
    for dir in &dirs {
        let Ok(entries) = fs::read_dir(dir) else {
            continue;
        };
        let mut names: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        names.sort();
        for path in names {
            let Some((model, k, seed)) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(parse_prediction_name)
            else {
                continue;
            };
            if wanted.contains(&(k, seed)) && seen_models.insert((model, k, seed)) {
                found.entry((k, seed)).or_default().push(path);
            }
        }
    }
    let mut expected: Vec<String> = vec![BASELINE_ID.into()];
    expected.extend(config.ensemble.external.iter().cloned());
    let mut missing = Vec::new();
    for (k, seed) in &wanted {
        for m in &expected {
            if !seen_models.contains(&(m.clone(), *k, *seed)) {
                missing.push(crate::run_dir::prediction_file_name(m, *k, *seed));
            }
        }
    }
    let mut cells_out = Vec::new();
    for &k in &config.horizons {
        let (bundle, hash) = load_dataset(&run, k)?;
        let labels = bundle.labels(Split::Test);
        for &seed in &config.seeds {
            let mut full = Vec::new();
            for path in found.get(&(k, seed)).into_iter().flatten() {
                let set = match read_predictions(path) {
                    Ok(s) => s,
                    Err(e) => {
                        missing.push(format!("{}: {e}", path.display()));
                        continue;
                    }
                };
                if set.dataset_hash.as_deref().is_some_and(|h| h != hash) {
                    missing.push(format!("{}: built for another dataset", path.display()));
                    continue;
                }
                let Some(truth) = set
                    .indices()
                    .map(|i| labels.get(i as usize).copied())
                    .collect::<Option<Vec<_>>>()
                else {
                    missing.push(format!("{}: index beyond the test split", path.display()));
                    continue;
                };
                if set.is_empty() {
                    missing.push(format!("{}: no rows", path.display()));
                    continue;
                }
                let cm = confusion(&set, &truth)?;
                let m = macro_metrics(&cm)?;
                let (model, _, _) = parse_prediction_name(
                    path.file_name()
                        .and_then(|n| n.to_str())
                        .unwrap_or_default(),
                )
                .expect("parsed above");
                cells_out.push(MetricCell {
                    model,
                    horizon: k,
                    seed,
                    rows: set.len(),
                    accuracy: m.accuracy,
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                    confusion: cm,
                    zero_division: m.zero_division,
                });
                if set.len() == labels.len() {
                    full.push(set);
                }
            }
            if full.len() >= 2 {
                let a = agreement_matrix(&full)?;
                let mut csv = String::from("model");
                for s in &full {
                    csv.push(',');
                    csv.push_str(&s.model);
                }
                csv.push('\n');
                for (s, row) in full.iter().zip(&a) {
                    csv.push_str(&s.model);
                    for v in row {
                        csv.push_str(&format!(",{v:.6}"));
                    }
                    csv.push('\n');
                }
                write_file(
                    &run.report(&format!("agreement_k{k}_s{seed}.csv")),
                    csv.as_bytes(),
                )?;
            }
        }
    }
    let report = MetricsReport {
        conventions: conventions(),
        cells: cells_out,
        missing,
    };
    write_json(&run.report("metrics.json"), &report)?;
    cmd_report(config)?;
    Ok(report)
}

// ---------------------------------------------------------------- report

/// Table rows from per-cell metrics: F1 in percentage points, ranked by
/// measured F1, with the reliability score where a claim exists.
pub fn table_rows(
    report: &MetricsReport,
    claimed: &BTreeMap<String, BTreeMap<usize, f64>>,
) -> Vec<TableRow> {
    let mut summaries: BTreeMap<String, ModelSummary> = BTreeMap::new();
    for c in &report.cells {
        let s = summaries
            .entry(c.model.clone())
            .or_insert_with(|| ModelSummary {
                model: c.model.clone(),
                claimed: claimed.get(&c.model).cloned().unwrap_or_default(),
                ..ModelSummary::default()
            });
        s.observed.entry(c.horizon).or_default().push(100.0 * c.f1);
    }
    let mut rows: Vec<TableRow> = summaries.values().map(ModelSummary::table_row).collect();
    assign_ranks(&mut rows);
    rows
}

pub fn cmd_report(config: &RunConfig) -> Result<Vec<TableRow>> {
    let run = run_dir(config);
    let path = run.report("metrics.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let report: MetricsReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let rows = table_rows(&report, &config.claimed_f1()?);
    write_file(&run.report("table.csv"), render_table_csv(&rows).as_bytes())?;
    write_json(&run.report("table.json"), &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------- backtest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRecord {
    pub model: String,
    pub horizon: usize,
    pub seed: u64,
    pub stock: String,
    pub bars: usize,
    pub trades: usize,
    pub final_equity: f64,
    pub return_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub bar_period: usize,
    pub capital: f64,
    pub runs: Vec<BacktestRecord>,
    pub summaries: Vec<(String, usize, Vec<ReturnSummary>)>,
}

/// Bars of every test day of `stock` (in day order) and the signal of each
/// bar. Bar `j` of a day spans complete records `[j·stride, (j+1)·stride)`
/// and closes on sampled record `j`, where the observation ending at that
/// record is predicted; bars without a prediction signal S.
fn bars_and_signals(
    source: &SourceStock,
    stock: u32,
    bundle: &DatasetBundle,
    set: &PredictionSet,
    stride: usize,
) -> Result<(Vec<OhlcBar<f64>>, Vec<TrendLabel>)> {
    let test = bundle.split(Split::Test);
    let days: BTreeSet<u32> = test
        .iter()
        .filter(|o| o.origin.stock == stock)
        .map(|o| o.origin.day)
        .collect();
    let mut predicted: BTreeMap<(u32, u64), TrendLabel> = BTreeMap::new();
    for row in &set.rows {
        let o = &test[row.index as usize];
        if o.origin.stock == stock {
            predicted.insert((o.origin.day, o.origin.index), row.argmax());
        }
    }
    let mut bars = Vec::new();
    let mut signals = Vec::new();
    for d in days {
        let day = source
            .days
            .get(d as usize)
            .ok_or_else(|| CliError::Data(format!("{}: source has no day {d}", source.symbol)))?;
        let day_bars = ohlc_aggregate(&mids(&day.records)?, stride)?;
        for (j, mut bar) in day_bars.into_iter().enumerate() {
            signals.push(
                predicted
                    .get(&(d, j as u64))
                    .copied()
                    .unwrap_or(TrendLabel::Stationary),
            );
            bar.index = bars.len();
            bars.push(bar);
        }
    }
    Ok((bars, signals))
}

/// Runs the long-only strategy on the test days of every stock for every
/// prediction file, with bars of `stride` events.
pub fn cmd_backtest(config: &RunConfig) -> Result<BacktestReport> {
    let run = run_dir(config);
    let source = load_source(config)?;
    let mut jobs = Vec::new();
    let mut datasets = BTreeMap::new();
    for &k in &config.horizons {
        let (bundle, hash) = load_dataset(&run, k)?;
        let symbols: Vec<&String> = source.iter().map(|s| &s.symbol).collect();
        if bundle.metadata.stocks.iter().collect::<Vec<_>>() != symbols {
            return Err(CliError::Data(format!(
                "dataset k={k} was built from other stocks than the source"
            )));
        }
        let n = bundle.test.len();
        for &seed in &config.seeds {
            for model in [BASELINE_ID, MAJORITY_ID, METALOB_ID]
                .into_iter()
                .map(String::from)
                .chain(config.ensemble.external.iter().cloned())
            {
                let path = run.predictions(&model, k, seed);
                if !path.exists() {
                    continue;
                }
                let set = read_predictions(&path)?;
                if set.dataset_hash.as_deref().is_some_and(|h| h != hash)
                    || set.indices().any(|i| i as usize >= n)
                {
                    return Err(CliError::Data(format!(
                        "{}: does not match dataset k={k}",
                        path.display()
                    )));
                }
                for stock in 0..source.len() {
                    jobs.push((model.clone(), k, seed, stock, set.clone()));
                }
            }
        }
        datasets.insert(k, bundle);
    }
    let runs: Vec<Result<BacktestRecord>> = jobs
        .par_iter()
        .map(|(model, k, seed, stock, set)| {
            let src = &source[*stock];
            let (bars, signals) =
                bars_and_signals(src, *stock as u32, &datasets[k], set, config.stride)?;
            let curve = run_strategy(&signals, &bars, config.capital, 1.0)?;
            write_file(
                &run.trade_log(model, *k, *seed, &src.symbol),
                render_trade_log(&curve).as_bytes(),
            )?;
            Ok(BacktestRecord {
                model: model.clone(),
                horizon: *k,
                seed: *seed,
                stock: src.symbol.clone(),
                bars: bars.len(),
                trades: curve.trades.len(),
                final_equity: curve.final_equity,
                return_pct: curve.return_pct,
            })
        })
        .collect();
    let runs: Vec<BacktestRecord> = runs.into_iter().collect::<Result<_>>()?;
    let mut groups: BTreeMap<(String, usize), Vec<(String, f64)>> = BTreeMap::new();
    for r in &runs {
        groups
            .entry((r.model.clone(), r.horizon))
            .or_default()
            .push((r.stock.clone(), r.return_pct));
    }
    let summaries: Vec<(String, usize, Vec<ReturnSummary>)> = groups
        .into_iter()
        .map(|((m, k), v)| (m, k, returns_report(&v)))
        .collect();
    let mut csv = String::from("model,horizon,stock,count,min,median,max\n");
    for (m, k, s) in &summaries {
        for line in lobbench_core::backtest::render_returns_csv(s)
            .lines()
            .skip(1)
        {
            csv.push_str(&format!("{m},{k},{line}\n"));
        }
    }
    write_file(&run.backtest("returns.csv"), csv.as_bytes())?;
    let report = BacktestReport {
        bar_period: config.stride,
        capital: config.capital,
        runs,
        summaries,
    };
    write_json(&run.backtest("returns.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- latency

/// Observations used for timing.
const LATENCY_SAMPLE: usize = 256;

/// Times every trained baseline and a constant reference model on test
/// observations. Runs sequentially so measurements do not compete.
pub fn cmd_latency(config: &RunConfig) -> Result<Vec<LatencyStats>> {
    let run = run_dir(config);
    let mut out = Vec::new();
    for &k in &config.horizons {
        let (bundle, _) = load_dataset(&run, k)?;
        let obs = &bundle.test[..bundle.test.len().min(LATENCY_SAMPLE)];
        if obs.is_empty() {
            return Err(CliError::Data(format!("dataset k={k} has no test rows")));
        }
        let flat: Vec<f32> = obs.iter().flat_map(|o| o.window.iter().copied()).collect();
        let lat = &config.latency;
        let constant = ConstantModel {
            dim: bundle.metadata.window_len(),
        };
        out.push(measure_latency(
            &format!("CONSTANT_k{k}"),
            &constant,
            &flat,
            obs.len(),
            lat.repetitions,
            lat.warmup,
            lat.batch,
        )?);
        for &seed in &config.seeds {
            let path = run.model(BASELINE_ID, k, seed);
            if !path.exists() {
                continue;
            }
            let model: Mlp32 = load_model(&path)?;
            out.push(measure_latency(
                &format!("{BASELINE_ID}_k{k}_s{seed}"),
                &model,
                &flat,
                obs.len(),
                lat.repetitions,
                lat.warmup,
                lat.batch,
            )?);
        }
    }
    write_json(&run.latency(), &out)?;
    Ok(out)
}

// ---------------------------------------------------------------- pipelines

/// Train, predict, ensemble, evaluate and report on existing datasets.
pub fn cmd_run_experiment(config: &RunConfig) -> Result<MetricsReport> {
    cmd_train(config)?;
    cmd_predict(config)?;
    cmd_ensemble(config)?;
    cmd_evaluate(config)
}
