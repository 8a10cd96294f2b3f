mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{read, small_config};
use lobbench_cli::commands::*;
use lobbench_cli::config::{RunConfig, SourceConfig, Theta};
use lobbench_cli::run_dir::{file_crc, Manifest, RunDir};
use lobbench_cli::{execute, Command};
use lobbench_core::dataset::{read_dataset, Split};
use lobbench_core::labeling::TrendLabel;
use lobbench_core::predictor::{read_predictions, write_predictions, PredictionSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes a prediction file that agrees with the test labels except for a
/// `noise` fraction of rows.
fn write_external(run: &RunDir, model: &str, k: usize, seed: u64, noise: f64) {
    let path = run.dataset(k);
    let bundle = read_dataset(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + k as u64);
    let labels: Vec<TrendLabel> = bundle
        .labels(Split::Test)
        .into_iter()
        .map(|l| {
            if rng.gen::<f64>() < noise {
                TrendLabel::from_index(rng.gen_range(0..3)).unwrap()
            } else {
                l
            }
        })
        .collect();
    let mut set = PredictionSet::from_labels(model, k, seed, &labels);
    set.dataset_hash = Some(file_crc(&path).unwrap());
    let out = run.predictions(model, k, seed);
    std::fs::create_dir_all(out.parent().unwrap()).unwrap();
    write_predictions(&set, &out).unwrap();
}

#[test]
fn build_writes_one_file_per_horizon_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    let report = cmd_build_dataset(&c).unwrap();
    assert_eq!(report.horizons.len(), 2);
    let run = RunDir::new(dir.path());
    for h in &report.horizons {
        let path = run.dataset(h.horizon);
        assert_eq!(file_crc(&path).unwrap(), h.checksum);
        let b = read_dataset(&path).unwrap();
        assert_eq!(b.metadata.stocks, vec!["SYNA", "SYNB"]);
        assert_eq!(b.metadata.window_len(), 10 * 40);
        assert_eq!(h.counts, [b.train.len(), b.val.len(), b.test.len()]);
        // 2 stocks x 3 splits, shares in percent
        assert_eq!(h.shares.len(), 6);
        for s in &h.shares {
            assert!((s.shares.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }
    assert!(run.report("build.json").exists());

    let again = tempfile::tempdir().unwrap();
    let report2 = cmd_build_dataset(&small_config(again.path())).unwrap();
    assert_eq!(
        report
            .horizons
            .iter()
            .map(|h| &h.checksum)
            .collect::<Vec<_>>(),
        report2
            .horizons
            .iter()
            .map(|h| &h.checksum)
            .collect::<Vec<_>>()
    );
}

#[test]
fn auto_theta_is_recorded_and_balances_training_labels() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.theta = Theta::AUTO;
    c.horizons = vec![5];
    let report = cmd_build_dataset(&c).unwrap();
    let h = &report.horizons[0];
    assert_eq!(report.theta_mode, "auto");
    assert!(h.theta > 0.0 && h.theta < 0.05);
    let b = read_dataset(&RunDir::new(dir.path()).dataset(5)).unwrap();
    assert_eq!(b.metadata.theta, h.theta);
    let counts = b.class_counts(Split::Train, None);
    let n: usize = counts.iter().sum();
    for c in counts {
        // within 10 points of a third
        assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.10, "{counts:?}");
    }
}

#[test]
fn baseline_only_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    cmd_build_dataset(&c).unwrap();
    let m = cmd_run_experiment(&c).unwrap();
    // 1 model x 2 horizons x 2 seeds
    assert_eq!(m.cells.len(), 4);
    assert!(m.cells.iter().all(|x| x.model == BASELINE_ID));
    assert!(m.missing.is_empty());
    let table = read(&RunDir::new(dir.path()).report("table.csv"));
    assert_eq!(table.lines().count(), 2);
    assert!(table.starts_with("model,claimed_f1,measured_f1,measured_std,rank,score\nMLP,"));
    let ens = cmd_ensemble(&c).unwrap();
    assert!(ens.cells.iter().all(|e| e.skipped.is_some()));
}

#[test]
fn external_predictions_add_ensemble_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.ensemble.external = vec!["EXTA".into(), "EXTB".into()];
    let mut claimed = BTreeMap::new();
    claimed.insert(
        "EXTA".to_string(),
        [("1".to_string(), 80.0), ("5".to_string(), 80.0)].into(),
    );
    c.claimed = claimed;
    let run = RunDir::new(dir.path());
    cmd_build_dataset(&c).unwrap();
    for k in [1, 5] {
        for s in [0, 1] {
            write_external(&run, "EXTA", k, s, 0.2);
            // EXTB is absent for seed 1
            if s == 0 {
                write_external(&run, "EXTB", k, s, 0.4);
            }
        }
    }
    let m = cmd_run_experiment(&c).unwrap();
    let models: std::collections::BTreeSet<&str> =
        m.cells.iter().map(|x| x.model.as_str()).collect();
    assert_eq!(
        models,
        ["EXTA", "EXTB", "MAJORITY", "METALOB", "MLP"]
            .into_iter()
            .collect()
    );
    assert_eq!(m.missing.len(), 2, "{:?}", m.missing);
    assert!(m.missing.iter().all(|x| x.starts_with("EXTB_k")));

    // ensembles cover the last 15% of the test rows, with original indices
    let test_len = read_dataset(&run.dataset(5)).unwrap().test.len();
    let maj = read_predictions(&run.predictions("MAJORITY", 5, 0)).unwrap();
    let meta = read_predictions(&run.predictions("METALOB", 5, 0)).unwrap();
    let (a, b, held) = lobbench_core::ensemble::meta_split_sizes(test_len);
    assert_eq!(maj.len(), held);
    assert_eq!(maj.rows[0].index, (a + b) as u64);
    assert_eq!(
        maj.indices().collect::<Vec<_>>(),
        meta.indices().collect::<Vec<_>>()
    );
    assert_eq!(maj.extra["members"], "MLP;EXTA;EXTB");

    // a strong member dominates the weighted vote
    let f1 = |model: &str| {
        m.cells
            .iter()
            .find(|x| x.model == model && x.horizon == 5 && x.seed == 0)
            .unwrap()
            .f1
    };
    assert!(f1("MAJORITY") > f1("MLP"));

    let table: Vec<_> = table_rows(&m, &c.claimed_f1().unwrap());
    let exta = table.iter().find(|r| r.model == "EXTA").unwrap();
    assert_eq!(exta.claimed_f1, Some(80.0));
    assert!(exta.score.is_some());
    assert!(run.report("agreement_k5_s0.csv").exists());
}

/// Ranks in the rendered table equal ranks recomputed by sorting the F1
/// column independently.
#[test]
fn rank_column_matches_independent_sort() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.ensemble.external = vec!["EXTA".into(), "EXTB".into()];
    let run = RunDir::new(dir.path());
    cmd_build_dataset(&c).unwrap();
    for k in [1, 5] {
        for s in [0, 1] {
            write_external(&run, "EXTA", k, s, 0.3);
            write_external(&run, "EXTB", k, s, 0.6);
        }
    }
    cmd_run_experiment(&c).unwrap();
    let csv = read(&run.report("table.csv"));
    let rows: Vec<(String, f64, usize)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].to_string(),
                f[2].parse().unwrap(),
                f[4].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 5);
    // unrounded means from the metrics file, sorted by hand
    let metrics: MetricsReport = serde_json::from_str(&read(&run.report("metrics.json"))).unwrap();
    let mut means: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for cell in &metrics.cells {
        means.entry(cell.model.clone()).or_default().push(cell.f1);
    }
    let mut order: Vec<(String, f64)> = means
        .into_iter()
        .map(|(m, v)| (m, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let mut swapped = true;
    while swapped {
        swapped = false;
        for i in 1..order.len() {
            if order[i].1 > order[i - 1].1 {
                order.swap(i, i - 1);
                swapped = true;
            }
        }
    }
    for (rank, (model, mean)) in order.iter().enumerate() {
        let row = rows.iter().find(|r| &r.0 == model).unwrap();
        assert_eq!(row.2, rank + 1, "{model}");
        assert!((row.1 - 100.0 * mean).abs() <= 0.05 + 1e-9);
    }
}

#[test]
fn backtest_writes_logs_and_all_stationary_never_trades() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.horizons = vec![5];
    c.seeds = vec![0];
    c.ensemble.external = vec!["FLAT".into()];
    let run = RunDir::new(dir.path());
    cmd_build_dataset(&c).unwrap();
    let n = read_dataset(&run.dataset(5)).unwrap().test.len();
    let flat = PredictionSet::from_labels("FLAT", 5, 0, &vec![TrendLabel::Stationary; n]);
    let out = run.predictions("FLAT", 5, 0);
    std::fs::create_dir_all(out.parent().unwrap()).unwrap();
    write_predictions(&flat, &out).unwrap();
    cmd_train(&c).unwrap();
    cmd_predict(&c).unwrap();
    let report = cmd_backtest(&c).unwrap();
    // MLP and FLAT for each of two stocks
    assert_eq!(report.runs.len(), 4);
    for r in report.runs.iter().filter(|r| r.model == "FLAT") {
        assert_eq!(r.trades, 0);
        assert_eq!(r.final_equity, 10_000.0);
        assert_eq!(r.return_pct, 0.0);
    }
    // two test days of 3000 events, bars of 10 complete records
    for r in &report.runs {
        assert!(r.bars > 500 && r.bars <= 600, "{}", r.bars);
    }
    let log = read(&run.trade_log("FLAT", 5, 0, "SYNA"));
    assert_eq!(log, "bar_index,action,fill_price,equity_after\n");
    let returns = read(&run.backtest("returns.csv"));
    assert!(returns.starts_with("model,horizon,stock,count,min,median,max\n"));
    assert_eq!(returns.lines().count(), 1 + 4);
}

#[test]
fn full_run_manifest_covers_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    execute(Command::Run, &c).unwrap();
    let run = RunDir::new(dir.path());
    let manifest: Manifest = serde_json::from_str(&read(&run.manifest())).unwrap();
    let on_disk = Manifest::scan(dir.path()).unwrap();
    assert_eq!(manifest, on_disk);
    for key in [
        "config.toml",
        "datasets/k1.lobd",
        "datasets/k5.lobd",
        "models/MLP_k5_s1.json",
        "predictions/MLP_k1_s0.csv",
        "reports/build.json",
        "reports/metrics.json",
        "reports/table.csv",
        "backtest/returns.csv",
        "backtest/trades/MLP_k5_s0_SYNB.csv",
        "latency.json",
    ] {
        assert!(manifest.files.contains_key(key), "{key}");
    }
    let p = read(&run.predictions("MLP", 5, 0));
    let hash = file_crc(&run.dataset(5)).unwrap();
    assert!(p.contains(&format!("# dataset_hash={hash}")));
}

fn write_lobster_source(dir: &Path, stocks: &[&str], days: usize) {
    use lobbench_cli::source::{synthetic_config, synthetic_seed};
    use lobbench_core::ingest::{generate_synthetic, write_lobster_day};
    for (s, sym) in stocks.iter().enumerate() {
        for d in 0..days {
            let mut cfg = synthetic_config(sym, s, d, 10);
            cfg.emit_snapshots = true;
            let stream = generate_synthetic(synthetic_seed(9, s, d), 2_000, cfg);
            let stem = format!("{sym}_{}_34200000_57600000", stream.date);
            write_lobster_day(
                &stream,
                &dir.join(format!("{stem}_message_10.csv")),
                &dir.join(format!("{stem}_orderbook_10.csv")),
            )
            .unwrap();
        }
    }
}

#[test]
fn lobster_directory_source() {
    let data = tempfile::tempdir().unwrap();
    write_lobster_source(data.path(), &["AAA", "BBB"], 10);
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.source = SourceConfig::Lobster {
        dir: data.path().to_path_buf(),
    };
    c.horizons = vec![2];
    let report = cmd_build_dataset(&c).unwrap();
    assert_eq!(report.source, "lobster");
    let b = read_dataset(&RunDir::new(dir.path()).dataset(2)).unwrap();
    assert_eq!(b.metadata.stocks, vec!["AAA", "BBB"]);
    assert_eq!(b.metadata.split_days.test, vec!["2021-07-09", "2021-07-10"]);
    assert!(!b.test.is_empty());

    // vendor snapshots agree with the synthetic source replayed from scratch
    let mut syn = small_config(dir.path());
    syn.source = SourceConfig::Synthetic {
        stocks: vec!["AAA".into(), "BBB".into()],
        days: 10,
        events_per_day: 2_000,
        seed: 9,
    };
    let a = lobbench_cli::source::load_source(&c).unwrap();
    let s = lobbench_cli::source::load_source(&syn).unwrap();
    assert_eq!(a.len(), s.len());
    for (x, y) in a.iter().zip(&s) {
        for (dx, dy) in x.days.iter().zip(&y.days) {
            assert_eq!(dx.records.len(), dy.records.len());
            assert!(dx
                .records
                .iter()
                .zip(&dy.records)
                .all(|(p, q)| p.same_book(q)));
        }
    }
}

#[test]
fn fi2010_files_with_shipped_labels() {
    use lobbench_core::ingest::{write_fi2010, Fi2010Set, Fi2010Split};
    let data = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut make = |n: usize, split| {
        let features = (0..n * 40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = (0..n)
            .map(|_| [0; 5].map(|_: i32| TrendLabel::from_index(rng.gen_range(0..3)).unwrap()))
            .collect();
        Fi2010Set {
            features,
            labels,
            split,
        }
    };
    let train = data.path().join("Train.txt");
    let test = data.path().join("Test.txt");
    write_fi2010(&make(400, Fi2010Split::Train), &train).unwrap();
    write_fi2010(&make(200, Fi2010Split::Test), &test).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.source = SourceConfig::Fi2010 {
        train: train.clone(),
        test: test.clone(),
        val_fraction: 0.2,
    };
    c.horizons = vec![5, 10];
    c.seeds = vec![0];
    c.validate().unwrap();
    let report = execute(Command::Run, &c).unwrap();
    assert!(
        report.starts_with("scored 2 prediction file(s)"),
        "{report}"
    );
    let b = read_dataset(&RunDir::new(dir.path()).dataset(10)).unwrap();
    // 320 / 80 / 200 samples, history 10; shipped labels need no lookahead
    assert_eq!(b.train.len(), 320 - 9);
    assert_eq!(b.val.len(), 80 - 9);
    assert_eq!(b.test.len(), 200 - 9);
    assert!(!RunDir::new(dir.path()).backtest("returns.csv").exists());

    c.horizons = vec![4];
    assert!(c.validate().is_err());
}

#[test]
fn global_weight_scope_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut c: RunConfig = small_config(dir.path());
    c.seeds = vec![0];
    c.ensemble.external = vec!["EXTA".into()];
    c.ensemble.weights = lobbench_cli::config::WeightScope::Global;
    let run = RunDir::new(dir.path());
    cmd_build_dataset(&c).unwrap();
    for k in [1, 5] {
        write_external(&run, "EXTA", k, 0, 0.2);
    }
    cmd_train(&c).unwrap();
    cmd_predict(&c).unwrap();
    let r = cmd_ensemble(&c).unwrap();
    assert_eq!(r.cells.len(), 2);
    // the same weight per model across horizons
    assert_eq!(r.cells[0].weights, r.cells[1].weights);
}
