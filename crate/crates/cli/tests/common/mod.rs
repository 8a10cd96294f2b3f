#![allow(dead_code)]

use std::path::Path;

use lobbench_cli::config::{RunConfig, SourceConfig, Theta};

/// A run small enough for tests: two synthetic stocks, short days and a
/// tiny network.
pub fn small_config(run_dir: &Path) -> RunConfig {
    let mut c = RunConfig {
        run_dir: run_dir.to_path_buf(),
        horizons: vec![1, 5],
        theta: Theta::Fixed(0.002),
        history: 10,
        seeds: vec![0, 1],
        source: SourceConfig::Synthetic {
            stocks: vec!["SYNA".into(), "SYNB".into()],
            days: 10,
            events_per_day: 3_000,
            seed: 3,
        },
        ..RunConfig::default()
    };
    c.train.hidden = vec![16];
    c.train.epochs = 3;
    c.ensemble.meta_epochs = 5;
    c.latency.repetitions = 30;
    c
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
