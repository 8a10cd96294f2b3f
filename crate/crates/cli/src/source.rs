//! Loading event-level sources into per-stock, per-day book records.

use std::fs;
use std::path::{Path, PathBuf};

use lobbench_core::dataset::{DayRecords, StockDays};
use lobbench_core::ingest::{generate_synthetic, parse_lobster_day, SyntheticConfig};
use lobbench_core::lob::{mid_price, replay, sample_records, LobRecord};
use rayon::prelude::*;

use crate::config::{RunConfig, SourceConfig};
use crate::error::{CliError, Result};

/// Every complete book record of one day, in event order.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDay {
    pub date: String,
    pub records: Vec<LobRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceStock {
    pub symbol: String,
    pub days: Vec<SourceDay>,
}

impl SourceStock {
    /// Sampled records per day, as the dataset builder expects them.
    pub fn sampled(&self, stride: usize) -> StockDays {
        StockDays {
            symbol: self.symbol.clone(),
            days: self
                .days
                .iter()
                .map(|d| DayRecords {
                    date: d.date.clone(),
                    records: sample_records(&d.records, stride),
                })
                .collect(),
        }
    }
}

/// Starting mid (ticks) of the first synthetic stock; later stocks start
/// higher by the step.
pub const SYNTHETIC_MID: i64 = 10_000;
pub const SYNTHETIC_MID_STEP: i64 = 2_000;

/// Generator settings for dataset building: thin queues spread over many
/// levels, so the touch is depleted often enough for the mid to move at
/// θ = 0.002 while all ten levels stay populated.
pub fn synthetic_config(symbol: &str, stock: usize, day: usize, levels: usize) -> SyntheticConfig {
    SyntheticConfig {
        symbol: symbol.to_string(),
        date: synthetic_date(day),
        levels,
        initial_mid: SYNTHETIC_MID + SYNTHETIC_MID_STEP * stock as i64,
        submission_share: 0.6,
        deletion_share: 0.2,
        execution_share: 0.2,
        improve_share: 0.3,
        placement_decay: 0.85,
        max_lots: 2,
        emit_snapshots: false,
        ..SyntheticConfig::default()
    }
}

/// Per-stock, per-day seed for the synthetic generator.
pub fn synthetic_seed(seed: u64, stock: usize, day: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((stock as u64) << 32 | day as u64)
}

pub fn synthetic_date(day: usize) -> String {
    format!("2021-07-{:02}", day + 1)
}

fn complete(records: Vec<LobRecord>) -> Vec<LobRecord> {
    records.into_iter().filter(|r| r.complete).collect()
}

/// Loads an event-level source. FI-2010 has no events and is rejected.
pub fn load_source(config: &RunConfig) -> Result<Vec<SourceStock>> {
    match &config.source {
        SourceConfig::Synthetic {
            stocks,
            days,
            events_per_day,
            seed,
        } => {
            let jobs: Vec<(usize, usize)> = (0..stocks.len())
                .flat_map(|s| (0..*days).map(move |d| (s, d)))
                .collect();
            let loaded: Vec<SourceDay> = jobs
                .par_iter()
                .map(|&(s, d)| {
                    let gen = synthetic_config(&stocks[s], s, d, config.levels);
                    let stream =
                        generate_synthetic(synthetic_seed(*seed, s, d), *events_per_day, gen);
                    let records = replay(&stream.events, config.levels).map_err(|e| {
                        CliError::Internal(format!("{} {}: {e}", stream.symbol, stream.date))
                    })?;
                    Ok(SourceDay {
                        date: stream.date,
                        records: complete(records),
                    })
                })
                .collect::<Result<_>>()?;
            let mut it = loaded.into_iter();
            Ok(stocks
                .iter()
                .map(|symbol| SourceStock {
                    symbol: symbol.clone(),
                    days: it.by_ref().take(*days).collect(),
                })
                .collect())
        }
        SourceConfig::Lobster { dir } => load_lobster_dir(dir, config.levels),
        SourceConfig::Fi2010 { .. } => Err(CliError::Config(
            "this command needs an event-level source (synthetic or lobster)".into(),
        )),
    }
}

/// One LOBSTER file pair found in a directory.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LobsterPair {
    pub symbol: String,
    pub date: String,
    pub message: PathBuf,
    pub orderbook: PathBuf,
}

/// Finds `<SYMBOL>_<DATE>_..._message_<L>.csv` files with their orderbook
/// counterparts, sorted by symbol and date.
pub fn find_lobster_pairs(dir: &Path) -> Result<Vec<LobsterPair>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut pairs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if !name.ends_with(".csv") || !name.contains("_message_") {
            continue;
        }
        let mut parts = name.split('_');
        let (Some(symbol), Some(date)) = (parts.next(), parts.next()) else {
            continue;
        };
        let orderbook = dir.join(name.replace("_message_", "_orderbook_"));
        if !orderbook.exists() {
            return Err(CliError::Data(format!(
                "{}: no matching orderbook file",
                path.display()
            )));
        }
        pairs.push(LobsterPair {
            symbol: symbol.to_string(),
            date: date.to_string(),
            message: path,
            orderbook,
        });
    }
    if pairs.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no LOBSTER message files",
            dir.display()
        )));
    }
    pairs.sort();
    Ok(pairs)
}

fn load_lobster_dir(dir: &Path, levels: usize) -> Result<Vec<SourceStock>> {
    let pairs = find_lobster_pairs(dir)?;
    let days: Vec<(String, SourceDay)> = pairs
        .par_iter()
        .map(|p| {
            let stream = parse_lobster_day(&p.message, &p.orderbook, &p.symbol, &p.date)
                .map_err(|e| CliError::from(e).context(p.message.display()))?;
            let snapshots = stream.snapshots.unwrap_or_default();
            if let Some(r) = snapshots.iter().find(|r| r.levels < levels) {
                return Err(CliError::Config(format!(
                    "{}: file has {} levels, config asks for {levels}",
                    p.orderbook.display(),
                    r.levels
                )));
            }
            let records = snapshots
                .into_iter()
                .map(|r| LobRecord::from_features(r.index, r.features[..4 * levels].to_vec()))
                .collect();
            Ok((
                p.symbol.clone(),
                SourceDay {
                    date: p.date.clone(),
                    records: complete(records),
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut stocks: Vec<SourceStock> = Vec::new();
    for (symbol, day) in days {
        match stocks.last_mut() {
            Some(s) if s.symbol == symbol => s.days.push(day),
            _ => stocks.push(SourceStock {
                symbol,
                days: vec![day],
            }),
        }
    }
    Ok(stocks)
}

/// Mid-prices (currency units) of records known to be complete.
pub fn mids(records: &[LobRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| mid_price::<f64>(r).map_err(|e| CliError::Internal(e.to_string())))
        .collect()
}
