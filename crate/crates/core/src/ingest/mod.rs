//! Event-stream and benchmark-file ingestion.

mod fi2010;
mod lobster;
mod synthetic;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fi2010::{
    parse_fi2010, write_fi2010, Fi2010Set, Fi2010Split, FI2010_HORIZONS, FI2010_LABEL_ROW,
    FI2010_LOB_ROWS, FI2010_ROWS,
};
pub use lobster::{parse_lobster_day, parse_timestamp, write_lobster_day};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticGenerator};

use crate::lob::{LobEvent, LobRecord};

/// One stock-day of retained events, optionally with the vendor snapshot
/// after each of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayStream {
    pub symbol: String,
    pub date: String,
    pub events: Vec<LobEvent>,
    /// 1-based line of each retained event in its source file.
    pub source_rows: Vec<usize>,
    pub snapshots: Option<Vec<LobRecord>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFile {
    Message,
    Orderbook,
    Fi2010,
}

impl fmt::Display for SourceFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFile::Message => "message file",
            SourceFile::Orderbook => "orderbook file",
            SourceFile::Fi2010 => "FI-2010 file",
        })
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("message file has {messages} rows but orderbook file has {orderbook}")]
    RowCountMismatch { messages: usize, orderbook: usize },
    #[error("{file} line {line}: {reason}")]
    MalformedRow {
        file: SourceFile,
        line: usize,
        reason: String,
    },
    #[error("message file line {line}: timestamp goes backwards")]
    NonMonotonicTimestamp { line: usize },
    #[error("expected 149 rows, found {found}")]
    UnexpectedRowCount { found: usize },
    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedMatrix {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("label {value} at row {row}, column {column} is not 1, 2 or 3")]
    LabelOutOfRange {
        row: usize,
        column: usize,
        value: f64,
    },
    #[error("stream has no vendor snapshots")]
    MissingSnapshots,
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
