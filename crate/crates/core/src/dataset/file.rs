//! The LOBD binary dataset format (all integers little-endian):
//!
//! | bytes        | content                                     |
//! |--------------|---------------------------------------------|
//! | 4            | magic `LOBD`                                |
//! | 2            | format version (u16, currently 1)           |
//! | 4            | header length `m` (u32)                     |
//! | m            | UTF-8 JSON header                           |
//! | 4·n·h·4L     | f32 observation tensor, row-major           |
//! | n            | labels (0 = up, 1 = stationary, 2 = down)   |
//! | 4            | CRC32C of every preceding byte (u32)        |
//!
//! Observations are stored train, then validation, then test; the header
//! carries the per-split counts and run-length encoded origins.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetBundle, DatasetError, DatasetMetadata, MarketObservation, Origin};
use crate::labeling::TrendLabel;

pub const MAGIC: &[u8; 4] = b"LOBD";
pub const FORMAT_VERSION: u16 = 1;
const PREAMBLE: usize = 4 + 2 + 4;

/// Consecutive observations of one stock-day with consecutive indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginRun {
    pub stock: u32,
    pub day: u32,
    pub start: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub metadata: DatasetMetadata,
    /// Window rows and columns (h, 4L).
    pub window: [usize; 2],
    /// Observation counts for train, validation and test.
    pub counts: [usize; 3],
    pub origins: [Vec<OriginRun>; 3],
}

fn encode_origins(obs: &[MarketObservation]) -> Vec<OriginRun> {
    let mut runs: Vec<OriginRun> = Vec::new();
    for o in obs {
        let Origin { stock, day, index } = o.origin;
        if let Some(last) = runs.last_mut() {
            if last.stock == stock && last.day == day && last.start + last.count == index {
                last.count += 1;
                continue;
            }
        }
        runs.push(OriginRun {
            stock,
            day,
            start: index,
            count: 1,
        });
    }
    runs
}

fn decode_origins(runs: &[OriginRun]) -> Vec<Origin> {
    runs.iter()
        .flat_map(|r| {
            (0..r.count).map(move |i| Origin {
                stock: r.stock,
                day: r.day,
                index: r.start + i,
            })
        })
        .collect()
}

/// Serializes a bundle to bytes.
pub fn encode_dataset(bundle: &DatasetBundle) -> Result<Vec<u8>, DatasetError> {
    bundle.validate()?;
    let splits = [&bundle.train, &bundle.val, &bundle.test];
    let meta = &bundle.metadata;
    let header = FileHeader {
        metadata: meta.clone(),
        window: [meta.history, 4 * meta.levels],
        counts: splits.map(|s| s.len()),
        origins: splits.map(|s| encode_origins(s)),
    };
    let json =
        serde_json::to_vec(&header).map_err(|e| DatasetError::MalformedMetadata(e.to_string()))?;
    let n: usize = header.counts.iter().sum();
    let width = meta.history * 4 * meta.levels;
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + 4 * n * width + n + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for o in splits.iter().flat_map(|s| s.iter()) {
        for v in &o.window {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend(
        splits
            .iter()
            .flat_map(|s| s.iter())
            .map(|o| o.label.index() as u8),
    );
    let crc = crc32c::crc32c(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetBundle, DatasetError> {
    if bytes.len() < PREAMBLE {
        return Err(DatasetError::TruncatedPayload);
    }
    if &bytes[..4] != MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(DatasetError::VersionUnsupported(version));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    if bytes.len() < PREAMBLE + header_len + 4 {
        return Err(DatasetError::TruncatedPayload);
    }
    let header: Result<FileHeader, _> =
        serde_json::from_slice(&bytes[PREAMBLE..PREAMBLE + header_len]);
    let expected_len = header.as_ref().ok().map(|h| {
        let n: usize = h.counts.iter().sum();
        PREAMBLE + header_len + 4 * n * h.window[0] * h.window[1] + n + 4
    });
    if let Some(expected) = expected_len {
        if bytes.len() < expected {
            return Err(DatasetError::TruncatedPayload);
        }
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let actual = crc32c::crc32c(body);
    if stored != actual {
        return Err(DatasetError::ChecksumMismatch { stored, actual });
    }
    let header = header.map_err(|e| DatasetError::MalformedMetadata(e.to_string()))?;
    if Some(bytes.len()) != expected_len {
        return Err(DatasetError::MalformedMetadata(
            "payload length does not match header".into(),
        ));
    }
    let [h, cols] = header.window;
    let width = h * cols;
    let n: usize = header.counts.iter().sum();
    let tensor = &bytes[PREAMBLE + header_len..PREAMBLE + header_len + 4 * n * width];
    let labels = &bytes[PREAMBLE + header_len + 4 * n * width..bytes.len() - 4];

    let mut splits: [Vec<MarketObservation>; 3] = Default::default();
    let mut cursor = 0usize;
    for (s, out) in splits.iter_mut().enumerate() {
        let origins = decode_origins(&header.origins[s]);
        if origins.len() != header.counts[s] {
            return Err(DatasetError::MalformedMetadata(
                "origin runs do not match split counts".into(),
            ));
        }
        out.reserve(origins.len());
        for origin in origins {
            let raw = &tensor[4 * cursor * width..4 * (cursor + 1) * width];
            let window = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let label = TrendLabel::from_index(labels[cursor] as usize).ok_or_else(|| {
                DatasetError::MalformedMetadata(format!("label byte {}", labels[cursor]))
            })?;
            out.push(MarketObservation {
                window,
                label,
                origin,
            });
            cursor += 1;
        }
    }
    let [train, val, test] = splits;
    Ok(DatasetBundle {
        metadata: header.metadata,
        train,
        val,
        test,
    })
}

pub fn write_dataset(bundle: &DatasetBundle, path: &Path) -> Result<(), DatasetError> {
    let bytes = encode_dataset(bundle)?;
    fs::write(path, bytes).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
}

pub fn read_dataset(path: &Path) -> Result<DatasetBundle, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    decode_dataset(&bytes)
}
