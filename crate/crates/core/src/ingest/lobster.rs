//! LOBSTER message/orderbook CSV pairs.
//!
//! Message columns: time, type, order id, size, price, direction. Types 1
//! (submission), 2 (partial cancel), 3 (full deletion) and 4 (visible
//! execution) are retained; 5 (hidden execution), 6 (cross trade) and 7
//! (halt) are skipped together with their orderbook rows.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DayStream, IngestError, SourceFile};
use crate::lob::{EventKind, LobEvent, LobRecord, Side, Timestamp};

fn malformed(file: SourceFile, line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        file,
        line,
        reason: reason.into(),
    }
}

/// Parses "34200.004241176" into nanoseconds after midnight.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let seconds: u64 = int.parse().ok()?;
    let mut nanos = 0u32;
    for (i, b) in frac.bytes().take(9).enumerate() {
        nanos += u32::from(b - b'0') * 10u32.pow(8 - i as u32);
    }
    Some(Timestamp::from_seconds_nanos(seconds, nanos))
}

struct MessageRow {
    time: Timestamp,
    kind: Option<EventKind>,
    order_id: u64,
    size: u64,
    price: i64,
    side: Side,
}

fn parse_message_row(line: &str, lineno: usize) -> Result<MessageRow, IngestError> {
    let f = SourceFile::Message;
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    if cols.len() < 6 {
        return Err(malformed(
            f,
            lineno,
            format!("expected 6 columns, found {}", cols.len()),
        ));
    }
    let time = parse_timestamp(cols[0]).ok_or_else(|| malformed(f, lineno, "bad timestamp"))?;
    let ty: u8 = cols[1]
        .parse()
        .map_err(|_| malformed(f, lineno, "bad event type"))?;
    let kind = match ty {
        1 => Some(EventKind::Submission),
        2 | 3 => Some(EventKind::Deletion),
        4 => Some(EventKind::Execution),
        5..=7 => None,
        _ => return Err(malformed(f, lineno, format!("unknown event type {ty}"))),
    };
    let order_id: u64 = cols[2]
        .parse()
        .map_err(|_| malformed(f, lineno, "bad order id"))?;
    let size: u64 = cols[3]
        .parse()
        .map_err(|_| malformed(f, lineno, "bad size"))?;
    let price: i64 = cols[4]
        .parse()
        .map_err(|_| malformed(f, lineno, "bad price"))?;
    let side = match cols[5] {
        "1" => Side::Bid,
        "-1" => Side::Ask,
        other => return Err(malformed(f, lineno, format!("bad direction {other:?}"))),
    };
    if kind.is_some() && (size == 0 || price <= 0) {
        return Err(malformed(f, lineno, "size and price must be positive"));
    }
    Ok(MessageRow {
        time,
        kind,
        order_id,
        size,
        price,
        side,
    })
}

fn parse_orderbook_row(line: &str, lineno: usize, index: u64) -> Result<LobRecord, IngestError> {
    let mut values = Vec::with_capacity(40);
    for c in line.split(',') {
        let v: i64 = c
            .trim()
            .parse()
            .map_err(|_| malformed(SourceFile::Orderbook, lineno, format!("bad value {c:?}")))?;
        values.push(v);
    }
    if values.is_empty() || values.len() % 4 != 0 {
        return Err(malformed(
            SourceFile::Orderbook,
            lineno,
            format!("expected a multiple of 4 columns, found {}", values.len()),
        ));
    }
    Ok(LobRecord::from_features(index, values))
}

fn non_empty_lines(path: &Path) -> Result<Vec<(usize, String)>, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parses one day's message/orderbook pair. Events of skipped kinds are
/// dropped together with their orderbook rows so the retained snapshots stay
/// row-aligned with the retained events.
pub fn parse_lobster_day(
    message_path: &Path,
    orderbook_path: &Path,
    symbol: &str,
    date: &str,
) -> Result<DayStream, IngestError> {
    let messages = non_empty_lines(message_path)?;
    let books = non_empty_lines(orderbook_path)?;
    if messages.len() != books.len() {
        return Err(IngestError::RowCountMismatch {
            messages: messages.len(),
            orderbook: books.len(),
        });
    }
    let mut events = Vec::with_capacity(messages.len());
    let mut source_rows = Vec::with_capacity(messages.len());
    let mut snapshots = Vec::with_capacity(messages.len());
    let mut last = Timestamp(0);
    for ((lineno, msg), (ob_lineno, ob)) in messages.iter().zip(&books) {
        let row = parse_message_row(msg, *lineno)?;
        if row.time < last {
            return Err(IngestError::NonMonotonicTimestamp { line: *lineno });
        }
        last = row.time;
        let Some(kind) = row.kind else { continue };
        let index = events.len() as u64;
        snapshots.push(parse_orderbook_row(ob, *ob_lineno, index)?);
        events.push(LobEvent {
            timestamp: row.time,
            kind,
            order_id: row.order_id,
            size: row.size,
            price: row.price,
            side: row.side,
        });
        source_rows.push(*lineno);
    }
    Ok(DayStream {
        symbol: symbol.to_string(),
        date: date.to_string(),
        events,
        source_rows,
        snapshots: Some(snapshots),
    })
}

/// Writes a stream as a LOBSTER file pair. Deletions are written as type 2
/// when they leave shares behind and type 3 otherwise. Requires snapshots.
pub fn write_lobster_day(
    stream: &DayStream,
    message_path: &Path,
    orderbook_path: &Path,
) -> Result<(), IngestError> {
    let snapshots = stream
        .snapshots
        .as_ref()
        .ok_or(IngestError::MissingSnapshots)?;
    let mut msg =
        BufWriter::new(File::create(message_path).map_err(|e| IngestError::io(message_path, e))?);
    let mut ob = BufWriter::new(
        File::create(orderbook_path).map_err(|e| IngestError::io(orderbook_path, e))?,
    );
    let mut remaining: HashMap<u64, u64> = HashMap::new();
    for (e, snap) in stream.events.iter().zip(snapshots) {
        let ty = match e.kind {
            EventKind::Submission => {
                remaining.insert(e.order_id, e.size);
                1
            }
            EventKind::Deletion | EventKind::Execution => {
                let left = remaining.get(&e.order_id).copied().unwrap_or(0);
                let after = left.saturating_sub(e.size);
                if after == 0 {
                    remaining.remove(&e.order_id);
                } else {
                    remaining.insert(e.order_id, after);
                }
                match (e.kind, after) {
                    (EventKind::Execution, _) => 4,
                    (_, 0) => 3,
                    _ => 2,
                }
            }
        };
        let dir = match e.side {
            Side::Bid => 1,
            Side::Ask => -1,
        };
        writeln!(
            msg,
            "{},{},{},{},{},{}",
            e.timestamp, ty, e.order_id, e.size, e.price, dir
        )
        .map_err(|err| IngestError::io(message_path, err))?;
        let row: Vec<String> = snap.features.iter().map(i64::to_string).collect();
        writeln!(ob, "{}", row.join(",")).map_err(|err| IngestError::io(orderbook_path, err))?;
    }
    msg.flush().map_err(|e| IngestError::io(message_path, e))?;
    ob.flush().map_err(|e| IngestError::io(orderbook_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::BookState;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn timestamp_parsing() {
        assert_eq!(
            parse_timestamp("34200.004241176"),
            Some(Timestamp(34_200_004_241_176))
        );
        assert_eq!(
            parse_timestamp("34200.5"),
            Some(Timestamp(34_200_500_000_000))
        );
        assert_eq!(
            parse_timestamp("34200"),
            Some(Timestamp(34_200_000_000_000))
        );
        assert_eq!(parse_timestamp("3a.1"), None);
        assert_eq!(Timestamp(34_200_004_241_176).to_string(), "34200.004241176");
    }

    #[test]
    fn three_row_pair_maps_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.csv",
            "34200.1,1,11,100,1000100,-1\n34200.2,2,11,30,1000100,-1\n34200.3,4,11,20,1000100,-1\n",
        );
        let o = write(
            dir.path(),
            "o.csv",
            "1000100,100,-9999999999,0\n1000100,70,-9999999999,0\n1000100,50,-9999999999,0\n",
        );
        let d = parse_lobster_day(&m, &o, "TEST", "2021-07-01").unwrap();
        let kinds: Vec<_> = d.events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![
                EventKind::Submission,
                EventKind::Deletion,
                EventKind::Execution
            ]
        );
        assert_eq!(d.events[1].size, 30);
        assert_eq!(d.events[0].side, Side::Ask);
        let mut book = BookState::new();
        for (e, snap) in d.events.iter().zip(d.snapshots.as_ref().unwrap()) {
            book.apply_event(e).unwrap();
            assert!(book.snapshot(snap.index, 1).same_book(snap));
        }
    }

    #[test]
    fn hidden_execution_row_is_skipped_with_its_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.csv",
            "34200.1,1,11,100,1000100,-1\n34200.2,5,0,40,1000000,1\n34200.3,1,12,10,999900,1\n",
        );
        let o = write(
            dir.path(),
            "o.csv",
            "1000100,100,-9999999999,0\n1000100,100,-9999999999,0\n1000100,100,999900,10\n",
        );
        let d = parse_lobster_day(&m, &o, "T", "d").unwrap();
        assert_eq!(d.events.len(), 2);
        assert_eq!(d.source_rows, vec![1, 3]);
        let snaps = d.snapshots.unwrap();
        assert_eq!(snaps.len(), 2);
        assert_eq!(snaps[1].features, vec![1_000_100, 100, 999_900, 10]);
        assert_eq!(snaps[1].index, 1);
    }

    #[test]
    fn error_cases() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.csv",
            "34200.1,1,11,100,1000100,-1\n34200.2,1,12,100,1000200,-1\n",
        );
        let o = write(dir.path(), "o.csv", "1000100,100,-9999999999,0\n");
        assert!(matches!(
            parse_lobster_day(&m, &o, "T", "d"),
            Err(IngestError::RowCountMismatch {
                messages: 2,
                orderbook: 1
            })
        ));

        let m = write(
            dir.path(),
            "m2.csv",
            "34200.1,1,11,100,1000100,-1\n34200.2,1,x,100,1000200,-1\n",
        );
        let o = write(dir.path(), "o2.csv", "1,1,1,1\n1,1,1,1\n");
        match parse_lobster_day(&m, &o, "T", "d") {
            Err(IngestError::MalformedRow { line, file, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(file, SourceFile::Message);
            }
            other => panic!("unexpected {other:?}"),
        }

        let m = write(
            dir.path(),
            "m3.csv",
            "34200.2,1,11,100,1000100,-1\n34200.1,1,12,100,1000200,-1\n",
        );
        assert!(matches!(
            parse_lobster_day(&m, &o, "T", "d"),
            Err(IngestError::NonMonotonicTimestamp { line: 2 })
        ));
    }
}
