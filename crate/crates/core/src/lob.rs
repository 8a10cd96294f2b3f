//! Limit order book state machine.
//!
//! Prices are integer ticks (price × 10^4) everywhere in here; conversion to
//! floating point happens only in [`mid_price`] and at normalization time.
//! The book is aggregated per price level and additionally indexes every
//! resting order so deletions and executions can be applied by order id.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Number of ticks per currency unit (LOBSTER convention).
pub const TICKS_PER_UNIT: i64 = 10_000;
/// Price written for a missing ask level.
pub const ASK_SENTINEL: i64 = 9_999_999_999;
/// Price written for a missing bid level.
pub const BID_SENTINEL: i64 = -9_999_999_999;
/// Default number of levels per side.
pub const DEFAULT_LEVELS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Submission,
    Deletion,
    Execution,
}

/// Nanoseconds after midnight.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn from_seconds_nanos(seconds: u64, nanos: u32) -> Self {
        Timestamp(seconds * 1_000_000_000 + u64::from(nanos))
    }

    pub fn seconds(self) -> u64 {
        self.0 / 1_000_000_000
    }

    pub fn subsec_nanos(self) -> u32 {
        (self.0 % 1_000_000_000) as u32
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.seconds(), self.subsec_nanos())
    }
}

/// One order-flow event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LobEvent {
    pub timestamp: Timestamp,
    pub kind: EventKind,
    pub order_id: u64,
    pub size: u64,
    /// Price in ticks.
    pub price: i64,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BookError {
    #[error("event references unknown order id {0}")]
    UnknownOrderId(u64),
    #[error("submission reuses live order id {0}")]
    DuplicateOrderId(u64),
    #[error("execution of {size} shares exceeds the {remaining} remaining on order {order_id}")]
    ExecutionExceedsRemaining {
        order_id: u64,
        size: u64,
        remaining: u64,
    },
    #[error("event would cross the book (bid {bid} >= ask {ask})")]
    CrossedBookAfterApply { bid: i64, ask: i64 },
    #[error("invalid event: {0}")]
    InvalidEvent(&'static str),
    #[error("record is missing a level-1 quote")]
    IncompleteRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RestingOrder {
    side: Side,
    price: i64,
    remaining: u64,
}

/// Aggregated book plus an order-id index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BookState {
    bids: BTreeMap<i64, u64>,
    asks: BTreeMap<i64, u64>,
    orders: HashMap<u64, RestingOrder>,
}

impl BookState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<(i64, u64)> {
        self.bids.iter().next_back().map(|(p, v)| (*p, *v))
    }

    pub fn best_ask(&self) -> Option<(i64, u64)> {
        self.asks.iter().next().map(|(p, v)| (*p, *v))
    }

    pub fn depth(&self, side: Side, price: i64) -> u64 {
        let levels = match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        };
        levels.get(&price).copied().unwrap_or(0)
    }

    pub fn level_count(&self, side: Side) -> usize {
        match side {
            Side::Bid => self.bids.len(),
            Side::Ask => self.asks.len(),
        }
    }

    pub fn live_orders(&self) -> usize {
        self.orders.len()
    }

    /// Applies one event. On error the book is left unchanged.
    pub fn apply_event(&mut self, e: &LobEvent) -> Result<(), BookError> {
        if e.size == 0 {
            return Err(BookError::InvalidEvent("size must be positive"));
        }
        match e.kind {
            EventKind::Submission => self.submit(e),
            EventKind::Deletion => self.reduce(e.order_id, e.size, true),
            EventKind::Execution => self.reduce(e.order_id, e.size, false),
        }
    }

    fn submit(&mut self, e: &LobEvent) -> Result<(), BookError> {
        if e.price <= 0 {
            return Err(BookError::InvalidEvent("price must be positive"));
        }
        if self.orders.contains_key(&e.order_id) {
            return Err(BookError::DuplicateOrderId(e.order_id));
        }
        match e.side {
            Side::Bid => {
                if let Some((ask, _)) = self.best_ask() {
                    if e.price >= ask {
                        return Err(BookError::CrossedBookAfterApply { bid: e.price, ask });
                    }
                }
                *self.bids.entry(e.price).or_insert(0) += e.size;
            }
            Side::Ask => {
                if let Some((bid, _)) = self.best_bid() {
                    if bid >= e.price {
                        return Err(BookError::CrossedBookAfterApply { bid, ask: e.price });
                    }
                }
                *self.asks.entry(e.price).or_insert(0) += e.size;
            }
        }
        self.orders.insert(
            e.order_id,
            RestingOrder {
                side: e.side,
                price: e.price,
                remaining: e.size,
            },
        );
        Ok(())
    }

    fn reduce(&mut self, order_id: u64, size: u64, saturate: bool) -> Result<(), BookError> {
        let order = *self
            .orders
            .get(&order_id)
            .ok_or(BookError::UnknownOrderId(order_id))?;
        if !saturate && size > order.remaining {
            return Err(BookError::ExecutionExceedsRemaining {
                order_id,
                size,
                remaining: order.remaining,
            });
        }
        let removed = size.min(order.remaining);
        if removed == order.remaining {
            self.orders.remove(&order_id);
        } else if let Some(o) = self.orders.get_mut(&order_id) {
            o.remaining -= removed;
        }
        let levels = match order.side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        };
        let depth = levels
            .get_mut(&order.price)
            .expect("indexed order has a level");
        *depth -= removed;
        if *depth == 0 {
            levels.remove(&order.price);
        }
        Ok(())
    }

    /// Top-`levels` snapshot in the (ask price, ask volume, bid price, bid volume)
    /// per-level layout.
    pub fn snapshot(&self, index: u64, levels: usize) -> LobRecord {
        let mut features = Vec::with_capacity(4 * levels);
        let mut asks = self.asks.iter();
        let mut bids = self.bids.iter().rev();
        let mut complete = true;
        for _ in 0..levels {
            match asks.next() {
                Some((p, v)) => features.extend([*p, *v as i64]),
                None => {
                    complete = false;
                    features.extend([ASK_SENTINEL, 0]);
                }
            }
            match bids.next() {
                Some((p, v)) => features.extend([*p, *v as i64]),
                None => {
                    complete = false;
                    features.extend([BID_SENTINEL, 0]);
                }
            }
        }
        LobRecord {
            index,
            levels,
            features,
            complete,
        }
    }
}

/// One top-L snapshot. `features` holds 4L integers: per level the ask price
/// (ticks), ask volume, bid price (ticks) and bid volume.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LobRecord {
    pub index: u64,
    pub levels: usize,
    pub features: Vec<i64>,
    pub complete: bool,
}

impl LobRecord {
    /// Builds a record from raw level-major values, deriving the completeness
    /// flag from the sentinels.
    pub fn from_features(index: u64, features: Vec<i64>) -> Self {
        assert_eq!(
            features.len() % 4,
            0,
            "features must hold 4 values per level"
        );
        let levels = features.len() / 4;
        let complete = features
            .chunks_exact(4)
            .all(|c| c[0] != ASK_SENTINEL && c[2] != BID_SENTINEL && c[1] > 0 && c[3] > 0);
        LobRecord {
            index,
            levels,
            features,
            complete,
        }
    }

    pub fn ask_price(&self, level: usize) -> i64 {
        self.features[4 * level]
    }

    pub fn ask_volume(&self, level: usize) -> i64 {
        self.features[4 * level + 1]
    }

    pub fn bid_price(&self, level: usize) -> i64 {
        self.features[4 * level + 2]
    }

    pub fn bid_volume(&self, level: usize) -> i64 {
        self.features[4 * level + 3]
    }

    /// Same book content, ignoring the event index.
    pub fn same_book(&self, other: &LobRecord) -> bool {
        self.levels == other.levels && self.features == other.features
    }
}

/// Mid-price of a record in currency units.
pub fn mid_price<T: Scalar>(r: &LobRecord) -> Result<T, BookError> {
    if r.levels == 0 {
        return Err(BookError::IncompleteRecord);
    }
    let (ask, bid) = (r.ask_price(0), r.bid_price(0));
    if ask == ASK_SENTINEL || bid == BID_SENTINEL || r.ask_volume(0) <= 0 || r.bid_volume(0) <= 0 {
        return Err(BookError::IncompleteRecord);
    }
    let sum = T::from_i64(ask + bid).ok_or(BookError::IncompleteRecord)?;
    Ok(sum / T::lit(2.0 * TICKS_PER_UNIT as f64))
}

/// Drops incomplete records, then keeps every `stride`-th of the remainder
/// (positions stride-1, 2*stride-1, ...).
pub fn sample_records(records: &[LobRecord], stride: usize) -> Vec<LobRecord> {
    assert!(stride >= 1, "stride must be at least 1");
    records
        .iter()
        .filter(|r| r.complete)
        .skip(stride - 1)
        .step_by(stride)
        .cloned()
        .collect()
}

/// Replays a stream from an empty book, returning the snapshot after every
/// event.
pub fn replay(events: &[LobEvent], levels: usize) -> Result<Vec<LobRecord>, ReplayError> {
    let mut book = BookState::new();
    let mut out = Vec::with_capacity(events.len());
    for (i, e) in events.iter().enumerate() {
        book.apply_event(e).map_err(|source| ReplayError {
            event_index: i,
            source,
        })?;
        out.push(book.snapshot(i as u64, levels));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event {event_index}: {source}")]
pub struct ReplayError {
    pub event_index: usize,
    #[source]
    pub source: BookError,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(kind: EventKind, id: u64, side: Side, price: i64, size: u64) -> LobEvent {
        LobEvent {
            timestamp: Timestamp(0),
            kind,
            order_id: id,
            size,
            price,
            side,
        }
    }

    #[test]
    fn single_submission_sets_best_bid() {
        let mut b = BookState::new();
        b.apply_event(&ev(EventKind::Submission, 1, Side::Bid, 999_900, 100))
            .unwrap();
        assert_eq!(b.best_bid(), Some((999_900, 100)));
        assert_eq!(b.best_ask(), None);
    }

    #[test]
    fn full_execution_removes_level() {
        let mut b = BookState::new();
        b.apply_event(&ev(EventKind::Submission, 7, Side::Ask, 1_000_100, 50))
            .unwrap();
        b.apply_event(&ev(EventKind::Execution, 7, Side::Ask, 1_000_100, 50))
            .unwrap();
        assert_eq!(b.best_ask(), None);
        assert_eq!(b.level_count(Side::Ask), 0);
        assert_eq!(b.live_orders(), 0);
    }

    #[test]
    fn partial_and_oversized_deletion() {
        let mut b = BookState::new();
        b.apply_event(&ev(EventKind::Submission, 1, Side::Bid, 100, 30))
            .unwrap();
        b.apply_event(&ev(EventKind::Submission, 2, Side::Bid, 100, 20))
            .unwrap();
        b.apply_event(&ev(EventKind::Deletion, 1, Side::Bid, 100, 10))
            .unwrap();
        assert_eq!(b.depth(Side::Bid, 100), 40);
        b.apply_event(&ev(EventKind::Deletion, 1, Side::Bid, 100, 1_000))
            .unwrap();
        assert_eq!(b.depth(Side::Bid, 100), 20);
        assert_eq!(b.live_orders(), 1);
    }

    #[test]
    fn error_paths_leave_book_untouched() {
        let mut b = BookState::new();
        b.apply_event(&ev(EventKind::Submission, 1, Side::Ask, 200, 5))
            .unwrap();
        let before = b.clone();
        assert_eq!(
            b.apply_event(&ev(EventKind::Deletion, 9, Side::Ask, 200, 5)),
            Err(BookError::UnknownOrderId(9))
        );
        assert_eq!(
            b.apply_event(&ev(EventKind::Submission, 2, Side::Bid, 200, 5)),
            Err(BookError::CrossedBookAfterApply { bid: 200, ask: 200 })
        );
        assert!(matches!(
            b.apply_event(&ev(EventKind::Execution, 1, Side::Ask, 200, 6)),
            Err(BookError::ExecutionExceedsRemaining { .. })
        ));
        assert_eq!(
            b.apply_event(&ev(EventKind::Submission, 1, Side::Ask, 300, 5)),
            Err(BookError::DuplicateOrderId(1))
        );
        assert_eq!(b, before);
    }

    #[test]
    fn snapshot_layout_l1() {
        let mut b = BookState::new();
        b.apply_event(&ev(EventKind::Submission, 1, Side::Bid, 999_900, 100))
            .unwrap();
        b.apply_event(&ev(EventKind::Submission, 2, Side::Ask, 1_000_100, 50))
            .unwrap();
        let r = b.snapshot(1, 1);
        assert_eq!(r.features, vec![1_000_100, 50, 999_900, 100]);
        assert!(r.complete);
    }

    #[test]
    fn snapshot_pads_missing_levels() {
        let mut b = BookState::new();
        for (i, p) in [101, 102, 103].iter().enumerate() {
            b.apply_event(&ev(EventKind::Submission, i as u64, Side::Ask, *p, 1))
                .unwrap();
        }
        for i in 0..10 {
            b.apply_event(&ev(
                EventKind::Submission,
                100 + i,
                Side::Bid,
                90 - i as i64,
                1,
            ))
            .unwrap();
        }
        let r = b.snapshot(0, 10);
        assert!(!r.complete);
        for l in 3..10 {
            assert_eq!(r.ask_price(l), ASK_SENTINEL);
            assert_eq!(r.ask_volume(l), 0);
        }
        assert_eq!(r.ask_price(2), 103);
        assert_eq!(r.bid_price(9), 81);
        let empty = BookState::new().snapshot(0, 10);
        assert!(!empty.complete);
        assert!(empty
            .features
            .chunks(4)
            .all(|c| c == [ASK_SENTINEL, 0, BID_SENTINEL, 0]));
    }

    #[test]
    fn mid_price_examples() {
        let r = LobRecord::from_features(0, vec![100_200, 1, 100_000, 1]);
        let m: f64 = mid_price(&r).unwrap();
        assert!((m - 10.01).abs() < 1e-12);
        let r = LobRecord::from_features(0, vec![100_000, 1, 100_000, 1]);
        assert_eq!(mid_price::<f64>(&r).unwrap(), 10.0);
        let r = LobRecord::from_features(0, vec![ASK_SENTINEL, 0, 100_000, 1]);
        assert_eq!(mid_price::<f64>(&r), Err(BookError::IncompleteRecord));
    }

    #[test]
    fn sample_records_counting() {
        let recs: Vec<_> = (0..25)
            .map(|i| LobRecord::from_features(i, vec![2, 1, 1, 1]))
            .collect();
        let s = sample_records(&recs, 10);
        assert_eq!(s.iter().map(|r| r.index).collect::<Vec<_>>(), vec![9, 19]);
        assert_eq!(sample_records(&recs, 1), recs);
    }

    #[test]
    fn sample_records_drops_incomplete_first() {
        let mut recs: Vec<_> = (0..12)
            .map(|i| LobRecord::from_features(i, vec![2, 1, 1, 1]))
            .collect();
        recs[0] = LobRecord::from_features(0, vec![ASK_SENTINEL, 0, 1, 1]);
        let s = sample_records(&recs, 10);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].index, 10);
    }

    proptest! {
        #[test]
        fn mid_price_matches_integer_tick_mean(ask in 1i64..50_000_000, spread in 0i64..10_000) {
            let bid = ask - spread;
            prop_assume!(bid > 0);
            let r = LobRecord::from_features(0, vec![ask, 10, bid, 10]);
            let m: f64 = mid_price(&r).unwrap();
            // independent route: exact half-tick arithmetic, then unscale
            let twice = (ask + bid) as f64;
            let expected = twice / 2.0 / TICKS_PER_UNIT as f64;
            prop_assert!((m - expected).abs() <= 1e-12 * expected.abs());
            if spread > 0 {
                prop_assert!(m > bid as f64 / 1e4 && m < ask as f64 / 1e4);
            } else {
                prop_assert_eq!(m, ask as f64 / 1e4);
            }
        }
    }
}
