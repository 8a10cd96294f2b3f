//! Deterministic synthetic order flow.
//!
//! Every event draws its randomness from a ChaCha stream keyed on
//! `(seed, event index)`, so any event can be regenerated from the state
//! preceding it. The generator keeps its own per-order queues (independent of
//! [`crate::lob::BookState`]) and, when asked, emits the vendor-style snapshot
//! aggregated from those queues after every event. That snapshot is the
//! oracle reconstruction is checked against.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DayStream;
use crate::lob::{
    EventKind, LobEvent, LobRecord, Side, Timestamp, ASK_SENTINEL, BID_SENTINEL, DEFAULT_LEVELS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub symbol: String,
    pub date: String,
    pub levels: usize,
    /// Starting mid in ticks.
    pub initial_mid: i64,
    pub tick: i64,
    pub submission_share: f64,
    pub deletion_share: f64,
    pub execution_share: f64,
    /// Fraction of deletions that cancel only part of an order.
    pub partial_cancel_share: f64,
    /// Deletions pick among this many best levels.
    pub touch_levels: usize,
    /// Probability of stepping one more tick away from the touch when placing.
    pub placement_decay: f64,
    /// Probability that a touch-level submission improves the quote when the
    /// spread allows it.
    pub improve_share: f64,
    pub lot: u64,
    pub max_lots: u64,
    pub start_time: Timestamp,
    pub mean_gap_ns: u64,
    pub emit_snapshots: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            symbol: "SYN".into(),
            date: "2021-07-01".into(),
            levels: DEFAULT_LEVELS,
            initial_mid: 100_000,
            tick: 100,
            submission_share: 0.6,
            deletion_share: 0.3,
            execution_share: 0.1,
            partial_cancel_share: 0.3,
            touch_levels: 5,
            placement_decay: 0.55,
            improve_share: 0.2,
            lot: 10,
            max_lots: 20,
            start_time: Timestamp::from_seconds_nanos(34_200, 0),
            mean_gap_ns: 1_000_000,
            emit_snapshots: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct GenOrder {
    side: Side,
    price: i64,
    remaining: u64,
}

/// Streaming generator yielding each event with its post-event snapshot.
/// Resting orders at one price, oldest first, with their total size.
#[derive(Debug, Clone, Default)]
struct Level {
    ids: Vec<u64>,
    depth: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    config: SyntheticConfig,
    seed: u64,
    n_events: u64,
    index: u64,
    clock: u64,
    next_id: u64,
    bids: BTreeMap<i64, Level>,
    asks: BTreeMap<i64, Level>,
    orders: HashMap<u64, GenOrder>,
}

impl SyntheticGenerator {
    pub fn new(seed: u64, n_events: u64, config: SyntheticConfig) -> Self {
        assert!(n_events >= 1, "n_events must be at least 1");
        let clock = config.start_time.0;
        Self {
            config,
            seed,
            n_events,
            index: 0,
            clock,
            next_id: 1,
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            orders: HashMap::new(),
        }
    }

    fn seeding_events(&self) -> u64 {
        2 * (self.config.levels as u64 + 2)
    }

    fn event_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }

    fn queues(&mut self, side: Side) -> &mut BTreeMap<i64, Level> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    fn best(&self, side: Side) -> Option<i64> {
        match side {
            Side::Bid => self.bids.keys().next_back().copied(),
            Side::Ask => self.asks.keys().next().copied(),
        }
    }

    fn side_len(&self, side: Side) -> usize {
        match side {
            Side::Bid => self.bids.len(),
            Side::Ask => self.asks.len(),
        }
    }

    fn size(&self, rng: &mut ChaCha8Rng) -> u64 {
        self.config.lot * rng.gen_range(1..=self.config.max_lots)
    }

    fn submission(&mut self, rng: &mut ChaCha8Rng, side: Side) -> LobEvent {
        let tick = self.config.tick;
        let mut distance = 0i64;
        while distance < 4 * self.config.levels as i64
            && rng.gen::<f64>() < self.config.placement_decay
        {
            distance += 1;
        }
        let improve = rng.gen::<f64>() < self.config.improve_share;
        let (bid, ask) = (self.best(Side::Bid), self.best(Side::Ask));
        let price = match side {
            Side::Bid => {
                let p = match (bid, ask) {
                    (Some(b), Some(a)) if distance == 0 && improve && a - b > tick => b + tick,
                    (Some(b), _) => b - distance * tick,
                    (None, Some(a)) => a - (distance + 1) * tick,
                    (None, None) => self.config.initial_mid - (distance + 1) * tick,
                };
                p.max(tick)
            }
            Side::Ask => {
                let p = match (bid, ask) {
                    (Some(b), Some(a)) if distance == 0 && improve && a - b > tick => a - tick,
                    (_, Some(a)) => a + distance * tick,
                    (Some(b), None) => b + (distance + 1) * tick,
                    (None, None) => self.config.initial_mid + (distance + 1) * tick,
                };
                // a clamped bid can sit at one tick; asks stay above it
                match bid {
                    Some(b) => p.max(b + tick),
                    None => p,
                }
            }
        };
        let size = self.size(rng);
        self.submit_at(side, price, size)
    }

    fn submit_at(&mut self, side: Side, price: i64, size: u64) -> LobEvent {
        let id = self.next_id;
        self.next_id += 1;
        let level = self.queues(side).entry(price).or_default();
        level.ids.push(id);
        level.depth += size;
        self.orders.insert(
            id,
            GenOrder {
                side,
                price,
                remaining: size,
            },
        );
        LobEvent {
            timestamp: Timestamp(self.clock),
            kind: EventKind::Submission,
            order_id: id,
            size,
            price,
            side,
        }
    }

    fn remove_shares(&mut self, id: u64, size: u64) {
        let order = self.orders.get_mut(&id).expect("live order");
        order.remaining -= size;
        let GenOrder {
            side,
            price,
            remaining,
        } = *order;
        if remaining == 0 {
            self.orders.remove(&id);
        }
        let queues = self.queues(side);
        let level = queues.get_mut(&price).expect("level exists");
        level.depth -= size;
        if remaining == 0 {
            let pos = level.ids.iter().position(|o| *o == id).expect("queued");
            level.ids.remove(pos);
            if level.ids.is_empty() {
                queues.remove(&price);
            }
        }
    }

    fn deletion(&mut self, rng: &mut ChaCha8Rng, side: Side) -> LobEvent {
        let levels = self.side_len(side).min(self.config.touch_levels);
        let pick = rng.gen_range(0..levels);
        let queue = &match side {
            Side::Bid => self.bids.values().rev().nth(pick),
            Side::Ask => self.asks.values().nth(pick),
        }
        .expect("level in range")
        .ids;
        let id = queue[rng.gen_range(0..queue.len())];
        let order = self.orders[&id];
        let size = if order.remaining > 1 && rng.gen::<f64>() < self.config.partial_cancel_share {
            rng.gen_range(1..order.remaining)
        } else {
            order.remaining
        };
        self.remove_shares(id, size);
        LobEvent {
            timestamp: Timestamp(self.clock),
            kind: EventKind::Deletion,
            order_id: id,
            size,
            price: order.price,
            side,
        }
    }

    fn execution(&mut self, rng: &mut ChaCha8Rng, side: Side) -> LobEvent {
        let best = self.best(side).expect("non-empty side");
        let id = self.queues(side)[&best].ids[0];
        let order = self.orders[&id];
        let size = if rng.gen_bool(0.5) {
            order.remaining
        } else {
            rng.gen_range(1..=order.remaining)
        };
        self.remove_shares(id, size);
        LobEvent {
            timestamp: Timestamp(self.clock),
            kind: EventKind::Execution,
            order_id: id,
            size,
            price: order.price,
            side,
        }
    }

    fn step(&mut self) -> LobEvent {
        let mut rng = self.event_rng();
        self.clock += rng.gen_range(0..=2 * self.config.mean_gap_ns);
        if self.index < self.seeding_events() {
            let level = (self.index / 2) as i64;
            let side = if self.index.is_multiple_of(2) {
                Side::Bid
            } else {
                Side::Ask
            };
            let price = match side {
                Side::Bid => self.config.initial_mid - (level + 1) * self.config.tick,
                Side::Ask => self.config.initial_mid + (level + 1) * self.config.tick,
            };
            let size = self.size(&mut rng);
            return self.submit_at(side, price.max(self.config.tick), size);
        }
        let u: f64 = rng.gen();
        let mut side = if rng.gen_bool(0.5) {
            Side::Bid
        } else {
            Side::Ask
        };
        let c = &self.config;
        let total = c.submission_share + c.deletion_share + c.execution_share;
        let kind = if u * total < c.submission_share {
            EventKind::Submission
        } else if u * total < c.submission_share + c.deletion_share {
            EventKind::Deletion
        } else {
            EventKind::Execution
        };
        if kind != EventKind::Submission && self.side_len(side) == 0 {
            side = match side {
                Side::Bid => Side::Ask,
                Side::Ask => Side::Bid,
            };
            if self.side_len(side) == 0 {
                return self.submission(&mut rng, side);
            }
        }
        match kind {
            EventKind::Submission => self.submission(&mut rng, side),
            EventKind::Deletion => self.deletion(&mut rng, side),
            EventKind::Execution => self.execution(&mut rng, side),
        }
    }

    /// Vendor-style top-L snapshot aggregated from the generator's own queues.
    pub fn snapshot(&self, index: u64) -> LobRecord {
        let levels = self.config.levels;
        let asks: Vec<(i64, i64)> = self
            .asks
            .iter()
            .take(levels)
            .map(|(p, l)| (*p, l.depth as i64))
            .collect();
        let bids: Vec<(i64, i64)> = self
            .bids
            .iter()
            .rev()
            .take(levels)
            .map(|(p, l)| (*p, l.depth as i64))
            .collect();
        let mut features = Vec::with_capacity(4 * levels);
        for l in 0..levels {
            let (ap, av) = asks.get(l).copied().unwrap_or((ASK_SENTINEL, 0));
            let (bp, bv) = bids.get(l).copied().unwrap_or((BID_SENTINEL, 0));
            features.extend([ap, av, bp, bv]);
        }
        LobRecord::from_features(index, features)
    }
}

impl Iterator for SyntheticGenerator {
    type Item = (LobEvent, Option<LobRecord>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.index >= self.n_events {
            return None;
        }
        let e = self.step();
        let snap = self
            .config
            .emit_snapshots
            .then(|| self.snapshot(self.index));
        self.index += 1;
        Some((e, snap))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.n_events - self.index) as usize;
        (left, Some(left))
    }
}

/// Collects a whole synthetic day.
pub fn generate_synthetic(seed: u64, n_events: u64, config: SyntheticConfig) -> DayStream {
    let symbol = config.symbol.clone();
    let date = config.date.clone();
    let emit = config.emit_snapshots;
    let mut events = Vec::with_capacity(n_events as usize);
    let mut snapshots = Vec::new();
    for (e, s) in SyntheticGenerator::new(seed, n_events, config) {
        events.push(e);
        if let Some(s) = s {
            snapshots.push(s);
        }
    }
    DayStream {
        symbol,
        date,
        source_rows: (1..=events.len()).collect(),
        events,
        snapshots: emit.then_some(snapshots),
    }
}
