//! Signal-driven long-only backtest on OHLC bars built from mid-prices.
//!
//! A buy signal while flat fills one share at the next bar's open; a sell
//! signal while long exits at the next bar's open. Signals on the last bar
//! never fill. An open position is liquidated at the final close. No fees,
//! no slippage, and equity is marked to each bar's close.

use std::fmt::{Display, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::TrendLabel;
use crate::scalar::{small_int, PriceValue};

pub const DEFAULT_CAPITAL: f64 = 10_000.0;
/// Mid-prices per OHLC bar.
pub const DEFAULT_BAR_PERIOD: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BacktestError {
    #[error("series has no complete bar")]
    EmptySeries,
    #[error("bar period must be at least 1")]
    InvalidPeriod,
    #[error("{signals} signals for {bars} bars")]
    SignalBarMismatch { signals: usize, bars: usize },
    #[error("initial capital must be positive")]
    NonPositiveCapital,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcBar<P> {
    pub index: usize,
    pub open: P,
    pub high: P,
    pub low: P,
    pub close: P,
    /// Positions of the first and last mid-price in the bar.
    pub span: (usize, usize),
}

/// Non-overlapping windows of `period` prices; a trailing partial window is
/// dropped.
pub fn ohlc_aggregate<P: PriceValue>(
    mids: &[P],
    period: usize,
) -> Result<Vec<OhlcBar<P>>, BacktestError> {
    if period == 0 {
        return Err(BacktestError::InvalidPeriod);
    }
    let bars: Vec<OhlcBar<P>> = mids
        .chunks_exact(period)
        .enumerate()
        .map(|(i, w)| {
            let (mut high, mut low) = (w[0], w[0]);
            for p in &w[1..] {
                if *p > high {
                    high = *p;
                }
                if *p < low {
                    low = *p;
                }
            }
            OhlcBar {
                index: i,
                open: w[0],
                high,
                low,
                close: w[period - 1],
                span: (i * period, (i + 1) * period - 1),
            }
        })
        .collect();
    if bars.is_empty() {
        return Err(BacktestError::EmptySeries);
    }
    Ok(bars)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TradeAction {
    Buy,
    Sell,
    Liquidate,
}

impl TradeAction {
    pub fn as_str(self) -> &'static str {
        match self {
            TradeAction::Buy => "BUY",
            TradeAction::Sell => "SELL",
            TradeAction::Liquidate => "LIQUIDATE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade<P> {
    pub bar_index: usize,
    pub action: TradeAction,
    pub fill_price: P,
    /// Cash plus position marked at the fill price.
    pub equity_after: P,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve<P> {
    pub initial: P,
    /// Equity marked to each bar's close.
    pub equity: Vec<P>,
    pub trades: Vec<Trade<P>>,
    pub final_equity: P,
    /// `(final - initial) / initial * 100`.
    pub return_pct: P,
}

impl<P: PriceValue> EquityCurve<P> {
    /// Sum of (exit fill - entry fill) * shares over closed round trips.
    pub fn realized_pnl(&self, shares: P) -> P {
        let mut pnl = P::zero();
        let mut entry: Option<P> = None;
        for t in &self.trades {
            match (t.action, entry) {
                (TradeAction::Buy, None) => entry = Some(t.fill_price),
                (TradeAction::Sell | TradeAction::Liquidate, Some(e)) => {
                    pnl = pnl + (t.fill_price - e) * shares;
                    entry = None;
                }
                _ => {}
            }
        }
        pnl
    }
}

pub fn run_strategy<P: PriceValue>(
    signals: &[TrendLabel],
    bars: &[OhlcBar<P>],
    capital: P,
    shares_per_trade: P,
) -> Result<EquityCurve<P>, BacktestError> {
    if signals.len() != bars.len() {
        return Err(BacktestError::SignalBarMismatch {
            signals: signals.len(),
            bars: bars.len(),
        });
    }
    if bars.is_empty() {
        return Err(BacktestError::EmptySeries);
    }
    if !(capital > P::zero()) {
        return Err(BacktestError::NonPositiveCapital);
    }
    let mut cash = capital;
    let mut long = false;
    let mut pending: Option<TradeAction> = None;
    let mut equity = Vec::with_capacity(bars.len());
    let mut trades = Vec::new();

    for (bar, signal) in bars.iter().zip(signals) {
        match pending.take() {
            Some(TradeAction::Buy) => {
                cash = cash - bar.open * shares_per_trade;
                long = true;
                trades.push(Trade {
                    bar_index: bar.index,
                    action: TradeAction::Buy,
                    fill_price: bar.open,
                    equity_after: cash + bar.open * shares_per_trade,
                });
            }
            Some(TradeAction::Sell) => {
                cash = cash + bar.open * shares_per_trade;
                long = false;
                trades.push(Trade {
                    bar_index: bar.index,
                    action: TradeAction::Sell,
                    fill_price: bar.open,
                    equity_after: cash,
                });
            }
            _ => {}
        }
        pending = match (signal, long) {
            (TrendLabel::Up, false) => Some(TradeAction::Buy),
            (TrendLabel::Down, true) => Some(TradeAction::Sell),
            _ => None,
        };
        let held = if long {
            bar.close * shares_per_trade
        } else {
            P::zero()
        };
        equity.push(cash + held);
    }

    let last = bars.last().expect("non-empty");
    if long {
        cash = cash + last.close * shares_per_trade;
        trades.push(Trade {
            bar_index: last.index,
            action: TradeAction::Liquidate,
            fill_price: last.close,
            equity_after: cash,
        });
    }
    let final_equity = cash;
    let return_pct = (final_equity - capital) * small_int::<P>(100) / capital;
    Ok(EquityCurve {
        initial: capital,
        equity,
        trades,
        final_equity,
        return_pct,
    })
}

pub const TRADE_LOG_HEADER: &str = "bar_index,action,fill_price,equity_after";

pub fn render_trade_log<P: PriceValue + Display>(curve: &EquityCurve<P>) -> String {
    let mut out = String::from(TRADE_LOG_HEADER);
    out.push('\n');
    for t in &curve.trades {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            t.bar_index,
            t.action.as_str(),
            t.fill_price,
            t.equity_after
        );
    }
    out
}

/// Return distribution of one stock over seeds (or models), percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSummary {
    pub stock: String,
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub returns: Vec<f64>,
}

/// Median of a non-empty sample; the mean of the two middle values for even
/// counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Groups `(stock, return %)` pairs by stock in order of first appearance.
pub fn returns_report(runs: &[(String, f64)]) -> Vec<ReturnSummary> {
    let mut order: Vec<String> = Vec::new();
    for (s, _) in runs {
        if !order.contains(s) {
            order.push(s.clone());
        }
    }
    order
        .into_iter()
        .map(|stock| {
            let returns: Vec<f64> = runs
                .iter()
                .filter(|(s, _)| *s == stock)
                .map(|(_, r)| *r)
                .collect();
            let min = returns.iter().copied().fold(f64::INFINITY, f64::min);
            let max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ReturnSummary {
                stock,
                count: returns.len(),
                min,
                median: median(&returns),
                max,
                returns,
            }
        })
        .collect()
}

pub fn render_returns_csv(summaries: &[ReturnSummary]) -> String {
    let mut out = String::from("stock,count,min,median,max\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4}",
            s.stock, s.count, s.min, s.median, s.max
        );
    }
    out
}
