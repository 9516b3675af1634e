//! Daily value-weighted long, short and long-short sentiment portfolios,
//! market benchmarks and performance statistics.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{market_return, MarketData, TradingCalendar, SESSION_CLOSE_HOUR};

/// Local hour separating pre-open news from intraday news.
pub const PRE_OPEN_CUTOFF_HOUR: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimingBucket {
    PreOpen,
    Intraday,
    PostClose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceKind {
    Open,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub kind: PriceKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionSchedule {
    pub bucket: TimingBucket,
    pub entry: PricePoint,
    pub exit: PricePoint,
}

/// Bucket by exchange-local time of day; news on non-trading days counts as
/// post-close.
pub fn timing_bucket(timestamp: &DateTime<FixedOffset>, calendar: &TradingCalendar) -> TimingBucket {
    let local = timestamp.naive_local();
    if !calendar.contains(local.date()) {
        return TimingBucket::PostClose;
    }
    let t = local.time();
    if t < NaiveTime::from_hms_opt(PRE_OPEN_CUTOFF_HOUR, 0, 0).unwrap() {
        TimingBucket::PreOpen
    } else if t < NaiveTime::from_hms_opt(SESSION_CLOSE_HOUR, 0, 0).unwrap() {
        TimingBucket::Intraday
    } else {
        TimingBucket::PostClose
    }
}

/// Entry and exit prices for a signal. `None` when the calendar ends first.
pub fn execution_schedule(
    timestamp: &DateTime<FixedOffset>,
    calendar: &TradingCalendar,
) -> Option<ExecutionSchedule> {
    let bucket = timing_bucket(timestamp, calendar);
    let day = timestamp.date_naive();
    let at = |date, kind| PricePoint { date, kind };
    let (entry, exit) = match bucket {
        TimingBucket::PreOpen => (at(day, PriceKind::Open), at(day, PriceKind::Close)),
        TimingBucket::Intraday => (at(day, PriceKind::Close), at(calendar.next(day)?, PriceKind::Close)),
        TimingBucket::PostClose => {
            let next = calendar.first_after(day)?;
            (at(next, PriceKind::Open), at(next, PriceKind::Close))
        }
    };
    Some(ExecutionSchedule { bucket, entry, exit })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Long,
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostConvention {
    /// One charge per leg covering entry and exit.
    #[default]
    RoundTrip,
    /// One charge on entry and one on exit.
    PerSide,
}

impl CostConvention {
    /// Decimal cost charged to one leg.
    pub fn leg_cost(self, bps: f64) -> f64 {
        let per_trade = bps / 10_000.0;
        match self {
            CostConvention::RoundTrip => per_trade,
            CostConvention::PerSide => 2.0 * per_trade,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionLeg {
    pub ticker: String,
    pub side: Side,
    pub entry: PricePoint,
    pub exit: PricePoint,
    pub weight: f64,
    pub cost_applied: f64,
}

/// Net decimal return of one leg, or `None` when a required bar is missing.
///
/// Close-to-next-close legs use the exit day's total return so that
/// distributions are included.
pub fn leg_return(leg: &PositionLeg, data: &MarketData) -> Option<f64> {
    let entry = data.bar(&leg.ticker, leg.entry.date)?;
    let exit = data.bar(&leg.ticker, leg.exit.date)?;
    let gross = match (leg.entry.kind, leg.exit.kind) {
        (PriceKind::Close, PriceKind::Close)
            if data.calendar().next(leg.entry.date) == Some(leg.exit.date) =>
        {
            exit.total_return
        }
        (PriceKind::Open, PriceKind::Close) if leg.entry.date == leg.exit.date => {
            exit.close_price / entry.open_price - 1.0
        }
        _ => {
            let p0 = match leg.entry.kind {
                PriceKind::Open => entry.open_price,
                PriceKind::Close => entry.close_price,
            };
            let p1 = match leg.exit.kind {
                PriceKind::Open => exit.open_price,
                PriceKind::Close => exit.close_price,
            };
            p1 / p0 - 1.0
        }
    };
    let signed = match leg.side {
        Side::Long => gross,
        Side::Short => -gross,
    };
    Some(signed - leg.cost_applied)
}

/// Top and bottom `ceil(fraction * n)` tickers by score; ties go to the
/// lexicographically smaller ticker. Tickers landing in both sets are removed
/// from both.
pub fn select_quantiles(scores: &BTreeMap<String, f64>, fraction: f64) -> Result<(Vec<String>, Vec<String>)> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to rank".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("quantile fraction {fraction} outside (0, 1]")));
    }
    let n = scores.len();
    let k = ((fraction * n as f64).ceil() as usize).min(n);
    let mut ranked: Vec<(&String, f64)> = scores.iter().map(|(t, &s)| (t, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let long: Vec<String> = ranked.iter().take(k).map(|(t, _)| (*t).clone()).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let short: Vec<String> = ranked.iter().take(k).map(|(t, _)| (*t).clone()).collect();
    let contested: Vec<String> = long.iter().filter(|t| short.contains(t)).cloned().collect();
    let keep = |v: Vec<String>| v.into_iter().filter(|t| !contested.contains(t)).collect();
    Ok((keep(long), keep(short)))
}

/// Cap-proportional weights. Tickers without a positive cap are dropped and
/// returned separately.
pub fn value_weights(
    tickers: &[String],
    caps: &HashMap<String, f64>,
) -> Result<(BTreeMap<String, f64>, Vec<String>)> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for t in tickers {
        match caps.get(t) {
            Some(&c) if c > 0.0 && c.is_finite() => kept.push((t.clone(), c)),
            _ => dropped.push(t.clone()),
        }
    }
    if kept.is_empty() {
        return Err(Error::NoConstituents("no ticker with a positive prior market cap".into()));
    }
    let total: f64 = kept.iter().map(|(_, c)| c).sum();
    Ok((kept.into_iter().map(|(t, c)| (t, c / total)).collect(), dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySeries {
    pub name: String,
    /// Decimal, net of costs, keyed by entry day.
    pub daily_returns: BTreeMap<NaiveDate, f64>,
}

impl StrategySeries {
    pub fn new(name: impl Into<String>) -> Self {
        StrategySeries {
            name: name.into(),
            daily_returns: BTreeMap::new(),
        }
    }

    pub fn returns(&self) -> Vec<f64> {
        self.daily_returns.values().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.daily_returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.daily_returns.is_empty()
    }
}

/// One scored news item eligible for trading.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub article_id: String,
    pub ticker: String,
    pub timestamp: DateTime<FixedOffset>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestConfig {
    pub fraction: f64,
    pub cost_bps: f64,
    pub cost_convention: CostConvention,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            fraction: 0.2,
            cost_bps: 10.0,
            cost_convention: CostConvention::RoundTrip,
            start: None,
            end: None,
        }
    }
}

impl BacktestConfig {
    fn in_range(&self, d: NaiveDate) -> bool {
        self.start.is_none_or(|s| d >= s) && self.end.is_none_or(|e| d <= e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioDay {
    pub date: NaiveDate,
    pub long_legs: Vec<PositionLeg>,
    pub short_legs: Vec<PositionLeg>,
    pub long_return: Option<f64>,
    /// P&L of the short book (positive when shorted stocks fell).
    pub short_return: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BacktestOutcome {
    pub long: StrategySeries,
    /// Short book shown as the return of the shorted stocks (negated P&L).
    pub short: StrategySeries,
    pub short_pnl: StrategySeries,
    pub long_short: StrategySeries,
    pub days: Vec<PortfolioDay>,
    pub skipped_legs: usize,
    pub dropped_caps: usize,
    pub unschedulable_signals: usize,
}

struct PoolEntry {
    score_sum: f64,
    count: usize,
    schedule: ExecutionSchedule,
}

/// Builds the three sentiment strategies from scored signals.
///
/// Signals are pooled by entry day; repeated tickers within a day average
/// their scores and trade on the schedule of their earliest signal.
pub fn portfolio_series(
    signals: &[Signal],
    data: &MarketData,
    config: &BacktestConfig,
    model_name: &str,
) -> Result<BacktestOutcome> {
    let mut ordered: Vec<&Signal> = signals.iter().collect();
    ordered.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.article_id.cmp(&b.article_id))
    });

    let mut unschedulable_signals = 0;
    let mut pools: BTreeMap<NaiveDate, BTreeMap<String, PoolEntry>> = BTreeMap::new();
    for s in ordered {
        let Some(schedule) = execution_schedule(&s.timestamp, data.calendar()) else {
            unschedulable_signals += 1;
            continue;
        };
        let entry = pools
            .entry(schedule.entry.date)
            .or_default()
            .entry(s.ticker.clone())
            .or_insert(PoolEntry {
                score_sum: 0.0,
                count: 0,
                schedule,
            });
        entry.score_sum += s.score;
        entry.count += 1;
    }

    let cost = config.cost_convention.leg_cost(config.cost_bps);
    let mut outcome = BacktestOutcome {
        long: StrategySeries::new(format!("{model_name} L")),
        short: StrategySeries::new(format!("{model_name} S")),
        short_pnl: StrategySeries::new(format!("{model_name} S pnl")),
        long_short: StrategySeries::new(format!("{model_name} L-S")),
        days: Vec::new(),
        skipped_legs: 0,
        dropped_caps: 0,
        unschedulable_signals,
    };

    for (date, pool) in pools {
        if !config.in_range(date) {
            continue;
        }
        let scores: BTreeMap<String, f64> = pool
            .iter()
            .map(|(t, e)| (t.clone(), e.score_sum / e.count as f64))
            .collect();
        let (long_set, short_set) = select_quantiles(&scores, config.fraction)?;
        let caps = data.prior_caps(date);

        let mut build_side = |names: &[String], side: Side| -> (Vec<PositionLeg>, Option<f64>) {
            let mut legs = Vec::new();
            let mut nets = Vec::new();
            for t in names {
                let sched = pool[t].schedule;
                let leg = PositionLeg {
                    ticker: t.clone(),
                    side,
                    entry: sched.entry,
                    exit: sched.exit,
                    weight: 0.0,
                    cost_applied: cost,
                };
                match leg_return(&leg, data) {
                    Some(r) => {
                        nets.push(r);
                        legs.push(leg);
                    }
                    None => outcome.skipped_legs += 1,
                }
            }
            let tradable: Vec<String> = legs.iter().map(|l| l.ticker.clone()).collect();
            let Ok((weights, dropped)) = value_weights(&tradable, &caps) else {
                outcome.dropped_caps += tradable.len();
                return (Vec::new(), None);
            };
            outcome.dropped_caps += dropped.len();
            let mut ret = 0.0;
            let mut kept = Vec::new();
            for (mut leg, r) in legs.into_iter().zip(nets) {
                if let Some(&w) = weights.get(&leg.ticker) {
                    leg.weight = w;
                    ret += w * r;
                    kept.push(leg);
                }
            }
            (kept, Some(ret))
        };
        let (long_legs, long_return) = build_side(&long_set, Side::Long);
        let (short_legs, short_return) = build_side(&short_set, Side::Short);

        if let Some(l) = long_return {
            outcome.long.daily_returns.insert(date, l);
        }
        if let Some(s) = short_return {
            outcome.short_pnl.daily_returns.insert(date, s);
            outcome.short.daily_returns.insert(date, -s);
        }
        if let (Some(l), Some(s)) = (long_return, short_return) {
            outcome.long_short.daily_returns.insert(date, l - (-s));
        }
        if long_return.is_some() || short_return.is_some() {
            outcome.days.push(PortfolioDay {
                date,
                long_legs,
                short_legs,
                long_return,
                short_return,
            });
        }
    }
    Ok(outcome)
}

/// Value-weighted (prior-day caps) and equal-weighted market portfolios,
/// without costs. The first calendar day has no prior caps and is skipped.
pub fn benchmark_series(
    data: &MarketData,
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
) -> Result<(StrategySeries, StrategySeries)> {
    let mut vw = StrategySeries::new("VW");
    let mut ew = StrategySeries::new("EW");
    for &d in data.calendar().dates().iter().skip(1) {
        if start.is_some_and(|s| d < s) || end.is_some_and(|e| d > e) {
            continue;
        }
        let bars = data.bars_on(d);
        if bars.is_empty() {
            return Err(Error::NoConstituents(format!("benchmark on {d}")));
        }
        vw.daily_returns.insert(d, market_return(&bars, &data.prior_caps(d))?);
        ew.daily_returns.insert(
            d,
            bars.iter().map(|b| b.total_return).sum::<f64>() / bars.len() as f64,
        );
    }
    Ok((vw, ew))
}

fn mean_and_sample_std(returns: &[f64]) -> (f64, f64) {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Annualized Sharpe ratio; `risk_free` is an annual rate spread evenly over
/// the periods.
pub fn sharpe(returns: &[f64], periods_per_year: f64, risk_free: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::Numerical("Sharpe ratio needs at least 2 returns".into()));
    }
    let (mean, sd) = mean_and_sample_std(returns);
    if !(sd > 0.0) {
        return Err(Error::Numerical("zero return volatility".into()));
    }
    Ok((mean - risk_free / periods_per_year) / sd * periods_per_year.sqrt())
}

/// Largest peak-to-trough decline of the compounded path starting at 1,
/// as a decimal <= 0.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut value = 1.0f64;
    let mut peak = 1.0f64;
    let mut worst = 0.0f64;
    for r in returns {
        value *= 1.0 + r;
        peak = peak.max(value);
        worst = worst.min(value / peak - 1.0);
    }
    worst
}

/// Value of $1 after each date.
pub fn cumulative_growth(series: &StrategySeries) -> Result<Vec<(NaiveDate, f64)>> {
    let mut v = 1.0;
    series
        .daily_returns
        .iter()
        .map(|(&d, &r)| {
            if !(r > -1.0) {
                return Err(Error::Numerical(format!(
                    "{}: return {r} on {d} wipes out the portfolio",
                    series.name
                )));
            }
            v *= 1.0 + r;
            Ok((d, v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyReport {
    pub name: String,
    pub n_days: usize,
    pub sharpe: Option<f64>,
    pub mean_daily_return_pct: Option<f64>,
    pub std_daily_pct: Option<f64>,
    /// Peak-to-trough on the compounded path.
    pub max_drawdown_pct: f64,
    #[serde(skip)]
    pub cumulative_path: Vec<(NaiveDate, f64)>,
}

pub fn strategy_report(series: &StrategySeries, periods_per_year: f64, risk_free: f64) -> Result<StrategyReport> {
    let r = series.returns();
    let (mean, sd) = match r.len() {
        0 => (None, None),
        1 => (Some(r[0]), None),
        _ => {
            let (m, s) = mean_and_sample_std(&r);
            (Some(m), Some(s))
        }
    };
    Ok(StrategyReport {
        name: series.name.clone(),
        n_days: r.len(),
        sharpe: sharpe(&r, periods_per_year, risk_free).ok(),
        mean_daily_return_pct: mean.map(|m| m * 100.0),
        std_daily_pct: sd.map(|s| s * 100.0),
        max_drawdown_pct: max_drawdown(&r) * 100.0,
        cumulative_path: cumulative_growth(series)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::DailyBar;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn ts(s: &str) -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    fn cal() -> TradingCalendar {
        TradingCalendar::new(vec![d("2022-01-06"), d("2022-01-07"), d("2022-01-10")]).unwrap()
    }

    #[test]
    fn schedules_by_bucket() {
        let c = cal();
        let s = execution_schedule(&ts("2022-01-06T05:30:00-05:00"), &c).unwrap();
        assert_eq!(s.bucket, TimingBucket::PreOpen);
        assert_eq!((s.entry.date, s.entry.kind), (d("2022-01-06"), PriceKind::Open));
        assert_eq!((s.exit.date, s.exit.kind), (d("2022-01-06"), PriceKind::Close));

        let s = execution_schedule(&ts("2022-01-06T10:00:00-05:00"), &c).unwrap();
        assert_eq!(s.bucket, TimingBucket::Intraday);
        assert_eq!((s.entry.date, s.entry.kind), (d("2022-01-06"), PriceKind::Close));
        assert_eq!((s.exit.date, s.exit.kind), (d("2022-01-07"), PriceKind::Close));

        let s = execution_schedule(&ts("2022-01-06T18:00:00-05:00"), &c).unwrap();
        assert_eq!(s.bucket, TimingBucket::PostClose);
        assert_eq!((s.entry.date, s.entry.kind), (d("2022-01-07"), PriceKind::Open));
        assert_eq!((s.exit.date, s.exit.kind), (d("2022-01-07"), PriceKind::Close));

        // Saturday morning trades Monday.
        let s = execution_schedule(&ts("2022-01-08T05:00:00-05:00"), &c).unwrap();
        assert_eq!(s.bucket, TimingBucket::PostClose);
        assert_eq!(s.entry.date, d("2022-01-10"));

        assert_eq!(timing_bucket(&ts("2022-01-06T06:00:00-05:00"), &c), TimingBucket::Intraday);
        assert_eq!(timing_bucket(&ts("2022-01-06T16:00:00-05:00"), &c), TimingBucket::PostClose);
        assert!(execution_schedule(&ts("2022-01-10T11:00:00-05:00"), &c).is_none());
    }

    fn scores(v: &[(&str, f64)]) -> BTreeMap<String, f64> {
        v.iter().map(|(t, s)| (t.to_string(), *s)).collect()
    }

    #[test]
    fn quantile_selection() {
        let ten: Vec<(String, f64)> = (0..10).map(|i| (format!("T{i}"), i as f64 / 10.0)).collect();
        let ten: BTreeMap<String, f64> = ten.into_iter().collect();
        let (l, s) = select_quantiles(&ten, 0.2).unwrap();
        assert_eq!(l, vec!["T9", "T8"]);
        assert_eq!(s, vec!["T0", "T1"]);

        let (l, s) = select_quantiles(&scores(&[("A", 0.7)]), 0.2).unwrap();
        assert!(l.is_empty() && s.is_empty());

        let five = scores(&[("A", 0.9), ("B", 0.8), ("C", 0.5), ("D", 0.2), ("E", 0.1)]);
        let (l, s) = select_quantiles(&five, 0.2).unwrap();
        assert_eq!((l, s), (vec!["A".to_string()], vec!["E".to_string()]));

        let tied = scores(&[("B", 0.5), ("A", 0.5), ("C", 0.5), ("D", 0.5), ("E", 0.5)]);
        // Both books pick "A" on the tie-break, so it is contested.
        let (l, s) = select_quantiles(&tied, 0.2).unwrap();
        assert!(l.is_empty() && s.is_empty());
        assert!(select_quantiles(&BTreeMap::new(), 0.2).is_err());
    }

    #[test]
    fn weights() {
        let caps: HashMap<String, f64> = [("A".into(), 2.0), ("B".into(), 1.0), ("Z".into(), 0.0)].into();
        let (w, dropped) = value_weights(&["A".into()], &caps).unwrap();
        assert_eq!(w["A"], 1.0);
        assert!(dropped.is_empty());
        let (w, _) = value_weights(&["A".into(), "B".into()], &caps).unwrap();
        assert!((w["A"] - 2.0 / 3.0).abs() < 1e-15 && (w["B"] - 1.0 / 3.0).abs() < 1e-15);
        let (w, dropped) = value_weights(&["A".into(), "Z".into(), "Q".into()], &caps).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(dropped, vec!["Z".to_string(), "Q".to_string()]);
        assert!(value_weights(&["Z".into()], &caps).is_err());
        let eq: HashMap<String, f64> = (0..4).map(|i| (format!("T{i}"), 5.0)).collect();
        let names: Vec<String> = eq.keys().cloned().collect();
        let (w, _) = value_weights(&names, &eq).unwrap();
        assert!(w.values().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    fn bar(t: &str, date: &str, open: f64, close: f64, ret: f64) -> DailyBar {
        DailyBar {
            date: d(date),
            ticker: t.into(),
            open_price: open,
            close_price: close,
            total_return: ret,
            market_cap: 1e9,
        }
    }

    #[test]
    fn leg_returns() {
        let data = MarketData::from_bars(vec![
            bar("A", "2022-01-06", 100.0, 102.0, 0.0),
            bar("A", "2022-01-07", 100.0, 100.0, 0.02),
        ])
        .unwrap();
        let leg = |side, entry: PricePoint, exit: PricePoint| PositionLeg {
            ticker: "A".into(),
            side,
            entry,
            exit,
            weight: 1.0,
            cost_applied: 0.001,
        };
        let open6 = PricePoint { date: d("2022-01-06"), kind: PriceKind::Open };
        let close6 = PricePoint { date: d("2022-01-06"), kind: PriceKind::Close };
        let close7 = PricePoint { date: d("2022-01-07"), kind: PriceKind::Close };
        let open7 = PricePoint { date: d("2022-01-07"), kind: PriceKind::Open };

        let r = leg_return(&leg(Side::Long, open6, close6), &data).unwrap();
        assert!((r - 0.019).abs() < 1e-15);
        let r = leg_return(&leg(Side::Short, open6, close6), &data).unwrap();
        assert!((r + 0.021).abs() < 1e-15);
        let r = leg_return(&leg(Side::Long, open7, close7), &data).unwrap();
        assert!((r + 0.001).abs() < 1e-15);
        // close -> next close uses the total return.
        let r = leg_return(&leg(Side::Long, close6, close7), &data).unwrap();
        assert!((r - 0.019).abs() < 1e-15);
        let missing = PricePoint { date: d("2022-01-10"), kind: PriceKind::Close };
        assert!(leg_return(&leg(Side::Long, close7, missing), &data).is_none());
    }

    #[test]
    fn cost_conventions() {
        assert_eq!(CostConvention::RoundTrip.leg_cost(10.0), 0.001);
        assert_eq!(CostConvention::PerSide.leg_cost(10.0), 0.002);
    }

    #[test]
    fn single_long_signal_passthrough() {
        // Five tickers so the top quintile holds exactly one name.
        let mut bars = Vec::new();
        for (i, t) in ["A", "B", "C", "D", "E"].iter().enumerate() {
            bars.push(bar(t, "2022-01-06", 50.0, 50.0, 0.0));
            let close = if i == 0 { 102.0 } else { 100.0 };
            bars.push(bar(t, "2022-01-07", 100.0, close, 0.0));
        }
        let data = MarketData::from_bars(bars).unwrap();
        let signals: Vec<Signal> = ["A", "B", "C", "D", "E"]
            .iter()
            .enumerate()
            .map(|(i, t)| Signal {
                article_id: format!("n{i}"),
                ticker: t.to_string(),
                timestamp: ts("2022-01-07T05:00:00-05:00"),
                score: 1.0 - i as f64 * 0.2,
            })
            .collect();
        let out = portfolio_series(&signals, &data, &BacktestConfig::default(), "m").unwrap();
        assert!((out.long.daily_returns[&d("2022-01-07")] - 0.019).abs() < 1e-15);
        assert!((out.short_pnl.daily_returns[&d("2022-01-07")] + 0.001).abs() < 1e-15);
        let day = &out.days[0];
        assert_eq!(day.long_legs.len(), 1);
        assert_eq!(day.short_legs[0].ticker, "E");
    }

    #[test]
    fn same_books_cost_twice() {
        // Long and short the same stock: gross cancels, two costs remain.
        let data = MarketData::from_bars(vec![
            bar("A", "2022-01-06", 50.0, 50.0, 0.0),
            bar("A", "2022-01-07", 100.0, 103.0, 0.03),
        ])
        .unwrap();
        let p = |date: &str, kind| PricePoint { date: d(date), kind };
        let mk = |side| PositionLeg {
            ticker: "A".into(),
            side,
            entry: p("2022-01-07", PriceKind::Open),
            exit: p("2022-01-07", PriceKind::Close),
            weight: 1.0,
            cost_applied: 0.001,
        };
        let l = leg_return(&mk(Side::Long), &data).unwrap();
        let s = leg_return(&mk(Side::Short), &data).unwrap();
        assert!((l + s + 0.002).abs() < 1e-15);
    }

    #[test]
    fn benchmarks() {
        let mut bars = vec![
            bar("A", "2022-01-06", 1.0, 1.0, 0.0),
            bar("B", "2022-01-06", 1.0, 1.0, 0.0),
            bar("A", "2022-01-07", 1.0, 1.0, 0.04),
            bar("B", "2022-01-07", 1.0, 1.0, 0.0),
        ];
        bars[0].market_cap = 3.0;
        bars[1].market_cap = 1.0;
        let data = MarketData::from_bars(bars).unwrap();
        let (vw, ew) = benchmark_series(&data, None, None).unwrap();
        assert!((vw.daily_returns[&d("2022-01-07")] - 0.03).abs() < 1e-15);
        assert!((ew.daily_returns[&d("2022-01-07")] - 0.02).abs() < 1e-15);

        let one = MarketData::from_bars(vec![
            bar("A", "2022-01-06", 1.0, 1.0, 0.0),
            bar("A", "2022-01-07", 1.0, 1.0, 0.013),
        ])
        .unwrap();
        let (vw, ew) = benchmark_series(&one, None, None).unwrap();
        assert_eq!(vw.daily_returns, ew.daily_returns);
        assert_eq!(vw.daily_returns[&d("2022-01-07")], 0.013);
    }

    #[test]
    fn sharpe_examples() {
        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert!(sharpe(&alt, 252.0, 0.0).unwrap().abs() < 1e-12);

        let r = [0.01, -0.004, 0.007, 0.002, -0.011, 0.015, 0.003, -0.002, 0.006, 0.001];
        // Exact rational arithmetic: mean 27/10000, sum of squares 4921/10^7.
        let expected = 0.0027 / (0.0004921f64 / 9.0).sqrt() * 252f64.sqrt();
        assert!((expected - 5.796403456443658).abs() < 1e-12);
        assert!((sharpe(&r, 252.0, 0.0).unwrap() - expected).abs() < 1e-12);

        let scaled: Vec<f64> = r.iter().map(|x| x * 3.7).collect();
        assert!((sharpe(&scaled, 252.0, 0.0).unwrap() - expected).abs() < 1e-12);

        assert!(sharpe(&[0.01, 0.01], 252.0, 0.0).is_err());
        assert!(sharpe(&[0.01], 252.0, 0.0).is_err());
    }

    #[test]
    fn drawdown_examples() {
        assert_eq!(max_drawdown(&[0.01, 0.02, 0.0]), 0.0);
        // Path 1, 1.2, 0.9, 1.1.
        let r = [0.2, 0.9 / 1.2 - 1.0, 1.1 / 0.9 - 1.0];
        assert!((max_drawdown(&r) + 0.25).abs() < 1e-12);
        assert_eq!(max_drawdown(&[0.05]), 0.0);
        assert!((max_drawdown(&[-0.05]) + 0.05).abs() < 1e-15);
    }

    #[test]
    fn growth_examples() {
        let mut s = StrategySeries::new("x");
        s.daily_returns.insert(d("2022-01-06"), 0.1);
        s.daily_returns.insert(d("2022-01-07"), -0.1);
        let path = cumulative_growth(&s).unwrap();
        assert!((path[1].1 - 0.99).abs() < 1e-15);

        let mut flat = StrategySeries::new("f");
        flat.daily_returns.insert(d("2022-01-06"), 0.0);
        flat.daily_returns.insert(d("2022-01-07"), 0.0);
        assert!(cumulative_growth(&flat).unwrap().iter().all(|(_, v)| *v == 1.0));

        let mut one = StrategySeries::new("o");
        one.daily_returns.insert(d("2022-01-06"), 0.05);
        assert_eq!(cumulative_growth(&one).unwrap()[0].1, 1.05);

        one.daily_returns.insert(d("2022-01-07"), -1.0);
        assert!(cumulative_growth(&one).is_err());
    }
}
