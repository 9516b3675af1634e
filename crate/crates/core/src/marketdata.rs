//! Daily bars, the trading calendar, value-weighted market returns and
//! event-window excess-return labels.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::corpus::NewsArticle;
use crate::error::{Error, Result};

/// Local hour at which the regular session closes.
pub const SESSION_CLOSE_HOUR: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub ticker: String,
    #[serde(rename = "open")]
    pub open_price: f64,
    #[serde(rename = "close")]
    pub close_price: f64,
    /// Close-to-close, dividend adjusted, decimal.
    #[serde(rename = "ret")]
    pub total_return: f64,
    pub market_cap: f64,
}

impl DailyBar {
    fn validate(&self) -> Result<()> {
        let ok = self.open_price > 0.0
            && self.close_price > 0.0
            && self.total_return > -1.0
            && self.total_return.is_finite()
            && self.market_cap >= 0.0
            && self.open_price.is_finite()
            && self.close_price.is_finite()
            && self.market_cap.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "bar {} {} violates price/return/cap bounds",
                self.ticker, self.date
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(dates: Vec<NaiveDate>) -> Result<Self> {
        if dates.is_empty() {
            return Err(Error::InvalidInput("empty trading calendar".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "calendar dates must be strictly increasing".into(),
            ));
        }
        Ok(TradingCalendar { dates })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.index_of(date).is_some()
    }

    /// Trading day `k` sessions after trading day `date`.
    pub fn offset(&self, date: NaiveDate, k: usize) -> Option<NaiveDate> {
        self.index_of(date)
            .and_then(|i| self.dates.get(i + k))
            .copied()
    }

    pub fn next(&self, date: NaiveDate) -> Option<NaiveDate> {
        self.offset(date, 1)
    }

    pub fn prev(&self, date: NaiveDate) -> Option<NaiveDate> {
        match self.index_of(date) {
            Some(i) if i > 0 => Some(self.dates[i - 1]),
            _ => None,
        }
    }

    /// First trading day strictly after `date` (which need not be a trading day).
    pub fn first_after(&self, date: NaiveDate) -> Option<NaiveDate> {
        let i = self.dates.partition_point(|d| *d <= date);
        self.dates.get(i).copied()
    }
}

/// Sorted distinct dates present in the bar set.
pub fn build_calendar(bars: &[DailyBar]) -> Result<TradingCalendar> {
    let mut dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();
    dates.sort_unstable();
    dates.dedup();
    TradingCalendar::new(dates)
}

/// Bars indexed by ticker and date, with the calendar they span.
#[derive(Debug, Clone)]
pub struct MarketData {
    calendar: TradingCalendar,
    by_ticker: BTreeMap<String, BTreeMap<NaiveDate, DailyBar>>,
    by_date: BTreeMap<NaiveDate, Vec<String>>,
}

impl MarketData {
    pub fn from_bars(bars: Vec<DailyBar>) -> Result<Self> {
        let calendar = build_calendar(&bars)?;
        let mut by_ticker: BTreeMap<String, BTreeMap<NaiveDate, DailyBar>> = BTreeMap::new();
        let mut by_date: BTreeMap<NaiveDate, Vec<String>> = BTreeMap::new();
        for bar in bars {
            bar.validate()?;
            let per = by_ticker.entry(bar.ticker.clone()).or_default();
            if per.contains_key(&bar.date) {
                return Err(Error::DuplicateBar {
                    ticker: bar.ticker,
                    date: bar.date.to_string(),
                });
            }
            by_date.entry(bar.date).or_default().push(bar.ticker.clone());
            per.insert(bar.date, bar);
        }
        for tickers in by_date.values_mut() {
            tickers.sort();
        }
        Ok(MarketData {
            calendar,
            by_ticker,
            by_date,
        })
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn bar(&self, ticker: &str, date: NaiveDate) -> Option<&DailyBar> {
        self.by_ticker.get(ticker).and_then(|m| m.get(&date))
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.by_ticker.keys().map(String::as_str)
    }

    /// Bars on `date`, ordered by ticker.
    pub fn bars_on(&self, date: NaiveDate) -> Vec<&DailyBar> {
        self.by_date
            .get(&date)
            .map(|ts| ts.iter().filter_map(|t| self.bar(t, date)).collect())
            .unwrap_or_default()
    }

    /// Market caps at the close of the trading day before `date`.
    pub fn prior_caps(&self, date: NaiveDate) -> HashMap<String, f64> {
        match self.calendar.prev(date) {
            Some(prev) => self
                .bars_on(prev)
                .into_iter()
                .map(|b| (b.ticker.clone(), b.market_cap))
                .collect(),
            None => HashMap::new(),
        }
    }
}

pub fn read_bars_csv(path: &Path) -> Result<Vec<DailyBar>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    let mut bars = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let bar: DailyBar = row.map_err(|e| {
            Error::format(format!("{} row {}", path.display(), i + 2), e.to_string())
        })?;
        bars.push(bar);
    }
    Ok(bars)
}

pub fn write_bars_csv<W: std::io::Write>(out: W, bars: &[DailyBar]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in bars {
        w.serialize(b)
            .map_err(|e| Error::format("bars output", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("bars output", e))?;
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
struct MarketRow {
    date: NaiveDate,
    market_ret: f64,
}

pub type MarketSeries = BTreeMap<NaiveDate, f64>;

pub fn read_market_csv(path: &Path) -> Result<MarketSeries> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    let mut series = MarketSeries::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let row: MarketRow = row.map_err(|e| {
            Error::format(format!("{} row {}", path.display(), i + 2), e.to_string())
        })?;
        if series.insert(row.date, row.market_ret).is_some() {
            return Err(Error::format(
                path.display().to_string(),
                format!("duplicate market return for {}", row.date),
            ));
        }
    }
    Ok(series)
}

/// Cap-weighted mean of `(value, cap)` pairs over entries with a positive cap.
pub(crate) fn cap_weighted_mean(items: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (v, cap) in items {
        if cap > 0.0 && cap.is_finite() {
            num += v * cap;
            den += cap;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Value-weighted mean of total returns with prior-day caps as weights.
pub fn market_return(bars: &[&DailyBar], prior_caps: &HashMap<String, f64>) -> Result<f64> {
    cap_weighted_mean(bars.iter().filter_map(|b| {
        prior_caps
            .get(&b.ticker)
            .map(|&cap| (b.total_return, cap))
    }))
    .ok_or_else(|| {
        Error::NoConstituents(match bars.first() {
            Some(b) => format!("market return on {}", b.date),
            None => "market return on an empty day".into(),
        })
    })
}

/// Market return for every trading day that has a predecessor with caps.
pub fn market_series(data: &MarketData) -> MarketSeries {
    data.calendar()
        .dates()
        .iter()
        .filter_map(|&d| {
            market_return(&data.bars_on(d), &data.prior_caps(d))
                .ok()
                .map(|r| (d, r))
        })
        .collect()
}

/// First tradable session for news published at `timestamp`: the same day if
/// it is a trading day and the news arrives before the close, otherwise the
/// next trading day.
pub fn event_day(timestamp: &DateTime<FixedOffset>, calendar: &TradingCalendar) -> Option<NaiveDate> {
    let local = timestamp.naive_local();
    let date = local.date();
    let close = NaiveTime::from_hms_opt(SESSION_CLOSE_HOUR, 0, 0).unwrap();
    if calendar.contains(date) && local.time() < close {
        Some(date)
    } else {
        calendar.first_after(date)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sum of daily excess returns.
    #[default]
    Sum,
    /// Compounded stock return minus compounded market return.
    Compound,
}

/// Aggregated excess return over `horizon` sessions starting at `event_date`.
pub fn excess_return_window(
    ticker: &str,
    event_date: NaiveDate,
    data: &MarketData,
    market: &MarketSeries,
    horizon: usize,
    aggregation: Aggregation,
) -> Result<f64> {
    let missing = || Error::MissingReturns {
        ticker: ticker.to_string(),
        date: event_date.to_string(),
    };
    let mut stock = Vec::with_capacity(horizon);
    let mut mkt = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let d = data.calendar().offset(event_date, k).ok_or_else(missing)?;
        stock.push(data.bar(ticker, d).ok_or_else(missing)?.total_return);
        mkt.push(*market.get(&d).ok_or_else(missing)?);
    }
    Ok(aggregate_excess(&stock, &mkt, aggregation))
}

pub fn aggregate_excess(stock: &[f64], market: &[f64], aggregation: Aggregation) -> f64 {
    match aggregation {
        Aggregation::Sum => stock.iter().zip(market).map(|(s, m)| s - m).sum(),
        Aggregation::Compound => {
            let gs: f64 = stock.iter().map(|r| 1.0 + r).product();
            let gm: f64 = market.iter().map(|r| 1.0 + r).product();
            gs - gm
        }
    }
}

pub fn assign_label(aggregated_excess: f64) -> u8 {
    u8::from(aggregated_excess > 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub article_id: String,
    pub ticker: String,
    pub publication_date: NaiveDate,
    pub event_date: NaiveDate,
    pub aggregated_excess_return: f64,
    pub label: u8,
}

#[derive(Debug, Clone, Default)]
pub struct Labeling {
    pub examples: Vec<LabeledExample>,
    /// Article ids dropped for lacking a full return window.
    pub missing_returns: Vec<String>,
}

pub fn label_articles(
    articles: &[NewsArticle],
    data: &MarketData,
    market: &MarketSeries,
    horizon: usize,
    aggregation: Aggregation,
) -> Labeling {
    let mut out = Labeling::default();
    for a in articles {
        let excess = event_day(&a.timestamp, data.calendar())
            .ok_or(())
            .and_then(|d0| {
                excess_return_window(&a.ticker, d0, data, market, horizon, aggregation)
                    .map(|x| (d0, x))
                    .map_err(|_| ())
            });
        match excess {
            Ok((d0, x)) => out.examples.push(LabeledExample {
                article_id: a.article_id.clone(),
                ticker: a.ticker.clone(),
                publication_date: a.local_date(),
                event_date: d0,
                aggregated_excess_return: x,
                label: assign_label(x),
            }),
            Err(()) => out.missing_returns.push(a.article_id.clone()),
        }
    }
    out
}

pub fn write_labels_csv<W: std::io::Write>(out: W, labels: &[LabeledExample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for l in labels {
        w.serialize(l)
            .map_err(|e| Error::format("labels output", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("labels output", e))?;
    Ok(())
}
