//! Run configuration: defaults, a flat `key = value` file format, and
//! validation.
//!
//! ```text
//! # paths are resolved relative to the config file
//! news = news.jsonl
//! bars = bars.csv
//! similarity_threshold = 0.8
//! regressions = signal; noise; signal+noise
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::backtest::{BacktestConfig, CostConvention};
use crate::classify::{SplitMode, SplitProportions};
use crate::corpus::{ComparisonScope, NoveltyConfig, NoveltyWindow};
use crate::error::{Error, Result};
use crate::marketdata::Aggregation;
use crate::panel::{ClusterMode, FitOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowUnit {
    Calendar,
    Business,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub news: Option<PathBuf>,
    pub bars: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub market: Option<PathBuf>,
    pub output_dir: PathBuf,

    pub lexicon_scoring: bool,
    pub novelty_window_days: u32,
    pub novelty_window_unit: WindowUnit,
    pub similarity_threshold: f64,
    pub novelty_scope: ComparisonScope,

    pub label_horizon: usize,
    pub aggregation: Aggregation,

    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub split_mode: SplitMode,
    pub seed: u64,
    pub classification_threshold: f64,

    /// Each entry is one regression's regressor set; empty means one
    /// regression per model plus one with every model.
    pub regressions: Vec<Vec<String>>,
    pub cluster: ClusterMode,
    pub small_sample_correction: bool,
    pub demean_tolerance: f64,
    pub max_sweeps: usize,

    pub quantile_fraction: f64,
    pub cost_bps: f64,
    pub cost_convention: CostConvention,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub annualization: f64,
    pub risk_free: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            news: None,
            bars: None,
            lexicon: None,
            scores: None,
            market: None,
            output_dir: PathBuf::from("out"),
            lexicon_scoring: true,
            novelty_window_days: 20,
            novelty_window_unit: WindowUnit::Calendar,
            similarity_threshold: 0.8,
            novelty_scope: ComparisonScope::SameTicker,
            label_horizon: 3,
            aggregation: Aggregation::Sum,
            test_fraction: 0.2,
            validation_fraction: 0.2,
            split_mode: SplitMode::Random,
            seed: 42,
            classification_threshold: 0.5,
            regressions: Vec::new(),
            cluster: ClusterMode::TwoWay,
            small_sample_correction: false,
            demean_tolerance: 1e-10,
            max_sweeps: 100_000,
            quantile_fraction: 0.2,
            cost_bps: 10.0,
            cost_convention: CostConvention::RoundTrip,
            start_date: None,
            end_date: None,
            annualization: 252.0,
            risk_free: 0.0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

fn parse_choice<T: Copy>(key: &str, value: &str, choices: &[(&str, T)]) -> Result<T> {
    choices
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(value))
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("{key} must be one of {}, got {value:?}", names.join("|")))
        })
}

fn parse_date(key: &str, value: &str) -> Result<Option<NaiveDate>> {
    if value.is_empty() || value.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    parse(key, value).map(Some)
}

const WINDOW_UNITS: &[(&str, WindowUnit)] =
    &[("calendar", WindowUnit::Calendar), ("business", WindowUnit::Business)];
const SCOPES: &[(&str, ComparisonScope)] = &[
    ("same_ticker", ComparisonScope::SameTicker),
    ("corpus_wide", ComparisonScope::CorpusWide),
];
const AGGREGATIONS: &[(&str, Aggregation)] =
    &[("sum", Aggregation::Sum), ("compound", Aggregation::Compound)];
const SPLIT_MODES: &[(&str, SplitMode)] =
    &[("random", SplitMode::Random), ("time_ordered", SplitMode::TimeOrdered)];
const CLUSTERS: &[(&str, ClusterMode)] = &[
    ("two_way", ClusterMode::TwoWay),
    ("firm", ClusterMode::Firm),
    ("date", ClusterMode::Date),
    ("none", ClusterMode::None),
];
const COSTS: &[(&str, CostConvention)] = &[
    ("round_trip", CostConvention::RoundTrip),
    ("per_side", CostConvention::PerSide),
];

fn name_of<T: PartialEq + Copy>(choices: &[(&'static str, T)], v: T) -> &'static str {
    choices.iter().find(|(_, c)| *c == v).map(|(n, _)| *n).unwrap()
}

impl RunConfig {
    /// Sets one field by its config key. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let value = value.trim();
        let path = |v: &str| -> Option<PathBuf> {
            if v.is_empty() {
                return None;
            }
            let p = PathBuf::from(v);
            Some(match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            })
        };
        match key {
            "news" => self.news = path(value),
            "bars" => self.bars = path(value),
            "lexicon" => self.lexicon = path(value),
            "scores" => self.scores = path(value),
            "market" => self.market = path(value),
            "output_dir" => {
                self.output_dir = path(value).ok_or_else(|| Error::Config("empty output_dir".into()))?
            }
            "lexicon_scoring" => self.lexicon_scoring = parse_bool(key, value)?,
            "novelty_window_days" => self.novelty_window_days = parse(key, value)?,
            "novelty_window_unit" => self.novelty_window_unit = parse_choice(key, value, WINDOW_UNITS)?,
            "similarity_threshold" => self.similarity_threshold = parse(key, value)?,
            "novelty_scope" => self.novelty_scope = parse_choice(key, value, SCOPES)?,
            "label_horizon" => self.label_horizon = parse(key, value)?,
            "aggregation" => self.aggregation = parse_choice(key, value, AGGREGATIONS)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "validation_fraction" => self.validation_fraction = parse(key, value)?,
            "split_mode" => self.split_mode = parse_choice(key, value, SPLIT_MODES)?,
            "seed" => self.seed = parse(key, value)?,
            "classification_threshold" => self.classification_threshold = parse(key, value)?,
            "regressions" => {
                self.regressions = value
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|set| set.split('+').map(|m| m.trim().to_string()).collect())
                    .collect()
            }
            "cluster" => self.cluster = parse_choice(key, value, CLUSTERS)?,
            "small_sample_correction" => self.small_sample_correction = parse_bool(key, value)?,
            "demean_tolerance" => self.demean_tolerance = parse(key, value)?,
            "max_sweeps" => self.max_sweeps = parse(key, value)?,
            "quantile_fraction" => self.quantile_fraction = parse(key, value)?,
            "cost_bps" => self.cost_bps = parse(key, value)?,
            "cost_convention" => self.cost_convention = parse_choice(key, value, COSTS)?,
            "start_date" => self.start_date = parse_date(key, value)?,
            "end_date" => self.end_date = parse_date(key, value)?,
            "annualization" => self.annualization = parse(key, value)?,
            "risk_free" => self.risk_free = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` document. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value, base)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path.parent())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return bad(format!("similarity_threshold {} outside (0, 1]", self.similarity_threshold));
        }
        if !(self.quantile_fraction > 0.0 && self.quantile_fraction <= 0.5) {
            return bad(format!("quantile_fraction {} outside (0, 0.5]", self.quantile_fraction));
        }
        if !(self.cost_bps >= 0.0) || !self.cost_bps.is_finite() {
            return bad(format!("cost_bps {} must be >= 0", self.cost_bps));
        }
        for (k, v) in [("test_fraction", self.test_fraction), ("validation_fraction", self.validation_fraction)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{k} {v} outside [0, 1)"));
            }
        }
        if self.label_horizon == 0 {
            return bad("label_horizon must be >= 1".into());
        }
        if !(self.annualization > 0.0) {
            return bad("annualization must be positive".into());
        }
        if !(self.demean_tolerance > 0.0) || self.max_sweeps == 0 {
            return bad("demean_tolerance and max_sweeps must be positive".into());
        }
        if let (Some(s), Some(e)) = (self.start_date, self.end_date) {
            if s > e {
                return bad(format!("start_date {s} after end_date {e}"));
            }
        }
        Ok(())
    }

    pub fn novelty(&self) -> NoveltyConfig {
        NoveltyConfig {
            window: match self.novelty_window_unit {
                WindowUnit::Calendar => NoveltyWindow::CalendarDays(self.novelty_window_days),
                WindowUnit::Business => NoveltyWindow::BusinessDays(self.novelty_window_days),
            },
            threshold: self.similarity_threshold,
            scope: self.novelty_scope,
        }
    }

    pub fn split_proportions(&self) -> SplitProportions {
        SplitProportions {
            test: self.test_fraction,
            validation: self.validation_fraction,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            tolerance: self.demean_tolerance,
            max_sweeps: self.max_sweeps,
            cluster: self.cluster,
            small_sample_correction: self.small_sample_correction,
        }
    }

    pub fn backtest(&self) -> BacktestConfig {
        BacktestConfig {
            fraction: self.quantile_fraction,
            cost_bps: self.cost_bps,
            cost_convention: self.cost_convention,
            start: self.start_date,
            end: self.end_date,
        }
    }

    /// Every setting except `output_dir`, as ordered key/value pairs.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let date = |d: &Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_else(|| "none".into());
        vec![
            ("news", path(&self.news)),
            ("bars", path(&self.bars)),
            ("lexicon", path(&self.lexicon)),
            ("scores", path(&self.scores)),
            ("market", path(&self.market)),
            ("lexicon_scoring", self.lexicon_scoring.to_string()),
            ("novelty_window_days", self.novelty_window_days.to_string()),
            ("novelty_window_unit", name_of(WINDOW_UNITS, self.novelty_window_unit).into()),
            ("similarity_threshold", self.similarity_threshold.to_string()),
            ("novelty_scope", name_of(SCOPES, self.novelty_scope).into()),
            ("label_horizon", self.label_horizon.to_string()),
            ("aggregation", name_of(AGGREGATIONS, self.aggregation).into()),
            ("test_fraction", self.test_fraction.to_string()),
            ("validation_fraction", self.validation_fraction.to_string()),
            ("split_mode", name_of(SPLIT_MODES, self.split_mode).into()),
            ("seed", self.seed.to_string()),
            ("classification_threshold", self.classification_threshold.to_string()),
            (
                "regressions",
                self.regressions
                    .iter()
                    .map(|r| r.join("+"))
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            ("cluster", name_of(CLUSTERS, self.cluster).into()),
            ("small_sample_correction", self.small_sample_correction.to_string()),
            ("demean_tolerance", self.demean_tolerance.to_string()),
            ("max_sweeps", self.max_sweeps.to_string()),
            ("quantile_fraction", self.quantile_fraction.to_string()),
            ("cost_bps", self.cost_bps.to_string()),
            ("cost_convention", name_of(COSTS, self.cost_convention).into()),
            ("start_date", date(&self.start_date)),
            ("end_date", date(&self.end_date)),
            ("annualization", self.annualization.to_string()),
            ("risk_free", self.risk_free.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_study_constants() {
        let c = RunConfig::default();
        assert_eq!(c.similarity_threshold, 0.8);
        assert_eq!(c.novelty_window_days, 20);
        assert_eq!(c.novelty_window_unit, WindowUnit::Calendar);
        assert_eq!(c.quantile_fraction, 0.2);
        assert_eq!(c.cost_bps, 10.0);
        assert_eq!(c.label_horizon, 3);
        assert_eq!(c.test_fraction, 0.2);
        c.validate().unwrap();
    }

    #[test]
    fn parses_file_format() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# comment\nnews = data/news.jsonl  # trailing\nnovelty_window_unit = business\nnovelty_window_days=5\nregressions = a; b ; a+b\nstart_date = 2021-08-02\n",
            Some(Path::new("/base")),
        )
        .unwrap();
        assert_eq!(c.news, Some(PathBuf::from("/base/data/news.jsonl")));
        assert_eq!(c.novelty_window_unit, WindowUnit::Business);
        assert_eq!(c.novelty_window_days, 5);
        assert_eq!(c.regressions, vec![vec!["a".to_string()], vec!["b".into()], vec!["a".into(), "b".into()]]);
        assert_eq!(c.start_date, Some(NaiveDate::from_ymd_opt(2021, 8, 2).unwrap()));
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("nonsense", None).is_err());
        assert!(c.apply_text("mystery = 1", None).is_err());
        assert!(c.apply_text("cluster = triple", None).is_err());
        c.similarity_threshold = 1.5;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.quantile_fraction = 0.6;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.cost_bps = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pairs_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("cost_convention = per_side\nregressions = x+y\nseed = 9", None).unwrap();
        let mut d = RunConfig::default();
        for (k, v) in c.to_pairs() {
            d.set(k, &v, None).unwrap();
        }
        assert_eq!(c, d);
    }
}
