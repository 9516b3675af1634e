//! Report types and file emission.
//!
//! JSON reports are pretty-printed with keys in declaration order, so equal
//! results always produce equal bytes.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::backtest::{CostConvention, StrategyReport};
use crate::classify::{ConfusionMatrix, Metric, SplitMode};
use crate::corpus::{ComparisonScope, NoveltyWindow};
use crate::error::{Error, Result};
use crate::panel::{ClusterMode, FitStatistics};

pub const FUNNEL_FILE: &str = "funnel.json";
pub const NOVEL_NEWS_FILE: &str = "novel_news.jsonl";
pub const EXCLUDED_FILE: &str = "excluded.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const REGRESSION_FILE: &str = "regression.json";
pub const STRATEGIES_FILE: &str = "strategies.json";
pub const CUMULATIVE_FILE: &str = "cumulative.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Article counts through filtering and labeling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunnelReport {
    pub all_news: usize,
    pub single_stock_news: usize,
    pub unique_news: usize,
    pub with_return_window: usize,
    pub excluded_as_duplicate: usize,
    pub novelty_window: NoveltyWindow,
    pub similarity_threshold: f64,
    pub comparison_scope: ComparisonScope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub mode: SplitMode,
    pub seed: u64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// One row of the classification table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMetrics {
    pub model: String,
    pub n_evaluated: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub specificity: Metric,
    pub f1: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub evaluated_on: &'static str,
    pub threshold: f64,
    pub split: SplitSummary,
    pub models: Vec<ModelMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_stat: f64,
}

/// One column of the regression table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionColumn {
    pub regressors: Vec<CoefficientRow>,
    pub intercept: f64,
    pub n_obs: usize,
    pub n_firms: usize,
    pub n_dates: usize,
    pub firm_fixed_effects: bool,
    pub date_fixed_effects: bool,
    pub statistics: FitStatistics,
    pub demeaning_sweeps: usize,
    pub dropped_missing_score: usize,
    pub dropped_no_next_day: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub dependent: &'static str,
    pub cluster: ClusterMode,
    pub small_sample_correction: bool,
    pub regressions: Vec<RegressionColumn>,
}

/// Long, short and long-short statistics of one model's portfolios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelStrategies {
    pub model: String,
    pub long: StrategyReport,
    /// Returns of the shorted stocks; the short P&L is their negation.
    pub short: StrategyReport,
    pub long_short: StrategyReport,
    pub skipped_legs: usize,
    pub dropped_caps: usize,
    pub unschedulable_signals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategiesReport {
    pub quantile_fraction: f64,
    pub cost_bps: f64,
    pub cost_convention: CostConvention,
    pub annualization: f64,
    pub risk_free: f64,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub drawdown_definition: &'static str,
    pub strategies: Vec<ModelStrategies>,
    pub benchmarks: Vec<StrategyReport>,
}

pub const DRAWDOWN_DEFINITION: &str = "peak_to_trough_of_compounded_value_path";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((total, hex::encode(hasher.finalize())))
}

pub fn input_digest(role: &'static str, path: &Path) -> Result<InputDigest> {
    let (bytes, sha256) = sha256_file(path)?;
    Ok(InputDigest {
        role,
        path: path.display().to_string(),
        bytes,
        sha256,
    })
}

/// Collects written files (relative names) in the order they were emitted.
#[derive(Debug)]
pub struct ReportWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl ReportWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(ReportWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::format(name, e.to_string()))?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    /// Runs `fill` against an in-memory buffer and writes the result.
    pub fn with_buffer<F>(&mut self, name: &str, fill: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.bytes(name, &buf)
    }
}

/// `date,strategy,value` rows: value of $1 after each date.
pub fn write_cumulative_csv<W: std::io::Write>(out: W, reports: &[&StrategyReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "strategy", "value"])
        .map_err(|e| Error::format("cumulative output", e.to_string()))?;
    for r in reports {
        for (d, v) in &r.cumulative_path {
            w.write_record([d.to_string().as_str(), r.name.as_str(), &v.to_string()])
                .map_err(|e| Error::format("cumulative output", e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io("cumulative output", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_strategy_set_is_valid_json() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ReportWriter::create(dir.path()).unwrap();
        let report = StrategiesReport {
            quantile_fraction: 0.2,
            cost_bps: 10.0,
            cost_convention: CostConvention::RoundTrip,
            annualization: 252.0,
            risk_free: 0.0,
            start_date: None,
            end_date: None,
            drawdown_definition: DRAWDOWN_DEFINITION,
            strategies: Vec::new(),
            benchmarks: Vec::new(),
        };
        let path = w.json(STRATEGIES_FILE, &report).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(v["strategies"], serde_json::json!([]));
        assert_eq!(v["cost_convention"], "round_trip");
        assert_eq!(w.written(), [STRATEGIES_FILE]);
    }

    #[test]
    fn digest_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        let (n, h) = sha256_file(&p).unwrap();
        assert_eq!(n, 3);
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn cumulative_csv_shape() {
        let d = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
        let r = StrategyReport {
            name: "m L".into(),
            n_days: 1,
            sharpe: None,
            mean_daily_return_pct: Some(1.0),
            std_daily_pct: None,
            max_drawdown_pct: 0.0,
            cumulative_path: vec![(d, 1.01)],
        };
        let mut buf = Vec::new();
        write_cumulative_csv(&mut buf, &[&r]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "date,strategy,value\n2022-01-03,m L,1.01\n");
    }
}
