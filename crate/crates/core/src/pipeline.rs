//! Stage orchestration: filter, label, score, evaluate, regress, backtest.
//!
//! Each stage writes its report files as soon as it completes, and a
//! manifest describing the config and input hashes is written last.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::backtest::{benchmark_series, portfolio_series, strategy_report, Signal, StrategyReport, StrategySeries};
use crate::classify::{classify_score, confusion, metric_suite, split_dataset, ConfusionMatrix, Metric};
use crate::config::RunConfig;
use crate::corpus::{filter_corpus, read_news_jsonl, tokenize, write_news_jsonl, NewsArticle};
use crate::error::{Error, Result};
use crate::marketdata::{
    label_articles, market_series, read_bars_csv, read_market_csv, write_labels_csv, LabeledExample, MarketData,
};
use crate::panel::{assemble_panel, fit_two_way_fe};
use crate::report::*;
use crate::scoring::{
    ingest_external_scores, lexicon_score, load_lexicon, write_scores_csv, ScoreRecord, ScoreTable, LEXICON_MODEL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Filter,
    Label,
    Score,
    Evaluate,
    Regress,
    Backtest,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Label => "label",
            Stage::Score => "score",
            Stage::Evaluate => "evaluate",
            Stage::Regress => "regress",
            Stage::Backtest => "backtest",
        }
    }
}

/// Everything computed by a run, up to the requested stage.
#[derive(Debug, Default)]
pub struct RunResults {
    pub funnel: Option<FunnelReport>,
    pub labels: Vec<LabeledExample>,
    pub scores: ScoreTable,
    pub metrics: Option<MetricsReport>,
    pub regression: Option<RegressionReport>,
    pub strategies: Option<StrategiesReport>,
    pub manifest: Option<Manifest>,
}

fn require<'a>(path: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a std::path::Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("{key} path is required")))
}

/// Checks that every input the requested stages need is configured.
pub fn check_inputs(cfg: &RunConfig, until: Stage) -> Result<()> {
    cfg.validate()?;
    require(&cfg.news, "news")?;
    if until >= Stage::Label {
        require(&cfg.bars, "bars")?;
    }
    if until >= Stage::Score {
        if cfg.lexicon_scoring {
            let lex = require(&cfg.lexicon, "lexicon (lexicon_scoring is enabled)")?;
            if !lex.is_file() {
                return Err(Error::Config(format!(
                    "lexicon file {} not found (lexicon_scoring is enabled)",
                    lex.display()
                )));
            }
        }
        if !cfg.lexicon_scoring && cfg.scores.is_none() {
            return Err(Error::Config(
                "no score source: enable lexicon_scoring or provide a scores file".into(),
            ));
        }
    }
    Ok(())
}

fn stage<T>(s: Stage, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(s.name()))
}

/// Runs every stage up to and including `until`, writing reports into
/// `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig, until: Stage) -> Result<RunResults> {
    check_inputs(cfg, until)?;
    let mut out = ReportWriter::create(&cfg.output_dir)?;
    let mut results = RunResults::default();

    let articles = stage(Stage::Filter, read_news_jsonl(require(&cfg.news, "news")?))?;
    let (kept, funnel) = stage(Stage::Filter, filter_stage(cfg, articles, &mut out))?;
    results.funnel = Some(funnel);

    if until >= Stage::Label {
        let (data, labels) = stage(Stage::Label, label_stage(cfg, &kept, &mut out, &mut results))?;
        results.labels = labels;

        if until >= Stage::Score {
            results.scores = stage(Stage::Score, score_stage(cfg, &kept, &mut out))?;
        }
        if until >= Stage::Evaluate {
            results.metrics = Some(stage(Stage::Evaluate, evaluate_stage(cfg, &results, &mut out))?);
        }
        if until >= Stage::Regress {
            results.regression = Some(stage(Stage::Regress, regress_stage(cfg, &results, &data, &mut out))?);
        }
        if until >= Stage::Backtest {
            results.strategies = Some(stage(
                Stage::Backtest,
                backtest_stage(cfg, &results, &kept, &data, &mut out),
            )?);
        }
    }

    results.manifest = Some(write_manifest(cfg, until, &mut out)?);
    Ok(results)
}

fn filter_stage(
    cfg: &RunConfig,
    articles: Vec<NewsArticle>,
    out: &mut ReportWriter,
) -> Result<(Vec<NewsArticle>, FunnelReport)> {
    let novelty = cfg.novelty();
    let (partition, funnel) = filter_corpus(articles, &novelty)?;
    out.with_buffer(NOVEL_NEWS_FILE, |buf| {
        write_news_jsonl(buf, &partition.kept).map_err(|e| Error::io(NOVEL_NEWS_FILE, e))
    })?;
    out.with_buffer(EXCLUDED_FILE, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let err = |e: csv::Error| Error::format(EXCLUDED_FILE, e.to_string());
        w.write_record(["article_id", "ticker", "matched_id", "similarity"]).map_err(err)?;
        for x in &partition.excluded {
            w.write_record([
                x.article.article_id.as_str(),
                x.article.ticker.as_str(),
                x.matched_id.as_str(),
                &x.similarity.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(EXCLUDED_FILE, e))
    })?;
    let report = FunnelReport {
        all_news: funnel.all_news,
        single_stock_news: funnel.single_stock_news,
        unique_news: funnel.unique_news,
        with_return_window: 0,
        excluded_as_duplicate: partition.excluded.len(),
        novelty_window: novelty.window,
        similarity_threshold: novelty.threshold,
        comparison_scope: novelty.scope,
    };
    out.json(FUNNEL_FILE, &report)?;
    Ok((partition.kept, report))
}

fn label_stage(
    cfg: &RunConfig,
    kept: &[NewsArticle],
    out: &mut ReportWriter,
    results: &mut RunResults,
) -> Result<(MarketData, Vec<LabeledExample>)> {
    let data = MarketData::from_bars(read_bars_csv(require(&cfg.bars, "bars")?)?)?;
    let market = match &cfg.market {
        Some(p) => read_market_csv(p)?,
        None => market_series(&data),
    };
    let labeling = label_articles(kept, &data, &market, cfg.label_horizon, cfg.aggregation);
    out.with_buffer(LABELS_FILE, |buf| write_labels_csv(buf, &labeling.examples))?;
    if let Some(f) = results.funnel.as_mut() {
        f.with_return_window = labeling.examples.len();
        out.json(FUNNEL_FILE, f)?;
    }
    Ok((data, labeling.examples))
}

fn score_stage(cfg: &RunConfig, kept: &[NewsArticle], out: &mut ReportWriter) -> Result<ScoreTable> {
    let mut table = ScoreTable::default();
    if cfg.lexicon_scoring {
        let lexicon = load_lexicon(require(&cfg.lexicon, "lexicon")?)?;
        for a in kept {
            table.insert(ScoreRecord {
                article_id: a.article_id.clone(),
                model_name: LEXICON_MODEL.into(),
                score: lexicon_score(&tokenize(&a.text), &lexicon),
            })?;
        }
    }
    if let Some(path) = &cfg.scores {
        let external = ingest_external_scores(path, None)?;
        for r in external.table.records() {
            if cfg.lexicon_scoring && r.model_name == LEXICON_MODEL {
                return Err(Error::Config(format!(
                    "{} supplies model {LEXICON_MODEL:?}, which clashes with lexicon scoring",
                    path.display()
                )));
            }
            table.insert(r)?;
        }
    }
    let ids: HashSet<String> = kept.iter().map(|a| a.article_id.clone()).collect();
    table.retain_articles(&ids);
    out.with_buffer(SCORES_FILE, |buf| write_scores_csv(buf, &table))?;
    Ok(table)
}

fn model_names(scores: &ScoreTable) -> Vec<String> {
    scores.models().map(str::to_string).collect()
}

fn evaluate_stage(cfg: &RunConfig, results: &RunResults, out: &mut ReportWriter) -> Result<MetricsReport> {
    let ids: Vec<String> = results.labels.iter().map(|l| l.article_id.clone()).collect();
    let split = split_dataset(&ids, cfg.seed, cfg.split_proportions(), cfg.split_mode)?;
    let label_of: HashMap<&str, u8> = results.labels.iter().map(|l| (l.article_id.as_str(), l.label)).collect();

    let mut models = Vec::new();
    for model in model_names(&results.scores) {
        let mut preds = Vec::new();
        let mut truth = Vec::new();
        for id in &split.test_ids {
            if let Some(s) = results.scores.get(id, &model) {
                preds.push(classify_score(s, cfg.classification_threshold));
                truth.push(label_of[id.as_str()]);
            }
        }
        let cm = confusion(&preds, &truth)?;
        let row = match metric_suite(&cm) {
            Ok(m) => ModelMetrics {
                model,
                n_evaluated: preds.len(),
                confusion: cm,
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                specificity: m.specificity,
                f1: m.f1,
            },
            Err(_) => ModelMetrics {
                model,
                n_evaluated: 0,
                confusion: ConfusionMatrix::default(),
                accuracy: Metric::Undefined,
                precision: Metric::Undefined,
                recall: Metric::Undefined,
                specificity: Metric::Undefined,
                f1: Metric::Undefined,
            },
        };
        models.push(row);
    }
    let report = MetricsReport {
        evaluated_on: "test",
        threshold: cfg.classification_threshold,
        split: SplitSummary {
            mode: cfg.split_mode,
            seed: split.seed,
            train: split.train_ids.len(),
            validation: split.validation_ids.len(),
            test: split.test_ids.len(),
        },
        models,
    };
    out.json(METRICS_FILE, &report)?;
    Ok(report)
}

/// The configured regressor sets, or one per model plus one with all models.
pub fn regression_sets(cfg: &RunConfig, models: &[String]) -> Result<Vec<Vec<String>>> {
    if !cfg.regressions.is_empty() {
        for set in &cfg.regressions {
            if let Some(m) = set.iter().find(|m| !models.contains(m)) {
                return Err(Error::Config(format!("regression references unknown model {m:?}")));
            }
        }
        return Ok(cfg.regressions.clone());
    }
    let mut sets: Vec<Vec<String>> = models.iter().map(|m| vec![m.clone()]).collect();
    if models.len() > 1 {
        sets.push(models.to_vec());
    }
    Ok(sets)
}

fn regress_stage(
    cfg: &RunConfig,
    results: &RunResults,
    data: &MarketData,
    out: &mut ReportWriter,
) -> Result<RegressionReport> {
    let options = cfg.fit_options();
    let mut columns = Vec::new();
    for set in regression_sets(cfg, &model_names(&results.scores))? {
        let assembly = assemble_panel(&results.labels, &results.scores, data, &set)?;
        let fit = fit_two_way_fe(&assembly.panel, &options).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("regression {}: {m}", set.join("+"))),
            other => other,
        })?;
        columns.push(RegressionColumn {
            regressors: (0..set.len())
                .map(|j| CoefficientRow {
                    name: fit.regressor_names[j].clone(),
                    coefficient: fit.gamma[j],
                    std_error: fit.se_clustered[j],
                    t_stat: fit.t_stats[j],
                })
                .collect(),
            intercept: fit.intercept,
            n_obs: fit.n_obs,
            n_firms: assembly.panel.firms_present(),
            n_dates: assembly.panel.dates_present(),
            firm_fixed_effects: true,
            date_fixed_effects: true,
            statistics: fit.stats,
            demeaning_sweeps: fit.sweeps,
            dropped_missing_score: assembly.dropped_missing_score,
            dropped_no_next_day: assembly.dropped_no_next_day,
        });
    }
    let report = RegressionReport {
        dependent: "next_day_return_pct",
        cluster: options.cluster,
        small_sample_correction: options.small_sample_correction,
        regressions: columns,
    };
    out.json(REGRESSION_FILE, &report)?;
    Ok(report)
}

fn backtest_stage(
    cfg: &RunConfig,
    results: &RunResults,
    kept: &[NewsArticle],
    data: &MarketData,
    out: &mut ReportWriter,
) -> Result<StrategiesReport> {
    let bt = cfg.backtest();
    let by_id: HashMap<&str, &NewsArticle> = kept.iter().map(|a| (a.article_id.as_str(), a)).collect();
    let report = |s: &StrategySeries| strategy_report(s, cfg.annualization, cfg.risk_free);

    let mut strategies = Vec::new();
    for model in model_names(&results.scores) {
        let signals: Vec<Signal> = results
            .labels
            .iter()
            .filter_map(|l| {
                let score = results.scores.get(&l.article_id, &model)?;
                let a = by_id[l.article_id.as_str()];
                Some(Signal {
                    article_id: a.article_id.clone(),
                    ticker: a.ticker.clone(),
                    timestamp: a.timestamp,
                    score,
                })
            })
            .collect();
        let outcome = portfolio_series(&signals, data, &bt, &model)?;
        strategies.push(ModelStrategies {
            model,
            long: report(&outcome.long)?,
            short: report(&outcome.short)?,
            long_short: report(&outcome.long_short)?,
            skipped_legs: outcome.skipped_legs,
            dropped_caps: outcome.dropped_caps,
            unschedulable_signals: outcome.unschedulable_signals,
        });
    }
    let (vw, ew) = benchmark_series(data, bt.start, bt.end)?;
    let benchmarks = vec![report(&vw)?, report(&ew)?];

    let mut paths: Vec<&StrategyReport> = Vec::new();
    for s in &strategies {
        paths.extend([&s.long, &s.short, &s.long_short]);
    }
    paths.extend(benchmarks.iter());
    out.with_buffer(CUMULATIVE_FILE, |buf| write_cumulative_csv(buf, &paths))?;

    let report = StrategiesReport {
        quantile_fraction: bt.fraction,
        cost_bps: bt.cost_bps,
        cost_convention: bt.cost_convention,
        annualization: cfg.annualization,
        risk_free: cfg.risk_free,
        start_date: bt.start,
        end_date: bt.end,
        drawdown_definition: DRAWDOWN_DEFINITION,
        strategies,
        benchmarks,
    };
    out.json(STRATEGIES_FILE, &report)?;
    Ok(report)
}

fn write_manifest(cfg: &RunConfig, until: Stage, out: &mut ReportWriter) -> Result<Manifest> {
    let mut inputs = Vec::new();
    let roles: [(&'static str, &Option<std::path::PathBuf>, bool); 5] = [
        ("news", &cfg.news, true),
        ("bars", &cfg.bars, until >= Stage::Label),
        ("market", &cfg.market, until >= Stage::Label),
        ("lexicon", &cfg.lexicon, until >= Stage::Score && cfg.lexicon_scoring),
        ("scores", &cfg.scores, until >= Stage::Score),
    ];
    for (role, path, used) in roles {
        if let (Some(p), true) = (path, used) {
            inputs.push(input_digest(role, p)?);
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect::<BTreeMap<_, _>>(),
        inputs,
        outputs: out.written().to_vec(),
    };
    out.json(MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}
