//! News ingestion, term-frequency vectors and the two corpus filters
//! (single-stock and novelty).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped news item. The timestamp carries the exchange-local offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub article_id: String,
    pub ticker: String,
    pub tickers_mentioned: BTreeSet<String>,
    pub timestamp: DateTime<FixedOffset>,
    pub text: String,
}

impl NewsArticle {
    pub fn local_date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

/// Reads a JSON-lines news file. Blank lines are skipped; ids must be unique.
pub fn read_news_jsonl(path: &Path) -> Result<Vec<NewsArticle>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut articles = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let article: NewsArticle = serde_json::from_str(&line).map_err(|e| {
            Error::format(format!("{} line {}", path.display(), idx + 1), e.to_string())
        })?;
        if !seen.insert(article.article_id.clone()) {
            return Err(Error::DuplicateArticle(article.article_id));
        }
        articles.push(article);
    }
    Ok(articles)
}

pub fn write_news_jsonl<W: Write>(mut out: W, articles: &[NewsArticle]) -> std::io::Result<()> {
    for a in articles {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Lowercases and splits on every non-alphabetic character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Sparse term counts with a cached squared norm (an exact integer in f64).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermVector {
    entries: BTreeMap<String, u32>,
    norm_sq: f64,
}

impl TermVector {
    pub fn entries(&self) -> &BTreeMap<String, u32> {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, term: &str) -> u32 {
        self.entries.get(term).copied().unwrap_or(0)
    }

    fn squared_norm(entries: &BTreeMap<String, u32>) -> f64 {
        entries.values().map(|&c| (c as f64) * (c as f64)).sum()
    }
}

impl<S: AsRef<str>> FromIterator<S> for TermVector {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut entries = BTreeMap::new();
        for t in iter {
            *entries.entry(t.as_ref().to_string()).or_insert(0u32) += 1;
        }
        let norm_sq = TermVector::squared_norm(&entries);
        TermVector { entries, norm_sq }
    }
}

pub fn term_frequency<S: AsRef<str>>(tokens: &[S]) -> TermVector {
    tokens.iter().collect()
}

/// Cosine of the angle between two count vectors; 0 if either is empty.
pub fn cosine_similarity(a: &TermVector, b: &TermVector) -> f64 {
    if a.norm_sq == 0.0 || b.norm_sq == 0.0 {
        return 0.0;
    }
    let (small, large) = if a.entries.len() <= b.entries.len() {
        (a, b)
    } else {
        (b, a)
    };
    let dot: f64 = small
        .entries
        .iter()
        .map(|(t, &c)| c as f64 * large.get(t) as f64)
        .sum();
    // Identical vectors give exactly 1.
    (dot / (a.norm_sq * b.norm_sq).sqrt()).clamp(0.0, 1.0)
}

/// Article counts along the filter pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFunnel {
    pub all_news: usize,
    pub single_stock_news: usize,
    pub unique_news: usize,
}

/// Keeps articles that mention exactly one ticker, preserving order.
pub fn single_stock_filter(articles: Vec<NewsArticle>) -> (Vec<NewsArticle>, CorpusFunnel) {
    let all_news = articles.len();
    let kept: Vec<NewsArticle> = articles
        .into_iter()
        .filter(|a| a.tickers_mentioned.len() == 1)
        .collect();
    let funnel = CorpusFunnel {
        all_news,
        single_stock_news: kept.len(),
        unique_news: kept.len(),
    };
    (kept, funnel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyWindow {
    /// Prior articles at most this many days (24h periods) older.
    CalendarDays(u32),
    /// Prior articles whose local date is at most this many weekdays back.
    BusinessDays(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonScope {
    SameTicker,
    CorpusWide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyConfig {
    pub window: NoveltyWindow,
    pub threshold: f64,
    pub scope: ComparisonScope,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        NoveltyConfig {
            window: NoveltyWindow::CalendarDays(20),
            threshold: 0.8,
            scope: ComparisonScope::SameTicker,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedArticle {
    pub article: NewsArticle,
    /// The earlier article that triggered the exclusion (first match in input order).
    pub matched_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoveltyPartition {
    pub kept: Vec<NewsArticle>,
    pub excluded: Vec<ExcludedArticle>,
}

/// Number of weekdays in `(from, to]`.
fn weekdays_between(from: NaiveDate, to: NaiveDate) -> i64 {
    if to <= from {
        return 0;
    }
    let mut count = 0;
    let mut d = from;
    while d < to {
        d = d.succ_opt().expect("date overflow");
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            count += 1;
        }
    }
    count
}

fn within_window(
    window: NoveltyWindow,
    earlier: &DateTime<FixedOffset>,
    later: &DateTime<FixedOffset>,
) -> bool {
    match window {
        NoveltyWindow::CalendarDays(days) => {
            *later - *earlier <= Duration::days(days as i64)
        }
        NoveltyWindow::BusinessDays(days) => {
            weekdays_between(earlier.date_naive(), later.date_naive()) <= days as i64
        }
    }
}

/// Excludes an article when it is at least `threshold`-similar to any earlier
/// article (kept or excluded) in scope and inside the window.
///
/// Input must be sorted ascending by timestamp. Articles sharing a timestamp
/// are compared in input order.
pub fn novelty_filter(articles: Vec<NewsArticle>, config: &NoveltyConfig) -> Result<NoveltyPartition> {
    if !(config.threshold > 0.0) || !config.threshold.is_finite() {
        return Err(Error::InvalidInput(format!(
            "similarity threshold must be positive, got {}",
            config.threshold
        )));
    }
    for (i, pair) in articles.windows(2).enumerate() {
        if pair[1].timestamp < pair[0].timestamp {
            return Err(Error::Unsorted {
                position: i + 1,
                article_id: pair[1].article_id.clone(),
            });
        }
    }

    let mut history: HashMap<&str, VecDeque<(DateTime<FixedOffset>, usize, TermVector)>> =
        HashMap::new();
    let mut verdicts: Vec<Option<(usize, f64)>> = Vec::with_capacity(articles.len());

    for (idx, article) in articles.iter().enumerate() {
        let key = match config.scope {
            ComparisonScope::SameTicker => article.ticker.as_str(),
            ComparisonScope::CorpusWide => "",
        };
        let vector = term_frequency(&tokenize(&article.text));
        let queue = history.entry(key).or_default();
        while let Some((ts, _, _)) = queue.front() {
            if within_window(config.window, ts, &article.timestamp) {
                break;
            }
            queue.pop_front();
        }
        let hit = queue.iter().find_map(|(_, prior, prior_vec)| {
            let sim = cosine_similarity(prior_vec, &vector);
            (sim >= config.threshold).then_some((*prior, sim))
        });
        verdicts.push(hit);
        queue.push_back((article.timestamp, idx, vector));
    }

    let ids: Vec<String> = articles.iter().map(|a| a.article_id.clone()).collect();
    let mut partition = NoveltyPartition::default();
    for (article, verdict) in articles.into_iter().zip(verdicts) {
        match verdict {
            None => partition.kept.push(article),
            Some((prior, similarity)) => partition.excluded.push(ExcludedArticle {
                article,
                matched_id: ids[prior].clone(),
                similarity,
            }),
        }
    }
    Ok(partition)
}

/// Sorts by timestamp (stable, so ties keep input order) and runs both filters.
pub fn filter_corpus(
    mut articles: Vec<NewsArticle>,
    config: &NoveltyConfig,
) -> Result<(NoveltyPartition, CorpusFunnel)> {
    articles.sort_by(|a, b| a.timestamp.cmp(&b.timestamp));
    let (single, mut funnel) = single_stock_filter(articles);
    let partition = novelty_filter(single, config)?;
    funnel.unique_news = partition.kept.len();
    Ok((partition, funnel))
}
