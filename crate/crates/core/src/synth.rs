//! Seeded synthetic market and news data with a planted sentiment effect.
//!
//! Daily returns (percent) follow
//! `r[i, t+1] = a_i + b_t + gamma * s[i, t] + noise`, where `s[i, t]` is the
//! score of the news event for firm `i` whose first tradable session is `t`
//! (zero when there is no event). The "signal" model carries `s`; the
//! "noise" model is an independent uniform draw.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, TimeZone, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::corpus::{write_news_jsonl, NewsArticle};
use crate::error::{Error, Result};
use crate::marketdata::{write_bars_csv, DailyBar};
use crate::scoring::{write_scores_csv, ScoreRecord, ScoreTable};

pub const SIGNAL_MODEL: &str = "signal";
pub const NOISE_MODEL: &str = "noise";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_firms: usize,
    pub n_dates: usize,
    /// Mean news events per trading day (at most one per firm per day).
    pub articles_per_day: f64,
    /// Percent return per unit score on the following session.
    pub gamma: f64,
    /// Idiosyncratic return volatility, percent.
    pub noise_sigma: f64,
    /// Probability that an article gets a byte-identical copy.
    pub duplicate_rate: f64,
    /// Copies land between one hour and this many days after the original.
    pub duplicate_max_lag_days: u32,
    /// Probability that an article also mentions a second ticker.
    pub multi_ticker_rate: f64,
    /// Volatility of the daily date effect, percent.
    pub market_sigma: f64,
    pub seed: u64,
    pub start_date: NaiveDate,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_firms: 50,
            n_dates: 500,
            articles_per_day: 10.0,
            gamma: 0.25,
            noise_sigma: 2.0,
            duplicate_rate: 0.05,
            duplicate_max_lag_days: 5,
            multi_ticker_rate: 0.03,
            market_sigma: 1.0,
            seed: 20230630,
            start_date: NaiveDate::from_ymd_opt(2021, 8, 2).unwrap(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_firms >= 1
            && self.n_dates >= 1
            && self.articles_per_day >= 0.0
            && self.noise_sigma >= 0.0
            && self.market_sigma >= 0.0
            && (0.0..=1.0).contains(&self.duplicate_rate)
            && (0.0..=1.0).contains(&self.multi_ticker_rate)
            && self.duplicate_max_lag_days >= 1
            && self.gamma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synthetic spec {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub articles: Vec<NewsArticle>,
    pub bars: Vec<DailyBar>,
    pub scores: ScoreTable,
    pub lexicon_positive: Vec<&'static str>,
    pub lexicon_negative: Vec<&'static str>,
    /// (copy id, original id) for every injected duplicate.
    pub duplicates: Vec<(String, String)>,
    pub firm_effects: Vec<f64>,
    pub date_effects: Vec<f64>,
    pub tickers: Vec<String>,
    pub calendar: Vec<NaiveDate>,
}

const POSITIVE_WORDS: &[&str] = &[
    "gain", "gains", "growth", "strong", "beat", "record", "upgrade", "profit", "improve", "improved",
    "exceed", "outperform", "rebound", "success", "favorable", "robust",
];
const NEGATIVE_WORDS: &[&str] = &[
    "loss", "losses", "decline", "weak", "miss", "downgrade", "lawsuit", "impairment", "drop", "layoffs",
    "default", "adverse", "shortfall", "recall", "fraud", "slump",
];
const NEUTRAL_LEXICON_ROWS: &[&str] = &["company", "shares", "quarter", "market", "said"];

/// Pseudo-words from consonant/vowel syllables: 18*5*18*5 = 8100 candidates.
fn vocabulary() -> Vec<String> {
    const C: &[char] = &['b', 'd', 'f', 'g', 'h', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'w', 'z', 'c', 'j'];
    const V: &[char] = &['a', 'e', 'i', 'o', 'u'];
    let mut out = Vec::new();
    for (i, c1) in C.iter().enumerate() {
        for v1 in V {
            for c2 in C.iter().skip(i % 3).step_by(3) {
                for v2 in V.iter().take(2) {
                    out.push(format!("{c1}{v1}{c2}{v2}"));
                }
            }
        }
    }
    out
}

fn weekday_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

/// Rounds to a grid of `1 / scale`, keeping the files compact.
fn round_to(x: f64, scale: f64) -> f64 {
    (x * scale).round() / scale
}

fn local_time(offset: &FixedOffset, date: NaiveDate, seconds: i64) -> DateTime<FixedOffset> {
    let naive = date.and_hms_opt(0, 0, 0).unwrap() + Duration::seconds(seconds);
    offset.from_local_datetime(&naive).single().unwrap()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offset = FixedOffset::west_opt(5 * 3600).unwrap();
    let calendar = weekday_calendar(spec.start_date, spec.n_dates);
    let tickers: Vec<String> = (0..spec.n_firms).map(|i| format!("F{i:03}")).collect();
    let vocab = vocabulary();

    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let firm_effects: Vec<f64> = (0..spec.n_firms).map(|_| 0.05 * std_normal.sample(&mut rng)).collect();
    let date_effects: Vec<f64> = (0..spec.n_dates)
        .map(|_| 0.03 + spec.market_sigma * std_normal.sample(&mut rng))
        .collect();
    let opening_effect = 0.03 + spec.market_sigma * std_normal.sample(&mut rng);

    // Events: firm i has news scored s on session t.
    let mut event_score = vec![vec![None::<f64>; spec.n_dates]; spec.n_firms];
    let base = spec.articles_per_day.floor() as usize;
    let frac = spec.articles_per_day - base as f64;
    let mut order: Vec<usize> = (0..spec.n_firms).collect();
    for t in 0..spec.n_dates {
        let k = (base + usize::from(rng.random::<f64>() < frac)).min(spec.n_firms);
        order.shuffle(&mut rng);
        let mut chosen = order[..k].to_vec();
        chosen.sort_unstable();
        for i in chosen {
            event_score[i][t] = Some(rng.random::<f64>());
        }
    }

    // Prices and returns.
    let shares = LogNormal::new(18.0, 1.0).unwrap();
    let mut bars = Vec::with_capacity(spec.n_firms * spec.n_dates);
    for i in 0..spec.n_firms {
        let n_shares = shares.sample(&mut rng);
        let mut close = rng.random_range(20.0..200.0);
        for t in 0..spec.n_dates {
            let mut pct = firm_effects[i] + spec.noise_sigma * std_normal.sample(&mut rng);
            pct += if t == 0 { opening_effect } else { date_effects[t - 1] };
            if t > 0 {
                if let Some(s) = event_score[i][t - 1] {
                    pct += spec.gamma * s;
                }
            }
            let ret = round_to((pct / 100.0).max(-0.9), 1e8);
            let overnight: f64 = rng.random_range(0.3..0.7);
            let open = round_to(close * (1.0 + overnight * ret), 1e4);
            let new_close = close * (1.0 + ret);
            bars.push(DailyBar {
                date: calendar[t],
                ticker: tickers[i].clone(),
                open_price: open,
                close_price: round_to(new_close, 1e4),
                total_return: ret,
                market_cap: (n_shares * new_close).round(),
            });
            close = new_close;
        }
    }

    // Articles.
    let mut articles = Vec::new();
    let mut scores = ScoreTable::default();
    let mut serial = 0usize;
    let mut next_id = || {
        serial += 1;
        format!("A{serial:07}")
    };
    let mut duplicates = Vec::new();
    for t in 0..spec.n_dates {
        for i in 0..spec.n_firms {
            let Some(s) = event_score[i][t] else { continue };
            let day = calendar[t];
            let bucket: f64 = rng.random();
            let timestamp = if bucket < 0.25 {
                local_time(&offset, day, rng.random_range(0..6 * 3600))
            } else if bucket < 0.75 {
                local_time(&offset, day, rng.random_range(6 * 3600..16 * 3600))
            } else {
                let prev = day.pred_opt().unwrap();
                local_time(&offset, prev, rng.random_range(16 * 3600..24 * 3600))
            };

            let n_words = rng.random_range(20..40);
            let mut words: Vec<&str> = (0..n_words).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
            let p_positive = 0.2 + 0.6 * s;
            for _ in 0..rng.random_range(2..6) {
                let list = if rng.random::<f64>() < p_positive { POSITIVE_WORDS } else { NEGATIVE_WORDS };
                let pos = rng.random_range(0..=words.len());
                words.insert(pos, list[rng.random_range(0..list.len())]);
            }
            let text = format!("{} {}.", tickers[i], words.join(" "));

            let mut mentioned: BTreeSet<String> = [tickers[i].clone()].into();
            if spec.n_firms > 1 && rng.random::<f64>() < spec.multi_ticker_rate {
                let other = (i + rng.random_range(1..spec.n_firms)) % spec.n_firms;
                mentioned.insert(tickers[other].clone());
            }

            let noise_score: f64 = rng.random();
            let article = NewsArticle {
                article_id: next_id(),
                ticker: tickers[i].clone(),
                tickers_mentioned: mentioned,
                timestamp,
                text,
            };
            let mut emit = |a: NewsArticle, scores: &mut ScoreTable| -> Result<()> {
                for (model, score) in [(SIGNAL_MODEL, s), (NOISE_MODEL, noise_score)] {
                    scores.insert(ScoreRecord {
                        article_id: a.article_id.clone(),
                        model_name: model.into(),
                        score,
                    })?;
                }
                articles.push(a);
                Ok(())
            };
            if rng.random::<f64>() < spec.duplicate_rate {
                let lag = rng.random_range(3600..spec.duplicate_max_lag_days as i64 * 86_400);
                let copy = NewsArticle {
                    article_id: next_id(),
                    timestamp: article.timestamp + Duration::seconds(lag),
                    ..article.clone()
                };
                duplicates.push((copy.article_id.clone(), article.article_id.clone()));
                emit(copy, &mut scores)?;
            }
            emit(article, &mut scores)?;
        }
    }
    articles.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.article_id.cmp(&b.article_id)));

    Ok(SyntheticDataset {
        articles,
        bars,
        scores,
        lexicon_positive: POSITIVE_WORDS.to_vec(),
        lexicon_negative: NEGATIVE_WORDS.to_vec(),
        duplicates,
        firm_effects,
        date_effects,
        tickers,
        calendar,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

impl SyntheticDataset {
    /// Writes news.jsonl, bars.csv, scores.csv, lexicon.csv, duplicates.csv
    /// and a run.conf pointing at them.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |e| Error::io(p, e)
        };

        let path = dir.join("news.jsonl");
        let mut f = create(&path)?;
        write_news_jsonl(&mut f, &self.articles).map_err(io(&path))?;
        f.flush().map_err(io(&path))?;

        write_bars_csv(create(&dir.join("bars.csv"))?, &self.bars)?;
        write_scores_csv(create(&dir.join("scores.csv"))?, &self.scores)?;

        let path = dir.join("lexicon.csv");
        let mut f = create(&path)?;
        let mut rows: Vec<(&str, u32, u32)> = self
            .lexicon_positive
            .iter()
            .map(|w| (*w, 2009, 0))
            .chain(self.lexicon_negative.iter().map(|w| (*w, 0, 2009)))
            .chain(NEUTRAL_LEXICON_ROWS.iter().map(|w| (*w, 0, 0)))
            .collect();
        rows.sort();
        writeln!(f, "Word,Positive,Negative,Uncertainty").map_err(io(&path))?;
        for (w, p, n) in rows {
            writeln!(f, "{},{p},{n},0", w.to_uppercase()).map_err(io(&path))?;
        }
        f.flush().map_err(io(&path))?;

        let path = dir.join("duplicates.csv");
        let mut f = create(&path)?;
        writeln!(f, "article_id,original_id").map_err(io(&path))?;
        for (c, o) in &self.duplicates {
            writeln!(f, "{c},{o}").map_err(io(&path))?;
        }
        f.flush().map_err(io(&path))?;

        let path = dir.join("run.conf");
        std::fs::write(
            &path,
            "# Synthetic dataset; paths are relative to this file.\n\
             news = news.jsonl\n\
             bars = bars.csv\n\
             scores = scores.csv\n\
             lexicon = lexicon.csv\n\
             output_dir = out\n",
        )
        .map_err(io(&path))?;
        Ok(())
    }
}
