//! Dictionary sentiment scores and ingestion of externally computed model
//! scores.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model tag used for scores produced by [`lexicon_score`].
pub const LEXICON_MODEL: &str = "lexicon";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentimentLexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
}

impl SentimentLexicon {
    pub fn new<P, N>(positive: P, negative: N) -> Result<Self>
    where
        P: IntoIterator,
        P::Item: AsRef<str>,
        N: IntoIterator,
        N::Item: AsRef<str>,
    {
        let positive: BTreeSet<String> = positive
            .into_iter()
            .map(|t| t.as_ref().to_lowercase())
            .collect();
        let negative: BTreeSet<String> = negative
            .into_iter()
            .map(|t| t.as_ref().to_lowercase())
            .collect();
        if let Some(term) = positive.intersection(&negative).next() {
            return Err(Error::LexiconConflict(term.clone()));
        }
        Ok(SentimentLexicon { positive, negative })
    }

    pub fn is_positive(&self, term: &str) -> bool {
        self.positive.contains(term)
    }

    pub fn is_negative(&self, term: &str) -> bool {
        self.negative.contains(term)
    }

    pub fn positive_terms(&self) -> &BTreeSet<String> {
        &self.positive
    }

    pub fn negative_terms(&self) -> &BTreeSet<String> {
        &self.negative
    }
}

fn flag_set(raw: &str, path: &Path, row: usize) -> Result<bool> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(false);
    }
    raw.parse::<f64>().map(|v| v > 0.0).map_err(|_| {
        Error::format(
            format!("{} row {}", path.display(), row),
            format!("non-numeric sentiment flag {raw:?}"),
        )
    })
}

/// Loads a master-dictionary style CSV with `Word`, `Positive` and `Negative`
/// columns (case-insensitive headers, extra columns ignored). A word belongs
/// to a list when its column holds a number greater than zero.
pub fn load_lexicon(path: &Path) -> Result<SentimentLexicon> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path.display().to_string(), format!("{other:?}")),
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::format(path.display().to_string(), format!("missing column {name}"))
            })
    };
    let (word_col, pos_col, neg_col) = (column("word")?, column("positive")?, column("negative")?);

    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::format(format!("{} row {row}", path.display()), e.to_string()))?;
        let field = |c: usize| {
            rec.get(c).ok_or_else(|| {
                Error::format(format!("{} row {row}", path.display()), "short row")
            })
        };
        let word = field(word_col)?.trim().to_lowercase();
        if word.is_empty() {
            continue;
        }
        if flag_set(field(pos_col)?, path, row)? {
            positive.push(word.clone());
        }
        if flag_set(field(neg_col)?, path, row)? {
            negative.push(word);
        }
    }
    SentimentLexicon::new(positive, negative)
}

/// `p / (p + n)` over lexicon hits, 0.5 when there are none.
pub fn lexicon_score<S: AsRef<str>>(tokens: &[S], lexicon: &SentimentLexicon) -> f64 {
    let (mut p, mut n) = (0usize, 0usize);
    for t in tokens {
        let t = t.as_ref();
        if lexicon.is_positive(t) {
            p += 1;
        } else if lexicon.is_negative(t) {
            n += 1;
        }
    }
    if p + n == 0 {
        0.5
    } else {
        p as f64 / (p + n) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub article_id: String,
    pub model_name: String,
    pub score: f64,
}

/// Scores keyed by model, then article.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    by_model: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ScoreTable {
    /// Inserts a validated score; returns false if the key already existed.
    pub fn insert(&mut self, record: ScoreRecord) -> Result<bool> {
        if !(0.0..=1.0).contains(&record.score) {
            return Err(Error::ScoreRange {
                row: 0,
                value: record.score.to_string(),
            });
        }
        Ok(self
            .by_model
            .entry(record.model_name)
            .or_default()
            .insert(record.article_id, record.score)
            .is_none())
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.by_model.keys().map(String::as_str)
    }

    pub fn model(&self, name: &str) -> Option<&BTreeMap<String, f64>> {
        self.by_model.get(name)
    }

    pub fn get(&self, article_id: &str, model: &str) -> Option<f64> {
        self.by_model.get(model)?.get(article_id).copied()
    }

    pub fn len(&self) -> usize {
        self.by_model.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records in canonical order: article_id, then model_name.
    pub fn records(&self) -> Vec<ScoreRecord> {
        let mut out: Vec<ScoreRecord> = self
            .by_model
            .iter()
            .flat_map(|(m, scores)| {
                scores.iter().map(move |(a, &s)| ScoreRecord {
                    article_id: a.clone(),
                    model_name: m.clone(),
                    score: s,
                })
            })
            .collect();
        out.sort_by(|a, b| {
            a.article_id
                .cmp(&b.article_id)
                .then_with(|| a.model_name.cmp(&b.model_name))
        });
        out
    }

    pub fn retain_articles(&mut self, keep: &HashSet<String>) {
        for scores in self.by_model.values_mut() {
            scores.retain(|a, _| keep.contains(a));
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    pub table: ScoreTable,
    /// Article ids absent from the known set, in file order.
    pub unknown_articles: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawScoreRow {
    article_id: String,
    model_name: String,
    score: String,
}

/// Reads `article_id,model_name,score` rows. Row numbers in errors are file
/// line numbers (header = 1).
pub fn ingest_external_scores(path: &Path, known: Option<&HashSet<String>>) -> Result<ExternalScores> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path.display().to_string(), format!("{other:?}")),
    })?;
    let mut out = ExternalScores::default();
    for (i, row) in rdr.deserialize::<RawScoreRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::format(format!("{} row {line}", path.display()), e.to_string()))?;
        let score: f64 = row.score.trim().parse().map_err(|_| Error::ScoreRange {
            row: line,
            value: row.score.clone(),
        })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreRange {
                row: line,
                value: row.score,
            });
        }
        if let Some(known) = known {
            if !known.contains(&row.article_id) {
                out.unknown_articles.push(row.article_id.clone());
            }
        }
        let fresh = out.table.insert(ScoreRecord {
            article_id: row.article_id.clone(),
            model_name: row.model_name.clone(),
            score,
        })?;
        if !fresh {
            return Err(Error::DuplicateScore {
                row: line,
                article_id: row.article_id,
                model_name: row.model_name,
            });
        }
    }
    Ok(out)
}

pub fn write_scores_csv<W: std::io::Write>(out: W, table: &ScoreTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["article_id", "model_name", "score"])
        .map_err(|e| Error::format("scores output", e.to_string()))?;
    for r in table.records() {
        w.write_record([r.article_id.as_str(), r.model_name.as_str(), &r.score.to_string()])
            .map_err(|e| Error::format("scores output", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("scores output", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        path
    }

    #[test]
    fn lexicon_membership_rule() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(
            &dir,
            "lm.csv",
            "Word,Seq_num,Positive,Negative,Uncertainty\nACHIEVE,1,2009,0,0\nABANDON,2,0,2009,0\nTABLE,3,0,0,0\nREMOVED,4,-2020,0,0\n",
        );
        let lex = load_lexicon(&path).unwrap();
        assert!(lex.is_positive("achieve"));
        assert!(lex.is_negative("abandon"));
        assert!(!lex.is_positive("table") && !lex.is_negative("table"));
        assert!(!lex.is_positive("removed"));
    }

    #[test]
    fn lexicon_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(&dir, "bad.csv", "Word,Positive\nGOOD,2009\n");
        assert!(matches!(load_lexicon(&path), Err(Error::Format { .. })));
        let path = write_tmp(&dir, "conflict.csv", "Word,Positive,Negative\nODD,2009,2009\n");
        assert!(matches!(load_lexicon(&path), Err(Error::LexiconConflict(t)) if t == "odd"));
        let path = write_tmp(&dir, "nan.csv", "Word,Positive,Negative\nODD,yes,0\n");
        assert!(load_lexicon(&path).is_err());
        assert!(matches!(
            load_lexicon(&dir.path().join("absent.csv")),
            Err(Error::Io { .. })
        ));
    }

    fn lex() -> SentimentLexicon {
        SentimentLexicon::new(["gain", "strong"], ["loss", "weak"]).unwrap()
    }

    #[test]
    fn lexicon_score_examples() {
        let l = lex();
        let s = lexicon_score(&tokenize("Strong gain despite a loss"), &l);
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(lexicon_score(&tokenize("nothing to see"), &l), 0.5);
        assert_eq!(lexicon_score(&tokenize("weak quarter, loss widened"), &l), 0.0);
        assert_eq!(lexicon_score(&tokenize("gain gain"), &l), 1.0);
    }

    #[test]
    fn external_scores() {
        let dir = tempfile::tempdir().unwrap();
        let known: HashSet<String> = ["a1".to_string()].into();
        let ok = write_tmp(&dir, "ok.csv", "article_id,model_name,score\na1,OPT,0.93\na9,OPT,0.1\n");
        let got = ingest_external_scores(&ok, Some(&known)).unwrap();
        assert_eq!(got.table.get("a1", "OPT"), Some(0.93));
        assert_eq!(got.unknown_articles, vec!["a9".to_string()]);

        let bad = write_tmp(&dir, "bad.csv", "article_id,model_name,score\na1,OPT,0.5\na2,BERT,1.7\n");
        assert!(matches!(
            ingest_external_scores(&bad, None),
            Err(Error::ScoreRange { row: 3, .. })
        ));

        let dup = write_tmp(&dir, "dup.csv", "article_id,model_name,score\na1,OPT,0.5\na1,OPT,0.6\n");
        assert!(matches!(
            ingest_external_scores(&dup, None),
            Err(Error::DuplicateScore { row: 3, .. })
        ));

        let nan = write_tmp(&dir, "nan.csv", "article_id,model_name,score\na1,OPT,NaN\n");
        assert!(matches!(ingest_external_scores(&nan, None), Err(Error::ScoreRange { .. })));
    }

    #[test]
    fn canonical_output_order() {
        let mut t = ScoreTable::default();
        for (a, m) in [("b", "OPT"), ("a", "OPT"), ("a", "BERT")] {
            t.insert(ScoreRecord {
                article_id: a.into(),
                model_name: m.into(),
                score: 0.5,
            })
            .unwrap();
        }
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &t).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "article_id,model_name,score\na,BERT,0.5\na,OPT,0.5\nb,OPT,0.5\n"
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn token() -> impl Strategy<Value = String> {
            prop::sample::select(vec!["gain", "strong", "loss", "weak", "the", "firm", "said"])
                .prop_map(str::to_string)
        }

        proptest! {
            #[test]
            fn score_properties(mut tokens in prop::collection::vec(token(), 0..40), seed in any::<u64>()) {
                let l = lex();
                let s = lexicon_score(&tokens, &l);
                prop_assert!((0.0..=1.0).contains(&s));

                let p = tokens.iter().filter(|t| l.is_positive(t)).count();
                let n = tokens.iter().filter(|t| l.is_negative(t)).count();
                prop_assert_eq!(s == 1.0, n == 0 && p > 0);
                prop_assert_eq!(s == 0.0, p == 0 && n > 0);
                if p == n {
                    prop_assert_eq!(s, 0.5);
                }

                let doubled: Vec<String> = tokens.iter().chain(tokens.iter()).cloned().collect();
                prop_assert_eq!(lexicon_score(&doubled, &l), s);

                let mut noisy = tokens.clone();
                noisy.push("unrelated".into());
                prop_assert_eq!(lexicon_score(&noisy, &l), s);

                let k = tokens.len().max(1);
                tokens.rotate_left((seed as usize) % k);
                prop_assert_eq!(lexicon_score(&tokens, &l), s);
            }
        }
    }
}
