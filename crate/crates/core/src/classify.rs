//! Train/validation/test split, score thresholding and the classification
//! metric suite.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Uniform random assignment over ids.
    #[default]
    Random,
    /// Ids taken in the order supplied (assumed chronological): last block is
    /// test, the block before it validation.
    TimeOrdered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitProportions {
    pub test: f64,
    /// Fraction of the post-test remainder held out for validation.
    pub validation: f64,
}

impl Default for SplitProportions {
    fn default() -> Self {
        SplitProportions {
            test: 0.2,
            validation: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_ids: BTreeSet<String>,
    pub validation_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub seed: u64,
}

/// (train, validation, test) sizes by the floor rule.
pub fn split_sizes(n: usize, proportions: SplitProportions) -> (usize, usize, usize) {
    let test = (proportions.test * n as f64).floor() as usize;
    let validation = (proportions.validation * (n - test) as f64).floor() as usize;
    (n - test - validation, validation, test)
}

pub fn split_dataset(
    ids: &[String],
    seed: u64,
    proportions: SplitProportions,
    mode: SplitMode,
) -> Result<DatasetSplit> {
    if ids.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "need at least 5 ids to split, got {}",
            ids.len()
        )));
    }
    let ok = |f: f64| (0.0..1.0).contains(&f);
    if !ok(proportions.test) || !ok(proportions.validation) {
        return Err(Error::InvalidInput("split proportions must lie in [0, 1)".into()));
    }
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::InvalidInput("split ids must be unique".into()));
    }

    let ordered: Vec<String> = match mode {
        SplitMode::Random => {
            // Sorting first makes the split independent of input order.
            let mut v: Vec<String> = unique.into_iter().cloned().collect();
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            v
        }
        SplitMode::TimeOrdered => ids.to_vec(),
    };
    let (train, validation, _) = split_sizes(ordered.len(), proportions);
    let mut it = ordered.into_iter();
    Ok(DatasetSplit {
        train_ids: it.by_ref().take(train).collect(),
        validation_ids: it.by_ref().take(validation).collect(),
        test_ids: it.collect(),
        seed,
    })
}

/// Positive prediction iff the score is strictly above the threshold.
pub fn classify_score(score: f64, threshold: f64) -> u8 {
    u8::from(score > threshold)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Same outcomes with the positive and negative classes swapped.
    pub fn transpose(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            (0, 1) => cm.fn_ += 1,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "binary values expected, got prediction {p} label {l}"
                )))
            }
        }
    }
    Ok(cm)
}

/// A ratio that is undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSuite {
    pub accuracy: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub specificity: Metric,
    pub f1: Metric,
}

pub fn metric_suite(cm: &ConfusionMatrix) -> Result<MetricSuite> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    let precision = Metric::ratio(cm.tp, cm.tp + cm.fp);
    let recall = Metric::ratio(cm.tp, cm.tp + cm.fn_);
    // Harmonic mean of precision and recall, reduced to counts: 2tp / (2tp + fp + fn).
    let f1 = match (precision, recall) {
        (Metric::Value(_), Metric::Value(_)) if cm.tp > 0 => Metric::ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
        _ => Metric::Undefined,
    };
    Ok(MetricSuite {
        accuracy: Metric::ratio(cm.tp + cm.tn, total),
        precision,
        recall,
        specificity: Metric::ratio(cm.tn, cm.tn + cm.fp),
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i:04}")).collect()
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let s = split_dataset(&ids(100), 7, SplitProportions::default(), SplitMode::Random).unwrap();
        assert_eq!((s.train_ids.len(), s.validation_ids.len(), s.test_ids.len()), (64, 16, 20));
        let s = split_dataset(&ids(5), 7, SplitProportions::default(), SplitMode::Random).unwrap();
        assert_eq!((s.train_ids.len(), s.validation_ids.len(), s.test_ids.len()), (4, 0, 1));
        assert!(split_dataset(&ids(4), 7, SplitProportions::default(), SplitMode::Random).is_err());
    }

    #[test]
    fn split_is_deterministic_and_order_free() {
        let a = split_dataset(&ids(50), 11, SplitProportions::default(), SplitMode::Random).unwrap();
        let mut rev = ids(50);
        rev.reverse();
        let b = split_dataset(&rev, 11, SplitProportions::default(), SplitMode::Random).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&ids(50), 12, SplitProportions::default(), SplitMode::Random).unwrap();
        assert_ne!(a.test_ids, c.test_ids);
    }

    #[test]
    fn time_ordered_split_takes_tail_as_test() {
        let s = split_dataset(&ids(10), 0, SplitProportions::default(), SplitMode::TimeOrdered).unwrap();
        assert_eq!(s.test_ids, ["id0008", "id0009"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn thresholding() {
        assert_eq!(classify_score(0.93, 0.5), 1);
        assert_eq!(classify_score(0.5, 0.5), 0);
        assert_eq!(classify_score(0.2, 0.5), 0);
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[1, 0], &[1, 0]).unwrap(), ConfusionMatrix::new(1, 0, 1, 0));
        assert_eq!(confusion(&[1, 1], &[0, 0]).unwrap(), ConfusionMatrix::new(0, 2, 0, 0));
        let cm = confusion(&[1, 0, 1, 0, 0, 1, 1, 1, 0, 0], &[1, 0, 0, 1, 0, 1, 1, 0, 1, 0]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(3, 2, 3, 2));
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[2], &[1]).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = metric_suite(&ConfusionMatrix::new(3, 1, 4, 2)).unwrap();
        assert_eq!(m.accuracy, Metric::Value(0.7));
        assert_eq!(m.precision, Metric::Value(0.75));
        assert_eq!(m.recall, Metric::Value(0.6));
        assert_eq!(m.specificity, Metric::Value(0.8));
        assert_eq!(m.f1, Metric::Value(2.0 / 3.0));

        let m = metric_suite(&ConfusionMatrix::new(0, 0, 5, 0)).unwrap();
        assert_eq!(m.precision, Metric::Undefined);
        assert_eq!(m.recall, Metric::Undefined);
        assert_eq!(m.f1, Metric::Undefined);
        assert_eq!(m.specificity, Metric::Value(1.0));

        assert!(metric_suite(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn undefined_serializes_as_marker() {
        let json = serde_json::to_string(&metric_suite(&ConfusionMatrix::new(0, 0, 1, 0)).unwrap()).unwrap();
        assert_eq!(
            json,
            r#"{"accuracy":1.0,"precision":"undefined","recall":"undefined","specificity":1.0,"f1":"undefined"}"#
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn metric_identities(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
                let cm = ConfusionMatrix::new(tp, fp, tn, fn_);
                prop_assume!(cm.total() > 0);
                let m = metric_suite(&cm).unwrap();
                for v in [m.accuracy, m.precision, m.recall, m.specificity, m.f1] {
                    if let Metric::Value(x) = v {
                        prop_assert!((0.0..=1.0).contains(&x));
                    }
                }
                if let (Some(p), Some(r), Some(f)) = (m.precision.value(), m.recall.value(), m.f1.value()) {
                    prop_assert!(p.min(r) - 1e-15 <= f && f <= p.max(r) + 1e-15);
                    prop_assert!((f - 2.0 * p * r / (p + r)).abs() <= 1e-15);
                }
                let pos = (tp + fn_) as f64;
                let neg = (tn + fp) as f64;
                let rec = m.recall.value().unwrap_or(0.0);
                let spec = m.specificity.value().unwrap_or(0.0);
                let acc = m.accuracy.value().unwrap();
                prop_assert!(((rec * pos + spec * neg) / (pos + neg) - acc).abs() < 1e-12);
                prop_assert_eq!(metric_suite(&cm.transpose()).unwrap().recall, m.specificity);
            }

            #[test]
            fn split_partitions(n in 5usize..300, seed in any::<u64>()) {
                let all = ids(n);
                let s = split_dataset(&all, seed, SplitProportions::default(), SplitMode::Random).unwrap();
                prop_assert!(s.train_ids.is_disjoint(&s.test_ids));
                prop_assert!(s.train_ids.is_disjoint(&s.validation_ids));
                prop_assert!(s.validation_ids.is_disjoint(&s.test_ids));
                prop_assert_eq!(s.train_ids.len() + s.validation_ids.len() + s.test_ids.len(), n);
                prop_assert!((s.test_ids.len() as f64 - 0.2 * n as f64).abs() <= 1.0);
                prop_assert!((s.validation_ids.len() as f64 - 0.16 * n as f64).abs() <= 1.0);
            }
        }
    }
}
