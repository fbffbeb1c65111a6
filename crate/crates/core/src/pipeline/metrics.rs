use serde::{Deserialize, Serialize};

use super::model::ClassifierModel;
use crate::classifiers::Prediction;
use crate::error::{Error, Result};
use crate::segmentation::Kernel;
use crate::types::Label;

/// Confusion counts with character as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision,
            recall,
            f1,
            confusion: c,
        }
    }

    pub fn from_labels(predicted: &[Label], truth: &[Label]) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (Label::Character, Label::Character) => c.tp += 1,
                (Label::Character, Label::Reject) => c.fp += 1,
                (Label::Reject, Label::Reject) => c.tn += 1,
                (Label::Reject, Label::Character) => c.fn_ += 1,
            }
        }
        Self::from_confusion(c)
    }
}

/// Predictions for every kernel; fails on the first unlabeled one.
pub fn predict_all(model: &ClassifierModel, kernels: &[Kernel]) -> Result<(Vec<Prediction>, Vec<Label>)> {
    let truth: Vec<Label> = kernels
        .iter()
        .map(|k| k.label.ok_or(Error::UnlabeledData))
        .collect::<Result<_>>()?;
    Ok((model.predict_batch(kernels)?, truth))
}

pub fn evaluate(model: &ClassifierModel, kernels: &[Kernel]) -> Result<Metrics> {
    let (preds, truth) = predict_all(model, kernels)?;
    let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
    Ok(Metrics::from_labels(&labels, &truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let t = [Label::Character, Label::Reject, Label::Character];
        let m = Metrics::from_labels(&t, &t);
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
    }

    #[test]
    fn formula_arithmetic() {
        let m = Metrics::from_confusion(Confusion {
            tp: 2,
            fp: 1,
            tn: 6,
            fn_: 1,
        });
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 0.6667).abs() < 1e-4);
        assert!((m.accuracy - 0.8).abs() < 1e-12);
    }

    #[test]
    fn no_positive_predictions_gives_zero_f1() {
        let m = Metrics::from_labels(&[Label::Reject, Label::Reject], &[Label::Character, Label::Reject]);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn json_uses_fn_key() {
        let json = serde_json::to_string(&Confusion {
            tp: 1,
            fp: 2,
            tn: 3,
            fn_: 4,
        })
        .unwrap();
        assert_eq!(json, r#"{"tp":1,"fp":2,"tn":3,"fn":4}"#);
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..50), rot in 0usize..50) {
            let to = |b: bool| if b { Label::Character } else { Label::Reject };
            let p: Vec<Label> = pairs.iter().map(|x| to(x.0)).collect();
            let t: Vec<Label> = pairs.iter().map(|x| to(x.1)).collect();
            let m = Metrics::from_labels(&p, &t);
            let r = rot % pairs.len();
            let (mut p2, mut t2) = (p.clone(), t.clone());
            p2.rotate_left(r);
            t2.rotate_left(r);
            prop_assert_eq!(m, Metrics::from_labels(&p2, &t2));
            prop_assert_eq!(m.confusion.total(), pairs.len());
        }
    }
}
