//! K-nearest neighbours and a linear soft-margin SVM over feature vectors.

mod knn;
mod svm;

pub use knn::{euclidean, knn_predict, knn_sweep, KSweep, KnnModel};
pub use svm::{svm_predict, svm_train, SvmModel, SvmTrainMeta};

use crate::types::Label;

/// Uniform output of every classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Confidence in `label`, in `[0.5, 1]` for SVM and `[0, 1]` for vote fractions.
    pub confidence: f64,
    /// KNN vote fraction for the winner, SVM margin, encoder probability.
    pub raw_score: f64,
    /// Set when a cascade deferred this sample to its second stage.
    pub routed_to_second: bool,
}

impl Prediction {
    pub fn new(label: Label, confidence: f64, raw_score: f64) -> Self {
        Prediction {
            label,
            confidence,
            raw_score,
            routed_to_second: false,
        }
    }

    /// Probability that the sample is a character, for ranking and reports.
    pub fn character_score(&self) -> f64 {
        match self.label {
            Label::Character => self.confidence,
            Label::Reject => 1.0 - self.confidence,
        }
    }
}

/// Rounds to the nearest `f32`, so parameters survive 32-bit serialization unchanged.
pub(crate) fn to_f32_precision(x: f64) -> f64 {
    x as f32 as f64
}
