use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::model::ClassifierModel;
use crate::classifiers::Prediction;
use crate::error::{Error, Result};
use crate::segmentation::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CascadeMode {
    /// Defer to the second model when the first is not confident enough.
    #[default]
    Confidence,
    /// Defer exactly the samples the first model gets wrong. Needs ground truth,
    /// so it only exists for evaluation.
    Oracle,
}

/// Two models where the second re-examines what the first handles poorly.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub first: ClassifierModel,
    pub second: ClassifierModel,
    pub mode: CascadeMode,
    pub threshold: f64,
}

impl CascadeModel {
    pub const DEFAULT_THRESHOLD: f64 = 0.8;

    pub fn new(first: ClassifierModel, second: ClassifierModel, mode: CascadeMode, threshold: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("cascade threshold {threshold} outside [0.5, 1]")));
        }
        if first == second {
            return Err(Error::Config("cascade stages must be different models".into()));
        }
        Ok(CascadeModel {
            first,
            second,
            mode,
            threshold,
        })
    }
}

pub fn cascade_predict(c: &CascadeModel, kernel: &Kernel) -> Result<Prediction> {
    if c.mode == CascadeMode::Oracle {
        return Err(Error::Config(
            "an oracle cascade routes by ground truth and cannot predict".into(),
        ));
    }
    let p1 = c.first.predict(kernel)?;
    if p1.confidence >= c.threshold {
        return Ok(p1);
    }
    let mut p2 = c.second.predict(kernel)?;
    p2.routed_to_second = true;
    Ok(p2)
}

/// Per-sample outcome of an oracle evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeOutcome {
    pub first_correct: bool,
    /// `None` when the first model was already right and the second never ran.
    pub second_correct: Option<bool>,
}

/// A sample counts as correct when the first model is right, or when it is
/// wrong and the second model is right. Routing uses the labels.
pub fn cascade_evaluate_oracle(
    first: &ClassifierModel,
    second: &ClassifierModel,
    kernels: &[Kernel],
) -> Result<(Metrics, Vec<CascadeOutcome>)> {
    let truths: Vec<_> = kernels
        .iter()
        .map(|k| k.label.ok_or(Error::UnlabeledData))
        .collect::<Result<_>>()?;
    let firsts = first.predict_batch(kernels)?;
    let mut predicted = Vec::with_capacity(kernels.len());
    let mut outcomes = Vec::with_capacity(kernels.len());
    for ((k, p1), &truth) in kernels.iter().zip(&firsts).zip(&truths) {
        if p1.label == truth {
            predicted.push(p1.label);
            outcomes.push(CascadeOutcome {
                first_correct: true,
                second_correct: None,
            });
        } else {
            let p2 = second.predict(k)?;
            predicted.push(p2.label);
            outcomes.push(CascadeOutcome {
                first_correct: false,
                second_correct: Some(p2.label == truth),
            });
        }
    }
    Ok((Metrics::from_labels(&predicted, &truths), outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::KnnModel;
    use crate::features::{HogParams, PcaModel};
    use crate::pipeline::FeatureSpec;
    use crate::raster::GrayImage;
    use crate::types::{BoundingBox, Label};

    /// One-feature KNN projecting HOG onto its mean, so flat kernels map to 0.
    fn stub(points: Vec<f64>, labels: Vec<Label>, k: usize) -> ClassifierModel {
        let dim = HogParams::default().descriptor_len(32, 48).unwrap();
        let pca = PcaModel {
            mean: vec![0.0; dim],
            components: vec![vec![1.0 / dim as f64; dim]],
            eigenvalues: vec![1.0],
            total_variance: 1.0,
        };
        ClassifierModel::Knn {
            features: FeatureSpec {
                hog: HogParams::default(),
                pca,
            },
            model: KnnModel::new(points.into_iter().map(|p| vec![p]).collect(), labels, k).unwrap(),
        }
    }

    fn kernel(label: Label) -> Kernel {
        Kernel::from_image(GrayImage::filled(32, 48, 0.9), BoundingBox::new(0, 0, 32, 48), "p")
            .unwrap()
            .with_label(Some(label))
    }

    #[test]
    fn confident_first_stage_short_circuits() {
        let first = stub(vec![0.0], vec![Label::Character], 1);
        let second = stub(vec![0.0], vec![Label::Reject], 1);
        let c = CascadeModel::new(first, second, CascadeMode::Confidence, 0.9).unwrap();
        let p = cascade_predict(&c, &kernel(Label::Character)).unwrap();
        assert_eq!(p.label, Label::Character);
        assert!(!p.routed_to_second);
    }

    #[test]
    fn low_confidence_routes_to_second() {
        // k = 3 over two characters and one reject: confidence 2/3
        let first = stub(
            vec![0.0, 0.0, 0.0],
            vec![Label::Character, Label::Character, Label::Reject],
            3,
        );
        let second = stub(vec![0.0], vec![Label::Reject], 1);
        let c = CascadeModel::new(first.clone(), second, CascadeMode::Confidence, 0.8).unwrap();
        let p = cascade_predict(&c, &kernel(Label::Character)).unwrap();
        assert!(p.routed_to_second);
        assert_eq!(p.label, Label::Reject);

        let c = CascadeModel::new(first.clone(), c.second, CascadeMode::Confidence, 0.5).unwrap();
        assert_eq!(
            cascade_predict(&c, &kernel(Label::Character)).unwrap(),
            first.predict(&kernel(Label::Character)).unwrap()
        );
    }

    #[test]
    fn invalid_construction() {
        let a = stub(vec![0.0], vec![Label::Character], 1);
        let b = stub(vec![0.0], vec![Label::Reject], 1);
        assert!(CascadeModel::new(a.clone(), b.clone(), CascadeMode::Confidence, 0.4).is_err());
        assert!(CascadeModel::new(a.clone(), a.clone(), CascadeMode::Confidence, 0.8).is_err());
        let oracle = CascadeModel::new(a, b, CascadeMode::Oracle, 0.8).unwrap();
        assert!(cascade_predict(&oracle, &kernel(Label::Character)).is_err());
    }

    #[test]
    fn oracle_counts_second_chances() {
        let always_char = stub(vec![0.0], vec![Label::Character], 1);
        let always_reject = stub(vec![0.0], vec![Label::Reject], 1);
        let mut set: Vec<Kernel> = (0..60).map(|_| kernel(Label::Character)).collect();
        set.extend((0..40).map(|_| kernel(Label::Reject)));
        let (m, outcomes) = cascade_evaluate_oracle(&always_char, &always_reject, &set).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(outcomes.iter().filter(|o| o.second_correct.is_some()).count(), 40);

        let (m, _) = cascade_evaluate_oracle(&always_char, &always_char, &set).unwrap();
        assert!((m.accuracy - 0.6).abs() < 1e-12);
    }

    #[test]
    fn oracle_needs_labels() {
        let a = stub(vec![0.0], vec![Label::Character], 1);
        let set = vec![kernel(Label::Character).with_label(None)];
        assert!(matches!(
            cascade_evaluate_oracle(&a, &a, &set),
            Err(Error::UnlabeledData)
        ));
    }
}
