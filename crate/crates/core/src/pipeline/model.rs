use serde::{Deserialize, Serialize};

use super::cascade::CascadeModel;
use crate::classifiers::{svm_train, to_f32_precision, KnnModel, Prediction, SvmModel};
use crate::encoder::{train_encoder, EncoderHyper, EncoderModel, TrainingLog};
use crate::error::{Error, Result};
use crate::features::{hog, pca_fit, Components, HogParams, PcaModel};
use crate::segmentation::{Kernel, KERNEL_HEIGHT, KERNEL_WIDTH};
use crate::types::Label;

/// HOG descriptor followed by a fitted PCA projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub hog: HogParams,
    pub pca: PcaModel,
}

impl FeatureSpec {
    pub fn featurize(&self, kernel: &Kernel) -> Result<Vec<f64>> {
        self.pca.transform(&hog(kernel, &self.hog)?.values)
    }

    fn validate(&self, classifier_dim: usize) -> Result<()> {
        let hog_len = self.hog.descriptor_len(KERNEL_WIDTH, KERNEL_HEIGHT)?;
        if self.pca.input_dim() != hog_len {
            return Err(Error::ModelFeatureMismatch(format!(
                "PCA expects {} inputs, HOG produces {hog_len}",
                self.pca.input_dim()
            )));
        }
        if self.pca.k() != classifier_dim {
            return Err(Error::ModelFeatureMismatch(format!(
                "classifier expects {classifier_dim} features, PCA produces {}",
                self.pca.k()
            )));
        }
        Ok(())
    }
}

/// Any trained kernel classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    Knn { features: FeatureSpec, model: KnnModel },
    Svm { features: FeatureSpec, model: SvmModel },
    Encoder(EncoderModel),
    Cascade(Box<CascadeModel>),
}

impl ClassifierModel {
    pub fn kind(&self) -> &'static str {
        match self {
            ClassifierModel::Knn { .. } => "knn",
            ClassifierModel::Svm { .. } => "svm",
            ClassifierModel::Encoder(_) => "encoder",
            ClassifierModel::Cascade(_) => "cascade",
        }
    }

    /// Checks that bundled feature stages agree with the classifier's input width.
    pub fn validate(&self) -> Result<()> {
        match self {
            ClassifierModel::Knn { features, model } => features.validate(model.dim()),
            ClassifierModel::Svm { features, model } => features.validate(model.w.len()),
            ClassifierModel::Encoder(m) => {
                if (m.arch.input_height, m.arch.input_width) != (KERNEL_HEIGHT, KERNEL_WIDTH) {
                    return Err(Error::ModelFeatureMismatch(format!(
                        "encoder input is {}x{}, kernels are {KERNEL_HEIGHT}x{KERNEL_WIDTH}",
                        m.arch.input_height, m.arch.input_width
                    )));
                }
                Ok(())
            }
            ClassifierModel::Cascade(c) => {
                c.first.validate()?;
                c.second.validate()
            }
        }
    }

    pub fn predict(&self, kernel: &Kernel) -> Result<Prediction> {
        match self {
            ClassifierModel::Knn { features, model } => model.predict(&features.featurize(kernel)?),
            ClassifierModel::Svm { features, model } => model.predict(&features.featurize(kernel)?),
            ClassifierModel::Encoder(m) => m.predict(kernel),
            ClassifierModel::Cascade(c) => super::cascade::cascade_predict(c, kernel),
        }
    }

    /// Same results as calling [`ClassifierModel::predict`] per kernel.
    pub fn predict_batch(&self, kernels: &[Kernel]) -> Result<Vec<Prediction>> {
        match self {
            ClassifierModel::Encoder(m) => {
                let mut out = Vec::with_capacity(kernels.len());
                for chunk in kernels.chunks(256) {
                    out.extend(m.predict_batch(chunk)?);
                }
                Ok(out)
            }
            _ => kernels.iter().map(|k| self.predict(k)).collect(),
        }
    }
}

fn labeled(kernels: &[Kernel]) -> Result<Vec<Label>> {
    kernels.iter().map(|k| k.label.ok_or(Error::UnlabeledData)).collect()
}

fn fit_features(
    kernels: &[Kernel],
    hog_params: HogParams,
    components: Components,
) -> Result<(FeatureSpec, Vec<Vec<f64>>)> {
    let descriptors: Vec<Vec<f64>> = kernels
        .iter()
        .map(|k| hog(k, &hog_params).map(|f| f.values))
        .collect::<Result<_>>()?;
    let pca = pca_fit(&descriptors, components)?;
    let projected = descriptors.iter().map(|d| pca.transform(d)).collect::<Result<_>>()?;
    Ok((FeatureSpec { hog: hog_params, pca }, projected))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    pub hog: HogParams,
    pub pca: Components,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 3,
            hog: HogParams::default(),
            pca: Components::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub hog: HogParams,
    pub pca: Components,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 50,
            seed: 7,
            hog: HogParams::default(),
            pca: Components::default(),
        }
    }
}

/// Fits HOG+PCA on the kernels and stores the projected points.
pub fn train_knn(kernels: &[Kernel], cfg: &KnnConfig) -> Result<ClassifierModel> {
    let labels = labeled(kernels)?;
    let (features, projected) = fit_features(kernels, cfg.hog, cfg.pca)?;
    let points = projected
        .into_iter()
        .map(|p| p.into_iter().map(to_f32_precision).collect())
        .collect();
    Ok(ClassifierModel::Knn {
        features,
        model: KnnModel::new(points, labels, cfg.k)?,
    })
}

pub fn train_svm(kernels: &[Kernel], cfg: &SvmConfig) -> Result<ClassifierModel> {
    let labels = labeled(kernels)?;
    let (features, projected) = fit_features(kernels, cfg.hog, cfg.pca)?;
    Ok(ClassifierModel::Svm {
        features,
        model: svm_train(&projected, &labels, cfg.c, cfg.epochs, cfg.seed)?,
    })
}

pub fn train_encoder_model(kernels: &[Kernel], hyper: &EncoderHyper) -> Result<(ClassifierModel, TrainingLog)> {
    let (model, log) = train_encoder(kernels, hyper)?;
    Ok((ClassifierModel::Encoder(model), log))
}
