//! HOG descriptors with L2-hys block normalization and PCA reduction.

mod hog;
mod jacobi;
mod pca;

pub use hog::{hog, hog_image, l2hys, HogParams};
pub use jacobi::{symmetric_eigen, SymmetricEigen};
pub use pca::{pca_fit, pca_transform, Components, PcaModel};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Hog,
    Pca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
