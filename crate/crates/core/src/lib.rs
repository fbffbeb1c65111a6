//! Character spotting for degraded document images.
//!
//! Pages are binarized, split into whitespace-bound candidate regions and cut
//! into fixed 48×32 kernels. Each kernel is classified as a complete character
//! or a reject by KNN or a linear SVM over HOG+PCA features, by a strided
//! convolutional encoder, or by a two-stage cascade of those models.

pub mod classifiers;
pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod raster;
pub mod segmentation;
pub mod service;
mod types;

pub use error::{Error, Result};
pub use types::{BoundingBox, Label};
