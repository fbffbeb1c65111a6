//! Run configuration: a JSON file whose keys mirror the fields below. Every
//! key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Components, HogParams};
use crate::pipeline::SpotConfig;
use crate::raster::SynthConfig;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "GLYPHSPOT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    pub kernels_dir: PathBuf,
    pub labels_file: PathBuf,
    pub models_dir: PathBuf,
    pub seed: u64,
    pub synth: SynthConfig,
    pub spot: SpotConfig,
    pub hog: HogParams,
    /// Variance fraction kept by PCA; ignored when `pca_components` is set.
    pub pca_variance: f64,
    pub pca_components: Option<usize>,
    pub knn_k: usize,
    pub k_sweep: Vec<usize>,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub encoder_lr: f64,
    pub encoder_batch: usize,
    pub encoder_epochs: usize,
    pub cascade_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_dir: "corpus".into(),
            kernels_dir: "kernels".into(),
            labels_file: "labels.jsonl".into(),
            models_dir: "models".into(),
            seed: 7,
            synth: SynthConfig::default(),
            spot: SpotConfig::default(),
            hog: HogParams::default(),
            pca_variance: 0.95,
            pca_components: None,
            knn_k: 3,
            k_sweep: vec![1, 3, 5, 7, 9, 15, 25],
            svm_c: 1.0,
            svm_epochs: 50,
            encoder_lr: 1e-3,
            encoder_batch: 32,
            encoder_epochs: 30,
            cascade_threshold: 0.8,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Applies `GLYPHSPOT_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn components(&self) -> Components {
        match self.pca_components {
            Some(k) => Components::Count(k),
            None => Components::Variance(self.pca_variance),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return fail(format!("pca_variance {} outside (0, 1]", self.pca_variance));
        }
        if self.pca_components == Some(0) {
            return fail("pca_components must be positive".into());
        }
        if self.knn_k == 0 {
            return fail("knn_k must be positive".into());
        }
        if self.k_sweep.is_empty() || self.k_sweep.iter().any(|k| k % 2 == 0) {
            return fail("k_sweep must list odd values".into());
        }
        if self.svm_c.is_nan() || self.svm_c <= 0.0 || self.svm_epochs == 0 {
            return fail("svm_c must be positive and svm_epochs at least 1".into());
        }
        if self.encoder_lr.is_nan() || self.encoder_lr <= 0.0 || self.encoder_batch < 2 || self.encoder_epochs == 0 {
            return fail("encoder_lr must be positive, encoder_batch at least 2, encoder_epochs at least 1".into());
        }
        if !(0.5..=1.0).contains(&self.cascade_threshold) {
            return fail(format!("cascade_threshold {} outside [0.5, 1]", self.cascade_threshold));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_override() {
        let cfg = RunConfig::from_json(r#"{"knn_k": 5, "hog": {"clip": 0.3}}"#).unwrap();
        assert_eq!(cfg.knn_k, 5);
        assert_eq!(cfg.hog.clip, 0.3);
        assert_eq!(cfg.hog.cell_size, 8);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"knn": 5}"#), Err(Error::Config(_))));
        assert!(RunConfig::from_json(r#"{"hog": {"cells": 4}}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"cascade_threshold": 0.3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"k_sweep": [2]}"#).is_err());
    }
}
