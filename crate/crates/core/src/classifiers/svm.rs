use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{to_f32_precision, Prediction};
use crate::error::{Error, Result};
use crate::types::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmTrainMeta {
    pub epochs: usize,
    pub seed: u64,
    pub final_objective: f64,
    /// Primal objective of the running average iterate at the end of each epoch.
    pub objective_history: Vec<f64>,
}

/// Linear decision function `w·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub meta: SvmTrainMeta,
}

impl SvmModel {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                actual: x.len(),
            });
        }
        Ok(self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        svm_predict(self, x)
    }
}

/// `λ/2 ‖w‖² + mean hinge loss`.
fn objective(w: &[f64], b: f64, lambda: f64, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let s: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b;
            (1.0 - y * s).max(0.0)
        })
        .sum();
    reg + hinge / xs.len() as f64
}

/// Pegasos-style stochastic subgradient descent on the soft-margin primal with
/// `λ = 1/(nC)` and step `1/(λt)`.
///
/// The bias is updated like an extra weight on a constant feature (shrunk and
/// projected with `w`), which keeps it on the same scale as `w`. Each epoch
/// visits the samples in a fresh seeded permutation; the returned model is the
/// average of every iterate.
pub fn svm_train(xs: &[Vec<f64>], labels: &[Label], c: f64, epochs: usize, seed: u64) -> Result<SvmModel> {
    if xs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: labels.len(),
        });
    }
    if !labels.contains(&Label::Character) || !labels.contains(&Label::Reject) {
        return Err(Error::SingleClassData);
    }
    if c.is_nan() || c <= 0.0 || epochs == 0 {
        return Err(Error::Config("SVM needs C > 0 and at least one epoch".into()));
    }
    let d = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }

    let n = xs.len();
    let ys: Vec<f64> = labels.iter().map(|l| l.signed()).collect();
    let lambda = 1.0 / (n as f64 * c);
    let radius = 1.0 / lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; d];
    let mut avg_b: f64 = 0.0;
    let mut history = Vec::with_capacity(epochs);
    let mut t = 0u64;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = &xs[i];
            let margin = ys[i] * (w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += eta * ys[i] * xj;
                }
                b += eta * ys[i];
            }
            let norm = (w.iter().map(|v| v * v).sum::<f64>() + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
                b *= s;
            }
            for (a, v) in avg_w.iter_mut().zip(&w) {
                *a += v;
            }
            avg_b += b;
        }
        let inv = 1.0 / t as f64;
        let epoch_w: Vec<f64> = avg_w.iter().map(|v| v * inv).collect();
        history.push(objective(&epoch_w, avg_b * inv, lambda, xs, &ys));
    }

    let inv = 1.0 / t as f64;
    let w: Vec<f64> = avg_w.iter().map(|v| to_f32_precision(v * inv)).collect();
    let b = to_f32_precision(avg_b * inv);
    let final_objective = objective(&w, b, lambda, xs, &ys);
    Ok(SvmModel {
        w,
        b,
        c,
        meta: SvmTrainMeta {
            epochs,
            seed,
            final_objective,
            objective_history: history,
        },
    })
}

/// Positive margin means character; a margin of exactly zero is a reject.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<Prediction> {
    let s = model.score(x)?;
    let label = if s > 0.0 { Label::Character } else { Label::Reject };
    let confidence = 1.0 / (1.0 + (-s.abs()).exp());
    Ok(Prediction::new(label, confidence, s))
}
