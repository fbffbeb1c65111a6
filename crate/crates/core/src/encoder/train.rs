use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Mode;
use super::loss::bce_loss;
use super::model::{EncoderArch, EncoderModel};
use super::Tensor;
use crate::classifiers::to_f32_precision;
use crate::error::{Error, Result};
use crate::segmentation::{Kernel, KERNEL_HEIGHT, KERNEL_WIDTH};
use crate::types::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for EncoderHyper {
    fn default() -> Self {
        EncoderHyper {
            lr: 1e-3,
            batch_size: 32,
            epochs: 30,
            seed: 7,
        }
    }
}

/// Training-set loss and accuracy measured in inference mode after an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.train_loss, e.train_accuracy));
        }
        out
    }
}

/// Stacks kernels into an `N×1×48×32` tensor of ink intensity (`1 - pixel`).
pub fn kernels_to_tensor(kernels: &[Kernel]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(kernels.len() * KERNEL_HEIGHT * KERNEL_WIDTH);
    for k in kernels {
        if k.pixels.width() != KERNEL_WIDTH || k.pixels.height() != KERNEL_HEIGHT {
            return Err(Error::ShapeMismatch(format!(
                "kernel is {}x{}, expected {KERNEL_WIDTH}x{KERNEL_HEIGHT}",
                k.pixels.width(),
                k.pixels.height()
            )));
        }
        data.extend(k.pixels.pixels().iter().map(|p| 1.0 - p));
    }
    Tensor::from_vec(kernels.len(), 1, KERNEL_HEIGHT, KERNEL_WIDTH, data)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(lr: f64, shapes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn update(&mut self, params: Vec<&mut Vec<f64>>, grads: &[Vec<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (gi, p) in params.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[gi], &mut self.v[gi], &grads[gi]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Batch boundaries over `n` shuffled samples; a trailing batch of one joins the previous batch.
fn batch_ranges(n: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let mut ranges: Vec<_> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if ranges.len() >= 2 && ranges.last().map(|r| r.len()) == Some(1) {
        let tail = ranges.pop().unwrap();
        ranges.last_mut().unwrap().end = tail.end;
    }
    ranges
}

fn gather(x: &Tensor, idx: &[usize]) -> Tensor {
    let len = x.sample_len();
    let mut data = Vec::with_capacity(idx.len() * len);
    for &i in idx {
        data.extend_from_slice(&x.data[i * len..(i + 1) * len]);
    }
    Tensor {
        batch: idx.len(),
        data,
        ..*x
    }
}

/// Inference-mode loss and accuracy over the whole training set.
fn evaluate_training_set(model: &EncoderModel, x: &Tensor, targets: &[f64]) -> Result<(f64, f64)> {
    const CHUNK: usize = 256;
    let mut probabilities = Vec::with_capacity(x.batch);
    let all: Vec<usize> = (0..x.batch).collect();
    for idx in all.chunks(CHUNK) {
        probabilities.extend(model.forward(&gather(x, idx), Mode::Infer)?);
    }
    let correct = probabilities
        .iter()
        .zip(targets)
        .filter(|(p, y)| (**p > 0.5) == (**y == 1.0))
        .count();
    Ok((bce_loss(&probabilities, targets), correct as f64 / x.batch as f64))
}

/// Trains on labeled kernels with the default architecture.
pub fn train_encoder(kernels: &[Kernel], hyper: &EncoderHyper) -> Result<(EncoderModel, TrainingLog)> {
    let labels: Vec<Label> = kernels
        .iter()
        .map(|k| k.label.ok_or(Error::UnlabeledData))
        .collect::<Result<_>>()?;
    let x = kernels_to_tensor(kernels)?;
    train_on_tensor(&x, &labels, EncoderArch::default(), hyper)
}

/// Trains any architecture on a prepared input tensor.
pub fn train_on_tensor(
    x: &Tensor,
    labels: &[Label],
    arch: EncoderArch,
    hyper: &EncoderHyper,
) -> Result<(EncoderModel, TrainingLog)> {
    if x.batch != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: x.batch,
            actual: labels.len(),
        });
    }
    if hyper.batch_size < 2 {
        return Err(Error::BatchTooSmall(hyper.batch_size));
    }
    if x.batch < 2 {
        return Err(Error::BatchTooSmall(x.batch));
    }
    if !(labels.contains(&Label::Character) && labels.contains(&Label::Reject)) {
        return Err(Error::SingleClassData);
    }
    let targets: Vec<f64> = labels.iter().map(|l| f64::from(l.as_u8())).collect();

    let mut model = EncoderModel::init(arch, hyper.seed)?;
    let shapes: Vec<usize> = model.parameters_mut().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(hyper.lr, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..x.batch).collect();
    let mut log = TrainingLog::default();

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        for (b, range) in batch_ranges(order.len(), hyper.batch_size).into_iter().enumerate() {
            let idx = &order[range];
            let xb = gather(x, idx);
            let yb: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
            let cache = model.forward_train(&xb)?;
            let loss = bce_loss(&cache.probabilities, &yb);
            if !loss.is_finite() {
                log::error!("non-finite loss {loss} at epoch {epoch}, batch {}", b + 1);
                return Err(Error::NonfiniteLoss { epoch, batch: b + 1 });
            }
            let grads = model.backward(&cache, &yb);
            adam.update(model.parameters_mut(), &grads.0);
        }
        let (train_loss, train_accuracy) = evaluate_training_set(&model, x, &targets)?;
        let entry = EpochLog {
            epoch,
            train_loss,
            train_accuracy,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} accuracy {:.4}",
            entry.train_loss,
            entry.train_accuracy
        );
        log.epochs.push(entry);
    }

    for values in model.all_values_mut() {
        values.iter_mut().for_each(|v| *v = to_f32_precision(*v));
    }
    model.meta.seed = hyper.seed;
    model.meta.epochs = hyper.epochs;
    model.meta.lr = hyper.lr;
    model.meta.final_loss = log.epochs.last().map_or(0.0, |e| e.train_loss);
    Ok((model, log))
}
