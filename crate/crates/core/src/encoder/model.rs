use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{leaky_relu, leaky_relu_backward, sigmoid, BatchNorm, BatchNormCache, ConvLayer, Dense, Mode};
use super::loss::bce_loss;
use super::Tensor;
use crate::classifiers::Prediction;
use crate::error::{Error, Result};
use crate::segmentation::{Kernel, KERNEL_HEIGHT, KERNEL_WIDTH};
use crate::types::Label;

/// Layer sizes. The default reduces a 48×32 kernel to 1×1 in six blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderArch {
    pub input_height: usize,
    pub input_width: usize,
    pub channels: Vec<usize>,
    pub hidden: usize,
}

impl Default for EncoderArch {
    fn default() -> Self {
        EncoderArch {
            input_height: KERNEL_HEIGHT,
            input_width: KERNEL_WIDTH,
            channels: vec![8, 16, 32, 64, 64, 64],
            hidden: 32,
        }
    }
}

impl EncoderArch {
    /// Spatial size after each block, starting with the input.
    ///
    /// A block whose input is already 1×1 cannot downsample and is rejected.
    pub fn spatial_trace(&self) -> Result<Vec<(usize, usize)>> {
        if self.input_height == 0 || self.input_width == 0 || self.channels.is_empty() || self.hidden == 0 {
            return Err(Error::ShapeMismatch(
                "encoder needs a non-empty input, channels and hidden width".into(),
            ));
        }
        let mut trace = vec![(self.input_height, self.input_width)];
        for (i, &ch) in self.channels.iter().enumerate() {
            let (h, w) = *trace.last().unwrap();
            if ch == 0 {
                return Err(Error::ShapeMismatch(format!("block {} has zero channels", i + 1)));
            }
            if h == 1 && w == 1 {
                return Err(Error::ShapeMismatch(format!(
                    "block {} receives a 1x1 activation and cannot downsample further",
                    i + 1
                )));
            }
            trace.push((h.div_ceil(2), w.div_ceil(2)));
        }
        Ok(trace)
    }

    /// Width of the flattened conv output.
    pub fn flat_len(&self) -> Result<usize> {
        let (h, w) = *self.spatial_trace()?.last().unwrap();
        Ok(h * w * self.channels.last().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncoderTrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub arch: EncoderArch,
    pub convs: Vec<ConvLayer>,
    pub norms: Vec<BatchNorm>,
    pub dense1: Dense,
    pub dense2: Dense,
    pub meta: EncoderTrainMeta,
}

/// Gradients laid out like [`EncoderModel::parameters_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients(pub Vec<Vec<f64>>);

struct BlockCache {
    input: Tensor,
    norm: BatchNormCache,
    pre_activation: Tensor,
}

pub(crate) struct ForwardCache {
    blocks: Vec<BlockCache>,
    flat: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    pub(crate) probabilities: Vec<f64>,
}

impl EncoderModel {
    /// All-zero weights, unit `gamma`, zero `beta`.
    pub fn zeros(arch: EncoderArch) -> Result<Self> {
        let flat = arch.flat_len()?;
        let mut convs = Vec::with_capacity(arch.channels.len());
        let mut norms = Vec::with_capacity(arch.channels.len());
        let mut in_ch = 1;
        for &ch in &arch.channels {
            convs.push(ConvLayer::zeros(in_ch, ch));
            norms.push(BatchNorm::new(ch));
            in_ch = ch;
        }
        Ok(EncoderModel {
            dense1: Dense::zeros(flat, arch.hidden),
            dense2: Dense::zeros(arch.hidden, 1),
            arch,
            convs,
            norms,
            meta: EncoderTrainMeta::default(),
        })
    }

    /// He-normal weights drawn from `seed`, zero biases.
    pub fn init(arch: EncoderArch, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |values: &mut [f64], fan_in: usize| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            values.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        };
        for conv in &mut model.convs {
            fill(&mut conv.weights, conv.in_channels * 9);
        }
        fill(&mut model.dense1.weights, model.dense1.inputs);
        fill(&mut model.dense2.weights, model.dense2.inputs);
        model.meta.seed = seed;
        Ok(model)
    }

    /// Trainable parameters in a fixed order.
    pub fn parameters_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.split_values().0
    }

    /// Trainable parameters followed by the running statistics.
    pub(crate) fn all_values_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let (mut params, running) = self.split_values();
        params.extend(running);
        params
    }

    fn split_values(&mut self) -> (Vec<&mut Vec<f64>>, Vec<&mut Vec<f64>>) {
        let EncoderModel {
            convs,
            norms,
            dense1,
            dense2,
            ..
        } = self;
        let mut params: Vec<&mut Vec<f64>> = convs.iter_mut().map(|c| &mut c.weights).collect();
        let mut running = Vec::new();
        for bn in norms.iter_mut() {
            let BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                ..
            } = bn;
            params.push(gamma);
            params.push(beta);
            running.push(running_mean);
            running.push(running_var);
        }
        params.extend([
            &mut dense1.weights,
            &mut dense1.bias,
            &mut dense2.weights,
            &mut dense2.bias,
        ]);
        (params, running)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels != 1 || x.height != self.arch.input_height || x.width != self.arch.input_width {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects Nx1x{}x{}, got {}x{}x{}x{}",
                self.arch.input_height, self.arch.input_width, x.batch, x.channels, x.height, x.width
            )));
        }
        Ok(())
    }

    fn head(&self, flat: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hidden_pre = self.dense1.forward(flat, batch);
        let mut hidden = hidden_pre.clone();
        leaky_relu(&mut hidden);
        let logits = self.dense2.forward(&hidden, batch);
        let probabilities = logits.into_iter().map(sigmoid).collect();
        (hidden_pre, hidden, probabilities)
    }

    /// Intermediate spatial shapes of one forward pass, for inspection.
    pub fn activation_shapes(&self, x: &Tensor, mode: Mode) -> Result<Vec<(usize, usize)>> {
        self.check_input(x)?;
        let mut act = x.clone();
        let mut shapes = Vec::new();
        for (conv, bn) in self.convs.iter().zip(&self.norms) {
            act = bn.forward(&conv.forward(&act)?, mode)?;
            leaky_relu(&mut act.data);
            shapes.push((act.height, act.width));
        }
        Ok(shapes)
    }

    /// Probabilities of the character class, one per sample.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut act = x.clone();
        for (conv, bn) in self.convs.iter().zip(&self.norms) {
            act = bn.forward(&conv.forward(&act)?, mode)?;
            leaky_relu(&mut act.data);
        }
        Ok(self.head(&act.data, x.batch).2)
    }

    /// Train-mode forward that records activations and updates running statistics.
    pub(crate) fn forward_train(&mut self, x: &Tensor) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut act = x.clone();
        let mut blocks = Vec::with_capacity(self.convs.len());
        for (conv, bn) in self.convs.iter().zip(&mut self.norms) {
            let conv_out = conv.forward(&act)?;
            let (pre_activation, norm) = bn.forward_train(&conv_out)?;
            let mut next = pre_activation.clone();
            leaky_relu(&mut next.data);
            blocks.push(BlockCache {
                input: std::mem::replace(&mut act, next),
                norm,
                pre_activation,
            });
        }
        let (hidden_pre, hidden, probabilities) = self.head(&act.data, x.batch);
        Ok(ForwardCache {
            blocks,
            flat: act.data,
            hidden_pre,
            hidden,
            probabilities,
        })
    }

    /// Gradient of the mean BCE with respect to every trainable parameter.
    pub(crate) fn backward(&self, cache: &ForwardCache, targets: &[f64]) -> EncoderGradients {
        let batch = targets.len();
        let dlogits: Vec<f64> = cache
            .probabilities
            .iter()
            .zip(targets)
            .map(|(p, y)| (p - y) / batch as f64)
            .collect();
        let (mut dhidden, d2w, d2b) = self.dense2.backward(&cache.hidden, &dlogits, batch);
        leaky_relu_backward(&cache.hidden_pre, &mut dhidden);
        let (dflat, d1w, d1b) = self.dense1.backward(&cache.flat, &dhidden, batch);

        let last = &cache.blocks.last().expect("at least one block").pre_activation;
        let mut grad = Tensor {
            data: dflat,
            ..last.clone()
        };
        let n_blocks = self.convs.len();
        let mut conv_grads = vec![Vec::new(); n_blocks];
        let mut gamma_grads = vec![Vec::new(); n_blocks];
        let mut beta_grads = vec![Vec::new(); n_blocks];
        for i in (0..n_blocks).rev() {
            let block = &cache.blocks[i];
            leaky_relu_backward(&block.pre_activation.data, &mut grad.data);
            let (dconv, dgamma, dbeta) = self.norms[i].backward(&grad, &block.norm);
            let (dx, dw) = self.convs[i].backward(&block.input, &dconv);
            conv_grads[i] = dw;
            gamma_grads[i] = dgamma;
            beta_grads[i] = dbeta;
            grad = dx;
        }
        let mut out = conv_grads;
        for (g, b) in gamma_grads.into_iter().zip(beta_grads) {
            out.push(g);
            out.push(b);
        }
        out.extend([d1w, d1b, d2w, d2b]);
        EncoderGradients(out)
    }

    /// Mean BCE of a train-mode forward pass that leaves running statistics untouched.
    pub fn batch_loss(&self, x: &Tensor, targets: &[f64]) -> Result<f64> {
        Ok(bce_loss(&self.forward(x, Mode::Train)?, targets))
    }

    /// Analytic gradient of [`EncoderModel::batch_loss`], computed on a scratch copy.
    pub fn gradients(&self, x: &Tensor, targets: &[f64]) -> Result<EncoderGradients> {
        let mut scratch = self.clone();
        let cache = scratch.forward_train(x)?;
        Ok(self.backward(&cache, targets))
    }

    pub fn predict_probability(&self, kernel: &Kernel) -> Result<f64> {
        let x = super::train::kernels_to_tensor(std::slice::from_ref(kernel))?;
        Ok(self.forward(&x, Mode::Infer)?[0])
    }

    /// Character iff `p > 0.5`; confidence is `max(p, 1 - p)`.
    pub fn predict(&self, kernel: &Kernel) -> Result<Prediction> {
        Ok(prediction_from_probability(self.predict_probability(kernel)?))
    }

    pub fn predict_batch(&self, kernels: &[Kernel]) -> Result<Vec<Prediction>> {
        if kernels.is_empty() {
            return Ok(Vec::new());
        }
        let x = super::train::kernels_to_tensor(kernels)?;
        Ok(self
            .forward(&x, Mode::Infer)?
            .into_iter()
            .map(prediction_from_probability)
            .collect())
    }
}

fn prediction_from_probability(p: f64) -> Prediction {
    let label = if p > 0.5 { Label::Character } else { Label::Reject };
    Prediction::new(label, p.max(1.0 - p), p)
}

pub fn encoder_forward(model: &EncoderModel, batch: &Tensor, mode: Mode) -> Result<Vec<f64>> {
    model.forward(batch, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_arch() -> EncoderArch {
        EncoderArch {
            input_height: 12,
            input_width: 8,
            channels: vec![3, 4],
            hidden: 5,
        }
    }

    #[test]
    fn default_trace() {
        let trace = EncoderArch::default().spatial_trace().unwrap();
        assert_eq!(trace, vec![(48, 32), (24, 16), (12, 8), (6, 4), (3, 2), (2, 1), (1, 1)]);
        assert_eq!(EncoderArch::default().flat_len().unwrap(), 64);
    }

    #[test]
    fn seventh_block_is_a_shape_error() {
        let mut arch = EncoderArch::default();
        arch.channels.push(64);
        assert!(matches!(arch.spatial_trace(), Err(Error::ShapeMismatch(_))));
        assert!(EncoderModel::zeros(arch).is_err());
    }

    #[test]
    fn activation_shapes_follow_trace() {
        let model = EncoderModel::init(EncoderArch::default(), 1).unwrap();
        let x = Tensor::zeros(2, 1, 48, 32);
        let shapes = model.activation_shapes(&x, Mode::Infer).unwrap();
        assert_eq!(shapes, vec![(24, 16), (12, 8), (6, 4), (3, 2), (2, 1), (1, 1)]);
    }

    #[test]
    fn dead_network_outputs_half() {
        let model = EncoderModel::zeros(EncoderArch::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::from_vec(3, 1, 48, 32, (0..3 * 48 * 32).map(|_| rng.random()).collect()).unwrap();
        for mode in [Mode::Train, Mode::Infer] {
            assert!(model.forward(&x, mode).unwrap().iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn outputs_strictly_inside_unit_interval() {
        let model = EncoderModel::init(EncoderArch::default(), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::from_vec(
            4,
            1,
            48,
            32,
            (0..4 * 48 * 32).map(|_| rng.random_range(-50.0..50.0)).collect(),
        )
        .unwrap();
        for p in model.forward(&x, Mode::Infer).unwrap() {
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn wrong_input_shape() {
        let model = EncoderModel::zeros(EncoderArch::default()).unwrap();
        assert!(matches!(
            model.forward(&Tensor::zeros(1, 1, 32, 48), Mode::Infer),
            Err(Error::ShapeMismatch(_))
        ));
    }

    /// Central differences over every parameter of a two-block net.
    pub(crate) fn max_gradient_error() -> f64 {
        let mut model = EncoderModel::init(small_arch(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for bn in &mut model.norms {
            bn.gamma.iter_mut().for_each(|g| *g = rng.random_range(0.5..1.5));
            bn.beta.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let x = Tensor::from_vec(4, 1, 12, 8, (0..4 * 96).map(|_| rng.random()).collect()).unwrap();
        let targets = [1.0, 0.0, 0.0, 1.0];
        let analytic = model.gradients(&x, &targets).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let n_groups = model.parameters_mut().len();
        for g in 0..n_groups {
            let len = model.parameters_mut()[g].len();
            for i in 0..len {
                let original = model.parameters_mut()[g][i];
                model.parameters_mut()[g][i] = original + h;
                let plus = model.batch_loss(&x, &targets).unwrap();
                model.parameters_mut()[g][i] = original - h;
                let minus = model.batch_loss(&x, &targets).unwrap();
                model.parameters_mut()[g][i] = original;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic.0[g][i];
                let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let err = max_gradient_error();
        assert!(err < 1e-4, "max relative error {err}");
    }
}
