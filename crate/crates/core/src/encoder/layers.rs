//! Layer primitives with hand-derived backward passes.

use super::Tensor;
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Output side of a 3×3, stride-2 convolution padded by one pixel: `ceil(n / 2)`.
pub fn conv_output_len(n: usize) -> usize {
    n.div_ceil(2)
}

/// 3×3 cross-correlation with stride 2 and one pixel of zero padding; no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out × in × 3 × 3`.
    pub weights: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvLayer {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * 9],
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d_forward(x, self)
    }

    /// Returns `(dL/dx, dL/dweights)`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> (Tensor, Vec<f64>) {
        let (n_batch, _, h, w) = x.shape();
        let (_, _, oh, ow) = dy.shape();
        let k = self.in_channels * 9;
        let np = n_batch * oh * ow;
        let col = im2col(x, oh, ow);
        let dy_rows = channels_major(dy);
        let mut dw = vec![0.0; self.weights.len()];
        for o in 0..self.out_channels {
            let g = &dy_rows[o * np..(o + 1) * np];
            for kk in 0..k {
                dw[o * k + kk] = dot(g, &col[kk * np..(kk + 1) * np]);
            }
        }
        let mut dcol = vec![0.0; k * np];
        for o in 0..self.out_channels {
            let g = &dy_rows[o * np..(o + 1) * np];
            for kk in 0..k {
                axpy(self.weights[o * k + kk], g, &mut dcol[kk * np..(kk + 1) * np]);
            }
        }
        let mut dx = Tensor::zeros(n_batch, self.in_channels, h, w);
        col2im(&dcol, &mut dx, oh, ow);
        (dx, dw)
    }
}

/// Output indices `i` whose tap `2i + k - 1` lands inside an input of length `n`.
#[inline]
fn tap_range(k: usize, n: usize, out: usize) -> std::ops::Range<usize> {
    let start = usize::from(k == 0);
    let end = out.min((n + 2 - k) / 2);
    start..end.max(start)
}

/// Unrolls 3×3 stride-2 patches into a `(C·9) × (N·oh·ow)` matrix; padding taps stay zero.
fn im2col(x: &Tensor, oh: usize, ow: usize) -> Vec<f64> {
    let (n_batch, channels, h, w) = x.shape();
    let p = oh * ow;
    let np = n_batch * p;
    let mut col = vec![0.0; channels * 9 * np];
    for c in 0..channels {
        for ky in 0..3 {
            let rows = tap_range(ky, h, oh);
            for kx in 0..3 {
                let cols = tap_range(kx, w, ow);
                let dst = &mut col[((c * 3 + ky) * 3 + kx) * np..][..np];
                for n in 0..n_batch {
                    let plane = &x.data[x.index(n, c, 0, 0)..][..h * w];
                    for i in rows.clone() {
                        let src = (2 * i + ky - 1) * w;
                        let out = n * p + i * ow;
                        for j in cols.clone() {
                            dst[out + j] = plane[src + 2 * j + kx - 1];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im(dcol: &[f64], dx: &mut Tensor, oh: usize, ow: usize) {
    let (n_batch, channels, h, w) = dx.shape();
    let p = oh * ow;
    let np = n_batch * p;
    for c in 0..channels {
        for ky in 0..3 {
            let rows = tap_range(ky, h, oh);
            for kx in 0..3 {
                let cols = tap_range(kx, w, ow);
                let src = &dcol[((c * 3 + ky) * 3 + kx) * np..][..np];
                for n in 0..n_batch {
                    let base = dx.index(n, c, 0, 0);
                    let plane = &mut dx.data[base..][..h * w];
                    for i in rows.clone() {
                        let dst = (2 * i + ky - 1) * w;
                        let from = n * p + i * ow;
                        for j in cols.clone() {
                            plane[dst + 2 * j + kx - 1] += src[from + j];
                        }
                    }
                }
            }
        }
    }
}

/// `N×C×P` to `C×(N·P)`.
fn channels_major(t: &Tensor) -> Vec<f64> {
    let p = t.plane();
    let np = t.batch * p;
    let mut out = vec![0.0; t.channels * np];
    for n in 0..t.batch {
        for c in 0..t.channels {
            out[c * np + n * p..][..p].copy_from_slice(&t.data[t.index(n, c, 0, 0)..][..p]);
        }
    }
    out
}

/// Dot product with four fixed partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for q in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * q + l] * b[4 * q + l];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn conv2d_forward(x: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    if x.channels != layer.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {} input channels, got {}",
            layer.in_channels, x.channels
        )));
    }
    let (n_batch, _, h, w) = x.shape();
    let (oh, ow) = (conv_output_len(h), conv_output_len(w));
    let p = oh * ow;
    let np = n_batch * p;
    let k = layer.in_channels * 9;
    let col = im2col(x, oh, ow);
    let mut rows = vec![0.0; layer.out_channels * np];
    for o in 0..layer.out_channels {
        let out = &mut rows[o * np..(o + 1) * np];
        for kk in 0..k {
            axpy(layer.weights[o * k + kk], &col[kk * np..(kk + 1) * np], out);
        }
    }
    let mut y = Tensor::zeros(n_batch, layer.out_channels, oh, ow);
    for n in 0..n_batch {
        for o in 0..layer.out_channels {
            let dst = y.index(n, o, 0, 0);
            y.data[dst..dst + p].copy_from_slice(&rows[o * np + n * p..][..p]);
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-channel batch normalization followed by scale `gamma` and shift `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

/// Saved activations for the batch-norm backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon: 1e-5,
            momentum: 0.9,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.channels != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "batch norm has {} channels, input has {}",
                self.channels(),
                x.channels
            )));
        }
        Ok(())
    }

    fn batch_stats(&self, x: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let m = (x.batch * x.plane()) as f64;
        let mut mean = vec![0.0; x.channels];
        let mut var = vec![0.0; x.channels];
        for c in 0..x.channels {
            let mut sum = 0.0;
            for n in 0..x.batch {
                sum += x.data[x.index(n, c, 0, 0)..][..x.plane()].iter().sum::<f64>();
            }
            let mu = sum / m;
            let mut sq = 0.0;
            for n in 0..x.batch {
                sq += x.data[x.index(n, c, 0, 0)..][..x.plane()]
                    .iter()
                    .map(|v| (v - mu) * (v - mu))
                    .sum::<f64>();
            }
            mean[c] = mu;
            var[c] = sq / m;
        }
        (mean, var)
    }

    fn normalize(&self, x: &Tensor, mean: &[f64], var: &[f64]) -> (Tensor, Tensor, Vec<f64>) {
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut normalized = x.clone();
        let mut y = x.clone();
        for n in 0..x.batch {
            for c in 0..x.channels {
                let start = x.index(n, c, 0, 0);
                for i in start..start + x.plane() {
                    let xhat = (x.data[i] - mean[c]) * inv_std[c];
                    normalized.data[i] = xhat;
                    y.data[i] = self.gamma[c] * xhat + self.beta[c];
                }
            }
        }
        (y, normalized, inv_std)
    }

    /// Pure forward pass; train mode uses batch statistics without touching the running ones.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check(x)?;
        match mode {
            Mode::Train => {
                if x.batch < 2 {
                    return Err(Error::BatchTooSmall(x.batch));
                }
                let (mean, var) = self.batch_stats(x);
                Ok(self.normalize(x, &mean, &var).0)
            }
            Mode::Infer => Ok(self.normalize(x, &self.running_mean, &self.running_var).0),
        }
    }

    /// Train-mode forward that also folds the batch statistics into the running ones.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BatchNormCache)> {
        self.check(x)?;
        if x.batch < 2 {
            return Err(Error::BatchTooSmall(x.batch));
        }
        let (mean, var) = self.batch_stats(x);
        let (y, normalized, inv_std) = self.normalize(x, &mean, &var);
        for c in 0..self.channels() {
            self.running_mean[c] = self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean[c];
            self.running_var[c] = self.momentum * self.running_var[c] + (1.0 - self.momentum) * var[c];
        }
        Ok((y, BatchNormCache { normalized, inv_std }))
    }

    /// Full batch-statistics gradient. Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, dy: &Tensor, cache: &BatchNormCache) -> (Tensor, Vec<f64>, Vec<f64>) {
        let xhat = &cache.normalized;
        let m = (dy.batch * dy.plane()) as f64;
        let mut dgamma = vec![0.0; self.channels()];
        let mut dbeta = vec![0.0; self.channels()];
        for n in 0..dy.batch {
            for c in 0..dy.channels {
                let start = dy.index(n, c, 0, 0);
                for i in start..start + dy.plane() {
                    dgamma[c] += dy.data[i] * xhat.data[i];
                    dbeta[c] += dy.data[i];
                }
            }
        }
        let mut dx = dy.clone();
        for n in 0..dy.batch {
            for c in 0..dy.channels {
                let k = self.gamma[c] * cache.inv_std[c] / m;
                let start = dy.index(n, c, 0, 0);
                for i in start..start + dy.plane() {
                    // dxhat = gamma * dy; sums over dxhat are gamma * dbeta and gamma * dgamma
                    dx.data[i] = k * (m * dy.data[i] - dbeta[c] - xhat.data[i] * dgamma[c]);
                }
            }
        }
        (dx, dgamma, dbeta)
    }
}

pub fn batchnorm_forward(x: &Tensor, bn: &BatchNorm, mode: Mode) -> Result<Tensor> {
    bn.forward(x, mode)
}

pub fn leaky_relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v *= LEAKY_SLOPE;
        }
    }
}

/// Multiplies `grad` by the LeakyReLU derivative at the (pre-activation) `input`.
pub fn leaky_relu_backward(input: &[f64], grad: &mut [f64]) {
    for (g, &x) in grad.iter_mut().zip(input) {
        if x < 0.0 {
            *g *= LEAKY_SLOPE;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `y = W x + b`, `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// `x` holds `batch` rows of `inputs` values.
    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut y = Vec::with_capacity(batch * self.outputs);
        for n in 0..batch {
            let row = &x[n * self.inputs..(n + 1) * self.inputs];
            for o in 0..self.outputs {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                y.push(w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + self.bias[o]);
            }
        }
        y
    }

    /// Returns `(dx, dweights, dbias)`.
    pub fn backward(&self, x: &[f64], dy: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut dx = vec![0.0; batch * self.inputs];
        let mut dw = vec![0.0; self.weights.len()];
        let mut db = vec![0.0; self.outputs];
        for n in 0..batch {
            let row = &x[n * self.inputs..(n + 1) * self.inputs];
            let dx_row = &mut dx[n * self.inputs..(n + 1) * self.inputs];
            for o in 0..self.outputs {
                let g = dy[n * self.outputs + o];
                db[o] += g;
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let dw_row = &mut dw[o * self.inputs..(o + 1) * self.inputs];
                for i in 0..self.inputs {
                    dw_row[i] += g * row[i];
                    dx_row[i] += g * w[i];
                }
            }
        }
        (dx, dw, db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_tensor(rng: &mut impl Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(
            n,
            c,
            h,
            w,
            (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_kernel_gives_zero_output() {
        let x = Tensor::from_vec(1, 1, 4, 4, (0..16).map(f64::from).collect()).unwrap();
        let y = conv2d_forward(&x, &ConvLayer::zeros(1, 1)).unwrap();
        assert_eq!(y.shape(), (1, 1, 2, 2));
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_kernel_subsamples_even_coordinates() {
        let x = Tensor::from_vec(1, 1, 5, 6, (0..30).map(f64::from).collect()).unwrap();
        let mut layer = ConvLayer::zeros(1, 1);
        layer.weights[4] = 1.0;
        let y = conv2d_forward(&x, &layer).unwrap();
        assert_eq!(y.shape(), (1, 1, 3, 3));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(y.data[i * 3 + j], x.data[(2 * i) * 6 + 2 * j]);
            }
        }
    }

    #[test]
    fn conv_matches_nested_loop_reference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, 1, 2, 5, 5);
        let mut layer = ConvLayer::zeros(2, 3);
        layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        let y = conv2d_forward(&x, &layer).unwrap();
        // reference: pad explicitly, then six nested loops
        let (h, w) = (5usize, 5usize);
        let padded = |c: usize, yy: i64, xx: i64| -> f64 {
            if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                0.0
            } else {
                x.data[(c * h + yy as usize) * w + xx as usize]
            }
        };
        for o in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                acc += layer.weights[((o * 2 + c) * 3 + ky) * 3 + kx]
                                    * padded(c, 2 * i as i64 + ky as i64 - 1, 2 * j as i64 + kx as i64 - 1);
                            }
                        }
                    }
                    assert!((y.data[(o * 3 + i) * 3 + j] - acc).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn channel_mismatch() {
        let x = Tensor::zeros(1, 2, 4, 4);
        assert!(matches!(
            conv2d_forward(&x, &ConvLayer::zeros(1, 1)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn constant_batch_normalizes_to_zero() {
        let x = Tensor::from_vec(4, 1, 2, 2, vec![3.0; 16]).unwrap();
        let y = BatchNorm::new(1).forward(&x, Mode::Train).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_scale_and_shift() {
        let x = Tensor::from_vec(2, 1, 1, 1, vec![0.0, 2.0]).unwrap();
        let mut bn = BatchNorm::new(1);
        bn.gamma[0] = 2.0;
        bn.beta[0] = 1.0;
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!(
            (y.data[0] + 1.0).abs() < 1e-3 && (y.data[1] - 3.0).abs() < 1e-3,
            "{:?}",
            y.data
        );
    }

    #[test]
    fn train_mode_output_is_standardized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut x = random_tensor(&mut rng, 8, 3, 4, 4);
        x.data.iter_mut().for_each(|v| *v = *v * 5.0 + 2.0);
        let y = BatchNorm::new(3).forward(&x, Mode::Train).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..8)
                .flat_map(|n| y.data[y.index(n, c, 0, 0)..][..16].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4, "{var}");
        }
    }

    #[test]
    fn batch_of_one_rejected_in_train_mode() {
        let x = Tensor::zeros(1, 1, 2, 2);
        assert!(matches!(
            BatchNorm::new(1).forward(&x, Mode::Train),
            Err(Error::BatchTooSmall(1))
        ));
        assert!(BatchNorm::new(1).forward(&x, Mode::Infer).is_ok());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor::from_vec(2, 1, 1, 1, vec![1.0, 3.0]).unwrap();
        let mut bn = BatchNorm::new(1);
        bn.forward_train(&x).unwrap();
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((bn.running_var[0] - (0.9 + 0.1)).abs() < 1e-15);
    }
}
