use serde::{Deserialize, Serialize};

use super::{FeatureVector, Provenance};
use crate::error::{Error, Result};
use crate::raster::GrayImage;
use crate::segmentation::{Kernel, KERNEL_HEIGHT, KERNEL_WIDTH};

/// HOG layout. Defaults: 8 px cells, 9 unsigned bins, 2×2-cell blocks at a
/// one-cell stride, L2-hys clipping at 0.2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogParams {
    pub cell_size: usize,
    pub bins: usize,
    pub block: usize,
    pub block_stride: usize,
    pub clip: f64,
    pub epsilon: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        HogParams {
            cell_size: 8,
            bins: 9,
            block: 2,
            block_stride: 1,
            clip: 0.2,
            epsilon: 1e-5,
        }
    }
}

impl HogParams {
    fn validate(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        if self.bins < 2 || self.cell_size == 0 || self.block == 0 || self.block_stride == 0 {
            return Err(Error::Dimension(format!("invalid HOG parameters {self:?}")));
        }
        if !width.is_multiple_of(self.cell_size) || !height.is_multiple_of(self.cell_size) {
            return Err(Error::Dimension(format!(
                "cell size {} does not divide {width}x{height}",
                self.cell_size
            )));
        }
        let (cw, ch) = (width / self.cell_size, height / self.cell_size);
        if cw < self.block || ch < self.block {
            return Err(Error::Dimension(format!(
                "{cw}x{ch} cells cannot hold a {}x{} block",
                self.block, self.block
            )));
        }
        Ok((cw, ch))
    }

    /// Descriptor length for a `width`×`height` image.
    pub fn descriptor_len(&self, width: usize, height: usize) -> Result<usize> {
        let (cw, ch) = self.validate(width, height)?;
        let bx = (cw - self.block) / self.block_stride + 1;
        let by = (ch - self.block) / self.block_stride + 1;
        Ok(bx * by * self.block * self.block * self.bins)
    }
}

/// L2 normalize, clip, renormalize.
pub fn l2hys(block: &[f64], clip: f64, epsilon: f64) -> Vec<f64> {
    let eps2 = epsilon * epsilon;
    let norm = (block.iter().map(|v| v * v).sum::<f64>() + eps2).sqrt();
    let clipped: Vec<f64> = block.iter().map(|v| (v / norm).min(clip)).collect();
    let norm = (clipped.iter().map(|v| v * v).sum::<f64>() + eps2).sqrt();
    clipped.into_iter().map(|v| v / norm).collect()
}

/// HOG descriptor of a kernel; the kernel must be exactly 48×32.
pub fn hog(kernel: &Kernel, params: &HogParams) -> Result<FeatureVector> {
    let img = &kernel.pixels;
    if img.width() != KERNEL_WIDTH || img.height() != KERNEL_HEIGHT {
        return Err(Error::Dimension(format!(
            "HOG expects a {KERNEL_WIDTH}x{KERNEL_HEIGHT} kernel, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    hog_image(img, params)
}

/// HOG descriptor of any image whose sides are multiples of the cell size.
pub fn hog_image(img: &GrayImage, params: &HogParams) -> Result<FeatureVector> {
    let (w, h) = (img.width(), img.height());
    let (cells_w, cells_h) = params.validate(w, h)?;
    let bins = params.bins;
    let bin_width = 180.0 / bins as f64;
    let mut cells = vec![0.0; cells_w * cells_h * bins];

    for y in 0..h {
        for x in 0..w {
            // centred [-1, 0, 1] differences, edges replicated
            let gx = img.get((x + 1).min(w - 1), y) - img.get(x.saturating_sub(1), y);
            let gy = img.get(x, (y + 1).min(h - 1)) - img.get(x, y.saturating_sub(1));
            let magnitude = (gx * gx + gy * gy).sqrt();
            if magnitude == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            let pos = angle / bin_width;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = (lower as usize) % bins;
            let b1 = (b0 + 1) % bins;
            let cell = ((y / params.cell_size) * cells_w + x / params.cell_size) * bins;
            cells[cell + b0] += magnitude * (1.0 - frac);
            cells[cell + b1] += magnitude * frac;
        }
    }

    let mut values = Vec::with_capacity(params.descriptor_len(w, h)?);
    let mut block = Vec::with_capacity(params.block * params.block * bins);
    for by in (0..=cells_h - params.block).step_by(params.block_stride) {
        for bx in (0..=cells_w - params.block).step_by(params.block_stride) {
            block.clear();
            for cy in by..by + params.block {
                for cx in bx..bx + params.block {
                    let start = (cy * cells_w + cx) * bins;
                    block.extend_from_slice(&cells[start..start + bins]);
                }
            }
            values.extend(l2hys(&block, params.clip, params.epsilon));
        }
    }
    Ok(FeatureVector {
        values,
        provenance: Provenance::Hog,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BoundingBox;

    fn kernel(img: GrayImage) -> Kernel {
        Kernel::from_image(img, BoundingBox::new(0, 0, 32, 48), "t").unwrap()
    }

    #[test]
    fn default_length_is_540() {
        assert_eq!(HogParams::default().descriptor_len(32, 48).unwrap(), 540);
        let d = hog(&kernel(GrayImage::filled(32, 48, 0.3)), &HogParams::default()).unwrap();
        assert_eq!(d.len(), 540);
    }

    #[test]
    fn constant_kernel_gives_zero_descriptor() {
        let d = hog(&kernel(GrayImage::filled(32, 48, 0.7)), &HogParams::default()).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_size_is_dimension_error() {
        let k = Kernel {
            pixels: GrayImage::filled(16, 16, 0.0),
            source_box: BoundingBox::new(0, 0, 16, 16),
            page_id: String::new(),
            label: None,
        };
        assert!(matches!(hog(&k, &HogParams::default()), Err(Error::Dimension(_))));
    }

    #[test]
    fn l2hys_zero_block() {
        assert_eq!(l2hys(&[0.0; 4], 0.2, 1e-5), vec![0.0; 4]);
    }

    #[test]
    fn l2hys_single_spike_is_fixpoint() {
        let v = l2hys(&[1.0, 0.0, 0.0, 0.0], 0.2, 1e-5);
        assert!((v[0] - 1.0).abs() < 1e-5);
        assert!(v[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn l2hys_three_four() {
        // [3,4] -> [0.6,0.8] -> clip [0.5,0.5] -> [1/sqrt2, 1/sqrt2]
        let v = l2hys(&[3.0, 4.0], 0.5, 1e-5);
        for x in v {
            assert!((x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn values_within_unit_interval() {
        let pixels = (0..32 * 48).map(|i| ((i * 7919) % 101) as f64 / 100.0).collect();
        let d = hog(&kernel(GrayImage::new(32, 48, pixels).unwrap()), &HogParams::default()).unwrap();
        assert!(d.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
