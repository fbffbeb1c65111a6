use super::{BinaryImage, GrayImage};

/// Result of global thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct Binarization {
    pub image: BinaryImage,
    /// Intensity cut: a pixel is ink iff its intensity is below this value.
    pub threshold: f64,
    /// Histogram bin index `T`; ink pixels fall in bins `< T`.
    pub threshold_bin: usize,
    /// Set when every pixel lands in one histogram bin; the image is then all background.
    pub degenerate: bool,
}

#[inline]
fn bin_of(intensity: f64) -> usize {
    (intensity * 255.0).round().clamp(0.0, 255.0) as usize
}

/// 256-bin histogram, bin `k` holding intensities that round to `k / 255`.
pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[bin_of(p)] += 1;
    }
    hist
}

/// Otsu's between-class variance (in bin units) for the split `bins < t` vs `bins >= t`.
pub fn between_class_variance(hist: &[u64; 256], t: usize) -> f64 {
    let total: u64 = hist.iter().sum();
    let n0: u64 = hist[..t].iter().sum();
    let n1 = total - n0;
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let s0: u64 = hist[..t].iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
    let s1: u64 = hist[t..].iter().enumerate().map(|(k, &c)| (k + t) as u64 * c).sum();
    let (w0, w1) = (n0 as f64 / total as f64, n1 as f64 / total as f64);
    let diff = s0 as f64 / n0 as f64 - s1 as f64 / n1 as f64;
    w0 * w1 * diff * diff
}

/// Global Otsu binarization with dark pixels as ink.
///
/// Among thresholds achieving the maximal between-class variance, the middle of
/// the first maximal run is taken, so empty histogram gaps split evenly.
pub fn binarize(img: &GrayImage) -> Binarization {
    let hist = histogram(img);
    let scores: Vec<f64> = (0..=255)
        .map(|t| if t == 0 { 0.0 } else { between_class_variance(&hist, t) })
        .collect();
    let best = scores.iter().cloned().fold(0.0, f64::max);

    if img.is_empty() || best <= 0.0 {
        log::warn!("binarize: degenerate image, all pixels in one histogram bin");
        return Binarization {
            image: BinaryImage::blank(img.width(), img.height()),
            threshold: 0.0,
            threshold_bin: 0,
            degenerate: true,
        };
    }

    let first = scores.iter().position(|&s| s == best).unwrap_or(1);
    let run = scores[first..].iter().take_while(|&&s| s == best).count();
    let t = first + (run - 1) / 2;

    let bits = img.pixels().iter().map(|&p| u8::from(bin_of(p) < t)).collect();
    Binarization {
        image: BinaryImage::new(img.width(), img.height(), bits).expect("same dimensions"),
        threshold: (t as f64 - 0.5) / 255.0,
        threshold_bin: t,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn half_dark_half_light() {
        let pixels: Vec<f64> = (0..64).map(|i| if i % 8 < 4 { 0.0 } else { 1.0 }).collect();
        let img = GrayImage::new(8, 8, pixels.clone()).unwrap();
        let b = binarize(&img);
        assert!(!b.degenerate);
        for (bit, p) in b.image.bits().iter().zip(&pixels) {
            assert_eq!(*bit, u8::from(*p == 0.0));
        }
    }

    #[test]
    fn constant_image_is_degenerate() {
        let b = binarize(&GrayImage::filled(5, 4, 0.5));
        assert!(b.degenerate);
        assert_eq!(b.image.ink_count(), 0);
    }

    #[test]
    fn two_mode_threshold_matches_exhaustive_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let pixels: Vec<f64> = (0..256)
            .map(|i| {
                let mode: f64 = if (i / 16 + i % 16) % 2 == 0 { 0.2 } else { 0.8 };
                (mode + noise.sample(&mut rng)).clamp(0.0, 1.0)
            })
            .collect();
        let img = GrayImage::new(16, 16, pixels).unwrap();
        let b = binarize(&img);
        assert!(b.threshold > 0.2 && b.threshold < 0.8, "{}", b.threshold);

        // brute force: every threshold, recomputing class statistics from raw pixels
        let mut best = 0.0f64;
        for t in 1..256usize {
            let (mut c0, mut c1) = (Vec::new(), Vec::new());
            for &p in img.pixels() {
                let k = (p * 255.0).round();
                if (k as usize) < t {
                    c0.push(k)
                } else {
                    c1.push(k)
                }
            }
            if c0.is_empty() || c1.is_empty() {
                continue;
            }
            let n = 256.0;
            let m0 = c0.iter().sum::<f64>() / c0.len() as f64;
            let m1 = c1.iter().sum::<f64>() / c1.len() as f64;
            let v = (c0.len() as f64 / n) * (c1.len() as f64 / n) * (m0 - m1).powi(2);
            best = best.max(v);
        }
        let chosen = between_class_variance(&histogram(&img), b.threshold_bin);
        assert!((chosen - best).abs() <= 1e-9 * best, "{chosen} vs {best}");
    }

    proptest! {
        #[test]
        fn affine_rescale_preserves_partition(
            levels in proptest::collection::vec(0u8..=100, 24),
            scale in 1u8..=2,
            offset in 0u8..=50,
        ) {
            let img = GrayImage::from_u8(6, 4, &levels).unwrap();
            let mapped: Vec<u8> = levels.iter().map(|&k| k * scale + offset).collect();
            let img2 = GrayImage::from_u8(6, 4, &mapped).unwrap();
            let (a, b) = (binarize(&img), binarize(&img2));
            prop_assert_eq!(a.degenerate, b.degenerate);
            prop_assert_eq!(a.image, b.image);
        }
    }
}
