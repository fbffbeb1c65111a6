use serde::{Deserialize, Serialize};

use super::symmetric_eigen;
use crate::error::{Error, Result};

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Components {
    /// Exactly this many (capped at the input dimension).
    Count(usize),
    /// The fewest whose eigenvalue mass reaches this fraction of the total.
    Variance(f64),
}

impl Default for Components {
    fn default() -> Self {
        Components::Variance(0.95)
    }
}

/// Fitted projection: `components` rows are unit eigenvectors of the sample
/// covariance, ordered by descending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Sum of all eigenvalues, retained or not.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        pca_transform(self, x)
    }

    /// `mean + Wᵀ y`.
    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                actual: y.len(),
            });
        }
        let mut out = self.mean.clone();
        for (row, &coef) in self.components.iter().zip(y) {
            for (o, &w) in out.iter_mut().zip(row) {
                *o += coef * w;
            }
        }
        Ok(out)
    }
}

/// Fits PCA on `data` (one row per sample) using the `1/(n-1)` sample covariance.
pub fn pca_fit(data: &[Vec<f64>], components: Components) -> Result<PcaModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    let d = data[0].len();
    if let Some(bad) = data.iter().find(|row| row.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    if d == 0 {
        return Err(Error::InsufficientData("zero-dimensional data".into()));
    }

    let mut mean = vec![0.0; d];
    for row in data {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // upper triangle, accumulated sample by sample in a fixed order
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for row in data {
        for (c, (&x, &m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let dst = &mut cov[i * d + i..(i + 1) * d];
            for (out, &cj) in dst.iter_mut().zip(&centered[i..]) {
                *out += ci * cj;
            }
        }
    }
    let scale = 1.0 / (n as f64 - 1.0);
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] * scale;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }

    let eig = symmetric_eigen(&cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.values[b].total_cmp(&eig.values[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.values[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();

    let k = match components {
        Components::Count(k) => {
            if k == 0 {
                return Err(Error::Config("PCA component count must be positive".into()));
            }
            k.min(d)
        }
        Components::Variance(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::Config(format!("variance fraction {tau} not in (0, 1]")));
            }
            if total <= 0.0 {
                1
            } else {
                let target = tau * total * (1.0 - 1e-12);
                let mut acc = 0.0;
                let mut k = d;
                for (i, &l) in eigenvalues.iter().enumerate() {
                    acc += l;
                    if acc >= target {
                        k = i + 1;
                        break;
                    }
                }
                k
            }
        }
    };

    let components = order[..k]
        .iter()
        .map(|&i| {
            let mut row = eig.vectors[i].clone();
            // sign convention: largest-magnitude entry positive (first on ties)
            let pivot = row
                .iter()
                .enumerate()
                .fold(0, |best, (j, &x)| if x.abs() > row[best].abs() { j } else { best });
            if row[pivot] < 0.0 {
                row.iter_mut().for_each(|x| *x = -*x);
            }
            row
        })
        .collect();

    Ok(PcaModel {
        mean,
        components,
        eigenvalues: eigenvalues[..k].to_vec(),
        total_variance: total,
    })
}

/// `y = W (x - mean)`.
pub fn pca_transform(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: model.mean.len(),
            actual: x.len(),
        });
    }
    Ok(model
        .components
        .iter()
        .map(|row| {
            row.iter()
                .zip(x.iter().zip(&model.mean))
                .map(|(w, (xi, m))| w * (xi - m))
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collinear() -> Vec<Vec<f64>> {
        vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]
    }

    #[test]
    fn collinear_data() {
        let m = pca_fit(&collinear(), Components::Count(2)).unwrap();
        assert!((m.eigenvalues[0] - 2.0).abs() < 1e-15);
        assert!(m.eigenvalues[1].abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.components[0][0] - h).abs() < 1e-15);
        assert!((m.components[0][1] - h).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_keep_one_component() {
        let data = vec![vec![0.5, 0.1, 0.2]; 4];
        let m = pca_fit(&data, Components::Variance(0.95)).unwrap();
        assert_eq!(m.k(), 1);
        assert!(m.eigenvalues.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            pca_fit(&[vec![1.0]], Components::Count(1)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn ragged_rows() {
        assert!(matches!(
            pca_fit(&[vec![1.0, 2.0], vec![1.0]], Components::Count(1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn transform_of_mean_is_zero() {
        let m = pca_fit(&collinear(), Components::Count(1)).unwrap();
        assert_eq!(m.transform(&[2.0, 2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn identity_basis_is_identity() {
        let m = PcaModel {
            mean: vec![0.0; 3],
            components: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            eigenvalues: vec![1.0; 3],
            total_variance: 3.0,
        };
        assert_eq!(m.transform(&[4.0, -1.0, 2.5]).unwrap(), vec![4.0, -1.0, 2.5]);
    }

    #[test]
    fn projection_along_diagonal() {
        let m = pca_fit(&collinear(), Components::Count(1)).unwrap();
        let y = m.transform(&[4.0, 4.0]).unwrap();
        assert!((y[0] - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn transform_dimension_mismatch() {
        let m = pca_fit(&collinear(), Components::Count(1)).unwrap();
        assert!(m.transform(&[1.0]).is_err());
    }
}
