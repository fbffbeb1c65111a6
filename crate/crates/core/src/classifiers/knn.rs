use super::Prediction;
use crate::error::{Error, Result};
use crate::types::Label;

/// `sqrt(sum (q_i - p_i)^2)`.
pub fn euclidean(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    Ok(p.iter().zip(q).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt())
}

/// Stored training points with uniform-weight majority voting.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub k: usize,
}

impl KnnModel {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<Label>, k: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyModel);
        }
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                actual: labels.len(),
            });
        }
        let d = points[0].len();
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        if k == 0 || k > points.len() {
            return Err(Error::Config(format!("k = {k} must be in 1..={}", points.len())));
        }
        Ok(KnnModel { points, labels, k })
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        knn_predict(self, x)
    }

    /// Indices of the `k` nearest points, ordered by `(distance, index)`.
    fn nearest(&self, x: &[f64], k: usize) -> Result<Vec<(f64, usize)>> {
        if self.points.is_empty() {
            return Err(Error::EmptyModel);
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if k == 0 || k > self.points.len() {
            return Err(Error::Config(format!("k = {k} must be in 1..={}", self.points.len())));
        }
        // bounded insertion list; strict `<` keeps the earlier index on equal distance
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, p) in self.points.iter().enumerate() {
            let d = euclidean(p, x)?;
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        Ok(best)
    }

    fn vote(&self, neighbours: &[(f64, usize)]) -> Prediction {
        let k = neighbours.len();
        let characters = neighbours
            .iter()
            .filter(|&&(_, i)| self.labels[i] == Label::Character)
            .count();
        let rejects = k - characters;
        // vote ties go to reject
        let (label, votes) = if characters > rejects {
            (Label::Character, characters)
        } else {
            (Label::Reject, rejects)
        };
        let fraction = votes as f64 / k as f64;
        Prediction::new(label, fraction, fraction)
    }
}

pub fn knn_predict(model: &KnnModel, x: &[f64]) -> Result<Prediction> {
    let neighbours = model.nearest(x, model.k)?;
    Ok(model.vote(&neighbours))
}

/// Validation accuracy per `k` and the best `k` (smaller wins ties).
#[derive(Debug, Clone, PartialEq)]
pub struct KSweep {
    pub table: Vec<(usize, f64)>,
    pub best_k: usize,
    pub best_accuracy: f64,
}

impl KSweep {
    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.table.iter().find(|&&(kk, _)| kk == k).map(|&(_, a)| a)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,accuracy\n");
        for (k, a) in &self.table {
            out.push_str(&format!("{k},{a}\n"));
        }
        out
    }
}

/// Evaluates every `k` on held-out data, sharing one neighbour ranking per query.
pub fn knn_sweep(
    train_points: Vec<Vec<f64>>,
    train_labels: Vec<Label>,
    validation: &[(Vec<f64>, Label)],
    k_values: &[usize],
) -> Result<KSweep> {
    if k_values.is_empty() || validation.is_empty() {
        return Err(Error::InsufficientData(
            "k sweep needs k values and validation data".into(),
        ));
    }
    if let Some(&even) = k_values.iter().find(|&&k| k % 2 == 0) {
        return Err(Error::Config(format!("k sweep values must be odd, got {even}")));
    }
    let max_k = *k_values.iter().max().expect("non-empty");
    let model = KnnModel::new(train_points, train_labels, max_k)?;
    let mut correct = vec![0usize; k_values.len()];
    for (x, truth) in validation {
        let ranked = model.nearest(x, max_k)?;
        for (slot, &k) in k_values.iter().enumerate() {
            if model.vote(&ranked[..k]).label == *truth {
                correct[slot] += 1;
            }
        }
    }
    let table: Vec<(usize, f64)> = k_values
        .iter()
        .zip(&correct)
        .map(|(&k, &c)| (k, c as f64 / validation.len() as f64))
        .collect();
    let (best_k, best_accuracy) = table.iter().copied().fold((0, f64::NEG_INFINITY), |(bk, ba), (k, a)| {
        if a > ba || (a == ba && k < bk) {
            (k, a)
        } else {
            (bk, ba)
        }
    });
    Ok(KSweep {
        table,
        best_k,
        best_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pythagorean_triple() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(euclidean(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn euclidean_matches_component_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut acc = 0.0;
        for i in 0..10 {
            let d = q[i] - p[i];
            acc += d * d;
        }
        assert!((euclidean(&p, &q).unwrap() - acc.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exact_match_with_k1() {
        let m = KnnModel::new(
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            vec![Label::Reject, Label::Character],
            1,
        )
        .unwrap();
        let p = m.predict(&[1.0, 1.0]).unwrap();
        assert_eq!((p.label, p.confidence), (Label::Character, 1.0));
    }

    #[test]
    fn majority_of_three() {
        let m = KnnModel::new(
            vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0]],
            vec![Label::Character, Label::Character, Label::Reject, Label::Reject],
            3,
        )
        .unwrap();
        let p = m.predict(&[0.0]).unwrap();
        assert_eq!(p.label, Label::Character);
        assert!((p.confidence - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn even_vote_tie_goes_to_reject() {
        let m = KnnModel::new(vec![vec![0.0], vec![1.0]], vec![Label::Character, Label::Reject], 2).unwrap();
        let p = m.predict(&[0.5]).unwrap();
        assert_eq!((p.label, p.confidence), (Label::Reject, 0.5));
    }

    #[test]
    fn equal_distance_prefers_lower_index() {
        let m = KnnModel::new(vec![vec![-1.0], vec![1.0]], vec![Label::Character, Label::Reject], 1).unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap().label, Label::Character);
    }

    #[test]
    fn invalid_k() {
        assert!(KnnModel::new(vec![vec![0.0]], vec![Label::Reject], 2).is_err());
        assert!(matches!(KnnModel::new(vec![], vec![], 1), Err(Error::EmptyModel)));
    }

    #[test]
    fn sweep_on_training_data_memorizes() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 1.3]).collect();
        let labels: Vec<Label> = (0..9).map(|i| Label::from_bit((i % 2) as u8)).collect();
        let val: Vec<_> = pts.iter().cloned().zip(labels.iter().copied()).collect();
        let sweep = knn_sweep(pts, labels, &val, &[1, 3]).unwrap();
        assert_eq!(sweep.accuracy_at(1), Some(1.0));
        assert_eq!(sweep.best_k, 1);
    }

    #[test]
    fn sweep_rejects_even_k() {
        let val = vec![(vec![0.0], Label::Reject)];
        assert!(knn_sweep(vec![vec![0.0], vec![1.0]], vec![Label::Reject; 2], &val, &[2]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let labels: Vec<Label> = (0..30).map(|_| Label::from_bit(rng.random_range(0..2))).collect();
            let mut perm: Vec<usize> = (0..30).collect();
            for i in (1..30).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let a = KnnModel::new(pts.clone(), labels.clone(), 5).unwrap();
            let b = KnnModel::new(
                perm.iter().map(|&i| pts[i].clone()).collect(),
                perm.iter().map(|&i| labels[i]).collect(),
                5,
            ).unwrap();
            for _ in 0..10 {
                let q: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
                prop_assert_eq!(a.predict(&q).unwrap(), b.predict(&q).unwrap());
            }
        }
    }
}
