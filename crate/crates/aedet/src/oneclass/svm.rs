//! One-class support vector machine with an RBF kernel, trained by
//! sequential minimal optimization on the standard dual:
//!
//! minimize (1/2) a' Q a  subject to  0 <= a_i <= 1/(nu n),  sum a = 1
//!
//! where Q_ij = K(x_i, x_j). The decision value of a query is
//! sum_i a_i K(x_i, x) - rho; we report rho minus the sum so that larger
//! means more anomalous.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SMO_TOLERANCE: f64 = 1e-6;
const MAX_PASSES: usize = 200;

/// A fitted one-class SVM: retained training vectors with their dual
/// coefficients, the kernel width and the offset `rho`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneClassSvm {
    support_vectors: Array2<f64>,
    alphas: Vec<f64>,
    gamma: f64,
    rho: f64,
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * sq).exp()
}

/// Kernel width analogous to the common "scale" default: `1 / (d * var)`
/// with the variance pooled over every matrix element.
fn scale_gamma(features: &Array2<f64>) -> f64 {
    let n = features.len() as f64;
    let mean = features.sum() / n;
    let var = features.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let d = features.ncols() as f64;
    if var > 1e-12 {
        1.0 / (d * var)
    } else {
        1.0 / d
    }
}

impl OneClassSvm {
    /// Fits on OK-only training rows. `nu` bounds the training outlier
    /// fraction and must lie in (0, 1).
    pub fn fit(features: &Array2<f64>, nu: f64) -> Result<Self> {
        let (n, d) = features.dim();
        if n < 2 {
            return Err(Error::Capacity(format!("svm fit needs at least 2 samples, got {n}")));
        }
        if d == 0 {
            return Err(Error::Shape("svm fit on zero-dimensional features".into()));
        }
        if !(0.0..1.0).contains(&nu) || nu <= 0.0 {
            return Err(Error::Domain(format!("nu must lie in (0, 1), got {nu}")));
        }
        let gamma = scale_gamma(features);
        let upper = 1.0 / (nu * n as f64);

        let rows: Vec<Vec<f64>> = features.rows().into_iter().map(|r| r.to_vec()).collect();
        let kernel = {
            let mut k = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let v = rbf(&rows[i], &rows[j], gamma);
                    k[[i, j]] = v;
                    k[[j, i]] = v;
                }
            }
            k
        };

        // Feasible start: spread the unit budget over the first ceil(1/upper)
        // points, clipping the last one so the sum constraint holds exactly.
        let mut alphas = vec![0.0f64; n];
        let mut budget = 1.0f64;
        for a in alphas.iter_mut() {
            let take = budget.min(upper);
            *a = take;
            budget -= take;
            if budget <= 0.0 {
                break;
            }
        }

        // Gradient of the objective: g_i = (Q a)_i.
        let mut grad: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| kernel[[i, j]] * alphas[j]).sum())
            .collect();

        // Pairwise coordinate descent preserving sum(a) = 1: pick the most
        // violating pair, move weight between them.
        for _ in 0..MAX_PASSES * n {
            let mut up: Option<usize> = None;
            let mut down: Option<usize> = None;
            for i in 0..n {
                if alphas[i] < upper - 1e-12
                    && up.map(|u| grad[i] < grad[u]).unwrap_or(true)
                {
                    up = Some(i);
                }
                if alphas[i] > 1e-12 && down.map(|v| grad[i] > grad[v]).unwrap_or(true) {
                    down = Some(i);
                }
            }
            let (i, j) = match (up, down) {
                (Some(i), Some(j)) if i != j && grad[j] - grad[i] > SMO_TOLERANCE => (i, j),
                _ => break,
            };
            // Optimal unconstrained step along e_i - e_j, then clip to the
            // box: a_i gains delta, a_j loses it.
            let curvature =
                (kernel[[i, i]] + kernel[[j, j]] - 2.0 * kernel[[i, j]]).max(1e-12);
            let mut delta = (grad[j] - grad[i]) / curvature;
            delta = delta.min(upper - alphas[i]).min(alphas[j]);
            if delta <= 0.0 {
                break;
            }
            alphas[i] += delta;
            alphas[j] -= delta;
            for (t, g) in grad.iter_mut().enumerate() {
                *g += delta * (kernel[[i, t]] - kernel[[j, t]]);
            }
        }

        // rho is the decision value at the margin: average (Q a)_i over
        // free support vectors, or over all support vectors as a fallback.
        let free: Vec<usize> = (0..n)
            .filter(|&i| alphas[i] > 1e-9 && alphas[i] < upper - 1e-9)
            .collect();
        let anchor: Vec<usize> = if free.is_empty() {
            (0..n).filter(|&i| alphas[i] > 1e-9).collect()
        } else {
            free
        };
        let rho = anchor.iter().map(|&i| grad[i]).sum::<f64>() / anchor.len() as f64;

        // Keep only the support vectors.
        let kept: Vec<usize> = (0..n).filter(|&i| alphas[i] > 1e-9).collect();
        let mut support_vectors = Array2::zeros((kept.len(), d));
        let mut kept_alphas = Vec::with_capacity(kept.len());
        for (out_row, &i) in kept.iter().enumerate() {
            for c in 0..d {
                support_vectors[[out_row, c]] = rows[i][c];
            }
            kept_alphas.push(alphas[i]);
        }
        Ok(OneClassSvm { support_vectors, alphas: kept_alphas, gamma, rho })
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// Anomaly score of one point: `rho - sum_i a_i K(x_i, x)`. Negative
    /// inside the learned region, positive outside.
    pub fn score_row(&self, row: &Array1<f64>) -> Result<f64> {
        if row.len() != self.dim() {
            return Err(Error::Shape(format!(
                "svm fitted on {} dimensions scored with {}",
                self.dim(),
                row.len()
            )));
        }
        let x = row.as_slice().expect("contiguous row");
        let value: f64 = self
            .support_vectors
            .rows()
            .into_iter()
            .zip(&self.alphas)
            .map(|(sv, a)| a * rbf(sv.as_slice().expect("contiguous"), x, self.gamma))
            .sum();
        Ok(self.rho - value)
    }

    /// Anomaly score per row.
    pub fn scores(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        features.rows().into_iter().map(|r| self.score_row(&r.to_owned())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cluster(n: usize, center: (f64, f64), radius: f64, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, 2), |(_, j)| {
            let c = if j == 0 { center.0 } else { center.1 };
            c + rng.random_range(-radius..radius)
        })
    }

    #[test]
    fn faraway_point_scores_above_every_training_point() {
        let train = cluster(60, (0.0, 0.0), 1.0, 1);
        let svm = OneClassSvm::fit(&train, 0.05).unwrap();
        let train_scores = svm.scores(&train).unwrap();
        let outlier = svm.score_row(&array![10.0, 10.0]).unwrap();
        let max_train = train_scores.iter().cloned().fold(f64::MIN, f64::max);
        assert!(outlier > max_train, "outlier {outlier} vs max train {max_train}");
    }

    #[test]
    fn most_training_points_are_inside_the_region() {
        let train = cluster(100, (2.0, -1.0), 0.8, 2);
        let svm = OneClassSvm::fit(&train, 0.05).unwrap();
        let inside = svm
            .scores(&train)
            .unwrap()
            .iter()
            .filter(|s| **s <= 1e-9)
            .count();
        assert!(inside >= 80, "only {inside} of 100 training points inside");
    }

    #[test]
    fn fitting_is_deterministic() {
        let train = cluster(50, (0.0, 0.0), 1.0, 3);
        let a = OneClassSvm::fit(&train, 0.1).unwrap();
        let b = OneClassSvm::fit(&train, 0.1).unwrap();
        let probe = cluster(10, (0.5, 0.5), 2.0, 4);
        assert_eq!(a.scores(&probe).unwrap(), b.scores(&probe).unwrap());
    }

    #[test]
    fn dual_constraints_hold_after_fit() {
        let train = cluster(40, (0.0, 0.0), 1.0, 5);
        let nu = 0.1;
        let svm = OneClassSvm::fit(&train, nu).unwrap();
        let sum: f64 = svm.alphas.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "alpha sum {sum}");
        let upper = 1.0 / (nu * 40.0) + 1e-12;
        assert!(svm.alphas.iter().all(|a| *a > 0.0 && *a <= upper));
    }

    #[test]
    fn json_round_trip_preserves_scores() {
        let train = cluster(30, (1.0, 1.0), 0.5, 6);
        let svm = OneClassSvm::fit(&train, 0.05).unwrap();
        let back: OneClassSvm = serde_json::from_str(&serde_json::to_string(&svm).unwrap()).unwrap();
        let probe = cluster(5, (1.0, 1.0), 3.0, 7);
        assert_eq!(svm.scores(&probe).unwrap(), back.scores(&probe).unwrap());
    }

    #[test]
    fn invalid_nu_is_a_domain_error() {
        let train = cluster(10, (0.0, 0.0), 1.0, 8);
        assert!(matches!(OneClassSvm::fit(&train, 0.0).unwrap_err(), Error::Domain(_)));
        assert!(matches!(OneClassSvm::fit(&train, 1.0).unwrap_err(), Error::Domain(_)));
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let train = cluster(10, (0.0, 0.0), 1.0, 9);
        let svm = OneClassSvm::fit(&train, 0.1).unwrap();
        assert!(matches!(svm.score_row(&array![1.0]).unwrap_err(), Error::Shape(_)));
    }
}
