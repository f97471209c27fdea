//! Elliptic envelope scoring: fit a Gaussian to the training cloud and
//! score queries by their Mahalanobis distance from its center.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shrinkage factor applied when the sample covariance is not positive
/// definite; escalated tenfold until the factorization succeeds.
const BASE_SHRINKAGE: f64 = 1e-3;

/// Gaussian envelope around the training data. Scores are Mahalanobis
/// distances, so they grow with atypicality and are 0 at the center.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "CovarianceParts", into = "CovarianceParts")]
pub struct RobustCovariance {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    /// Lower Cholesky factor of the (possibly shrunk) covariance; derived,
    /// never persisted.
    factor: Array2<f64>,
}

/// The persisted view: just the moments, the factorization is re-derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CovarianceParts {
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

impl From<RobustCovariance> for CovarianceParts {
    fn from(rc: RobustCovariance) -> Self {
        CovarianceParts {
            mean: rc.mean.to_vec(),
            covariance: rc.covariance.iter().copied().collect(),
        }
    }
}

impl From<CovarianceParts> for RobustCovariance {
    fn from(parts: CovarianceParts) -> Self {
        let d = parts.mean.len();
        let mean = Array1::from_vec(parts.mean);
        let covariance = Array2::from_shape_vec((d, d), parts.covariance)
            .unwrap_or_else(|_| Array2::eye(d));
        let factor = factorize_with_shrinkage(&covariance);
        RobustCovariance { mean, covariance, factor }
    }
}

/// Cholesky-factorizes `cov`, blending in a scaled identity with
/// escalating weight whenever the matrix is not positive definite. The
/// final fallback (weight 1) is diagonal and always succeeds.
fn factorize_with_shrinkage(cov: &Array2<f64>) -> Array2<f64> {
    let d = cov.nrows();
    let trace: f64 = (0..d).map(|i| cov[[i, i]]).sum();
    let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
    let mut lambda = 0.0;
    loop {
        let attempt = if lambda == 0.0 {
            cov.clone()
        } else {
            let mut a = cov.mapv(|v| v * (1.0 - lambda));
            for i in 0..d {
                a[[i, i]] += lambda * scale;
            }
            a
        };
        let m = nalgebra::DMatrix::from_fn(d, d, |r, c| attempt[[r, c]]);
        if let Some(chol) = nalgebra::Cholesky::new(m) {
            let l = chol.l();
            return Array2::from_shape_fn((d, d), |(r, c)| l[(r, c)]);
        }
        if lambda == 0.0 {
            lambda = BASE_SHRINKAGE;
        } else if lambda >= 1.0 {
            // Pure scaled identity still failed, which only happens for
            // pathological non-finite input; fall back to the identity.
            return Array2::eye(d);
        } else {
            lambda = (lambda * 10.0).min(1.0);
        }
        log::debug!("covariance not positive definite, shrinking with lambda {lambda}");
    }
}

impl RobustCovariance {
    /// Fits the sample mean and unbiased covariance of the training rows.
    pub fn fit(features: &Array2<f64>) -> Result<Self> {
        let (n, d) = features.dim();
        if n < 2 {
            return Err(Error::Capacity(format!(
                "covariance fit needs at least 2 samples, got {n}"
            )));
        }
        if d == 0 {
            return Err(Error::Shape("covariance fit on zero-dimensional features".into()));
        }
        let mean = features.mean_axis(ndarray::Axis(0)).expect("n >= 2");
        let mut covariance = Array2::zeros((d, d));
        for row in features.rows() {
            let centered = &row.to_owned() - &mean;
            for i in 0..d {
                for j in 0..d {
                    covariance[[i, j]] += centered[i] * centered[j];
                }
            }
        }
        covariance.mapv_inplace(|v| v / (n - 1) as f64);
        let factor = factorize_with_shrinkage(&covariance);
        Ok(RobustCovariance { mean, covariance, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Mahalanobis distance of a single point from the fitted center.
    pub fn score_row(&self, row: &Array1<f64>) -> Result<f64> {
        if row.len() != self.dim() {
            return Err(Error::Shape(format!(
                "covariance fitted on {} dimensions scored with {}",
                self.dim(),
                row.len()
            )));
        }
        // Solve L y = (x - mean) by forward substitution; the distance is
        // then the Euclidean norm of y.
        let d = self.dim();
        let mut y = Array1::zeros(d);
        for i in 0..d {
            let mut acc = row[i] - self.mean[i];
            for j in 0..i {
                acc -= self.factor[[i, j]] * y[j];
            }
            y[i] = acc / self.factor[[i, i]];
        }
        Ok(y.dot(&y).sqrt())
    }

    /// Mahalanobis distance per row.
    pub fn scores(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        features.rows().into_iter().map(|r| self.score_row(&r.to_owned())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn standard_cloud(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
        })
    }

    #[test]
    fn center_scores_zero_and_unit_offsets_score_their_distance() {
        let data = standard_cloud(4000, 2, 1);
        let rc = RobustCovariance::fit(&data).unwrap();
        let at_mean = rc.score_row(&rc.mean.clone()).unwrap();
        assert_abs_diff_eq!(at_mean, 0.0, epsilon = 1e-9);
        let probe = &rc.mean + &array![3.0, 0.0];
        let s = rc.score_row(&probe).unwrap();
        assert!((s - 3.0).abs() < 0.25, "score {s} should be close to 3");
    }

    #[test]
    fn matches_direct_inverse_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = standard_cloud(120, 3, 3);
        // Correlate the columns so the covariance is not diagonal.
        let data = Array2::from_shape_fn((120, 3), |(i, j)| {
            base[[i, j]] + 0.5 * base[[i, (j + 1) % 3]] + rng.random_range(-0.01..0.01)
        });
        let rc = RobustCovariance::fit(&data).unwrap();
        let m = nalgebra::DMatrix::from_fn(3, 3, |r, c| rc.covariance[[r, c]]);
        let inv = m.try_inverse().unwrap();
        for row in data.rows().into_iter().take(40) {
            let x = row.to_owned();
            let c = nalgebra::DVector::from_fn(3, |i, _| x[i] - rc.mean[i]);
            let direct = (c.transpose() * &inv * &c)[(0, 0)].sqrt();
            let ours = rc.score_row(&x).unwrap();
            assert_abs_diff_eq!(ours, direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn singular_covariance_is_regularized_not_fatal() {
        // Second column is an exact copy of the first: rank deficient.
        let base = standard_cloud(50, 1, 4);
        let data = Array2::from_shape_fn((50, 2), |(i, _)| base[[i, 0]]);
        let rc = RobustCovariance::fit(&data).unwrap();
        let scores = rc.scores(&data).unwrap();
        assert!(scores.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn json_round_trip_preserves_scores() {
        let data = standard_cloud(80, 4, 5);
        let rc = RobustCovariance::fit(&data).unwrap();
        let json = serde_json::to_string(&rc).unwrap();
        let back: RobustCovariance = serde_json::from_str(&json).unwrap();
        let probe = standard_cloud(10, 4, 6);
        assert_eq!(rc.scores(&probe).unwrap(), back.scores(&probe).unwrap());
    }

    #[test]
    fn single_sample_is_a_capacity_error() {
        let data = array![[1.0, 2.0]];
        assert!(matches!(RobustCovariance::fit(&data).unwrap_err(), Error::Capacity(_)));
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let rc = RobustCovariance::fit(&standard_cloud(30, 2, 7)).unwrap();
        let bad = Array1::zeros(5);
        assert!(matches!(rc.score_row(&bad).unwrap_err(), Error::Shape(_)));
    }
}
