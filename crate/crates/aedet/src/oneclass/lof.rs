//! Local outlier factor in novelty mode: the training points form the
//! fixed reference set, and queries are scored by how much sparser their
//! neighborhood is than the neighborhoods of their neighbors. Scores
//! hover around 1 for inliers and grow with isolation.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default neighbor count.
pub const DEFAULT_K: usize = 20;

/// Stabilizer added to the mean reachability distance before inversion so
/// duplicated points cannot produce a non-finite density.
const LRD_STABILIZER: f64 = 1e-10;

/// A fitted local outlier factor model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalOutlierFactor {
    points: Array2<f64>,
    k: usize,
    /// Distance to the k-th nearest other training point, per point.
    k_distance: Vec<f64>,
    /// Local reachability density, per training point.
    lrd: Vec<f64>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Indices and distances of the `k` nearest rows of `points` to `query`,
/// skipping `exclude` (a training point's own index, or `usize::MAX` for
/// external queries). Ties resolve toward the lower index.
fn k_nearest(
    points: &Array2<f64>,
    query: &[f64],
    exclude: usize,
    k: usize,
) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i != exclude)
        .map(|(i, row)| (i, euclidean(row.as_slice().expect("contiguous"), query)))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

impl LocalOutlierFactor {
    /// Fits on training rows; requires strictly more rows than neighbors.
    pub fn fit(features: &Array2<f64>, k: usize) -> Result<Self> {
        let (n, d) = features.dim();
        if k == 0 {
            return Err(Error::Domain("lof needs at least 1 neighbor".into()));
        }
        if n <= k {
            return Err(Error::Capacity(format!(
                "lof with k={k} needs more than {k} samples, got {n}"
            )));
        }
        if d == 0 {
            return Err(Error::Shape("lof on zero-dimensional features".into()));
        }
        let rows: Vec<Vec<f64>> = features.rows().into_iter().map(|r| r.to_vec()).collect();
        let neighborhoods: Vec<Vec<(usize, f64)>> =
            (0..n).map(|i| k_nearest(features, &rows[i], i, k)).collect();
        let k_distance: Vec<f64> = neighborhoods.iter().map(|nb| nb[k - 1].1).collect();
        let lrd: Vec<f64> = (0..n)
            .map(|i| {
                let mean_reach: f64 = neighborhoods[i]
                    .iter()
                    .map(|&(j, dist)| dist.max(k_distance[j]))
                    .sum::<f64>()
                    / k as f64;
                1.0 / (mean_reach + LRD_STABILIZER)
            })
            .collect();
        Ok(LocalOutlierFactor { points: features.clone(), k, k_distance, lrd })
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// LOF of a query point against the training reference set.
    pub fn score_row(&self, row: &Array1<f64>) -> Result<f64> {
        if row.len() != self.dim() {
            return Err(Error::Shape(format!(
                "lof fitted on {} dimensions scored with {}",
                self.dim(),
                row.len()
            )));
        }
        let query = row.as_slice().expect("contiguous row");
        let neighbors = k_nearest(&self.points, query, usize::MAX, self.k);
        let mean_reach: f64 = neighbors
            .iter()
            .map(|&(j, dist)| dist.max(self.k_distance[j]))
            .sum::<f64>()
            / self.k as f64;
        let lrd_query = 1.0 / (mean_reach + LRD_STABILIZER);
        let mean_neighbor_lrd: f64 =
            neighbors.iter().map(|&(j, _)| self.lrd[j]).sum::<f64>() / self.k as f64;
        Ok(mean_neighbor_lrd / lrd_query)
    }

    /// LOF per row.
    pub fn scores(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        features.rows().into_iter().map(|r| self.score_row(&r.to_owned())).collect()
    }
}
