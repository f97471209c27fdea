//! Isolation forest: anomalies sit in sparse regions, so uniformly random
//! axis-aligned splits isolate them in fewer steps. The score maps the
//! expected isolation depth through `2^(-E[h]/c(psi))`, giving values in
//! (0, 1) where larger means easier to isolate, hence more anomalous.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of trees in the ensemble.
pub const TREE_COUNT: usize = 100;
/// Subsample size per tree (capped by the training set size).
pub const SUBSAMPLE: usize = 256;

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

/// A fitted isolation forest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    dim: usize,
    /// Normalizer `c(psi)` for the subsample size used at fit time.
    normalizer: f64,
}

/// Average unsuccessful-search path length in a binary search tree of
/// `m` points, the standard isolation forest correction term.
fn average_path_length(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = m as f64;
            let harmonic = (n - 1.0).ln() + EULER_MASCHERONI;
            2.0 * harmonic - 2.0 * (n - 1.0) / n
        }
    }
}

fn build_tree(
    data: &Array2<f64>,
    indices: &mut [usize],
    height_limit: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut nodes = Vec::new();
    grow(data, indices, 0, height_limit, rng, &mut nodes);
    Tree { nodes }
}

/// Recursively grows a node over `indices` and returns its position in
/// `nodes`.
fn grow(
    data: &Array2<f64>,
    indices: &mut [usize],
    depth: usize,
    height_limit: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    if indices.len() <= 1 || depth >= height_limit {
        nodes.push(Node::Leaf { size: indices.len() });
        return nodes.len() - 1;
    }
    // Pick a feature with spread; give up and close the leaf when every
    // remaining column is constant.
    let d = data.ncols();
    let feature_order = {
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(rng);
        order
    };
    let mut chosen: Option<(usize, f64, f64)> = None;
    for f in feature_order {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in indices.iter() {
            lo = lo.min(data[[i, f]]);
            hi = hi.max(data[[i, f]]);
        }
        if hi > lo {
            chosen = Some((f, lo, hi));
            break;
        }
    }
    let Some((feature, lo, hi)) = chosen else {
        nodes.push(Node::Leaf { size: indices.len() });
        return nodes.len() - 1;
    };
    let threshold = rng.random_range(lo..hi);
    let split_at = partition(data, indices, feature, threshold);
    // Reserve our slot before growing children so parents precede children.
    let slot = nodes.len();
    nodes.push(Node::Leaf { size: 0 });
    let (left_indices, right_indices) = indices.split_at_mut(split_at);
    let left = grow(data, left_indices, depth + 1, height_limit, rng, nodes);
    let right = grow(data, right_indices, depth + 1, height_limit, rng, nodes);
    nodes[slot] = Node::Split { feature, threshold, left, right };
    slot
}

/// In-place partition of `indices` by `data[i, feature] < threshold`;
/// returns the boundary position.
fn partition(data: &Array2<f64>, indices: &mut [usize], feature: usize, threshold: f64) -> usize {
    let mut boundary = 0;
    for i in 0..indices.len() {
        if data[[indices[i], feature]] < threshold {
            indices.swap(i, boundary);
            boundary += 1;
        }
    }
    boundary
}

impl IsolationForest {
    /// Fits 100 seeded trees, each on a random subsample of at most 256
    /// training rows.
    pub fn fit(features: &Array2<f64>, seed: u64) -> Result<Self> {
        let (n, d) = features.dim();
        if n < 2 {
            return Err(Error::Capacity(format!(
                "isolation forest needs at least 2 samples, got {n}"
            )));
        }
        if d == 0 {
            return Err(Error::Shape("isolation forest on zero-dimensional features".into()));
        }
        let psi = SUBSAMPLE.min(n);
        let height_limit = (psi as f64).log2().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trees = Vec::with_capacity(TREE_COUNT);
        let mut all: Vec<usize> = (0..n).collect();
        for _ in 0..TREE_COUNT {
            all.shuffle(&mut rng);
            let mut sample: Vec<usize> = all[..psi].to_vec();
            trees.push(build_tree(features, &mut sample, height_limit, &mut rng));
        }
        Ok(IsolationForest { trees, dim: d, normalizer: average_path_length(psi) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn path_length(&self, tree: &Tree, row: &Array1<f64>) -> f64 {
        let mut node = 0usize;
        let mut depth = 0.0;
        loop {
            match &tree.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(*size),
                Node::Split { feature, threshold, left, right } => {
                    depth += 1.0;
                    node = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Anomaly score `2^(-E[h]/c(psi))` of one point.
    pub fn score_row(&self, row: &Array1<f64>) -> Result<f64> {
        if row.len() != self.dim {
            return Err(Error::Shape(format!(
                "forest fitted on {} dimensions scored with {}",
                self.dim,
                row.len()
            )));
        }
        let mean_depth: f64 = self
            .trees
            .iter()
            .map(|t| self.path_length(t, row))
            .sum::<f64>()
            / self.trees.len() as f64;
        Ok(2f64.powf(-mean_depth / self.normalizer))
    }

    /// Anomaly score per row.
    pub fn scores(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        features.rows().into_iter().map(|r| self.score_row(&r.to_owned())).collect()
    }
}
