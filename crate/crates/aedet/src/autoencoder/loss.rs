//! Reconstruction loss and the per-term loss report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Loss terms of one training step. `total` is the optimized quantity;
/// cores without a given regularizer report it as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f32,
    pub reconstruction: f32,
    pub kl: f32,
    pub codebook: f32,
    pub commitment: f32,
}

/// Mean squared error over every element, together with its gradient
/// `2 (pred - target) / n`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n = pred.len() as f32;
    let diff = pred - target;
    let loss = diff.iter().map(|v| v * v).sum::<f32>() / n;
    let grad = diff.mapv(|v| 2.0 * v / n);
    Ok((loss, grad))
}
