//! Vector quantization bottleneck with a straight-through estimator.

use ndarray::{Array2, Array3, ArrayView2, Ix2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Param, Tensor};
use crate::error::{Error, Result};

/// Assigns each row of `vectors` to its nearest codebook row by squared
/// Euclidean distance. Ties keep the lowest index.
pub fn quantize_vectors(codebook: &ArrayView2<f32>, vectors: &ArrayView2<f32>) -> Vec<usize> {
    let (k, d) = codebook.dim();
    assert_eq!(d, vectors.dim().1, "dimension mismatch");
    let cb = codebook.as_standard_layout();
    let cb_slice = cb.as_slice().expect("standard layout");
    vectors
        .outer_iter()
        .map(|v| {
            let vs = v.as_slice().expect("contiguous row");
            let mut best = 0usize;
            let mut best_d = f32::INFINITY;
            for ki in 0..k {
                let row = &cb_slice[ki * d..(ki + 1) * d];
                let mut dist = 0.0f32;
                for (a, b) in vs.iter().zip(row) {
                    let diff = a - b;
                    dist += diff * diff;
                }
                if dist < best_d {
                    best_d = dist;
                    best = ki;
                }
            }
            best
        })
        .collect()
}

struct VqCache {
    ze: Tensor,
    zq: Tensor,
    indices: Array3<usize>,
}

/// Quantizes `(N, D, H, W)` latents against a `(K, D)` codebook.
///
/// Training losses follow the standard formulation: a codebook term
/// `mean((sg[ze] - e)^2)` moving codes toward encoder outputs, and a
/// commitment term `beta * mean((ze - sg[e])^2)` holding encoder outputs
/// near their codes. Both gradients are applied in `backward`, and the
/// reconstruction gradient passes straight through the quantization.
pub struct VectorQuantizer {
    pub codebook: Param,
    pub beta: f32,
    embedding_dim: usize,
    cache: Option<VqCache>,
    pub last_codebook_loss: f32,
    pub last_commitment_loss: f32,
}

impl VectorQuantizer {
    pub fn new<R: Rng>(codebook_size: usize, embedding_dim: usize, beta: f32, rng: &mut R) -> Self {
        let normal = Normal::new(0.0f32, 1.0 / (embedding_dim as f32).sqrt()).expect("valid sigma");
        let codebook = ndarray::ArrayD::from_shape_fn(vec![codebook_size, embedding_dim], |_| normal.sample(rng));
        VectorQuantizer {
            codebook: Param::new(codebook),
            beta,
            embedding_dim,
            cache: None,
            last_codebook_loss: 0.0,
            last_commitment_loss: 0.0,
        }
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook.value.shape()[0]
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    /// Gathers per-position latent vectors into an `(N*H*W, D)` matrix.
    fn gather(ze: &Tensor) -> Array2<f32> {
        let (n, d, h, w) = ze.dim();
        let mut out = Array2::zeros((n * h * w, d));
        for ni in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let row = (ni * h + y) * w + x;
                    for di in 0..d {
                        out[[row, di]] = ze[[ni, di, y, x]];
                    }
                }
            }
        }
        out
    }

    /// Quantizes and returns `(zq, indices)` without touching training state.
    pub fn quantize(&self, ze: &Tensor) -> Result<(Tensor, Array3<usize>)> {
        let (n, d, h, w) = ze.dim();
        if d != self.embedding_dim {
            return Err(Error::Shape(format!(
                "quantizer expected {} channels, got {d}",
                self.embedding_dim
            )));
        }
        let flat = Self::gather(ze);
        let cb = self.codebook.value.view().into_dimensionality::<Ix2>().expect("2d codebook");
        let assignments = quantize_vectors(&cb, &flat.view());
        let mut zq = Tensor::zeros((n, d, h, w));
        let mut indices = Array3::zeros((n, h, w));
        for ni in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let k = assignments[(ni * h + y) * w + x];
                    indices[[ni, y, x]] = k;
                    for di in 0..d {
                        zq[[ni, di, y, x]] = cb[[k, di]];
                    }
                }
            }
        }
        Ok((zq, indices))
    }

    pub fn forward(&mut self, ze: &Tensor, train: bool) -> Result<Tensor> {
        let (zq, indices) = self.quantize(ze)?;
        if train {
            let count = ze.len() as f32;
            let sq: f32 = ze.iter().zip(zq.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            self.last_codebook_loss = sq / count;
            self.last_commitment_loss = self.beta * sq / count;
            self.cache = Some(VqCache { ze: ze.clone(), zq: zq.clone(), indices });
        }
        Ok(zq)
    }

    /// Straight-through backward: the incoming gradient is passed to the
    /// encoder unchanged, plus the commitment gradient; codebook gradients
    /// accumulate from the codebook loss.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| Error::Contract("vq backward without forward".into()))?;
        let (n, d, h, w) = cache.ze.dim();
        let count = cache.ze.len() as f32;
        let mut dze = grad.clone();
        let mut cb_grad = self.codebook.grad.view_mut().into_dimensionality::<Ix2>().expect("2d");
        for ni in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let k = cache.indices[[ni, y, x]];
                    for di in 0..d {
                        let ze_v = cache.ze[[ni, di, y, x]];
                        let zq_v = cache.zq[[ni, di, y, x]];
                        dze[[ni, di, y, x]] += self.beta * 2.0 * (ze_v - zq_v) / count;
                        cb_grad[[k, di]] += 2.0 * (zq_v - ze_v) / count;
                    }
                }
            }
        }
        Ok(dze)
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.codebook]
    }
}
