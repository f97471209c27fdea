//! Minimal neural-network engine: the layers the autoencoder cores need,
//! with hand-written forward and backward passes.
//!
//! Tensors are `(batch, channels, height, width)` arrays of `f32`. Batch
//! members are independent in every layer except batch norm, so the conv
//! kernels fan each sample out through [`crate::exec`]; gradients are
//! reduced sequentially in batch order afterwards, which keeps training
//! bit-for-bit reproducible regardless of thread count.

mod adam;
mod conv;
mod dense;
mod layers;
mod vq;

pub use adam::Adam;
pub use conv::{same_padding, Conv2d, ConvTranspose2d};
pub use dense::Dense;
pub use layers::{Activation, ActivationKind, BatchNorm2d, MaxPool2x2, UpsampleNearest2x};
pub use vq::{quantize_vectors, VectorQuantizer};

use ndarray::{Array4, ArrayD};
use rand::Rng;

/// Batched activations: `(batch, channels, height, width)`.
pub type Tensor = Array4<f32>;

/// A trainable array together with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
}

impl Param {
    pub fn new(value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Glorot-uniform initialization: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> ArrayD<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
    ArrayD::from_shape_fn(shape.to_vec(), |_| rng.random_range(-limit..=limit))
}

/// One differentiable stage of a conv stack.
///
/// `forward` caches whatever `backward` will need; `backward` consumes the
/// cache, accumulates parameter gradients and returns the input gradient.
pub trait Layer: Send {
    fn forward(&mut self, x: &Tensor, train: bool) -> crate::Result<Tensor>;
    fn backward(&mut self, grad: &Tensor) -> crate::Result<Tensor>;
    fn params(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
    /// Non-trainable state that inference depends on (batch-norm running
    /// statistics). Returned and restored in a fixed per-layer order.
    fn state(&self) -> Vec<ArrayD<f32>> {
        Vec::new()
    }
    /// Restores state captured by [`Layer::state`]; `state` must hold
    /// exactly as many arrays as `state()` returns.
    fn set_state(&mut self, state: &[ArrayD<f32>]) -> crate::Result<()> {
        if state.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Contract(format!(
                "{} holds no state but {} arrays were supplied",
                self.describe(),
                state.len()
            )))
        }
    }
    /// Output `(channels, height, width)` for an input of that shape.
    fn out_shape(&self, in_shape: (usize, usize, usize)) -> (usize, usize, usize);
    /// One-line layer description for plan dumps.
    fn describe(&self) -> String;
}

#[cfg(test)]
pub(crate) mod gradcheck {
    //! Finite-difference gradient checking used by the layer tests.

    use super::*;
    use ndarray::Array4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Scalar loss: weighted sum of the output against fixed random weights.
    pub fn loss_weights(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0f32))
    }

    pub fn random_input(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0f32))
    }

    /// Random input whose values stay at least `margin` away from zero and
    /// from each other, so kinked layers (relu, max pool) stay locally
    /// linear under finite-difference perturbation.
    pub fn random_input_margin(shape: (usize, usize, usize, usize), seed: u64, margin: f32) -> Array4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = 0usize;
        Array4::from_shape_fn(shape, |_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            // A coprime stride makes all values in a neighborhood distinct.
            let spread = ((idx * 37) % 101) as f32 * margin;
            idx += 1;
            sign * (margin + spread + rng.random_range(0.0..margin * 0.2))
        })
    }

    /// Checks `backward`'s input gradient and every parameter gradient of a
    /// layer against central finite differences.
    pub fn check_layer<L: Layer>(layer: &mut L, x: &Tensor, train: bool, tol: f32) {
        let out = layer.forward(x, train).unwrap();
        let w = loss_weights(out.dim(), 91);
        let analytic_dx = layer.backward(&w).unwrap();

        // Input gradient.
        let h = 1e-2f32;
        let mut max_err = 0.0f32;
        for idx in indices_sample(x.len(), 60) {
            let mut xp = x.clone();
            let mut xm = x.clone();
            {
                let sp = xp.as_slice_mut().unwrap();
                sp[idx] += h;
            }
            {
                let sm = xm.as_slice_mut().unwrap();
                sm[idx] -= h;
            }
            let lp = (&layer.forward(&xp, train).unwrap() * &w).sum();
            let lm = (&layer.forward(&xm, train).unwrap() * &w).sum();
            let num = (lp - lm) / (2.0 * h);
            let ana = analytic_dx.as_slice().unwrap()[idx];
            let err = (num - ana).abs() / num.abs().max(ana.abs()).max(1.0);
            max_err = max_err.max(err);
        }
        assert!(max_err < tol, "input gradient mismatch: max rel err {max_err}");

        // Parameter gradients. Clear and recompute so caches match `x`.
        for p in layer.params() {
            p.zero_grad();
        }
        layer.forward(x, train).unwrap();
        layer.backward(&w).unwrap();
        let n_params = layer.params().len();
        for pi in 0..n_params {
            let plen = layer.params()[pi].len();
            for idx in indices_sample(plen, 30) {
                let ana = layer.params()[pi].grad.as_slice().unwrap()[idx];
                let orig = layer.params()[pi].value.as_slice().unwrap()[idx];
                layer.params()[pi].value.as_slice_mut().unwrap()[idx] = orig + h;
                let lp = (&layer.forward(x, train).unwrap() * &w).sum();
                layer.params()[pi].value.as_slice_mut().unwrap()[idx] = orig - h;
                let lm = (&layer.forward(x, train).unwrap() * &w).sum();
                layer.params()[pi].value.as_slice_mut().unwrap()[idx] = orig;
                let num = (lp - lm) / (2.0 * h);
                let err = (num - ana).abs() / num.abs().max(ana.abs()).max(1.0);
                assert!(err < tol, "param {pi} grad mismatch at {idx}: numeric {num}, analytic {ana}");
            }
        }
    }

    /// Up to `count` well-spread indices into a buffer of length `len`.
    pub fn indices_sample(len: usize, count: usize) -> Vec<usize> {
        if len <= count {
            return (0..len).collect();
        }
        (0..count).map(|i| i * len / count).collect()
    }
}
