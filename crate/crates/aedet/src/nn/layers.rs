//! Batch norm, activations, pooling and upsampling.

use ndarray::{Array1, Axis};

use super::{Layer, Param, Tensor};
use crate::error::{Error, Result};

/// Per-channel batch normalization over `(N, H, W)`.
///
/// Training uses biased batch statistics and updates the running estimates
/// with momentum 0.1; evaluation normalizes with the running estimates.
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f32>,
    pub running_var: Array1<f32>,
    channels: usize,
    momentum: f32,
    eps: f32,
    cache: Option<BnCache>,
}

struct BnCache {
    xhat: Tensor,
    inv_std: Array1<f32>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(ndarray::ArrayD::from_elem(vec![channels], 1.0)),
            beta: Param::new(ndarray::ArrayD::zeros(vec![channels])),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            channels,
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dim();
        if c != self.channels {
            return Err(Error::Shape(format!("batch norm expected {} channels, got {c}", self.channels)));
        }
        let m = (n * h * w) as f32;
        let mut out = x.clone();
        if train {
            let mut inv_std = Array1::zeros(c);
            let mut xhat = x.clone();
            for ci in 0..c {
                let plane = x.index_axis(Axis(1), ci);
                let mean = plane.sum() / m;
                let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / m;
                let is = 1.0 / (var + self.eps).sqrt();
                inv_std[ci] = is;
                self.running_mean[ci] = (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean;
                self.running_var[ci] = (1.0 - self.momentum) * self.running_var[ci] + self.momentum * var;
                let g = self.gamma.value[ci];
                let b = self.beta.value[ci];
                let mut xh = xhat.index_axis_mut(Axis(1), ci);
                xh.mapv_inplace(|v| (v - mean) * is);
                let mut o = out.index_axis_mut(Axis(1), ci);
                o.assign(&xh);
                o.mapv_inplace(|v| g * v + b);
            }
            self.cache = Some(BnCache { xhat, inv_std });
        } else {
            for ci in 0..c {
                let mean = self.running_mean[ci];
                let is = 1.0 / (self.running_var[ci] + self.eps).sqrt();
                let g = self.gamma.value[ci];
                let b = self.beta.value[ci];
                let mut o = out.index_axis_mut(Axis(1), ci);
                o.mapv_inplace(|v| g * (v - mean) * is + b);
            }
        }
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| Error::Contract("batch norm backward without forward".into()))?;
        let (n, c, h, w) = grad.dim();
        let m = (n * h * w) as f32;
        let mut dx = Tensor::zeros((n, c, h, w));
        for ci in 0..c {
            let g_plane = grad.index_axis(Axis(1), ci);
            let xhat_plane = cache.xhat.index_axis(Axis(1), ci);
            let dbeta: f32 = g_plane.sum();
            let dgamma: f32 = g_plane.iter().zip(xhat_plane.iter()).map(|(g, xh)| g * xh).sum();
            self.gamma.grad[ci] += dgamma;
            self.beta.grad[ci] += dbeta;
            let scale = self.gamma.value[ci] * cache.inv_std[ci];
            let mean_g = dbeta / m;
            let mean_gx = dgamma / m;
            let mut dxi = dx.index_axis_mut(Axis(1), ci);
            for ((d, g), xh) in dxi.iter_mut().zip(g_plane.iter()).zip(xhat_plane.iter()) {
                *d = scale * (g - mean_g - xh * mean_gx);
            }
        }
        Ok(dx)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn state(&self) -> Vec<ndarray::ArrayD<f32>> {
        vec![self.running_mean.clone().into_dyn(), self.running_var.clone().into_dyn()]
    }

    fn set_state(&mut self, state: &[ndarray::ArrayD<f32>]) -> Result<()> {
        let bad = || Error::Contract(format!("batch norm ({} channels) given malformed state", self.channels));
        if state.len() != 2 {
            return Err(bad());
        }
        let mean = state[0].clone().into_dimensionality::<ndarray::Ix1>().map_err(|_| bad())?;
        let var = state[1].clone().into_dimensionality::<ndarray::Ix1>().map_err(|_| bad())?;
        if mean.len() != self.channels || var.len() != self.channels {
            return Err(bad());
        }
        self.running_mean = mean;
        self.running_var = var;
        Ok(())
    }

    fn out_shape(&self, in_shape: (usize, usize, usize)) -> (usize, usize, usize) {
        in_shape
    }

    fn describe(&self) -> String {
        format!("BatchNorm ({} channels)", self.channels)
    }
}

/// Elementwise activation functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    /// Slope 0.3 on the negative side.
    LeakyRelu,
    Sigmoid,
}

pub struct Activation {
    kind: ActivationKind,
    /// Cached forward output (sigmoid) or input (relu family).
    cache: Option<Tensor>,
}

const LEAKY_SLOPE: f32 = 0.3;

impl Activation {
    pub fn new(kind: ActivationKind) -> Self {
        Activation { kind, cache: None }
    }
}

impl Layer for Activation {
    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let out = match self.kind {
            ActivationKind::Relu => x.mapv(|v| v.max(0.0)),
            ActivationKind::LeakyRelu => x.mapv(|v| if v >= 0.0 { v } else { LEAKY_SLOPE * v }),
            ActivationKind::Sigmoid => x.mapv(|v| 1.0 / (1.0 + (-v).exp())),
        };
        if train {
            self.cache = Some(match self.kind {
                ActivationKind::Sigmoid => out.clone(),
                _ => x.clone(),
            });
        }
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| Error::Contract("activation backward without forward".into()))?;
        let mut dx = grad.clone();
        match self.kind {
            ActivationKind::Relu => {
                ndarray::Zip::from(&mut dx).and(&cache).for_each(|d, x| {
                    if *x < 0.0 {
                        *d = 0.0;
                    }
                });
            }
            ActivationKind::LeakyRelu => {
                ndarray::Zip::from(&mut dx).and(&cache).for_each(|d, x| {
                    if *x < 0.0 {
                        *d *= LEAKY_SLOPE;
                    }
                });
            }
            ActivationKind::Sigmoid => {
                ndarray::Zip::from(&mut dx).and(&cache).for_each(|d, y| *d *= y * (1.0 - y));
            }
        }
        Ok(dx)
    }

    fn out_shape(&self, in_shape: (usize, usize, usize)) -> (usize, usize, usize) {
        in_shape
    }

    fn describe(&self) -> String {
        match self.kind {
            ActivationKind::Relu => "ReLU".into(),
            ActivationKind::LeakyRelu => format!("LeakyReLU ({LEAKY_SLOPE})"),
            ActivationKind::Sigmoid => "Sigmoid".into(),
        }
    }
}

/// 2x2 max pooling with stride 2. Spatial dims must be even.
pub struct MaxPool2x2 {
    /// Argmax offset (0..4) per output cell.
    cache: Option<(ndarray::Array4<u8>, (usize, usize, usize, usize))>,
}

impl MaxPool2x2 {
    pub fn new() -> Self {
        MaxPool2x2 { cache: None }
    }
}

impl Default for MaxPool2x2 {
    fn default() -> Self {
        Self::new()
    }
}

impl Layer for MaxPool2x2 {
    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dim();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("max pool needs even spatial dims, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros((n, c, oh, ow));
        let mut arg = ndarray::Array4::<u8>::zeros((n, c, oh, ow));
        for ni in 0..n {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f32::NEG_INFINITY;
                        let mut best_k = 0u8;
                        for k in 0..4u8 {
                            let (dy, dx) = ((k / 2) as usize, (k % 2) as usize);
                            let v = x[[ni, ci, oy * 2 + dy, ox * 2 + dx]];
                            if v > best {
                                best = v;
                                best_k = k;
                            }
                        }
                        out[[ni, ci, oy, ox]] = best;
                        arg[[ni, ci, oy, ox]] = best_k;
                    }
                }
            }
        }
        if train {
            self.cache = Some((arg, (n, c, h, w)));
        }
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (arg, (n, c, h, w)) = self.cache.take().ok_or_else(|| Error::Contract("max pool backward without forward".into()))?;
        let (oh, ow) = (h / 2, w / 2);
        let mut dx = Tensor::zeros((n, c, h, w));
        for ni in 0..n {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let k = arg[[ni, ci, oy, ox]];
                        let (dy, dxo) = ((k / 2) as usize, (k % 2) as usize);
                        dx[[ni, ci, oy * 2 + dy, ox * 2 + dxo]] += grad[[ni, ci, oy, ox]];
                    }
                }
            }
        }
        Ok(dx)
    }

    fn out_shape(&self, in_shape: (usize, usize, usize)) -> (usize, usize, usize) {
        (in_shape.0, in_shape.1 / 2, in_shape.2 / 2)
    }

    fn describe(&self) -> String {
        "MaxPool 2x2".into()
    }
}

/// Nearest-neighbor 2x upsampling.
pub struct UpsampleNearest2x {
    in_dim: Option<(usize, usize, usize, usize)>,
}

impl UpsampleNearest2x {
    pub fn new() -> Self {
        UpsampleNearest2x { in_dim: None }
    }
}

impl Default for UpsampleNearest2x {
    fn default() -> Self {
        Self::new()
    }
}

impl Layer for UpsampleNearest2x {
    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dim();
        let mut out = Tensor::zeros((n, c, h * 2, w * 2));
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h * 2 {
                    for xx in 0..w * 2 {
                        out[[ni, ci, y, xx]] = x[[ni, ci, y / 2, xx / 2]];
                    }
                }
            }
        }
        if train {
            self.in_dim = Some((n, c, h, w));
        }
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = self.in_dim.take().ok_or_else(|| Error::Contract("upsample backward without forward".into()))?;
        let mut dx = Tensor::zeros((n, c, h, w));
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h * 2 {
                    for xx in 0..w * 2 {
                        dx[[ni, ci, y / 2, xx / 2]] += grad[[ni, ci, y, xx]];
                    }
                }
            }
        }
        Ok(dx)
    }

    fn out_shape(&self, in_shape: (usize, usize, usize)) -> (usize, usize, usize) {
        (in_shape.0, in_shape.1 * 2, in_shape.2 * 2)
    }

    fn describe(&self) -> String {
        "Upsample 2x".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;

    #[test]
    fn batch_norm_normalizes_in_train_mode() {
        let mut bn = BatchNorm2d::new(2);
        let x = gradcheck::random_input((4, 2, 5, 5), 7);
        let y = bn.forward(&x, true).unwrap();
        for ci in 0..2 {
            let plane = y.index_axis(Axis(1), ci);
            let m = plane.sum() / plane.len() as f32;
            let v = plane.iter().map(|a| (a - m) * (a - m)).sum::<f32>() / plane.len() as f32;
            assert!(m.abs() < 1e-4, "mean {m}");
            assert!((v - 1.0).abs() < 1e-2, "var {v}");
        }
    }

    #[test]
    fn batch_norm_eval_uses_running_stats() {
        let mut bn = BatchNorm2d::new(1);
        let x = gradcheck::random_input((8, 1, 4, 4), 9);
        for _ in 0..200 {
            bn.forward(&x, true).unwrap();
            bn.cache = None;
        }
        let y = bn.forward(&x, false).unwrap();
        // After converging running stats on a fixed batch, eval output is
        // close to the train-mode normalization.
        let m = y.sum() / y.len() as f32;
        assert!(m.abs() < 0.05, "eval mean {m}");
    }

    #[test]
    fn batch_norm_gradients() {
        let mut bn = BatchNorm2d::new(2);
        let x = gradcheck::random_input((3, 2, 4, 4), 13);
        gradcheck::check_layer(&mut bn, &x, true, 2e-2);
    }

    #[test]
    fn activation_gradients() {
        for kind in [ActivationKind::Relu, ActivationKind::LeakyRelu, ActivationKind::Sigmoid] {
            let mut act = Activation::new(kind);
            // Values bounded away from the relu kink at zero.
            let x = gradcheck::random_input_margin((2, 3, 4, 4), 17, 0.05);
            gradcheck::check_layer(&mut act, &x, true, 2e-2);
        }
    }

    #[test]
    fn leaky_relu_negative_slope() {
        let mut act = Activation::new(ActivationKind::LeakyRelu);
        let mut x = Tensor::zeros((1, 1, 1, 2));
        x[[0, 0, 0, 0]] = -1.0;
        x[[0, 0, 0, 1]] = 2.0;
        let y = act.forward(&x, false).unwrap();
        assert!((y[[0, 0, 0, 0]] + 0.3).abs() < 1e-6);
        assert!((y[[0, 0, 0, 1]] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn max_pool_takes_block_maxima_and_routes_gradient() {
        let mut pool = MaxPool2x2::new();
        let mut x = Tensor::zeros((1, 1, 2, 2));
        x[[0, 0, 0, 0]] = 1.0;
        x[[0, 0, 0, 1]] = 3.0;
        x[[0, 0, 1, 0]] = 2.0;
        x[[0, 0, 1, 1]] = 0.0;
        let y = pool.forward(&x, true).unwrap();
        assert_eq!(y.dim(), (1, 1, 1, 1));
        assert_eq!(y[[0, 0, 0, 0]], 3.0);
        let mut g = Tensor::zeros((1, 1, 1, 1));
        g[[0, 0, 0, 0]] = 5.0;
        let dx = pool.backward(&g).unwrap();
        assert_eq!(dx[[0, 0, 0, 1]], 5.0);
        assert_eq!(dx.sum(), 5.0);
    }

    #[test]
    fn max_pool_rejects_odd_dims() {
        let mut pool = MaxPool2x2::new();
        assert!(pool.forward(&Tensor::zeros((1, 1, 3, 4)), false).is_err());
    }

    #[test]
    fn upsample_repeats_and_backward_sums() {
        let mut up = UpsampleNearest2x::new();
        let mut x = Tensor::zeros((1, 1, 1, 2));
        x[[0, 0, 0, 0]] = 1.0;
        x[[0, 0, 0, 1]] = 2.0;
        let y = up.forward(&x, true).unwrap();
        assert_eq!(y.dim(), (1, 1, 2, 4));
        assert_eq!(y[[0, 0, 1, 1]], 1.0);
        assert_eq!(y[[0, 0, 0, 2]], 2.0);
        let g = Tensor::ones((1, 1, 2, 4));
        let dx = up.backward(&g).unwrap();
        assert_eq!(dx[[0, 0, 0, 0]], 4.0);
        assert_eq!(dx[[0, 0, 0, 1]], 4.0);
    }

    #[test]
    fn pool_and_upsample_gradients() {
        let mut pool = MaxPool2x2::new();
        // Well-separated values keep the argmax stable under perturbation.
        let x = gradcheck::random_input_margin((2, 2, 4, 6), 23, 0.05);
        gradcheck::check_layer(&mut pool, &x, true, 2e-2);
        let mut up = UpsampleNearest2x::new();
        let x = gradcheck::random_input((2, 2, 3, 3), 29);
        gradcheck::check_layer(&mut up, &x, true, 2e-2);
    }
}
