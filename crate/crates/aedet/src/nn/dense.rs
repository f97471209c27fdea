//! Fully-connected layer on `(batch, features)` matrices.

use ndarray::{Array2, Axis, Ix1, Ix2};
use rand::Rng;

use super::{glorot_uniform, Param};
use crate::error::{Error, Result};

pub struct Dense {
    pub w: Param,
    pub b: Param,
    in_dim: usize,
    out_dim: usize,
    cache_x: Option<Array2<f32>>,
}

impl Dense {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Dense {
            w: Param::new(glorot_uniform(&[out_dim, in_dim], in_dim, out_dim, rng)),
            b: Param::new(ndarray::ArrayD::zeros(vec![out_dim])),
            in_dim,
            out_dim,
            cache_x: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&mut self, x: &Array2<f32>, train: bool) -> Result<Array2<f32>> {
        if x.dim().1 != self.in_dim {
            return Err(Error::Shape(format!(
                "dense expected {} input features, got {}",
                self.in_dim,
                x.dim().1
            )));
        }
        let w = self.w.value.view().into_dimensionality::<Ix2>().expect("2d weights");
        let mut out = x.dot(&w.t());
        let b = self.b.value.view().into_dimensionality::<Ix1>().expect("1d bias");
        out += &b;
        if train {
            self.cache_x = Some(x.clone());
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Array2<f32>) -> Result<Array2<f32>> {
        let x = self.cache_x.take().ok_or_else(|| Error::Contract("dense backward without forward".into()))?;
        let w = self.w.value.view().into_dimensionality::<Ix2>().expect("2d weights");
        let dx = grad.dot(&w);
        let dw = grad.t().dot(&x);
        {
            let mut wg = self.w.grad.view_mut().into_dimensionality::<Ix2>().expect("2d");
            wg += &dw;
            let mut bg = self.b.grad.view_mut().into_dimensionality::<Ix1>().expect("1d");
            bg += &grad.sum_axis(Axis(0));
        }
        Ok(dx)
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn describe(&self) -> String {
        format!("Dense {} -> {}", self.in_dim, self.out_dim)
    }
}
