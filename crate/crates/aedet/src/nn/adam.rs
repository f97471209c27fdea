//! Adam optimizer.

use ndarray::ArrayD;

use super::Param;

/// Adam with bias correction. Moment buffers are allocated on the first
/// step and indexed positionally, so callers must pass parameters in a
/// stable order.
pub struct Adam {
    pub lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    t: i32,
    m: Vec<ArrayD<f32>>,
    v: Vec<ArrayD<f32>>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
            self.v = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(&mut *m).and(&p.grad).for_each(|m, g| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            });
            ndarray::Zip::from(&mut *v).and(&p.grad).for_each(|v, g| {
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            });
            ndarray::Zip::from(&mut p.value).and(&*m).and(&*v).for_each(|p, m, v| {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            });
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        // f(x) = (x - 3)^2, df/dx = 2(x - 3).
        let mut p = Param::new(ArrayD::zeros(vec![1]));
        let mut adam = Adam::new(0.1);
        for _ in 0..500 {
            let x = p.value[0];
            p.grad[0] = 2.0 * (x - 3.0);
            adam.step(&mut [&mut p]);
        }
        assert!((p.value[0] - 3.0).abs() < 1e-3, "converged to {}", p.value[0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update magnitude is ~lr.
        let mut p = Param::new(ArrayD::zeros(vec![1]));
        let mut adam = Adam::new(0.05);
        p.grad[0] = 7.0;
        adam.step(&mut [&mut p]);
        assert!((p.value[0] + 0.05).abs() < 1e-4, "got {}", p.value[0]);
        assert_eq!(p.grad[0], 0.0, "step should clear gradients");
    }
}
