//! Convolution layers with 'same' padding semantics.
//!
//! Forward passes lower each sample to an im2col matrix and run a single
//! GEMM; backward passes rebuild the column matrix instead of caching it,
//! trading a little compute for a lot of memory. The transposed
//! convolution is implemented as the exact adjoint of the stride-2
//! convolution with the same kernel, which doubles height and width.

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis, Ix1};
use rand::Rng;

use super::{glorot_uniform, Layer, Param, Tensor};
use crate::error::{Error, Result};
use crate::exec;

/// 'same' geometry for one dimension: output size `ceil(input / stride)`,
/// with total padding split so the extra pixel lands after the data.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize, usize) {
    let out = input.div_ceil(stride);
    let needed = ((out - 1) * stride + kernel).saturating_sub(input);
    let before = needed / 2;
    (out, before, needed - before)
}

/// Lowers `(C, H, W)` to a `(C*KH*KW, OH*OW)` column matrix, zero-filling
/// out-of-bounds taps.
fn im2col(
    x: &ArrayView3<f32>,
    kernel: usize,
    stride: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
) -> Array2<f32> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::zeros((c * kernel * kernel, oh * ow));
    for ci in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let mut out_row = cols.row_mut(row);
                let out_slice = out_row.as_slice_mut().expect("row is contiguous");
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pw as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        out_slice[oy * ow + ox] = x[[ci, iy, ix as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters a column matrix back onto `(C, H, W)`.
fn col2im(
    cols: &ArrayView2<f32>,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
) -> Array3<f32> {
    let mut x = Array3::zeros((c, h, w));
    for ci in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let col_row = cols.row(row);
                let col_slice = col_row.as_slice().expect("row is contiguous");
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pw as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        x[[ci, iy, ix as usize]] += col_slice[oy * ow + ox];
                    }
                }
            }
        }
    }
    x
}

/// 2D convolution, 'same' padding, square kernel.
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    cache_x: Option<Tensor>,
}

impl Conv2d {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        assert!(kernel >= 1 && stride >= 1);
        let fan_in = in_ch * kernel * kernel;
        let fan_out = out_ch * kernel * kernel;
        Conv2d {
            w: Param::new(glorot_uniform(&[out_ch, in_ch, kernel, kernel], fan_in, fan_out, rng)),
            b: Param::new(ndarray::ArrayD::zeros(vec![out_ch])),
            in_ch,
            out_ch,
            kernel,
            stride,
            cache_x: None,
        }
    }

    fn w_mat(&self) -> Array2<f32> {
        let f = self.out_ch;
        let ckk = self.in_ch * self.kernel * self.kernel;
        self.w
            .value
            .view()
            .into_shape_with_order((f, ckk))
            .expect("weights are contiguous")
            .to_owned()
    }

    fn forward_sample(&self, x: &ArrayView3<f32>, w_mat: &Array2<f32>, bias: &Array1<f32>) -> Array3<f32> {
        let (_, h, w) = x.dim();
        let (oh, ph, _) = same_padding(h, self.kernel, self.stride);
        let (ow, pw, _) = same_padding(w, self.kernel, self.stride);
        let cols = im2col(x, self.kernel, self.stride, ph, pw, oh, ow);
        let mut out = w_mat.dot(&cols);
        for (mut row, b) in out.axis_iter_mut(Axis(0)).zip(bias.iter()) {
            row += *b;
        }
        out.into_shape_with_order((self.out_ch, oh, ow)).expect("same element count")
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dim();
        if c != self.in_ch {
            return Err(Error::Shape(format!(
                "{} expected {} input channels, got {c}",
                self.describe(),
                self.in_ch
            )));
        }
        let w_mat = self.w_mat();
        let bias = self.b.value.view().into_dimensionality::<Ix1>().expect("bias is 1d").to_owned();
        let samples = exec::map_indices(n, |i| {
            self.forward_sample(&x.index_axis(Axis(0), i), &w_mat, &bias)
        });
        let views: Vec<_> = samples.iter().map(|s| s.view()).collect();
        let out = ndarray::stack(Axis(0), &views).expect("uniform sample shapes");
        if train {
            self.cache_x = Some(x.clone());
        }
        let _ = (h, w);
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.cache_x.take().ok_or_else(|| Error::Contract("conv backward without forward".into()))?;
        let (n, _, h, w) = x.dim();
        let (oh, ph, _) = same_padding(h, self.kernel, self.stride);
        let (ow, pw, _) = same_padding(w, self.kernel, self.stride);
        let w_mat = self.w_mat();
        let f = self.out_ch;
        let ckk = self.in_ch * self.kernel * self.kernel;

        let per_sample = exec::map_indices(n, |i| {
            let xi = x.index_axis(Axis(0), i);
            let gi = grad
                .index_axis(Axis(0), i)
                .into_shape_with_order((f, oh * ow))
                .expect("contiguous grad");
            let cols = im2col(&xi, self.kernel, self.stride, ph, pw, oh, ow);
            let dw = gi.dot(&cols.t());
            let db = gi.sum_axis(Axis(1));
            let dcols = w_mat.t().dot(&gi);
            let dx = col2im(&dcols.view(), self.in_ch, h, w, self.kernel, self.stride, ph, pw, oh, ow);
            (dx, dw, db)
        });

        let mut dx = Tensor::zeros((n, self.in_ch, h, w));
        {
            let mut dw_acc = self.w.grad.view_mut().into_shape_with_order((f, ckk)).expect("contiguous");
            let mut db_acc = self.b.grad.view_mut().into_dimensionality::<Ix1>().expect("1d");
            for (i, (dxi, dwi, dbi)) in per_sample.into_iter().enumerate() {
                dx.index_axis_mut(Axis(0), i).assign(&dxi);
                dw_acc += &dwi;
                db_acc += &dbi;
            }
        }
        Ok(dx)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    fn out_shape(&self, in_shape: (usize, usize, usize)) -> (usize, usize, usize) {
        let (_, h, w) = in_shape;
        (self.out_ch, same_padding(h, self.kernel, self.stride).0, same_padding(w, self.kernel, self.stride).0)
    }

    fn describe(&self) -> String {
        format!("Conv {k}x{k}, {f} filters, stride {s}", k = self.kernel, f = self.out_ch, s = self.stride)
    }
}

/// Transposed 2D convolution with stride 2: output is exactly `2H x 2W`.
///
/// Forward is the adjoint (backward-data pass) of the stride-2 'same'
/// convolution mapping `(out_ch, 2H, 2W)` to `(in_ch, H, W)`; weights are
/// stored in that convolution's `(in_ch, out_ch, K, K)` layout.
pub struct ConvTranspose2d {
    pub w: Param,
    pub b: Param,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    cache_x: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let fan_out = out_ch * kernel * kernel;
        ConvTranspose2d {
            w: Param::new(glorot_uniform(&[in_ch, out_ch, kernel, kernel], fan_in, fan_out, rng)),
            b: Param::new(ndarray::ArrayD::zeros(vec![out_ch])),
            in_ch,
            out_ch,
            kernel,
            cache_x: None,
        }
    }

    fn w_mat(&self) -> Array2<f32> {
        let ckk = self.out_ch * self.kernel * self.kernel;
        self.w
            .value
            .view()
            .into_shape_with_order((self.in_ch, ckk))
            .expect("weights are contiguous")
            .to_owned()
    }
}

impl Layer for ConvTranspose2d {
    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dim();
        if c != self.in_ch {
            return Err(Error::Shape(format!(
                "{} expected {} input channels, got {c}",
                self.describe(),
                self.in_ch
            )));
        }
        let (out_h, out_w) = (2 * h, 2 * w);
        let (_, ph, _) = same_padding(out_h, self.kernel, 2);
        let (_, pw, _) = same_padding(out_w, self.kernel, 2);
        let w_mat = self.w_mat();
        let bias = self.b.value.view().into_dimensionality::<Ix1>().expect("1d").to_owned();

        let samples = exec::map_indices(n, |i| {
            let gi = x
                .index_axis(Axis(0), i)
                .into_shape_with_order((self.in_ch, h * w))
                .expect("contiguous input");
            let dcols = w_mat.t().dot(&gi);
            let mut out =
                col2im(&dcols.view(), self.out_ch, out_h, out_w, self.kernel, 2, ph, pw, h, w);
            for (mut plane, b) in out.axis_iter_mut(Axis(0)).zip(bias.iter()) {
                plane += *b;
            }
            out
        });
        let views: Vec<_> = samples.iter().map(|s| s.view()).collect();
        let out = ndarray::stack(Axis(0), &views).expect("uniform sample shapes");
        if train {
            self.cache_x = Some(x.clone());
        }
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.cache_x.take().ok_or_else(|| Error::Contract("convT backward without forward".into()))?;
        let (n, _, h, w) = x.dim();
        let (out_h, out_w) = (2 * h, 2 * w);
        let (_, ph, _) = same_padding(out_h, self.kernel, 2);
        let (_, pw, _) = same_padding(out_w, self.kernel, 2);
        let w_mat = self.w_mat();
        let ckk = self.out_ch * self.kernel * self.kernel;

        let per_sample = exec::map_indices(n, |i| {
            let gi = grad.index_axis(Axis(0), i);
            // The adjoint conv sees `grad` as its input image.
            let cols = im2col(&gi, self.kernel, 2, ph, pw, h, w);
            let xi = x
                .index_axis(Axis(0), i)
                .into_shape_with_order((self.in_ch, h * w))
                .expect("contiguous input");
            let dw = xi.dot(&cols.t());
            let dx = w_mat
                .dot(&cols)
                .into_shape_with_order((self.in_ch, h, w))
                .expect("same element count");
            let db = gi.sum_axis(Axis(2)).sum_axis(Axis(1));
            (dx, dw, db)
        });

        let mut dx = Tensor::zeros((n, self.in_ch, h, w));
        {
            let mut dw_acc =
                self.w.grad.view_mut().into_shape_with_order((self.in_ch, ckk)).expect("contiguous");
            let mut db_acc = self.b.grad.view_mut().into_dimensionality::<Ix1>().expect("1d");
            for (i, (dxi, dwi, dbi)) in per_sample.into_iter().enumerate() {
                dx.index_axis_mut(Axis(0), i).assign(&dxi);
                dw_acc += &dwi;
                db_acc += &dbi;
            }
        }
        Ok(dx)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    fn out_shape(&self, in_shape: (usize, usize, usize)) -> (usize, usize, usize) {
        (self.out_ch, in_shape.1 * 2, in_shape.2 * 2)
    }

    fn describe(&self) -> String {
        format!("ConvT {k}x{k}, {f} filters, stride 2", k = self.kernel, f = self.out_ch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use ndarray::Ix4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_padding_geometry() {
        assert_eq!(same_padding(128, 3, 2), (64, 0, 1));
        assert_eq!(same_padding(128, 3, 1), (128, 1, 1));
        assert_eq!(same_padding(8, 8, 1), (8, 3, 4));
        assert_eq!(same_padding(16, 4, 2), (8, 1, 1));
    }

    /// Direct nested-loop convolution used as an oracle.
    fn conv_direct(x: &Tensor, w: &ndarray::ArrayD<f32>, b: &[f32], kernel: usize, stride: usize) -> Tensor {
        let (n, c, h, w_in) = x.dim();
        let w4 = w.view().into_dimensionality::<Ix4>().unwrap();
        let f = w4.dim().0;
        let (oh, ph, _) = same_padding(h, kernel, stride);
        let (ow, pw, _) = same_padding(w_in, kernel, stride);
        let mut out = Tensor::zeros((n, f, oh, ow));
        for ni in 0..n {
            for fi in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[fi];
                        for ci in 0..c {
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let iy = (oy * stride + ky) as isize - ph as isize;
                                    let ix = (ox * stride + kx) as isize - pw as isize;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w_in as isize {
                                        acc += x[[ni, ci, iy as usize, ix as usize]]
                                            * w4[[fi, ci, ky, kx]];
                                    }
                                }
                            }
                        }
                        out[[ni, fi, oy, ox]] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (kernel, stride) in [(3, 1), (3, 2), (4, 2), (5, 1)] {
            let mut conv = Conv2d::new(3, 4, kernel, stride, &mut rng);
            let x = gradcheck::random_input((2, 3, 9, 11), 5);
            let got = conv.forward(&x, false).unwrap();
            let b: Vec<f32> = conv.b.value.iter().copied().collect();
            let want = conv_direct(&x, &conv.w.value, &b, kernel, stride);
            assert_eq!(got.dim(), want.dim());
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-4, "conv k{kernel} s{stride}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (kernel, stride) in [(3, 1), (4, 2)] {
            let mut conv = Conv2d::new(2, 3, kernel, stride, &mut rng);
            let x = gradcheck::random_input((2, 2, 6, 8), 11);
            gradcheck::check_layer(&mut conv, &x, true, 2e-2);
        }
    }

    #[test]
    fn conv_transpose_doubles_spatial_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut convt = ConvTranspose2d::new(3, 5, 3, &mut rng);
        let x = gradcheck::random_input((2, 3, 4, 6), 3);
        let y = convt.forward(&x, false).unwrap();
        assert_eq!(y.dim(), (2, 5, 8, 12));
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        // <conv(a), b> must equal <a, convT(b)> when both share weights and
        // biases are zero; this pins the transposed operator exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv2d::new(3, 2, 3, 2, &mut rng);
        conv.b.value.fill(0.0);
        let mut convt = ConvTranspose2d::new(2, 3, 3, &mut rng);
        convt.w.value.assign(&conv.w.value);
        convt.b.value.fill(0.0);

        let a = gradcheck::random_input((1, 3, 8, 8), 21); // conv input
        let b = gradcheck::random_input((1, 2, 4, 4), 22); // convT input
        let conv_a = conv.forward(&a, false).unwrap();
        let convt_b = convt.forward(&b, false).unwrap();
        let lhs: f32 = (&conv_a * &b).sum();
        let rhs: f32 = (&a * &convt_b).sum();
        assert!((lhs - rhs).abs() < 1e-3, "adjoint identity violated: {lhs} vs {rhs}");
    }

    #[test]
    fn conv_transpose_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut convt = ConvTranspose2d::new(2, 3, 3, &mut rng);
        let x = gradcheck::random_input((2, 2, 4, 5), 31);
        gradcheck::check_layer(&mut convt, &x, true, 2e-2);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::new(3, 4, 3, 1, &mut rng);
        let x = Tensor::zeros((1, 2, 8, 8));
        assert!(conv.forward(&x, false).is_err());
    }
}
