//! Robust feature scaling: center on the median, divide by the
//! interquartile range. Far less sensitive to stray outliers than
//! mean/standard-deviation scaling, which matters when the training set
//! is only nominally clean.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension affine transform `(x - median) / iqr` fitted on training
/// features. Dimensions whose interquartile range is zero divide by 1
/// instead, so constant columns are centered but never blow up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    median: Vec<f64>,
    iqr: Vec<f64>,
}

/// Linear-interpolation quantile of already sorted values, the same
/// convention as `numpy.quantile`'s default.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Quantile of an unsorted column view.
pub fn quantile(values: ArrayView1<'_, f64>, q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("quantile of an empty set".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile fraction {q} outside [0, 1]")));
    }
    let mut sorted: Vec<f64> = values.iter().copied().collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(sorted_quantile(&sorted, q))
}

impl RobustScaler {
    /// Fits medians and interquartile ranges column by column.
    pub fn fit(features: &Array2<f64>) -> Result<Self> {
        let (rows, cols) = features.dim();
        if rows < 2 {
            return Err(Error::Domain(format!(
                "robust scaling needs at least 2 samples, got {rows}"
            )));
        }
        let mut median = Vec::with_capacity(cols);
        let mut iqr = Vec::with_capacity(cols);
        for col in features.columns() {
            let mut sorted: Vec<f64> = col.iter().copied().collect();
            sorted.sort_by(|a, b| a.total_cmp(b));
            median.push(sorted_quantile(&sorted, 0.5));
            let q1 = sorted_quantile(&sorted, 0.25);
            let q3 = sorted_quantile(&sorted, 0.75);
            let range = q3 - q1;
            iqr.push(if range == 0.0 { 1.0 } else { range });
        }
        Ok(RobustScaler { median, iqr })
    }

    pub fn dim(&self) -> usize {
        self.median.len()
    }

    /// Applies the fitted transform to a feature matrix.
    pub fn transform(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        let (_, cols) = features.dim();
        if cols != self.dim() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} dimensions applied to {cols}",
                self.dim()
            )));
        }
        let mut out = features.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let m = self.median[j];
            let s = self.iqr[j];
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    /// Applies the fitted transform to a single feature vector.
    pub fn transform_row(&self, row: &Array1<f64>) -> Result<Array1<f64>> {
        if row.len() != self.dim() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} dimensions applied to {}",
                self.dim(),
                row.len()
            )));
        }
        Ok(Array1::from_shape_fn(row.len(), |j| (row[j] - self.median[j]) / self.iqr[j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn textbook_column_has_median_3_iqr_2() {
        let data = array![[1.0], [2.0], [3.0], [4.0], [5.0]];
        let scaler = RobustScaler::fit(&data).unwrap();
        assert_abs_diff_eq!(scaler.median[0], 3.0);
        assert_abs_diff_eq!(scaler.iqr[0], 2.0);
        let scaled = scaler.transform(&data).unwrap();
        assert_abs_diff_eq!(scaled[[2, 0]], 0.0);
        assert_abs_diff_eq!(scaled[[4, 0]], 1.0);
    }

    #[test]
    fn constant_column_centers_without_exploding() {
        let data = array![[7.0, 1.0], [7.0, 2.0], [7.0, 3.0]];
        let scaler = RobustScaler::fit(&data).unwrap();
        let scaled = scaler.transform(&data).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(scaled[[i, 0]], 0.0);
        }
        assert!(scaled.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn fit_data_has_zero_median_after_transform() {
        let data = array![
            [0.3, -2.0, 10.0],
            [1.7, 5.0, 11.0],
            [-0.4, 0.5, 9.0],
            [2.2, 1.5, 14.0],
            [0.9, 3.0, 8.0]
        ];
        let scaler = RobustScaler::fit(&data).unwrap();
        let scaled = scaler.transform(&data).unwrap();
        for col in scaled.columns() {
            let m = quantile(col, 0.5).unwrap();
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn too_few_rows_is_a_domain_error() {
        let data = array![[1.0, 2.0]];
        assert!(matches!(RobustScaler::fit(&data).unwrap_err(), Error::Domain(_)));
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let scaler = RobustScaler::fit(&array![[1.0], [2.0], [3.0]]).unwrap();
        let wide = array![[1.0, 2.0]];
        assert!(matches!(scaler.transform(&wide).unwrap_err(), Error::Shape(_)));
        let row = Array1::zeros(3);
        assert!(matches!(scaler.transform_row(&row).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn quantile_interpolates_linearly() {
        let v = array![10.0, 0.0, 20.0, 30.0];
        assert_abs_diff_eq!(quantile(v.view(), 0.5).unwrap(), 15.0);
        assert_abs_diff_eq!(quantile(v.view(), 0.25).unwrap(), 7.5);
        assert_abs_diff_eq!(quantile(v.view(), 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(quantile(v.view(), 1.0).unwrap(), 30.0);
    }
}
