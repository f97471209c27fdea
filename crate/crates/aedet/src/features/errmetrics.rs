//! Classic reconstruction-error metrics between an image and its
//! reconstruction: L2 distance, structural similarity, mean squared error
//! and a perceptual-hash distance.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::Image;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f32 = 1.5;
const SSIM_K1: f32 = 0.01;
const SSIM_K2: f32 = 0.03;
const HASH_SIDE: usize = 8;

/// The four error metrics in order: `[l2, ssim, hash_distance, mse]`.
/// A perfect reconstruction yields `[0, 1, 0, 0]`.
pub fn err_metrics(original: &Image, reconstruction: &Image) -> Result<[f32; 4]> {
    if original.height() != reconstruction.height()
        || original.width() != reconstruction.width()
        || original.channels() != reconstruction.channels()
    {
        return Err(Error::Shape(format!(
            "error metrics need equal shapes, got {}x{}x{} vs {}x{}x{}",
            original.height(),
            original.width(),
            original.channels(),
            reconstruction.height(),
            reconstruction.width(),
            reconstruction.channels()
        )));
    }
    let a = original.to_gray();
    let b = reconstruction.to_gray();
    let sq_sum: f32 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    let l2 = sq_sum.sqrt();
    let mse = sq_sum / a.len() as f32;
    let ssim = ssim_mean(&a, &b)?;
    let hash = hash_distance(&a, &b)?;
    Ok([l2, ssim, hash, mse])
}

fn gaussian_window() -> Array2<f32> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut w = Array2::zeros((SSIM_WINDOW, SSIM_WINDOW));
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = (y as isize - half) as f32;
            let dx = (x as isize - half) as f32;
            w[[y, x]] = (-(dy * dy + dx * dx) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        }
    }
    let sum = w.sum();
    w.mapv_inplace(|v| v / sum);
    w
}

/// Mean Gaussian-weighted SSIM over all positions where the 11x11 window
/// fits, for a dynamic range of 1. Identical inputs score exactly 1.
pub fn ssim_mean(a: &Array2<f32>, b: &Array2<f32>) -> Result<f32> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("ssim shapes differ: {:?} vs {:?}", a.dim(), b.dim())));
    }
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {h}x{w}"
        )));
    }
    let window = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0f64;
    let mut count = 0usize;
    for oy in 0..=(h - SSIM_WINDOW) {
        for ox in 0..=(w - SSIM_WINDOW) {
            let mut mu_a = 0.0f32;
            let mut mu_b = 0.0f32;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let wv = window[[ky, kx]];
                    mu_a += wv * a[[oy + ky, ox + kx]];
                    mu_b += wv * b[[oy + ky, ox + kx]];
                }
            }
            let mut var_a = 0.0f32;
            let mut var_b = 0.0f32;
            let mut cov = 0.0f32;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let wv = window[[ky, kx]];
                    let da = a[[oy + ky, ox + kx]] - mu_a;
                    let db = b[[oy + ky, ox + kx]] - mu_b;
                    var_a += wv * da * da;
                    var_b += wv * db * db;
                    cov += wv * da * db;
                }
            }
            let score = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += score as f64;
            count += 1;
        }
    }
    Ok((total / count as f64) as f32)
}

/// 8x8 average hash of a grayscale image: downsample, threshold at the
/// mean, pack to 64 bits.
pub fn average_hash(gray: &Array2<f32>) -> Result<u64> {
    let img = Image::from_gray(gray.clone())?;
    let small = img.resize_bilinear(HASH_SIDE, HASH_SIDE)?.to_gray();
    let mean = small.sum() / small.len() as f32;
    let mut bits = 0u64;
    for (i, v) in small.iter().enumerate() {
        if *v > mean {
            bits |= 1 << i;
        }
    }
    Ok(bits)
}

/// Hamming distance between the average hashes of two images, counted in
/// bits: 0 for identical hashes up to 64 when every bit differs.
pub fn hash_distance(a: &Array2<f32>, b: &Array2<f32>) -> Result<f32> {
    let ha = average_hash(a)?;
    let hb = average_hash(b)?;
    Ok((ha ^ hb).count_ones() as f32)
}
