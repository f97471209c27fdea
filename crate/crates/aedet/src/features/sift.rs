//! Scale-space keypoint statistics over the residual image.
//!
//! A reconstruction that misses a defect leaves a blob in the absolute
//! difference image. We run a compact difference-of-Gaussians detector
//! over that residual and summarize the detected keypoints as a fixed
//! six-element vector, so downstream classifiers see "how much localized
//! structure survived reconstruction" rather than raw pixels.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Length of the summary vector produced by [`keypoint_summary`].
pub const SIFT_SUMMARY_LEN: usize = 6;

const BASE_SIGMA: f32 = 1.6;
const SCALES_PER_OCTAVE: usize = 3;
const CONTRAST_THRESHOLD: f32 = 0.015;
const MIN_OCTAVE_SIDE: usize = 16;

/// A detected scale-space extremum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Row in the coordinates of the original image.
    pub y: f32,
    /// Column in the coordinates of the original image.
    pub x: f32,
    /// Effective detection scale (blur sigma times the octave factor).
    pub scale: f32,
    /// Absolute difference-of-Gaussians response at the extremum.
    pub response: f32,
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|d| (-(d * d) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f32 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = i;
    if i < 0 {
        i = -i - 1;
    }
    if i >= len {
        i = 2 * len - 1 - i;
    }
    i.clamp(0, len - 1) as usize
}

fn blur(src: &Array2<f32>, sigma: f32) -> Array2<f32> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = src.dim();
    let mut horizontal = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + ki as isize - radius, w);
                acc += kv * src[[y, sx]];
            }
            horizontal[[y, x]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + ki as isize - radius, h);
                acc += kv * horizontal[[sy, x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

fn downsample(src: &Array2<f32>) -> Array2<f32> {
    let (h, w) = src.dim();
    Array2::from_shape_fn((h / 2, w / 2), |(y, x)| src[[2 * y, 2 * x]])
}

fn is_extremum(dogs: &[Array2<f32>], level: usize, y: usize, x: usize) -> bool {
    let v = dogs[level][[y, x]];
    if v.abs() < CONTRAST_THRESHOLD {
        return false;
    }
    let mut max = true;
    let mut min = true;
    for dog in &dogs[level - 1..=level + 1] {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let ny = (y as isize + dy) as usize;
                let nx = (x as isize + dx) as usize;
                let n = dog[[ny, nx]];
                if std::ptr::eq(dog, &dogs[level]) && dy == 0 && dx == 0 {
                    continue;
                }
                if n >= v {
                    max = false;
                }
                if n <= v {
                    min = false;
                }
                if !max && !min {
                    return false;
                }
            }
        }
    }
    max || min
}

/// Detect difference-of-Gaussians extrema on a grayscale image.
///
/// The pyramid uses octaves of halved resolution down to a minimum side of
/// 16 pixels and three scales per octave; extrema must beat all 26
/// neighbors strictly and clear a fixed contrast threshold.
pub fn detect_keypoints(gray: &Array2<f32>) -> Result<Vec<Keypoint>> {
    let (h, w) = gray.dim();
    if h < MIN_OCTAVE_SIDE || w < MIN_OCTAVE_SIDE {
        return Err(Error::Shape(format!(
            "keypoint detection needs at least {MIN_OCTAVE_SIDE}x{MIN_OCTAVE_SIDE} input, got {h}x{w}"
        )));
    }
    let k = 2f32.powf(1.0 / SCALES_PER_OCTAVE as f32);
    let mut keypoints = Vec::new();
    let mut octave_base = gray.clone();
    let mut octave = 0usize;
    loop {
        let (oh, ow) = octave_base.dim();
        if oh < MIN_OCTAVE_SIDE || ow < MIN_OCTAVE_SIDE {
            break;
        }
        // SCALES_PER_OCTAVE + 3 blur levels give SCALES_PER_OCTAVE + 2
        // difference images, enough to test every interior level.
        let sigmas: Vec<f32> =
            (0..SCALES_PER_OCTAVE + 3).map(|i| BASE_SIGMA * k.powi(i as i32)).collect();
        let blurred: Vec<Array2<f32>> = sigmas.iter().map(|s| blur(&octave_base, *s)).collect();
        let dogs: Vec<Array2<f32>> =
            blurred.windows(2).map(|pair| &pair[1] - &pair[0]).collect();
        let factor = (1usize << octave) as f32;
        for level in 1..dogs.len() - 1 {
            for y in 1..oh - 1 {
                for x in 1..ow - 1 {
                    if is_extremum(&dogs, level, y, x) {
                        keypoints.push(Keypoint {
                            y: y as f32 * factor,
                            x: x as f32 * factor,
                            scale: sigmas[level] * factor,
                            response: dogs[level][[y, x]].abs(),
                        });
                    }
                }
            }
        }
        octave += 1;
        octave_base = downsample(&octave_base);
    }
    Ok(keypoints)
}

/// Summarize keypoints as
/// `[count, mean scale, max scale, mean response, max response, response sum]`.
/// No keypoints at all gives the zero vector.
pub fn summarize_keypoints(keypoints: &[Keypoint]) -> [f32; SIFT_SUMMARY_LEN] {
    if keypoints.is_empty() {
        return [0.0; SIFT_SUMMARY_LEN];
    }
    let n = keypoints.len() as f32;
    let scale_sum: f32 = keypoints.iter().map(|k| k.scale).sum();
    let response_sum: f32 = keypoints.iter().map(|k| k.response).sum();
    let scale_max = keypoints.iter().map(|k| k.scale).fold(0.0f32, f32::max);
    let response_max = keypoints.iter().map(|k| k.response).fold(0.0f32, f32::max);
    [n, scale_sum / n, scale_max, response_sum / n, response_max, response_sum]
}

/// Detect and summarize in one step.
pub fn keypoint_summary(gray: &Array2<f32>) -> Result<[f32; SIFT_SUMMARY_LEN]> {
    Ok(summarize_keypoints(&detect_keypoints(gray)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_image(centers: &[(usize, usize)]) -> Array2<f32> {
        let mut img = Array2::zeros((64, 64));
        for &(cy, cx) in centers {
            for y in 0..64usize {
                for x in 0..64usize {
                    let dy = y as f32 - cy as f32;
                    let dx = x as f32 - cx as f32;
                    let v = (-(dy * dy + dx * dx) / 18.0).exp();
                    img[[y, x]] = f32::max(img[[y, x]], v);
                }
            }
        }
        img
    }

    #[test]
    fn flat_image_has_no_keypoints() {
        let img = Array2::from_elem((64, 64), 0.25);
        assert!(detect_keypoints(&img).unwrap().is_empty());
        assert_eq!(keypoint_summary(&img).unwrap(), [0.0; SIFT_SUMMARY_LEN]);
    }

    #[test]
    fn bright_blob_is_detected_near_its_center() {
        let img = blob_image(&[(32, 32)]);
        let kps = detect_keypoints(&img).unwrap();
        assert!(!kps.is_empty());
        let best = kps
            .iter()
            .max_by(|a, b| a.response.partial_cmp(&b.response).unwrap())
            .unwrap();
        assert!((best.y - 32.0).abs() <= 4.0, "y = {}", best.y);
        assert!((best.x - 32.0).abs() <= 4.0, "x = {}", best.x);
    }

    #[test]
    fn more_blobs_give_more_keypoints() {
        let one = detect_keypoints(&blob_image(&[(20, 20)])).unwrap();
        let three =
            detect_keypoints(&blob_image(&[(16, 16), (16, 48), (48, 32)])).unwrap();
        assert!(three.len() > one.len(), "{} vs {}", three.len(), one.len());
    }

    #[test]
    fn summary_matches_hand_computation() {
        let kps = [
            Keypoint { y: 0.0, x: 0.0, scale: 2.0, response: 0.5 },
            Keypoint { y: 1.0, x: 1.0, scale: 4.0, response: 0.1 },
        ];
        let s = summarize_keypoints(&kps);
        assert_eq!(s, [2.0, 3.0, 4.0, 0.3, 0.5, 0.6]);
    }

    #[test]
    fn small_images_are_rejected() {
        let img = Array2::zeros((8, 8));
        assert!(matches!(detect_keypoints(&img).unwrap_err(), Error::Shape(_)));
    }
}
