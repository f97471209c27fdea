//! Training-time augmentation and denoising corruption.
//!
//! The autoencoder trains on corrupted inputs against clean augmented
//! targets: the same augmented image is used for both, and salt-and-pepper
//! noise is added to the input copy only. Both operations are fully
//! deterministic given their seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Augmentation parameters. Probabilities are in `[0, 1]`; jitter fields
/// are half-widths of the sampled ranges (a brightness of 0.2 shifts by a
/// uniform delta in `[-0.2, 0.2]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub hflip: f64,
    pub vflip: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue rotation half-width as a fraction of a full turn.
    pub hue: f64,
    pub invert: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            hflip: 0.5,
            vflip: 0.5,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
            hue: 0.05,
            invert: 0.1,
        }
    }
}

fn flip_h(img: &mut Image) {
    let (h, w, c) = img.data().dim();
    for y in 0..h {
        for x in 0..w / 2 {
            for ch in 0..c {
                let tmp = img.data()[[y, x, ch]];
                img.data_mut()[[y, x, ch]] = img.data()[[y, w - 1 - x, ch]];
                img.data_mut()[[y, w - 1 - x, ch]] = tmp;
            }
        }
    }
}

fn flip_v(img: &mut Image) {
    let (h, w, c) = img.data().dim();
    for y in 0..h / 2 {
        for x in 0..w {
            for ch in 0..c {
                let tmp = img.data()[[y, x, ch]];
                img.data_mut()[[y, x, ch]] = img.data()[[h - 1 - y, x, ch]];
                img.data_mut()[[h - 1 - y, x, ch]] = tmp;
            }
        }
    }
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta.abs() < 1e-12 {
        0.0
    } else if (max - r).abs() < 1e-12 {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if (max - g).abs() < 1e-12 {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max.abs() < 1e-12 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (r + m, g + m, b + m)
}

/// Applies the augmentation pipeline: horizontal/vertical flip, brightness,
/// contrast, saturation, hue, inversion, then a final clamp to `[0, 1]`.
///
/// Every random decision is drawn from a fresh `ChaCha8` stream seeded with
/// `seed`, and all draws happen regardless of whether a step fires, so the
/// output is a pure function of `(image, policy, seed)`.
pub fn augment(img: &Image, policy: &AugmentPolicy, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let do_hflip = rng.random_bool(policy.hflip.clamp(0.0, 1.0));
    let do_vflip = rng.random_bool(policy.vflip.clamp(0.0, 1.0));
    let brightness = rng.random_range(-policy.brightness..=policy.brightness) as f32;
    let contrast = 1.0 + rng.random_range(-policy.contrast..=policy.contrast) as f32;
    let saturation = 1.0 + rng.random_range(-policy.saturation..=policy.saturation) as f32;
    let hue = rng.random_range(-policy.hue..=policy.hue) as f32;
    let do_invert = rng.random_bool(policy.invert.clamp(0.0, 1.0));

    let mut out = img.clone();
    if do_hflip {
        flip_h(&mut out);
    }
    if do_vflip {
        flip_v(&mut out);
    }
    if brightness != 0.0 {
        out.data_mut().mapv_inplace(|v| v + brightness);
    }
    if (contrast - 1.0).abs() > 0.0 {
        let mean = out.data().mean().unwrap_or(0.0);
        out.data_mut().mapv_inplace(|v| (v - mean) * contrast + mean);
    }
    if out.channels() == 3 {
        let (h, w, _) = out.data().dim();
        for y in 0..h {
            for x in 0..w {
                let r = out.data()[[y, x, 0]];
                let g = out.data()[[y, x, 1]];
                let b = out.data()[[y, x, 2]];
                // Saturation interpolates between the gray value and color.
                let gray = (r + g + b) / 3.0;
                let (mut r, mut g, mut b) = (
                    gray + (r - gray) * saturation,
                    gray + (g - gray) * saturation,
                    gray + (b - gray) * saturation,
                );
                if hue != 0.0 {
                    let (hh, ss, vv) = rgb_to_hsv(r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
                    (r, g, b) = hsv_to_rgb(hh + hue, ss, vv);
                }
                out.data_mut()[[y, x, 0]] = r;
                out.data_mut()[[y, x, 1]] = g;
                out.data_mut()[[y, x, 2]] = b;
            }
        }
    }
    if do_invert {
        out.data_mut().mapv_inplace(|v| 1.0 - v);
    }
    out.clamp01();
    out
}

/// Salt-and-pepper corruption: exactly `round(fraction * pixels)` distinct
/// pixel positions are set to 0 or 1 (fair coin), across all channels of
/// the chosen position. `fraction` must lie in `[0, 1]`.
pub fn add_salt_pepper(img: &Image, fraction: f64, seed: u64) -> Result<Image> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Domain(format!("noise fraction must be in [0, 1], got {fraction}")));
    }
    let (h, w, c) = img.data().dim();
    let total = h * w;
    let count = (fraction * total as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = rand::seq::index::sample(&mut rng, total, count);
    let mut out = img.clone();
    for pos in positions {
        let (y, x) = (pos / w, pos % w);
        let value = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        for ch in 0..c {
            out.data_mut()[[y, x, ch]] = value;
        }
    }
    Ok(out)
}
