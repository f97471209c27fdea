//! Synthetic fixture dataset: soft-edged ellipses on a dark background,
//! with small bright blobs as anomalies.
//!
//! OK samples contain only the ellipse; NOK samples carry an extra blob
//! annotated with an `Anomaly` box. The generator is deterministic per
//! seed, so fixtures can be regenerated rather than stored.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotatedImage, BoundingBox, BoxKind};
use crate::error::{Error, Result};
use crate::image::Image;

/// Parameters of the synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub ok_count: usize,
    pub nok_count: usize,
    pub height: usize,
    pub width: usize,
    /// Inclusive range of blob diameters in pixels.
    pub blob_diameter_min: usize,
    pub blob_diameter_max: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            ok_count: 500,
            nok_count: 100,
            height: 128,
            width: 128,
            blob_diameter_min: 8,
            blob_diameter_max: 16,
            seed: 0,
        }
    }
}

const SPECIES: &str = "Synthetica";

fn smoothstep(edge0: f32, edge1: f32, x: f32) -> f32 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

struct EllipseParams {
    cx: f32,
    cy: f32,
    a: f32,
    b: f32,
    theta: f32,
    fg: f32,
}

fn render_ok(h: usize, w: usize, rng: &mut ChaCha8Rng) -> (Image, EllipseParams) {
    let params = EllipseParams {
        cx: w as f32 * rng.random_range(0.42..0.58),
        cy: h as f32 * rng.random_range(0.42..0.58),
        a: w as f32 * rng.random_range(0.22..0.32),
        b: h as f32 * rng.random_range(0.14..0.22),
        theta: rng.random_range(-0.5..0.5f32),
        fg: rng.random_range(0.6..0.75),
    };
    let grad = rng.random_range(0.0..0.05f32);
    let (sin_t, cos_t) = params.theta.sin_cos();
    let mut data = Array3::zeros((h, w, 1));
    for y in 0..h {
        for x in 0..w {
            let bg = 0.12 + grad * x as f32 / w as f32;
            let dx = x as f32 - params.cx;
            let dy = y as f32 - params.cy;
            let u = (dx * cos_t + dy * sin_t) / params.a;
            let v = (-dx * sin_t + dy * cos_t) / params.b;
            let d = u * u + v * v;
            // Inside the ellipse (d < 1) the foreground dominates; the
            // smoothstep gives a soft 10% rim.
            let inside = 1.0 - smoothstep(0.9, 1.1, d);
            let noise = rng.random_range(-0.01..0.01f32);
            data[[y, x, 0]] = (bg + (params.fg - bg) * inside + noise).clamp(0.001, 0.999);
        }
    }
    (Image::new(data).expect("valid synthetic shape"), params)
}

fn ellipse_box(p: &EllipseParams) -> BoundingBox {
    let half_w = (p.a * p.theta.cos().abs() + p.b * p.theta.sin().abs()).abs();
    let half_h = (p.a * p.theta.sin().abs() + p.b * p.theta.cos().abs()).abs();
    BoundingBox {
        kind: BoxKind::SpeciesClean,
        species: Some(SPECIES.into()),
        x: p.cx - half_w,
        y: p.cy - half_h,
        width: 2.0 * half_w,
        height: 2.0 * half_h,
    }
}

fn add_blob(img: &mut Image, rng: &mut ChaCha8Rng, d_min: usize, d_max: usize) -> BoundingBox {
    let (h, w, _) = img.data().dim();
    let diameter = rng.random_range(d_min..=d_max) as f32;
    let r = diameter / 2.0;
    let margin = (r + 2.0).ceil();
    let bx = rng.random_range(margin..w as f32 - margin);
    let by = rng.random_range(margin..h as f32 - margin);
    for y in 0..h {
        for x in 0..w {
            let dist = ((x as f32 - bx).powi(2) + (y as f32 - by).powi(2)).sqrt();
            if dist < r + 1.0 {
                let inside = 1.0 - smoothstep(r - 1.0, r + 1.0, dist);
                let v = img.data()[[y, x, 0]];
                img.data_mut()[[y, x, 0]] = (v + (0.98 - v) * inside).clamp(0.001, 0.999);
            }
        }
    }
    BoundingBox {
        kind: BoxKind::Anomaly,
        species: None,
        x: bx - r - 1.0,
        y: by - r - 1.0,
        width: diameter + 2.0,
        height: diameter + 2.0,
    }
}

/// Generates `ok_count` clean and `nok_count` blob-bearing samples.
pub fn generate(config: &SyntheticConfig) -> Result<Vec<AnnotatedImage>> {
    if config.height < 32 || config.width < 32 {
        return Err(Error::Shape(format!(
            "synthetic images must be at least 32x32, got {}x{}",
            config.height, config.width
        )));
    }
    if config.blob_diameter_min == 0 || config.blob_diameter_min > config.blob_diameter_max {
        return Err(Error::Domain(format!(
            "blob diameter range [{}, {}] is invalid",
            config.blob_diameter_min, config.blob_diameter_max
        )));
    }
    if config.blob_diameter_max + 4 >= config.height.min(config.width) {
        return Err(Error::Domain("blob diameter too large for the image".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.ok_count + config.nok_count);
    for i in 0..config.ok_count {
        let (image, params) = render_ok(config.height, config.width, &mut rng);
        out.push(AnnotatedImage {
            id: format!("ok-{i:05}"),
            path: Default::default(),
            image,
            species: SPECIES.into(),
            boxes: vec![ellipse_box(&params)],
        });
    }
    for i in 0..config.nok_count {
        let (mut image, params) = render_ok(config.height, config.width, &mut rng);
        let blob_box = add_blob(&mut image, &mut rng, config.blob_diameter_min, config.blob_diameter_max);
        out.push(AnnotatedImage {
            id: format!("nok-{i:05}"),
            path: Default::default(),
            image,
            species: SPECIES.into(),
            boxes: vec![ellipse_box(&params), blob_box],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{derive_sample_label, SampleLabel};

    #[test]
    fn generates_requested_counts_with_correct_labels() {
        let cfg = SyntheticConfig { ok_count: 5, nok_count: 3, ..SyntheticConfig::default() };
        let samples = generate(&cfg).unwrap();
        assert_eq!(samples.len(), 8);
        let ok = samples.iter().filter(|s| derive_sample_label(&s.boxes) == SampleLabel::Ok).count();
        assert_eq!(ok, 5);
        assert!(samples.iter().all(|s| s.species == SPECIES));
        assert!(samples.iter().all(|s| s.image.height() == 128 && s.image.width() == 128));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SyntheticConfig { ok_count: 2, nok_count: 2, seed: 3, ..SyntheticConfig::default() };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.boxes, y.boxes);
        }
    }

    #[test]
    fn blob_brightens_the_annotated_region() {
        let cfg = SyntheticConfig { ok_count: 0, nok_count: 1, seed: 1, ..SyntheticConfig::default() };
        let sample = generate(&cfg).unwrap().pop().unwrap();
        let blob = sample.boxes.iter().find(|b| b.kind == BoxKind::Anomaly).unwrap();
        let cx = (blob.x + blob.width / 2.0) as usize;
        let cy = (blob.y + blob.height / 2.0) as usize;
        assert!(sample.image.data()[[cy, cx, 0]] > 0.9, "blob center should be bright");
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(generate(&SyntheticConfig { height: 16, ..SyntheticConfig::default() }).is_err());
        assert!(generate(&SyntheticConfig { blob_diameter_min: 0, ..SyntheticConfig::default() }).is_err());
        assert!(generate(&SyntheticConfig {
            blob_diameter_min: 120,
            blob_diameter_max: 130,
            ..SyntheticConfig::default()
        })
        .is_err());
    }
}
