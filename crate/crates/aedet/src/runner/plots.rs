//! Plot emission: ROC curves with the EER operating point, 2D projections
//! of feature spaces, and original/latent/reconstruction/difference panels.
//!
//! Plots are described first as a [`PlotSpec`] element list (easy to assert
//! on) and then rasterized with a small line/dot renderer onto an [`Image`].
//! The renderer draws no glyphs; legends appear as color swatches and the
//! CSV artifacts next to each plot carry the exact numbers.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::autoencoder::{load_checkpoint, Latent, ReconstructionTriplet};
use crate::dataset::SampleLabel;
use crate::error::{Error, Result};
use crate::evaluation::{roc_auc, RocPoint};
use crate::features::{read_features_csv, FeatureRecord};
use crate::image::Image;
use crate::oneclass::{DecisionThreshold, ModelBundle};
use crate::runner::config::ExperimentConfig;
use crate::runner::experiment::{cell_dir, feature_matrix, grid_root, model_dir, Workspace};

pub type Rgb = [f32; 3];

const BLUE: Rgb = [0.13, 0.36, 0.85];
const RED: Rgb = [0.85, 0.20, 0.16];
const GRAY: Rgb = [0.55, 0.55, 0.55];
const BLACK: Rgb = [0.1, 0.1, 0.1];

/// One drawable element in data coordinates.
#[derive(Debug, Clone)]
pub enum Element {
    Polyline { points: Vec<(f64, f64)>, color: Rgb },
    Scatter { points: Vec<(f64, f64)>, color: Rgb },
    /// A highlighted single point; `tag` names its role (e.g. `"eer"`).
    Marker { x: f64, y: f64, color: Rgb, tag: &'static str },
}

#[derive(Debug, Clone)]
pub struct LegendEntry {
    pub label: String,
    pub color: Rgb,
}

/// A declarative plot: elements in data coordinates plus axis ranges.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub elements: Vec<Element>,
    pub legend: Vec<LegendEntry>,
}

impl PlotSpec {
    /// Markers carrying `tag`, for structural assertions.
    pub fn markers(&self, tag: &str) -> Vec<(f64, f64)> {
        self.elements
            .iter()
            .filter_map(|e| match e {
                Element::Marker { x, y, tag: t, .. } if *t == tag => Some((*x, *y)),
                _ => None,
            })
            .collect()
    }
}

/// ROC curve with the chance diagonal and exactly one marked EER point at
/// `(fpr, 1 - fnr)` of the selected threshold.
pub fn roc_plot_spec(points: &[RocPoint], threshold: &DecisionThreshold) -> PlotSpec {
    let curve: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    PlotSpec {
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.0),
        elements: vec![
            Element::Polyline { points: vec![(0.0, 0.0), (1.0, 1.0)], color: GRAY },
            Element::Polyline { points: curve, color: BLUE },
            Element::Marker { x: threshold.fpr, y: 1.0 - threshold.fnr, color: RED, tag: "eer" },
        ],
        legend: vec![
            LegendEntry { label: "roc".into(), color: BLUE },
            LegendEntry { label: "eer".into(), color: RED },
        ],
    }
}

/// Projects feature rows to their top two principal components and scatters
/// OK and NOK samples in different colors. One-dimensional features keep the
/// raw value on x with y pinned to zero.
pub fn feature_scatter_spec(records: &[FeatureRecord]) -> Result<PlotSpec> {
    if records.is_empty() {
        return Err(Error::Domain("cannot plot an empty feature set".into()));
    }
    let matrix = feature_matrix(records)?;
    let projected = project_2d(&matrix)?;

    let mut ok_points = Vec::new();
    let mut nok_points = Vec::new();
    for (record, point) in records.iter().zip(projected) {
        match record.label {
            SampleLabel::Ok => ok_points.push(point),
            SampleLabel::Nok => nok_points.push(point),
        }
    }

    let all = ok_points.iter().chain(&nok_points);
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let pad = |lo: f64, hi: f64| -> (f64, f64) {
        let span = (hi - lo).abs();
        if span < 1e-12 {
            (lo - 1.0, hi + 1.0)
        } else {
            (lo - 0.05 * span, hi + 0.05 * span)
        }
    };

    Ok(PlotSpec {
        x_range: pad(x_min, x_max),
        y_range: pad(y_min, y_max),
        elements: vec![
            Element::Scatter { points: ok_points, color: BLUE },
            Element::Scatter { points: nok_points, color: RED },
        ],
        legend: vec![
            LegendEntry { label: "OK".into(), color: BLUE },
            LegendEntry { label: "NOK".into(), color: RED },
        ],
    })
}

/// Principal-component projection of `matrix` rows onto 2D.
fn project_2d(matrix: &Array2<f64>) -> Result<Vec<(f64, f64)>> {
    let (n, d) = matrix.dim();
    if d == 1 {
        return Ok(matrix.column(0).iter().map(|&x| (x, 0.0)).collect());
    }
    let mean = matrix
        .mean_axis(ndarray::Axis(0))
        .ok_or_else(|| Error::Domain("cannot project an empty feature set".into()))?;
    let centered = matrix - &mean.insert_axis(ndarray::Axis(0));

    let denom = (n.max(2) - 1) as f64;
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for r in 0..n {
                acc += centered[(r, i)] * centered[(r, j)];
            }
            let v = acc / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eigen = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let first = eigen.eigenvectors.column(order[0]).into_owned();
    let second = eigen.eigenvectors.column(order[1]).into_owned();

    Ok((0..n)
        .map(|r| {
            let mut x = 0.0;
            let mut y = 0.0;
            for c in 0..d {
                x += centered[(r, c)] * first[c];
                y += centered[(r, c)] * second[c];
            }
            (x, y)
        })
        .collect())
}

/// Rasterizes a [`PlotSpec`] onto a white canvas with an axes frame.
pub fn render(spec: &PlotSpec, width: usize, height: usize) -> Result<Image> {
    let mut image = Image::zeros(height, width, 3)?;
    image.data_mut().fill(1.0);

    let margin = (width.min(height) as f64 * 0.08).max(4.0);
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let (x0, x1) = spec.x_range;
        let (y0, y1) = spec.y_range;
        let fx = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.5 };
        let fy = if y1 > y0 { (y - y0) / (y1 - y0) } else { 0.5 };
        let px = margin + fx * (width as f64 - 2.0 * margin);
        let py = (height as f64 - margin) - fy * (height as f64 - 2.0 * margin);
        (px, py)
    };

    // Axes frame.
    let frame = [
        (spec.x_range.0, spec.y_range.0),
        (spec.x_range.1, spec.y_range.0),
        (spec.x_range.1, spec.y_range.1),
        (spec.x_range.0, spec.y_range.1),
        (spec.x_range.0, spec.y_range.0),
    ];
    for pair in frame.windows(2) {
        let (ax, ay) = to_px(pair[0].0, pair[0].1);
        let (bx, by) = to_px(pair[1].0, pair[1].1);
        draw_line(&mut image, ax, ay, bx, by, BLACK);
    }

    for element in &spec.elements {
        match element {
            Element::Polyline { points, color } => {
                for pair in points.windows(2) {
                    let (ax, ay) = to_px(pair[0].0, pair[0].1);
                    let (bx, by) = to_px(pair[1].0, pair[1].1);
                    draw_line(&mut image, ax, ay, bx, by, *color);
                }
            }
            Element::Scatter { points, color } => {
                for &(x, y) in points {
                    let (px, py) = to_px(x, y);
                    draw_dot(&mut image, px, py, 2, *color);
                }
            }
            Element::Marker { x, y, color, .. } => {
                let (px, py) = to_px(*x, *y);
                draw_dot(&mut image, px, py, 4, *color);
                draw_line(&mut image, px - 6.0, py, px + 6.0, py, *color);
                draw_line(&mut image, px, py - 6.0, px, py + 6.0, *color);
            }
        }
    }

    // Legend: color swatches stacked in the top-right corner.
    let swatch = 8usize;
    for (i, entry) in spec.legend.iter().enumerate() {
        let x0 = width.saturating_sub(swatch * 2);
        let y0 = (margin as usize / 2) + i * (swatch + 4);
        for dy in 0..swatch {
            for dx in 0..swatch {
                put_pixel(&mut image, (x0 + dx) as f64, (y0 + dy) as f64, entry.color);
            }
        }
    }

    Ok(image)
}

fn put_pixel(image: &mut Image, x: f64, y: f64, color: Rgb) {
    let (h, w) = (image.height() as i64, image.width() as i64);
    let (xi, yi) = (x.round() as i64, y.round() as i64);
    if xi < 0 || yi < 0 || xi >= w || yi >= h {
        return;
    }
    let data = image.data_mut();
    for (c, v) in color.iter().enumerate() {
        data[(yi as usize, xi as usize, c)] = *v;
    }
}

fn draw_dot(image: &mut Image, x: f64, y: f64, radius: i64, color: Rgb) {
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                put_pixel(image, x + dx as f64, y + dy as f64, color);
            }
        }
    }
}

fn draw_line(image: &mut Image, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        put_pixel(image, x0 + t * (x1 - x0), y0 + t * (y1 - y0), color);
    }
}

/// Renders a latent code as a grayscale preview of the given size.
fn latent_preview(latent: &Latent, height: usize, width: usize) -> Result<Image> {
    let gray: Array2<f32> = match latent {
        Latent::Map(t) | Latent::Quantized { vectors: t, .. } => {
            let sample = t.index_axis(ndarray::Axis(0), 0);
            let (c, h, w) = (sample.dim().0, sample.dim().1, sample.dim().2);
            let mut out = Array2::<f32>::zeros((h, w));
            for ch in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        out[(i, j)] += sample[(ch, i, j)];
                    }
                }
            }
            out.mapv(|v| v / c as f32)
        }
        Latent::Vectors(v) => {
            let row = v.row(0);
            let side = (row.len() as f64).sqrt().ceil() as usize;
            let mut out = Array2::zeros((side, side));
            for (k, value) in row.iter().enumerate() {
                out[(k / side, k % side)] = *value;
            }
            out
        }
    };

    // Normalize to [0, 1] and upscale with nearest neighbor so the code's
    // blocky structure stays visible.
    let (lo, hi) = gray.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = if (hi - lo).abs() < 1e-12 { 1.0 } else { hi - lo };
    let (gh, gw) = gray.dim();
    let mut scaled = Array2::zeros((height, width));
    for i in 0..height {
        for j in 0..width {
            let si = (i * gh / height).min(gh - 1);
            let sj = (j * gw / width).min(gw - 1);
            scaled[(i, j)] = ((gray[(si, sj)] - lo) / span).clamp(0.0, 1.0);
        }
    }
    Image::from_gray(scaled)
}

/// Lays out original | latent | reconstruction | difference side by side.
/// The result is grayscale and exactly four source-widths wide.
pub fn reconstruction_panel(triplet: &ReconstructionTriplet, latent: &Latent) -> Result<Image> {
    let (h, w) = (triplet.original.height(), triplet.original.width());
    let panes = [
        Image::from_gray(triplet.original.to_gray())?,
        latent_preview(latent, h, w)?,
        Image::from_gray(triplet.reconstruction.to_gray())?,
        Image::from_gray(triplet.difference.to_gray())?,
    ];
    let mut montage = Image::zeros(h, 4 * w, 1)?;
    for (k, pane) in panes.iter().enumerate() {
        if pane.height() != h || pane.width() != w {
            return Err(Error::Shape(format!(
                "panel pane {k} is {}x{}, expected {h}x{w}",
                pane.height(),
                pane.width()
            )));
        }
        let src = pane.data();
        let dst = montage.data_mut();
        for i in 0..h {
            for j in 0..w {
                dst[(i, k * w + j, 0)] = src[(i, j, 0)];
            }
        }
    }
    Ok(montage)
}

fn require_artifact(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "missing artifact {}; run the experiment first",
            path.display()
        )))
    }
}

fn read_scores_csv(path: &Path) -> Result<(Vec<f64>, Vec<SampleLabel>)> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            context: format!("scores file {}", path.display()),
            message: e.to_string(),
        })?;
        let label: SampleLabel = row
            .get(2)
            .ok_or_else(|| Error::Parse {
                context: format!("scores file {}", path.display()),
                message: "row missing label column".into(),
            })?
            .parse()?;
        let score: f64 = row
            .get(3)
            .ok_or_else(|| Error::Parse {
                context: format!("scores file {}", path.display()),
                message: "row missing score column".into(),
            })?
            .parse()
            .map_err(|e| Error::Parse {
                context: format!("scores file {}", path.display()),
                message: format!("bad score: {e}"),
            })?;
        labels.push(label);
        scores.push(score);
    }
    Ok((scores, labels))
}

/// Renders the ROC curve and feature-space plots for one finished cell from
/// its persisted artifacts. Returns the written paths.
pub fn render_cell_plots(cell: &Path) -> Result<Vec<PathBuf>> {
    let scores_path = cell.join("scores.csv");
    let bundle_path = cell.join("bundle.json");
    let features_path = cell.join("features_test.csv");
    require_artifact(&scores_path)?;
    require_artifact(&bundle_path)?;
    require_artifact(&features_path)?;

    let plots = cell.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut written = Vec::new();

    let (scores, labels) = read_scores_csv(&scores_path)?;
    let bundle = ModelBundle::load(&bundle_path)?;
    let (points, _auc) = roc_auc(&scores, &labels)?;
    let roc = render(&roc_plot_spec(&points, &bundle.threshold), 512, 512)?;
    let roc_path = plots.join("roc.png");
    roc.save_png(&roc_path)?;
    written.push(roc_path);

    let records = read_features_csv(&features_path)?;
    let scatter = render(&feature_scatter_spec(&records)?, 512, 512)?;
    let scatter_path = plots.join("features.png");
    scatter.save_png(&scatter_path)?;
    written.push(scatter_path);

    Ok(written)
}

/// Reconstructs up to `count` test samples (NOK first, then OK) through the
/// checkpoint of `config`'s model and writes one panel image per sample.
pub fn render_panels(config: &ExperimentConfig, count: usize) -> Result<Vec<PathBuf>> {
    let root = grid_root(config);
    let spec = config.model_spec();
    let checkpoint_dir = model_dir(&root, &spec.model_id());
    require_artifact(&checkpoint_dir.join("model.json"))?;

    let (mut model, meta) = load_checkpoint(&checkpoint_dir)?;
    if meta.spec != spec {
        return Err(Error::Domain(format!(
            "checkpoint at {} was trained for {}, not {}",
            checkpoint_dir.display(),
            meta.spec.model_id(),
            spec.model_id()
        )));
    }

    let workspace = Workspace::build(config)?;
    let labels = workspace.labels_for(&workspace.split.test)?;
    let mut picks: Vec<&String> = workspace
        .split
        .test
        .iter()
        .zip(&labels)
        .filter(|(_, l)| **l == SampleLabel::Nok)
        .map(|(id, _)| id)
        .collect();
    picks.extend(
        workspace
            .split
            .test
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == SampleLabel::Ok)
            .map(|(id, _)| id),
    );
    picks.truncate(count);

    let plots = cell_dir(&root, &config.combination()).join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;

    let mut written = Vec::new();
    for id in picks {
        let images = workspace.images_for(std::slice::from_ref(id))?;
        let triplet = model.reconstruct_image(&images[0])?;
        let latent = model.encode_latent(&crate::autoencoder::images_to_tensor(&images)?)?;
        let panel = reconstruction_panel(&triplet, &latent)?;
        let path = plots.join(format!("panel_{id}.png"));
        panel.save_png(&path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oneclass::ThresholdSource;
    use ndarray::{Array3, Array4};

    fn threshold() -> DecisionThreshold {
        DecisionThreshold { value: 0.4, fpr: 0.2, fnr: 0.3, source: ThresholdSource::Validation }
    }

    #[test]
    fn roc_spec_marks_exactly_one_eer_point() {
        let points = vec![
            RocPoint { fpr: 0.0, tpr: 0.0 },
            RocPoint { fpr: 0.2, tpr: 0.8 },
            RocPoint { fpr: 1.0, tpr: 1.0 },
        ];
        let spec = roc_plot_spec(&points, &threshold());
        let markers = spec.markers("eer");
        assert_eq!(markers.len(), 1);
        assert_eq!(markers[0], (0.2, 0.7));
    }

    #[test]
    fn feature_scatter_legend_has_exactly_the_two_classes() {
        let records = vec![
            FeatureRecord { sample_id: "a".into(), label: SampleLabel::Ok, values: vec![0.0, 1.0, 2.0] },
            FeatureRecord { sample_id: "b".into(), label: SampleLabel::Ok, values: vec![0.1, 1.1, 2.2] },
            FeatureRecord { sample_id: "c".into(), label: SampleLabel::Nok, values: vec![5.0, 4.0, 0.1] },
            FeatureRecord { sample_id: "d".into(), label: SampleLabel::Nok, values: vec![5.2, 4.1, 0.3] },
        ];
        let spec = feature_scatter_spec(&records).unwrap();
        let labels: Vec<&str> = spec.legend.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["OK", "NOK"]);
        // All four points are placed.
        let placed: usize = spec
            .elements
            .iter()
            .map(|e| match e {
                Element::Scatter { points, .. } => points.len(),
                _ => 0,
            })
            .sum();
        assert_eq!(placed, 4);
    }

    #[test]
    fn pca_projection_preserves_separation_along_the_spread_axis() {
        // Two clusters separated along one direction must stay separated
        // after projection onto the leading principal component.
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f32 * 0.01, 0.0, 10.0 + i as f32 * 0.01]);
        }
        for i in 0..10 {
            rows.push(vec![5.0 + i as f32 * 0.01, 0.0, i as f32 * 0.01]);
        }
        let records: Vec<FeatureRecord> = rows
            .into_iter()
            .enumerate()
            .map(|(i, values)| FeatureRecord {
                sample_id: format!("s{i}"),
                label: if i < 10 { SampleLabel::Ok } else { SampleLabel::Nok },
                values,
            })
            .collect();
        let matrix = feature_matrix(&records).unwrap();
        let projected = project_2d(&matrix).unwrap();
        let ok_max = projected[..10].iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let ok_min = projected[..10].iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let nok_max = projected[10..].iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let nok_min = projected[10..].iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        assert!(
            ok_max < nok_min || nok_max < ok_min,
            "clusters overlap after projection: ok [{ok_min}, {ok_max}], nok [{nok_min}, {nok_max}]"
        );
    }

    #[test]
    fn one_dimensional_features_project_to_the_x_axis() {
        let records = vec![
            FeatureRecord { sample_id: "a".into(), label: SampleLabel::Ok, values: vec![3.0] },
            FeatureRecord { sample_id: "b".into(), label: SampleLabel::Nok, values: vec![7.0] },
        ];
        let matrix = feature_matrix(&records).unwrap();
        let projected = project_2d(&matrix).unwrap();
        assert_eq!(projected, vec![(3.0, 0.0), (7.0, 0.0)]);
    }

    #[test]
    fn render_produces_an_image_of_the_requested_size() {
        let spec = roc_plot_spec(
            &[RocPoint { fpr: 0.0, tpr: 0.0 }, RocPoint { fpr: 1.0, tpr: 1.0 }],
            &threshold(),
        );
        let image = render(&spec, 320, 240).unwrap();
        assert_eq!((image.height(), image.width(), image.channels()), (240, 320, 3));
        // Something was drawn: not every pixel is still white.
        assert!(image.data().iter().any(|&v| v < 0.99));
    }

    #[test]
    fn panel_is_four_sample_widths_wide() {
        let h = 16;
        let w = 24;
        let original = Image::new(Array3::from_elem((h, w, 1), 0.5)).unwrap();
        let reconstruction = Image::new(Array3::from_elem((h, w, 1), 0.4)).unwrap();
        let difference = original.absdiff(&reconstruction).unwrap();
        let triplet = ReconstructionTriplet { original, reconstruction, difference };
        let latent = Latent::Map(Array4::from_elem((1, 4, 4, 6), 0.3));
        let panel = reconstruction_panel(&triplet, &latent).unwrap();
        assert_eq!(panel.width(), 4 * w);
        assert_eq!(panel.height(), h);
        assert_eq!(panel.channels(), 1);
        // Difference pane holds |0.5 - 0.4|.
        let d = panel.data()[(h / 2, 3 * w + w / 2, 0)];
        assert!((d - 0.1).abs() < 1e-6, "difference pane value {d}");
    }

    #[test]
    fn vector_latents_render_as_a_square_grid() {
        let latent = Latent::Vectors(ndarray::Array2::from_shape_fn((1, 10), |(_, j)| j as f32));
        let preview = latent_preview(&latent, 32, 32).unwrap();
        assert_eq!((preview.height(), preview.width()), (32, 32));
        let max = preview.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let min = preview.data().iter().cloned().fold(f32::INFINITY, f32::min);
        assert!(max <= 1.0 && min >= 0.0);
        assert!(max > min, "preview must not be constant");
    }

    #[test]
    fn missing_artifacts_are_a_domain_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = render_cell_plots(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
        assert!(err.to_string().contains("scores.csv"), "{err}");
    }
}
