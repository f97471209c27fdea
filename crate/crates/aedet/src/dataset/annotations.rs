//! Annotation loading for COCO JSON and YOLO text layouts.
//!
//! Box labels follow a three-way naming scheme: a bare `Anomaly` class, a
//! per-species `<Species>_Anomaly` class and a per-species `<Species>_Clean`
//! class. Any other class name is a schema error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// What a bounding box marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxKind {
    /// A generic anomaly, not tied to a species.
    Anomaly,
    /// An anomalous individual of a known species.
    SpeciesAnomaly,
    /// A normal individual of a known species.
    SpeciesClean,
}

/// An axis-aligned box in pixel coordinates (top-left origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub kind: BoxKind,
    /// Species carried by `<Species>_Anomaly` / `<Species>_Clean` labels.
    pub species: Option<String>,
    pub x: f32,
    pub y: f32,
    pub width: f32,
    pub height: f32,
}

impl BoundingBox {
    /// Area of the intersection with another box; zero for boxes that only
    /// touch at an edge.
    pub fn intersection_area(&self, other: &BoundingBox) -> f32 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.width).min(other.x + other.width);
        let y1 = (self.y + self.height).min(other.y + other.height);
        (x1 - x0).max(0.0) * (y1 - y0).max(0.0)
    }
}

/// A loaded sample: pixels plus its annotations.
#[derive(Debug, Clone)]
pub struct AnnotatedImage {
    /// Stable identifier, unique within the dataset.
    pub id: String,
    /// Path the pixels were loaded from (empty for in-memory samples).
    pub path: PathBuf,
    pub image: Image,
    /// Species this sample belongs to; `"unknown"` when undeterminable.
    pub species: String,
    pub boxes: Vec<BoundingBox>,
}

/// Supported annotation layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationFormat {
    /// A single COCO JSON file; image paths are resolved relative to it.
    Coco,
    /// A directory with `images/`, `labels/` and a class-name mapping file
    /// (`classes.txt`, `obj.names` or any `*.names`).
    Yolo,
}

/// Splits a class name into box kind and species.
fn parse_class_name(name: &str) -> Result<(BoxKind, Option<String>)> {
    if name == "Anomaly" {
        return Ok((BoxKind::Anomaly, None));
    }
    if let Some(species) = name.strip_suffix("_Anomaly") {
        if !species.is_empty() {
            return Ok((BoxKind::SpeciesAnomaly, Some(species.to_string())));
        }
    }
    if let Some(species) = name.strip_suffix("_Clean") {
        if !species.is_empty() {
            return Ok((BoxKind::SpeciesClean, Some(species.to_string())));
        }
    }
    Err(Error::Schema(format!(
        "class name {name:?} is not `Anomaly`, `<Species>_Anomaly` or `<Species>_Clean`"
    )))
}

/// Picks the sample species from its boxes: the most frequent species name,
/// ties broken lexicographically. Falls back to the image's parent
/// directory name, then `"unknown"`.
fn derive_species(boxes: &[BoundingBox], image_path: &Path) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for b in boxes {
        if let Some(s) = &b.species {
            *counts.entry(s.as_str()).or_insert(0) += 1;
        }
    }
    if let Some((species, _)) = counts.iter().max_by_key(|(name, count)| (**count, std::cmp::Reverse(*name))) {
        return (*species).to_string();
    }
    image_path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .filter(|n| !n.is_empty() && *n != "images")
        .map(|n| n.to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Loads every annotated image described by `path`.
///
/// Every referenced image file must exist; a missing one is a load error
/// naming the sample id.
pub fn parse_annotations(path: &Path, format: AnnotationFormat) -> Result<Vec<AnnotatedImage>> {
    match format {
        AnnotationFormat::Coco => parse_coco(path),
        AnnotationFormat::Yolo => parse_yolo(path),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: i64,
    file_name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    image_id: i64,
    category_id: i64,
    /// `[x, y, width, height]` in pixels.
    bbox: [f32; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: i64,
    name: String,
}

fn parse_coco(path: &Path) -> Result<Vec<AnnotatedImage>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CocoFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;

    let mut categories: BTreeMap<i64, (BoxKind, Option<String>)> = BTreeMap::new();
    for cat in &file.categories {
        categories.insert(cat.id, parse_class_name(&cat.name)?);
    }

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut boxes_by_image: BTreeMap<i64, Vec<BoundingBox>> = BTreeMap::new();
    for ann in &file.annotations {
        let (kind, species) = categories
            .get(&ann.category_id)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("annotation references unknown category id {}", ann.category_id)))?;
        boxes_by_image.entry(ann.image_id).or_default().push(BoundingBox {
            kind,
            species,
            x: ann.bbox[0],
            y: ann.bbox[1],
            width: ann.bbox[2],
            height: ann.bbox[3],
        });
    }

    let mut out = Vec::with_capacity(file.images.len());
    for entry in &file.images {
        let image_path = base.join(&entry.file_name);
        if !image_path.is_file() {
            return Err(Error::Load(format!(
                "image id {} file {} does not exist",
                entry.id,
                image_path.display()
            )));
        }
        let image = Image::load(&image_path)?;
        let boxes = boxes_by_image.remove(&entry.id).unwrap_or_default();
        let species = derive_species(&boxes, &image_path);
        out.push(AnnotatedImage {
            id: entry.id.to_string(),
            path: image_path,
            image,
            species,
            boxes,
        });
    }
    Ok(out)
}

fn find_names_file(root: &Path) -> Result<PathBuf> {
    for candidate in ["classes.txt", "obj.names"] {
        let p = root.join(candidate);
        if p.is_file() {
            return Ok(p);
        }
    }
    let mut names: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "names"))
        .collect();
    names.sort();
    names.into_iter().next().ok_or_else(|| {
        Error::Load(format!("no class-name mapping file (classes.txt, obj.names or *.names) in {}", root.display()))
    })
}

fn parse_yolo(root: &Path) -> Result<Vec<AnnotatedImage>> {
    let names_path = find_names_file(root)?;
    let names_text = fs::read_to_string(&names_path).map_err(|e| Error::io(&names_path, e))?;
    let mut classes = Vec::new();
    for line in names_text.lines() {
        let line = line.trim();
        if !line.is_empty() {
            classes.push(parse_class_name(line)?);
        }
    }

    let images_dir = root.join("images");
    let labels_dir = root.join("labels");
    if !images_dir.is_dir() {
        return Err(Error::Load(format!("missing images directory {}", images_dir.display())));
    }
    let mut image_paths: Vec<PathBuf> = fs::read_dir(&images_dir)
        .map_err(|e| Error::io(&images_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    image_paths.sort();

    let mut out = Vec::with_capacity(image_paths.len());
    for image_path in image_paths {
        let stem = image_path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Load(format!("unreadable image file name {}", image_path.display())))?
            .to_string();
        let image = Image::load(&image_path)?;
        let (h, w) = (image.height() as f32, image.width() as f32);

        let label_path = labels_dir.join(format!("{stem}.txt"));
        let mut boxes = Vec::new();
        if label_path.is_file() {
            let text = fs::read_to_string(&label_path).map_err(|e| Error::io(&label_path, e))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != 5 {
                    return Err(Error::Parse {
                        context: format!("{}:{}", label_path.display(), lineno + 1),
                        message: format!("expected 5 fields, got {}", fields.len()),
                    });
                }
                let parse_f32 = |s: &str| -> Result<f32> {
                    s.parse::<f32>().map_err(|e| Error::Parse {
                        context: format!("{}:{}", label_path.display(), lineno + 1),
                        message: e.to_string(),
                    })
                };
                let class_idx: usize = fields[0].parse().map_err(|e| Error::Parse {
                    context: format!("{}:{}", label_path.display(), lineno + 1),
                    message: format!("class index: {e}"),
                })?;
                let (kind, species) = classes
                    .get(class_idx)
                    .cloned()
                    .ok_or_else(|| Error::Schema(format!("class index {class_idx} out of range for {}", names_path.display())))?;
                let cx = parse_f32(fields[1])? * w;
                let cy = parse_f32(fields[2])? * h;
                let bw = parse_f32(fields[3])? * w;
                let bh = parse_f32(fields[4])? * h;
                boxes.push(BoundingBox {
                    kind,
                    species,
                    x: cx - bw / 2.0,
                    y: cy - bh / 2.0,
                    width: bw,
                    height: bh,
                });
            }
        }
        let species = derive_species(&boxes, &image_path);
        out.push(AnnotatedImage { id: stem, path: image_path, image, species, boxes });
    }
    Ok(out)
}

/// Writes samples to `dir` as a COCO dataset: a PNG per image plus an
/// `annotations.json`. Useful for exporting synthetic fixtures.
pub fn write_coco_dataset(dir: &Path, samples: &[AnnotatedImage]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut categories: Vec<CocoCategory> = Vec::new();
    let mut category_ids: BTreeMap<String, i64> = BTreeMap::new();
    let mut images = Vec::new();
    let mut annotations = Vec::new();

    for (idx, sample) in samples.iter().enumerate() {
        let file_name = format!("{}.png", sample.id);
        sample.image.save_png(&dir.join(&file_name))?;
        let image_id = idx as i64 + 1;
        images.push(CocoImage { id: image_id, file_name });
        for b in &sample.boxes {
            let class_name = match (&b.kind, &b.species) {
                (BoxKind::Anomaly, _) => "Anomaly".to_string(),
                (BoxKind::SpeciesAnomaly, Some(s)) => format!("{s}_Anomaly"),
                (BoxKind::SpeciesClean, Some(s)) => format!("{s}_Clean"),
                (kind, None) => {
                    return Err(Error::Schema(format!("{kind:?} box without a species cannot be serialized")))
                }
            };
            let next_id = category_ids.len() as i64 + 1;
            let cat_id = *category_ids.entry(class_name.clone()).or_insert(next_id);
            if cat_id == next_id {
                categories.push(CocoCategory { id: cat_id, name: class_name });
            }
            annotations.push(CocoAnnotation {
                image_id,
                category_id: cat_id,
                bbox: [b.x, b.y, b.width, b.height],
            });
        }
    }

    let file = CocoFile { images, annotations, categories };
    let path = dir.join("annotations.json");
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Artifact(format!("serializing annotations: {e}")))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
