//! Canonical per-species image geometry.
//!
//! Species fall into three aspect classes (height:width 1:1, 1:2 and 1:4)
//! with canonical sizes 128x128, 128x256 and 128x512. Mixed-species runs
//! use the middle 1:2 shape. Images are first padded to the target ratio by
//! edge replication, then resized bilinearly; final dimensions are
//! multiples of 32 so every conv pair's downsampling divides them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Height:width class a species is resized to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AspectClass {
    /// 1:1, canonical 128x128.
    Square,
    /// 1:2, canonical 128x256.
    Wide2,
    /// 1:4, canonical 128x512.
    Wide4,
}

impl AspectClass {
    /// Width divided by height.
    pub fn ratio(self) -> f64 {
        match self {
            AspectClass::Square => 1.0,
            AspectClass::Wide2 => 2.0,
            AspectClass::Wide4 => 4.0,
        }
    }
}

/// Canonical `(height, width)` for an aspect class.
pub fn canonical_size(class: AspectClass) -> (usize, usize) {
    match class {
        AspectClass::Square => (128, 128),
        AspectClass::Wide2 => (128, 256),
        AspectClass::Wide4 => (128, 512),
    }
}

/// Species to aspect-class mapping with configurable overrides.
///
/// The built-in table covers the nine published plankton species: five
/// elongated chain/filament formers at 1:4, three compact forms at 1:1 and
/// the chain-forming Peridiniella at 1:2. Lookup is case-insensitive,
/// treats `_` as a space and matches table entries as prefixes, so
/// truncated spellings such as `Skeletonem` resolve too. Unknown species
/// use the 1:2 middle class.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RatioTable {
    /// Extra or replacement entries, normalized species prefix -> class.
    #[serde(default)]
    pub overrides: BTreeMap<String, AspectClass>,
}

fn normalize(species: &str) -> String {
    species.trim().to_lowercase().replace('_', " ")
}

const DEFAULT_TABLE: &[(&str, AspectClass)] = &[
    ("aphanizomenon", AspectClass::Wide4),
    ("dolichospermum", AspectClass::Wide4),
    ("nodularia", AspectClass::Wide4),
    ("skeletonem", AspectClass::Wide4),
    ("chaetocero", AspectClass::Wide4),
    ("centrales", AspectClass::Square),
    ("pauliella", AspectClass::Square),
    ("peridiniella single", AspectClass::Square),
    ("peridiniella chain", AspectClass::Wide2),
];

/// Looks up the aspect class for one species.
pub fn species_aspect(table: &RatioTable, species: &str) -> AspectClass {
    let norm = normalize(species);
    let mut best: Option<(usize, AspectClass)> = None;
    let candidates = table
        .overrides
        .iter()
        .map(|(k, v)| (normalize(k), *v))
        .chain(DEFAULT_TABLE.iter().map(|(k, v)| ((*k).to_string(), *v)));
    for (prefix, class) in candidates {
        if norm.starts_with(&prefix) {
            // Longest prefix wins; overrides come first so they win ties.
            if best.is_none_or(|(len, _)| prefix.len() > len) {
                best = Some((prefix.len(), class));
            }
        }
    }
    best.map(|(_, class)| class).unwrap_or(AspectClass::Wide2)
}

/// Pads to the target aspect ratio by edge replication, then resizes
/// bilinearly to exactly `(height, width)`.
///
/// Targets must be nonzero multiples of 32 so downstream conv pairs and
/// 32x32 feature blocks divide the result evenly.
pub fn canonical_resize(img: &Image, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0 {
        return Err(Error::Shape(format!(
            "canonical size must be nonzero multiples of 32, got {height}x{width}"
        )));
    }
    let (h, w) = (img.height() as f64, img.width() as f64);
    let target_ratio = width as f64 / height as f64;
    let padded = if w / h < target_ratio {
        let want_w = (h * target_ratio).round() as usize;
        let extra = want_w.saturating_sub(img.width());
        img.pad_edge(0, 0, extra / 2, extra - extra / 2)
    } else {
        let want_h = (w / target_ratio).round() as usize;
        let extra = want_h.saturating_sub(img.height());
        img.pad_edge(extra / 2, extra - extra / 2, 0, 0)
    };
    padded.resize_bilinear(height, width)
}
