//! Deterministic train/validation/test splits.
//!
//! Training uses OK samples only; validation and test are balanced
//! (equal OK and NOK counts). All sampling is seeded, and the result
//! depends only on the set of sample ids, never on input order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SampleLabel;
use crate::error::{Error, Result};

/// The minimal view of a sample the splitter needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub species: String,
    pub label: SampleLabel,
}

/// Which species take part in the split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeciesScope {
    /// One species; other records are ignored.
    Single(String),
    /// Every species present, split per species and concatenated.
    All,
}

/// Split parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction of each species' OK pool that goes to training.
    pub train_frac: f64,
    /// OK (and NOK) samples per species in validation. `None` picks the
    /// default: 10 for [`SpeciesScope::All`], otherwise half of the
    /// smaller of the NOK pool and the leftover OK pool.
    pub val_count: Option<usize>,
    /// Like `val_count`, for the test set.
    pub test_count: Option<usize>,
    pub seed: u64,
    pub scope: SpeciesScope,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_frac: 0.7, val_count: None, test_count: None, seed: 0, scope: SpeciesScope::All }
    }
}

/// Sample ids per subset. Validation and test list OK ids first, then NOK.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

use crate::hash::fnv1a64_str as fnv1a;

/// Builds a split per [`SplitConfig`].
///
/// Per species: `floor(train_frac * |OK|)` OK samples train, then
/// `val_count` OK + NOK validate and `test_count` OK + NOK test, all
/// disjoint. Pools too small for the requested counts are a capacity
/// error; a `train_frac` outside (0, 1) is a domain error.
pub fn build_split(records: &[SampleRecord], config: &SplitConfig) -> Result<DatasetSplit> {
    if !(config.train_frac > 0.0 && config.train_frac < 1.0) {
        return Err(Error::Domain(format!("train_frac must be in (0, 1), got {}", config.train_frac)));
    }

    let mut species_list: Vec<String> = match &config.scope {
        SpeciesScope::Single(s) => vec![s.clone()],
        SpeciesScope::All => {
            let mut all: Vec<String> = records.iter().map(|r| r.species.clone()).collect();
            all.sort();
            all.dedup();
            all
        }
    };
    species_list.sort();

    let mut split = DatasetSplit::default();
    for species in &species_list {
        let mut ok_ids: Vec<&str> = records
            .iter()
            .filter(|r| &r.species == species && r.label == SampleLabel::Ok)
            .map(|r| r.id.as_str())
            .collect();
        let mut nok_ids: Vec<&str> = records
            .iter()
            .filter(|r| &r.species == species && r.label == SampleLabel::Nok)
            .map(|r| r.id.as_str())
            .collect();
        if ok_ids.is_empty() {
            return Err(Error::Capacity(format!("species {species:?} has no OK samples")));
        }
        ok_ids.sort();
        nok_ids.sort();

        let train_n = (config.train_frac * ok_ids.len() as f64).floor() as usize;
        let ok_left = ok_ids.len() - train_n;
        let default_count = match config.scope {
            SpeciesScope::All => 10,
            SpeciesScope::Single(_) => nok_ids.len().min(ok_left) / 2,
        };
        let val_n = config.val_count.unwrap_or(default_count);
        let test_n = config.test_count.unwrap_or(default_count);

        if ok_left < val_n + test_n {
            return Err(Error::Capacity(format!(
                "species {species:?}: {} OK samples remain after training but val+test need {}",
                ok_left,
                val_n + test_n
            )));
        }
        if nok_ids.len() < val_n + test_n {
            return Err(Error::Capacity(format!(
                "species {species:?}: {} NOK samples available but val+test need {}",
                nok_ids.len(),
                val_n + test_n
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ fnv1a(species));
        ok_ids.shuffle(&mut rng);
        nok_ids.shuffle(&mut rng);

        split.train.extend(ok_ids[..train_n].iter().map(|s| s.to_string()));
        split.val.extend(ok_ids[train_n..train_n + val_n].iter().map(|s| s.to_string()));
        split.test.extend(ok_ids[train_n + val_n..train_n + val_n + test_n].iter().map(|s| s.to_string()));
        split.val.extend(nok_ids[..val_n].iter().map(|s| s.to_string()));
        split.test.extend(nok_ids[val_n..val_n + test_n].iter().map(|s| s.to_string()));
    }
    Ok(split)
}
