//! Experiment configuration: a TOML file mirrored by these structs, with
//! `PIPELINE_<SECTION>_<KEY>` environment overrides applied on top.
//!
//! Unknown keys anywhere in the file are rejected with the offending name,
//! and enum-valued fields accept their human names case-insensitively
//! (`core = "vqvae1"`, `kind = "HardNet3"`).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::autoencoder::{AeCore, ConvPair, LatentConfig, ModelSpec, TrainConfig};
use crate::dataset::synthetic::SyntheticConfig;
use crate::dataset::{AnnotationFormat, SpeciesScope, SplitConfig};
use crate::error::{Error, Result};
use crate::evaluation::CombinationId;
use crate::features::{FeatureKind, Hardnet1Source};
use crate::oneclass::{OneClassKind, ThresholdSource, DEFAULT_CONTAMINATION};

/// Deserializes a field through its `FromStr`, so config files accept the
/// same names the CLI does.
fn named<'de, D, T>(deserializer: D) -> std::result::Result<T, D::Error>
where
    D: serde::Deserializer<'de>,
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let raw = String::deserialize(deserializer)?;
    raw.parse().map_err(serde::de::Error::custom)
}

fn named_list<'de, D, T>(deserializer: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let raw = Vec::<String>::deserialize(deserializer)?;
    raw.iter().map(|s| s.parse().map_err(serde::de::Error::custom)).collect()
}

/// Where samples come from.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// COCO JSON file or YOLO directory. Unset means synthetic data.
    pub annotations: Option<PathBuf>,
    pub format: AnnotationFormat,
    /// Species scope: `"all"` or one species name.
    pub species: String,
    /// Generate the synthetic fixture instead of loading from disk.
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            annotations: None,
            format: AnnotationFormat::Coco,
            species: "all".into(),
            synthetic: None,
        }
    }
}

impl DatasetSection {
    pub fn scope(&self) -> SpeciesScope {
        if self.species.eq_ignore_ascii_case("all") {
            SpeciesScope::All
        } else {
            SpeciesScope::Single(self.species.clone())
        }
    }
}

/// Train/validation/test split parameters (see [`SplitConfig`]).
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_frac: f64,
    pub val_count: Option<usize>,
    pub test_count: Option<usize>,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let base = SplitConfig::default();
        SplitSection {
            train_frac: base.train_frac,
            val_count: base.val_count,
            test_count: base.test_count,
            seed: base.seed,
        }
    }
}

/// Which autoencoder to build and the canonical input size.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(deserialize_with = "named")]
    pub core: AeCore,
    #[serde(deserialize_with = "named")]
    pub conv_pair: ConvPair,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub latent: LatentConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            core: AeCore::Bae1,
            conv_pair: ConvPair::ConvM3,
            channels: 1,
            height: 128,
            width: 128,
            seed: 0,
            latent: LatentConfig::default(),
        }
    }
}

/// Feature extraction choices.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    #[serde(deserialize_with = "named")]
    pub kind: FeatureKind,
    /// Optional descriptor weights file; unset uses the deterministic
    /// fallback descriptor.
    pub weights: Option<PathBuf>,
    #[serde(deserialize_with = "named")]
    pub hardnet1_source: Hardnet1Source,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            kind: FeatureKind::ErrMetrics,
            weights: None,
            hardnet1_source: Hardnet1Source::Difference,
        }
    }
}

/// One-class classifier choices and threshold selection.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    #[serde(deserialize_with = "named")]
    pub kind: OneClassKind,
    pub contamination: f64,
    pub seed: u64,
    /// Which split the decision threshold is selected on.
    pub threshold_source: ThresholdSource,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            kind: OneClassKind::Lof,
            contamination: DEFAULT_CONTAMINATION,
            seed: 0,
            threshold_source: ThresholdSource::Validation,
        }
    }
}

/// Ranges enumerated by the grid; each defaults to every known value.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    #[serde(deserialize_with = "named_list")]
    pub cores: Vec<AeCore>,
    #[serde(deserialize_with = "named_list")]
    pub conv_pairs: Vec<ConvPair>,
    #[serde(deserialize_with = "named_list")]
    pub extractors: Vec<FeatureKind>,
    #[serde(deserialize_with = "named_list")]
    pub classifiers: Vec<OneClassKind>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            cores: AeCore::ALL.to_vec(),
            conv_pairs: ConvPair::ALL.to_vec(),
            extractors: FeatureKind::ALL.to_vec(),
            classifiers: OneClassKind::ALL.to_vec(),
        }
    }
}

/// Where artifacts land.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Subdirectory of `dir` owned by one grid run.
    pub grid_id: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), grid_id: "grid".into() }
    }
}

/// The full experiment description; every section has usable defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub training: TrainConfig,
    pub features: FeaturesSection,
    pub classifier: ClassifierSection,
    pub grid: GridSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            core: self.model.core,
            conv_pair: self.model.conv_pair,
            input: (self.model.channels, self.model.height, self.model.width),
            latent: self.model.latent.clone(),
            seed: self.model.seed,
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            train_frac: self.split.train_frac,
            val_count: self.split.val_count,
            test_count: self.split.test_count,
            seed: self.split.seed,
            scope: self.dataset.scope(),
        }
    }

    /// The single combination described by the non-grid sections.
    pub fn combination(&self) -> CombinationId {
        CombinationId {
            core: self.model.core,
            conv_pair: self.model.conv_pair,
            extractor: self.features.kind,
            classifier: self.classifier.kind,
        }
    }

    /// Checks cross-field constraints and referenced paths.
    pub fn validate(&self) -> Result<()> {
        if self.dataset.annotations.is_none() && self.dataset.synthetic.is_none() {
            return Err(Error::Config(
                "dataset needs either `annotations` or a `[dataset.synthetic]` table".into(),
            ));
        }
        if let Some(path) = &self.dataset.annotations {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "annotations path {} does not exist",
                    path.display()
                )));
            }
        }
        if self.model.height == 0
            || self.model.width == 0
            || self.model.height % 32 != 0
            || self.model.width % 32 != 0
        {
            return Err(Error::Config(format!(
                "model input {}x{} must be positive and divisible by 32",
                self.model.height, self.model.width
            )));
        }
        if !(self.model.channels == 1 || self.model.channels == 3) {
            return Err(Error::Config(format!(
                "model channels must be 1 or 3, got {}",
                self.model.channels
            )));
        }
        if self.grid.cores.is_empty()
            || self.grid.conv_pairs.is_empty()
            || self.grid.extractors.is_empty()
            || self.grid.classifiers.is_empty()
        {
            return Err(Error::Config("every grid range must be nonempty".into()));
        }
        if let Some(weights) = &self.features.weights {
            if !weights.exists() {
                return Err(Error::Config(format!(
                    "descriptor weights path {} does not exist",
                    weights.display()
                )));
            }
        }
        Ok(())
    }
}

/// Parses config text and applies `PIPELINE_<SECTION>_<KEY>` overrides
/// from `env` (pass [`std::env::vars`] in production). Override values are
/// parsed as TOML, so numbers, booleans, arrays and quoted strings all
/// work; anything unparseable is taken as a plain string.
pub fn parse_config(
    text: &str,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<ExperimentConfig> {
    let mut table: toml::Table = toml::from_str(text)
        .map_err(|e| Error::Config(format!("config file: {e}")))?;

    for (name, raw) in env {
        let Some(rest) = name.strip_prefix("PIPELINE_") else { continue };
        let Some((section, key)) = rest.split_once('_') else {
            return Err(Error::Config(format!(
                "override {name} must look like PIPELINE_<SECTION>_<KEY>"
            )));
        };
        let section = section.to_ascii_lowercase();
        let key = key.to_ascii_lowercase();
        let value = parse_override(&raw);
        table
            .entry(section)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {name}: section is not a table")))?
            .insert(key, value);
    }

    toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("config: {e}")))
}

fn parse_override(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("value just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Loads a config file and applies overrides from the process environment.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, std::env::vars())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn empty_config_gets_defaults() {
        let cfg = parse_config("", no_env()).unwrap();
        assert_eq!(cfg.model.core, AeCore::Bae1);
        assert_eq!(cfg.model.conv_pair, ConvPair::ConvM3);
        assert_eq!(cfg.grid.cores.len(), 5);
        assert_eq!(cfg.grid.conv_pairs.len(), 6);
        assert_eq!(cfg.grid.extractors.len(), 6);
        assert_eq!(cfg.grid.classifiers.len(), 4);
        assert_eq!(cfg.classifier.contamination, DEFAULT_CONTAMINATION);
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn sections_parse_with_case_insensitive_enum_names() {
        let cfg = parse_config(
            r#"
            [model]
            core = "vqvae1"
            conv_pair = "CONVM2"
            height = 64
            width = 96

            [features]
            kind = "HardNet3"

            [classifier]
            kind = "ISOLATIONFOREST"
            contamination = 0.05

            [grid]
            cores = ["bae1", "BAE2"]
            "#,
            no_env(),
        )
        .unwrap();
        assert_eq!(cfg.model.core, AeCore::Vqvae1);
        assert_eq!(cfg.model.conv_pair, ConvPair::ConvM2);
        assert_eq!(cfg.features.kind, FeatureKind::HardNet3);
        assert_eq!(cfg.classifier.kind, OneClassKind::IsolationForest);
        assert_eq!(cfg.grid.cores, vec![AeCore::Bae1, AeCore::Bae2]);
        let spec = cfg.model_spec();
        assert_eq!(spec.input, (1, 64, 96));
        assert_eq!(cfg.combination().to_string(), "ConvM2-VQVAE1_hardnet3_isolationforest");
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let err = parse_config("[training]\nepohcs = 3\n", no_env()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epohcs"), "{msg}");

        let err = parse_config("[modle]\nseed = 1\n", no_env()).unwrap_err();
        assert!(err.to_string().contains("modle"), "{err}");
    }

    #[test]
    fn unknown_enum_name_is_a_config_error_before_any_training() {
        let err = parse_config("[features]\nkind = \"hardnet9\"\n", no_env()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("hardnet9"), "{msg}");
    }

    #[test]
    fn environment_overrides_win_over_the_file() {
        let env = vec![
            ("PIPELINE_TRAINING_EPOCHS".to_string(), "3".to_string()),
            ("PIPELINE_TRAINING_LEARNING_RATE".to_string(), "0.01".to_string()),
            ("PIPELINE_DATASET_SPECIES".to_string(), "\"Synthetica\"".to_string()),
            ("PIPELINE_OUTPUT_DIR".to_string(), "elsewhere".to_string()),
            ("PIPELINE_GRID_CORES".to_string(), "[\"BAE1\"]".to_string()),
            ("UNRELATED_VAR".to_string(), "ignored".to_string()),
        ];
        let cfg = parse_config("[training]\nepochs = 99\n", env).unwrap();
        assert_eq!(cfg.training.epochs, 3);
        assert!((cfg.training.learning_rate - 0.01).abs() < 1e-9);
        assert_eq!(cfg.dataset.species, "Synthetica");
        // Bare strings work without TOML quoting.
        assert_eq!(cfg.output.dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.grid.cores, vec![AeCore::Bae1]);
    }

    #[test]
    fn validate_requires_a_data_source_and_divisible_input() {
        let cfg = parse_config("", no_env()).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let cfg =
            parse_config("[dataset.synthetic]\nok_count = 10\n[model]\nheight = 100\n", no_env())
                .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("divisible by 32"), "{err}");

        let cfg = parse_config("[dataset.synthetic]\nok_count = 10\n", no_env()).unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn validate_rejects_missing_paths_and_empty_grid_ranges() {
        let cfg = parse_config("[dataset]\nannotations = \"/no/such/file.json\"\n", no_env())
            .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let cfg = parse_config("[dataset.synthetic]\n[grid]\ncores = []\n", no_env()).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("nonempty"), "{err}");
    }

    #[test]
    fn species_scope_translates_to_the_split_scope() {
        let cfg = parse_config("[dataset]\nspecies = \"All\"\n", no_env()).unwrap();
        assert_eq!(cfg.split_config().scope, SpeciesScope::All);
        let cfg = parse_config("[dataset]\nspecies = \"Aphanizomenon\"\n", no_env()).unwrap();
        assert_eq!(
            cfg.split_config().scope,
            SpeciesScope::Single("Aphanizomenon".into())
        );
    }

    #[test]
    fn synthetic_table_carries_generator_fields() {
        let cfg = parse_config(
            "[dataset.synthetic]\nok_count = 12\nnok_count = 4\nheight = 64\nwidth = 64\nseed = 5\n",
            no_env(),
        )
        .unwrap();
        let synth = cfg.dataset.synthetic.unwrap();
        assert_eq!(synth.ok_count, 12);
        assert_eq!(synth.nok_count, 4);
        assert_eq!(synth.seed, 5);
    }
}
