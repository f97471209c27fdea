//! Single-experiment execution: load data, split, train the autoencoder on
//! OK samples, reconstruct every split, extract features, fit the scaler and
//! one-class classifier on train features, pick a threshold, and report.
//!
//! Each stage is wrapped in [`StageExt::stage`], so failures name the stage
//! that died; artifacts written before the failure stay on disk.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::autoencoder::{
    build_model, load_checkpoint, save_checkpoint, train, Autoencoder, CheckpointMeta,
    ReconstructionTriplet,
};
use crate::dataset::{
    build_split, canonical_resize, derive_sample_label, parse_annotations, synthetic,
    AnnotatedImage, DatasetSplit, SampleLabel, SampleRecord,
};
use crate::error::{Error, Result, StageExt};
use crate::evaluation::{build_report, write_reports_csv, CombinationId, EvaluationReport};
use crate::features::{write_features_csv, Extractor, FeatureRecord};
use crate::image::Image;
use crate::oneclass::{select_threshold_eer, ModelBundle, OneClassModel, RobustScaler};
use crate::runner::config::{ClassifierSection, ExperimentConfig, FeaturesSection};

/// Loaded samples plus the train/val/test split; shared by every grid cell.
pub struct Workspace {
    samples: Vec<AnnotatedImage>,
    records: Vec<SampleRecord>,
    pub split: DatasetSplit,
    by_id: HashMap<String, usize>,
}

impl Workspace {
    /// Loads (or generates) the dataset, resizes everything to the model's
    /// canonical input size, and builds the split.
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let samples = load_samples(config).stage("load-data")?;
        let records: Vec<SampleRecord> = samples
            .iter()
            .map(|s| SampleRecord {
                id: s.id.clone(),
                species: s.species.clone(),
                label: derive_sample_label(&s.boxes),
            })
            .collect();
        let split = build_split(&records, &config.split_config()).stage("split")?;
        let by_id = samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        Ok(Workspace { samples, records, split, by_id })
    }

    fn sample(&self, id: &str) -> Result<&AnnotatedImage> {
        self.by_id
            .get(id)
            .map(|&i| &self.samples[i])
            .ok_or_else(|| Error::Domain(format!("split references unknown sample id {id:?}")))
    }

    pub fn images_for(&self, ids: &[String]) -> Result<Vec<Image>> {
        ids.iter().map(|id| Ok(self.sample(id)?.image.clone())).collect()
    }

    pub fn labels_for(&self, ids: &[String]) -> Result<Vec<SampleLabel>> {
        ids.iter()
            .map(|id| {
                let i = self.by_id[id];
                Ok(self.records[i].label)
            })
            .collect()
    }

    pub fn species_for(&self, ids: &[String]) -> Result<Vec<String>> {
        ids.iter().map(|id| Ok(self.sample(id)?.species.clone())).collect()
    }

    /// Ids of OK training samples (the only images the autoencoder sees).
    pub fn train_ok_ids(&self) -> &[String] {
        // build_split already restricts train to OK samples.
        &self.split.train
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }
}

fn load_samples(config: &ExperimentConfig) -> Result<Vec<AnnotatedImage>> {
    let mut samples = match (&config.dataset.annotations, &config.dataset.synthetic) {
        (Some(path), _) => parse_annotations(path, config.dataset.format)?,
        (None, Some(synth)) => synthetic::generate(synth)?,
        (None, None) => {
            return Err(Error::Config(
                "dataset needs either `annotations` or a `[dataset.synthetic]` table".into(),
            ))
        }
    };
    let (channels, height, width) =
        (config.model.channels, config.model.height, config.model.width);
    for sample in &mut samples {
        let img = if channels == 1 && sample.image.channels() != 1 {
            Image::from_gray(sample.image.to_gray())?
        } else if sample.image.channels() != channels {
            return Err(Error::Domain(format!(
                "sample {} has {} channels but the model expects {channels}",
                sample.id,
                sample.image.channels()
            )));
        } else {
            sample.image.clone()
        };
        sample.image = canonical_resize(&img, height, width)?;
    }
    Ok(samples)
}

/// A trained (or resumed) autoencoder plus reconstructions of every split.
pub struct ModelArtifacts {
    pub meta: CheckpointMeta,
    pub trained_now: bool,
    pub train: Vec<ReconstructionTriplet>,
    pub val: Vec<ReconstructionTriplet>,
    pub test: Vec<ReconstructionTriplet>,
}

/// Trains the autoencoder for `config`'s model section, or loads a matching
/// checkpoint from `model_dir` when `resume` is set. Reconstructs all three
/// splits afterwards.
pub fn prepare_model(
    workspace: &Workspace,
    config: &ExperimentConfig,
    model_dir: &Path,
    resume: bool,
) -> Result<ModelArtifacts> {
    let spec = config.model_spec();
    let mut reused: Option<(Autoencoder, CheckpointMeta)> = None;
    if resume {
        if let Ok((model, meta)) = load_checkpoint(model_dir) {
            if meta.spec == spec {
                log::info!("resuming {} from {}", spec.model_id(), model_dir.display());
                reused = Some((model, meta));
            } else {
                log::warn!(
                    "checkpoint at {} was built from a different model spec; retraining",
                    model_dir.display()
                );
            }
        }
    }

    let trained_now = reused.is_none();
    let (mut model, meta) = match reused {
        Some(pair) => pair,
        None => {
            let train_images = workspace.images_for(workspace.train_ok_ids()).stage("train")?;
            // Early stopping watches reconstruction quality on the OK half
            // of the validation split; NOK samples stay unseen until scoring.
            let val_labels = workspace.labels_for(&workspace.split.val).stage("train")?;
            let val_ok_ids: Vec<String> = workspace
                .split
                .val
                .iter()
                .zip(&val_labels)
                .filter(|(_, l)| **l == SampleLabel::Ok)
                .map(|(id, _)| id.clone())
                .collect();
            let val_images = workspace.images_for(&val_ok_ids).stage("train")?;
            let mut model = build_model(&spec).stage("train")?;
            let log = train(&mut model, &train_images, &val_images, &config.training)
                .stage("train")?;
            let meta = save_checkpoint(&mut model, &log, model_dir).stage("train")?;
            (model, meta)
        }
    };

    let reconstruct_split = |model: &mut Autoencoder, ids: &[String]| -> Result<Vec<ReconstructionTriplet>> {
        let images = workspace.images_for(ids)?;
        let batch = config.training.batch_size.max(1);
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(batch) {
            out.extend(model.reconstruct_images(chunk)?);
        }
        Ok(out)
    };
    let train = reconstruct_split(&mut model, &workspace.split.train).stage("reconstruct")?;
    let val = reconstruct_split(&mut model, &workspace.split.val).stage("reconstruct")?;
    let test = reconstruct_split(&mut model, &workspace.split.test).stage("reconstruct")?;

    Ok(ModelArtifacts { meta, trained_now, train, val, test })
}

/// Feature records for all three splits under one extractor.
pub struct FeatureSets {
    pub train: Vec<FeatureRecord>,
    pub val: Vec<FeatureRecord>,
    pub test: Vec<FeatureRecord>,
}

/// Runs the configured extractor over every reconstruction triplet.
pub fn extract_features(
    workspace: &Workspace,
    artifacts: &ModelArtifacts,
    features: &FeaturesSection,
) -> Result<FeatureSets> {
    let extractor = Extractor::with_weights(features.kind, features.weights.as_deref())
        .stage("features")?
        .hardnet1_source(features.hardnet1_source);

    let run = |ids: &[String], triplets: &[ReconstructionTriplet]| -> Result<Vec<FeatureRecord>> {
        let labels = workspace.labels_for(ids)?;
        let values = crate::exec::map_slice(triplets, |t| extractor.extract(t));
        ids.iter()
            .zip(labels)
            .zip(values)
            .map(|((id, label), values)| {
                Ok(FeatureRecord { sample_id: id.clone(), label, values: values? })
            })
            .collect()
    };

    Ok(FeatureSets {
        train: run(&workspace.split.train, &artifacts.train).stage("features")?,
        val: run(&workspace.split.val, &artifacts.val).stage("features")?,
        test: run(&workspace.split.test, &artifacts.test).stage("features")?,
    })
}

pub(crate) fn feature_matrix(records: &[FeatureRecord]) -> Result<Array2<f64>> {
    if records.is_empty() {
        return Err(Error::Domain("no feature records to stack".into()));
    }
    let dim = records[0].values.len();
    let mut matrix = Array2::zeros((records.len(), dim));
    for (i, record) in records.iter().enumerate() {
        if record.values.len() != dim {
            return Err(Error::Shape(format!(
                "feature length mismatch: sample {} has {} values, expected {dim}",
                record.sample_id,
                record.values.len()
            )));
        }
        for (j, v) in record.values.iter().enumerate() {
            matrix[(i, j)] = *v as f64;
        }
    }
    Ok(matrix)
}

/// The per-combination result: the all-species report, per-species reports,
/// and which checkpoint produced the features.
pub struct ExperimentOutcome {
    pub report: EvaluationReport,
    pub species_reports: Vec<EvaluationReport>,
    pub checkpoint_digest: String,
    /// False when `--resume` found a usable checkpoint.
    pub trained_now: bool,
}

/// Fits scaler + classifier on train features, selects the threshold, scores
/// the test split, and persists the cell's artifacts under `cell_dir`.
pub fn classify_and_report(
    workspace: &Workspace,
    artifacts: &ModelArtifacts,
    features: &FeatureSets,
    classifier_cfg: &ClassifierSection,
    combination: CombinationId,
    cell_dir: &Path,
) -> Result<ExperimentOutcome> {
    fs::create_dir_all(cell_dir).map_err(|e| Error::io(cell_dir, e))?;

    let train_matrix = feature_matrix(&features.train).stage("scale")?;
    let scaler = RobustScaler::fit(&train_matrix).stage("scale")?;
    let train_scaled = scaler.transform(&train_matrix).stage("scale")?;

    let classifier = OneClassModel::fit(
        combination.classifier,
        &train_scaled,
        classifier_cfg.contamination,
        classifier_cfg.seed,
    )
    .stage("classifier")?;

    let score_split = |records: &[FeatureRecord]| -> Result<Vec<f64>> {
        let matrix = feature_matrix(records)?;
        classifier.scores(&scaler.transform(&matrix)?)
    };

    let source = classifier_cfg.threshold_source;
    let (threshold_records, threshold_ids) = match source {
        crate::oneclass::ThresholdSource::Validation => (&features.val, &workspace.split.val),
        crate::oneclass::ThresholdSource::Test => (&features.test, &workspace.split.test),
    };
    let threshold_scores = score_split(threshold_records).stage("threshold")?;
    let threshold_labels = workspace.labels_for(threshold_ids).stage("threshold")?;
    let threshold =
        select_threshold_eer(&threshold_scores, &threshold_labels, source).stage("threshold")?;

    let test_scores = score_split(&features.test).stage("evaluate")?;
    let test_labels = workspace.labels_for(&workspace.split.test).stage("evaluate")?;
    let report = build_report(combination, "all", &test_scores, &test_labels, threshold.clone())
        .stage("evaluate")?;

    let test_species = workspace.species_for(&workspace.split.test).stage("evaluate")?;
    let mut names: Vec<String> = test_species.clone();
    names.sort();
    names.dedup();
    let mut species_reports = Vec::new();
    for name in names {
        let idx: Vec<usize> =
            (0..test_species.len()).filter(|&i| test_species[i] == name).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| test_scores[i]).collect();
        let labels: Vec<SampleLabel> = idx.iter().map(|&i| test_labels[i]).collect();
        // ROC needs both classes; skip species the split left one-sided.
        if !(labels.contains(&SampleLabel::Ok) && labels.contains(&SampleLabel::Nok)) {
            log::warn!("species {name} has a one-sided test set; skipping its report row");
            continue;
        }
        species_reports.push(
            build_report(combination, &name, &scores, &labels, threshold.clone())
                .stage("evaluate")?,
        );
    }

    persist_cell(
        cell_dir,
        workspace,
        features,
        &report,
        &species_reports,
        &ModelBundle { feature_kind: combination.extractor, scaler, classifier, threshold },
        &test_scores,
    )
    .stage("persist")?;

    Ok(ExperimentOutcome {
        report,
        species_reports,
        checkpoint_digest: artifacts.meta.weights_digest.clone(),
        trained_now: artifacts.trained_now,
    })
}

fn persist_cell(
    cell_dir: &Path,
    workspace: &Workspace,
    features: &FeatureSets,
    report: &EvaluationReport,
    species_reports: &[EvaluationReport],
    bundle: &ModelBundle,
    test_scores: &[f64],
) -> Result<()> {
    write_features_csv(&cell_dir.join("features_train.csv"), &features.train)?;
    write_features_csv(&cell_dir.join("features_val.csv"), &features.val)?;
    write_features_csv(&cell_dir.join("features_test.csv"), &features.test)?;
    bundle.save(&cell_dir.join("bundle.json"))?;

    let mut reports = vec![report.clone()];
    reports.extend_from_slice(species_reports);
    write_reports_csv(&cell_dir.join("report.csv"), &reports)?;
    // The JSON twin keeps full precision; the grid reloads it on resume.
    let json_path = cell_dir.join("report.json");
    let json = serde_json::to_string_pretty(&reports)
        .map_err(|e| Error::Artifact(format!("report serialization: {e}")))?;
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let scores_path = cell_dir.join("scores.csv");
    let mut writer = csv::Writer::from_path(&scores_path)
        .map_err(|e| Error::io(&scores_path, std::io::Error::other(e)))?;
    writer
        .write_record(["id", "species", "label", "score"])
        .map_err(|e| Error::io(&scores_path, std::io::Error::other(e)))?;
    let species = workspace.species_for(&workspace.split.test)?;
    let labels = workspace.labels_for(&workspace.split.test)?;
    for (((id, sp), label), score) in
        workspace.split.test.iter().zip(species).zip(labels).zip(test_scores)
    {
        writer
            .write_record([id.as_str(), sp.as_str(), &label.to_string(), &score.to_string()])
            .map_err(|e| Error::io(&scores_path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| Error::io(&scores_path, e))?;
    Ok(())
}

/// Writes the split's id lists next to the grid index for traceability.
pub fn persist_split(root: &Path, split: &DatasetSplit) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join("split.json");
    let json = serde_json::to_string_pretty(split)
        .map_err(|e| Error::Artifact(format!("split serialization: {e}")))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Output directory layout shared by the single runner and the grid.
pub fn grid_root(config: &ExperimentConfig) -> PathBuf {
    config.output.dir.join(&config.output.grid_id)
}

pub fn model_dir(root: &Path, model_id: &str) -> PathBuf {
    root.join("models").join(model_id)
}

pub fn cell_dir(root: &Path, combination: &CombinationId) -> PathBuf {
    root.join(combination.to_string())
}

/// Runs the one combination described by `config` end to end.
pub fn run_experiment(config: &ExperimentConfig, resume: bool) -> Result<ExperimentOutcome> {
    config.validate()?;
    let root = grid_root(config);
    let workspace = Workspace::build(config)?;
    persist_split(&root, &workspace.split).stage("persist")?;

    let spec = config.model_spec();
    let artifacts = prepare_model(&workspace, config, &model_dir(&root, &spec.model_id()), resume)?;
    let features = extract_features(&workspace, &artifacts, &config.features)?;
    let combination = config.combination();
    classify_and_report(
        &workspace,
        &artifacts,
        &features,
        &config.classifier,
        combination,
        &cell_dir(&root, &combination),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::config::parse_config;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
            [dataset]
            species = "Synthetica"

            [dataset.synthetic]
            ok_count = 40
            nok_count = 12
            height = 64
            width = 64
            seed = 7

            [model]
            core = "bae1"
            conv_pair = "convm1"
            height = 64
            width = 64

            [training]
            epochs = 2
            batch_size = 8
            patience = 2

            [features]
            kind = "errmetrics"

            [classifier]
            kind = "robustcovariance"

            [output]
            dir = "{}"
            grid_id = "exp"
            "#,
            dir.display()
        );
        parse_config(&text, Vec::new()).unwrap()
    }

    #[test]
    fn workspace_split_partitions_known_ids() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let ws = Workspace::build(&config).unwrap();
        assert!(!ws.split.train.is_empty());
        assert!(!ws.split.val.is_empty());
        assert!(!ws.split.test.is_empty());
        // Train is OK-only.
        for label in ws.labels_for(&ws.split.train).unwrap() {
            assert_eq!(label, SampleLabel::Ok);
        }
        // Every id resolves and the split is disjoint.
        let mut seen = std::collections::HashSet::new();
        for id in ws.split.train.iter().chain(&ws.split.val).chain(&ws.split.test) {
            assert!(seen.insert(id.clone()), "duplicate id {id}");
            ws.sample(id).unwrap();
        }
        assert!(seen.len() <= ws.record_count());
    }

    #[test]
    fn experiment_produces_report_and_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let outcome = run_experiment(&config, false).unwrap();
        assert!(outcome.trained_now);
        assert_eq!(outcome.report.species, "all");
        assert!((0.0..=1.0).contains(&outcome.report.f1));
        assert_eq!(outcome.species_reports.len(), 1);
        assert_eq!(outcome.species_reports[0].species, "Synthetica");

        let root = grid_root(&config);
        let cell = cell_dir(&root, &config.combination());
        for file in [
            "features_train.csv",
            "features_val.csv",
            "features_test.csv",
            "bundle.json",
            "report.csv",
            "report.json",
            "scores.csv",
        ] {
            assert!(cell.join(file).exists(), "missing {file}");
        }
        assert!(root.join("split.json").exists());
        assert!(model_dir(&root, &config.model_spec().model_id()).join("weights.bin").exists());
    }

    #[test]
    fn resume_skips_training_and_reproduces_the_report() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let first = run_experiment(&config, false).unwrap();
        let second = run_experiment(&config, true).unwrap();
        assert!(first.trained_now);
        assert!(!second.trained_now, "resume retrained despite a valid checkpoint");
        assert_eq!(first.checkpoint_digest, second.checkpoint_digest);
        assert_eq!(first.report.f1, second.report.f1);
        assert_eq!(first.report.auc, second.report.auc);
        assert_eq!(first.report.threshold.value, second.report.threshold.value);
    }

    #[test]
    fn fresh_reruns_are_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = run_experiment(&tiny_config(dir_a.path()), false).unwrap();
        let b = run_experiment(&tiny_config(dir_b.path()), false).unwrap();
        assert_eq!(a.report.f1, b.report.f1);
        assert_eq!(a.report.auc, b.report.auc);
        assert_eq!(a.report.threshold.value, b.report.threshold.value);
        assert_eq!(a.checkpoint_digest, b.checkpoint_digest);
    }
}
