//! The combination grid: enumerate core × conv pair × extractor ×
//! classifier, train one autoencoder per (conv pair, core) and fan its
//! reconstructions out to every extractor and classifier.
//!
//! The grid is resumable. A cell counts as complete when the index marks it
//! complete *and* its `report.json` still exists, so deleting one cell's
//! report recomputes exactly that cell. Failures are recorded in the index
//! and the grid moves on.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{write_reports_csv, CombinationId, EvaluationReport};
use crate::runner::config::{ExperimentConfig, FeaturesSection, GridSection};
use crate::runner::experiment::{
    cell_dir, classify_and_report, extract_features, grid_root, model_dir, persist_split,
    prepare_model, Workspace,
};

/// Completion state of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Complete,
    Failed,
}

/// One row of the grid index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEntry {
    pub combination: String,
    pub status: CellStatus,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    /// Error rendering for failed cells.
    pub message: Option<String>,
    pub wall_seconds: f64,
    /// Digest of the checkpoint the cell's features came from.
    pub checkpoint_digest: Option<String>,
}

/// Training bookkeeping for one shared model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEntry {
    pub model_id: String,
    pub checkpoint_digest: Option<String>,
    pub trained_now: bool,
    pub wall_seconds: f64,
    /// Error rendering when training or reconstruction failed.
    pub message: Option<String>,
}

/// Persisted grid state: one entry per attempted cell, one per model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridIndex {
    pub grid_id: String,
    pub entries: Vec<GridEntry>,
    pub models: Vec<ModelEntry>,
}

impl GridIndex {
    fn new(grid_id: &str) -> Self {
        GridIndex { grid_id: grid_id.to_string(), entries: Vec::new(), models: Vec::new() }
    }

    fn upsert(&mut self, entry: GridEntry) {
        match self.entries.iter_mut().find(|e| e.combination == entry.combination) {
            Some(slot) => *slot = entry,
            None => self.entries.push(entry),
        }
    }

    fn upsert_model(&mut self, entry: ModelEntry) {
        match self.models.iter_mut().find(|m| m.model_id == entry.model_id) {
            Some(slot) => *slot = entry,
            None => self.models.push(entry),
        }
    }

    fn save(&self, root: &Path) -> Result<()> {
        let path = root.join("index.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Artifact(format!("grid index serialization: {e}")))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    fn load(root: &Path) -> Result<Self> {
        let path = root.join("index.json");
        let json = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&json).map_err(|e| Error::Parse {
            context: format!("grid index {}", path.display()),
            message: e.to_string(),
        })
    }
}

/// Outcome of a grid run.
pub struct GridResult {
    /// All-species reports, ranked by F1 descending; ties break on the
    /// lexicographically smaller combination id.
    pub reports: Vec<EvaluationReport>,
    /// Per-species rows for every completed combination.
    pub species_reports: Vec<EvaluationReport>,
    pub index: GridIndex,
    /// Models trained in this invocation (resumed checkpoints not counted).
    pub trainings_performed: usize,
}

impl GridResult {
    /// All report rows, the all-species row of each combination first.
    pub fn all_rows(&self) -> Vec<EvaluationReport> {
        let mut rows = self.reports.clone();
        rows.extend(self.species_reports.iter().cloned());
        rows
    }
}

/// Expands the grid ranges into combination ids, model-major: cells that
/// share a (conv pair, core) model are adjacent. Duplicate range values are
/// collapsed so ids stay unique.
pub fn enumerate_combinations(grid: &GridSection) -> Vec<CombinationId> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &conv_pair in &grid.conv_pairs {
        for &core in &grid.cores {
            for &extractor in &grid.extractors {
                for &classifier in &grid.classifiers {
                    let id = CombinationId { core, conv_pair, extractor, classifier };
                    if seen.insert(id) {
                        out.push(id);
                    }
                }
            }
        }
    }
    out
}

fn rank_reports(reports: &mut [EvaluationReport]) {
    reports.sort_by(|a, b| {
        b.f1.total_cmp(&a.f1)
            .then_with(|| a.combination.to_string().cmp(&b.combination.to_string()))
    });
}

fn load_cell_reports(path: &Path) -> Result<Vec<EvaluationReport>> {
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&json).map_err(|e| Error::Parse {
        context: format!("cell report {}", path.display()),
        message: e.to_string(),
    })
}

/// Runs every combination in the configured ranges. With `resume`, cells
/// whose reports are already on disk are reloaded instead of recomputed and
/// existing checkpoints are reused instead of retrained.
pub fn run_grid(config: &ExperimentConfig, resume: bool) -> Result<GridResult> {
    config.validate()?;
    let root = grid_root(config);
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;

    let mut index = if resume {
        GridIndex::load(&root).unwrap_or_else(|_| GridIndex::new(&config.output.grid_id))
    } else {
        GridIndex::new(&config.output.grid_id)
    };

    let combinations = enumerate_combinations(&config.grid);
    log::info!("grid {}: {} combinations", config.output.grid_id, combinations.len());

    let workspace = Workspace::build(config)?;
    persist_split(&root, &workspace.split)?;

    let complete: HashMap<String, ()> = index
        .entries
        .iter()
        .filter(|e| e.status == CellStatus::Complete)
        .map(|e| (e.combination.clone(), ()))
        .collect();
    let is_complete = |id: &CombinationId| -> bool {
        resume
            && complete.contains_key(&id.to_string())
            && cell_dir(&root, id).join("report.json").exists()
    };

    let mut reports: Vec<EvaluationReport> = Vec::new();
    let mut species_reports: Vec<EvaluationReport> = Vec::new();
    let mut trainings = 0usize;

    // Model-major walk; `enumerate_combinations` already groups cells that
    // share a model, so detecting group boundaries by model id suffices.
    let mut i = 0;
    while i < combinations.len() {
        let model_id = combinations[i].model_id();
        let mut group = Vec::new();
        while i < combinations.len() && combinations[i].model_id() == model_id {
            group.push(combinations[i]);
            i += 1;
        }

        // Reload reports for cells that are already done.
        let mut pending = Vec::new();
        for id in &group {
            if is_complete(id) {
                let loaded = load_cell_reports(&cell_dir(&root, id).join("report.json"))?;
                for report in loaded {
                    if report.species == "all" {
                        reports.push(report);
                    } else {
                        species_reports.push(report);
                    }
                }
            } else {
                pending.push(*id);
            }
        }
        if pending.is_empty() {
            log::info!("{model_id}: all cells complete, skipping");
            continue;
        }

        let mut cell_config = config.clone();
        cell_config.model.conv_pair = pending[0].conv_pair;
        cell_config.model.core = pending[0].core;

        let started = Instant::now();
        let artifacts =
            match prepare_model(&workspace, &cell_config, &model_dir(&root, &model_id), resume) {
                Ok(a) => a,
                Err(err) => {
                    // The whole group depends on this model: fail its cells.
                    let message = err.to_string();
                    log::error!("{model_id}: {message}");
                    index.upsert_model(ModelEntry {
                        model_id: model_id.clone(),
                        checkpoint_digest: None,
                        trained_now: false,
                        wall_seconds: started.elapsed().as_secs_f64(),
                        message: Some(message.clone()),
                    });
                    for id in &pending {
                        index.upsert(GridEntry {
                            combination: id.to_string(),
                            status: CellStatus::Failed,
                            f1: None,
                            auc: None,
                            message: Some(message.clone()),
                            wall_seconds: 0.0,
                            checkpoint_digest: None,
                        });
                    }
                    index.save(&root)?;
                    continue;
                }
            };
        if artifacts.trained_now {
            trainings += 1;
        }
        index.upsert_model(ModelEntry {
            model_id: model_id.clone(),
            checkpoint_digest: Some(artifacts.meta.weights_digest.clone()),
            trained_now: artifacts.trained_now,
            wall_seconds: started.elapsed().as_secs_f64(),
            message: None,
        });
        index.save(&root)?;

        // One extraction per extractor feeds all of its classifier cells.
        let mut extractors: Vec<_> = pending.iter().map(|c| c.extractor).collect();
        extractors.dedup();
        for extractor in extractors {
            let features_cfg = FeaturesSection { kind: extractor, ..config.features.clone() };
            let cells: Vec<CombinationId> =
                pending.iter().filter(|c| c.extractor == extractor).copied().collect();
            let feature_started = Instant::now();
            let features = match extract_features(&workspace, &artifacts, &features_cfg) {
                Ok(f) => f,
                Err(err) => {
                    let message = err.to_string();
                    log::error!("{model_id}/{extractor}: {message}");
                    for id in &cells {
                        index.upsert(GridEntry {
                            combination: id.to_string(),
                            status: CellStatus::Failed,
                            f1: None,
                            auc: None,
                            message: Some(message.clone()),
                            wall_seconds: feature_started.elapsed().as_secs_f64(),
                            checkpoint_digest: Some(artifacts.meta.weights_digest.clone()),
                        });
                    }
                    index.save(&root)?;
                    continue;
                }
            };

            for id in cells {
                let cell_started = Instant::now();
                let outcome = classify_and_report(
                    &workspace,
                    &artifacts,
                    &features,
                    &config.classifier,
                    id,
                    &cell_dir(&root, &id),
                );
                let entry = match outcome {
                    Ok(outcome) => {
                        let entry = GridEntry {
                            combination: id.to_string(),
                            status: CellStatus::Complete,
                            f1: Some(outcome.report.f1),
                            auc: Some(outcome.report.auc),
                            message: None,
                            wall_seconds: cell_started.elapsed().as_secs_f64(),
                            checkpoint_digest: Some(outcome.checkpoint_digest.clone()),
                        };
                        reports.push(outcome.report);
                        species_reports.extend(outcome.species_reports);
                        entry
                    }
                    Err(err) => {
                        let message = err.to_string();
                        log::error!("{id}: {message}");
                        GridEntry {
                            combination: id.to_string(),
                            status: CellStatus::Failed,
                            f1: None,
                            auc: None,
                            message: Some(message),
                            wall_seconds: cell_started.elapsed().as_secs_f64(),
                            checkpoint_digest: Some(artifacts.meta.weights_digest.clone()),
                        }
                    }
                };
                index.upsert(entry);
                index.save(&root)?;
            }
        }
    }

    rank_reports(&mut reports);
    let result = GridResult { reports, species_reports, index, trainings_performed: trainings };

    let rows = result.all_rows();
    if !rows.is_empty() {
        write_reports_csv(&root.join("reports.csv"), &rows)?;
    }
    let json_path = root.join("reports.json");
    let json = serde_json::to_string_pretty(&rows)
        .map_err(|e| Error::Artifact(format!("grid reports serialization: {e}")))?;
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    Ok(result)
}

/// Reloads the report rows a finished grid wrote next to its index.
pub fn load_grid_reports(root: &Path) -> Result<Vec<EvaluationReport>> {
    let path = root.join("reports.json");
    if !path.exists() {
        return Err(Error::Domain(format!(
            "no grid reports at {}; run the grid first",
            path.display()
        )));
    }
    load_cell_reports(&path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{AeCore, ConvPair};
    use crate::features::FeatureKind;
    use crate::oneclass::OneClassKind;
    use crate::runner::config::parse_config;

    #[test]
    fn full_ranges_enumerate_every_combination_once() {
        let ids = enumerate_combinations(&GridSection::default());
        assert_eq!(ids.len(), 720);
        let unique: std::collections::HashSet<String> =
            ids.iter().map(|c| c.to_string()).collect();
        assert_eq!(unique.len(), 720);
        // Model-major: consecutive ids alternate model only every 24 cells.
        let models: Vec<String> = ids.iter().map(|c| c.model_id()).collect();
        for chunk in models.chunks(24) {
            assert!(chunk.iter().all(|m| m == &chunk[0]));
        }
    }

    #[test]
    fn duplicate_range_values_do_not_duplicate_ids() {
        let grid = GridSection {
            cores: vec![AeCore::Bae1, AeCore::Bae1],
            conv_pairs: vec![ConvPair::ConvM1],
            extractors: vec![FeatureKind::ErrMetrics],
            classifiers: vec![OneClassKind::Lof, OneClassKind::Lof],
        };
        assert_eq!(enumerate_combinations(&grid).len(), 1);
    }

    fn tiny_grid_config(dir: &Path) -> ExperimentConfig {
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
            height = 64
            width = 64

            [training]
            epochs = 2
            batch_size = 8
            patience = 2

            [grid]
            cores = ["bae1"]
            conv_pairs = ["convm1"]
            extractors = ["errmetrics", "hardnet3"]
            classifiers = ["robustcovariance", "lof"]

            [output]
            dir = "{}"
            grid_id = "mini"
            "#,
            dir.display()
        );
        parse_config(&text, Vec::new()).unwrap()
    }

    #[test]
    fn restricted_grid_shares_one_training_across_cells() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_grid_config(dir.path());
        let result = run_grid(&config, false).unwrap();

        assert_eq!(result.trainings_performed, 1);
        assert_eq!(result.reports.len(), 4);
        assert_eq!(result.index.entries.len(), 4);
        assert!(result.index.entries.iter().all(|e| e.status == CellStatus::Complete));

        // Every cell references the same checkpoint.
        let digests: std::collections::HashSet<&String> = result
            .index
            .entries
            .iter()
            .filter_map(|e| e.checkpoint_digest.as_ref())
            .collect();
        assert_eq!(digests.len(), 1);

        // Ranking is F1-descending with lexicographic tie-break.
        for pair in result.reports.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert!(
                a.f1 > b.f1
                    || (a.f1 == b.f1
                        && a.combination.to_string() <= b.combination.to_string())
            );
        }

        let root = grid_root(&config);
        assert!(root.join("index.json").exists());
        assert!(root.join("reports.csv").exists());
        assert!(root.join("reports.json").exists());
    }

    #[test]
    fn resume_recomputes_only_the_deleted_cell() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_grid_config(dir.path());
        let first = run_grid(&config, false).unwrap();
        assert_eq!(first.trainings_performed, 1);
        let root = grid_root(&config);

        // Tamper with one completed cell's stored report; delete another's.
        let kept = &first.reports[0].combination.clone();
        let deleted = &first.reports[1].combination.clone();
        let kept_path = cell_dir(&root, kept).join("report.json");
        let mut kept_reports = load_cell_reports(&kept_path).unwrap();
        kept_reports[0].f1 = 0.123456;
        fs::write(&kept_path, serde_json::to_string(&kept_reports).unwrap()).unwrap();
        fs::remove_file(cell_dir(&root, deleted).join("report.json")).unwrap();

        let second = run_grid(&config, true).unwrap();
        assert_eq!(second.trainings_performed, 0, "resume must not retrain");
        assert_eq!(second.reports.len(), 4);

        // The tampered cell was reloaded, not recomputed.
        let kept_row = second
            .reports
            .iter()
            .find(|r| r.combination == *kept)
            .unwrap();
        assert_eq!(kept_row.f1, 0.123456);
        // The deleted cell was recomputed and its report restored.
        assert!(cell_dir(&root, deleted).join("report.json").exists());
        let deleted_first = first.reports.iter().find(|r| r.combination == *deleted).unwrap();
        let deleted_second = second.reports.iter().find(|r| r.combination == *deleted).unwrap();
        assert_eq!(deleted_first.f1, deleted_second.f1);
    }

    #[test]
    fn cell_failures_are_recorded_and_the_grid_finishes() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_grid_config(dir.path());
        // Invalid contamination fails every classifier fit, after training.
        config.classifier.contamination = 0.9;
        let result = run_grid(&config, false).unwrap();
        assert_eq!(result.trainings_performed, 1);
        assert!(result.reports.is_empty());
        assert_eq!(result.index.entries.len(), 4);
        assert!(result.index.entries.iter().all(|e| e.status == CellStatus::Failed));
        assert!(result
            .index
            .entries
            .iter()
            .all(|e| e.message.as_deref().is_some_and(|m| m.contains("contamination"))));
    }
}
