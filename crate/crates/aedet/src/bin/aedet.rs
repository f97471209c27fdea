//! Command-line entry point: data preparation, training, single runs, the
//! combination grid, table export and plot rendering.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use aedet::dataset::{synthetic, write_coco_dataset};
use aedet::runner::experiment::{cell_dir, grid_root, model_dir, prepare_model, Workspace};
use aedet::runner::{
    export_tables, load_config, load_grid_reports, render_cell_plots, render_panels,
    run_experiment, run_grid, ExperimentConfig, TableStyle,
};
use aedet::Result;

#[derive(Parser)]
#[command(
    name = "aedet",
    version,
    about = "Autoencoder-based image anomaly detection: reconstruct, extract, classify"
)]
struct Cli {
    /// TOML configuration file; defaults plus PIPELINE_* overrides otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Species scope: a species name or "all".
    #[arg(long, global = true)]
    species: Option<String>,

    /// Overrides the split, model, training and classifier seeds at once.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory root (overrides the config's `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for data-parallel loops; 1 forces sequential mode.
    #[arg(long, global = true)]
    parallel: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic fixture and save it as a COCO-style dataset.
    PrepareData {
        /// Directory the images and annotation file are written into.
        #[arg(long, default_value = "data/synthetic")]
        dir: PathBuf,
    },
    /// Train the configured autoencoder and store its checkpoint.
    Train {
        /// Reuse an existing checkpoint instead of retraining.
        #[arg(long)]
        resume: bool,
    },
    /// Run the single configured combination end to end.
    Run {
        /// Reuse an existing checkpoint instead of retraining.
        #[arg(long)]
        resume: bool,
    },
    /// Run every combination in the configured grid ranges.
    Grid {
        /// Skip completed combinations and reuse existing checkpoints.
        #[arg(long)]
        resume: bool,
    },
    /// Export ranked CSV tables from a finished grid.
    Report {
        /// One table style; all styles are attempted when omitted.
        #[arg(long)]
        style: Option<String>,
    },
    /// Render ROC, feature-space and reconstruction-panel plots.
    Plot {
        /// Number of reconstruction panels (NOK samples first).
        #[arg(long, default_value_t = 4)]
        panels: usize,
    },
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(species) = &cli.species {
        config.dataset.species = species.clone();
    }
    if let Some(seed) = cli.seed {
        config.split.seed = seed;
        config.model.seed = seed;
        config.training.seed = seed;
        config.classifier.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if config.dataset.annotations.is_none() && config.dataset.synthetic.is_none() {
        log::info!("no dataset configured; falling back to the synthetic fixture");
        config.dataset.synthetic = Some(synthetic::SyntheticConfig::default());
        if config.dataset.species == "all" {
            config.dataset.species = "Synthetica".into();
        }
    }
    Ok(config)
}

fn configure_parallelism(requested: Option<usize>) {
    let Some(n) = requested else { return };
    if n <= 1 {
        aedet::exec::force_sequential(true);
        return;
    }
    #[cfg(feature = "parallel")]
    {
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool to {n}: {err}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the `parallel` feature; --parallel {n} runs sequentially");
}

fn run(cli: Cli) -> Result<()> {
    configure_parallelism(cli.parallel);

    match &cli.command {
        Command::PrepareData { dir } => {
            let config = effective_config(&cli)?;
            let synth = config.dataset.synthetic.clone().unwrap_or_default();
            let samples = synthetic::generate(&synth)?;
            let annotations = write_coco_dataset(dir, &samples)?;
            println!(
                "wrote {} samples; point [dataset] annotations at {}",
                samples.len(),
                annotations.display()
            );
        }
        Command::Train { resume } => {
            let config = effective_config(&cli)?;
            config.validate()?;
            let root = grid_root(&config);
            let workspace = Workspace::build(&config)?;
            let spec = config.model_spec();
            let dir = model_dir(&root, &spec.model_id());
            let artifacts = prepare_model(&workspace, &config, &dir, *resume)?;
            let log = &artifacts.meta.log;
            let best_val = log
                .best_val
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "n/a".into());
            println!(
                "{} {} at {}: best val loss {best_val} (epoch {}), digest {}",
                spec.model_id(),
                if artifacts.trained_now { "trained" } else { "reused" },
                dir.display(),
                log.best_epoch,
                artifacts.meta.weights_digest
            );
        }
        Command::Run { resume } => {
            let config = effective_config(&cli)?;
            let outcome = run_experiment(&config, *resume)?;
            println!("{}", outcome.report);
            for report in &outcome.species_reports {
                println!("{report}");
            }
            let cell = cell_dir(&grid_root(&config), &config.combination());
            println!("artifacts under {}", cell.display());
        }
        Command::Grid { resume } => {
            let config = effective_config(&cli)?;
            let result = run_grid(&config, *resume)?;
            let failed = result
                .index
                .entries
                .iter()
                .filter(|e| e.status == aedet::runner::CellStatus::Failed)
                .count();
            println!(
                "grid {}: {} combinations, {} trainings, {} failed",
                result.index.grid_id,
                result.index.entries.len(),
                result.trainings_performed,
                failed
            );
            for report in result.reports.iter().take(10) {
                println!("{report}");
            }
            println!("index at {}", grid_root(&config).join("index.json").display());
        }
        Command::Report { style } => {
            let config = effective_config(&cli)?;
            let root = grid_root(&config);
            let reports = load_grid_reports(&root)?;
            let tables_dir = root.join("tables");
            let styles: Vec<TableStyle> = match style {
                Some(name) => vec![name.parse()?],
                None => TableStyle::ALL.to_vec(),
            };
            let explicit = style.is_some();
            for style in styles {
                match export_tables(&reports, style, &tables_dir) {
                    Ok(paths) => {
                        for path in paths {
                            println!("wrote {}", path.display());
                        }
                    }
                    Err(err) if !explicit => log::warn!("skipping {style}: {err}"),
                    Err(err) => return Err(err),
                }
            }
        }
        Command::Plot { panels } => {
            let config = effective_config(&cli)?;
            let cell = cell_dir(&grid_root(&config), &config.combination());
            for path in render_cell_plots(&cell)? {
                println!("wrote {}", path.display());
            }
            for path in render_panels(&config, *panels)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(cause) = source {
            eprintln!("  caused by: {cause}");
            source = cause.source();
        }
        std::process::exit(1);
    }
}

// Clap's derive covers argument parsing; this only pins the external
// surface: subcommand names and the shared flags.
#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_declares_the_documented_surface() {
        Cli::command().debug_assert();
        let cmd = Cli::command();
        let subcommands: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
        for expected in ["prepare-data", "train", "run", "grid", "report", "plot"] {
            assert!(subcommands.contains(&expected), "missing subcommand {expected}");
        }
        let args: Vec<&str> = cmd.get_arguments().filter_map(|a| a.get_long()).collect();
        for expected in ["config", "species", "seed", "out", "parallel"] {
            assert!(args.contains(&expected), "missing flag --{expected}");
        }
    }

    #[test]
    fn resume_flag_parses_on_the_grid_subcommand() {
        let cli = Cli::parse_from(["aedet", "grid", "--resume"]);
        match cli.command {
            Command::Grid { resume } => assert!(resume),
            _ => panic!("expected grid subcommand"),
        }
    }
}
