//! Orchestration: configuration files, single-experiment execution, the
//! combination grid with resumable bookkeeping, table export and plots.

pub mod config;
pub mod experiment;
pub mod grid;
pub mod plots;
pub mod tables;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use experiment::{run_experiment, ExperimentOutcome, Workspace};
pub use grid::{
    enumerate_combinations, load_grid_reports, run_grid, CellStatus, GridEntry, GridIndex,
    GridResult,
};
pub use plots::{
    feature_scatter_spec, reconstruction_panel, render, render_cell_plots, render_panels,
    roc_plot_spec, PlotSpec,
};
pub use tables::{best_combination, export_tables, TableStyle};
