//! Experiment runner for the Riemannian SPIDER optimizers on synthetic
//! eigengap instances.
//!
//! A sweep runs every `(algo, delta, seed)` cell, checkpoints each run at IFO
//! epoch boundaries and writes one CSV row per checkpoint, plus a summary of
//! median epochs-to-double-accuracy against `1/delta`.

pub mod cli;
pub mod config;
pub mod experiment;

pub use cli::cli_main;
pub use config::{Algo, ExperimentConfig};
pub use experiment::{
    fmt_f64, run_cell, run_cell_on, run_cells, run_sweep, summarize, write_csv, write_summary, CellResult, CsvRow,
    SummaryRow, SweepOutput, CSV_HEADER,
};
