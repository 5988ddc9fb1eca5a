//! Experiment protocols, from corpus generation to report files.

mod config;
mod report;
mod runners;

pub use config::{ExperimentConfig, ExperimentId, SimDefaults, DESK_CHANNELS, DESK_RESNET_EPOCHS};
pub use report::{per_seed_csv, render_table, rows_from_csv, rows_to_csv, summarize, write_run, ReportRow};
pub use runners::{
    check_leakage, run_e1, run_e2, run_e3, run_e4, run_epsilon, run_experiment, ExperimentOutcome, SeedResult,
};
