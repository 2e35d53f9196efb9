//! Seeded experiment harness: configuration, the attack/defense pipeline,
//! calibration curves, diversity trajectories, latency benchmarking and
//! metric aggregation.

mod config;
mod run;
mod tools;
mod trial;

pub use config::{ExperimentConfig, GraphSource};
pub use run::{
    account_name, attack_cell, run, CellResult, MetricsRow, RunOutcome, DOWNSTREAM_COLUMNS,
    MANIFEST_HEADER, METRICS_HEADER,
};
pub use tools::{
    bench, calibration_csv, diversity, diversity_csv, report, report_table, summarize, BenchReport,
    CellSummary, NoiseParams, Stat, Trajectory, CALIBRATION_POINTS,
};
pub use trial::{
    experiment_graph, serving_embeddings, stage_seed, trial_seed, TrialContext,
    MIN_DOWNSTREAM_MEMBERS,
};
