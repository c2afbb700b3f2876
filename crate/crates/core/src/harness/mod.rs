//! Experiment orchestration: configuration, variants, artifacts and
//! comparisons.

mod config;
mod experiment;
mod report;

pub use config::{ExperimentConfig, NoiseType, Variant, OUT_ENV};
pub use experiment::{
    build_benchmark, expand_grid, filter_benchmark, generate_data, run_experiment, run_experiment_to_dir, run_on,
    sweep, warm_start, warm_start_from, write_artifacts, Benchmark, ExperimentResult, SweepRow, WarmStart,
};
pub use report::{
    compare_dirs, compare_summaries, read_csv, write_csv, Comparison, Delta, EpochRow, Summary, ThresholdRow,
};
