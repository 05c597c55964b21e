//! Experiment plumbing: scenario files, seeded episode batches with CSV
//! output, finite-model bound checks and random environment generation.

mod bounds;
mod config;
mod envs;
mod experiment;

pub use bounds::{random_bound_suite, verify_bounds, BoundsReport};
pub use config::{EnvironmentRef, ScenarioConfig, TableSettings};
pub use envs::{random_environments, GeneratedEnvironment, ObstacleSize, PLACEMENT_RETRIES};
pub use experiment::{
    build_table, mean_ci95, obtain_table, relative_value_difference, run_experiment, sensitivity_sweep, write_csv,
    write_csv_file, ResultRow, RunOptions,
};
