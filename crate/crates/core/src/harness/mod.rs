//! Environments, experiment configuration, run orchestration and result
//! emission.
//!
//! A run directory holds `config.json`, `trainlog.csv` / `trainlog.jsonl`,
//! the final `params.json` and a `summary.json`; nothing in it depends on the
//! wall clock, so rerunning a config reproduces it byte for byte.

mod config;
mod env;
mod report;
mod run;

pub use config::{ConvergenceConfig, ExperimentConfig, OUT_DIR_ENV, PRESETS};
pub use env::{EnvKind, Environment, EnvironmentSpec, RewardSource, MAX_BANDIT_OUTPUTS};
pub use report::{
    compare_runs, emit_plotdata, load_run, load_trainlog, to_csv, AlignedRow, Comparison,
    ComparisonRow, LoadedRun, PlotRow, Series, TRAINLOG_COLUMNS,
};
pub use run::{
    run_all_seeds, run_experiment, seed_dir, train_for_convergence, train_run, ConvergenceSummary,
    Run, RunOutput, RunSummary, TrajectoryOutcome,
};
