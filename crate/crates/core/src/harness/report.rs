use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::TrainLogRow;

use super::run::RunSummary;

/// Columns every `trainlog.csv` must carry.
pub const TRAINLOG_COLUMNS: &[&str] = &[
    "step",
    "objective",
    "grad_norm",
    "grad_norm_clipped",
    "grad_class",
    "mean_raw_reward",
    "mean_dithered_reward",
    "reward_variance",
    "dithered_reward_variance",
    "reward_accuracy",
    "clip_fraction",
    "kl",
    "groups_filtered",
    "noise_sigma_effective",
    "expected_reward",
    "anomaly",
];

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub id: String,
    pub log: Vec<TrainLogRow>,
    pub summary: RunSummary,
}

pub fn load_trainlog(path: &Path) -> Result<Vec<TrainLogRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::input(format!("{}: {other:?}", path.display())),
    })?;
    let headers = reader.headers()?.clone();
    for col in TRAINLOG_COLUMNS {
        if !headers.iter().any(|h| h == *col) {
            return Err(Error::input(format!("{} is missing column `{col}`", path.display())));
        }
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let log = load_trainlog(&dir.join("trainlog.csv"))?;
    let summary_path = dir.join("summary.json");
    let s = std::fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    Ok(LoadedRun {
        id: dir.display().to_string(),
        log,
        summary: serde_json::from_str(&s)?,
    })
}

/// One summary row of a comparison against the first run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run_id: String,
    pub steps: u64,
    pub final_expected_reward: f64,
    pub delta_final_expected_reward: f64,
    pub vanish_fraction: f64,
    pub delta_vanish_fraction: f64,
    pub explode_fraction: f64,
    pub delta_explode_fraction: f64,
    pub longest_vanish_streak: u64,
    pub mean_grad_norm: f64,
    pub delta_mean_grad_norm: f64,
    pub t_gamma: Option<u64>,
    /// First step at which this run's expected reward reaches the reference
    /// run's reward at the reference step.
    pub steps_to_reach_reference: Option<u64>,
    /// `steps_to_reach_reference` over the reference step.
    pub fraction_of_reference_steps: Option<f64>,
}

/// One long-format per-step row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedRow {
    pub step: u64,
    pub run_id: String,
    pub expected_reward: Option<f64>,
    pub grad_norm: f64,
    pub mean_raw_reward: f64,
    pub mean_dithered_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reference_step: u64,
    pub reference_reward: f64,
    pub rows: Vec<ComparisonRow>,
    pub aligned: Vec<AlignedRow>,
}

fn reward_trace(run: &LoadedRun) -> Vec<(u64, f64)> {
    let mut t: Vec<(u64, f64)> = run
        .log
        .iter()
        .filter_map(|r| r.expected_reward.map(|j| (r.step, j)))
        .collect();
    t.push((run.summary.steps, run.summary.final_expected_reward));
    t
}

fn mean_grad_norm(run: &LoadedRun) -> f64 {
    run.log.iter().map(|r| r.grad_norm).sum::<f64>() / run.log.len().max(1) as f64
}

/// Compares runs against the first. `at_step` picks the reference step
/// (default: the reference run's final step).
pub fn compare_runs(dirs: &[PathBuf], at_step: Option<u64>) -> Result<Comparison> {
    if dirs.len() < 2 {
        return Err(Error::input("compare needs at least two run directories"));
    }
    let runs: Vec<LoadedRun> = dirs.iter().map(|d| load_run(d)).collect::<Result<_>>()?;
    let reference = &runs[0];
    let ref_trace = reward_trace(reference);
    let reference_step = at_step.unwrap_or(reference.summary.steps);
    let reference_reward = ref_trace
        .iter()
        .find(|(s, _)| *s == reference_step)
        .map(|&(_, j)| j)
        .ok_or_else(|| {
            Error::input(format!(
                "{}: no expected_reward recorded at step {reference_step}",
                reference.id
            ))
        })?;

    let base = &reference.summary;
    let base_norm = mean_grad_norm(reference);
    let mut rows = Vec::with_capacity(runs.len());
    let mut aligned = Vec::new();
    for run in &runs {
        let s = &run.summary;
        let reach = reward_trace(run)
            .into_iter()
            .find(|&(_, j)| j >= reference_reward)
            .map(|(step, _)| step);
        let norm = mean_grad_norm(run);
        rows.push(ComparisonRow {
            run_id: run.id.clone(),
            steps: s.steps,
            final_expected_reward: s.final_expected_reward,
            delta_final_expected_reward: s.final_expected_reward - base.final_expected_reward,
            vanish_fraction: s.stability.vanish_fraction,
            delta_vanish_fraction: s.stability.vanish_fraction - base.stability.vanish_fraction,
            explode_fraction: s.stability.explode_fraction,
            delta_explode_fraction: s.stability.explode_fraction - base.stability.explode_fraction,
            longest_vanish_streak: s.stability.longest_vanish_streak,
            mean_grad_norm: norm,
            delta_mean_grad_norm: norm - base_norm,
            t_gamma: s.convergence.as_ref().and_then(|c| c.t_gamma),
            steps_to_reach_reference: reach,
            fraction_of_reference_steps: reach
                .filter(|_| reference_step > 0)
                .map(|r| r as f64 / reference_step as f64),
        });
        aligned.extend(run.log.iter().map(|r| AlignedRow {
            step: r.step,
            run_id: run.id.clone(),
            expected_reward: r.expected_reward,
            grad_norm: r.grad_norm,
            mean_raw_reward: r.mean_raw_reward,
            mean_dithered_reward: r.mean_dithered_reward,
        }));
    }
    aligned.sort_by_key(|a| a.step);
    Ok(Comparison {
        reference_step,
        reference_reward,
        rows,
        aligned,
    })
}

/// Series available to [`emit_plotdata`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Series {
    GradNorm,
    /// Mean dithered reward (equals the raw mean when no noise is added).
    Reward,
    /// Mean within-group variance of the dithered rewards.
    Variance,
    /// Pairwise agreement of dithered with raw rewards.
    Accuracy,
    /// Effective noise standard deviation, i.e. schedule scale times base.
    Schedule,
    ExpectedReward,
}

impl Series {
    pub const ALL: [Series; 6] = [
        Series::GradNorm,
        Series::Reward,
        Series::Variance,
        Series::Accuracy,
        Series::Schedule,
        Series::ExpectedReward,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Series::GradNorm => "grad_norm",
            Series::Reward => "reward",
            Series::Variance => "variance",
            Series::Accuracy => "accuracy",
            Series::Schedule => "schedule",
            Series::ExpectedReward => "expected_reward",
        }
    }

    fn value(&self, r: &TrainLogRow) -> Option<f64> {
        match self {
            Series::GradNorm => Some(r.grad_norm),
            Series::Reward => Some(r.mean_dithered_reward),
            Series::Variance => Some(r.dithered_reward_variance),
            Series::Accuracy => Some(r.reward_accuracy),
            Series::Schedule => Some(r.noise_sigma_effective),
            Series::ExpectedReward => r.expected_reward,
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Series {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Series::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let known: Vec<_> = Series::ALL.iter().map(|v| v.name()).collect();
            Error::input(format!("unknown series `{s}`; expected one of {}", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub run_id: String,
    pub step: u64,
    pub series: String,
    pub value: f64,
}

/// Long-format rows ordered by run, then series, then step.
pub fn emit_plotdata(dirs: &[PathBuf], series: &[Series]) -> Result<Vec<PlotRow>> {
    let mut rows = Vec::new();
    for dir in dirs {
        let run = load_run(dir)?;
        for s in series {
            rows.extend(run.log.iter().filter_map(|r| {
                s.value(r).map(|value| PlotRow {
                    run_id: run.id.clone(),
                    step: r.step,
                    series: s.name().to_string(),
                    value,
                })
            }));
        }
    }
    Ok(rows)
}

/// Serializes rows as CSV with a header line and LF endings.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::input(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::input(e.to_string()))
}
