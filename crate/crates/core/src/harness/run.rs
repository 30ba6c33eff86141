use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{stability_summary, ConvergenceRecord, StabilitySummary};
use crate::error::{Error, Result};
use crate::optimizer::{train_step, StepOutcome, Task, TrainConfig, TrainLogRow, TrainState};
use crate::policy::{ParamTable, PolicyKind};
use crate::rewards::{Kernel, NoiseSpec, ScheduleKind};
use crate::seed::{derive_seed, RunRng};

use super::config::ExperimentConfig;
use super::env::Environment;

/// Samples per prompt for the Monte-Carlo fallback of the final reward.
const MC_FALLBACK_SAMPLES: usize = 100_000;

/// A training run in progress: environment, parameters and random streams.
#[derive(Debug, Clone)]
pub struct Run {
    env: Environment,
    state: TrainState,
    rng: RunRng,
    train: TrainConfig,
    noise: NoiseSpec,
    run_seed: u64,
}

impl Run {
    pub fn new(cfg: &ExperimentConfig, run_index: u64) -> Result<Self> {
        cfg.validate()?;
        let env = Environment::with_rule(&cfg.environment, cfg.reward.clone())?;
        let run_seed = derive_seed(cfg.seed, run_index);
        Ok(Self {
            state: TrainState::new(ParamTable::zeros(env.dims())),
            env,
            rng: RunRng::new(run_seed),
            train: cfg.train_config(),
            noise: cfg.resolved_noise(),
            run_seed,
        })
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        train_step(&mut self.state, &self.env, &self.train, &self.noise, &mut self.rng)
    }

    /// Exact expected true reward of the current parameters.
    pub fn expected_reward(&self) -> Result<f64> {
        self.env.expected_reward(&self.state.params)
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn run_seed(&self) -> u64 {
        self.run_seed
    }

    pub fn set_track_expected_reward(&mut self, on: bool) {
        self.train.track_expected_reward = on;
    }
}

/// Everything produced by training for a fixed number of steps.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: Vec<TrainLogRow>,
    pub samples: Vec<crate::optimizer::SampleRecord>,
    pub params: ParamTable,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub gamma: f64,
    /// `null` when the threshold was never reached within the run.
    pub t_gamma: Option<u64>,
    pub baseline_expected_reward: f64,
}

/// Contents of `summary.json`. Contains no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub run_index: u64,
    pub run_seed: u64,
    pub steps: u64,
    pub policy_kind: PolicyKind,
    pub noise_kernel: Kernel,
    pub noise_m: f64,
    pub noise_schedule: ScheduleKind,
    /// What the schedule multiplies: always the noise standard deviation.
    pub schedule_modulates: String,
    pub stability: StabilitySummary,
    pub final_expected_reward: f64,
    /// Standard error when the final reward had to be estimated by sampling.
    pub final_expected_reward_std_error: Option<f64>,
    pub convergence: Option<ConvergenceSummary>,
    pub anomalies: u64,
    pub total_groups_filtered: u64,
}

/// Trains `cfg` for `cfg.steps` steps in memory.
pub fn train_run(cfg: &ExperimentConfig, run_index: u64) -> Result<RunOutput> {
    let mut run = Run::new(cfg, run_index)?;
    let mut log = Vec::with_capacity(cfg.steps as usize);
    let mut samples = Vec::new();
    for step in 0..cfg.steps {
        let track = cfg.eval_interval > 0 && step % cfg.eval_interval == 0;
        run.set_track_expected_reward(track);
        let out = run.step()?;
        if cfg.log_reward_samples {
            samples.extend(out.samples);
        }
        log.push(out.row);
    }

    let (final_reward, final_se) = match run.expected_reward() {
        Ok(j) => (j, None),
        Err(Error::Capacity { .. }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(run.run_seed ^ 0x5EED);
            let (p, params) = (run.env.spec().prompts, &run.state.params);
            let (mut mean, mut var) = (0.0, 0.0);
            for x in 0..p {
                let est = params.mc_expected_reward(x, MC_FALLBACK_SAMPLES, &mut rng, |o| run.env.reward(x, o))?;
                mean += est.mean / p as f64;
                var += (est.std_error / p as f64).powi(2);
            }
            (mean, Some(var.sqrt()))
        }
        Err(e) => return Err(e),
    };

    let convergence = match cfg.convergence {
        Some(c) if cfg.eval_interval > 0 => {
            let mut trace: Vec<(u64, f64)> =
                log.iter().filter_map(|r| r.expected_reward.map(|j| (r.step, j))).collect();
            trace.push((cfg.steps, final_reward));
            let rec = ConvergenceRecord::from_trace(c.gamma, trace)?;
            Some(ConvergenceSummary {
                gamma: c.gamma,
                t_gamma: rec.t_gamma,
                baseline_expected_reward: rec.baseline_expected_reward,
            })
        }
        _ => None,
    };

    let summary = RunSummary {
        name: cfg.name.clone(),
        run_index,
        run_seed: run.run_seed,
        steps: cfg.steps,
        policy_kind: run.state.params.kind(),
        noise_kernel: cfg.noise.kernel,
        noise_m: cfg.noise.m,
        noise_schedule: cfg.noise.schedule.kind,
        schedule_modulates: "standard_deviation".to_string(),
        stability: stability_summary(log.iter().map(|r| r.grad_class))?,
        final_expected_reward: final_reward,
        final_expected_reward_std_error: final_se,
        convergence,
        anomalies: log.iter().filter(|r| r.anomaly).count() as u64,
        total_groups_filtered: log.iter().map(|r| r.groups_filtered as u64).sum(),
    };
    Ok(RunOutput {
        log,
        samples,
        params: run.state.params,
        summary,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::input(format!("csv buffer: {e}")))
}

/// Trains and writes the run directory: `config.json`, `trainlog.csv`,
/// `trainlog.jsonl`, `params.json`, `summary.json`, and `rewards.csv` when
/// sample logging is on.
pub fn run_experiment(cfg: &ExperimentConfig, run_index: u64, dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = train_run(cfg, run_index)?;

    write_file(&dir.join("config.json"), cfg.to_json_pretty()?.as_bytes())?;
    write_file(&dir.join("trainlog.csv"), &csv_bytes(&out.log)?)?;
    let mut jsonl = Vec::new();
    for row in &out.log {
        serde_json::to_writer(&mut jsonl, row)?;
        jsonl.write_all(b"\n").map_err(|e| Error::io(dir.join("trainlog.jsonl"), e))?;
    }
    write_file(&dir.join("trainlog.jsonl"), &jsonl)?;
    out.params.save(&dir.join("params.json"))?;
    write_file(
        &dir.join("summary.json"),
        (serde_json::to_string_pretty(&out.summary)? + "\n").as_bytes(),
    )?;
    if cfg.log_reward_samples {
        write_file(&dir.join("rewards.csv"), &csv_bytes(&out.samples)?)?;
    }
    Ok(out.summary)
}

/// Directory for run `index` of a multi-seed experiment.
pub fn seed_dir(root: &Path, index: u64) -> PathBuf {
    root.join(format!("seed-{index:03}"))
}

/// Runs every seed of `cfg`. A single seed writes straight into `root`;
/// several seeds get one `seed-NNN` subdirectory each.
pub fn run_all_seeds(cfg: &ExperimentConfig, root: &Path) -> Result<Vec<RunSummary>> {
    if cfg.seeds == 1 {
        return Ok(vec![run_experiment(cfg, 0, root)?]);
    }
    (0..cfg.seeds as u64)
        .map(|i| run_experiment(cfg, i, &seed_dir(root, i)))
        .collect()
}

/// Outcome of a run measured for convergence speed and final quality.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutcome {
    pub record: ConvergenceRecord,
    /// Exact expected reward after `cfg.steps` updates.
    pub final_expected_reward: f64,
    /// Stability over the first `cfg.steps` steps.
    pub stability: StabilitySummary,
}

/// Trains until both `cfg.steps` updates are done and either the threshold
/// is hit or `budget` steps have run. The trace holds the exact expected
/// reward before each update.
pub fn train_for_convergence(
    cfg: &ExperimentConfig,
    run_index: u64,
    gamma: f64,
    budget: u64,
) -> Result<TrajectoryOutcome> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::input(format!("gamma must be > 0, got {gamma}")));
    }
    let mut run = Run::new(cfg, run_index)?;
    let mut trace = Vec::new();
    let mut classes = Vec::with_capacity(cfg.steps as usize);
    let (mut baseline, mut hit, mut final_reward) = (None, false, None);
    let horizon = cfg.steps.max(budget);
    for t in 0..=horizon {
        let j = run.expected_reward()?;
        trace.push((t, j));
        let b = *baseline.get_or_insert(j);
        hit |= j >= b + gamma && t <= budget;
        if t == cfg.steps {
            final_reward = Some(j);
        }
        if t >= cfg.steps && (hit || t >= budget) || t == horizon {
            break;
        }
        let out = run.step()?;
        if t < cfg.steps {
            classes.push(out.row.grad_class);
        }
    }
    let mut record = ConvergenceRecord::from_trace(gamma, trace)?;
    if record.t_gamma.is_some_and(|t| t > budget) {
        record.t_gamma = None;
    }
    Ok(TrajectoryOutcome {
        record,
        final_expected_reward: final_reward.expect("horizon covers cfg.steps"),
        stability: stability_summary(classes)?,
    })
}
