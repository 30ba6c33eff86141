use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::GradClassifierConfig;
use crate::error::{Error, Result};
use crate::optimizer::{AdvantageMethod, ClipConfig, TrainConfig};
use crate::rewards::{Kernel, NoiseSpec, RewardRule, ScheduleKind};

use super::env::{EnvKind, EnvironmentSpec};

/// The only environment variable the harness reads.
pub const OUT_DIR_ENV: &str = "REDIT_OUT_DIR";

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: &[&str] = &[
    "sparse-vanilla",
    "sparse-redit",
    "sparse-redit-uniform",
    "sparse-redit-cosine-reverse",
    "sparse-drgrpo",
    "sparse-reinforcepp",
    "sparse-dapo",
    "sparse-dynamic-sampling",
    "sparse-grad-clip",
    "multi-vanilla",
    "multi-redit",
    "signed-bandit-vanilla",
    "signed-bandit-redit",
];

/// Convergence-time measurement settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub gamma: f64,
    /// Step budget for `t_gamma` measurements that may outrun `steps`.
    pub budget: u64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            budget: 20_000,
        }
    }
}

fn one() -> usize {
    1
}

fn one_u64() -> u64 {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// One self-describing experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub environment: EnvironmentSpec,
    /// Overrides the environment's default rule (rule-based kinds only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardRule>,
    pub group_size: usize,
    pub learning_rate: f64,
    pub steps: u64,
    pub clip: ClipConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub classifier: GradClassifierConfig,
    /// Base seed; run `i` uses `derive_seed(seed, i)`.
    pub seed: u64,
    /// Number of training seeds.
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
    /// Track the exact expected reward every this many steps; 0 disables.
    #[serde(default = "one_u64")]
    pub eval_interval: u64,
    /// Also write one row per sampled output to `rewards.csv`.
    #[serde(default)]
    pub log_reward_samples: bool,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Sparse exact-match task: 8 prompts, 8 tokens, length 3 (hit rate 1/512).
    fn sparse(name: &str) -> Self {
        Self {
            name: name.to_string(),
            environment: EnvironmentSpec::sparse_seq(),
            reward: None,
            group_size: 4,
            learning_rate: 1.0,
            steps: 5_000,
            clip: ClipConfig {
                beta: 0.1,
                ..ClipConfig::default()
            },
            noise: NoiseSpec::none(),
            classifier: GradClassifierConfig::default(),
            seed: 2024,
            seeds: 1,
            convergence: Some(ConvergenceConfig::default()),
            eval_interval: 1,
            log_reward_samples: false,
            out_dir: default_out(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = match name {
            "sparse-vanilla" => Self::sparse(name),
            "sparse-redit" => Self {
                noise: NoiseSpec::gaussian(0.05),
                ..Self::sparse(name)
            },
            "sparse-redit-uniform" => Self {
                noise: NoiseSpec::uniform(0.05),
                ..Self::sparse(name)
            },
            "sparse-redit-cosine-reverse" => {
                let mut c = Self::sparse(name);
                c.noise = NoiseSpec::gaussian(0.05);
                c.noise.schedule.kind = ScheduleKind::CosineReverse;
                c
            }
            "sparse-drgrpo" => {
                let mut c = Self::sparse(name);
                c.clip.advantage_method = AdvantageMethod::DrGrpo;
                c
            }
            "sparse-reinforcepp" => {
                let mut c = Self::sparse(name);
                c.clip.advantage_method = AdvantageMethod::ReinforcePp;
                c
            }
            "sparse-dapo" => {
                let mut c = Self::sparse(name);
                c.clip = ClipConfig {
                    beta: c.clip.beta,
                    ..ClipConfig::dapo()
                };
                c
            }
            "sparse-dynamic-sampling" => {
                let mut c = Self::sparse(name);
                c.clip.dynamic_sampling = true;
                c
            }
            "sparse-grad-clip" => {
                let mut c = Self::sparse(name);
                c.clip.max_grad_norm = Some(1.0);
                c
            }
            "multi-vanilla" | "multi-redit" => {
                let mut c = Self::sparse(name);
                c.environment = EnvironmentSpec::multi_reward_seq();
                c.steps = 2_000;
                c.eval_interval = 10;
                c.convergence = None;
                if name == "multi-redit" {
                    c.noise = NoiseSpec::gaussian(0.05);
                }
                c
            }
            "signed-bandit-vanilla" | "signed-bandit-redit" => {
                let mut c = Self::sparse(name);
                c.environment = EnvironmentSpec::signed_bandit();
                c.learning_rate = 0.5;
                c.steps = 1_000;
                c.convergence = None;
                if name == "signed-bandit-redit" {
                    c.noise = NoiseSpec::gaussian(0.05);
                }
                c
            }
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}`; known: {}", PRESETS.join(", ")),
                ))
            }
        };
        cfg.name = name.to_string();
        Ok(cfg)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Noise spec with a zero schedule horizon filled in as `steps - 1`, so the
    /// final step reaches the schedule's endpoint.
    pub fn resolved_noise(&self) -> NoiseSpec {
        let mut noise = self.noise.clone();
        if noise.schedule.total_steps == 0 && noise.schedule.kind != ScheduleKind::Constant {
            noise.schedule.total_steps = self.steps.saturating_sub(1).max(1);
        }
        noise
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate("environment")?;
        if let Some(rule) = &self.reward {
            if self.environment.kind == EnvKind::SignedBandit {
                return Err(Error::config("reward", "signed_bandit scores with its own reward table"));
            }
            rule.validate_for("reward", self.environment.vocab)?;
        }
        if self.group_size < 2 {
            return Err(Error::config("group_size", format!("must be at least 2, got {}", self.group_size)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", format!("must be > 0, got {}", self.learning_rate)));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be at least 1"));
        }
        if self.seeds == 0 {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        self.clip.validate("clip")?;
        self.resolved_noise().validate("noise")?;
        self.classifier.validate("classifier")?;
        if let Some(c) = &self.convergence {
            if !(c.gamma.is_finite() && c.gamma > 0.0) {
                return Err(Error::config("convergence.gamma", format!("must be > 0, got {}", c.gamma)));
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            group_size: self.group_size,
            learning_rate: self.learning_rate,
            clip: self.clip.clone(),
            classifier: self.classifier,
            track_expected_reward: false,
        }
    }

    /// Copy with noise relative scale `m`; a `None` kernel becomes Gaussian
    /// when `m > 0`.
    pub fn with_m(&self, m: f64) -> Self {
        let mut c = self.clone();
        c.noise.m = m;
        if m > 0.0 && c.noise.kernel == Kernel::None {
            c.noise.kernel = Kernel::Gaussian;
        }
        c
    }

    /// Relative scale giving total per-reward noise std `sigma` under this
    /// config's reward magnitudes.
    pub fn m_for_sigma(&self, magnitudes: &[f64], sigma: f64) -> f64 {
        let norm = if self.noise.per_component {
            magnitudes.iter().map(|r| r * r).sum::<f64>().sqrt()
        } else {
            magnitudes.iter().sum()
        };
        sigma * crate::rewards::SQRT_3 / norm
    }

    /// Output directory: explicit argument, then `REDIT_OUT_DIR`, then the
    /// config's `out_dir`.
    pub fn resolve_out_dir(&self, explicit: Option<&Path>) -> PathBuf {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| self.out_dir.clone())
    }
}
