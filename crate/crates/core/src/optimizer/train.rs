use serde::{Deserialize, Serialize};

use crate::diagnostics::{classify_grad, GradClass, GradClassifierConfig};
use crate::error::{Error, Result};
use crate::policy::{ParamTable, Trajectory};
use crate::rewards::{pairwise_accuracy, reward_variance, NoiseSpec, RewardSample};
use crate::seed::RunRng;

use super::{
    batch_advantages, clip_gradient, dynamic_sampling_filter, surrogate_gradient, ClipConfig,
    GroupBatch, RatioLevel,
};

/// What a training step needs from an environment.
pub trait Task {
    fn prompts(&self) -> usize;
    /// Component magnitudes, in the order of `RewardSample::raw_components`.
    fn magnitudes(&self) -> &[f64];
    fn evaluate(&self, prompt: usize, output: &[usize]) -> RewardSample;
    /// Exact expected true reward, averaged uniformly over prompts.
    fn expected_reward(&self, params: &ParamTable) -> Result<f64>;
}

/// Per-run optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub group_size: usize,
    pub learning_rate: f64,
    pub clip: ClipConfig,
    pub classifier: GradClassifierConfig,
    /// Record the exact expected reward of the pre-update parameters.
    pub track_expected_reward: bool,
}

/// Parameters owned by one run. `old_params` is resynced at the start of
/// every step; `ref_params` never changes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamTable,
    pub old_params: ParamTable,
    pub ref_params: ParamTable,
    pub step: u64,
    clamp_warned: bool,
}

impl TrainState {
    pub fn new(init: ParamTable) -> Self {
        Self {
            old_params: init.clone(),
            ref_params: init.clone(),
            params: init,
            step: 0,
            clamp_warned: false,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: u64,
    pub objective: f64,
    /// Norm before clipping; this is what gets classified.
    pub grad_norm: f64,
    pub grad_norm_clipped: f64,
    pub grad_class: GradClass,
    pub mean_raw_reward: f64,
    pub mean_dithered_reward: f64,
    /// Mean within-group population variance of raw rewards.
    pub reward_variance: f64,
    pub dithered_reward_variance: f64,
    /// Pairwise sign agreement of dithered against raw rewards within groups.
    pub reward_accuracy: f64,
    pub clip_fraction: f64,
    /// Mean exact KL to the reference policy over the step's prompts.
    pub kl: f64,
    pub groups_filtered: usize,
    pub noise_sigma_effective: f64,
    /// Exact expected true reward of the parameters this step started from.
    pub expected_reward: Option<f64>,
    pub anomaly: bool,
}

/// One sampled output with its rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub step: u64,
    pub prompt: usize,
    pub index: usize,
    /// Space-separated token ids.
    pub output: String,
    pub raw_total: f64,
    pub dithered_total: f64,
    pub noise_sigma_effective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub row: TrainLogRow,
    pub samples: Vec<SampleRecord>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn group_pairs(raw: &[f64], dith: &[f64], rm: &mut Vec<(f64, f64)>, gt: &mut Vec<(f64, f64)>) {
    for i in 0..raw.len() {
        for j in i + 1..raw.len() {
            rm.push((dith[i], dith[j]));
            gt.push((raw[i], raw[j]));
        }
    }
}

/// One optimization step: sample, dither, compute advantages on the dithered
/// rewards, take the surrogate gradient, optionally clip, ascend.
///
/// A non-finite gradient leaves the parameters untouched and marks the row
/// as an anomaly.
pub fn train_step<T: Task + ?Sized>(
    state: &mut TrainState,
    task: &T,
    cfg: &TrainConfig,
    noise: &NoiseSpec,
    rng: &mut RunRng,
) -> Result<StepOutcome> {
    if cfg.group_size < 2 {
        return Err(Error::config("group_size", format!("must be at least 2, got {}", cfg.group_size)));
    }
    let step = state.step;
    if noise.schedule.is_clamped(step) && !state.clamp_warned {
        log::warn!(
            "step {step} is past the noise schedule horizon {}; holding the endpoint scale",
            noise.schedule.total_steps
        );
        state.clamp_warned = true;
    }
    state.old_params = state.params.clone();
    let expected_reward = if cfg.track_expected_reward {
        Some(task.expected_reward(&state.params)?)
    } else {
        None
    };

    let magnitudes = task.magnitudes();
    let sigma_eff = noise.effective_sigma(magnitudes, step);
    let level = RatioLevel::for_kind(state.params.kind());
    let p = task.prompts();

    let mut groups = Vec::with_capacity(p);
    let mut samples = Vec::with_capacity(p * cfg.group_size);
    let (mut raw_all, mut dith_all) = (Vec::new(), Vec::new());
    let (mut var_raw, mut var_dith) = (0.0, 0.0);
    let (mut rm_pairs, mut gt_pairs) = (Vec::new(), Vec::new());
    let mut kl = 0.0;
    for x in 0..p {
        let trajs: Vec<Trajectory> = state.params.sample_group(x, cfg.group_size, &mut rng.sample)?;
        let mut raw = Vec::with_capacity(trajs.len());
        let mut dith = Vec::with_capacity(trajs.len());
        for (i, t) in trajs.iter().enumerate() {
            let s = noise.dither(&task.evaluate(x, &t.output), magnitudes, step, &mut rng.noise);
            raw.push(s.raw_total);
            dith.push(s.dithered_total);
            samples.push(SampleRecord {
                step,
                prompt: x,
                index: i,
                output: t.output.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
                raw_total: s.raw_total,
                dithered_total: s.dithered_total,
                noise_sigma_effective: sigma_eff,
            });
        }
        var_raw += reward_variance(&raw)? / p as f64;
        var_dith += reward_variance(&dith)? / p as f64;
        group_pairs(&raw, &dith, &mut rm_pairs, &mut gt_pairs);
        raw_all.extend_from_slice(&raw);
        dith_all.extend_from_slice(&dith);
        kl += state.params.kl_divergence(&state.ref_params, x)? / p as f64;
        groups.push(GroupBatch::new(x, trajs, raw, dith, level)?);
    }

    let (mut groups, filtered) = if cfg.clip.filters_groups() {
        dynamic_sampling_filter(groups)
    } else {
        (groups, 0)
    };
    if groups.is_empty() {
        log::warn!("step {step}: every group had identical raw rewards; skipping update");
    }
    let rewards: Vec<Vec<f64>> = groups.iter().map(|g| g.dithered_rewards.clone()).collect();
    for (g, adv) in groups.iter_mut().zip(batch_advantages(&rewards, cfg.clip.advantage_method)?) {
        g.advantages = adv;
    }

    let (grad, report) = surrogate_gradient(
        &state.params,
        &state.old_params,
        &state.ref_params,
        &groups,
        &cfg.clip,
    )?;
    let grad_norm = report.grad_norm;
    let anomaly = !grad.is_finite();
    let applied = match cfg.clip.max_grad_norm {
        Some(max) if !anomaly => clip_gradient(&grad, max),
        _ => grad,
    };
    let grad_norm_clipped = applied.norm();
    if anomaly {
        log::warn!("step {step}: non-finite gradient; parameters left unchanged");
    } else {
        state.params.add_scaled(cfg.learning_rate, &applied)?;
    }
    state.step += 1;

    let row = TrainLogRow {
        step,
        objective: report.objective,
        grad_norm,
        grad_norm_clipped,
        grad_class: classify_grad(grad_norm, &cfg.classifier),
        mean_raw_reward: mean(&raw_all),
        mean_dithered_reward: mean(&dith_all),
        reward_variance: var_raw,
        dithered_reward_variance: var_dith,
        reward_accuracy: pairwise_accuracy(&rm_pairs, &gt_pairs)?,
        clip_fraction: report.clip_fraction,
        kl,
        groups_filtered: filtered,
        noise_sigma_effective: sigma_eff,
        expected_reward,
        anomaly,
    };
    Ok(StepOutcome { row, samples })
}
