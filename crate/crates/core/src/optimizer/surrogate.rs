use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{GradVector, ParamTable, PolicyKind, Trajectory};

use super::AdvantageMethod;

/// Granularity of the importance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioLevel {
    /// One ratio per whole output.
    Sequence,
    /// One ratio per token; per-token terms are summed.
    Token,
}

impl RatioLevel {
    pub fn for_kind(kind: PolicyKind) -> Self {
        match kind {
            PolicyKind::SequenceBandit => RatioLevel::Sequence,
            PolicyKind::Autoregressive => RatioLevel::Token,
        }
    }
}

/// How the KL penalty enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// Exact divergence of the tabular policies.
    #[default]
    Exact,
    /// Per-sample `exp(d) - d - 1` with `d = log ref - log pi`, averaged over
    /// the group.
    SampleK3,
}

/// One group: a prompt, its sampled outputs, their rewards and advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBatch {
    pub prompt: usize,
    pub trajectories: Vec<Trajectory>,
    pub raw_rewards: Vec<f64>,
    pub dithered_rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub ratio_level: RatioLevel,
}

impl GroupBatch {
    /// Advantages start at zero; fill them with the advantage functions.
    pub fn new(
        prompt: usize,
        trajectories: Vec<Trajectory>,
        raw_rewards: Vec<f64>,
        dithered_rewards: Vec<f64>,
        ratio_level: RatioLevel,
    ) -> Result<Self> {
        let g = trajectories.len();
        if raw_rewards.len() != g || dithered_rewards.len() != g {
            return Err(Error::input(format!(
                "group of {g} trajectories has {} raw and {} dithered rewards",
                raw_rewards.len(),
                dithered_rewards.len()
            )));
        }
        Ok(Self {
            prompt,
            trajectories,
            raw_rewards,
            dithered_rewards,
            advantages: vec![0.0; g],
            ratio_level,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// True when every raw reward equals the first.
    pub fn raw_identical(&self) -> bool {
        self.raw_rewards.windows(2).all(|w| w[0] == w[1])
    }
}

fn default_eps() -> f64 {
    0.2
}

/// Surrogate hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipConfig {
    #[serde(default = "default_eps")]
    pub eps_low: f64,
    #[serde(default = "default_eps")]
    pub eps_high: f64,
    /// KL penalty coefficient.
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
    pub advantage_method: AdvantageMethod,
    #[serde(default)]
    pub dynamic_sampling: bool,
    #[serde(default)]
    pub kl_mode: KlMode,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            eps_low: 0.2,
            eps_high: 0.2,
            beta: 0.0,
            max_grad_norm: None,
            advantage_method: AdvantageMethod::Grpo,
            dynamic_sampling: false,
            kl_mode: KlMode::Exact,
        }
    }
}

impl ClipConfig {
    /// Asymmetric clipping 0.2 / 0.28 with dynamic sampling.
    pub fn dapo() -> Self {
        Self {
            eps_high: 0.28,
            advantage_method: AdvantageMethod::Dapo,
            dynamic_sampling: true,
            ..Self::default()
        }
    }

    /// Whether groups with identical raw rewards are dropped.
    pub fn filters_groups(&self) -> bool {
        self.dynamic_sampling || self.advantage_method == AdvantageMethod::Dapo
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        for (name, eps) in [("eps_low", self.eps_low), ("eps_high", self.eps_high)] {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::config(format!("{path}.{name}"), format!("must lie in (0, 1), got {eps}")));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config(format!("{path}.beta"), format!("must be finite and >= 0, got {}", self.beta)));
        }
        if let Some(m) = self.max_grad_norm {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::config(format!("{path}.max_grad_norm"), format!("must be > 0, got {m}")));
            }
        }
        Ok(())
    }
}

/// Summary of one surrogate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateReport {
    pub objective: f64,
    pub grad_norm: f64,
    pub clip_fraction: f64,
    /// Mean exact KL to the reference over the groups used.
    pub kl: f64,
    pub groups_used: usize,
    pub groups_filtered: usize,
}

/// Drops groups whose raw rewards are all identical. Keys on raw rewards, so
/// dithering never rescues a group.
pub fn dynamic_sampling_filter(groups: Vec<GroupBatch>) -> (Vec<GroupBatch>, usize) {
    let before = groups.len();
    let kept: Vec<GroupBatch> = groups.into_iter().filter(|g| !g.raw_identical()).collect();
    let filtered = before - kept.len();
    (kept, filtered)
}

/// Rescales `g` to norm `max_norm` if it is longer; otherwise returns it as is.
pub fn clip_gradient(g: &GradVector, max_norm: f64) -> GradVector {
    let n = g.norm();
    let mut out = g.clone();
    if n > max_norm {
        out.scale(max_norm / n);
    }
    out
}

/// One clipped term `min(r A, clip(r) A)`: value, whether the clipped branch
/// is active, and the coefficient on `grad log pi` when it is not.
fn clipped_term(log_ratio: f64, adv: f64, cfg: &ClipConfig) -> (f64, bool, f64) {
    let r = log_ratio.exp();
    let unclipped = r * adv;
    let clipped = r.clamp(1.0 - cfg.eps_low, 1.0 + cfg.eps_high) * adv;
    if clipped < unclipped {
        (clipped, true, 0.0)
    } else {
        (unclipped, false, unclipped)
    }
}

fn check_shapes(params: &ParamTable, old: &ParamTable, reference: &ParamTable) -> Result<()> {
    if params.dims() != old.dims() || params.dims() != reference.dims() {
        return Err(Error::input("params, old_params and ref_params differ in shape"));
    }
    Ok(())
}

/// Objective and (optionally) its exact gradient.
///
/// `J = mean over groups of [ (1/G) sum_i S_i - beta * KL ]`, where `S_i` is
/// the clipped term for output `i` (summed over tokens at token level).
fn evaluate(
    params: &ParamTable,
    old_params: &ParamTable,
    ref_params: &ParamTable,
    groups: &[GroupBatch],
    cfg: &ClipConfig,
    mut grad: Option<&mut GradVector>,
) -> Result<UpdateReport> {
    check_shapes(params, old_params, ref_params)?;
    let mut report = UpdateReport {
        groups_used: groups.len(),
        ..Default::default()
    };
    if groups.is_empty() {
        return Ok(report);
    }
    let n_groups = groups.len() as f64;
    let (mut terms, mut clipped_terms) = (0usize, 0usize);
    for group in groups {
        if group.advantages.len() != group.len() {
            return Err(Error::input("group advantages do not match its size"));
        }
        let x = group.prompt;
        let lp = params.prompt_log_probs(x)?;
        let lo = old_params.prompt_log_probs(x)?;
        let g_scale = 1.0 / (group.len() as f64 * n_groups);
        let kl_exact = params.kl_divergence(ref_params, x)?;
        report.kl += kl_exact / n_groups;

        let lref = match cfg.kl_mode {
            KlMode::SampleK3 => Some(ref_params.prompt_log_probs(x)?),
            KlMode::Exact => None,
        };
        for (traj, &adv) in group.trajectories.iter().zip(&group.advantages) {
            let o = &traj.output;
            params.check_output(o)?;
            let cur = lp.token_logprobs(o);
            let old = lo.token_logprobs(o);
            match group.ratio_level {
                RatioLevel::Sequence => {
                    let lr: f64 = cur.iter().sum::<f64>() - old.iter().sum::<f64>();
                    let (value, is_clipped, coef) = clipped_term(lr, adv, cfg);
                    report.objective += g_scale * value;
                    terms += 1;
                    clipped_terms += is_clipped as usize;
                    if let Some(g) = grad.as_deref_mut() {
                        if coef != 0.0 {
                            params.accumulate_grad_logprob(&lp, o, g_scale * coef, g);
                        }
                    }
                }
                RatioLevel::Token => {
                    let mut prev = None;
                    for (pos, &tok) in o.iter().enumerate() {
                        let (value, is_clipped, coef) = clipped_term(cur[pos] - old[pos], adv, cfg);
                        report.objective += g_scale * value;
                        terms += 1;
                        clipped_terms += is_clipped as usize;
                        if let Some(g) = grad.as_deref_mut() {
                            if coef != 0.0 {
                                params.accumulate_grad_token(&lp, pos, prev, tok, g_scale * coef, g);
                            }
                        }
                        prev = Some(tok);
                    }
                }
            }
            if let Some(lref) = &lref {
                // d k3 / d log pi_t = 1 - exp(d_t)
                let refs = lref.token_logprobs(o);
                let mut prev = None;
                for (pos, &tok) in o.iter().enumerate() {
                    let d = refs[pos] - cur[pos];
                    report.objective -= cfg.beta * g_scale * (d.exp() - d - 1.0);
                    if let Some(g) = grad.as_deref_mut() {
                        let coef = -cfg.beta * g_scale * (1.0 - d.exp());
                        params.accumulate_grad_token(&lp, pos, prev, tok, coef, g);
                    }
                    prev = Some(tok);
                }
            }
        }
        if cfg.kl_mode == KlMode::Exact && cfg.beta != 0.0 {
            report.objective -= cfg.beta * kl_exact / n_groups;
            if let Some(g) = grad.as_deref_mut() {
                params.accumulate_kl_gradient(ref_params, x, -cfg.beta / n_groups, g)?;
            }
        }
    }
    report.clip_fraction = if terms == 0 {
        0.0
    } else {
        clipped_terms as f64 / terms as f64
    };
    if let Some(g) = grad {
        report.grad_norm = g.norm();
    }
    Ok(report)
}

/// Value of the clipped surrogate with KL penalty.
pub fn surrogate_objective(
    params: &ParamTable,
    old_params: &ParamTable,
    ref_params: &ParamTable,
    groups: &[GroupBatch],
    cfg: &ClipConfig,
) -> Result<f64> {
    Ok(evaluate(params, old_params, ref_params, groups, cfg, None)?.objective)
}

/// Exact ascent gradient of [`surrogate_objective`] with respect to `params`.
pub fn surrogate_gradient(
    params: &ParamTable,
    old_params: &ParamTable,
    ref_params: &ParamTable,
    groups: &[GroupBatch],
    cfg: &ClipConfig,
) -> Result<(GradVector, UpdateReport)> {
    let mut grad = GradVector::zeros(*params.dims());
    let report = evaluate(params, old_params, ref_params, groups, cfg, Some(&mut grad))?;
    Ok((grad, report))
}
