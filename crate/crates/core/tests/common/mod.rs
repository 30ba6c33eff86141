//! Random instances and finite-difference checks shared by the test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redit::optimizer::{
    group_advantages, surrogate_gradient, surrogate_objective, AdvantageMethod, ClipConfig,
    GroupBatch, KlMode, RatioLevel,
};
use redit::policy::{Dims, ParamTable};

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_table(dims: Dims, scale: f64, rng: &mut impl Rng) -> ParamTable {
    let logits = (0..dims.len()).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
    ParamTable::from_logits(dims, logits).unwrap()
}

/// Small bandit or autoregressive shape.
pub fn random_dims(rng: &mut impl Rng) -> Dims {
    let prompts = rng.random_range(1..=3);
    if rng.random_bool(0.4) {
        Dims::bandit(prompts, rng.random_range(2..=6))
    } else {
        Dims::autoregressive(prompts, rng.random_range(1..=3), rng.random_range(2..=4), rng.random_range(0..=1))
    }
}

pub struct SurrogateInstance {
    pub params: ParamTable,
    pub old: ParamTable,
    pub reference: ParamTable,
    pub groups: Vec<GroupBatch>,
    pub cfg: ClipConfig,
}

/// Random policy, a perturbed behaviour policy, random groups and a random
/// clip/KL configuration.
pub fn random_instance(seed: u64) -> SurrogateInstance {
    let mut r = rng(seed);
    let dims = random_dims(&mut r);
    let old = random_table(dims, 1.0, &mut r);
    let mut params = old.clone();
    for v in params.logits_mut() {
        *v += 0.3 * (2.0 * r.random::<f64>() - 1.0);
    }
    let reference = random_table(dims, 0.5, &mut r);
    let method = [AdvantageMethod::Grpo, AdvantageMethod::DrGrpo, AdvantageMethod::Dapo][r.random_range(0..3)];
    let mut groups = Vec::new();
    for x in 0..dims.prompts {
        let g = r.random_range(2..=5);
        let trajs = old.sample_group(x, g, &mut r).unwrap();
        let raw: Vec<f64> = (0..g).map(|_| r.random_range(0..3) as f64).collect();
        let dith: Vec<f64> = raw.iter().map(|v| v + 0.2 * (r.random::<f64>() - 0.5)).collect();
        let mut batch = GroupBatch::new(x, trajs, raw, dith, RatioLevel::for_kind(old.kind())).unwrap();
        batch.advantages = group_advantages(&batch.dithered_rewards, method).unwrap();
        groups.push(batch);
    }
    let cfg = ClipConfig {
        eps_low: 0.2,
        eps_high: if method == AdvantageMethod::Dapo { 0.28 } else { 0.2 },
        beta: if r.random_bool(0.7) { r.random_range(0.01..0.5) } else { 0.0 },
        advantage_method: method,
        kl_mode: if r.random_bool(0.5) { KlMode::Exact } else { KlMode::SampleK3 },
        ..ClipConfig::default()
    };
    SurrogateInstance { params, old, reference, groups, cfg }
}

/// `||fd - analytic|| / max(||analytic||, 1e-8)` for the surrogate.
pub fn surrogate_fd_error(inst: &SurrogateInstance) -> f64 {
    let (g, _) = surrogate_gradient(&inst.params, &inst.old, &inst.reference, &inst.groups, &inst.cfg).unwrap();
    let f = |p: &ParamTable| surrogate_objective(p, &inst.old, &inst.reference, &inst.groups, &inst.cfg).unwrap();
    let mut diff_sq = 0.0;
    let mut p = inst.params.clone();
    for j in 0..p.logits().len() {
        let base = p.logits()[j];
        p.logits_mut()[j] = base + FD_STEP;
        let up = f(&p);
        p.logits_mut()[j] = base - FD_STEP;
        let down = f(&p);
        p.logits_mut()[j] = base;
        let fd = (up - down) / (2.0 * FD_STEP);
        diff_sq += (fd - g.values()[j]).powi(2);
    }
    diff_sq.sqrt() / g.norm().max(1e-8)
}

/// Largest `|fd - analytic| / max(|analytic|, 1e-3)` over components of
/// `grad log pi(o|x)`.
pub fn grad_logprob_fd_error(params: &ParamTable, x: usize, o: &[usize]) -> f64 {
    let g = params.grad_logprob(x, o).unwrap();
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for j in 0..p.logits().len() {
        let base = p.logits()[j];
        p.logits_mut()[j] = base + FD_STEP;
        let up = p.logprob(x, o).unwrap();
        p.logits_mut()[j] = base - FD_STEP;
        let down = p.logprob(x, o).unwrap();
        p.logits_mut()[j] = base;
        let fd = (up - down) / (2.0 * FD_STEP);
        let a = g.values()[j];
        worst = worst.max((fd - a).abs() / a.abs().max(1e-3));
    }
    worst
}

/// Largest absolute per-context row sum of `grad log pi(o|x)`.
pub fn max_row_sum(params: &ParamTable, x: usize, o: &[usize]) -> f64 {
    let g = params.grad_logprob(x, o).unwrap();
    (0..params.dims().rows())
        .map(|r| g.row(r).iter().sum::<f64>().abs())
        .fold(0.0, f64::max)
}
