use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::Task;
use crate::policy::{GradVector, ParamTable, DEFAULT_ENUMERATION_CAP};
use crate::rewards::{
    flip_probability, pairwise_accuracy, reward_variance, Kernel, NoiseSpec, RewardSample, SQRT_3,
};

/// Smallest sample count the gradient verifiers accept.
pub const MIN_VERIFY_SAMPLES: usize = 10_000;

/// Width of the Monte-Carlo acceptance band, in standard errors.
pub const SE_BAND: f64 = 4.0;

/// Outcome of one Monte-Carlo check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub id: String,
    pub statistic: f64,
    pub theoretical: f64,
    pub tolerance: f64,
    /// Whether `tolerance` is relative to `|theoretical|`.
    pub relative: bool,
    pub pass: bool,
    pub sample_count: usize,
    #[serde(default)]
    pub detail: String,
}

impl PropositionReport {
    /// Builds a report whose `pass` follows from the comparison.
    pub fn compare(id: &str, statistic: f64, theoretical: f64, tolerance: f64, relative: bool, n: usize) -> Self {
        let bound = if relative {
            tolerance * theoretical.abs()
        } else {
            tolerance
        };
        Self {
            id: id.to_string(),
            statistic,
            theoretical,
            tolerance,
            relative,
            pass: (statistic - theoretical).abs() <= bound,
            sample_count: n,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < MIN_VERIFY_SAMPLES {
        return Err(Error::input(format!(
            "verifiers need at least {MIN_VERIFY_SAMPLES} samples, got {n}"
        )));
    }
    Ok(())
}

/// Exact clean policy gradient `E_x E_o[R(x, o) grad log pi(o|x)]` with `x`
/// uniform over prompts, by enumeration.
pub fn exact_reward_gradient<T: Task + ?Sized>(params: &ParamTable, task: &T) -> Result<GradVector> {
    let p = task.prompts();
    let mut g = GradVector::zeros(*params.dims());
    for x in 0..p {
        let lp = params.prompt_log_probs(x)?;
        let mut outputs = Vec::new();
        params.for_each_output(x, DEFAULT_ENUMERATION_CAP, |o, prob| outputs.push((o.to_vec(), prob)))?;
        for (o, prob) in outputs {
            let r = task.evaluate(x, &o).raw_total;
            params.accumulate_grad_logprob(&lp, &o, prob * r / p as f64, &mut g);
        }
    }
    Ok(g)
}

/// Exact `E_x E_o ||grad log pi(o|x)||^2`.
pub fn expected_score_sq_norm(params: &ParamTable, prompts: usize) -> Result<f64> {
    let mut total = 0.0;
    for x in 0..prompts {
        let lp = params.prompt_log_probs(x)?;
        let mut acc = 0.0;
        params.for_each_output(x, DEFAULT_ENUMERATION_CAP, |o, prob| {
            // contexts along one output are distinct rows, so squared norms add
            let mut prev = None;
            let mut sq = 0.0;
            for (pos, &tok) in o.iter().enumerate() {
                let row = lp.at(pos, prev);
                let sum_p2: f64 = row.iter().map(|l| (2.0 * l).exp()).sum();
                sq += 1.0 - 2.0 * row[tok].exp() + sum_p2;
                prev = Some(tok);
            }
            acc += prob * sq;
        })?;
        total += acc / prompts as f64;
    }
    Ok(total)
}

/// Streams per-component first and second moments of dense estimates.
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl Moments {
    fn new(d: usize) -> Self {
        Self {
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
            n: 0,
        }
    }

    fn push(&mut self, g: &[f64]) {
        for ((s, q), v) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(g) {
            *s += v;
            *q += v * v;
        }
        self.n += 1;
    }

    fn mean(&self, j: usize) -> f64 {
        self.sum[j] / self.n as f64
    }

    /// Sample variance of component `j`.
    fn var(&self, j: usize) -> f64 {
        let n = self.n as f64;
        let m = self.mean(j);
        ((self.sum_sq[j] - n * m * m) / (n - 1.0)).max(0.0)
    }
}

/// Draws `n` single-sample REINFORCE estimates `(R + eps) grad log pi(o|x)`
/// with `eps` from `noise_fn`, and checks every component of their mean
/// against the exact clean gradient. The statistic is the largest
/// `|mean - exact| / SE` over components; it must not exceed 4.
pub fn check_unbiasedness_with<T, R, F>(
    params: &ParamTable,
    task: &T,
    n: usize,
    rng: &mut R,
    mut noise_fn: F,
) -> Result<PropositionReport>
where
    T: Task + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&mut R, usize, &[usize], &RewardSample) -> f64,
{
    check_n(n)?;
    let exact = exact_reward_gradient(params, task)?;
    let p = task.prompts();
    let lps: Vec<_> = (0..p).map(|x| params.prompt_log_probs(x)).collect::<Result<_>>()?;
    let dims = *params.dims();
    let mut moments = Moments::new(dims.len());
    let mut scratch = GradVector::zeros(dims);
    for _ in 0..n {
        let x = rng.random_range(0..p);
        let o = params.sample(&lps[x], rng);
        let s = task.evaluate(x, &o);
        let eps = noise_fn(rng, x, &o, &s);
        scratch.values_mut().iter_mut().for_each(|v| *v = 0.0);
        params.accumulate_grad_logprob(&lps[x], &o, s.raw_total + eps, &mut scratch);
        moments.push(scratch.values());
    }
    let mut worst = 0.0f64;
    let mut worst_j = 0;
    for (j, &e) in exact.values().iter().enumerate() {
        let diff = (moments.mean(j) - e).abs();
        let se = (moments.var(j) / n as f64).sqrt();
        let z = if se > 0.0 {
            diff / se
        } else if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        if z > worst {
            worst = z;
            worst_j = j;
        }
    }
    Ok(PropositionReport::compare("unbiasedness", worst, 0.0, SE_BAND, false, n)
        .with_detail(format!("max |z| over {} components at component {worst_j}", exact.values().len())))
}

/// [`check_unbiasedness_with`] using `noise` at schedule step `step`.
pub fn check_unbiasedness<T, R>(
    params: &ParamTable,
    task: &T,
    noise: &NoiseSpec,
    step: u64,
    n: usize,
    rng: &mut R,
) -> Result<PropositionReport>
where
    T: Task + ?Sized,
    R: Rng + ?Sized,
{
    noise.validate("noise")?;
    let magnitudes = task.magnitudes().to_vec();
    check_unbiasedness_with(params, task, n, rng, |rng, _, _, s| {
        let d = noise.dither(s, &magnitudes, step, rng);
        d.dithered_total - d.raw_total
    })
}

/// Trace variance of the noise-gradient term `eps * grad log pi(o|x)` against
/// `sigma^2 E||grad log pi||^2`, relative tolerance 5%.
pub fn check_gradient_noise_variance<T, R>(
    params: &ParamTable,
    task: &T,
    kernel: Kernel,
    sigma: f64,
    n: usize,
    rng: &mut R,
) -> Result<PropositionReport>
where
    T: Task + ?Sized,
    R: Rng + ?Sized,
{
    check_n(n)?;
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::input(format!("sigma must be >= 0, got {sigma}")));
    }
    let p = task.prompts();
    let theoretical = sigma * sigma * expected_score_sq_norm(params, p)?;
    let lps: Vec<_> = (0..p).map(|x| params.prompt_log_probs(x)).collect::<Result<_>>()?;
    let dims = *params.dims();
    let mut moments = Moments::new(dims.len());
    let mut scratch = GradVector::zeros(dims);
    let width = sigma * SQRT_3;
    for _ in 0..n {
        let x = rng.random_range(0..p);
        let o = params.sample(&lps[x], rng);
        let eps = kernel.draw(width, rng);
        scratch.values_mut().iter_mut().for_each(|v| *v = 0.0);
        params.accumulate_grad_logprob(&lps[x], &o, eps, &mut scratch);
        moments.push(scratch.values());
    }
    let trace: f64 = (0..dims.len()).map(|j| moments.var(j)).sum();
    Ok(PropositionReport::compare("gradient_noise_variance", trace, theoretical, 0.05, true, n)
        .with_detail(format!("sigma = {sigma}, kernel = {kernel:?}")))
}

/// Dithers `n` Bernoulli(`p`) rewards with `noise` (magnitude 1) and checks
/// `Var(dithered) - Var(raw)` against the noise variance, relative tolerance 2%.
pub fn check_variance_additivity<R: Rng + ?Sized>(
    p: f64,
    noise: &NoiseSpec,
    n: usize,
    rng: &mut R,
) -> Result<PropositionReport> {
    check_n(n)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!("p must lie in [0, 1], got {p}")));
    }
    noise.validate("noise")?;
    let mut raw = Vec::with_capacity(n);
    let mut dithered = Vec::with_capacity(n);
    for _ in 0..n {
        let r = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        let s = noise.dither(&RewardSample::from_components(vec![r]), &[1.0], 0, rng);
        raw.push(s.raw_total);
        dithered.push(s.dithered_total);
    }
    let excess = reward_variance(&dithered)? - reward_variance(&raw)?;
    let sigma = noise.effective_sigma(&[1.0], 0);
    Ok(PropositionReport::compare("variance_additivity", excess, sigma * sigma, 0.02, true, n)
        .with_detail(format!("p = {p}, sigma = {sigma}, kernel = {:?}", noise.kernel)))
}

/// Ranks `n` pairs whose clean rewards differ by 1 after independent
/// dithering of each side and compares the agreement rate with
/// `1 - Phi(-1 / (sigma sqrt 2))`, relative tolerance 1%.
pub fn check_pairwise_accuracy<R: Rng + ?Sized>(
    noise: &NoiseSpec,
    n: usize,
    rng: &mut R,
) -> Result<PropositionReport> {
    check_n(n)?;
    noise.validate("noise")?;
    let mut rm = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    for _ in 0..n {
        let hi = noise.dither(&RewardSample::from_components(vec![1.0]), &[1.0], 0, rng);
        let lo = noise.dither(&RewardSample::from_components(vec![0.0]), &[1.0], 0, rng);
        rm.push((hi.dithered_total, lo.dithered_total));
        gt.push((1.0, 0.0));
    }
    let acc = pairwise_accuracy(&rm, &gt)?;
    let sigma = noise.effective_sigma(&[1.0], 0);
    let theoretical = 1.0 - flip_probability(1.0, sigma);
    Ok(PropositionReport::compare("pairwise_accuracy", acc, theoretical, 0.01, true, n)
        .with_detail(format!("delta = 1, sigma = {sigma}, kernel = {:?}", noise.kernel)))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}
