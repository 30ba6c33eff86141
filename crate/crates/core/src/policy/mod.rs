//! Tabular softmax policies over finite output spaces.
//!
//! Two forms are supported:
//!
//! * [`PolicyKind::SequenceBandit`]: one softmax per prompt over a finite set
//!   of whole outputs, `pi(y|x) = softmax(theta[x])[y]`.
//! * [`PolicyKind::Autoregressive`]: a product of per-position softmaxes over a
//!   vocabulary. A context is `(prompt, position)` when `window == 0`, or
//!   `(prompt, position, previous token)` when `window == 1`.
//!
//! Logits live in one dense row-major buffer. Every row is one context; the
//! row width is the number of outputs (bandit) or the vocabulary size.
//! All probability arithmetic is done in the log domain with max subtraction.

mod table;

pub use table::{Dims, GradVector, ParamTable, PolicyKind};

use rand::Rng;

use crate::error::{Error, Result};

/// Default enumeration cap for exact expectations.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// One sampled output with its log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub prompt: usize,
    /// Token sequence, or a single output id for the bandit form.
    pub output: Vec<usize>,
    pub logprob_current: f64,
    pub logprob_old: f64,
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Log-softmax of one row, max-subtracted.
pub fn log_softmax(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for (o, v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// Softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    log_softmax(row, &mut out);
    for v in &mut out {
        *v = v.exp();
    }
    out
}

/// Cached log-probabilities of every context row belonging to one prompt.
#[derive(Debug, Clone)]
pub struct PromptLogProbs {
    dims: Dims,
    prompt: usize,
    values: Vec<f64>,
}

impl PromptLogProbs {
    fn row(&self, local_row: usize) -> &[f64] {
        let w = self.dims.width();
        &self.values[local_row * w..(local_row + 1) * w]
    }

    /// Log-probability row for `pos` given the previous token.
    pub fn at(&self, pos: usize, prev: Option<usize>) -> &[f64] {
        self.row(self.dims.local_row(pos, prev))
    }

    pub fn prompt(&self) -> usize {
        self.prompt
    }

    pub fn token_logprobs(&self, output: &[usize]) -> Vec<f64> {
        let mut prev = None;
        output
            .iter()
            .enumerate()
            .map(|(pos, &tok)| {
                let lp = self.at(pos, prev)[tok];
                prev = Some(tok);
                lp
            })
            .collect()
    }

    pub fn logprob(&self, output: &[usize]) -> f64 {
        self.token_logprobs(output).iter().sum()
    }
}

impl ParamTable {
    fn check_prompt(&self, x: usize) -> Result<()> {
        if x >= self.dims().prompts {
            return Err(Error::input(format!(
                "prompt id {x} out of range (P = {})",
                self.dims().prompts
            )));
        }
        Ok(())
    }

    /// Validates that `output` is sampleable under this policy's kind.
    pub fn check_output(&self, output: &[usize]) -> Result<()> {
        let dims = self.dims();
        if output.len() != dims.seq_len {
            return Err(Error::input(format!(
                "output length {} does not match sequence length {}",
                output.len(),
                dims.seq_len
            )));
        }
        if let Some(&tok) = output.iter().find(|&&t| t >= dims.width()) {
            return Err(Error::input(format!(
                "token {tok} out of vocabulary (size {})",
                dims.width()
            )));
        }
        Ok(())
    }

    /// Log-probabilities of every context row for prompt `x`.
    pub fn prompt_log_probs(&self, x: usize) -> Result<PromptLogProbs> {
        self.check_prompt(x)?;
        let dims = *self.dims();
        let w = dims.width();
        let rows = dims.rows_per_prompt();
        let start = dims.global_row(x, 0);
        let mut values = vec![0.0; rows * w];
        for r in 0..rows {
            log_softmax(self.row(start + r), &mut values[r * w..(r + 1) * w]);
        }
        Ok(PromptLogProbs {
            dims,
            prompt: x,
            values,
        })
    }

    /// `log pi(o|x)`; for autoregressive policies the sum of per-token terms.
    pub fn logprob(&self, x: usize, output: &[usize]) -> Result<f64> {
        self.check_output(output)?;
        Ok(self.prompt_log_probs(x)?.logprob(output))
    }

    /// Per-token log-probabilities (a single entry for the bandit form).
    pub fn token_logprobs(&self, x: usize, output: &[usize]) -> Result<Vec<f64>> {
        self.check_output(output)?;
        Ok(self.prompt_log_probs(x)?.token_logprobs(output))
    }

    /// Draws one output from `pi(.|x)` by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, lp: &PromptLogProbs, rng: &mut R) -> Vec<usize> {
        let dims = self.dims();
        let mut out = Vec::with_capacity(dims.seq_len);
        let mut prev = None;
        for pos in 0..dims.seq_len {
            let row = lp.at(pos, prev);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = row.len() - 1;
            for (k, l) in row.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            out.push(chosen);
            prev = Some(chosen);
        }
        out
    }

    /// Draws `g` i.i.d. outputs for prompt `x`.
    pub fn sample_group<R: Rng + ?Sized>(
        &self,
        x: usize,
        g: usize,
        rng: &mut R,
    ) -> Result<Vec<Trajectory>> {
        if g < 2 {
            return Err(Error::config(
                "group_size",
                format!("group size must be at least 2, got {g}"),
            ));
        }
        let lp = self.prompt_log_probs(x)?;
        Ok((0..g)
            .map(|_| {
                let output = self.sample(&lp, rng);
                let logprob = lp.logprob(&output);
                Trajectory {
                    prompt: x,
                    output,
                    logprob_current: logprob,
                    logprob_old: logprob,
                }
            })
            .collect())
    }

    /// Adds `scale * grad log pi(o|x)` into `grad`.
    pub fn accumulate_grad_logprob(
        &self,
        lp: &PromptLogProbs,
        output: &[usize],
        scale: f64,
        grad: &mut GradVector,
    ) {
        let mut prev = None;
        for (pos, &tok) in output.iter().enumerate() {
            self.accumulate_grad_token(lp, pos, prev, tok, scale, grad);
            prev = Some(tok);
        }
    }

    /// Adds `scale * grad log pi(tok | context at pos)` into `grad`.
    pub fn accumulate_grad_token(
        &self,
        lp: &PromptLogProbs,
        pos: usize,
        prev: Option<usize>,
        tok: usize,
        scale: f64,
        grad: &mut GradVector,
    ) {
        let dims = *self.dims();
        let w = dims.width();
        let row = dims.global_row(lp.prompt, dims.local_row(pos, prev));
        let g = &mut grad.values_mut()[row * w..(row + 1) * w];
        for (k, (gk, l)) in g.iter_mut().zip(lp.at(pos, prev)).enumerate() {
            let ind = if k == tok { 1.0 } else { 0.0 };
            *gk += scale * (ind - l.exp());
        }
    }

    /// Exact `grad_theta log pi(o|x)`: indicator minus probabilities at every
    /// context the output visits, zero elsewhere.
    pub fn grad_logprob(&self, x: usize, output: &[usize]) -> Result<GradVector> {
        self.check_output(output)?;
        let lp = self.prompt_log_probs(x)?;
        let mut grad = GradVector::zeros(*self.dims());
        self.accumulate_grad_logprob(&lp, output, 1.0, &mut grad);
        Ok(grad)
    }

    /// Size of the output space of one prompt.
    pub fn output_space_size(&self) -> u128 {
        let dims = self.dims();
        (dims.width() as u128).saturating_pow(dims.seq_len as u32)
    }

    /// Calls `f(output, probability)` for every output of prompt `x`.
    pub fn for_each_output<F>(&self, x: usize, cap: u64, mut f: F) -> Result<()>
    where
        F: FnMut(&[usize], f64),
    {
        let size = self.output_space_size();
        if size > cap as u128 {
            return Err(Error::Capacity { size, cap });
        }
        let lp = self.prompt_log_probs(x)?;
        let dims = self.dims();
        let w = dims.width();
        let mut out = vec![0usize; dims.seq_len];
        loop {
            f(&out, lp.logprob(&out).exp());
            // odometer, last position fastest
            let mut pos = dims.seq_len;
            loop {
                if pos == 0 {
                    return Ok(());
                }
                pos -= 1;
                out[pos] += 1;
                if out[pos] < w {
                    break;
                }
                out[pos] = 0;
            }
        }
    }

    /// Exact `sum_o pi(o|x) R(o)` by enumeration.
    pub fn expected_reward<F>(&self, x: usize, cap: u64, mut reward: F) -> Result<f64>
    where
        F: FnMut(&[usize]) -> f64,
    {
        let mut total = 0.0;
        self.for_each_output(x, cap, |o, p| total += p * reward(o))?;
        Ok(total)
    }

    /// Monte-Carlo fallback for [`ParamTable::expected_reward`].
    pub fn mc_expected_reward<F, R>(
        &self,
        x: usize,
        n: usize,
        rng: &mut R,
        mut reward: F,
    ) -> Result<McEstimate>
    where
        F: FnMut(&[usize]) -> f64,
        R: Rng + ?Sized,
    {
        if n < 2 {
            return Err(Error::input("Monte-Carlo estimate needs at least 2 samples"));
        }
        let lp = self.prompt_log_probs(x)?;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let r = reward(&self.sample(&lp, rng));
            sum += r;
            sum_sq += r * r;
        }
        let mean = sum / n as f64;
        let var = ((sum_sq / n as f64) - mean * mean).max(0.0) * n as f64 / (n as f64 - 1.0);
        Ok(McEstimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            samples: n,
        })
    }

    fn check_same_shape(&self, other: &ParamTable) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::input(format!(
                "shape mismatch: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// Marginal probability of each context row at each position, as
    /// `(local_row, weight)` pairs.
    fn context_weights(&self, lp: &PromptLogProbs) -> Vec<Vec<(usize, f64)>> {
        let dims = self.dims();
        let w = dims.width();
        let mut out = Vec::with_capacity(dims.seq_len);
        let mut prev_marginal: Option<Vec<f64>> = None;
        for pos in 0..dims.seq_len {
            let ctx: Vec<(usize, f64)> = match (&prev_marginal, dims.window) {
                (Some(m), 1) => (0..w).map(|c| (dims.local_row(pos, Some(c)), m[c])).collect(),
                _ => vec![(dims.local_row(pos, None), 1.0)],
            };
            let mut next = vec![0.0; w];
            for &(r, weight) in &ctx {
                for (n, l) in next.iter_mut().zip(lp.row(r)) {
                    *n += weight * l.exp();
                }
            }
            prev_marginal = Some(next);
            out.push(ctx);
        }
        out
    }

    /// Exact `KL(pi_theta(.|x) || pi_ref(.|x))` over whole outputs.
    ///
    /// Computed by propagating context marginals forward, so no enumeration is
    /// needed: `KL = sum_pos sum_ctx P(ctx) KL(row_ctx || ref_row_ctx)`.
    pub fn kl_divergence(&self, reference: &ParamTable, x: usize) -> Result<f64> {
        self.check_same_shape(reference)?;
        let lp = self.prompt_log_probs(x)?;
        let lr = reference.prompt_log_probs(x)?;
        let mut kl = 0.0;
        for ctx in self.context_weights(&lp) {
            for (r, weight) in ctx {
                if weight == 0.0 {
                    continue;
                }
                let row_kl: f64 = lp
                    .row(r)
                    .iter()
                    .zip(lr.row(r))
                    .map(|(a, b)| a.exp() * (a - b))
                    .sum();
                kl += weight * row_kl;
            }
        }
        Ok(kl.max(0.0))
    }

    /// Adds `scale * grad_theta KL(pi_theta(.|x) || pi_ref(.|x))` into `grad`.
    ///
    /// Uses `grad KL = E[grad log pi(o) * log(pi(o)/ref(o))]`, evaluated with a
    /// backward pass over expected future log-ratios.
    pub fn accumulate_kl_gradient(
        &self,
        reference: &ParamTable,
        x: usize,
        scale: f64,
        grad: &mut GradVector,
    ) -> Result<()> {
        self.check_same_shape(reference)?;
        let lp = self.prompt_log_probs(x)?;
        let lr = reference.prompt_log_probs(x)?;
        let dims = *self.dims();
        let w = dims.width();
        let weights = self.context_weights(&lp);

        // future[v]: expected log-ratio of positions after `pos` given token v at `pos`
        let mut future = vec![0.0; w];
        for pos in (0..dims.seq_len).rev() {
            let mut next_future = vec![0.0; w];
            let mut q = vec![0.0; w];
            for (i, &(r, weight)) in weights[pos].iter().enumerate() {
                let lpr = lp.row(r);
                let lrr = lr.row(r);
                for v in 0..w {
                    q[v] = lpr[v] - lrr[v] + future[v];
                }
                let mean_q: f64 = lpr.iter().zip(&q).map(|(l, qv)| l.exp() * qv).sum();
                if weight != 0.0 {
                    let row = dims.global_row(x, r);
                    let g = &mut grad.values_mut()[row * w..(row + 1) * w];
                    for v in 0..w {
                        g[v] += scale * weight * lpr[v].exp() * (q[v] - mean_q);
                    }
                }
                // previous token i selects this row when the window is on;
                // otherwise the row is shared by every previous token
                if dims.window == 1 && pos > 0 {
                    next_future[i] = mean_q;
                } else {
                    next_future.iter_mut().for_each(|f| *f = mean_q);
                }
            }
            future = next_future;
        }
        Ok(())
    }

    /// Exact KL gradient as a fresh buffer.
    pub fn kl_gradient(&self, reference: &ParamTable, x: usize) -> Result<GradVector> {
        let mut g = GradVector::zeros(*self.dims());
        self.accumulate_kl_gradient(reference, x, 1.0, &mut g)?;
        Ok(g)
    }
}
