use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{train_for_convergence, ExperimentConfig};

/// Relative noise scales swept by default.
pub const DEFAULT_M_GRID: [f64; 6] = [0.01, 0.02, 0.05, 0.1, 0.3, 0.5];

/// Fewest seeds a summarized sweep accepts.
pub const MIN_SWEEP_SEEDS: usize = 5;

/// Asymptotic efficiency factor of the sample median relative to the mean
/// under normality (`sqrt(pi / 2)`).
const MEDIAN_SE_FACTOR: f64 = 1.2533;

/// IQR of a standard normal.
const NORMAL_IQR: f64 = 1.349;

/// First time the exact expected reward climbs `gamma` above its start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub gamma: f64,
    /// `None` when the threshold was never reached.
    pub t_gamma: Option<u64>,
    pub baseline_expected_reward: f64,
    /// `(step, exact expected reward before that step's update)`.
    pub trace: Vec<(u64, f64)>,
}

impl ConvergenceRecord {
    pub fn from_trace(gamma: f64, trace: Vec<(u64, f64)>) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::input(format!("gamma must be > 0, got {gamma}")));
        }
        let baseline = trace
            .first()
            .map(|&(_, j)| j)
            .ok_or_else(|| Error::input("convergence trace is empty"))?;
        let t_gamma = trace
            .iter()
            .find(|&&(_, j)| j >= baseline + gamma)
            .map(|&(s, _)| s);
        Ok(Self {
            gamma,
            t_gamma,
            baseline_expected_reward: baseline,
            trace,
        })
    }

    /// `t_gamma` as a float, infinite when never reached.
    pub fn t_gamma_or_inf(&self) -> f64 {
        self.t_gamma.map_or(f64::INFINITY, |t| t as f64)
    }
}

/// Trains run `run_index` of `cfg` until the exact expected reward rises by
/// `gamma` or `budget` steps pass.
pub fn measure_t_gamma(cfg: &ExperimentConfig, run_index: u64, gamma: f64, budget: u64) -> Result<ConvergenceRecord> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::input(format!("gamma must be > 0, got {gamma}")));
    }
    let mut short = cfg.clone();
    // only the convergence criterion matters here
    short.steps = 1;
    let mut rec = train_for_convergence(&short, run_index, gamma, budget)?.record;
    if rec.t_gamma.is_some_and(|t| t > budget) {
        rec.t_gamma = None;
    }
    Ok(rec)
}

/// Linear-interpolation quantile of sorted data; infinities propagate.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let frac = pos - lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    if frac == 0.0 || a == b {
        a
    } else if b.is_infinite() {
        b
    } else {
        a + (b - a) * frac
    }
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// One grid cell of a noise-scale sweep. `None` stands for "never reached".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: f64,
    pub sigma_effective: f64,
    pub seeds: usize,
    pub median_t_gamma: Option<f64>,
    pub t_gamma_q1: Option<f64>,
    pub t_gamma_q3: Option<f64>,
    /// Standard error of the median, `1.2533 * (IQR / 1.349) / sqrt(n)`.
    pub median_t_gamma_se: Option<f64>,
    pub reached: usize,
    pub median_final_expected_reward: f64,
    pub final_q1: f64,
    pub final_q3: f64,
    pub median_vanish_fraction: f64,
}

impl SweepRow {
    pub fn median_t_gamma_or_inf(&self) -> f64 {
        self.median_t_gamma.unwrap_or(f64::INFINITY)
    }
}

/// Per-seed measurements behind one [`SweepRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub m: f64,
    pub run_index: u64,
    pub t_gamma: Option<u64>,
    pub final_expected_reward: f64,
    pub vanish_fraction: f64,
}

/// Summarizes the cells of one grid value.
pub fn summarize_cells(m: f64, sigma_effective: f64, cells: &[SweepCell]) -> SweepRow {
    let n = cells.len();
    let t = sorted(cells.iter().map(|c| c.t_gamma.map_or(f64::INFINITY, |v| v as f64)).collect());
    let f = sorted(cells.iter().map(|c| c.final_expected_reward).collect());
    let v = sorted(cells.iter().map(|c| c.vanish_fraction).collect());
    let (q1, q3) = (quantile(&t, 0.25), quantile(&t, 0.75));
    let se = finite(MEDIAN_SE_FACTOR * ((q3 - q1) / NORMAL_IQR) / (n as f64).sqrt());
    SweepRow {
        m,
        sigma_effective,
        seeds: n,
        median_t_gamma: finite(quantile(&t, 0.5)),
        t_gamma_q1: finite(q1),
        t_gamma_q3: finite(q3),
        median_t_gamma_se: se,
        reached: cells.iter().filter(|c| c.t_gamma.is_some()).count(),
        median_final_expected_reward: quantile(&f, 0.5),
        final_q1: quantile(&f, 0.25),
        final_q3: quantile(&f, 0.75),
        median_vanish_fraction: quantile(&v, 0.5),
    }
}

/// Runs `seeds` training seeds at every relative scale in `grid`. Seed `i`
/// uses the same run index in every cell, so cells differ only in noise.
pub fn variance_sweep_cells(
    cfg: &ExperimentConfig,
    grid: &[f64],
    seeds: usize,
    gamma: f64,
    budget: u64,
) -> Result<Vec<SweepCell>> {
    if grid.is_empty() {
        return Err(Error::input("sweep grid is empty"));
    }
    if seeds == 0 {
        return Err(Error::input("sweep needs at least one seed"));
    }
    let mut cells = Vec::with_capacity(grid.len() * seeds);
    for &m in grid {
        let cell_cfg = cfg.with_m(m);
        for i in 0..seeds as u64 {
            let out = train_for_convergence(&cell_cfg, i, gamma, budget)?;
            cells.push(SweepCell {
                m,
                run_index: i,
                t_gamma: out.record.t_gamma,
                final_expected_reward: out.final_expected_reward,
                vanish_fraction: out.stability.vanish_fraction,
            });
        }
    }
    Ok(cells)
}

/// Median `t_gamma`, its spread and the median final reward per grid value.
pub fn variance_sweep(
    cfg: &ExperimentConfig,
    grid: &[f64],
    seeds: usize,
    gamma: f64,
    budget: u64,
) -> Result<Vec<SweepRow>> {
    if seeds < MIN_SWEEP_SEEDS {
        return Err(Error::input(format!(
            "a sweep summary needs at least {MIN_SWEEP_SEEDS} seeds, got {seeds}"
        )));
    }
    let cells = variance_sweep_cells(cfg, grid, seeds, gamma, budget)?;
    let env = crate::harness::Environment::with_rule(&cfg.environment, cfg.reward.clone())?;
    let magnitudes = crate::optimizer::Task::magnitudes(&env).to_vec();
    Ok(grid
        .iter()
        .map(|&m| {
            let mine: Vec<SweepCell> = cells.iter().filter(|c| c.m == m).cloned().collect();
            let sigma = cfg.with_m(m).noise.effective_sigma(&magnitudes, 0);
            summarize_cells(m, sigma, &mine)
        })
        .collect())
}

/// A place where median `t_gamma` rose between consecutive grid values by
/// more than seed noise allows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendViolation {
    pub m_before: f64,
    pub m_after: f64,
    pub median_before: f64,
    pub median_after: f64,
    pub allowance: f64,
}

/// Checks that median `t_gamma` is non-increasing along `rows`. A rise counts
/// only beyond `2 * sqrt(se_a^2 + se_b^2)`; a missing standard error
/// contributes no allowance.
pub fn trend_violations(rows: &[SweepRow]) -> Vec<TrendViolation> {
    rows.windows(2)
        .filter_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let se = |r: &SweepRow| r.median_t_gamma_se.unwrap_or(0.0);
            let allowance = 2.0 * (se(a).powi(2) + se(b).powi(2)).sqrt();
            let (ma, mb) = (a.median_t_gamma_or_inf(), b.median_t_gamma_or_inf());
            (mb > ma + allowance).then_some(TrendViolation {
                m_before: a.m,
                m_after: b.m,
                median_before: ma,
                median_after: mb,
                allowance,
            })
        })
        .collect()
}
