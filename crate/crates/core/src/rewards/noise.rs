use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{RewardSample, Schedule};

/// `sqrt(3)`: ratio of uniform radius to matching Gaussian std.
pub const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    None,
    Gaussian,
    Uniform,
}

impl Kernel {
    /// One zero-mean draw at width `a`: uniform on `[-a, a)`, or Gaussian with
    /// the matching standard deviation `a / sqrt(3)`.
    pub fn draw<R: Rng + ?Sized>(&self, a: f64, rng: &mut R) -> f64 {
        match self {
            Kernel::None => 0.0,
            Kernel::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                (a / SQRT_3) * z
            }
            Kernel::Uniform => {
                let u: f64 = rng.random();
                a * (2.0 * u - 1.0)
            }
        }
    }
}

fn default_true() -> bool {
    true
}

/// Reward perturbation: kernel, relative scale `m`, and schedule.
///
/// A component of magnitude `R` gets width `a = m * R * scale(step)`: the
/// uniform kernel draws from `[-a, a]`, the Gaussian kernel uses
/// `sigma = a / sqrt(3)`, so the two have equal variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kernel: Kernel,
    #[serde(default)]
    pub m: f64,
    #[serde(default)]
    pub schedule: Schedule,
    /// Draw independently per component (default) rather than once on the total.
    #[serde(default = "default_true")]
    pub per_component: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kernel: Kernel::None,
            m: 0.0,
            schedule: Schedule::constant(),
            per_component: true,
        }
    }

    pub fn gaussian(m: f64) -> Self {
        Self {
            kernel: Kernel::Gaussian,
            m,
            ..Self::none()
        }
    }

    pub fn uniform(m: f64) -> Self {
        Self {
            kernel: Kernel::Uniform,
            m,
            ..Self::none()
        }
    }

    /// Relative scale giving per-component standard deviation `sigma` for a
    /// component of magnitude `r_max`.
    pub fn with_sigma(kernel: Kernel, sigma: f64, r_max: f64) -> Self {
        Self {
            kernel,
            m: sigma * SQRT_3 / r_max,
            ..Self::none()
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.m.is_finite() && self.m >= 0.0) {
            return Err(Error::config(format!("{path}.m"), format!("m must be finite and >= 0, got {}", self.m)));
        }
        self.schedule.validate(&format!("{path}.schedule"))
    }

    /// Noise width `a` for a component of magnitude `magnitude` at `step`.
    pub fn width(&self, magnitude: f64, step: u64) -> f64 {
        match self.kernel {
            Kernel::None => 0.0,
            _ => self.m * magnitude * self.schedule.scale(step),
        }
    }

    /// Per-draw standard deviation for a component of magnitude `magnitude`.
    pub fn component_sigma(&self, magnitude: f64, step: u64) -> f64 {
        self.width(magnitude, step) / SQRT_3
    }

    /// Standard deviation of the total noise added to one reward.
    pub fn effective_sigma(&self, magnitudes: &[f64], step: u64) -> f64 {
        if self.per_component {
            magnitudes
                .iter()
                .map(|&r| self.component_sigma(r, step).powi(2))
                .sum::<f64>()
                .sqrt()
        } else {
            self.component_sigma(magnitudes.iter().sum(), step)
        }
    }

    /// Fills the noise fields of `sample`. Dithered values are never clamped.
    ///
    /// Non-`None` kernels always consume draws, even at zero width, so the
    /// noise stream advances identically across scales.
    pub fn dither<R: Rng + ?Sized>(
        &self,
        sample: &RewardSample,
        magnitudes: &[f64],
        step: u64,
        rng: &mut R,
    ) -> RewardSample {
        let mut out = sample.clone();
        if self.kernel == Kernel::None {
            out.noise_draws = vec![0.0; sample.raw_components.len()];
            out.dithered_total = sample.raw_total;
            return out;
        }
        out.noise_draws = if self.per_component {
            magnitudes
                .iter()
                .map(|&r| self.kernel.draw(self.width(r, step), rng))
                .collect()
        } else {
            let total: f64 = magnitudes.iter().sum();
            vec![self.kernel.draw(self.width(total, step), rng)]
        };
        out.dithered_total = sample.raw_total + out.noise_draws.iter().sum::<f64>();
        out
    }
}
