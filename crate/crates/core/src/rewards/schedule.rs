use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the noise scale over training. `Reverse` variants start at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScheduleKind {
    Constant,
    SquareRoot,
    SquareRootReverse,
    Factor,
    FactorReverse,
    MutilFactor,
    MutilFactorReverse,
    Cosine,
    CosineReverse,
}

impl ScheduleKind {
    /// The eight time-varying kinds.
    pub const SCHEDULED: [ScheduleKind; 8] = [
        ScheduleKind::SquareRoot,
        ScheduleKind::SquareRootReverse,
        ScheduleKind::Factor,
        ScheduleKind::FactorReverse,
        ScheduleKind::MutilFactor,
        ScheduleKind::MutilFactorReverse,
        ScheduleKind::Cosine,
        ScheduleKind::CosineReverse,
    ];

    pub fn is_reverse(&self) -> bool {
        matches!(
            self,
            ScheduleKind::SquareRootReverse
                | ScheduleKind::FactorReverse
                | ScheduleKind::MutilFactorReverse
                | ScheduleKind::CosineReverse
        )
    }
}

fn default_milestones() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_decay() -> f64 {
    0.5
}

/// Multiplier applied to the noise standard deviation at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub kind: ScheduleKind,
    /// Step at which `p = 1`. Zero means "fill in from the run length".
    #[serde(default)]
    pub total_steps: u64,
    /// Fractions of training at which `MutilFactor` decays.
    #[serde(default = "default_milestones")]
    pub milestones: Vec<f64>,
    #[serde(default = "default_decay")]
    pub decay: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self::constant()
    }
}

impl Schedule {
    pub fn constant() -> Self {
        Self::new(ScheduleKind::Constant, 0)
    }

    pub fn new(kind: ScheduleKind, total_steps: u64) -> Self {
        Self {
            kind,
            total_steps,
            milestones: default_milestones(),
            decay: default_decay(),
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config(format!("{path}.decay"), "decay must lie in (0, 1]"));
        }
        if self.milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::config(format!("{path}.milestones"), "milestones must lie in [0, 1]"));
        }
        if self.kind != ScheduleKind::Constant && self.total_steps == 0 {
            return Err(Error::config(
                format!("{path}.total_steps"),
                "time-varying schedules need total_steps >= 1",
            ));
        }
        Ok(())
    }

    /// Product of `decay` over the milestones already passed at `p`.
    fn mutil_factor(&self, p: f64) -> f64 {
        self.milestones
            .iter()
            .filter(|&&m| p >= m)
            .fold(1.0, |acc, _| acc * self.decay)
    }

    /// Closed-form multiplier at training fraction `p` in `[0, 1]`.
    pub fn scale_at_fraction(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self.kind {
            ScheduleKind::Constant => 1.0,
            ScheduleKind::SquareRoot => (1.0 - p).sqrt(),
            ScheduleKind::SquareRootReverse => p.sqrt(),
            ScheduleKind::Factor => 1.0 - p,
            ScheduleKind::FactorReverse => p,
            ScheduleKind::MutilFactor => self.mutil_factor(p),
            // 0 at the start, 1 - decay^k once all k milestones have passed
            ScheduleKind::MutilFactorReverse => 1.0 - self.mutil_factor(p),
            ScheduleKind::Cosine => (p * FRAC_PI_2).cos(),
            ScheduleKind::CosineReverse => 1.0 - (p * FRAC_PI_2).cos(),
        }
    }

    /// Whether `step` lies beyond `total_steps` and will be clamped.
    pub fn is_clamped(&self, step: u64) -> bool {
        self.kind != ScheduleKind::Constant && step > self.total_steps
    }

    /// Multiplier at `step`. Steps past `total_steps` clamp to the endpoint;
    /// callers that care check [`Schedule::is_clamped`] and warn once.
    pub fn scale(&self, step: u64) -> f64 {
        if self.kind == ScheduleKind::Constant {
            return 1.0;
        }
        let p = step.min(self.total_steps) as f64 / self.total_steps as f64;
        self.scale_at_fraction(p)
    }
}
