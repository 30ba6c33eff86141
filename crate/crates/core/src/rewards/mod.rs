//! Discrete rule-based rewards and the dithering layer on top of them.
//!
//! A [`RewardRule`] sums a handful of components, each worth either nothing
//! or its full magnitude (one is graded). [`NoiseSpec`] adds independent
//! zero-mean noise per component, scaled by a [`Schedule`]. The statistics in
//! [`stats`] estimate reward variance, pairwise accuracy against a ground
//! truth, and the probability that noise reverses a ranking.

mod noise;
mod rule;
mod schedule;
pub mod stats;

pub use noise::{Kernel, NoiseSpec, SQRT_3};
pub use rule::{Component, Markers, Predicate, RewardRule, TaskContext, TRAILING_PENALTY};
pub use schedule::{Schedule, ScheduleKind};
pub use stats::{flip_probability, normal_cdf, pairwise_accuracy, reward_variance};

use serde::{Deserialize, Serialize};

/// One evaluated reward: raw components, their total, and the noise that was
/// added. `dithered_total == raw_total + sum(noise_draws)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    pub raw_components: Vec<f64>,
    pub raw_total: f64,
    pub noise_draws: Vec<f64>,
    pub dithered_total: f64,
}

impl RewardSample {
    /// Raw sample with no noise applied yet.
    pub fn from_components(raw_components: Vec<f64>) -> Self {
        let raw_total = raw_components.iter().sum();
        Self {
            noise_draws: vec![0.0; raw_components.len()],
            raw_components,
            raw_total,
            dithered_total: raw_total,
        }
    }
}
