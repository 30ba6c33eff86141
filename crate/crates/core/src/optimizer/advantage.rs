use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stabilizer added to the population standard deviation.
pub const ADVANTAGE_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMethod {
    /// `(r - mean) / (std + delta)` within each group.
    Grpo,
    /// `r - mean` within each group.
    DrGrpo,
    /// `(r - mean) / (std + delta)` over every reward in the step.
    ReinforcePp,
    /// Group-normalized like GRPO; groups with identical raw rewards are
    /// dropped beforehand.
    Dapo,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_group(rewards: &[f64]) -> Result<()> {
    if rewards.len() < 2 {
        return Err(Error::input(format!(
            "advantages need a group of at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    Ok(())
}

/// Advantages of a single group. `ReinforcePp` on one group coincides with
/// GRPO; use [`batch_advantages`] to normalize across groups.
pub fn group_advantages(rewards: &[f64], method: AdvantageMethod) -> Result<Vec<f64>> {
    check_group(rewards)?;
    let (mean, std) = mean_std(rewards.iter().copied());
    Ok(match method {
        AdvantageMethod::DrGrpo => rewards.iter().map(|r| r - mean).collect(),
        _ => rewards
            .iter()
            .map(|r| (r - mean) / (std + ADVANTAGE_DELTA))
            .collect(),
    })
}

/// Advantages for every group of one step.
pub fn batch_advantages(groups: &[Vec<f64>], method: AdvantageMethod) -> Result<Vec<Vec<f64>>> {
    for g in groups {
        check_group(g)?;
    }
    if method != AdvantageMethod::ReinforcePp {
        return groups.iter().map(|g| group_advantages(g, method)).collect();
    }
    if groups.is_empty() {
        return Ok(Vec::new());
    }
    let (mean, std) = mean_std(groups.iter().flatten().copied());
    Ok(groups
        .iter()
        .map(|g| g.iter().map(|r| (r - mean) / (std + ADVANTAGE_DELTA)).collect())
        .collect())
}
