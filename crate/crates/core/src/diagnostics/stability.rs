use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradClass {
    Vanishing,
    Normal,
    Exploding,
}

impl fmt::Display for GradClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradClass::Vanishing => "vanishing",
            GradClass::Normal => "normal",
            GradClass::Exploding => "exploding",
        })
    }
}

/// Gradient-norm thresholds. Both boundaries count as normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradClassifierConfig {
    pub vanish_threshold: f64,
    pub explode_threshold: f64,
}

impl Default for GradClassifierConfig {
    fn default() -> Self {
        Self {
            vanish_threshold: 0.01,
            explode_threshold: 5.0,
        }
    }
}

impl GradClassifierConfig {
    pub fn new(vanish_threshold: f64, explode_threshold: f64) -> Result<Self> {
        let cfg = Self {
            vanish_threshold,
            explode_threshold,
        };
        cfg.validate("classifier")?;
        Ok(cfg)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.vanish_threshold > 0.0 && self.vanish_threshold < self.explode_threshold) {
            return Err(Error::config(
                path,
                format!(
                    "need 0 < vanish_threshold < explode_threshold, got {} and {}",
                    self.vanish_threshold, self.explode_threshold
                ),
            ));
        }
        Ok(())
    }
}

/// Strict thresholds; a non-finite norm counts as exploding.
pub fn classify_grad(norm: f64, cfg: &GradClassifierConfig) -> GradClass {
    if !norm.is_finite() || norm > cfg.explode_threshold {
        GradClass::Exploding
    } else if norm < cfg.vanish_threshold {
        GradClass::Vanishing
    } else {
        GradClass::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub vanish_fraction: f64,
    pub explode_fraction: f64,
    pub longest_vanish_streak: u64,
    pub steps: u64,
}

/// Fractions and longest vanishing run over a sequence of classes.
pub fn stability_summary<I>(classes: I) -> Result<StabilitySummary>
where
    I: IntoIterator<Item = GradClass>,
{
    let (mut n, mut vanish, mut explode, mut streak, mut longest) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for c in classes {
        n += 1;
        match c {
            GradClass::Vanishing => {
                vanish += 1;
                streak += 1;
                longest = longest.max(streak);
            }
            GradClass::Exploding => {
                explode += 1;
                streak = 0;
            }
            GradClass::Normal => streak = 0,
        }
    }
    if n == 0 {
        return Err(Error::input("stability summary of an empty log"));
    }
    Ok(StabilitySummary {
        vanish_fraction: vanish as f64 / n as f64,
        explode_fraction: explode as f64 / n as f64,
        longest_vanish_streak: longest,
        steps: n,
    })
}

/// [`stability_summary`] over raw gradient norms.
pub fn stability_from_norms(norms: &[f64], cfg: &GradClassifierConfig) -> Result<StabilitySummary> {
    stability_summary(norms.iter().map(|&n| classify_grad(n, cfg)))
}
