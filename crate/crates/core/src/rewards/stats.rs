use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Population variance `E[(r - mean)^2]`.
pub fn reward_variance(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::input(format!(
            "reward variance needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    Ok(samples.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Share of pairs whose score difference has the same sign under both
/// scorers. A zero difference is its own sign, so a tie matches only a tie.
pub fn pairwise_accuracy(rm_scores: &[(f64, f64)], gt_scores: &[(f64, f64)]) -> Result<f64> {
    if rm_scores.is_empty() {
        return Err(Error::input("pairwise accuracy needs at least one pair"));
    }
    if rm_scores.len() != gt_scores.len() {
        return Err(Error::input(format!(
            "pair lists differ in length: {} vs {}",
            rm_scores.len(),
            gt_scores.len()
        )));
    }
    let hits = rm_scores
        .iter()
        .zip(gt_scores)
        .filter(|((a, b), (c, d))| sign(a - b) == sign(c - d))
        .count();
    Ok(hits as f64 / rm_scores.len() as f64)
}

/// Probability that independent noise of std `sigma` on each side reverses a
/// gap of `delta`: `Phi(-|delta| / (sigma sqrt 2))`.
pub fn flip_probability(delta: f64, sigma: f64) -> f64 {
    if delta == 0.0 {
        return 0.5;
    }
    if sigma == 0.0 {
        return 0.0;
    }
    normal_cdf(-delta.abs() / (sigma * std::f64::consts::SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_examples() {
        assert_eq!(reward_variance(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(reward_variance(&[2.0, 0.0, 0.0, 0.0]).unwrap(), 0.75);
        assert!(reward_variance(&[1.0]).is_err());
    }

    #[test]
    fn flip_probability_examples() {
        assert_eq!(flip_probability(1.0, 0.0), 0.0);
        assert_eq!(flip_probability(0.0, 0.3), 0.5);
        assert!((flip_probability(1.0, 0.5) - 0.078650).abs() < 1e-6);
    }

    #[test]
    fn accuracy_sign_rules() {
        let gt = [(1.0, 0.0), (0.0, 1.0), (0.5, 0.5)];
        assert_eq!(pairwise_accuracy(&gt, &gt).unwrap(), 1.0);
        let neg: Vec<_> = gt.iter().map(|&(a, b)| (-a, -b)).collect();
        assert!((pairwise_accuracy(&neg, &gt).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(pairwise_accuracy(&neg[..2], &gt[..2]).unwrap(), 0.0);
        assert!(pairwise_accuracy(&[], &[]).is_err());
    }
}
