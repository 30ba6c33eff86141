//! The numbered Monte-Carlo checks run by `redit verify`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::harness::{Environment, EnvironmentSpec};
use crate::policy::ParamTable;
use crate::rewards::{Kernel, NoiseSpec};
use crate::seed::derive_seed;

use super::verify::{
    check_gradient_noise_variance, check_pairwise_accuracy, check_unbiasedness,
    check_variance_additivity, log_log_slope, PropositionReport,
};

/// Proposition numbers understood by [`verify_propositions`].
pub const PROPOSITIONS: [u32; 3] = [1, 2, 3];

/// Noise levels for the unbiasedness check.
pub const UNBIASED_SIGMAS: [f64; 2] = [0.05, 0.5];
/// Noise levels for the variance-scaling check.
pub const VARIANCE_SIGMAS: [f64; 3] = [0.1, 0.2, 0.4];
/// Bernoulli rates for the additivity check.
pub const ADDITIVITY_RATES: [f64; 2] = [0.1, 0.5];
/// Noise levels over which pairwise accuracy must not increase.
pub const ACCURACY_SIGMAS: [f64; 4] = [0.0, 0.1, 0.5, 1.0];

/// Spread of the probe policy's logits.
const PROBE_LOGIT_STD: f64 = 0.5;

/// The default signed bandit and a fixed non-uniform policy over it.
pub fn probe_problem(seed: u64) -> Result<(Environment, ParamTable)> {
    let env = Environment::build(&EnvironmentSpec::signed_bandit())?;
    let dims = env.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, PROBE_LOGIT_STD).expect("valid normal");
    let logits = (0..dims.len()).map(|_| normal.sample(&mut rng)).collect();
    Ok((env, ParamTable::from_logits(dims, logits)?))
}

fn tagged(prop: u32, mut r: PropositionReport) -> PropositionReport {
    r.id = format!("{prop}/{}", r.id);
    r
}

/// Runs every check belonging to the listed propositions with `n` samples
/// each. Every check gets its own stream derived from `seed`, so the result
/// does not depend on which other propositions are requested.
pub fn verify_propositions(props: &[u32], n: usize, seed: u64) -> Result<Vec<PropositionReport>> {
    let (env, params) = probe_problem(derive_seed(seed, 0))?;
    let rng = |k: u64| ChaCha8Rng::seed_from_u64(derive_seed(seed, k));
    let mut out = Vec::new();
    for &prop in props {
        match prop {
            1 => {
                for (i, kernel) in [Kernel::Gaussian, Kernel::Uniform].into_iter().enumerate() {
                    for (j, &sigma) in UNBIASED_SIGMAS.iter().enumerate() {
                        let noise = NoiseSpec::with_sigma(kernel, sigma, 1.0);
                        let r = check_unbiasedness(&params, &env, &noise, 0, n, &mut rng(100 + 10 * i as u64 + j as u64))?;
                        out.push(tagged(1, r.with_detail(format!("kernel = {kernel:?}, sigma = {sigma}"))));
                    }
                }
            }
            2 => {
                let mut stats = Vec::new();
                for (j, &sigma) in VARIANCE_SIGMAS.iter().enumerate() {
                    let r = check_gradient_noise_variance(&params, &env, Kernel::Gaussian, sigma, n, &mut rng(200 + j as u64))?;
                    stats.push(r.statistic);
                    out.push(tagged(2, r));
                }
                let r = check_gradient_noise_variance(&params, &env, Kernel::Uniform, VARIANCE_SIGMAS[1], n, &mut rng(210))?;
                out.push(tagged(2, r));
                let slope = log_log_slope(&VARIANCE_SIGMAS, &stats);
                out.push(tagged(
                    2,
                    PropositionReport::compare("variance_slope", slope, 2.0, 0.05, false, n)
                        .with_detail(format!("sigma grid {VARIANCE_SIGMAS:?}")),
                ));
            }
            3 => {
                let noise = NoiseSpec::with_sigma(Kernel::Gaussian, 0.5, 1.0);
                for (j, &p) in ADDITIVITY_RATES.iter().enumerate() {
                    out.push(tagged(3, check_variance_additivity(p, &noise, n, &mut rng(300 + j as u64))?));
                }
                let mut accs = Vec::new();
                for (j, &sigma) in ACCURACY_SIGMAS.iter().enumerate() {
                    let noise = NoiseSpec::with_sigma(Kernel::Gaussian, sigma, 1.0);
                    let r = check_pairwise_accuracy(&noise, n, &mut rng(310 + j as u64))?;
                    accs.push(r.statistic);
                    if sigma == 0.5 {
                        out.push(tagged(3, r));
                    }
                }
                let rises = accs.windows(2).filter(|w| w[1] > w[0]).count();
                out.push(tagged(
                    3,
                    PropositionReport::compare("accuracy_monotone", rises as f64, 0.0, 0.0, false, n)
                        .with_detail(format!("accuracy over sigma {ACCURACY_SIGMAS:?}: {accs:?}")),
                ));
            }
            other => {
                return Err(Error::input(format!(
                    "unknown proposition {other}; expected one of {PROPOSITIONS:?}"
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_proposition_rejected() {
        assert!(verify_propositions(&[4], 10_000, 1).is_err());
    }

    #[test]
    fn probe_is_deterministic() {
        let (_, a) = probe_problem(3).unwrap();
        let (_, b) = probe_problem(3).unwrap();
        assert_eq!(a, b);
    }
}
