mod common;

use common::{grad_logprob_fd_error, max_row_sum, random_dims, random_table, rng};
use proptest::prelude::*;
use redit::policy::{Dims, ParamTable, DEFAULT_ENUMERATION_CAP};

#[test]
fn skewed_bandit_oracles() {
    // softmax([2, 0, 0, 0])[0] = e^2 / (e^2 + 3)
    let p = ParamTable::from_logits(Dims::bandit(1, 4), vec![2.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((p.logprob(0, &[0]).unwrap() - (-0.340_753)).abs() < 1e-6);
    let j = p.expected_reward(0, DEFAULT_ENUMERATION_CAP, |o| f64::from(o[0] == 0)).unwrap();
    assert!((j - 0.711_235).abs() < 1e-6);
    assert_eq!(p.expected_reward(0, DEFAULT_ENUMERATION_CAP, |_| 0.0).unwrap(), 0.0);
}

#[test]
fn uniform_group_frequencies() {
    let p = ParamTable::zeros(Dims::bandit(1, 4));
    let mut r = rng(11);
    let mut counts = [0usize; 4];
    for _ in 0..100_000 {
        for t in p.sample_group(0, 4, &mut r).unwrap() {
            counts[t.output[0]] += 1;
        }
    }
    for c in counts {
        let f = c as f64 / 400_000.0;
        assert!((f - 0.25).abs() < 0.01 * 0.25, "frequency {f}");
    }
}

#[test]
fn peaked_group_is_all_mode() {
    let p = ParamTable::from_logits(Dims::bandit(1, 4), vec![10.0, 0.0, 0.0, 0.0]).unwrap();
    let mut r = rng(5);
    let all_mode = (0..1000)
        .filter(|_| p.sample_group(0, 8, &mut r).unwrap().iter().all(|t| t.output[0] == 0))
        .count();
    assert!(all_mode >= 990, "{all_mode}");
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let mut r = rng(9);
    let p = random_table(Dims::autoregressive(2, 3, 4, 1), 1.0, &mut r);
    let a = p.sample_group(1, 6, &mut rng(42)).unwrap();
    let b = p.sample_group(1, 6, &mut rng(42)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn grad_logprob_matches_finite_differences() {
    for seed in 0..50 {
        let mut r = rng(seed);
        let dims = random_dims(&mut r);
        let p = random_table(dims, 2.0, &mut r);
        let x = seed as usize % dims.prompts;
        let lp = p.prompt_log_probs(x).unwrap();
        let o = p.sample(&lp, &mut r);
        let err = grad_logprob_fd_error(&p, x, &o);
        assert!(err < 1e-5, "seed {seed}: relative error {err}");
    }
}

#[test]
fn kl_is_nonnegative_on_random_pairs() {
    let mut r = rng(3);
    for _ in 0..1000 {
        let dims = random_dims(&mut r);
        let a = random_table(dims, 3.0, &mut r);
        let b = random_table(dims, 3.0, &mut r);
        for x in 0..dims.prompts {
            assert!(a.kl_divergence(&b, x).unwrap() >= -1e-12);
        }
        assert!(a.kl_divergence(&a, 0).unwrap().abs() < 1e-12);
    }
}

#[test]
fn probabilities_sum_to_one() {
    let mut r = rng(8);
    let p = random_table(Dims::autoregressive(1, 3, 3, 1), 2.0, &mut r);
    let total = p.expected_reward(0, DEFAULT_ENUMERATION_CAP, |_| 1.0).unwrap();
    assert!((total - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_rows_sum_to_zero(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r);
        let p = random_table(dims, 4.0, &mut r);
        let x = (seed % dims.prompts as u64) as usize;
        let o = p.sample(&p.prompt_log_probs(x).unwrap(), &mut r);
        prop_assert!(max_row_sum(&p, x, &o) < 1e-9);
    }

    #[test]
    fn logprob_is_sum_of_token_logprobs(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r);
        let p = random_table(dims, 3.0, &mut r);
        let o = p.sample(&p.prompt_log_probs(0).unwrap(), &mut r);
        let total: f64 = p.token_logprobs(0, &o).unwrap().iter().sum();
        prop_assert!((total - p.logprob(0, &o).unwrap()).abs() < 1e-12);
        prop_assert!(p.logprob(0, &o).unwrap() <= 0.0);
    }

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_table(random_dims(&mut r), 5.0, &mut r);
        prop_assert_eq!(ParamTable::from_json(&p.to_json().unwrap()).unwrap(), p);
    }
}
