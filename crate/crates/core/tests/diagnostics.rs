mod common;

use common::rng;
use rand_distr::{Distribution, Normal};
use redit::diagnostics::{
    check_gradient_noise_variance, check_unbiasedness, check_unbiasedness_with, classify_grad,
    measure_t_gamma, stability_from_norms, summarize_cells, variance_sweep, variance_sweep_cells,
    ConvergenceRecord, GradClass, GradClassifierConfig,
};
use redit::harness::{train_for_convergence, EnvKind, Environment, EnvironmentSpec, ExperimentConfig, Run};
use redit::optimizer::Task;
use redit::policy::{Dims, ParamTable};
use redit::rewards::{Kernel, NoiseSpec};

/// One prompt, four arms, reward 1 on a single arm.
fn one_arm_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("sparse-vanilla").unwrap();
    cfg.environment = EnvironmentSpec { kind: EnvKind::SparseSeq, prompts: 1, vocab: 4, seq_len: 1, ..EnvironmentSpec::sparse_seq() };
    cfg.learning_rate = 0.5;
    cfg.steps = 200;
    cfg
}

fn one_arm() -> Environment {
    Environment::with_rule(&one_arm_config().environment, None).unwrap()
}

#[test]
fn classifier_boundaries() {
    let cfg = GradClassifierConfig::default();
    assert_eq!(classify_grad(0.005, &cfg), GradClass::Vanishing);
    assert_eq!(classify_grad(6.0, &cfg), GradClass::Exploding);
    assert_eq!(classify_grad(1.0, &cfg), GradClass::Normal);
    assert_eq!(classify_grad(0.01, &cfg), GradClass::Normal);
    assert_eq!(classify_grad(5.0, &cfg), GradClass::Normal);
    let s = stability_from_norms(&[0.001, 0.001, 1.0, 9.0], &cfg).unwrap();
    assert_eq!((s.vanish_fraction, s.explode_fraction, s.longest_vanish_streak), (0.5, 0.25, 2));
}

#[test]
fn unbiased_on_uniform_four_arm_bandit() {
    let env = one_arm();
    let params = ParamTable::zeros(env.dims());
    for kernel in [Kernel::Gaussian, Kernel::Uniform] {
        let noise = NoiseSpec::with_sigma(kernel, 0.5, 1.0);
        let r = check_unbiasedness(&params, &env, &noise, 0, 1_000_000, &mut rng(1)).unwrap();
        assert!(r.pass, "{r:?}");
    }
    let r = check_unbiasedness(&params, &env, &NoiseSpec::none(), 0, 10_000, &mut rng(2)).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn output_correlated_bias_is_detected() {
    // Noise with mean 0.1 on one arm only biases the gradient by
    // 0.1 * pi(0) * grad log pi(0) != 0.
    let env = one_arm();
    let params = ParamTable::zeros(env.dims());
    let normal = Normal::new(0.0, 0.5).unwrap();
    let r = check_unbiasedness_with(&params, &env, 1_000_000, &mut rng(3), |rng, _, o, _| {
        normal.sample(rng) + if o[0] == 0 { 0.1 } else { 0.0 }
    })
    .unwrap();
    assert!(!r.pass, "{r:?}");
}

#[test]
fn constant_offset_leaves_the_gradient_unbiased() {
    // E[grad log pi] = 0, so a shared offset cancels in expectation.
    let env = one_arm();
    let params = ParamTable::zeros(env.dims());
    let normal = Normal::new(0.1, 0.5).unwrap();
    let r = check_unbiasedness_with(&params, &env, 1_000_000, &mut rng(4), |rng, _, _, _| normal.sample(rng)).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn noise_gradient_variance_on_uniform_bandit() {
    let env = one_arm();
    let params = ParamTable::zeros(env.dims());
    let r = check_gradient_noise_variance(&params, &env, Kernel::Gaussian, 1.0, 1_000_000, &mut rng(5)).unwrap();
    assert!((r.theoretical - 0.75).abs() < 1e-12);
    assert!(r.pass, "{r:?}");
    let doubled = check_gradient_noise_variance(&params, &env, Kernel::Gaussian, 2.0, 1_000_000, &mut rng(6)).unwrap();
    assert!((doubled.statistic / r.statistic / 4.0 - 1.0).abs() < 0.05);
    let zero = check_gradient_noise_variance(&params, &env, Kernel::Uniform, 0.0, 10_000, &mut rng(7)).unwrap();
    assert_eq!(zero.statistic, 0.0);
}

#[test]
fn unbiased_under_every_schedule_step() {
    let env = one_arm();
    let mut params = ParamTable::zeros(Dims::autoregressive(1, 1, 4, 0));
    params.logits_mut()[2] = 0.7;
    for kind in redit::rewards::ScheduleKind::SCHEDULED {
        let noise = NoiseSpec::gaussian(0.5).with_schedule(redit::rewards::Schedule::new(kind, 10));
        for step in [0, 5, 10] {
            let r = check_unbiasedness(&params, &env, &noise, step, 100_000, &mut rng(step)).unwrap();
            assert!(r.pass, "{kind:?} step {step}: {r:?}");
        }
    }
}

#[test]
fn t_gamma_is_deterministic_and_finite() {
    let cfg = one_arm_config();
    let a = measure_t_gamma(&cfg, 0, 0.1, 2000).unwrap();
    let b = measure_t_gamma(&cfg, 0, 0.1, 2000).unwrap();
    assert!(a.t_gamma.is_some());
    assert_eq!(a, b);
    assert!(measure_t_gamma(&cfg, 0, 0.0, 10).is_err());
}

#[test]
fn unreachable_gamma_never_hits() {
    // J starts at 0.25 and cannot exceed 1.
    let rec = measure_t_gamma(&one_arm_config(), 0, 0.8, 300).unwrap();
    assert_eq!(rec.t_gamma, None);
    assert!(rec.t_gamma_or_inf().is_infinite());
}

#[test]
fn stored_trajectory_reproduces_the_record() {
    let cfg = one_arm_config();
    let mut run = Run::new(&cfg, 3).unwrap();
    let mut snapshots = Vec::new();
    for _ in 0..150 {
        snapshots.push(run.state().params.clone());
        run.step().unwrap();
    }
    snapshots.push(run.state().params.clone());
    let env = one_arm();
    let trace: Vec<(u64, f64)> = snapshots
        .iter()
        .enumerate()
        .map(|(t, p)| (t as u64, env.expected_reward(p).unwrap()))
        .collect();
    let replayed = ConvergenceRecord::from_trace(0.1, trace).unwrap();
    let mut short = cfg.clone();
    short.steps = 150;
    let live = train_for_convergence(&short, 3, 0.1, 150).unwrap().record;
    assert_eq!(replayed.t_gamma, live.t_gamma);
    assert_eq!(replayed.trace[..live.trace.len()], live.trace[..]);
}

#[test]
fn zero_grid_reproduces_the_baseline() {
    let cfg = one_arm_config();
    let rows = variance_sweep(&cfg, &[0.0], 5, 0.1, 2000).unwrap();
    let baseline: Vec<_> = (0..5)
        .map(|i| {
            let o = train_for_convergence(&cfg, i, 0.1, 2000).unwrap();
            redit::diagnostics::SweepCell {
                m: 0.0,
                run_index: i,
                t_gamma: o.record.t_gamma,
                final_expected_reward: o.final_expected_reward,
                vanish_fraction: o.stability.vanish_fraction,
            }
        })
        .collect();
    assert_eq!(rows[0], summarize_cells(0.0, 0.0, &baseline));
    assert!(variance_sweep(&cfg, &[0.0], 4, 0.1, 2000).is_err());
    assert!(variance_sweep_cells(&cfg, &[], 5, 0.1, 2000).is_err());
}
