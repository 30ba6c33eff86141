mod common;

use common::{random_instance, random_table, rng, surrogate_fd_error};
use proptest::prelude::*;
use rand::Rng;
use redit::diagnostics::GradClassifierConfig;
use redit::harness::{Environment, EnvironmentSpec};
use redit::optimizer::{
    batch_advantages, dynamic_sampling_filter, group_advantages, surrogate_gradient, train_step,
    AdvantageMethod, ClipConfig, GroupBatch, RatioLevel, TrainConfig, TrainState,
};
use redit::policy::{Dims, ParamTable};
use redit::rewards::NoiseSpec;
use redit::seed::RunRng;

#[test]
fn surrogate_matches_finite_differences() {
    for seed in 0..100 {
        let inst = random_instance(seed);
        let err = surrogate_fd_error(&inst);
        assert!(err < 1e-4, "instance {seed}: relative error {err}");
    }
}

#[test]
fn no_clipping_when_policies_agree() {
    for seed in 0..20 {
        let mut inst = random_instance(seed);
        inst.params = inst.old.clone();
        let (_, report) =
            surrogate_gradient(&inst.params, &inst.old, &inst.reference, &inst.groups, &inst.cfg).unwrap();
        assert_eq!(report.clip_fraction, 0.0);
    }
}

#[test]
fn clipping_only_lowers_the_objective() {
    // min(r A, clip(r) A) <= r A term by term.
    for seed in 0..100 {
        let inst = random_instance(seed);
        let wide = ClipConfig { eps_low: 1e9, eps_high: 1e9, ..inst.cfg.clone() };
        let obj = |cfg: &ClipConfig| {
            redit::optimizer::surrogate_objective(&inst.params, &inst.old, &inst.reference, &inst.groups, cfg).unwrap()
        };
        assert!(obj(&inst.cfg) <= obj(&wide) + 1e-12);
        let (clipped, rep) = surrogate_gradient(&inst.params, &inst.old, &inst.reference, &inst.groups, &inst.cfg).unwrap();
        if rep.clip_fraction == 0.0 {
            let (full, _) = surrogate_gradient(&inst.params, &inst.old, &inst.reference, &inst.groups, &wide).unwrap();
            assert!(clipped.values().iter().zip(full.values()).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
}

fn bandit_env() -> Environment {
    Environment::build(&EnvironmentSpec::signed_bandit()).unwrap()
}

fn config(method: AdvantageMethod) -> TrainConfig {
    TrainConfig {
        group_size: 4,
        learning_rate: 0.5,
        clip: ClipConfig { beta: 0.05, advantage_method: method, ..ClipConfig::default() },
        classifier: GradClassifierConfig::default(),
        track_expected_reward: true,
    }
}

fn trajectory(noise: &NoiseSpec, steps: usize) -> (Vec<String>, ParamTable) {
    let env = bandit_env();
    let cfg = config(AdvantageMethod::Grpo);
    let mut state = TrainState::new(ParamTable::zeros(env.dims()));
    let mut r = RunRng::new(77);
    let rows = (0..steps)
        .map(|_| serde_json::to_string(&train_step(&mut state, &env, &cfg, noise, &mut r).unwrap().row).unwrap())
        .collect();
    (rows, state.params)
}

#[test]
fn zero_width_gaussian_is_vanilla() {
    let (a, pa) = trajectory(&NoiseSpec::none(), 200);
    let (b, pb) = trajectory(&NoiseSpec::gaussian(0.0), 200);
    assert_eq!(a, b);
    assert_eq!(pa.logits(), pb.logits());
    let (c, _) = trajectory(&NoiseSpec::none(), 200);
    assert_eq!(a, c);
}

#[test]
fn dapo_always_filters_identical_groups() {
    let p = ParamTable::zeros(Dims::bandit(1, 4));
    let mut r = rng(1);
    let make = |raw: Vec<f64>, r: &mut rand_chacha::ChaCha8Rng| {
        let dith: Vec<f64> = raw.iter().map(|v| v + 0.01 * r.random::<f64>()).collect();
        GroupBatch::new(0, p.sample_group(0, 4, r).unwrap(), raw, dith, RatioLevel::Sequence).unwrap()
    };
    let groups = vec![make(vec![0.0; 4], &mut r), make(vec![2.0, 0.0, 0.0, 0.0], &mut r)];
    let (kept, filtered) = dynamic_sampling_filter(groups);
    assert_eq!((kept.len(), filtered), (1, 1));
    assert!(ClipConfig::dapo().filters_groups());
    assert_eq!(ClipConfig::dapo().eps_high, 0.28);
    assert!(!ClipConfig::default().filters_groups());
}

#[test]
fn training_improves_the_bandit() {
    let env = bandit_env();
    for method in [AdvantageMethod::Grpo, AdvantageMethod::DrGrpo, AdvantageMethod::ReinforcePp, AdvantageMethod::Dapo] {
        let mut cfg = config(method);
        if method == AdvantageMethod::Dapo {
            cfg.clip = ClipConfig { beta: 0.05, ..ClipConfig::dapo() };
        }
        let mut state = TrainState::new(ParamTable::zeros(env.dims()));
        let mut r = RunRng::new(5);
        let before = redit::optimizer::Task::expected_reward(&env, &state.params).unwrap();
        for _ in 0..300 {
            train_step(&mut state, &env, &cfg, &NoiseSpec::gaussian(0.05), &mut r).unwrap();
        }
        let after = redit::optimizer::Task::expected_reward(&env, &state.params).unwrap();
        assert!(after > before + 0.2, "{method:?}: {before} -> {after}");
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

#[test]
fn dr_grpo_preserves_grpo_signs_and_argmax() {
    let mut r = rng(12);
    for _ in 0..1000 {
        let g = r.random_range(2..=8);
        let rewards: Vec<f64> = (0..g).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
        let a = group_advantages(&rewards, AdvantageMethod::Grpo).unwrap();
        let b = group_advantages(&rewards, AdvantageMethod::DrGrpo).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.signum(), y.signum());
        }
        assert_eq!(argmax(&a), argmax(&b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn advantages_are_centred(rewards in prop::collection::vec(-5.0f64..5.0, 2..10)) {
        for method in [AdvantageMethod::Grpo, AdvantageMethod::DrGrpo, AdvantageMethod::Dapo] {
            let a = group_advantages(&rewards, method).unwrap();
            prop_assert!(a.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn batch_normalization_is_centred(groups in prop::collection::vec(prop::collection::vec(0.0f64..2.0, 4), 1..6)) {
        let a = batch_advantages(&groups, AdvantageMethod::ReinforcePp).unwrap();
        let total: f64 = a.iter().flatten().sum();
        prop_assert!(total.abs() < 1e-9);
    }

    #[test]
    fn ascent_step_raises_the_surrogate(seed in 0u64..500) {
        let mut inst = random_instance(seed);
        inst.params = inst.old.clone();
        let (g, rep) = surrogate_gradient(&inst.params, &inst.old, &inst.reference, &inst.groups, &inst.cfg).unwrap();
        prop_assume!(g.norm() > 1e-6);
        let mut next = inst.params.clone();
        next.add_scaled(1e-4 / g.norm(), &g).unwrap();
        let after = redit::optimizer::surrogate_objective(&next, &inst.old, &inst.reference, &inst.groups, &inst.cfg).unwrap();
        prop_assert!(after > rep.objective);
    }

    #[test]
    fn random_tables_have_finite_gradients(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_table(Dims::bandit(2, 5), 20.0, &mut r);
        let g = p.grad_logprob(1, &[3]).unwrap();
        prop_assert!(g.is_finite());
    }
}
