//! Group-relative advantages and a handful of clipped-surrogate updates on a
//! single-prompt bandit, with and without dithering.

use redit::harness::{Environment, EnvironmentSpec};
use redit::optimizer::{
    group_advantages, train_step, AdvantageMethod, ClipConfig, Task, TrainConfig, TrainState,
};
use redit::diagnostics::GradClassifierConfig;
use redit::policy::ParamTable;
use redit::rewards::NoiseSpec;
use redit::seed::RunRng;

fn main() -> redit::Result<()> {
    for method in [AdvantageMethod::Grpo, AdvantageMethod::DrGrpo] {
        println!("{method:?} advantages of [2, 0, 0, 0]: {:?}", group_advantages(&[2.0, 0.0, 0.0, 0.0], method)?);
    }
    // All-equal rewards carry no signal until they are dithered.
    println!("GRPO advantages of [1, 1, 1, 1]: {:?}", group_advantages(&[1.0; 4], AdvantageMethod::Grpo)?);

    let env = Environment::build(&EnvironmentSpec::signed_bandit())?;
    let cfg = TrainConfig {
        group_size: 4,
        learning_rate: 0.5,
        clip: ClipConfig { beta: 0.05, ..ClipConfig::default() },
        classifier: GradClassifierConfig::default(),
        track_expected_reward: true,
    };
    for (label, noise) in [("vanilla", NoiseSpec::none()), ("dithered", NoiseSpec::gaussian(0.05))] {
        let mut state = TrainState::new(ParamTable::zeros(env.dims()));
        let mut rng = RunRng::new(3);
        for _ in 0..200 {
            train_step(&mut state, &env, &cfg, &noise, &mut rng)?;
        }
        let last = train_step(&mut state, &env, &cfg, &noise, &mut rng)?.row;
        println!(
            "{label}: J = {:.4}, |g| = {:.4} ({}), clip fraction {:.3}, KL {:.4}",
            env.expected_reward(&state.params)?,
            last.grad_norm,
            last.grad_class,
            last.clip_fraction,
            last.kl
        );
    }
    Ok(())
}
