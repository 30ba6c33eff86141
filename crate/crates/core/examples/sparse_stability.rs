//! Gradient health on the sparse exact-match task: vanilla GRPO against
//! dithered rewards over a few seeds.

use redit::harness::{train_run, ExperimentConfig};

fn main() -> redit::Result<()> {
    for preset in ["sparse-vanilla", "sparse-redit"] {
        let cfg = ExperimentConfig::preset(preset)?;
        for seed in 0..3 {
            let s = train_run(&cfg, seed)?.summary;
            println!(
                "{preset:<14} seed {seed}: vanish {:.3} explode {:.3} longest streak {:>4} final J {:.4} t_gamma {:?}",
                s.stability.vanish_fraction,
                s.stability.explode_fraction,
                s.stability.longest_vanish_streak,
                s.final_expected_reward,
                s.convergence.and_then(|c| c.t_gamma)
            );
        }
    }
    Ok(())
}
