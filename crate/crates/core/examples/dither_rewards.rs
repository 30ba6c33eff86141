//! Rule-based rewards and dithering: per-component noise, the resulting
//! variance increase and the loss of pairwise ordering accuracy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use redit::rewards::{
    flip_probability, pairwise_accuracy, reward_variance, NoiseSpec, RewardRule, TaskContext,
};

fn main() -> redit::Result<()> {
    let rule = RewardRule::multi_component();
    let ctx = TaskContext { vocab: 8, targets: vec![vec![4, 1, 5, 2]] };
    let magnitudes = rule.magnitudes();
    let noise = NoiseSpec::gaussian(0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    for output in [vec![4, 1, 5, 2], vec![4, 1, 5, 3], vec![0, 0, 0, 0]] {
        let clean = rule.evaluate(&ctx, 0, &output);
        let d = noise.dither(&clean, &magnitudes, 0, &mut rng);
        println!(
            "{output:?}: components {:?} raw {:.3} dithered {:.4}",
            clean.raw_components, clean.raw_total, d.dithered_total
        );
    }
    println!("effective sigma = {:.5}", noise.effective_sigma(&magnitudes, 0));

    // Bernoulli(0.5) rewards: dithering adds sigma^2 to the variance.
    let noise = NoiseSpec::gaussian(0.5);
    let sigma = noise.effective_sigma(&[1.0], 0);
    let raw: Vec<f64> = (0..100_000).map(|i| (i % 2) as f64).collect();
    let dithered: Vec<f64> = raw
        .iter()
        .map(|&r| {
            let s = redit::rewards::RewardSample::from_components(vec![r]);
            noise.dither(&s, &[1.0], 0, &mut rng).dithered_total
        })
        .collect();
    println!(
        "Var raw {:.4}, Var dithered {:.4}, sigma^2 {:.4}",
        reward_variance(&raw)?,
        reward_variance(&dithered)?,
        sigma * sigma
    );

    let pairs: Vec<(f64, f64)> = dithered.chunks(2).map(|c| (c[1], c[0])).collect();
    let truth = vec![(1.0, 0.0); pairs.len()];
    println!(
        "pairwise accuracy {:.4} (predicted {:.4})",
        pairwise_accuracy(&pairs, &truth)?,
        1.0 - flip_probability(1.0, sigma)
    );
    Ok(())
}
