//! Convergence time and final reward across dithering scales.

use redit::diagnostics::{trend_violations, variance_sweep};
use redit::harness::ExperimentConfig;

fn main() -> redit::Result<()> {
    let cfg = ExperimentConfig::preset("sparse-vanilla")?;
    let rows = variance_sweep(&cfg, &[0.0, 0.01, 0.05, 0.1, 0.5], 5, 0.1, 20_000)?;
    println!("{:>6} {:>9} {:>10} {:>10} {:>8}", "m", "sigma", "t_gamma", "final J", "vanish");
    for r in &rows {
        println!(
            "{:>6} {:>9.5} {:>10} {:>10.4} {:>8.4}",
            r.m,
            r.sigma_effective,
            r.median_t_gamma.map_or("never".into(), |t| t.to_string()),
            r.median_final_expected_reward,
            r.median_vanish_fraction
        );
    }
    println!("trend violations up to m = 0.1: {}", trend_violations(&rows[..4]).len());
    Ok(())
}
