//! Writes two run directories, compares them and emits plot data.

use redit::harness::{compare_runs, emit_plotdata, run_experiment, to_csv, ExperimentConfig, Series};

fn main() -> redit::Result<()> {
    let root = std::env::temp_dir().join("redit-compare-example");
    let mut dirs = Vec::new();
    for preset in ["sparse-vanilla", "sparse-redit"] {
        let dir = root.join(preset);
        run_experiment(&ExperimentConfig::preset(preset)?, 0, &dir)?;
        dirs.push(dir);
    }
    let cmp = compare_runs(&dirs, None)?;
    println!("reference reward {:.4} at step {}", cmp.reference_reward, cmp.reference_step);
    for r in &cmp.rows {
        println!(
            "{}: final J {:.4} (delta {:+.4}), vanish {:.3}, reaches reference at {:?}",
            r.run_id, r.final_expected_reward, r.delta_final_expected_reward, r.vanish_fraction, r.steps_to_reach_reference
        );
    }
    let plot = emit_plotdata(&dirs, &[Series::GradNorm, Series::ExpectedReward])?;
    let csv = to_csv(&plot)?;
    println!("{} plot rows; first lines:", plot.len());
    for line in csv.lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}
