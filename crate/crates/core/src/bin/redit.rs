//! Command-line front end: train, sweep, verify and summarize runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use redit::diagnostics::{
    trend_violations, variance_sweep, verify_propositions, PropositionReport, SweepRow,
    DEFAULT_M_GRID, MIN_VERIFY_SAMPLES, PROPOSITIONS,
};
use redit::harness::{
    compare_runs, emit_plotdata, run_all_seeds, run_experiment, seed_dir, to_csv, Environment,
    ExperimentConfig, Series,
};
use redit::optimizer::Task;
use redit::{Error, Result};

#[derive(Parser)]
#[command(name = "redit", version, about = "Reward-dithered group-relative policy optimization lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write a run directory per seed.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Run index; seeds are derived from the config's base seed. Runs
        /// every configured seed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure convergence time and final reward across noise scales.
    Sweep {
        #[command(flatten)]
        source: ConfigSource,
        /// `m=a,b,...` (relative width) or `sigma=a,b,...` (absolute std).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Overrides the config's convergence threshold.
        #[arg(long)]
        gamma: Option<f64>,
        /// Overrides the config's step budget.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo checks of the dithering properties; exits 1 on failure.
    Verify {
        #[arg(long, value_delimiter = ',', default_values_t = PROPOSITIONS)]
        props: Vec<u32>,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare run directories against the first one.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        /// Reference step in the first run (default: its last step).
        #[arg(long)]
        at_step: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Long-format series for external plotting.
    Plotdata {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "grad_norm,reward")]
        series: Vec<String>,
        /// Output CSV file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConfigSource {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path),
            (None, Some(name)) => ExperimentConfig::preset(name),
            (None, None) => Err(Error::input("pass --config or --preset")),
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Parses `m=...` or `sigma=...` into relative widths.
fn parse_grid(spec: Option<&str>, cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let Some(spec) = spec else {
        let mut grid = vec![0.0];
        grid.extend(DEFAULT_M_GRID);
        return Ok(grid);
    };
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::input(format!("grid `{spec}` must look like m=... or sigma=...")))?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::input(format!("bad grid value `{v}`")))
        })
        .collect::<Result<_>>()?;
    match key.trim() {
        "m" => Ok(values),
        "sigma" => {
            let env = Environment::with_rule(&cfg.environment, cfg.reward.clone())?;
            Ok(values.iter().map(|&s| cfg.m_for_sigma(env.magnitudes(), s)).collect())
        }
        other => Err(Error::input(format!("unknown grid key `{other}`; expected m or sigma"))),
    }
}

fn print_reports(reports: &[PropositionReport]) {
    for r in reports {
        println!(
            "{} {:<28} statistic={:.6} theoretical={:.6} tolerance={}{} n={} {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.id,
            r.statistic,
            r.theoretical,
            r.tolerance,
            if r.relative { " (relative)" } else { "" },
            r.sample_count,
            r.detail
        );
    }
}

fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run { source, seed, out } => {
            let cfg = source.load()?;
            let root = cfg.resolve_out_dir(out.as_deref());
            let summaries = match seed {
                Some(i) => vec![run_experiment(&cfg, i, &seed_dir(&root, i))?],
                None => run_all_seeds(&cfg, &root)?,
            };
            for s in &summaries {
                info!("run {} finished: J = {:.4}", s.run_index, s.final_expected_reward);
            }
            println!("{}", serde_json::to_string_pretty(&summaries)?);
            Ok(true)
        }
        Command::Sweep { source, grid, seeds, gamma, budget, out } => {
            let cfg = source.load()?;
            let conv = cfg.convergence.unwrap_or_default();
            let grid = parse_grid(grid.as_deref(), &cfg)?;
            let rows: Vec<SweepRow> = variance_sweep(
                &cfg,
                &grid,
                seeds,
                gamma.unwrap_or(conv.gamma),
                budget.unwrap_or(conv.budget),
            )?;
            let csv = to_csv(&rows)?;
            if let Some(dir) = out {
                write(&dir.join("sweep.csv"), &csv)?;
                write(&dir.join("sweep.json"), &serde_json::to_string_pretty(&rows)?)?;
            }
            print!("{csv}");
            for v in trend_violations(&rows) {
                log::warn!(
                    "median t_gamma rose from {} (m = {}) to {} (m = {}) beyond allowance {:.1}",
                    v.median_before,
                    v.m_before,
                    v.median_after,
                    v.m_after,
                    v.allowance
                );
            }
            Ok(true)
        }
        Command::Verify { props, n, seed, out } => {
            if n < MIN_VERIFY_SAMPLES {
                return Err(Error::input(format!("--n must be at least {MIN_VERIFY_SAMPLES}")));
            }
            let reports = verify_propositions(&props, n, seed)?;
            if let Some(dir) = out {
                write(&dir.join("reports.csv"), &to_csv(&reports)?)?;
                write(&dir.join("reports.json"), &serde_json::to_string_pretty(&reports)?)?;
            }
            print_reports(&reports);
            Ok(reports.iter().all(|r| r.pass))
        }
        Command::Compare { dirs, at_step, out } => {
            let cmp = compare_runs(&dirs, at_step)?;
            let summary = to_csv(&cmp.rows)?;
            if let Some(dir) = out {
                write(&dir.join("comparison.csv"), &summary)?;
                write(&dir.join("aligned.csv"), &to_csv(&cmp.aligned)?)?;
            }
            println!(
                "# reference step {} reward {:.6}",
                cmp.reference_step, cmp.reference_reward
            );
            print!("{summary}");
            Ok(true)
        }
        Command::Plotdata { dirs, series, out } => {
            let series: Vec<Series> = series.iter().map(|s| s.parse()).collect::<Result<_>>()?;
            let csv = to_csv(&emit_plotdata(&dirs, &series)?)?;
            match out {
                Some(path) => write(&path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
