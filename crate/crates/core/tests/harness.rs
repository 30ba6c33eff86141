use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use redit::harness::{
    compare_runs, emit_plotdata, load_trainlog, run_experiment, ExperimentConfig, Series, PRESETS,
};
use redit::rewards::{NoiseSpec, ScheduleKind};
use redit::Error;

fn short(preset: &str, steps: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(preset).unwrap();
    cfg.steps = steps;
    cfg
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short("sparse-redit", 300);
    run_experiment(&cfg, 2, &tmp.path().join("a")).unwrap();
    run_experiment(&cfg, 2, &tmp.path().join("b")).unwrap();
    let a = files(&tmp.path().join("a"));
    assert_eq!(a, files(&tmp.path().join("b")));
    let names: Vec<_> = a.iter().map(|(n, _)| n.as_str()).collect();
    for want in ["config.json", "params.json", "summary.json", "trainlog.csv", "trainlog.jsonl"] {
        assert!(names.contains(&want), "{names:?}");
    }
}

#[test]
fn zero_width_gaussian_log_equals_vanilla() {
    let tmp = tempfile::tempdir().unwrap();
    let vanilla = short("sparse-vanilla", 400);
    let mut zero = vanilla.clone();
    zero.noise = NoiseSpec::gaussian(0.0);
    run_experiment(&vanilla, 0, &tmp.path().join("v")).unwrap();
    run_experiment(&zero, 0, &tmp.path().join("z")).unwrap();
    for f in ["trainlog.csv", "trainlog.jsonl", "params.json"] {
        assert_eq!(fs::read(tmp.path().join("v").join(f)).unwrap(), fs::read(tmp.path().join("z").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn dithering_lowers_the_vanishing_fraction() {
    let tmp = tempfile::tempdir().unwrap();
    let v = run_experiment(&short("sparse-vanilla", 1500), 0, &tmp.path().join("v")).unwrap();
    let r = run_experiment(&short("sparse-redit", 1500), 0, &tmp.path().join("r")).unwrap();
    assert!(r.stability.vanish_fraction < v.stability.vanish_fraction);
    // early training: the sparse reward starves vanilla GRPO of signal
    assert!(v.stability.vanish_fraction >= 0.3, "{}", v.stability.vanish_fraction);
    assert!(r.stability.vanish_fraction < 0.05, "{}", r.stability.vanish_fraction);
}

#[test]
fn identical_runs_compare_with_zero_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short("sparse-vanilla", 200);
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for d in &dirs {
        run_experiment(&cfg, 1, d).unwrap();
    }
    let cmp = compare_runs(&dirs, None).unwrap();
    for row in &cmp.rows {
        assert_eq!(row.delta_final_expected_reward, 0.0);
        assert_eq!(row.delta_vanish_fraction, 0.0);
        assert_eq!(row.delta_explode_fraction, 0.0);
        assert_eq!(row.delta_mean_grad_norm, 0.0);
    }
    assert_eq!(cmp.aligned.len(), 400);
    assert!(compare_runs(&dirs[..1], None).is_err());
}

#[test]
fn missing_column_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    run_experiment(&short("sparse-vanilla", 20), 0, &dir).unwrap();
    let path = dir.join("trainlog.csv");
    let text = fs::read_to_string(&path).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 2).map(|(_, c)| c).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(&path, stripped).unwrap();
    let err = load_trainlog(&path).unwrap_err();
    assert!(err.to_string().contains("grad_norm"), "{err}");
    let other = tmp.path().join("other");
    run_experiment(&short("sparse-vanilla", 20), 0, &other).unwrap();
    assert!(compare_runs(&[other, dir], None).is_err());
}

#[test]
fn plotdata_series() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cosine = short("sparse-redit-cosine-reverse", 100);
    cosine.noise.schedule.total_steps = 0;
    let dirs = vec![tmp.path().join("v"), tmp.path().join("c")];
    run_experiment(&short("sparse-vanilla", 100), 0, &dirs[0]).unwrap();
    run_experiment(&cosine, 0, &dirs[1]).unwrap();

    let rows = emit_plotdata(&dirs, &[Series::GradNorm]).unwrap();
    assert_eq!(rows.len(), 200);

    let reward = emit_plotdata(&dirs[..1], &[Series::Reward]).unwrap();
    let log = load_trainlog(&dirs[0].join("trainlog.csv")).unwrap();
    for (p, l) in reward.iter().zip(&log) {
        assert_eq!(p.value, l.mean_raw_reward);
    }

    let sched = emit_plotdata(&dirs[1..], &[Series::Schedule]).unwrap();
    let resolved = cosine.resolved_noise();
    assert_eq!(resolved.schedule.kind, ScheduleKind::CosineReverse);
    let base = resolved.effective_sigma(&[1.0], u64::MAX);
    assert_eq!(sched[0].value, 0.0);
    assert!((sched.last().unwrap().value - base).abs() < 1e-12);

    assert!(matches!("bogus".parse::<Series>(), Err(Error::Input(_))));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain");
    fs::write(&file, b"x").unwrap();
    let err = run_experiment(&short("sparse-vanilla", 5), 0, &file.join("sub")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
}

#[test]
fn invalid_config_names_the_field() {
    let mut cfg = short("sparse-vanilla", 5);
    cfg.learning_rate = -1.0;
    let err = cfg.validate().unwrap_err();
    assert!(err.to_string().contains("learning_rate"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(idx in 0..PRESETS.len(), m in 0.0f64..1.0, steps in 1u64..10_000) {
        let mut cfg = ExperimentConfig::preset(PRESETS[idx]).unwrap().with_m(m);
        cfg.steps = steps;
        cfg.noise.schedule.total_steps = cfg.noise.schedule.total_steps.min(steps);
        let json = cfg.to_json_pretty().unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json_pretty().unwrap(), json);
    }
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_redit")).args(args).output().unwrap()
}

#[test]
fn cli_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    fs::write(&cfg_path, short("sparse-vanilla", 50).to_json_pretty().unwrap()).unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = cli(&["run", "--config", cfg, "--seed", "0", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a0, b0) = (a.join("seed-000"), b.join("seed-000"));
    assert_eq!(files(&a0), files(&b0));

    let out = cli(&["compare", a0.to_str().unwrap(), b0.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("delta_final_expected_reward"));

    let out = cli(&["plotdata", a0.to_str().unwrap(), "--series", "grad_norm"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 51);
    let out = cli(&["plotdata", a0.to_str().unwrap(), "--series", "nope"]);
    assert_eq!(out.status.code(), Some(2));

    let out = cli(&["verify", "--props", "2", "--n", "20000", "--out", tmp.path().join("v").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(tmp.path().join("v/reports.csv").exists());
    assert_eq!(cli(&["verify", "--props", "9", "--n", "20000"]).status.code(), Some(2));

    let out = cli(&["sweep", "--config", cfg, "--grid", "m=0,0.05", "--seeds", "5", "--budget", "100", "--out", tmp.path().join("s").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap().lines().count(), 3);
}
