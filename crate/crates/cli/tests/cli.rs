use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neural_galerkin::experiment::ExperimentConfig;

fn ngs() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ngs"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run_into(config: &Path, out: &Path, workers: usize) -> Output {
    ngs()
        .args(["--workers", &workers.to_string(), "run"])
        .arg(config)
        .env("NGS_OUTPUT_DIR", out)
        .output()
        .expect("spawn ngs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn tiny_run_writes_self_describing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run_into(&data("decay.toml"), &out, 1);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for file in [
        "config.resolved.toml",
        "manifest.toml",
        "metrics.csv",
        "steps_neural_galerkin.csv",
        "trajectory_neural_galerkin.csv",
    ] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("experiment,series,metric,t,value\n"));
    assert!(metrics.contains("custom,neural_galerkin,residual,"));

    let resolved = std::fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    let cfg = ExperimentConfig::from_toml(&resolved).unwrap();
    assert_eq!(cfg.t_end, 0.5);
    assert_eq!(cfg.net.width, 3);

    let again = tmp.path().join("again");
    let o = run_into(&out.join("config.resolved.toml"), &again, 2);
    assert_eq!(o.status.code(), Some(0));
    for file in ["metrics.csv", "acceptance.csv", "steps_neural_galerkin.csv", "trajectory_neural_galerkin.csv"] {
        assert_eq!(std::fs::read(out.join(file)).unwrap(), std::fs::read(again.join(file)).unwrap(), "{file} differs");
    }

    let d = ngs().arg("diff").arg(&out).arg(&again).output().unwrap();
    assert_eq!(d.status.code(), Some(0));
    assert_eq!(stdout(&d).trim(), "series,metric,t,a,b,delta");
}

#[test]
fn inspect_prints_layout_and_norms() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(run_into(&data("decay.toml"), &out, 1).status.code(), Some(0));
    let ckpt = std::fs::read_dir(out.join("checkpoints/neural_galerkin")).unwrap().next().unwrap().unwrap().path();
    let o = ngs().arg("inspect").arg(&ckpt).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("architecture: shallow_gaussian"), "{text}");
    assert!(text.contains("params: 9 (9 active)"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("Node(")).count(), 9);
    assert!(text.contains("total l2:"));
}

#[test]
fn diff_reports_changed_values() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run_into(&data("decay.toml"), &a, 1).status.code(), Some(0));
    let text = std::fs::read_to_string(data("decay.toml")).unwrap().replace("rate = 1.0", "rate = 2.0");
    let cfg = tmp.path().join("faster.toml");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(run_into(&cfg, &b, 1).status.code(), Some(0));
    let o = ngs().arg("diff").arg(&a).arg(&b).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert!(lines.len() > 1);
    assert!(lines.iter().any(|l| l.starts_with("neural_galerkin,rhs_energy,")));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = run_into(&tmp.path().join("absent.toml"), tmp.path(), 1);
    assert_eq!(missing.status.code(), Some(2));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"kdv\"\nnot_a_key = 1\n").unwrap();
    assert_eq!(run_into(&bad, tmp.path(), 1).status.code(), Some(2));

    std::fs::write(&bad, "experiment = \"kdv\"\n[sampling]\nn = 0\n").unwrap();
    let o = run_into(&bad, tmp.path(), 1);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sampling.n"));

    std::fs::write(&bad, "experiment = \"custom\"\n").unwrap();
    assert_eq!(run_into(&bad, tmp.path(), 1).status.code(), Some(2));
}

#[test]
fn diverging_run_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run_into(&data("diverging.toml"), &out, 1);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stopped early"));
    assert!(std::fs::read_to_string(out.join("notes.txt")).unwrap().contains("neural_galerkin"));
}

#[test]
fn failed_threshold_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("strict.toml");
    let text = std::fs::read_to_string(data("decay.toml")).unwrap();
    std::fs::write(&cfg, format!("{text}\n[acceptance]\nresidual_max = 0.0\n")).unwrap();
    let o = run_into(&cfg, &tmp.path().join("run"), 1);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL residual_max"));
}

#[test]
fn property_suite_passes() {
    let o = ngs().args(["run", "--suite", "properties"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().filter(|l| l.starts_with("PASS ")).count() >= 10);
    assert!(text.contains(", 0 failed"));
}

#[test]
fn defaults_round_trip() {
    for name in ["kdv", "allen_cahn", "advection_time", "advection_spacetime", "fp_harmonic", "fp_aharmonic"] {
        let o = ngs().args(["defaults", name]).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.experiment.name(), name);
        assert_eq!(cfg.to_toml().unwrap(), text);
    }
}
