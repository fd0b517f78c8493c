use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn framemap() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_framemap"));
    cmd.env_remove("FRAMEMAP_OUT_DIR").env_remove("FRAMEMAP_WORKERS");
    cmd
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/corpus")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn successful_run_writes_artifacts_to_the_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = framemap()
        .args([
            "run",
            "--task",
            "put the spoon in the cup",
            "--seed",
            "3",
            "--snapshot-every",
            "20",
            "--render",
        ])
        .env("FRAMEMAP_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["status"]["status"], "success");
    assert_eq!(fs::read(dir.path().join("metrics.json")).unwrap(), out.stdout);
    assert!(dir.path().join("trace.jsonl").exists());
    assert!(dir.path().join("snapshot_0000.png").exists());
}

#[test]
fn task_failure_exits_one() {
    let out = framemap()
        .args(["run", "--task", "look at the lamp", "--budget", "15"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let metrics: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["status"]["status"], "timeout");
    assert_eq!(metrics["success"], false);
}

#[test]
fn missing_scenario_exits_two_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    let out = framemap()
        .args(["run", "--task", "stir the cup", "--scenario"])
        .arg(dir.path().join("absent.scn"))
        .arg("--out-dir")
        .arg(&target)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert_eq!(error_record(&out)["error"]["kind"], "io");
    assert!(out.stdout.is_empty());
    assert!(!target.exists());
}

#[test]
fn bad_parameters_are_configuration_errors() {
    for args in [
        &["run", "--task", "stir the cup", "--particles", "0"][..],
        &["run", "--task", "stir the cup", "--sigma-m=-1"],
        &["run", "--task", "juggle"],
        &["run"],
    ] {
        let out = framemap().args(args).output().unwrap();
        assert_eq!(code(&out), 2, "{args:?}");
        assert!(error_record(&out)["error"]["message"].is_string());
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "task = \"stir the cup\"\nmode = \"fixed\"\nseed = 4\niterations = 3\n",
    )
    .unwrap();
    let out = framemap()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .args(["--seed", "9"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["seed"], 9);
    assert_eq!(metrics["mode"], "fixed");
    assert_eq!(metrics["steps"], 3);
    assert_eq!(metrics["success"], false);
    assert_eq!(metrics["ordering_ok"], true);

    fs::write(&config, "task = \"stir the cup\"\nbogus = 1\n").unwrap();
    let out = framemap()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn validate_reports_each_corpus_file() {
    let mut files: Vec<PathBuf> = ["valid", "invalid"]
        .iter()
        .flat_map(|d| fs::read_dir(corpus().join(d)).unwrap().map(|e| e.unwrap().path()))
        .collect();
    files.sort();
    let out = framemap().arg("validate").args(&files).output().unwrap();
    assert_eq!(code(&out), 2);
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), files.len());
    for (path, line) in files.iter().zip(&lines) {
        let text = fs::read_to_string(path).unwrap();
        match text.lines().next().and_then(|l| l.strip_prefix("# expect: ")) {
            Some(class) => assert_eq!(line["kind"], class, "{}", path.display()),
            None => assert_eq!(line["ok"], true, "{}", path.display()),
        }
    }

    let valid = framemap()
        .arg("validate")
        .arg(corpus().join("valid/frames.lib"))
        .output()
        .unwrap();
    assert_eq!(code(&valid), 0);
}

#[test]
fn render_draws_snapshots_and_rejects_unknown_versions() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let out = framemap()
        .args([
            "run",
            "--task",
            "look at the vase",
            "--seed",
            "2",
            "--snapshot-every",
            "2",
            "--out-dir",
        ])
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let trace = run_dir.join("trace.jsonl");

    let images = dir.path().join("images");
    let out = framemap()
        .arg("render")
        .arg(&trace)
        .arg("--out-dir")
        .arg(&images)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let listed = String::from_utf8(out.stdout).unwrap();
    assert!(listed.lines().count() >= 2);
    for path in listed.lines() {
        assert!(fs::read(path).unwrap().starts_with(b"\x89PNG"));
    }

    let bumped = dir.path().join("bumped.jsonl");
    let text = fs::read_to_string(&trace)
        .unwrap()
        .replacen("\"version\":1", "\"version\":7", 1);
    fs::write(&bumped, text).unwrap();
    let out = framemap()
        .arg("render")
        .arg(&bumped)
        .arg("--out-dir")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert_eq!(error_record(&out)["error"]["kind"], "trace");
    assert!(!dir.path().join("x").exists());
}

#[test]
fn suite_reports_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.toml");
    fs::write(
        &suite,
        "particles = 100\n\n[[group]]\nname = \"look\"\ntasks = [\"look at the vase\"]\ntrials = 3\n\n\
         [[group]]\nname = \"none\"\ntasks = [\"look at the lamp\"]\ntrials = 1\nbudget = 10\n",
    )
    .unwrap();
    let mut reports = Vec::new();
    for workers in ["1", "3"] {
        let out_dir = dir.path().join(format!("w{workers}"));
        let out = framemap()
            .arg("suite")
            .arg(&suite)
            .env("FRAMEMAP_WORKERS", workers)
            .env("FRAMEMAP_OUT_DIR", &out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8(out.stdout).unwrap().contains("look"));
        reports.push(fs::read_to_string(out_dir.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report: Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(report["groups"][1]["timeouts"], 1);
}
