use std::io::Cursor;
use std::path::PathBuf;
use std::process::Command as Process;

use bodegen::{load_task, run, Evaluator, ExecutionLimits, RunConfig, RunLog, Simulator};
use bodegen_cli::logio::without_timing;
use bodegen_cli::report::build;
use bodegen_cli::{read_log, to_jsonl, Cli, Command, DifficultyBucket, LogError};
use clap::Parser;
use proptest::prelude::*;

fn square_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../tasks/square.json")
}

fn small_run() -> RunLog {
    let config = RunConfig {
        m: 2,
        d: 24,
        k: 3,
        n_init: 3,
        t_max: 2,
        n_candidates: 100,
        restarts: 2,
        ..RunConfig::default()
    };
    let sim = Simulator::seeded(0, 2, 24).unwrap();
    let evaluator = Evaluator::new(ExecutionLimits::default()).unwrap();
    run(&config, &load_task(square_path()).unwrap(), &sim, &evaluator).unwrap()
}

const SMALL_ARGS: [&str; 14] = [
    "--m", "2", "--d", "24", "--k", "3", "--n-init", "3", "--t-max", "2", "--n-candidates", "100", "--restarts", "2",
];

#[test]
fn logs_round_trip() {
    let log = small_run();
    let text = to_jsonl(&log);
    assert_eq!(text.lines().count(), log.trials.len() + 2);
    let back = read_log(Cursor::new(&text), "mem").unwrap();
    assert_eq!(back, log);
    assert_eq!(to_jsonl(&back), text);
    assert_eq!(to_jsonl(&without_timing(&back)), to_jsonl(&without_timing(&log)));
}

#[test]
fn corrupt_lines_are_located() {
    let text = to_jsonl(&small_run());
    let mut lines: Vec<&str> = text.lines().collect();

    let mut broken = lines.clone();
    broken[2] = "{\"record\": \"trial\", \"oops\": 1}";
    match read_log(Cursor::new(broken.join("\n")), "x.jsonl") {
        Err(LogError::Corrupt { line, path, .. }) => assert_eq!((line, path.as_str()), (3, "x.jsonl")),
        other => panic!("{other:?}"),
    }

    let summary = lines.pop().unwrap();
    let err = read_log(Cursor::new(lines.join("\n")), "t").unwrap_err();
    assert!(err.to_string().contains("missing summary"), "{err}");

    let mut reordered = vec![lines[1], lines[0]];
    reordered.push(summary);
    assert!(matches!(read_log(Cursor::new(reordered.join("\n")), "t"), Err(LogError::Corrupt { line: 1, .. })));

    let mut trailing = text.clone();
    trailing.push_str(lines[1]);
    let n = text.lines().count() + 1;
    assert!(matches!(read_log(Cursor::new(trailing), "t"), Err(LogError::Corrupt { line, .. }) if line == n));
}

#[test]
fn report_of_one_log_restates_it() {
    let log = small_run();
    let report = build(std::slice::from_ref(&log));
    assert_eq!(report.runs.len(), 1);
    let row = &report.runs[0];
    assert_eq!(row.task, "square");
    assert_eq!(row.mode, "bo");
    assert_eq!(row.best_objective, log.best().unwrap().objective);
    assert_eq!(row.trials, log.trials.len());
    assert_eq!(row.bucket, None);
    assert!(report.buckets.is_empty());
    assert_eq!(report.curves.len(), log.trials.len());
    assert_eq!(report.curves.last().unwrap().incumbent, row.best_objective);

    let mut csv = Vec::new();
    report.write_runs_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("task,mode,seed,bucket,initial_accuracy,best_objective"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn environment_endpoint_wins() {
    let cli = Cli::try_parse_from(["bodegen", "run", "t.json", "--backend", "remote", "--endpoint", "http://flag"]).unwrap();
    let Command::Run(args) = cli.command else { panic!() };
    assert_eq!(args.config.endpoint(Some("http://env".into())).as_deref(), Some("http://env"));
    assert_eq!(args.config.endpoint(Some(String::new())).as_deref(), Some("http://flag"));
    assert_eq!(args.config.endpoint(None).as_deref(), Some("http://flag"));
}

#[test]
fn defaults_match_the_library() {
    let cli = Cli::try_parse_from(["bodegen", "baseline", "--mode", "cot", "t.json"]).unwrap();
    let Command::Baseline(args) = cli.command else { panic!() };
    assert_eq!(args.config.run_config(), RunConfig::default());
}

#[test]
fn invalid_task_exits_with_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let task = dir.path().join("bad.json");
    std::fs::write(&task, r#"{"name": "bad", "initial_prompt": "", "tests": []}"#).unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_bodegen")).arg("run").arg(&task).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(record["error"]["code"], "invalid_task");
    let message = record["error"]["message"].as_str().unwrap();
    assert!(message.contains("initial_prompt") && message.contains("entry_point"), "{message}");

    let out = Process::new(env!("CARGO_BIN_EXE_bodegen"))
        .args(["run", "missing.json", "--t-max", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid_config"));
}

#[test]
fn run_then_report_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("logs/square.jsonl");
    let out = Process::new(env!("CARGO_BIN_EXE_bodegen"))
        .arg("run")
        .arg(square_path())
        .args(SMALL_ARGS)
        .arg("--out")
        .arg(&log)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("best objective:"));

    let csv_dir = dir.path().join("csv");
    let out = Process::new(env!("CARGO_BIN_EXE_bodegen"))
        .arg("report")
        .arg(&log)
        .arg("--csv-dir")
        .arg(&csv_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("square"));
    for name in ["runs.csv", "buckets.csv", "curves.csv"] {
        assert!(csv_dir.join(name).exists(), "{name}");
    }
}

proptest! {
    #[test]
    fn buckets_partition_the_unit_interval(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        // Higher initial accuracy never lands in a harder bucket.
        prop_assert!(DifficultyBucket::classify(hi) <= DifficultyBucket::classify(lo));
        let bucket = DifficultyBucket::classify(a);
        let expected = if a > 0.67 {
            DifficultyBucket::Easy
        } else if a < 0.30 {
            DifficultyBucket::Hard
        } else {
            DifficultyBucket::Medium
        };
        prop_assert_eq!(bucket, expected);
    }
}
