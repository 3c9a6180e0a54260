//! Aggregation over run logs.
//!
//! Each log becomes one row (task, mode, seed). Tasks are bucketed by the
//! objective of their `initial` baseline log when one is present.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use bodegen::bo_loop::RunMode;
use bodegen::{RunLog, StopReason};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyBucket {
    Easy,
    Medium,
    Hard,
}

impl DifficultyBucket {
    /// Easy above 0.67, hard below 0.30, medium in between (both ends
    /// inclusive).
    pub fn classify(initial_accuracy: f64) -> Self {
        if initial_accuracy > 0.67 {
            DifficultyBucket::Easy
        } else if initial_accuracy < 0.30 {
            DifficultyBucket::Hard
        } else {
            DifficultyBucket::Medium
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DifficultyBucket::Easy => "easy",
            DifficultyBucket::Medium => "medium",
            DifficultyBucket::Hard => "hard",
        }
    }
}

fn mode_label(mode: RunMode) -> &'static str {
    match mode {
        RunMode::Bo => "bo",
        RunMode::Random => "random",
        RunMode::Initial => "initial",
        RunMode::Cot => "cot",
    }
}

fn stop_label(reason: StopReason) -> &'static str {
    match reason {
        StopReason::PerfectAccuracy => "perfect_accuracy",
        StopReason::BudgetExhausted => "budget_exhausted",
        StopReason::Error => "error",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub task: String,
    pub mode: &'static str,
    pub seed: u64,
    pub bucket: Option<&'static str>,
    pub initial_accuracy: Option<f64>,
    pub best_objective: f64,
    pub best_pass_at_1: f64,
    /// Best objective reached 1.
    pub solved: bool,
    pub trials: usize,
    pub stop_reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketRow {
    pub bucket: &'static str,
    pub mode: &'static str,
    pub runs: usize,
    pub mean_best_objective: f64,
    pub mean_best_pass_at_1: f64,
    pub solved_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub task: String,
    pub mode: &'static str,
    pub seed: u64,
    pub trial: usize,
    pub iteration: i64,
    pub objective: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub runs: Vec<RunRow>,
    pub buckets: Vec<BucketRow>,
    pub curves: Vec<CurvePoint>,
}

/// Builds the report. Rows keep the order of `logs`; bucket rows are sorted
/// by bucket then mode.
pub fn build(logs: &[RunLog]) -> Report {
    let mut initial: BTreeMap<&str, f64> = BTreeMap::new();
    for log in logs.iter().filter(|l| l.header.mode == RunMode::Initial) {
        if let Some(best) = log.best() {
            initial.entry(&log.header.task).or_insert(best.objective);
        }
    }

    let mut runs = Vec::with_capacity(logs.len());
    let mut curves = Vec::new();
    for log in logs {
        let mode = mode_label(log.header.mode);
        let task = log.header.task.clone();
        let seed = log.header.config.seed;
        let init = initial.get(task.as_str()).copied();
        let best = log.best();
        runs.push(RunRow {
            task: task.clone(),
            mode,
            seed,
            bucket: init.map(|a| DifficultyBucket::classify(a).label()),
            initial_accuracy: init,
            best_objective: best.map_or(0.0, |b| b.objective),
            best_pass_at_1: best.map_or(0.0, |b| b.pass_at_1),
            solved: best.is_some_and(|b| b.objective >= 1.0),
            trials: log.trials.len(),
            stop_reason: stop_label(log.stop_reason),
        });
        for (i, ((iteration, incumbent), t)) in log.incumbent_curve().into_iter().zip(&log.trials).enumerate() {
            curves.push(CurvePoint {
                task: task.clone(),
                mode,
                seed,
                trial: i + 1,
                iteration,
                objective: t.objective,
                incumbent,
            });
        }
    }

    let mut groups: BTreeMap<(DifficultyBucket, &'static str), Vec<&RunRow>> = BTreeMap::new();
    for row in &runs {
        if let Some(a) = row.initial_accuracy {
            groups.entry((DifficultyBucket::classify(a), row.mode)).or_default().push(row);
        }
    }
    let buckets = groups
        .into_iter()
        .map(|((bucket, mode), rows)| {
            let n = rows.len() as f64;
            BucketRow {
                bucket: bucket.label(),
                mode,
                runs: rows.len(),
                mean_best_objective: rows.iter().map(|r| r.best_objective).sum::<f64>() / n,
                mean_best_pass_at_1: rows.iter().map(|r| r.best_pass_at_1).sum::<f64>() / n,
                solved_fraction: rows.iter().filter(|r| r.solved).count() as f64 / n,
            }
        })
        .collect();
    Report { runs, buckets, curves }
}

impl Report {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:<8} {:>6} {:<7} {:>8} {:>8} {:>8} {:>7}",
            "task", "mode", "seed", "bucket", "initial", "best", "pass@1", "trials"
        );
        for r in &self.runs {
            let initial = r.initial_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
            let _ = writeln!(
                s,
                "{:<24} {:<8} {:>6} {:<7} {:>8} {:>8.4} {:>8.4} {:>7}",
                r.task,
                r.mode,
                r.seed,
                r.bucket.unwrap_or("-"),
                initial,
                r.best_objective,
                r.best_pass_at_1,
                r.trials
            );
        }
        if !self.buckets.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "{:<7} {:<8} {:>5} {:>10} {:>10} {:>8}",
                "bucket", "mode", "runs", "mean best", "mean p@1", "solved"
            );
            for b in &self.buckets {
                let _ = writeln!(
                    s,
                    "{:<7} {:<8} {:>5} {:>10.4} {:>10.4} {:>8.4}",
                    b.bucket, b.mode, b.runs, b.mean_best_objective, b.mean_best_pass_at_1, b.solved_fraction
                );
            }
        }
        s
    }

    pub fn write_runs_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_rows(&self.runs, out)
    }

    pub fn write_buckets_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_rows(&self.buckets, out)
    }

    pub fn write_curves_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_rows(&self.curves, out)
    }
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
