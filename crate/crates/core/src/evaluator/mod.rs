//! Runs generated programs against a test suite.
//!
//! Every case gets a fresh temporary directory holding `solution.py` and a
//! small driver. The driver receives the case as one JSON document on stdin
//! and prints `{"ok", "value", "error", "stage"}` as the last line of stdout;
//! `stage` is `compile`, `run` or `check`. An audit hook inside the driver
//! refuses sockets, process creation and file writes outside the case
//! directory.
//!
//! `io_pair` inputs follow one convention: a JSON array is the positional
//! argument list, any other value is passed as the single argument.

mod compare;
mod sandbox;

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use compare::{values_match, FLOAT_TOLERANCE};
pub use sandbox::Runtime;

const DRIVER: &str = include_str!("driver.py");
const DRIVER_FILE: &str = "driver.py";
const SOLUTION_FILE: &str = "solution.py";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("sandbox setup failed: {0}")]
    Setup(String),
    #[error("invalid test suite: {0}")]
    InvalidSuite(String),
    #[error("pass@1 needs 0 <= c <= n and n >= 1, got n = {n}, c = {c}")]
    Range { n: usize, c: usize },
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseCheck {
    IoPair { input: Value, expected: Value },
    Assertion { assertion_source: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    #[serde(flatten)]
    pub check: CaseCheck,
}

impl TestCase {
    pub fn io_pair(id: impl Into<String>, input: Value, expected: Value) -> Self {
        Self {
            id: id.into(),
            check: CaseCheck::IoPair { input, expected },
        }
    }

    pub fn assertion(id: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            check: CaseCheck::Assertion {
                assertion_source: source.into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    entry_point: String,
    cases: Vec<TestCase>,
}

impl TestSuite {
    pub fn new(entry_point: impl Into<String>, cases: Vec<TestCase>) -> Result<Self, EvalError> {
        let entry_point = entry_point.into();
        if entry_point.trim().is_empty() {
            return Err(EvalError::InvalidSuite("entry_point is empty".into()));
        }
        if cases.is_empty() {
            return Err(EvalError::InvalidSuite("no test cases".into()));
        }
        let mut seen = HashSet::new();
        for case in &cases {
            if !seen.insert(case.id.as_str()) {
                return Err(EvalError::InvalidSuite(format!("duplicate case id {:?}", case.id)));
            }
        }
        Ok(Self { entry_point, cases })
    }

    pub fn entry_point(&self) -> &str {
        &self.entry_point
    }

    pub fn cases(&self) -> &[TestCase] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLimits {
    #[serde(with = "secs_f64")]
    pub wall_time_per_case: Duration,
    pub memory_cap: u64,
    /// Cases run concurrently, at most this many at a time.
    pub workers: usize,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            wall_time_per_case: Duration::from_secs(5),
            memory_cap: 512 * 1024 * 1024,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.wall_time_per_case.is_zero() {
            return Err(EvalError::InvalidLimits("wall_time_per_case must be positive".into()));
        }
        if self.memory_cap < 32 * 1024 * 1024 {
            return Err(EvalError::InvalidLimits("memory_cap below 32 MiB cannot start the runtime".into()));
        }
        if self.workers == 0 {
            return Err(EvalError::InvalidLimits("workers must be at least 1".into()));
        }
        Ok(())
    }
}

mod secs_f64 {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Pass,
    Fail,
    Timeout,
    RuntimeError,
    CompileError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    pub status: ExecutionStatus,
    pub stdout: String,
    pub stderr: String,
    pub duration: Duration,
    /// Error text reported by the driver, if any.
    pub error: Option<String>,
}

/// Outcome of one case, without timing, as stored in run logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub id: String,
    pub status: ExecutionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeEvaluation {
    pub accuracy: f64,
    pub cases: Vec<CaseOutcome>,
}

impl CodeEvaluation {
    pub fn passed_all(&self) -> bool {
        self.cases.iter().all(|c| c.status == ExecutionStatus::Pass)
    }
}

#[derive(Debug, Deserialize)]
struct DriverReply {
    ok: bool,
    #[serde(default)]
    stage: Option<String>,
    #[serde(default)]
    value: Value,
    #[serde(default)]
    error: Option<String>,
}

fn classify(case: &TestCase, raw: &sandbox::RawOutcome) -> (ExecutionStatus, Option<String>) {
    if raw.timed_out {
        return (ExecutionStatus::Timeout, None);
    }
    let reply = raw
        .stdout
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| serde_json::from_str::<DriverReply>(l).ok());
    let Some(reply) = reply else {
        let why = match raw.status {
            Some(s) if !s.success() => format!("process ended with {s}"),
            _ => "no result from driver".to_string(),
        };
        return (ExecutionStatus::RuntimeError, Some(why));
    };
    if !raw.status.is_some_and(|s| s.success()) {
        return (ExecutionStatus::RuntimeError, reply.error.or(Some("abnormal exit".into())));
    }
    match (reply.ok, reply.stage.as_deref()) {
        (false, Some("compile")) => (ExecutionStatus::CompileError, reply.error),
        (false, Some("check")) => (ExecutionStatus::Fail, reply.error),
        (false, _) => (ExecutionStatus::RuntimeError, reply.error),
        (true, _) => match &case.check {
            CaseCheck::Assertion { .. } => (ExecutionStatus::Pass, None),
            CaseCheck::IoPair { expected, .. } => {
                if values_match(&reply.value, expected) {
                    (ExecutionStatus::Pass, None)
                } else {
                    (ExecutionStatus::Fail, Some(format!("expected {expected}, got {}", reply.value)))
                }
            }
        },
    }
}

/// Sandboxed program runner.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    runtime: Runtime,
    limits: ExecutionLimits,
}

impl Evaluator {
    pub fn new(limits: ExecutionLimits) -> Result<Self, EvalError> {
        Self::with_runtime(Runtime::default(), limits)
    }

    pub fn with_runtime(runtime: Runtime, limits: ExecutionLimits) -> Result<Self, EvalError> {
        limits.validate()?;
        Ok(Self { runtime, limits })
    }

    pub fn limits(&self) -> &ExecutionLimits {
        &self.limits
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    /// Runs `program` on one case in a fresh process and directory.
    pub fn sandbox_run(&self, program: &str, entry_point: &str, case: &TestCase) -> Result<ExecutionResult, EvalError> {
        let dir = tempfile::Builder::new()
            .prefix("bodegen-case-")
            .tempdir()
            .map_err(|e| EvalError::Setup(format!("cannot create sandbox directory: {e}")))?;
        self.run_in(dir.path(), program, entry_point, case)
    }

    fn run_in(&self, dir: &Path, program: &str, entry_point: &str, case: &TestCase) -> Result<ExecutionResult, EvalError> {
        let write = |name: &str, text: &str| {
            std::fs::write(dir.join(name), text).map_err(|e| EvalError::Setup(format!("cannot write {name}: {e}")))
        };
        write(SOLUTION_FILE, program)?;
        let driver = dir.join(DRIVER_FILE);
        write(DRIVER_FILE, DRIVER)?;

        let mut payload = match &case.check {
            CaseCheck::IoPair { input, .. } => serde_json::json!({ "kind": "io_pair", "input": input }),
            CaseCheck::Assertion { assertion_source } => {
                serde_json::json!({ "kind": "assertion", "assertion_source": assertion_source })
            }
        };
        payload["entry_point"] = Value::String(entry_point.to_string());
        let input = serde_json::to_vec(&payload).expect("JSON values serialize");

        let raw = sandbox::run(&self.runtime, dir, &driver, &input, &self.limits)?;
        let (status, error) = classify(case, &raw);
        Ok(ExecutionResult {
            status,
            stdout: raw.stdout,
            stderr: raw.stderr,
            duration: raw.duration,
            error,
        })
    }

    /// Runs every case, up to `workers` at a time, keeping suite order.
    pub fn evaluate_detailed(&self, program: &str, suite: &TestSuite) -> Result<CodeEvaluation, EvalError> {
        let n = suite.len();
        let results: Vec<Mutex<Option<Result<ExecutionResult, EvalError>>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.limits.workers.min(n).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = self.sandbox_run(program, suite.entry_point(), &suite.cases()[i]);
                    *results[i].lock().expect("result slot") = Some(r);
                });
            }
        });
        let mut cases = Vec::with_capacity(n);
        for (case, slot) in suite.cases().iter().zip(results) {
            let r = slot.into_inner().expect("result slot").expect("every case ran")?;
            cases.push(CaseOutcome {
                id: case.id.clone(),
                status: r.status,
                error: r.error,
            });
        }
        let passed = cases.iter().filter(|c| c.status == ExecutionStatus::Pass).count();
        Ok(CodeEvaluation {
            accuracy: passed as f64 / n as f64,
            cases,
        })
    }

    /// Fraction of suite cases that pass.
    pub fn evaluate_code(&self, program: &str, suite: &TestSuite) -> Result<f64, EvalError> {
        self.evaluate_detailed(program, suite).map(|e| e.accuracy)
    }

    /// Evaluates several samples, running each distinct program text once.
    pub fn evaluate_samples(&self, programs: &[String], suite: &TestSuite) -> Result<Vec<CodeEvaluation>, EvalError> {
        let mut seen: HashMap<&str, CodeEvaluation> = HashMap::new();
        let mut out = Vec::with_capacity(programs.len());
        for p in programs {
            if let Some(e) = seen.get(p.as_str()) {
                out.push(e.clone());
                continue;
            }
            let e = self.evaluate_detailed(p, suite)?;
            seen.insert(p, e.clone());
            out.push(e);
        }
        Ok(out)
    }

    /// Fails with [`EvalError::Setup`] if the runtime cannot be started.
    pub fn check_runtime(&self) -> Result<(), EvalError> {
        let suite = TestSuite::new("f", vec![TestCase::io_pair("probe", Value::from(1), Value::from(1))])?;
        let r = self.sandbox_run("def f(x):\n    return x\n", suite.entry_point(), &suite.cases()[0])?;
        if r.status != ExecutionStatus::Pass {
            return Err(EvalError::Setup(format!(
                "runtime probe ended with {:?}: {}",
                r.status,
                r.error.unwrap_or(r.stderr)
            )));
        }
        Ok(())
    }
}

/// `1 - C(n-c, 1)/C(n, 1) = c/n`, the per-task pass@1 estimate from `n`
/// samples of which `c` pass every case.
pub fn pass_at_1(n: usize, c: usize) -> Result<f64, EvalError> {
    if n == 0 || c > n {
        return Err(EvalError::Range { n, c });
    }
    Ok(c as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn binomial(n: u64, k: u64) -> u64 {
        if k > n {
            return 0;
        }
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn pass_at_1_small_values() {
        assert_eq!(pass_at_1(3, 3).unwrap(), 1.0);
        assert_eq!(pass_at_1(3, 0).unwrap(), 0.0);
        assert_eq!(pass_at_1(3, 1).unwrap(), 1.0 / 3.0);
        assert_eq!(pass_at_1(3, 2).unwrap(), 2.0 / 3.0);
        assert!(matches!(pass_at_1(3, 4), Err(EvalError::Range { n: 3, c: 4 })));
        assert!(pass_at_1(0, 0).is_err());
    }

    #[test]
    fn pass_at_1_agrees_with_binomial_form() {
        for n in 1..=10u64 {
            for c in 0..=n {
                let binom = 1.0 - binomial(n - c, 1) as f64 / binomial(n, 1) as f64;
                let v = pass_at_1(n as usize, c as usize).unwrap();
                assert_eq!(v, c as f64 / n as f64);
                assert!((v - binom).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn suite_rejects_duplicates_and_empties() {
        let a = TestCase::io_pair("a", json!(1), json!(1));
        assert!(TestSuite::new("f", vec![a.clone(), a.clone()]).is_err());
        assert!(TestSuite::new("f", vec![]).is_err());
        assert!(TestSuite::new(" ", vec![a]).is_err());
    }

    #[test]
    fn case_serde_shape() {
        let c: TestCase = serde_json::from_value(json!({"id": "t", "kind": "io_pair", "input": [2], "expected": 4})).unwrap();
        assert_eq!(c, TestCase::io_pair("t", json!([2]), json!(4)));
        let a: TestCase =
            serde_json::from_value(json!({"id": "u", "kind": "assertion", "assertion_source": "assert f(1) == 1"})).unwrap();
        assert_eq!(a, TestCase::assertion("u", "assert f(1) == 1"));
        assert!(serde_json::from_value::<TestCase>(json!({"id": "v", "kind": "io_pair", "input": 1})).is_err());
    }

    #[test]
    fn limits_validation() {
        assert!(ExecutionLimits::default().validate().is_ok());
        let zero = ExecutionLimits {
            wall_time_per_case: Duration::ZERO,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
    }
}
