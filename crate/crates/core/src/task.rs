//! Coding-task files.
//!
//! A task is one JSON document:
//!
//! ```json
//! {
//!   "name": "square",
//!   "initial_prompt": "def square(i):\n    \"\"\"Return i squared.\"\"\"\n",
//!   "entry_point": "square",
//!   "tests": [{"id": "t1", "kind": "io_pair", "input": [3], "expected": 9}],
//!   "source": "optional provenance note"
//! }
//! ```
//!
//! `prompt` and `task_id` are accepted as aliases of `initial_prompt` and
//! `name`, so HumanEval-style records convert by adding a `tests` array.
//! Unknown fields are ignored.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{TestCase, TestSuite};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("invalid task: {}", Problems(.0))]
    Invalid(Vec<String>),
}

struct Problems<'a>(&'a [String]);

impl fmt::Display for Problems<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskFile {
    pub name: String,
    pub initial_prompt: String,
    pub entry_point: String,
    pub tests: TestSuite,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Deserialize)]
struct RawTask {
    #[serde(alias = "task_id")]
    name: Option<String>,
    #[serde(alias = "prompt")]
    initial_prompt: Option<String>,
    entry_point: Option<String>,
    tests: Option<Vec<TestCase>>,
    source: Option<String>,
}

impl TaskFile {
    /// Checks every invariant and reports all violations at once.
    pub fn new(
        name: impl Into<String>,
        initial_prompt: impl Into<String>,
        entry_point: impl Into<String>,
        tests: Vec<TestCase>,
        source: Option<String>,
    ) -> Result<Self, TaskError> {
        Self::validate(RawTask {
            name: Some(name.into()),
            initial_prompt: Some(initial_prompt.into()),
            entry_point: Some(entry_point.into()),
            tests: Some(tests),
            source,
        })
    }

    fn validate(raw: RawTask) -> Result<Self, TaskError> {
        let mut problems = Vec::new();
        let mut required = |field: &str, value: &Option<String>| match value {
            None => problems.push(format!("missing field `{field}`")),
            Some(v) if v.trim().is_empty() => problems.push(format!("field `{field}` is empty")),
            Some(_) => {}
        };
        required("name", &raw.name);
        required("initial_prompt", &raw.initial_prompt);
        required("entry_point", &raw.entry_point);
        match &raw.tests {
            None => problems.push("missing field `tests`".into()),
            Some(t) if t.is_empty() => problems.push("field `tests` has no cases".into()),
            Some(t) => {
                let mut seen = HashSet::new();
                for (i, case) in t.iter().enumerate() {
                    if !seen.insert(case.id.as_str()) {
                        problems.push(format!("tests[{i}]: duplicate id {:?}", case.id));
                    }
                }
            }
        }
        if !problems.is_empty() {
            return Err(TaskError::Invalid(problems));
        }
        let entry_point = raw.entry_point.expect("checked");
        let tests = TestSuite::new(entry_point.clone(), raw.tests.expect("checked"))
            .map_err(|e| TaskError::Invalid(vec![e.to_string()]))?;
        Ok(Self {
            name: raw.name.expect("checked"),
            initial_prompt: raw.initial_prompt.expect("checked"),
            entry_point,
            tests,
            source: raw.source,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawTask = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            TaskError::Parse {
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })?;
        Self::validate(raw)
    }
}

pub fn load_task(path: impl AsRef<Path>) -> Result<TaskFile, TaskError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TaskError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    TaskFile::from_json(&text)
}
