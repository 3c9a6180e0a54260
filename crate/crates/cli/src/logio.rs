//! JSONL run logs.
//!
//! Line 1 is the header, then one trial per line, then a summary line with
//! the best index and stop reason. Every line carries a `record` tag.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use bodegen::bo_loop::RunHeader;
use bodegen::{RunLog, StopReason, TrialRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Summary {
    best_index: Option<usize>,
    stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(RunHeader),
    Trial(TrialRecord),
    Summary(Summary),
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LineRef<'a> {
    Header(&'a RunHeader),
    Trial(&'a TrialRecord),
    Summary(Summary),
}

pub fn write_log<W: Write>(log: &RunLog, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    let mut emit = |line: LineRef<'_>| -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")
    };
    emit(LineRef::Header(&log.header))?;
    for t in &log.trials {
        emit(LineRef::Trial(t))?;
    }
    emit(LineRef::Summary(Summary {
        best_index: log.best_index,
        stop_reason: log.stop_reason,
        error: log.error.clone(),
    }))?;
    out.flush()
}

pub fn to_jsonl(log: &RunLog) -> String {
    let mut buf = Vec::new();
    write_log(log, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn save_log(log: &RunLog, path: &Path) -> Result<(), LogError> {
    let io = |source| LogError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    write_log(log, File::create(path).map_err(io)?).map_err(io)
}

/// Parses a log, naming the first offending line on failure.
pub fn read_log<R: BufRead>(input: R, path: &str) -> Result<RunLog, LogError> {
    let corrupt = |line: usize, message: String| LogError::Corrupt {
        path: path.to_string(),
        line,
        message,
    };
    let mut header = None;
    let mut trials = Vec::new();
    let mut summary = None;
    let mut last = 0;
    for (i, text) in input.lines().enumerate() {
        let n = i + 1;
        last = n;
        let text = text.map_err(|e| corrupt(n, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(corrupt(n, "content after the summary line".into()));
        }
        let line: Line = serde_json::from_str(&text).map_err(|e| corrupt(n, e.to_string()))?;
        match (line, &header) {
            (Line::Header(h), None) => header = Some(h),
            (_, None) => return Err(corrupt(n, "expected the header first".into())),
            (Line::Header(_), Some(_)) => return Err(corrupt(n, "second header".into())),
            (Line::Trial(t), Some(_)) => trials.push(t),
            (Line::Summary(s), Some(_)) => {
                if s.best_index.is_some_and(|b| b >= trials.len()) {
                    return Err(corrupt(n, "best_index out of range".into()));
                }
                summary = Some(s);
            }
        }
    }
    let header = header.ok_or_else(|| corrupt(1, "empty log".into()))?;
    let summary = summary.ok_or_else(|| corrupt(last + 1, "missing summary line (truncated log?)".into()))?;
    Ok(RunLog {
        header,
        trials,
        best_index: summary.best_index,
        stop_reason: summary.stop_reason,
        error: summary.error,
    })
}

pub fn load_log(path: &Path) -> Result<RunLog, LogError> {
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_log(BufReader::new(file), &path.display().to_string())
}

/// The log with every `wall_time` field zeroed, for run-to-run comparison.
pub fn without_timing(log: &RunLog) -> RunLog {
    let mut log = log.clone();
    for t in &mut log.trials {
        t.wall_time = 0.0;
    }
    log
}
