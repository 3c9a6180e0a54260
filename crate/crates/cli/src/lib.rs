//! Command-line front end: `run`, `baseline` and `report`.

pub mod logio;
pub mod report;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Duration;

use bodegen::backends::RemoteOptions;
use bodegen::bo_loop::{BackendKind, SearchBoxPolicy};
use bodegen::{
    best_prompt, load_task, prompt_baseline, random_search, run, BackendError, Evaluator, ExecutionLimits,
    Generator, KernelFamily, ProjectionMode, RemoteBackend, RunConfig, RunError, RunLog, RunMode, Simulator,
    StopReason, TaskError,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

pub use logio::{load_log, read_log, save_log, to_jsonl, write_log, LogError};
pub use report::DifficultyBucket;

pub const ENDPOINT_ENV: &str = "BODEGEN_ENDPOINT";

#[derive(Debug, Parser)]
#[command(name = "bodegen", version, about = "Bayesian optimization of code-generation prompts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize the prompt of one task.
    Run(RunArgs),
    /// Evaluate a baseline on one task.
    Baseline(BaselineArgs),
    /// Summarize run logs.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Sim,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Matern52,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProjectionArg {
    Shared,
    PerSlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMode {
    Initial,
    Cot,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Task file (JSON).
    pub task: PathBuf,
    #[arg(long, value_enum, default_value = "sim")]
    pub backend: BackendArg,
    /// Bridge URL; the BODEGEN_ENDPOINT environment variable takes precedence.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, default_value_t = 4096)]
    pub d: usize,
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub n_init: usize,
    #[arg(long, default_value_t = 50)]
    pub t_max: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n_candidates: u64,
    #[arg(long, default_value_t = 3)]
    pub n_code_samples: usize,
    #[arg(long, value_enum, default_value = "matern52")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value = "shared")]
    pub projection: ProjectionArg,
    /// Sample candidates in `[-w, w]^d` instead of the backend's box.
    #[arg(long, value_name = "W")]
    pub box_half_width: Option<f64>,
    /// Seconds per test case.
    #[arg(long, default_value_t = 5.0)]
    pub timeout_per_case: f64,
    /// Concurrent test cases (defaults to the number of CPUs).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Log path; defaults to `<task>.<mode>.seed<N>.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub mode: BaselineMode,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Also write runs.csv, buckets.csv and curves.csv here.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Output { path: String, message: String },
    /// The run started but ended with an error; its log was written.
    #[error("run stopped: {message} (log: {log})")]
    RunStopped { message: String, log: String },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Task(_) => "invalid_task",
            CliError::Run(RunError::InvalidConfig(_)) => "invalid_config",
            CliError::Run(RunError::Backend(_)) | CliError::Backend(_) => "backend",
            CliError::Run(RunError::Evaluator(_)) => "evaluator",
            CliError::Run(_) => "run",
            CliError::Log(LogError::Corrupt { .. }) => "corrupt_log",
            CliError::Log(LogError::Io { .. }) | CliError::Output { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::RunStopped { .. } => "run_stopped",
        }
    }

    /// Machine-readable record printed on stderr.
    pub fn record(&self) -> String {
        json!({"error": {"code": self.code(), "message": self.to_string()}}).to_string()
    }
}

impl ConfigArgs {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            m: self.m,
            d: self.d,
            k: self.k,
            n_init: self.n_init,
            t_max: self.t_max,
            n_candidates: self.n_candidates,
            n_code_samples: self.n_code_samples,
            seed: self.seed,
            kernel: match self.kernel {
                KernelArg::Matern52 => KernelFamily::Matern52,
                KernelArg::Rbf => KernelFamily::Rbf,
            },
            restarts: self.restarts,
            projection: match self.projection {
                ProjectionArg::Shared => ProjectionMode::Shared,
                ProjectionArg::PerSlot => ProjectionMode::PerSlot,
            },
            backend: match self.backend {
                BackendArg::Sim => BackendKind::Sim,
                BackendArg::Remote => BackendKind::Remote,
            },
            search_box: match self.box_half_width {
                Some(half_width) => SearchBoxPolicy::Symmetric { half_width },
                None => SearchBoxPolicy::Backend,
            },
            timeout_per_case: self.timeout_per_case,
        }
    }

    /// `--endpoint`, overridden by the environment.
    pub fn endpoint(&self, env: Option<String>) -> Option<String> {
        env.filter(|e| !e.is_empty()).or_else(|| self.endpoint.clone())
    }

    fn evaluator(&self, config: &RunConfig) -> Result<Evaluator, CliError> {
        let mut limits = ExecutionLimits {
            wall_time_per_case: Duration::from_secs_f64(config.timeout_per_case),
            ..ExecutionLimits::default()
        };
        if let Some(w) = self.workers {
            limits.workers = w;
        }
        Evaluator::new(limits).map_err(|e| CliError::Run(e.into()))
    }

    fn backend(&self, config: &RunConfig) -> Result<Box<dyn Generator>, CliError> {
        match self.backend {
            BackendArg::Sim => Ok(Box::new(Simulator::seeded(config.seed, config.m, config.d)?)),
            BackendArg::Remote => {
                let endpoint = self
                    .endpoint(std::env::var(ENDPOINT_ENV).ok())
                    .ok_or_else(|| CliError::Usage(format!("remote backend needs --endpoint or {ENDPOINT_ENV}")))?;
                let options = RemoteOptions {
                    dim: config.d,
                    ..RemoteOptions::default()
                };
                Ok(Box::new(RemoteBackend::new(endpoint, options)?))
            }
        }
    }

    fn out_path(&self, task: &str, mode: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let safe: String = task
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            PathBuf::from(format!("{safe}.{mode}.seed{}.jsonl", self.seed))
        })
    }
}

fn execute(args: &ConfigArgs, mode: RunMode) -> Result<(RunLog, PathBuf), CliError> {
    let config = args.run_config();
    config.validate()?;
    let task = load_task(&args.task)?;
    let evaluator = args.evaluator(&config)?;
    let backend = args.backend(&config)?;
    let log = match mode {
        RunMode::Bo => run(&config, &task, backend.as_ref(), &evaluator)?,
        RunMode::Random => random_search(&config, &task, backend.as_ref(), &evaluator)?,
        RunMode::Initial | RunMode::Cot => prompt_baseline(mode, &config, &task, backend.as_ref(), &evaluator)?,
    };
    let label = match mode {
        RunMode::Bo => "bo",
        RunMode::Random => "random",
        RunMode::Initial => "initial",
        RunMode::Cot => "cot",
    };
    let path = args.out_path(&task.name, label);
    save_log(&log, &path)?;
    Ok((log, path))
}

fn summarize(log: &RunLog, path: &Path) -> String {
    let mut s = String::new();
    if let Ok((prompt, objective)) = best_prompt(log) {
        let pass = log.best().map_or(0.0, |b| b.pass_at_1);
        s.push_str(&format!("best objective: {objective:.4}\npass@1: {pass:.4}\n"));
        s.push_str(&format!("best prompt:\n{prompt}\n"));
    }
    s.push_str(&format!(
        "trials: {}\nstop: {:?}\nlog: {}\n",
        log.trials.len(),
        log.stop_reason,
        path.display()
    ));
    s
}

fn finish(log: RunLog, path: PathBuf) -> Result<String, CliError> {
    let text = summarize(&log, &path);
    if log.stop_reason == StopReason::Error {
        return Err(CliError::RunStopped {
            message: log.error.unwrap_or_default(),
            log: path.display().to_string(),
        });
    }
    Ok(text)
}

fn report(args: &ReportArgs) -> Result<String, CliError> {
    let logs = args.logs.iter().map(|p| load_log(p)).collect::<Result<Vec<_>, _>>()?;
    let report = report::build(&logs);
    if let Some(dir) = &args.csv_dir {
        let output = |path: &Path, message: String| CliError::Output {
            path: path.display().to_string(),
            message,
        };
        std::fs::create_dir_all(dir).map_err(|e| output(dir, e.to_string()))?;
        type Writer = fn(&report::Report, File) -> csv::Result<()>;
        let files: [(&str, Writer); 3] = [
            ("runs.csv", |r, f| r.write_runs_csv(f)),
            ("buckets.csv", |r, f| r.write_buckets_csv(f)),
            ("curves.csv", |r, f| r.write_curves_csv(f)),
        ];
        for (name, write) in files {
            let path = dir.join(name);
            let file = File::create(&path).map_err(|e| output(&path, e.to_string()))?;
            write(&report, file).map_err(|e| output(&path, e.to_string()))?;
        }
    }
    Ok(report.table())
}

/// Runs a parsed command and returns what to print on stdout.
pub fn dispatch(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Run(a) => {
            let (log, path) = execute(&a.config, RunMode::Bo)?;
            finish(log, path)
        }
        Command::Baseline(a) => {
            let mode = match a.mode {
                BaselineMode::Initial => RunMode::Initial,
                BaselineMode::Cot => RunMode::Cot,
                BaselineMode::Random => RunMode::Random,
            };
            let (log, path) = execute(&a.config, mode)?;
            finish(log, path)
        }
        Command::Report(a) => report(a),
    }
}
