//! Run configuration, trial records and the optimization loop.
//!
//! A run embeds the rephrasing instruction and the task's initial prompt once,
//! evaluates `n_init` uniform candidates, then for each iteration refits the
//! GP, picks the EI maximizer among `n_candidates` fresh candidates, decodes
//! `E_I ∘ E_c ∘ E_p0` into a prompt, generates code samples and scores them.
//! The run stops early when a trial's objective reaches 1.
//!
//! Randomness is split by purpose (see [`crate::rng`]): the init batch key
//! and one batch key per iteration are drawn in order from their own streams,
//! and the surrogate fit stream is consumed across iterations.

use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{select_from_sampler, AcquisitionError};
use crate::backends::{BackendError, Generator, PromptInput};
use crate::embedding::{
    concat_embeddings, BlockProjector, CandidateSampler, Embedding, EmbeddingBlock, EmbeddingError,
    ProjectionMode, SearchBox, SearchPoint,
};
use crate::evaluator::{pass_at_1, CodeEvaluation, EvalError, Evaluator, ExecutionStatus};
use crate::gp::{
    fit_detailed, FitOptions, GpDataset, GpError, GpModel, InputScaling, KernelFamily, KernelParams,
    LengthscalePrior,
};
use crate::rng::{self, Purpose, GENERATOR_DESCRIPTION};
use crate::task::TaskFile;
use crate::{COT_SUFFIX, REPHRASE_INSTRUCTION};

pub const SCHEMA_VERSION: u32 = 1;
const FALLBACK_NOISE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Evaluator(#[from] EvalError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("run log has no trials")]
    EmptyLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Sim,
    Remote,
}

/// Where candidate sampling bounds come from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SearchBoxPolicy {
    /// Whatever the backend reports: `[-1, 1]^d` for the simulator,
    /// `mean ± 3·std` of the token-embedding table for the bridge.
    #[default]
    Backend,
    Symmetric { half_width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub n_init: usize,
    pub t_max: usize,
    pub n_candidates: u64,
    pub n_code_samples: usize,
    pub seed: u64,
    pub kernel: KernelFamily,
    pub restarts: usize,
    pub projection: ProjectionMode,
    pub backend: BackendKind,
    pub search_box: SearchBoxPolicy,
    /// Seconds per test case.
    pub timeout_per_case: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            m: 4,
            d: 4096,
            k: 64,
            n_init: 20,
            t_max: 50,
            n_candidates: 10_000,
            n_code_samples: 3,
            seed: 0,
            kernel: KernelFamily::Matern52,
            restarts: 5,
            projection: ProjectionMode::Shared,
            backend: BackendKind::Sim,
            search_box: SearchBoxPolicy::Backend,
            timeout_per_case: 5.0,
        }
    }
}

impl RunConfig {
    /// GP input dimension `m·k`.
    pub fn input_dim(&self) -> usize {
        self.m * self.k
    }

    pub fn max_trials(&self) -> usize {
        self.n_init + self.t_max
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let mut problems = Vec::new();
        let mut at_least = |name: &str, value: u64, min: u64| {
            if value < min {
                problems.push(format!("{name} must be at least {min}, got {value}"));
            }
        };
        at_least("m", self.m as u64, 1);
        at_least("d", self.d as u64, 1);
        at_least("k", self.k as u64, 1);
        at_least("n_init", self.n_init as u64, 2);
        at_least("t_max", self.t_max as u64, 1);
        at_least("n_candidates", self.n_candidates, 1);
        at_least("n_code_samples", self.n_code_samples as u64, 1);
        at_least("restarts", self.restarts as u64, 1);
        if !(self.timeout_per_case.is_finite() && self.timeout_per_case > 0.0) {
            problems.push(format!("timeout_per_case must be positive, got {}", self.timeout_per_case));
        }
        if let SearchBoxPolicy::Symmetric { half_width } = self.search_box {
            if !(half_width.is_finite() && half_width > 0.0) {
                problems.push(format!("search box half width must be positive, got {half_width}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RunError::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Bo,
    Random,
    Initial,
    Cot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Bo,
    Random,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    PerfectAccuracy,
    BudgetExhausted,
    Error,
}

/// Identifies a candidate block: index `index` of the sampler keyed by `key`
/// over the run's search box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRef {
    pub key: u64,
    pub index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialError {
    /// `prompt`, `code` or `evaluation`.
    pub stage: String,
    pub code: String,
    pub message: String,
}

/// Surrogate state behind a BO proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSummary {
    pub dataset_size: usize,
    /// MAP objective of the chosen restart; absent when fitting failed and the
    /// prior-median parameters were used instead.
    pub map_objective: Option<f64>,
    pub chosen_restart: Option<usize>,
    pub jitter: f64,
    pub expected_improvement: f64,
    pub predicted_mean: f64,
    pub predicted_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// `-n_init..=-1` for initial points, `1..=t_max` afterwards, 0 for
    /// prompt baselines.
    pub iteration: i64,
    pub phase: Phase,
    pub candidate: Option<CandidateRef>,
    /// Raw projection of the candidate (before GP input scaling).
    pub search_point: Option<SearchPoint>,
    pub prompt_text: String,
    pub code_samples: Vec<String>,
    pub sample_results: Vec<CodeEvaluation>,
    pub per_sample_accuracy: Vec<f64>,
    pub objective: f64,
    pub pass_at_1: f64,
    pub surrogate: Option<SurrogateSummary>,
    pub error: Option<TrialError>,
    /// Seconds, including surrogate fitting and candidate selection.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub mode: RunMode,
    pub task: String,
    pub config: RunConfig,
    pub projection_seed: u64,
    pub rng: String,
    pub backend: String,
    /// Absent for prompt baselines, which sample nothing.
    pub search_box: Option<SearchBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub header: RunHeader,
    pub trials: Vec<TrialRecord>,
    pub best_index: Option<usize>,
    pub stop_reason: StopReason,
    pub error: Option<String>,
}

/// Index of the highest objective, earliest on ties.
pub fn best_trial_index(trials: &[TrialRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in trials.iter().enumerate() {
        if best.map_or(true, |b| t.objective > trials[b].objective) {
            best = Some(i);
        }
    }
    best
}

/// Prompt and objective of the best trial.
pub fn best_prompt(log: &RunLog) -> Result<(&str, f64), RunError> {
    let i = log.best_index.or_else(|| best_trial_index(&log.trials)).ok_or(RunError::EmptyLog)?;
    let t = log.trials.get(i).ok_or(RunError::EmptyLog)?;
    Ok((&t.prompt_text, t.objective))
}

impl RunLog {
    fn new(header: RunHeader) -> Self {
        Self {
            header,
            trials: Vec::new(),
            best_index: None,
            stop_reason: StopReason::BudgetExhausted,
            error: None,
        }
    }

    fn push(&mut self, trial: TrialRecord) {
        self.trials.push(trial);
        self.best_index = best_trial_index(&self.trials);
    }

    fn fail(&mut self, error: impl ToString) {
        self.stop_reason = StopReason::Error;
        self.error = Some(error.to_string());
    }

    pub fn best(&self) -> Option<&TrialRecord> {
        self.best_index.and_then(|i| self.trials.get(i))
    }

    /// Best objective over the initial points.
    pub fn init_incumbent(&self) -> Option<f64> {
        self.trials
            .iter()
            .filter(|t| t.phase == Phase::Init)
            .map(|t| t.objective)
            .reduce(f64::max)
    }

    /// Best objective over every trial up to and including `iteration`.
    pub fn incumbent_at(&self, iteration: i64) -> Option<f64> {
        self.trials
            .iter()
            .filter(|t| t.iteration <= iteration)
            .map(|t| t.objective)
            .reduce(f64::max)
    }

    /// Running maximum of the objective, one entry per trial.
    pub fn incumbent_curve(&self) -> Vec<(i64, f64)> {
        let mut best = f64::NEG_INFINITY;
        self.trials
            .iter()
            .map(|t| {
                best = best.max(t.objective);
                (t.iteration, best)
            })
            .collect()
    }

    /// The projector used for this run, rebuilt from the header.
    pub fn projector(&self) -> BlockProjector {
        let c = &self.header.config;
        BlockProjector::new(c.projection, self.header.projection_seed, c.m, c.k, c.d)
    }

    /// Regenerates a trial's candidate block from its reference.
    pub fn candidate_block(&self, trial: &TrialRecord) -> Option<EmbeddingBlock> {
        let r = trial.candidate?;
        let search_box = self.header.search_box.clone()?;
        let sampler = CandidateSampler::new(r.key, self.header.config.m, search_box).ok()?;
        Some(sampler.block(r.index))
    }
}

/// What one generate-and-test pass produced.
struct Scored {
    code_samples: Vec<String>,
    sample_results: Vec<CodeEvaluation>,
    per_sample_accuracy: Vec<f64>,
    objective: f64,
    pass_at_1: f64,
    error: Option<TrialError>,
}

impl Scored {
    fn failed(stage: &str, code: &str, message: String) -> Self {
        Self {
            code_samples: Vec::new(),
            sample_results: Vec::new(),
            per_sample_accuracy: Vec::new(),
            objective: 0.0,
            pass_at_1: 0.0,
            error: Some(TrialError {
                stage: stage.into(),
                code: code.into(),
                message,
            }),
        }
    }
}

struct Pipeline<'a> {
    config: &'a RunConfig,
    task: &'a TaskFile,
    backend: &'a dyn Generator,
    evaluator: &'a Evaluator,
}

impl Pipeline<'_> {
    /// Generates code for `prompt` and runs it. Fatal backend errors abort.
    fn score_prompt(&self, prompt: &str) -> Result<Scored, BackendError> {
        let n = self.config.n_code_samples;
        let samples = match self.backend.generate_code(prompt, n) {
            Ok(s) => s,
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => return Ok(Scored::failed("code", e.code(), e.to_string())),
        };
        let results = match self.evaluator.evaluate_samples(&samples, &self.task.tests) {
            Ok(r) => r,
            Err(e) => {
                let mut s = Scored::failed("evaluation", "evaluator", e.to_string());
                s.code_samples = samples;
                return Ok(s);
            }
        };
        let per_sample_accuracy: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
        // Mean of the per-sample accuracies, rounded once.
        let passed_cases: usize = results
            .iter()
            .map(|r| r.cases.iter().filter(|c| c.status == ExecutionStatus::Pass).count())
            .sum();
        let objective = passed_cases as f64 / (n * self.task.tests.len()) as f64;
        let passed = results.iter().filter(|r| r.passed_all()).count();
        Ok(Scored {
            code_samples: samples,
            sample_results: results,
            per_sample_accuracy,
            objective,
            pass_at_1: pass_at_1(n, passed).expect("passed <= n"),
            error: None,
        })
    }

    fn record(
        iteration: i64,
        phase: Phase,
        prompt_text: String,
        scored: Scored,
        started: Instant,
    ) -> TrialRecord {
        TrialRecord {
            iteration,
            phase,
            candidate: None,
            search_point: None,
            prompt_text,
            code_samples: scored.code_samples,
            sample_results: scored.sample_results,
            per_sample_accuracy: scored.per_sample_accuracy,
            objective: scored.objective,
            pass_at_1: scored.pass_at_1,
            surrogate: None,
            error: scored.error,
            wall_time: started.elapsed().as_secs_f64(),
        }
    }

    fn header(&self, mode: RunMode, search_box: Option<SearchBox>) -> RunHeader {
        RunHeader {
            schema_version: SCHEMA_VERSION,
            mode,
            task: self.task.name.clone(),
            config: self.config.clone(),
            projection_seed: self.config.seed,
            rng: GENERATOR_DESCRIPTION.into(),
            backend: self.backend.name().into(),
            search_box,
        }
    }
}

/// Setup shared by BO and random search: embeddings, search box, projector.
struct Session<'a> {
    pipeline: Pipeline<'a>,
    instruction: Vec<Embedding>,
    initial_prompt: Vec<Embedding>,
    search_box: SearchBox,
    projector: BlockProjector,
    scaling: InputScaling,
    dataset: GpDataset,
    log: RunLog,
}

impl<'a> Session<'a> {
    fn open(
        mode: RunMode,
        config: &'a RunConfig,
        task: &'a TaskFile,
        backend: &'a dyn Generator,
        evaluator: &'a Evaluator,
    ) -> Result<Self, RunError> {
        config.validate()?;
        if backend.dim() != config.d {
            return Err(RunError::InvalidConfig(format!(
                "backend embedding width {} does not match d = {}",
                backend.dim(),
                config.d
            )));
        }
        evaluator.check_runtime()?;
        let search_box = match config.search_box {
            SearchBoxPolicy::Backend => backend.search_box()?,
            SearchBoxPolicy::Symmetric { half_width } => SearchBox::symmetric(config.d, half_width)?,
        };
        if search_box.dim() != config.d {
            return Err(EmbeddingError::DimensionMismatch {
                expected: config.d,
                actual: search_box.dim(),
            }
            .into());
        }
        let instruction = backend.embed(REPHRASE_INSTRUCTION)?;
        let initial_prompt = backend.embed(&task.initial_prompt)?;
        let projector = BlockProjector::new(config.projection, config.seed, config.m, config.k, config.d);
        let (mean, std) = projector.uniform_moments(config.m, &search_box)?;
        let scaling = InputScaling::unit_moments(&mean, &std)?;
        let pipeline = Pipeline {
            config,
            task,
            backend,
            evaluator,
        };
        let log = RunLog::new(pipeline.header(mode, Some(search_box.clone())));
        Ok(Self {
            pipeline,
            instruction,
            initial_prompt,
            search_box,
            projector,
            scaling,
            dataset: GpDataset::empty(),
            log,
        })
    }

    fn config(&self) -> &RunConfig {
        self.pipeline.config
    }

    fn sampler(&self, key: u64) -> CandidateSampler {
        CandidateSampler::new(key, self.config().m, self.search_box.clone()).expect("m validated")
    }

    fn stopped(&self) -> bool {
        self.log.stop_reason != StopReason::BudgetExhausted
    }

    /// Decodes, generates and scores one candidate, appends the trial and
    /// grows the dataset. Fatal failures end the run.
    fn evaluate_candidate(
        &mut self,
        iteration: i64,
        phase: Phase,
        candidate: CandidateRef,
        block: &EmbeddingBlock,
        surrogate: Option<SurrogateSummary>,
        started: Instant,
    ) {
        let outcome = self.try_candidate(block);
        let (prompt_text, scored) = match outcome {
            Ok(v) => v,
            Err(e) => return self.log.fail(e),
        };
        let search_point = match self.projector.project_block(block) {
            Ok(z) => z,
            Err(e) => return self.log.fail(e),
        };
        let objective = scored.objective;
        let mut record = Pipeline::record(iteration, phase, prompt_text, scored, started);
        record.candidate = Some(candidate);
        record.search_point = Some(search_point.clone());
        record.surrogate = surrogate;
        self.log.push(record);
        let pushed = self
            .scaling
            .apply(&search_point)
            .and_then(|u| self.dataset.push(u, objective));
        if let Err(e) = pushed {
            return self.log.fail(e);
        }
        if objective >= 1.0 {
            self.log.stop_reason = StopReason::PerfectAccuracy;
        }
    }

    fn try_candidate(&self, block: &EmbeddingBlock) -> Result<(String, Scored), RunError> {
        let combined = concat_embeddings(&self.instruction, block, &self.initial_prompt)?;
        let start = self.instruction.len();
        let input = PromptInput {
            combined: &combined,
            candidate_span: Some(start..start + block.len()),
        };
        let prompt = match self.pipeline.backend.generate_prompt(input) {
            Ok(p) => p,
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => return Ok((String::new(), Scored::failed("prompt", e.code(), e.to_string()))),
        };
        let scored = self.pipeline.score_prompt(&prompt)?;
        Ok((prompt, scored))
    }

    fn initialize(&mut self) {
        let n_init = self.config().n_init;
        let key = rng::purpose_rng(self.config().seed, Purpose::InitialCandidates).next_u64();
        let sampler = self.sampler(key);
        for j in 0..n_init {
            if self.stopped() {
                break;
            }
            let index = j as u64;
            let block = sampler.block(index);
            let iteration = j as i64 - n_init as i64;
            self.evaluate_candidate(iteration, Phase::Init, CandidateRef { key, index }, &block, None, Instant::now());
        }
    }

    /// MAP fit on the current dataset, falling back to the prior median when
    /// every restart fails.
    fn surrogate(&self, rng: &mut impl RngCore) -> Result<(GpModel, Option<f64>, Option<usize>), GpError> {
        let config = self.config();
        let prior = LengthscalePrior::new(config.input_dim());
        let options = FitOptions {
            family: config.kernel,
            restarts: config.restarts,
            ..FitOptions::default()
        };
        match fit_detailed(&self.dataset, &prior, &options, rng) {
            Ok(report) => {
                let model = GpModel::new(report.params, self.dataset.clone())?;
                Ok((model, Some(report.objective), Some(report.chosen_restart)))
            }
            Err(e) => {
                log::warn!("surrogate fit failed ({e}); using prior-median hyperparameters");
                let params = KernelParams::isotropic(config.input_dim(), prior.median(), 1.0, FALLBACK_NOISE, config.kernel)?;
                Ok((GpModel::new(params, self.dataset.clone())?, None, None))
            }
        }
    }

    fn optimize(&mut self) {
        let config = self.config().clone();
        let mut batches = rng::purpose_rng(config.seed, Purpose::CandidateBatches);
        let mut fit_rng = rng::purpose_rng(config.seed, Purpose::SurrogateFit);
        for t in 1..=config.t_max {
            if self.stopped() {
                break;
            }
            let started = Instant::now();
            let key = batches.next_u64();
            let (model, map_objective, chosen_restart) = match self.surrogate(&mut fit_rng) {
                Ok(v) => v,
                Err(e) => return self.log.fail(e),
            };
            let sampler = self.sampler(key);
            let selection =
                match select_from_sampler(&model, &sampler, config.n_candidates, &self.projector, &self.scaling) {
                    Ok(s) => s,
                    Err(e) => return self.log.fail(e),
                };
            log::debug!(
                "iteration {t}: candidate {} with EI {:.3e}",
                selection.index(),
                selection.score.value
            );
            let summary = SurrogateSummary {
                dataset_size: self.dataset.len(),
                map_objective,
                chosen_restart,
                jitter: model.jitter(),
                expected_improvement: selection.score.value,
                predicted_mean: selection.posterior.mean,
                predicted_variance: selection.posterior.variance,
            };
            let candidate = CandidateRef {
                key,
                index: selection.index(),
            };
            self.evaluate_candidate(t as i64, Phase::Bo, candidate, &selection.block, Some(summary), started);
        }
    }

    fn random(&mut self) {
        let config = self.config().clone();
        let mut batches = rng::purpose_rng(config.seed, Purpose::CandidateBatches);
        for t in 1..=config.t_max {
            if self.stopped() {
                break;
            }
            let key = batches.next_u64();
            let block = self.sampler(key).block(0);
            let candidate = CandidateRef { key, index: 0 };
            self.evaluate_candidate(t as i64, Phase::Random, candidate, &block, None, Instant::now());
        }
    }
}

/// Evaluates the `n_init` initial candidates. Returns the GP dataset (inputs
/// in scaled coordinates) and the log so far.
pub fn initialize(
    config: &RunConfig,
    task: &TaskFile,
    backend: &dyn Generator,
    evaluator: &Evaluator,
) -> Result<(GpDataset, RunLog), RunError> {
    let mut session = Session::open(RunMode::Bo, config, task, backend, evaluator)?;
    session.initialize();
    Ok((session.dataset, session.log))
}

/// Full optimization run. Setup failures are returned as errors; failures
/// during the run end it with [`StopReason::Error`] and are kept in the log.
pub fn run(
    config: &RunConfig,
    task: &TaskFile,
    backend: &dyn Generator,
    evaluator: &Evaluator,
) -> Result<RunLog, RunError> {
    let mut session = Session::open(RunMode::Bo, config, task, backend, evaluator)?;
    session.initialize();
    session.optimize();
    Ok(session.log)
}

/// Uniform search with the same budget and the same initial points as
/// [`run`].
pub fn random_search(
    config: &RunConfig,
    task: &TaskFile,
    backend: &dyn Generator,
    evaluator: &Evaluator,
) -> Result<RunLog, RunError> {
    let mut session = Session::open(RunMode::Random, config, task, backend, evaluator)?;
    session.initialize();
    session.random();
    Ok(session.log)
}

/// The prompt a baseline sends to the base model.
pub fn baseline_prompt(mode: RunMode, initial_prompt: &str) -> Option<String> {
    match mode {
        RunMode::Initial => Some(initial_prompt.to_string()),
        RunMode::Cot => Some(format!("{initial_prompt}{COT_SUFFIX}")),
        RunMode::Bo | RunMode::Random => None,
    }
}

/// One trial on the initial prompt, as-is ([`RunMode::Initial`]) or with the
/// chain-of-thought suffix ([`RunMode::Cot`]).
pub fn prompt_baseline(
    mode: RunMode,
    config: &RunConfig,
    task: &TaskFile,
    backend: &dyn Generator,
    evaluator: &Evaluator,
) -> Result<RunLog, RunError> {
    let prompt = baseline_prompt(mode, &task.initial_prompt)
        .ok_or_else(|| RunError::InvalidConfig(format!("{mode:?} is not a prompt baseline")))?;
    config.validate()?;
    evaluator.check_runtime()?;
    let pipeline = Pipeline {
        config,
        task,
        backend,
        evaluator,
    };
    let mut log = RunLog::new(pipeline.header(mode, None));
    let started = Instant::now();
    match pipeline.score_prompt(&prompt) {
        Ok(scored) => {
            let perfect = scored.objective >= 1.0;
            log.push(Pipeline::record(0, Phase::Baseline, prompt, scored, started));
            if perfect {
                log.stop_reason = StopReason::PerfectAccuracy;
            }
        }
        Err(e) => log.fail(e),
    }
    Ok(log)
}
