//! Sample-efficient prompt optimization for test-driven code generation.
//!
//! The optimizer searches a continuous space of soft-prompt embeddings with
//! Gaussian-process Bayesian optimization. Each candidate block of embeddings
//! is spliced between a fixed rephrasing instruction and the task's initial
//! prompt, decoded into text by an auxiliary model, handed to a base model
//! for code generation, and scored by running the generated programs against
//! the task's test suite.
//!
//! Module map:
//!
//! - [`embedding`]: search-space types, seeded Gaussian projections and
//!   candidate sampling.
//! - [`gp`]: GP regression with per-dimension lengthscales, a
//!   dimensionality-scaled lengthscale prior and MAP fitting.
//! - [`acquisition`]: Expected Improvement and candidate selection.
//! - [`evaluator`]: sandboxed execution of generated programs, accuracy and
//!   pass@1.
//! - [`backends`]: the generator interface plus the offline simulator and the
//!   HTTP client for the inference bridge.
//! - [`bo_loop`]: run configuration, trial records and the optimization loop.
//! - [`task`]: coding-task files.

pub mod acquisition;
pub mod backends;
pub mod bo_loop;
pub mod embedding;
pub mod evaluator;
pub mod gp;
pub mod rng;
pub mod task;

pub use acquisition::{
    expected_improvement, select_from_sampler, select_next, AcquisitionScore, Selection,
};
pub use backends::{BackendError, Generator, PromptInput, RemoteBackend, Simulator, SimulatorSpec};
pub use bo_loop::{
    best_prompt, initialize, prompt_baseline, random_search, run, RunConfig, RunError, RunLog,
    RunMode, StopReason, TrialRecord,
};
pub use embedding::{
    concat_embeddings, sample_candidates, sample_projection, BlockProjector, CandidateSampler,
    Embedding, EmbeddingBlock, EmbeddingError, ProjectionMatrix, ProjectionMode, SearchBox,
    SearchPoint,
};
pub use evaluator::{pass_at_1, EvalError, Evaluator, ExecutionLimits, TestCase, TestSuite};
pub use gp::{
    fit, posterior, GpDataset, GpError, GpModel, GpPosterior, InputScaling, KernelFamily,
    KernelParams, LengthscalePrior,
};
pub use task::{load_task, TaskError, TaskFile};

/// Instruction prepended (as embeddings) to every candidate block before
/// decoding.
pub const REPHRASE_INSTRUCTION: &str = "Your task is to rephrase/reformulate the code prompt given below to achieve a higher score on code generation by a large language model. Please provide the rephrased prompt in one block.";

/// Suffix appended to the initial prompt by the zero-shot chain-of-thought
/// baseline.
pub const COT_SUFFIX: &str = " Let's think step by step";
