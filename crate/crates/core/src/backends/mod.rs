//! Generation backends.
//!
//! The loop talks to a [`Generator`]: something that embeds text, decodes an
//! embedding sequence into a prompt and turns a prompt into program samples.
//! [`Simulator`] is a deterministic offline stand-in with a hidden optimum;
//! [`RemoteBackend`] speaks JSON over HTTP to an inference bridge.

mod remote;
mod simulator;

use std::ops::Range;

use thiserror::Error;

use crate::embedding::{Embedding, EmbeddingError, SearchBox};

pub use remote::{RemoteBackend, RemoteOptions};
pub use simulator::{
    sim_generate_code, sim_objective, simulator_suite, Simulator, SimulatorSpec, SIM_ENTRY_POINT,
    SIM_SUITE_SIZE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// The endpoint could not be reached, after all retries.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    /// An error the backend reported itself, passed through unchanged.
    #[error("backend error {code} (status {status}): {message}")]
    Reported { status: u16, code: String, message: String },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

impl BackendError {
    /// Failures that retrying later will not fix within a run.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }

    pub fn code(&self) -> &str {
        match self {
            BackendError::Transport { .. } => "transport",
            BackendError::Reported { code, .. } => code,
            BackendError::ProtocolViolation(_) => "protocol_violation",
            BackendError::InvalidRequest(_) => "invalid_request",
            BackendError::Embedding(_) => "embedding",
        }
    }
}

/// Input to prompt decoding: the full `E_I ∘ E_c ∘ E_p0` sequence plus, when
/// present, the positions of the candidate slots within it.
#[derive(Debug, Clone)]
pub struct PromptInput<'a> {
    pub combined: &'a [Embedding],
    pub candidate_span: Option<Range<usize>>,
}

pub trait Generator: Send + Sync {
    /// Short identifier recorded in run logs.
    fn name(&self) -> &str;

    /// Embedding width `d`.
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<Embedding>, BackendError>;

    /// Decodes an embedding sequence into prompt text; deterministic for a
    /// fixed backend state.
    fn generate_prompt(&self, input: PromptInput<'_>) -> Result<String, BackendError>;

    fn generate_code(&self, prompt: &str, n: usize) -> Result<Vec<String>, BackendError>;

    /// Candidate sampling bounds in embedding space.
    fn search_box(&self) -> Result<SearchBox, BackendError>;
}
