use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use serde_json::json;

use super::{BackendError, Generator, PromptInput};
use crate::embedding::{Embedding, EmbeddingBlock, EmbeddingError, SearchBox};
use crate::evaluator::{TestCase, TestSuite};
use crate::rng::{self, Purpose};

pub const SIM_ENTRY_POINT: &str = "square";
pub const SIM_SUITE_SIZE: usize = 20;
const PROMPT_COORDS: usize = 8;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Hidden optimum and scoring width of the synthetic objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorSpec {
    pub target: EmbeddingBlock,
    pub bandwidth: f64,
    pub suite_size: usize,
}

impl SimulatorSpec {
    pub fn new(target: EmbeddingBlock, bandwidth: f64, suite_size: usize) -> Result<Self, BackendError> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(BackendError::InvalidRequest(format!("bandwidth {bandwidth} is not positive")));
        }
        if suite_size == 0 {
            return Err(BackendError::InvalidRequest("suite size must be positive".into()));
        }
        Ok(Self {
            target,
            bandwidth,
            suite_size,
        })
    }

    /// `0.5·√(m·d)·w` where `w` is the box's mean half-width.
    pub fn default_bandwidth(m: usize, search_box: &SearchBox) -> f64 {
        0.5 * ((m * search_box.dim()) as f64).sqrt() * search_box.mean_half_width()
    }

    /// Target drawn uniformly in the box from the seed's simulator stream,
    /// default bandwidth and suite size.
    pub fn sample(seed: u64, m: usize, search_box: &SearchBox) -> Self {
        let mut rng = rng::purpose_rng(seed, Purpose::SimulatorTarget);
        let slots = (0..m).map(|_| search_box.sample_embedding(&mut rng)).collect();
        Self {
            target: EmbeddingBlock::new(slots).expect("m >= 1 slots of equal width"),
            bandwidth: Self::default_bandwidth(m, search_box),
            suite_size: SIM_SUITE_SIZE,
        }
    }
}

fn check_shape(block: &EmbeddingBlock, spec: &SimulatorSpec) -> Result<(), EmbeddingError> {
    if block.len() != spec.target.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: spec.target.len(),
            actual: block.len(),
        });
    }
    if block.dim() != spec.target.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: spec.target.dim(),
            actual: block.dim(),
        });
    }
    Ok(())
}

/// `exp(-‖block - target‖² / (2τ²))` over all `m·d` coordinates.
pub fn sim_objective(block: &EmbeddingBlock, spec: &SimulatorSpec) -> Result<f64, EmbeddingError> {
    check_shape(block, spec)?;
    let sq: f64 = block.coords().zip(spec.target.coords()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-sq / (2.0 * spec.bandwidth * spec.bandwidth)).exp())
}

fn program_for(correct: usize) -> String {
    format!("def {SIM_ENTRY_POINT}(i):\n    return i * i + (1 if i > {correct} else 0)\n")
}

/// A program that computes `i²` correctly for `i = 1..=c` and wrongly above,
/// with `c = round(suite_size · score)`.
pub fn sim_generate_code(block: &EmbeddingBlock, spec: &SimulatorSpec) -> Result<String, EmbeddingError> {
    let score = sim_objective(block, spec)?;
    Ok(program_for((spec.suite_size as f64 * score).round() as usize))
}

/// `square(i) == i²` for `i = 1..=size`.
pub fn simulator_suite(size: usize) -> TestSuite {
    let cases = (1..=size as i64)
        .map(|i| TestCase::io_pair(format!("square_{i}"), json!([i]), json!(i * i)))
        .collect();
    TestSuite::new(SIM_ENTRY_POINT, cases).expect("non-empty suite with unique ids")
}

fn fnv1a(token: &str) -> u64 {
    token
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Deterministic offline backend.
///
/// Prompt text is a canonical rendering of the candidate's first coordinates;
/// the block behind each rendered prompt is remembered so code generation can
/// score it. Prompts it never produced (the initial prompt, its CoT variant)
/// are scored at the box centre, so the simulator ignores prompt wording.
#[derive(Debug)]
pub struct Simulator {
    spec: SimulatorSpec,
    search_box: SearchBox,
    decoded: Mutex<HashMap<String, EmbeddingBlock>>,
}

impl Simulator {
    pub fn new(spec: SimulatorSpec, search_box: SearchBox) -> Result<Self, BackendError> {
        if spec.target.dim() != search_box.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: search_box.dim(),
                actual: spec.target.dim(),
            }
            .into());
        }
        if spec.target.slots().iter().any(|s| !search_box.contains(s.as_slice())) {
            return Err(BackendError::InvalidRequest("simulator target lies outside the search box".into()));
        }
        Ok(Self {
            spec,
            search_box,
            decoded: Mutex::new(HashMap::new()),
        })
    }

    /// `[-1, 1]^d` box with a seeded target.
    pub fn seeded(seed: u64, m: usize, d: usize) -> Result<Self, BackendError> {
        let search_box = SearchBox::symmetric(d, 1.0)?;
        Self::new(SimulatorSpec::sample(seed, m, &search_box), search_box)
    }

    pub fn spec(&self) -> &SimulatorSpec {
        &self.spec
    }

    pub fn suite(&self) -> TestSuite {
        simulator_suite(self.spec.suite_size)
    }

    /// Block standing in for prompts that did not come from a candidate.
    pub fn baseline_block(&self) -> EmbeddingBlock {
        let centre = Embedding::new(self.search_box.center()).expect("finite box");
        EmbeddingBlock::new(vec![centre; self.spec.target.len()]).expect("equal widths")
    }

    pub fn render_prompt(block: &EmbeddingBlock) -> String {
        let head: Vec<String> = block.coords().take(PROMPT_COORDS).map(|v| format!("{v:?}")).collect();
        format!("candidate[{}]", head.join(", "))
    }
}

impl Generator for Simulator {
    fn name(&self) -> &str {
        "simulator"
    }

    fn dim(&self) -> usize {
        self.search_box.dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<Embedding>, BackendError> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(BackendError::Reported {
                status: 400,
                code: "empty_text".into(),
                message: "text has no tokens".into(),
            });
        }
        let d = self.dim();
        Ok(tokens
            .iter()
            .map(|t| {
                let mut rng = rng::stream(fnv1a(t), 0);
                Embedding::new((0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()).expect("finite")
            })
            .collect())
    }

    fn generate_prompt(&self, input: PromptInput<'_>) -> Result<String, BackendError> {
        let span = input
            .candidate_span
            .ok_or_else(|| BackendError::InvalidRequest("simulator needs the candidate span".into()))?;
        let slots = input
            .combined
            .get(span.clone())
            .ok_or_else(|| BackendError::InvalidRequest(format!("candidate span {span:?} out of range")))?;
        let block = EmbeddingBlock::new(slots.to_vec())?;
        check_shape(&block, &self.spec)?;
        let text = Self::render_prompt(&block);
        self.decoded.lock().expect("memo lock").insert(text.clone(), block);
        Ok(text)
    }

    fn generate_code(&self, prompt: &str, n: usize) -> Result<Vec<String>, BackendError> {
        let block = self.decoded.lock().expect("memo lock").get(prompt).cloned();
        let block = block.unwrap_or_else(|| self.baseline_block());
        let program = sim_generate_code(&block, &self.spec)?;
        Ok(vec![program; n])
    }

    fn search_box(&self) -> Result<SearchBox, BackendError> {
        Ok(self.search_box.clone())
    }
}
