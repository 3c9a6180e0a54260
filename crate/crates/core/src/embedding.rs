//! The continuous search space.
//!
//! A candidate is an [`EmbeddingBlock`]: `m` soft-token vectors living in the
//! auxiliary model's `d`-dimensional embedding space. Candidates are sampled
//! in that original space and only projected down to a [`SearchPoint`] (via a
//! seeded Gaussian matrix) for surrogate modelling; the block itself is what
//! gets decoded.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value at coordinate {0}")]
    NonFinite(usize),
    #[error("an embedding block needs at least one slot")]
    EmptyBlock,
    #[error("invalid search box: {0}")]
    InvalidBox(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One `d`-dimensional embedding vector with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(de)?;
        Embedding::new(values).map_err(serde::de::Error::custom)
    }
}

/// The optimizer's decision variable: `m` embeddings of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBlock {
    slots: Vec<Embedding>,
}

impl EmbeddingBlock {
    pub fn new(slots: Vec<Embedding>) -> Result<Self, EmbeddingError> {
        let first = slots.first().ok_or(EmbeddingError::EmptyBlock)?;
        let d = first.dim();
        if let Some(bad) = slots.iter().find(|s| s.dim() != d) {
            return Err(EmbeddingError::DimensionMismatch {
                expected: d,
                actual: bad.dim(),
            });
        }
        Ok(Self { slots })
    }

    /// Number of slots (`m`).
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.slots[0].dim()
    }

    pub fn slots(&self) -> &[Embedding] {
        &self.slots
    }

    /// All `m·d` coordinates, slot after slot.
    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.slots.iter().flat_map(|s| s.as_slice().iter().copied())
    }
}

/// Projected representation of a block: `m·k` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchPoint(pub Vec<f64>);

impl SearchPoint {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Seeded `k×d` matrix with i.i.d. standard normal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    seed: Option<u64>,
    matrix: DMatrix<f64>,
}

/// Draws a `k×d` projection from stream 0 of `seed`.
pub fn sample_projection(seed: u64, k: usize, d: usize) -> ProjectionMatrix {
    ProjectionMatrix::sample_on_stream(seed, 0, k, d)
}

impl ProjectionMatrix {
    /// Entries are filled row-major from `StandardNormal` on the given
    /// ChaCha8 stream.
    pub fn sample_on_stream(seed: u64, stream: u64, k: usize, d: usize) -> Self {
        assert!(k >= 1 && d >= 1, "projection needs k >= 1 and d >= 1");
        let mut rng = rng::stream(seed, stream);
        let entries: Vec<f64> = (0..k * d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            seed: Some(seed),
            matrix: DMatrix::from_row_slice(k, d, &entries),
        }
    }

    /// Wraps an explicit matrix given row-major (no seed).
    pub fn from_row_slice(k: usize, d: usize, entries: &[f64]) -> Self {
        Self {
            seed: None,
            matrix: DMatrix::from_row_slice(k, d, entries),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `z = A x`.
    pub fn project(&self, x: &Embedding) -> Result<Vec<f64>, EmbeddingError> {
        self.project_slice(x.as_slice())
    }

    fn project_slice(&self, x: &[f64]) -> Result<Vec<f64>, EmbeddingError> {
        if x.len() != self.cols() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.cols(),
                actual: x.len(),
            });
        }
        let z = &self.matrix * DVector::from_column_slice(x);
        Ok(z.data.into())
    }

    /// Projects every slot with this matrix and concatenates in slot order.
    pub fn project_block(&self, block: &EmbeddingBlock) -> Result<SearchPoint, EmbeddingError> {
        let mut coords = Vec::with_capacity(block.len() * self.rows());
        for slot in block.slots() {
            coords.extend(self.project(slot)?);
        }
        Ok(SearchPoint(coords))
    }
}

/// Whether all slots share one projection matrix or each slot gets its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    #[default]
    Shared,
    PerSlot,
}

/// Maps whole blocks to search points under a [`ProjectionMode`].
///
/// Slot `s` of a per-slot projector uses stream `s` of the seed, so slot 0
/// coincides with the shared matrix.
#[derive(Debug, Clone)]
pub struct BlockProjector {
    mode: ProjectionMode,
    matrices: Vec<ProjectionMatrix>,
}

impl BlockProjector {
    pub fn new(mode: ProjectionMode, seed: u64, m: usize, k: usize, d: usize) -> Self {
        let matrices = match mode {
            ProjectionMode::Shared => vec![sample_projection(seed, k, d)],
            ProjectionMode::PerSlot => (0..m as u64)
                .map(|s| ProjectionMatrix::sample_on_stream(seed, s, k, d))
                .collect(),
        };
        Self { mode, matrices }
    }

    pub fn shared(matrix: ProjectionMatrix) -> Self {
        Self {
            mode: ProjectionMode::Shared,
            matrices: vec![matrix],
        }
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.matrices[0].rows()
    }

    pub fn d(&self) -> usize {
        self.matrices[0].cols()
    }

    fn matrix_for(&self, slot: usize) -> &ProjectionMatrix {
        match self.mode {
            ProjectionMode::Shared => &self.matrices[0],
            ProjectionMode::PerSlot => &self.matrices[slot],
        }
    }

    pub fn project_block(&self, block: &EmbeddingBlock) -> Result<SearchPoint, EmbeddingError> {
        if self.mode == ProjectionMode::PerSlot && block.len() != self.matrices.len() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.matrices.len(),
                actual: block.len(),
            });
        }
        let mut coords = Vec::with_capacity(block.len() * self.k());
        for (s, slot) in block.slots().iter().enumerate() {
            coords.extend(self.matrix_for(s).project(slot)?);
        }
        Ok(SearchPoint(coords))
    }

    /// Per-coordinate mean and standard deviation of the projected point when
    /// every slot is uniform in `search_box`.
    pub fn uniform_moments(&self, m: usize, search_box: &SearchBox) -> Result<(Vec<f64>, Vec<f64>), EmbeddingError> {
        if search_box.dim() != self.d() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.d(),
                actual: search_box.dim(),
            });
        }
        let centre = DVector::from_vec(search_box.center());
        let width_sq = DVector::from_iterator(
            search_box.dim(),
            search_box.lower.iter().zip(&search_box.upper).map(|(l, u)| (u - l).powi(2) / 12.0),
        );
        let mut mean = Vec::with_capacity(m * self.k());
        let mut std = Vec::with_capacity(m * self.k());
        for s in 0..m {
            let a = self.matrix_for(s).matrix();
            mean.extend((a * &centre).iter());
            std.extend((a.component_mul(a) * &width_sq).iter().map(|v| v.sqrt()));
        }
        Ok((mean, std))
    }

    /// Generates candidates `range` of `sampler` and projects them in one
    /// matrix product per slot. Results agree with
    /// [`BlockProjector::project_block`] up to summation order.
    pub fn project_sampled(&self, sampler: &CandidateSampler, range: Range<u64>) -> Vec<SearchPoint> {
        let count = (range.end - range.start) as usize;
        let d = sampler.search_box().dim();
        let m = sampler.m();
        let mut slot_columns: Vec<DMatrix<f64>> = (0..m).map(|_| DMatrix::zeros(d, count)).collect();
        for (col, index) in range.enumerate() {
            let mut rng = sampler.rng_for(index);
            for x in slot_columns.iter_mut() {
                let column = &mut x.as_mut_slice()[col * d..(col + 1) * d];
                sampler.search_box().fill(&mut rng, column);
            }
        }
        let projected: Vec<DMatrix<f64>> = slot_columns
            .iter()
            .enumerate()
            .map(|(s, x)| self.matrix_for(s).matrix() * x)
            .collect();
        (0..count)
            .map(|col| {
                let mut coords = Vec::with_capacity(m * self.k());
                for z in &projected {
                    coords.extend(z.column(col).iter());
                }
                SearchPoint(coords)
            })
            .collect()
    }
}

/// Per-coordinate sampling bounds in the original embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, EmbeddingError> {
        if lower.is_empty() {
            return Err(EmbeddingError::InvalidBox("zero-dimensional box".into()));
        }
        if lower.len() != upper.len() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(EmbeddingError::NonFinite(i));
            }
            if lo >= hi {
                return Err(EmbeddingError::InvalidBox(format!(
                    "coordinate {i}: lower {lo} is not below upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-half_width, half_width]^d`.
    pub fn symmetric(d: usize, half_width: f64) -> Result<Self, EmbeddingError> {
        Self::new(vec![-half_width; d], vec![half_width; d])
    }

    /// `[mean - n_std·std, mean + n_std·std]` per coordinate.
    pub fn from_moments(mean: &[f64], std: &[f64], n_std: f64) -> Result<Self, EmbeddingError> {
        if mean.len() != std.len() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: mean.len(),
                actual: std.len(),
            });
        }
        let lower = mean.iter().zip(std).map(|(m, s)| m - n_std * s).collect();
        let upper = mean.iter().zip(std).map(|(m, s)| m + n_std * s).collect();
        Self::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Mean half-width over coordinates.
    pub fn mean_half_width(&self) -> f64 {
        let total: f64 = self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (u - l)).sum();
        total / self.dim() as f64
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    fn fill(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for ((v, lo), hi) in out.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = lo + (hi - lo) * rng.random::<f64>();
        }
    }

    pub fn sample_embedding(&self, rng: &mut ChaCha8Rng) -> Embedding {
        let mut values = vec![0.0; self.dim()];
        self.fill(rng, &mut values);
        Embedding(values)
    }
}

/// Random-access uniform candidate generator.
///
/// Candidate `i` is drawn from ChaCha8 stream `i` under `key`, slot by slot,
/// so any candidate can be regenerated from `(key, i)` alone.
#[derive(Debug, Clone)]
pub struct CandidateSampler {
    key: u64,
    m: usize,
    search_box: SearchBox,
}

impl CandidateSampler {
    pub fn new(key: u64, m: usize, search_box: SearchBox) -> Result<Self, EmbeddingError> {
        if m == 0 {
            return Err(EmbeddingError::EmptyBlock);
        }
        Ok(Self { key, m, search_box })
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn search_box(&self) -> &SearchBox {
        &self.search_box
    }

    fn rng_for(&self, index: u64) -> ChaCha8Rng {
        rng::stream(self.key, index)
    }

    pub fn block(&self, index: u64) -> EmbeddingBlock {
        let mut rng = self.rng_for(index);
        let slots = (0..self.m).map(|_| self.search_box.sample_embedding(&mut rng)).collect();
        EmbeddingBlock { slots }
    }
}

/// Samples `count` blocks of `m` slots uniformly within `search_box`; candidate
/// `i` comes from stream `i` of `key`.
pub fn sample_candidates(
    count: usize,
    search_box: &SearchBox,
    m: usize,
    key: u64,
) -> Result<Vec<EmbeddingBlock>, EmbeddingError> {
    if count == 0 {
        return Err(EmbeddingError::InvalidArgument("candidate count must be positive".into()));
    }
    let sampler = CandidateSampler::new(key, m, search_box.clone())?;
    Ok((0..count as u64).map(|i| sampler.block(i)).collect())
}

/// `E_I ∘ E_c ∘ E_p0`: instruction embeddings, then the candidate slots, then
/// the initial-prompt embeddings.
pub fn concat_embeddings(
    instruction: &[Embedding],
    candidate: &EmbeddingBlock,
    initial_prompt: &[Embedding],
) -> Result<Vec<Embedding>, EmbeddingError> {
    let d = candidate.dim();
    if let Some(bad) = instruction.iter().chain(initial_prompt).find(|e| e.dim() != d) {
        return Err(EmbeddingError::DimensionMismatch {
            expected: d,
            actual: bad.dim(),
        });
    }
    let mut combined = Vec::with_capacity(instruction.len() + candidate.len() + initial_prompt.len());
    combined.extend_from_slice(instruction);
    combined.extend_from_slice(candidate.slots());
    combined.extend_from_slice(initial_prompt);
    Ok(combined)
}
