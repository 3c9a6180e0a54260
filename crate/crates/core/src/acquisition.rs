//! Expected Improvement and argmax selection over finite candidate sets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{BlockProjector, CandidateSampler, EmbeddingBlock, EmbeddingError, SearchPoint};
use crate::gp::{GpError, GpModel, GpPosterior, InputScaling};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const CHUNK: u64 = 128;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcquisitionError {
    #[error("no candidates to score")]
    NoCandidates,
    #[error("surrogate has no observations")]
    EmptyDataset,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Gp(#[from] GpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScore {
    pub candidate_index: u64,
    pub value: f64,
}

impl AcquisitionScore {
    /// Higher value wins; equal values go to the lower index.
    fn beats(&self, other: &Self) -> bool {
        self.value > other.value || (self.value == other.value && self.candidate_index < other.candidate_index)
    }
}

fn pick(a: AcquisitionScore, b: AcquisitionScore) -> AcquisitionScore {
    if b.beats(&a) {
        b
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub score: AcquisitionScore,
    pub block: EmbeddingBlock,
    /// Projected point, before any GP input scaling.
    pub search_point: SearchPoint,
    pub posterior: GpPosterior,
}

impl Selection {
    pub fn index(&self) -> u64 {
        self.score.candidate_index
    }
}

fn std_normal_cdf(u: f64) -> f64 {
    0.5 * libm::erfc(-u * std::f64::consts::FRAC_1_SQRT_2)
}

fn std_normal_pdf(u: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * u * u).exp()
}

/// `u·Φ(u) + φ(u)`; an asymptotic series takes over deep in the left tail
/// where the direct form cancels.
fn improvement_factor(u: f64) -> f64 {
    if u > -10.0 {
        u * std_normal_cdf(u) + std_normal_pdf(u)
    } else {
        let inv = 1.0 / (u * u);
        std_normal_pdf(u) * inv * (1.0 - inv * (3.0 - inv * (15.0 - 105.0 * inv)))
    }
}

/// Expected Improvement for maximization with no exploration offset.
pub fn expected_improvement(post: &GpPosterior, best: f64) -> f64 {
    let gap = post.mean - best;
    let sigma = post.variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return gap.max(0.0);
    }
    (sigma * improvement_factor(gap / sigma)).max(0.0)
}

fn incumbent(model: &GpModel) -> Result<f64, AcquisitionError> {
    model.dataset().best_output().ok_or(AcquisitionError::EmptyDataset)
}

fn score_point(model: &GpModel, best: f64, index: u64, u: &[f64]) -> AcquisitionScore {
    let value = expected_improvement(&model.predict_unchecked(u), best);
    AcquisitionScore {
        candidate_index: index,
        value: if value.is_nan() { f64::NEG_INFINITY } else { value },
    }
}

fn check_model_dim(model: &GpModel, dim: usize) -> Result<(), AcquisitionError> {
    let expected = model.params().dim();
    if expected != dim {
        return Err(GpError::DimensionMismatch { expected, actual: dim }.into());
    }
    Ok(())
}

/// EI of every point, in input order.
pub fn score_candidates(model: &GpModel, points: &[SearchPoint]) -> Result<Vec<AcquisitionScore>, AcquisitionError> {
    let best = incumbent(model)?;
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            check_model_dim(model, p.dim())?;
            Ok(score_point(model, best, i as u64, p.as_slice()))
        })
        .collect()
}

/// Projects each candidate, scores it by EI against the best observed output
/// and returns the argmax (lowest index on ties). The model is expected to be
/// trained directly on projected points.
pub fn select_next(
    model: &GpModel,
    candidates: &[EmbeddingBlock],
    projector: &BlockProjector,
) -> Result<Selection, AcquisitionError> {
    if candidates.is_empty() {
        return Err(AcquisitionError::NoCandidates);
    }
    let points = candidates
        .par_iter()
        .map(|c| projector.project_block(c))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = score_candidates(model, &points)?;
    let winner = scores.into_iter().reduce(pick).expect("non-empty");
    let i = winner.candidate_index as usize;
    let search_point = points[i].clone();
    Ok(Selection {
        score: winner,
        block: candidates[i].clone(),
        posterior: model.predict_unchecked(search_point.as_slice()),
        search_point,
    })
}

/// Streams candidates `0..count` of `sampler` in fixed-size chunks, scoring
/// each by EI on `scaling`-mapped projections, and regenerates the winner.
///
/// Equivalent to materializing all candidates and calling [`select_next`] on
/// a model trained in scaled coordinates, without holding them in memory.
pub fn select_from_sampler(
    model: &GpModel,
    sampler: &CandidateSampler,
    count: u64,
    projector: &BlockProjector,
    scaling: &InputScaling,
) -> Result<Selection, AcquisitionError> {
    if count == 0 {
        return Err(AcquisitionError::NoCandidates);
    }
    if sampler.search_box().dim() != projector.d() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: projector.d(),
            actual: sampler.search_box().dim(),
        }
        .into());
    }
    check_model_dim(model, sampler.m() * projector.k())?;
    if scaling.dim() != sampler.m() * projector.k() {
        return Err(GpError::DimensionMismatch {
            expected: sampler.m() * projector.k(),
            actual: scaling.dim(),
        }
        .into());
    }
    let best = incumbent(model)?;
    let chunks = count.div_ceil(CHUNK);
    let winner = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(count);
            projector
                .project_sampled(sampler, start..end)
                .iter()
                .zip(start..end)
                .map(|(z, i)| score_point(model, best, i, &scaling.apply_unchecked(z.as_slice())))
                .reduce(pick)
                .expect("non-empty chunk")
        })
        .reduce_with(pick)
        .expect("non-empty range");

    let block = sampler.block(winner.candidate_index);
    let search_point = projector.project_block(&block)?;
    let posterior = model.predict_unchecked(&scaling.apply_unchecked(search_point.as_slice()));
    Ok(Selection {
        score: winner,
        block,
        search_point,
        posterior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedding, ProjectionMatrix, SearchBox};
    use crate::gp::{GpDataset, KernelFamily, KernelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn post(mean: f64, sd: f64) -> GpPosterior {
        GpPosterior {
            mean,
            variance: sd * sd,
        }
    }

    #[test]
    fn zero_variance_cases() {
        assert_eq!(expected_improvement(&post(0.3, 0.0), 0.5), 0.0);
        assert_eq!(expected_improvement(&post(0.5, 0.0), 0.5), 0.0);
        assert!((expected_improvement(&post(0.7, 0.0), 0.5) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn at_incumbent_with_unit_sd() {
        let ei = expected_improvement(&post(1.0, 1.0), 1.0);
        assert!((ei - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((ei - 0.398942).abs() < 1e-6);
    }

    #[test]
    fn matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws: Vec<f64> = (0..1_000_000).map(|_| rng.sample(StandardNormal)).collect();
        for gap in [-1.0, -0.3, 0.0, 0.4] {
            for sd in [0.1, 0.5, 1.0] {
                let mc = draws.iter().map(|z| (gap + sd * z).max(0.0)).sum::<f64>() / draws.len() as f64;
                let ei = expected_improvement(&post(gap, sd), 0.0);
                assert!((mc - ei).abs() < 1e-3, "gap {gap} sd {sd}: {mc} vs {ei}");
            }
        }
    }

    #[test]
    fn monotone_in_sd_and_above_plain_improvement() {
        for gap in [-2.0, -0.5, 0.0, 0.3, 1.5] {
            let mut prev = 0.0;
            for step in 0..=20 {
                let sd = step as f64 * 0.1;
                let ei = expected_improvement(&post(gap, sd), 0.0);
                assert!(ei >= prev, "gap {gap} sd {sd}");
                assert!(ei >= gap.max(0.0));
                prev = ei;
            }
        }
    }

    #[test]
    fn left_tail_is_positive_and_continuous() {
        let a = improvement_factor(-10.0 + 1e-9);
        let b = improvement_factor(-10.0 - 1e-9);
        assert!(a > 0.0 && b > 0.0);
        assert!((a / b - 1.0).abs() < 1e-4);
        let mut prev = 0.0;
        for i in 0..400 {
            let u = -40.0 + i as f64 * 0.1;
            let h = improvement_factor(u);
            assert!(h >= prev, "u {u}");
            prev = h;
        }
    }

    fn identity_projector(d: usize) -> BlockProjector {
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1.0;
        }
        BlockProjector::shared(ProjectionMatrix::from_row_slice(d, d, &entries))
    }

    fn block(values: &[f64]) -> EmbeddingBlock {
        EmbeddingBlock::new(vec![Embedding::new(values.to_vec()).unwrap()]).unwrap()
    }

    #[test]
    fn singleton_is_returned() {
        let params = KernelParams::isotropic(1, 1.0, 1.0, 1e-4, KernelFamily::Matern52).unwrap();
        let ds = GpDataset::new(vec![SearchPoint(vec![0.0]), SearchPoint(vec![1.0])], vec![0.1, 0.2]).unwrap();
        let model = GpModel::new(params, ds).unwrap();
        let sel = select_next(&model, &[block(&[5.0])], &identity_projector(1)).unwrap();
        assert_eq!(sel.index(), 0);
        assert_eq!(sel.block, block(&[5.0]));
        assert!(matches!(select_next(&model, &[], &identity_projector(1)), Err(AcquisitionError::NoCandidates)));
    }

    #[test]
    fn prefers_unexplored_over_interpolated_incumbent() {
        let params = KernelParams::isotropic(1, 0.5, 1.0, 0.0, KernelFamily::Matern52).unwrap();
        let ds = GpDataset::new(vec![SearchPoint(vec![0.0]), SearchPoint(vec![2.0])], vec![0.8, 0.3]).unwrap();
        let model = GpModel::new(params, ds).unwrap();
        let at_best = expected_improvement(&model.predict(&SearchPoint(vec![0.0])).unwrap(), 0.8);
        let fresh = expected_improvement(&model.predict(&SearchPoint(vec![1.0])).unwrap(), 0.8);
        assert!(at_best < 1e-4 && fresh > 100.0 * at_best, "{at_best} {fresh}");
        let sel = select_next(&model, &[block(&[0.0]), block(&[1.0])], &identity_projector(1)).unwrap();
        assert_eq!(sel.index(), 1);
    }

    #[test]
    fn argmax_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..10 {
            let dim = 3;
            let inputs: Vec<SearchPoint> = (0..5)
                .map(|_| SearchPoint((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect();
            let outputs: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            let params = KernelParams::new(vec![0.6, 1.1, 0.8], 1.0, 1e-3, KernelFamily::Rbf).unwrap();
            let model = GpModel::new(params.clone(), GpDataset::new(inputs.clone(), outputs.clone()).unwrap()).unwrap();
            let candidates: Vec<EmbeddingBlock> = (0..50)
                .map(|_| block(&(0..dim).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<_>>()))
                .collect();
            let best = outputs.iter().cloned().fold(f64::MIN, f64::max);
            let mut oracle = (0, f64::MIN);
            for (i, c) in candidates.iter().enumerate() {
                let q = SearchPoint(c.slots()[0].as_slice().to_vec());
                let ei = expected_improvement(&crate::gp::posterior(&params, &model.dataset().clone(), &q).unwrap(), best);
                if ei > oracle.1 {
                    oracle = (i, ei);
                }
            }
            let sel = select_next(&model, &candidates, &identity_projector(dim)).unwrap();
            assert_eq!(sel.index() as usize, oracle.0, "trial {trial}");
        }
    }

    #[test]
    fn streaming_matches_materialized_selection() {
        let d = 16;
        let sbox = SearchBox::symmetric(d, 1.0).unwrap();
        let sampler = CandidateSampler::new(4, 2, sbox.clone()).unwrap();
        let projector = BlockProjector::new(crate::embedding::ProjectionMode::Shared, 8, 2, 3, d);
        let (mean, std) = projector.uniform_moments(2, &sbox).unwrap();
        let scaling = InputScaling::unit_moments(&mean, &std).unwrap();

        let train: Vec<SearchPoint> = (1000..1008)
            .map(|i| scaling.apply(&projector.project_block(&sampler.block(i)).unwrap()).unwrap())
            .collect();
        let outputs: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let params = KernelParams::isotropic(6, 0.4, 1.0, 1e-4, KernelFamily::Matern52).unwrap();
        let model = GpModel::new(params, GpDataset::new(train, outputs).unwrap()).unwrap();

        let count = 300;
        let sel = select_from_sampler(&model, &sampler, count, &projector, &scaling).unwrap();
        let best = model.dataset().best_output().unwrap();
        let mut oracle = AcquisitionScore {
            candidate_index: 0,
            value: f64::NEG_INFINITY,
        };
        for i in 0..count {
            let u = scaling.apply(&projector.project_block(&sampler.block(i)).unwrap()).unwrap();
            let s = AcquisitionScore {
                candidate_index: i,
                value: expected_improvement(&model.predict(&u).unwrap(), best),
            };
            oracle = pick(oracle, s);
        }
        assert_eq!(sel.index(), oracle.candidate_index);
        assert!((sel.score.value - oracle.value).abs() <= 1e-9 * oracle.value.max(1e-300));
        assert_eq!(sel.block, sampler.block(oracle.candidate_index));
        assert_eq!(sel.search_point, projector.project_block(&sel.block).unwrap());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let a = AcquisitionScore {
            candidate_index: 3,
            value: 0.5,
        };
        let b = AcquisitionScore {
            candidate_index: 1,
            value: 0.5,
        };
        assert_eq!(pick(a, b).candidate_index, 1);
        assert_eq!(pick(b, a).candidate_index, 1);
    }
}
