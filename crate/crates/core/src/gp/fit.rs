//! MAP estimation of kernel hyperparameters.
//!
//! Objective: log marginal likelihood of the standardized outputs plus the
//! log prior densities of the lengthscales (dimensionality-scaled), the noise
//! variance (`LogNormal(log 1e-3, 1)`, floor `1e-8`) and the signal variance
//! (`LogNormal(0, 1)`). The optimizer works on log parameters; the noise is
//! parameterized as `1e-8 + exp(θ)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{KernelFamily, KernelParams};
use super::lbfgs;
use super::prior::{LengthscalePrior, LogNormalPrior};
use super::{Factor, GpDataset, GpError};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const NOISE_FLOOR: f64 = 1e-8;
const INITIAL_NOISE: f64 = 1e-4;

fn noise_prior() -> LogNormalPrior {
    LogNormalPrior::new(1e-3f64.ln(), 1.0)
}

fn signal_prior() -> LogNormalPrior {
    LogNormalPrior::new(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub family: KernelFamily,
    pub restarts: usize,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern52,
            restarts: 5,
            max_iters: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: KernelParams,
    pub objective: f64,
    pub chosen_restart: usize,
    pub restarts: Vec<RestartOutcome>,
}

/// Pairwise squared coordinate differences, one row per unordered pair.
struct MapProblem<'a> {
    family: KernelFamily,
    prior: &'a LengthscalePrior,
    n: usize,
    dim: usize,
    pairs: Vec<(usize, usize)>,
    pair_sq: DMatrix<f64>,
    y: DVector<f64>,
}

struct Evaluation {
    objective: f64,
    /// d/d log l_i
    grad_log_lengthscales: Vec<f64>,
    /// d/d log σ_f²
    grad_log_signal: f64,
    /// d/d σ_n²
    grad_noise: f64,
}

impl<'a> MapProblem<'a> {
    fn new(dataset: &GpDataset, prior: &'a LengthscalePrior, family: KernelFamily) -> Self {
        let n = dataset.len();
        let dim = dataset.dim().unwrap_or(0);
        let inputs = dataset.inputs();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
        let mut pair_sq = DMatrix::zeros(pairs.len(), dim);
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let (a, b) = (inputs[i].as_slice(), inputs[j].as_slice());
            for c in 0..dim {
                let t = a[c] - b[c];
                pair_sq[(p, c)] = t * t;
            }
        }
        Self {
            family,
            prior,
            n,
            dim,
            pairs,
            pair_sq,
            y: DVector::from_vec(dataset.standardized_outputs()),
        }
    }

    fn evaluate(&self, lengthscales: &[f64], signal: f64, noise: f64) -> Result<Evaluation, GpError> {
        let n = self.n;
        let weights = DVector::from_iterator(self.dim, lengthscales.iter().map(|l| 1.0 / (l * l)));
        let sq = &self.pair_sq * &weights;

        let mut k_f = DMatrix::zeros(n, n);
        for i in 0..n {
            k_f[(i, i)] = signal;
        }
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let v = signal * self.family.correlation(sq[p]);
            k_f[(i, j)] = v;
            k_f[(j, i)] = v;
        }
        let (factor, chol) = Factor::decompose(&k_f, noise, signal)?;
        let alpha = chol.solve(&self.y);
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let lml = -0.5 * self.y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

        // W = α αᵀ - K⁻¹; dLML/dθ = ½ tr(W ∂K/∂θ).
        let mut w = chol.inverse();
        w.iter_mut().for_each(|v| *v = -*v);
        w.ger(1.0, &alpha, &alpha, 1.0);
        let trace_w = w.trace();

        let coeffs = DVector::from_iterator(
            self.pairs.len(),
            self.pairs
                .iter()
                .enumerate()
                .map(|(p, &(i, j))| w[(i, j)] * signal * self.family.correlation_grad(sq[p])),
        );
        let sums = self.pair_sq.tr_mul(&coeffs);
        let mut grad_log_lengthscales: Vec<f64> = (0..self.dim)
            .map(|c| -2.0 * weights[c] * sums[c])
            .collect();

        let grad_log_signal_lml = 0.5 * w.component_mul(&k_f).sum() + 0.5 * factor.jitter * trace_w;
        let grad_noise_lml = 0.5 * trace_w;

        let lengthscale_density = self.prior.density();
        let mut objective = lml;
        for (g, l) in grad_log_lengthscales.iter_mut().zip(lengthscales) {
            objective += lengthscale_density.log_density(*l);
            *g += lengthscale_density.log_density_grad_log(l.ln());
        }
        let sp = signal_prior();
        objective += sp.log_density(signal);
        let grad_log_signal = grad_log_signal_lml + sp.log_density_grad_log(signal.ln());
        let np = noise_prior();
        objective += np.log_density(noise);
        let grad_noise = grad_noise_lml + np.log_density_grad_log(noise.ln()) / noise;

        if !objective.is_finite() {
            return Err(GpError::NumericalFailure("non-finite MAP objective".into()));
        }
        Ok(Evaluation {
            objective,
            grad_log_lengthscales,
            grad_log_signal,
            grad_noise,
        })
    }

    fn decode(&self, theta: &[f64]) -> (Vec<f64>, f64, f64) {
        let lengthscales = theta[..self.dim].iter().map(|t| t.exp()).collect();
        let signal = theta[self.dim].exp();
        let noise = NOISE_FLOOR + theta[self.dim + 1].exp();
        (lengthscales, signal, noise)
    }

    /// Negated objective and gradient in the optimizer's coordinates.
    fn negated(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        if theta.iter().any(|t| !t.is_finite() || t.abs() > 40.0) {
            return None;
        }
        let (lengthscales, signal, noise) = self.decode(theta);
        let eval = self.evaluate(&lengthscales, signal, noise).ok()?;
        let mut grad: Vec<f64> = eval.grad_log_lengthscales.iter().map(|g| -g).collect();
        grad.push(-eval.grad_log_signal);
        grad.push(-eval.grad_noise * (noise - NOISE_FLOOR));
        grad.iter().all(|g| g.is_finite()).then_some((-eval.objective, grad))
    }
}

fn check_fit_input(dataset: &GpDataset) -> Result<(), GpError> {
    if dataset.len() < 2 {
        return Err(GpError::InsufficientData {
            needed: 2,
            got: dataset.len(),
        });
    }
    Ok(())
}

/// MAP objective (log marginal likelihood plus log priors) at `params`.
pub fn map_objective(params: &KernelParams, dataset: &GpDataset, prior: &LengthscalePrior) -> Result<f64, GpError> {
    map_objective_and_gradient(params, dataset, prior).map(|(v, _)| v)
}

/// MAP objective and its gradient with respect to
/// `[log l_1, …, log l_D, log σ_f², log σ_n²]`.
pub fn map_objective_and_gradient(
    params: &KernelParams,
    dataset: &GpDataset,
    prior: &LengthscalePrior,
) -> Result<(f64, Vec<f64>), GpError> {
    if dataset.is_empty() {
        return Err(GpError::InsufficientData { needed: 1, got: 0 });
    }
    params.check_dim(dataset.dim().unwrap_or(0))?;
    let problem = MapProblem::new(dataset, prior, params.family());
    let eval = problem.evaluate(params.lengthscales(), params.signal_variance(), params.noise_variance())?;
    let mut grad = eval.grad_log_lengthscales;
    grad.push(eval.grad_log_signal);
    grad.push(eval.grad_noise * params.noise_variance());
    Ok((eval.objective, grad))
}

/// Fits kernel hyperparameters by multi-start L-BFGS on the MAP objective.
///
/// Restart 0 starts at the prior median (`l_i = e^μ`, `σ_f² = 1`,
/// `σ_n² = 1e-4`); the others start from prior draws taken from `rng` in
/// restart order. The highest objective wins, earliest restart on ties.
pub fn fit<R: Rng + ?Sized>(
    dataset: &GpDataset,
    prior: &LengthscalePrior,
    options: &FitOptions,
    rng: &mut R,
) -> Result<KernelParams, GpError> {
    fit_detailed(dataset, prior, options, rng).map(|r| r.params)
}

pub fn fit_detailed<R: Rng + ?Sized>(
    dataset: &GpDataset,
    prior: &LengthscalePrior,
    options: &FitOptions,
    rng: &mut R,
) -> Result<FitReport, GpError> {
    check_fit_input(dataset)?;
    let problem = MapProblem::new(dataset, prior, options.family);
    let dim = problem.dim;

    let restarts = options.restarts.max(1);
    let mut starts = Vec::with_capacity(restarts);
    let mut median = vec![prior.median().ln(); dim];
    median.push(0.0);
    median.push((INITIAL_NOISE - NOISE_FLOOR).ln());
    starts.push(median);
    for _ in 1..restarts {
        let mut theta: Vec<f64> = (0..dim).map(|_| prior.sample(rng).ln()).collect();
        theta.push(signal_prior().sample(rng).ln());
        let noise = noise_prior().sample(rng);
        theta.push((noise - NOISE_FLOOR).max(1e-300).ln());
        starts.push(theta);
    }

    let opts = lbfgs::Options {
        max_iters: options.max_iters,
        cost_tolerance: options.tolerance,
        memory: 10,
    };
    let outcomes: Vec<Option<lbfgs::Outcome>> = starts
        .into_par_iter()
        .map(|x0| lbfgs::minimize(|t| problem.negated(t), x0, &opts))
        .collect();

    let mut best: Option<(usize, f64, &[f64])> = None;
    let mut summaries = Vec::with_capacity(outcomes.len());
    for (i, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Some(o) => {
                let objective = -o.value;
                summaries.push(RestartOutcome {
                    objective: Some(objective),
                    iterations: o.iterations,
                    converged: o.converged,
                });
                if best.map_or(true, |(_, b, _)| objective > b) {
                    best = Some((i, objective, &o.x));
                }
            }
            None => summaries.push(RestartOutcome {
                objective: None,
                iterations: 0,
                converged: false,
            }),
        }
    }
    let (chosen, objective, theta) = best.ok_or_else(|| {
        GpError::NumericalFailure("no restart produced a decomposable covariance".into())
    })?;
    let (lengthscales, signal, noise) = problem.decode(theta);
    Ok(FitReport {
        params: KernelParams::new(lengthscales, signal, noise, options.family)?,
        objective,
        chosen_restart: chosen,
        restarts: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::SearchPoint;
    use crate::gp::posterior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> GpDataset {
        let inputs = (0..n)
            .map(|_| SearchPoint((0..dim).map(|_| rng.random::<f64>()).collect()))
            .collect();
        let outputs = (0..n).map(|_| rng.random::<f64>()).collect();
        GpDataset::new(inputs, outputs).unwrap()
    }

    #[test]
    fn needs_two_points() {
        let ds = GpDataset::new(vec![SearchPoint(vec![0.0])], vec![0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = fit(&ds, &LengthscalePrior::new(1), &FitOptions::default(), &mut rng).unwrap_err();
        assert_eq!(err, GpError::InsufficientData { needed: 2, got: 1 });
    }

    #[test]
    fn lengthscale_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for family in [KernelFamily::Matern52, KernelFamily::Rbf] {
            for _ in 0..10 {
                let ds = random_dataset(&mut rng, 5, 3);
                let prior = LengthscalePrior::new(3);
                let ls: Vec<f64> = (0..3).map(|_| 0.2 + rng.random::<f64>()).collect();
                let params = KernelParams::new(ls.clone(), 0.5 + rng.random::<f64>(), 1e-3, family).unwrap();
                let (_, grad) = map_objective_and_gradient(&params, &ds, &prior).unwrap();
                for i in 0..3 {
                    let h = 1e-5;
                    let at = |delta: f64| {
                        let mut l = ls.clone();
                        l[i] = (l[i].ln() + delta).exp();
                        let p = KernelParams::new(l, params.signal_variance(), 1e-3, family).unwrap();
                        map_objective(&p, &ds, &prior).unwrap()
                    };
                    let fd = (at(h) - at(-h)) / (2.0 * h);
                    let rel = (fd - grad[i]).abs() / grad[i].abs().max(1e-6);
                    assert!(rel < 1e-4, "{family:?} dim {i}: fd {fd} analytic {}", grad[i]);
                }
            }
        }
    }

    #[test]
    fn variance_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ds = random_dataset(&mut rng, 6, 2);
        let prior = LengthscalePrior::new(2);
        let params = KernelParams::new(vec![0.4, 0.9], 1.3, 0.02, KernelFamily::Matern52).unwrap();
        let (_, grad) = map_objective_and_gradient(&params, &ds, &prior).unwrap();
        let h: f64 = 1e-5;
        let obj = |s: f64, n: f64| {
            map_objective(&KernelParams::new(vec![0.4, 0.9], s, n, KernelFamily::Matern52).unwrap(), &ds, &prior).unwrap()
        };
        let fd_signal = (obj(1.3 * h.exp(), 0.02) - obj(1.3 * (-h).exp(), 0.02)) / (2.0 * h);
        let fd_noise = (obj(1.3, 0.02 * h.exp()) - obj(1.3, 0.02 * (-h).exp())) / (2.0 * h);
        assert!((fd_signal - grad[2]).abs() / grad[2].abs().max(1e-6) < 1e-4);
        assert!((fd_noise - grad[3]).abs() / grad[3].abs().max(1e-6) < 1e-4);
    }

    #[test]
    fn fit_never_worse_than_prior_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = random_dataset(&mut rng, 12, 4);
        let prior = LengthscalePrior::new(4);
        let start = KernelParams::isotropic(4, 2.0, 1.0, 1e-4, KernelFamily::Matern52).unwrap();
        let start_obj = map_objective(&start, &ds, &prior).unwrap();
        let report = fit_detailed(&ds, &prior, &FitOptions::default(), &mut rng).unwrap();
        assert!(report.objective >= start_obj);
        let recomputed = map_objective(&report.params, &ds, &prior).unwrap();
        assert!((recomputed - report.objective).abs() < 1e-9);
        assert_eq!(report.restarts.len(), 5);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut data_rng = ChaCha8Rng::seed_from_u64(11);
        let ds = random_dataset(&mut data_rng, 8, 3);
        let prior = LengthscalePrior::new(3);
        let a = fit(&ds, &prior, &FitOptions::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = fit(&ds, &prior, &FitOptions::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_outputs_fit_and_predict_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs: Vec<SearchPoint> = (0..6)
            .map(|_| SearchPoint((0..3).map(|_| rng.random::<f64>()).collect()))
            .collect();
        let ds = GpDataset::new(inputs, vec![0.4; 6]).unwrap();
        let prior = LengthscalePrior::new(3);
        let params = fit(&ds, &prior, &FitOptions::default(), &mut rng).unwrap();
        for q in [[0.5, 0.5, 0.5], [10.0, -3.0, 2.0]] {
            let p = posterior(&params, &ds, &SearchPoint(q.to_vec())).unwrap();
            assert!((p.mean - 0.4).abs() < 1e-6);
        }
    }
}
