//! Gaussian-process surrogate over projected search points.
//!
//! Outputs are standardized before fitting and predictions are mapped back to
//! the original units. The covariance matrix is decomposed by Cholesky with
//! escalating diagonal jitter (`1e-8·σ_f²` up to `1e-2·σ_f²`).

mod fit;
mod kernel;
mod lbfgs;
mod prior;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::SearchPoint;

pub use fit::{fit, fit_detailed, map_objective, map_objective_and_gradient, FitOptions, FitReport};
pub use kernel::{kernel_eval, KernelFamily, KernelParams};
pub use prior::{log_prior, LengthscalePrior, LogNormalPrior};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("insufficient data: need at least {needed} points, have {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

const STD_FLOOR: f64 = 1e-12;
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

/// Training pairs plus the output standardization used for fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDataset {
    inputs: Vec<SearchPoint>,
    outputs: Vec<f64>,
    mean: f64,
    std: f64,
}

impl GpDataset {
    pub fn new(inputs: Vec<SearchPoint>, outputs: Vec<f64>) -> Result<Self, GpError> {
        if inputs.len() != outputs.len() {
            return Err(GpError::InvalidData(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let mut ds = Self {
            inputs: Vec::with_capacity(outputs.len()),
            outputs: Vec::with_capacity(outputs.len()),
            mean: 0.0,
            std: 1.0,
        };
        for (z, y) in inputs.into_iter().zip(outputs) {
            ds.check_point(&z, y)?;
            ds.inputs.push(z);
            ds.outputs.push(y);
        }
        ds.restandardize();
        Ok(ds)
    }

    pub fn empty() -> Self {
        Self {
            inputs: Vec::new(),
            outputs: Vec::new(),
            mean: 0.0,
            std: 1.0,
        }
    }

    fn check_point(&self, z: &SearchPoint, y: f64) -> Result<(), GpError> {
        if let Some(first) = self.inputs.first() {
            if first.dim() != z.dim() {
                return Err(GpError::DimensionMismatch {
                    expected: first.dim(),
                    actual: z.dim(),
                });
            }
        }
        if z.dim() == 0 {
            return Err(GpError::InvalidData("zero-dimensional input".into()));
        }
        if !y.is_finite() || z.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(GpError::InvalidData("non-finite value".into()));
        }
        Ok(())
    }

    fn restandardize(&mut self) {
        let n = self.outputs.len();
        if n == 0 {
            self.mean = 0.0;
            self.std = 1.0;
            return;
        }
        let mean = self.outputs.iter().sum::<f64>() / n as f64;
        let var = self.outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        self.mean = mean;
        self.std = if std < STD_FLOOR { 1.0 } else { std };
    }

    pub fn push(&mut self, z: SearchPoint, y: f64) -> Result<(), GpError> {
        self.check_point(&z, y)?;
        self.inputs.push(z);
        self.outputs.push(y);
        self.restandardize();
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.inputs.first().map(SearchPoint::dim)
    }

    pub fn inputs(&self) -> &[SearchPoint] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn output_mean(&self) -> f64 {
        self.mean
    }

    /// Standardization divisor (1 for constant data).
    pub fn output_scale(&self) -> f64 {
        self.std
    }

    pub fn standardized_outputs(&self) -> Vec<f64> {
        self.outputs.iter().map(|y| (y - self.mean) / self.std).collect()
    }

    /// Largest observed output, the EI incumbent.
    pub fn best_output(&self) -> Option<f64> {
        self.outputs.iter().copied().reduce(f64::max)
    }
}

/// Per-coordinate affine map `u = slope·z + intercept` applied to search
/// points before they reach the GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    slope: Vec<f64>,
    intercept: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            slope: vec![1.0; dim],
            intercept: vec![0.0; dim],
        }
    }

    /// Maps a distribution with per-coordinate `mean` and `std` onto the
    /// moments of the unit interval (centre 0.5, std `1/√12`).
    pub fn unit_moments(mean: &[f64], std: &[f64]) -> Result<Self, GpError> {
        if mean.len() != std.len() {
            return Err(GpError::DimensionMismatch {
                expected: mean.len(),
                actual: std.len(),
            });
        }
        if let Some(s) = std.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(GpError::InvalidData(format!("scale {s} is not positive")));
        }
        let root12 = 12f64.sqrt();
        let slope: Vec<f64> = std.iter().map(|s| 1.0 / (root12 * s)).collect();
        let intercept = mean.iter().zip(&slope).map(|(m, a)| 0.5 - m * a).collect();
        Ok(Self { slope, intercept })
    }

    pub fn dim(&self) -> usize {
        self.slope.len()
    }

    pub fn apply(&self, z: &SearchPoint) -> Result<SearchPoint, GpError> {
        if z.dim() != self.dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.dim(),
                actual: z.dim(),
            });
        }
        Ok(SearchPoint(self.apply_unchecked(z.as_slice())))
    }

    pub(crate) fn apply_unchecked(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.slope.iter().zip(&self.intercept))
            .map(|(v, (a, b))| a * v + b)
            .collect()
    }
}

/// Predictive distribution of the latent function, in output units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpPosterior {
    pub mean: f64,
    pub variance: f64,
}

impl GpPosterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Lower Cholesky factor of `K + (σ_n² + jitter)·I`, stored row-major.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    n: usize,
    rows: Vec<f64>,
    jitter: f64,
}

impl Factor {
    /// Decomposes `base + (noise + jitter)·I`, escalating jitter on failure.
    pub(crate) fn decompose(base: &DMatrix<f64>, noise: f64, signal: f64) -> Result<(Self, nalgebra::Cholesky<f64, nalgebra::Dyn>), GpError> {
        let n = base.nrows();
        let mut rel = JITTER_START;
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let jitter = rel * signal;
            let mut k = base.clone();
            for i in 0..n {
                k[(i, i)] += noise + jitter;
            }
            if let Some(chol) = k.cholesky() {
                let l = chol.l();
                let mut rows = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..=i {
                        rows[i * n + j] = l[(i, j)];
                    }
                }
                return Ok((Self { n, rows, jitter }, chol));
            }
            rel *= 10.0;
        }
        Err(GpError::NumericalFailure(format!(
            "covariance of {n} points is not positive definite even with jitter {:.0e}·σ_f²",
            JITTER_MAX
        )))
    }

    /// Solves `L v = b` in place.
    pub(crate) fn forward_solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.rows[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, v)| l * v).sum();
            b[i] = (b[i] - s) / self.rows[i * n + i];
        }
    }
}

/// A GP conditioned on a dataset under fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct GpModel {
    params: KernelParams,
    dataset: GpDataset,
    factor: Factor,
    alpha: Vec<f64>,
}

impl GpModel {
    pub fn new(params: KernelParams, dataset: GpDataset) -> Result<Self, GpError> {
        let n = dataset.len();
        if n == 0 {
            return Err(GpError::InsufficientData { needed: 1, got: 0 });
        }
        params.check_dim(dataset.dim().unwrap_or(0))?;
        let base = kernel_matrix(&params, dataset.inputs());
        let (factor, chol) = Factor::decompose(&base, params.noise_variance(), params.signal_variance())?;
        let y = DVector::from_vec(dataset.standardized_outputs());
        let alpha = chol.solve(&y).data.into();
        Ok(Self {
            params,
            dataset,
            factor,
            alpha,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn dataset(&self) -> &GpDataset {
        &self.dataset
    }

    /// Diagonal jitter that made the covariance decomposable.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    pub fn predict(&self, query: &SearchPoint) -> Result<GpPosterior, GpError> {
        self.params.check_dim(query.dim())?;
        Ok(self.predict_unchecked(query.as_slice()))
    }

    pub(crate) fn predict_unchecked(&self, query: &[f64]) -> GpPosterior {
        let mut k_star: Vec<f64> = self
            .dataset
            .inputs()
            .iter()
            .map(|z| self.params.kernel_unchecked(query, z.as_slice()))
            .collect();
        let mean_std: f64 = k_star.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        self.factor.forward_solve(&mut k_star);
        let explained: f64 = k_star.iter().map(|v| v * v).sum();
        let var_std = (self.params.signal_variance() - explained).max(0.0);
        let scale = self.dataset.output_scale();
        GpPosterior {
            mean: self.dataset.output_mean() + scale * mean_std,
            variance: scale * scale * var_std,
        }
    }

    pub fn predict_many(&self, queries: &[SearchPoint]) -> Result<Vec<GpPosterior>, GpError> {
        queries.iter().map(|q| self.predict(q)).collect()
    }
}

pub(crate) fn kernel_matrix(params: &KernelParams, inputs: &[SearchPoint]) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.signal_variance();
        for j in 0..i {
            let v = params.kernel_unchecked(inputs[i].as_slice(), inputs[j].as_slice());
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Posterior at `query` for a GP with `params` conditioned on `dataset`.
pub fn posterior(params: &KernelParams, dataset: &GpDataset, query: &SearchPoint) -> Result<GpPosterior, GpError> {
    GpModel::new(params.clone(), dataset.clone())?.predict(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> SearchPoint {
        SearchPoint(v.to_vec())
    }

    #[test]
    fn dataset_validation() {
        assert!(GpDataset::new(vec![pt(&[0.0])], vec![]).is_err());
        assert!(matches!(
            GpDataset::new(vec![pt(&[0.0]), pt(&[0.0, 1.0])], vec![0.1, 0.2]),
            Err(GpError::DimensionMismatch { .. })
        ));
        assert!(GpDataset::new(vec![pt(&[f64::NAN])], vec![0.1]).is_err());
    }

    #[test]
    fn constant_outputs_clamp_scale() {
        let ds = GpDataset::new(vec![pt(&[0.0]), pt(&[1.0]), pt(&[2.0])], vec![0.4; 3]).unwrap();
        assert_eq!(ds.output_scale(), 1.0);
        assert!((ds.output_mean() - 0.4).abs() < 1e-15);
        assert!(ds.standardized_outputs().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn noiseless_interpolation() {
        let params = KernelParams::new(vec![0.8, 1.2], 1.0, 0.0, KernelFamily::Matern52).unwrap();
        let inputs = vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.5]), pt(&[-0.7, 1.5]), pt(&[2.0, -1.0])];
        let outputs = vec![0.1, 0.9, 0.4, 0.65];
        let ds = GpDataset::new(inputs.clone(), outputs.clone()).unwrap();
        let model = GpModel::new(params, ds).unwrap();
        for (z, y) in inputs.iter().zip(&outputs) {
            let p = model.predict(z).unwrap();
            assert!((p.mean - y).abs() < 1e-8, "mean {} vs {y}", p.mean);
            assert!(p.variance <= 1e-8);
        }
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let params = KernelParams::new(vec![0.5, 0.5], 1.3, 1e-4, KernelFamily::Rbf).unwrap();
        let ds = GpDataset::new(vec![pt(&[0.0, 0.0]), pt(&[0.3, 0.1]), pt(&[0.9, -0.2])], vec![0.2, 0.5, 0.8]).unwrap();
        let model = GpModel::new(params, ds.clone()).unwrap();
        let p = model.predict(&pt(&[1e3, -1e3])).unwrap();
        let scale = ds.output_scale();
        assert!((p.mean - ds.output_mean()).abs() < 1e-6);
        assert!((p.variance - 1.3 * scale * scale).abs() < 1e-6);
    }

    #[test]
    fn single_pair_closed_form() {
        // One training point: standardized y is 0 (scale clamps to 1), so the
        // mean is the observation itself; variance is σ_f² - k(q,z)²/(σ_f²+σ_n²+jitter).
        let params = KernelParams::new(vec![1.5], 2.0, 0.1, KernelFamily::Matern52).unwrap();
        let ds = GpDataset::new(vec![pt(&[0.2])], vec![0.7]).unwrap();
        let model = GpModel::new(params.clone(), ds).unwrap();
        let q = pt(&[1.1]);
        let p = model.predict(&q).unwrap();
        let kq = params.kernel(&[1.1], &[0.2]).unwrap();
        let denom = 2.0 + 0.1 + model.jitter();
        assert!((p.mean - 0.7).abs() < 1e-10);
        assert!((p.variance - (2.0 - kq * kq / denom)).abs() < 1e-10);
    }

    #[test]
    fn unit_moment_scaling() {
        let s = InputScaling::unit_moments(&[2.0, -1.0], &[0.5, 3.0]).unwrap();
        let u = s.apply(&pt(&[2.0, -1.0 + 3.0 * 12f64.sqrt()])).unwrap();
        assert!((u.0[0] - 0.5).abs() < 1e-15);
        assert!((u.0[1] - 1.5).abs() < 1e-12);
        assert!(InputScaling::unit_moments(&[0.0], &[0.0]).is_err());
        assert_eq!(InputScaling::identity(2).apply(&pt(&[3.0, 4.0])).unwrap(), pt(&[3.0, 4.0]));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let params = KernelParams::isotropic(1, 1.0, 1.0, 0.0, KernelFamily::Rbf).unwrap();
        assert!(matches!(
            posterior(&params, &GpDataset::empty(), &pt(&[0.0])),
            Err(GpError::InsufficientData { .. })
        ));
    }

    #[test]
    fn duplicate_points_need_jitter_not_failure() {
        let params = KernelParams::isotropic(1, 1.0, 1.0, 0.0, KernelFamily::Rbf).unwrap();
        let ds = GpDataset::new(vec![pt(&[0.5]), pt(&[0.5])], vec![0.3, 0.3]).unwrap();
        let model = GpModel::new(params, ds).unwrap();
        assert!(model.jitter() > 0.0);
        assert!((model.predict(&pt(&[0.5])).unwrap().mean - 0.3).abs() < 1e-6);
    }
}
