use serde::{Deserialize, Serialize};

use super::GpError;

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Matern52,
    Rbf,
}

impl KernelFamily {
    /// Unit-variance correlation as a function of the scaled squared distance.
    pub(crate) fn correlation(self, sq_dist: f64) -> f64 {
        match self {
            KernelFamily::Rbf => (-0.5 * sq_dist).exp(),
            KernelFamily::Matern52 => {
                let r = sq_dist.sqrt();
                (1.0 + SQRT5 * r + 5.0 / 3.0 * sq_dist) * (-SQRT5 * r).exp()
            }
        }
    }

    /// Derivative of [`KernelFamily::correlation`] with respect to the scaled
    /// squared distance.
    pub(crate) fn correlation_grad(self, sq_dist: f64) -> f64 {
        match self {
            KernelFamily::Rbf => -0.5 * (-0.5 * sq_dist).exp(),
            KernelFamily::Matern52 => {
                let r = sq_dist.sqrt();
                -5.0 / 6.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
            }
        }
    }
}

/// Stationary ARD kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    lengthscales: Vec<f64>,
    signal_variance: f64,
    noise_variance: f64,
    family: KernelFamily,
}

impl KernelParams {
    pub fn new(
        lengthscales: Vec<f64>,
        signal_variance: f64,
        noise_variance: f64,
        family: KernelFamily,
    ) -> Result<Self, GpError> {
        if lengthscales.is_empty() {
            return Err(GpError::InvalidParams("no lengthscales".into()));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(GpError::InvalidParams(format!("lengthscale {l} is not positive")));
        }
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(GpError::InvalidParams(format!(
                "signal variance {signal_variance} is not positive"
            )));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(GpError::InvalidParams(format!(
                "noise variance {noise_variance} is negative"
            )));
        }
        Ok(Self {
            lengthscales,
            signal_variance,
            noise_variance,
            family,
        })
    }

    /// Same value for every lengthscale.
    pub fn isotropic(
        dim: usize,
        lengthscale: f64,
        signal_variance: f64,
        noise_variance: f64,
        family: KernelFamily,
    ) -> Result<Self, GpError> {
        Self::new(vec![lengthscale; dim], signal_variance, noise_variance, family)
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `Σ (z_i - z'_i)² / l_i²`.
    pub fn scaled_sq_dist(&self, z: &[f64], z2: &[f64]) -> Result<f64, GpError> {
        self.check_dim(z.len())?;
        self.check_dim(z2.len())?;
        Ok(self.scaled_sq_dist_unchecked(z, z2))
    }

    pub(crate) fn scaled_sq_dist_unchecked(&self, z: &[f64], z2: &[f64]) -> f64 {
        z.iter()
            .zip(z2)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let t = (a - b) / l;
                t * t
            })
            .sum()
    }

    pub(crate) fn check_dim(&self, actual: usize) -> Result<(), GpError> {
        if actual != self.dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.dim(),
                actual,
            });
        }
        Ok(())
    }

    /// Covariance `k(z, z')`.
    pub fn kernel(&self, z: &[f64], z2: &[f64]) -> Result<f64, GpError> {
        Ok(self.signal_variance * self.family.correlation(self.scaled_sq_dist(z, z2)?))
    }

    pub(crate) fn kernel_unchecked(&self, z: &[f64], z2: &[f64]) -> f64 {
        self.signal_variance * self.family.correlation(self.scaled_sq_dist_unchecked(z, z2))
    }
}

/// Free-function form of [`KernelParams::kernel`].
pub fn kernel_eval(params: &KernelParams, z: &[f64], z2: &[f64]) -> Result<f64, GpError> {
    params.kernel(z, z2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_gives_signal_variance() {
        for family in [KernelFamily::Matern52, KernelFamily::Rbf] {
            let p = KernelParams::new(vec![0.5, 2.0], 1.7, 0.0, family).unwrap();
            assert_eq!(p.kernel(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.7);
        }
    }

    #[test]
    fn matern52_unit_distance() {
        // (1 + √5 + 5/3)·exp(-√5) = 0.5239941...
        let p = KernelParams::isotropic(1, 1.0, 1.0, 0.0, KernelFamily::Matern52).unwrap();
        let v = p.kernel(&[0.0], &[1.0]).unwrap();
        let closed = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        assert!((v - closed).abs() < 1e-15);
        assert!((v - 0.52400).abs() < 1e-5);
    }

    #[test]
    fn rbf_closed_form() {
        let p = KernelParams::new(vec![2.0, 1.0], 3.0, 0.0, KernelFamily::Rbf).unwrap();
        // d = (2/2)² + (1/1)² = 2
        let v = p.kernel(&[2.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!((v - 3.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_is_symmetric_and_bounded() {
        let p = KernelParams::new(vec![0.7, 1.3, 0.2], 2.0, 0.1, KernelFamily::Matern52).unwrap();
        let a = [0.1, 0.5, -0.4];
        let b = [1.1, -0.5, 0.3];
        let ab = p.kernel(&a, &b).unwrap();
        assert_eq!(ab, p.kernel(&b, &a).unwrap());
        assert!(ab > 0.0 && ab <= 2.0);
    }

    #[test]
    fn correlation_gradients_match_finite_differences() {
        for family in [KernelFamily::Matern52, KernelFamily::Rbf] {
            for s in [1e-3, 0.3, 1.0, 4.0, 25.0] {
                let h = 1e-6 * s;
                let fd = (family.correlation(s + h) - family.correlation(s - h)) / (2.0 * h);
                let an = family.correlation_grad(s);
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-8), "{family:?} s={s}");
            }
        }
    }

    #[test]
    fn invalid_params_and_dims() {
        assert!(KernelParams::new(vec![0.0], 1.0, 0.0, KernelFamily::Rbf).is_err());
        assert!(KernelParams::new(vec![1.0], 0.0, 0.0, KernelFamily::Rbf).is_err());
        assert!(KernelParams::new(vec![1.0], 1.0, -1e-9, KernelFamily::Rbf).is_err());
        let p = KernelParams::isotropic(2, 1.0, 1.0, 0.0, KernelFamily::Rbf).unwrap();
        assert!(matches!(
            p.kernel(&[0.0], &[0.0, 1.0]),
            Err(GpError::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }
}
