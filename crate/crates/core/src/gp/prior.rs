use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::GpError;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-normal density parameters on the natural-log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub location: f64,
    pub scale: f64,
}

impl LogNormalPrior {
    pub fn new(location: f64, scale: f64) -> Self {
        assert!(scale > 0.0 && location.is_finite());
        Self { location, scale }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let ln_x = x.ln();
        let t = (ln_x - self.location) / self.scale;
        -ln_x - self.scale.ln() - LN_SQRT_2PI - 0.5 * t * t
    }

    /// `d/dθ log p(e^θ)`, the slope seen by an optimizer working in log space
    /// (density stays on the natural scale).
    pub fn log_density_grad_log(&self, ln_x: f64) -> f64 {
        -1.0 - (ln_x - self.location) / (self.scale * self.scale)
    }

    pub fn median(&self) -> f64 {
        self.location.exp()
    }

    pub fn mode(&self) -> f64 {
        (self.location - self.scale * self.scale).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        LogNormal::new(self.location, self.scale)
            .expect("scale validated at construction")
            .sample(rng)
    }
}

/// Dimensionality-scaled lengthscale prior: `LogNormal(log √D, 1)` where `D`
/// is the GP input dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthscalePrior {
    input_dim: usize,
    density: LogNormalPrior,
}

impl LengthscalePrior {
    pub fn new(input_dim: usize) -> Self {
        assert!(input_dim >= 1, "input dimension must be positive");
        Self {
            input_dim,
            density: LogNormalPrior::new((input_dim as f64).sqrt().ln(), 1.0),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn location(&self) -> f64 {
        self.density.location
    }

    pub fn scale(&self) -> f64 {
        self.density.scale
    }

    pub fn density(&self) -> &LogNormalPrior {
        &self.density
    }

    /// `√D`, where the optimizer's first restart begins.
    pub fn median(&self) -> f64 {
        self.density.median()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.density.sample(rng)
    }
}

/// Sum of per-dimension log-densities.
pub fn log_prior(lengthscales: &[f64], prior: &LengthscalePrior) -> Result<f64, GpError> {
    if let Some(l) = lengthscales.iter().find(|l| l.is_nan() || **l <= 0.0) {
        return Err(GpError::Domain(format!("lengthscale {l} is not positive")));
    }
    Ok(lengthscales.iter().map(|&l| prior.density.log_density(l)).sum())
}
