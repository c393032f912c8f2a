//! Small parameterized distributions used by the conditional updates.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Inverse gamma with density `∝ x^{-shape-1} exp(-rate/x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGamma {
    pub shape: f64,
    pub rate: f64,
}

impl InvGamma {
    pub fn new(shape: f64, rate: f64) -> Self {
        InvGamma { shape, rate }
    }

    /// Finite for `shape > 1`.
    pub fn mean(&self) -> f64 {
        self.rate / (self.shape - 1.0)
    }

    /// Finite for `shape > 2`.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        m * m / (self.shape - 2.0)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln()
            - self.rate / x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let g = Gamma::new(self.shape, 1.0 / self.rate).map_err(|e| {
            Error::numerical(
                "inverse-gamma draw",
                format!("shape {} rate {}: {e}", self.shape, self.rate),
            )
        })?;
        let x = 1.0 / g.sample(rng);
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(Error::numerical(
                "inverse-gamma draw",
                format!("draw {x} from IG({}, {})", self.shape, self.rate),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal {
    pub mean: f64,
    pub var: f64,
}

impl Normal {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (2.0 * std::f64::consts::PI * self.var).ln() - d * d / (2.0 * self.var)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.var.sqrt() * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDist {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaDist {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        (self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (1.0 - x).ln()
            - ln_beta(self.alpha, self.beta)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let d = rand_distr::Beta::new(self.alpha, self.beta).map_err(|e| {
            Error::numerical(
                "beta draw",
                format!("Beta({}, {}): {e}", self.alpha, self.beta),
            )
        })?;
        Ok(d.sample(rng))
    }
}

pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `log Σ exp(x)`, `-∞` for an empty or all-`-∞` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
