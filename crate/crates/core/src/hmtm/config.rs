use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size and run-length settings of one chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of breaks `k`; the chain has `k + 1` regimes.
    pub n_breaks: usize,
    /// Latent dimension `R`.
    pub latent_dim: usize,
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_breaks: 0,
            latent_dim: 2,
            iterations: 2000,
            burn_in: 1000,
            thin: 1,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn n_regimes(&self) -> usize {
        self.n_breaks + 1
    }

    /// Number of draws kept after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self, n: usize, t: usize) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        if self.latent_dim > n {
            return Err(Error::Config(format!(
                "latent dimension {} exceeds the {n} nodes",
                self.latent_dim
            )));
        }
        if self.n_regimes() > t {
            return Err(Error::Config(format!(
                "{} regimes cannot fit in {t} layers",
                self.n_regimes()
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be shorter than the {} iterations",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }
}

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Inverse-gamma `(u0/2, u1/2)` on latent-position variances.
    pub u0: f64,
    pub u1: f64,
    /// Inverse-gamma `(v0/2, v1/2)` on layer-weight variances.
    pub v0: f64,
    pub v1: f64,
    /// Inverse-gamma `(c0/2, d0/2)` on error variances.
    pub c0: f64,
    pub d0: f64,
    /// Beta shape parameters for the staying probabilities `p_kk`.
    pub a0: f64,
    pub b0: f64,
    /// Normal prior mean and variance of the intercept.
    pub beta_mean: f64,
    pub beta_var: f64,
    pub mu0_u: Vec<f64>,
    pub mu0_v: Vec<f64>,
    /// Positive duration weights used to re-sample regimes during burn-in.
    pub w_perturb: Vec<f64>,
}

impl HyperParams {
    pub fn defaults(latent_dim: usize, n_regimes: usize) -> Self {
        HyperParams {
            u0: 10.0,
            u1: 1.0,
            v0: 10.0,
            v1: 1.0,
            c0: 2.0,
            d0: 2.0,
            a0: 9.0,
            b0: 1.0,
            beta_mean: 0.0,
            beta_var: 1.0,
            mu0_u: vec![0.0; latent_dim],
            mu0_v: vec![0.0; latent_dim],
            w_perturb: vec![1.0; n_regimes],
        }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let positive = [
            ("u0", self.u0),
            ("u1", self.u1),
            ("v0", self.v0),
            ("v1", self.v1),
            ("c0", self.c0),
            ("d0", self.d0),
            ("a0", self.a0),
            ("b0", self.b0),
            ("beta_var", self.beta_var),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if !self.beta_mean.is_finite() {
            return Err(Error::Config("beta_mean must be finite".into()));
        }
        let r = config.latent_dim;
        if self.mu0_u.len() != r || self.mu0_v.len() != r {
            return Err(Error::Config(format!("prior means must have length {r}")));
        }
        if self.w_perturb.len() != config.n_regimes() {
            return Err(Error::Config(format!(
                "w_perturb must have one weight per regime ({})",
                config.n_regimes()
            )));
        }
        if self.w_perturb.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Config("w_perturb weights must be positive".into()));
        }
        Ok(())
    }

    /// Shape of the staying-probability prior that the transition update is
    /// conjugate to (`a0` counts the first period of each regime).
    pub fn effective_stay_shape(&self) -> f64 {
        (self.a0 - 1.0).max(super::conditionals::BETA_SHAPE_FLOOR)
    }
}
