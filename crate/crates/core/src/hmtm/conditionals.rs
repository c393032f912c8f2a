//! Full conditional updates of one Gibbs sweep.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::dist::{std_normal, BetaDist, InvGamma, Normal};
use super::gram::{canonical_signs, gram_schmidt};
use super::state::{low_rank, regime_layers, ChainState};
use super::HyperParams;
use crate::error::{Error, Result};
use crate::tensor::CorrectedTensor;

/// Smallest shape parameter handed to a Beta draw.
pub const BETA_SHAPE_FLOOR: f64 = 1e-3;

/// The observed layers a sweep conditions on. With the likelihood switched
/// off every update reduces to its prior, which is what prior-reproduction
/// checks run against.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    layers: &'a [DMatrix<f64>],
    likelihood: bool,
}

impl<'a> Target<'a> {
    pub fn new(tensor: &'a CorrectedTensor) -> Self {
        Target::from_layers(tensor.layers())
    }

    pub fn from_layers(layers: &'a [DMatrix<f64>]) -> Self {
        Target {
            layers,
            likelihood: true,
        }
    }

    pub fn prior_only(self) -> Self {
        Target {
            likelihood: false,
            ..self
        }
    }

    pub fn layers(&self) -> &'a [DMatrix<f64>] {
        self.layers
    }

    pub fn has_likelihood(&self) -> bool {
        self.likelihood
    }

    pub fn n(&self) -> usize {
        self.layers.first().map_or(0, DMatrix::nrows)
    }

    pub fn t(&self) -> usize {
        self.layers.len()
    }
}

pub fn psi_u_posterior(n: usize, col_ss: f64, hyper: &HyperParams) -> InvGamma {
    InvGamma::new((hyper.u0 + n as f64) / 2.0, (col_ss + hyper.u1) / 2.0)
}

pub fn psi_v_posterior(t_m: usize, col_ss: f64, hyper: &HyperParams) -> InvGamma {
    InvGamma::new((hyper.v0 + t_m as f64) / 2.0, (col_ss + hyper.v1) / 2.0)
}

/// Independent normals for a regime mean given `count` rows summing to
/// `col_sum`: mean `(col_sum + μ0)/(count + 1)`, variance `ψ/(count + 1)`.
pub fn mu_posterior(col_sum: &[f64], prior_mean: &[f64], count: usize, psi: &[f64]) -> Vec<Normal> {
    let k = (count + 1) as f64;
    col_sum
        .iter()
        .zip(prior_mean)
        .zip(psi)
        .map(|((s, m0), p)| Normal {
            mean: (s + m0) / k,
            var: p / k,
        })
        .collect()
}

/// `Σ_{m} σ_m⁻² N² T_m` and `Σ_m σ_m⁻² Σ residual` define the intercept's
/// normal conditional.
pub fn beta_posterior(
    weighted_count: f64,
    weighted_resid_sum: f64,
    hyper: &HyperParams,
) -> Normal {
    let var = 1.0 / (1.0 / hyper.beta_var + weighted_count);
    Normal {
        mean: var * (hyper.beta_mean / hyper.beta_var + weighted_resid_sum),
        var,
    }
}

pub fn sigma2_posterior(n: usize, t_m: usize, ssr: f64, hyper: &HyperParams) -> InvGamma {
    let count = (n * n * t_m) as f64;
    InvGamma::new((hyper.c0 + count) / 2.0, (hyper.d0 + ssr) / 2.0)
}

/// Beta conditionals of the staying probabilities `p_kk`, `k < M-1`.
pub fn transition_posterior(states: &[usize], m: usize, hyper: &HyperParams) -> Vec<BetaDist> {
    let mut stay = vec![0usize; m];
    let mut jump = vec![0usize; m];
    for w in states.windows(2) {
        if w[0] == w[1] {
            stay[w[0]] += 1;
        } else {
            jump[w[0]] += 1;
        }
    }
    (0..m.saturating_sub(1))
        .map(|k| {
            let mut alpha = hyper.a0 + stay[k] as f64 - 1.0;
            if alpha <= 0.0 {
                log::warn!(
                    "Beta shape {alpha} for regime {} clamped to {BETA_SHAPE_FLOOR}",
                    k + 1
                );
                alpha = BETA_SHAPE_FLOOR;
            }
            BetaDist {
                alpha,
                beta: hyper.b0 + jump[k] as f64,
            }
        })
        .collect()
}

fn regime(state: &ChainState, m: usize, what: &str) -> Result<Vec<usize>> {
    let layers: Vec<usize> = (0..state.t()).filter(|&t| state.states[t] == m).collect();
    if layers.is_empty() {
        return Err(Error::numerical(
            "gibbs",
            format!("{what}: regime {} holds no layers", m + 1),
        ));
    }
    Ok(layers)
}

fn col_sums(x: &DMatrix<f64>, rows: impl Iterator<Item = usize> + Clone) -> Vec<f64> {
    (0..x.ncols())
        .map(|r| rows.clone().map(|i| x[(i, r)]).sum())
        .collect()
}

fn col_ss(x: &DMatrix<f64>, rows: impl Iterator<Item = usize> + Clone) -> Vec<f64> {
    (0..x.ncols())
        .map(|r| rows.clone().map(|i| x[(i, r)] * x[(i, r)]).sum())
        .collect()
}

fn factor(precision: DMatrix<f64>, stage: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(precision.clone()).ok_or_else(|| {
        let eig = precision.symmetric_eigenvalues();
        let cond = eig.amax() / eig.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
        Error::numerical(
            stage,
            format!("posterior precision not positive definite (condition estimate {cond:e})"),
        )
    })
}

/// Rows `mean_i + L⁻ᵀ z_i` for `Λ = L Lᵀ`, i.e. rows distributed
/// `N(mean_i, Λ⁻¹)`.
fn draw_rows<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    chol: &Cholesky<f64, Dyn>,
    rng: &mut R,
) -> DMatrix<f64> {
    let (n, r) = mean.shape();
    let mut zt = DMatrix::zeros(r, n);
    for i in 0..n {
        for k in 0..r {
            zt[(k, i)] = std_normal(rng);
        }
    }
    let lt = chol.l().transpose();
    let x = lt
        .solve_upper_triangular(&zt)
        .expect("Cholesky factor has a positive diagonal");
    mean + x.transpose()
}

/// Step 1 for regime `m`: `ψ_u`, then `μ_u`, then `U_m` as one matrix-normal
/// draw, followed by Gram-Schmidt and column sign canonicalization.
pub fn sample_latent_positions<R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target,
    m: usize,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let layers = regime(state, m, "latent positions")?;
    let n = state.n();
    let r = state.latent_dim();

    let ss = col_ss(&state.u[m], 0..n);
    let psi: Vec<f64> = ss
        .iter()
        .map(|&s| psi_u_posterior(n, s, hyper).sample(rng))
        .collect::<Result<_>>()?;
    let sums = col_sums(&state.u[m], 0..n);
    let mu: Vec<f64> = mu_posterior(&sums, &hyper.mu0_u, n, &psi)
        .iter()
        .map(|d| d.sample(rng))
        .collect();

    let u = &state.u[m];
    let sigma2 = state.sigma2[m];
    let mut precision = DMatrix::from_diagonal(&DVector::from_iterator(r, psi.iter().map(|p| 1.0 / p)));
    let mut rhs = DMatrix::from_fn(n, r, |_, k| mu[k] / psi[k]);
    if target.has_likelihood() {
        let mut vv = DMatrix::zeros(r, r);
        let mut l = DMatrix::zeros(n, r);
        for &t in &layers {
            let v_t = state.v.row(t).transpose();
            vv += &v_t * v_t.transpose();
            let mut uv = u.clone();
            for k in 0..r {
                uv.column_mut(k).scale_mut(v_t[k]);
            }
            let centred = target.layers()[t].add_scalar(-state.beta);
            l += centred * uv;
        }
        let q = (u.transpose() * u).component_mul(&vv);
        precision += q / sigma2;
        rhs += l / sigma2;
    }
    let chol = factor(precision, "latent positions")?;
    let mean = chol.solve(&rhs.transpose()).transpose();
    let draw = draw_rows(&mean, &chol, rng);

    let mut u_new = gram_schmidt(&draw)?;
    let flips = canonical_signs(&mut u_new);
    let mut mu = mu;
    for (k, flip) in flips.into_iter().enumerate() {
        if flip {
            mu[k] = -mu[k];
        }
    }
    state.u[m] = u_new;
    state.psi_u[m] = DVector::from_vec(psi);
    state.mu_u[m] = DVector::from_vec(mu);
    Ok(())
}

/// Step 2 for regime `m`: `ψ_v`, `μ_v`, then the rows of `V` in the regime.
pub fn sample_latent_weights<R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target,
    m: usize,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let layers = regime(state, m, "layer weights")?;
    let r = state.latent_dim();
    let t_m = layers.len();

    let ss = col_ss(&state.v, layers.iter().copied());
    let psi: Vec<f64> = ss
        .iter()
        .map(|&s| psi_v_posterior(t_m, s, hyper).sample(rng))
        .collect::<Result<_>>()?;
    let sums = col_sums(&state.v, layers.iter().copied());
    let mu: Vec<f64> = mu_posterior(&sums, &hyper.mu0_v, t_m, &psi)
        .iter()
        .map(|d| d.sample(rng))
        .collect();

    let u = &state.u[m];
    let sigma2 = state.sigma2[m];
    let mut precision = DMatrix::from_diagonal(&DVector::from_iterator(r, psi.iter().map(|p| 1.0 / p)));
    let prior_rhs = DVector::from_iterator(r, (0..r).map(|k| mu[k] / psi[k]));
    let mut rhs = DMatrix::from_fn(t_m, r, |_, k| prior_rhs[k]);
    if target.has_likelihood() {
        let g = u.transpose() * u;
        precision += g.component_mul(&g) / sigma2;
        let col_totals: Vec<f64> = col_sums(u, 0..u.nrows());
        for (row, &t) in layers.iter().enumerate() {
            let w = &target.layers()[t] * u;
            for k in 0..r {
                let quad = u.column(k).dot(&w.column(k)) - state.beta * col_totals[k] * col_totals[k];
                rhs[(row, k)] += quad / sigma2;
            }
        }
    }
    let chol = factor(precision, "layer weights")?;
    let mean = chol.solve(&rhs.transpose()).transpose();
    let draw = draw_rows(&mean, &chol, rng);
    for (row, &t) in layers.iter().enumerate() {
        state.v.set_row(t, &draw.row(row));
    }
    state.psi_v[m] = DVector::from_vec(psi);
    state.mu_v[m] = DVector::from_vec(mu);
    Ok(())
}

/// Per-layer residual sums `Σ (b − μ)` and sums of squares `Σ (b − β − μ)²`
/// under the current path.
fn residual_stats(state: &ChainState, target: &Target) -> (Vec<f64>, Vec<f64>) {
    let mut sums = Vec::with_capacity(state.t());
    let mut squares = Vec::with_capacity(state.t());
    for (t, b) in target.layers().iter().enumerate() {
        let m = state.states[t];
        let e = b - low_rank(&state.u[m], state.v.row(t).iter().copied());
        sums.push(e.sum());
        squares.push(e.iter().map(|x| (x - state.beta).powi(2)).sum());
    }
    (sums, squares)
}

/// Step 3: the global intercept.
pub fn sample_beta<R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let post = if target.has_likelihood() {
        let (sums, _) = residual_stats(state, target);
        let n2 = (state.n() * state.n()) as f64;
        let mut count = 0.0;
        let mut total = 0.0;
        for (t, s) in sums.iter().enumerate() {
            let w = 1.0 / state.sigma2[state.states[t]];
            count += w * n2;
            total += w * s;
        }
        beta_posterior(count, total, hyper)
    } else {
        beta_posterior(0.0, 0.0, hyper)
    };
    state.beta = post.sample(rng);
    Ok(())
}

/// Step 4 for regime `m`.
pub fn sample_sigma2<R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target,
    m: usize,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let layers = regime(state, m, "error variance")?;
    let post = if target.has_likelihood() {
        let mut ssr = 0.0;
        for &t in &layers {
            let e = &target.layers()[t] - low_rank(&state.u[m], state.v.row(t).iter().copied());
            ssr += e.iter().map(|x| (x - state.beta).powi(2)).sum::<f64>();
        }
        sigma2_posterior(state.n(), layers.len(), ssr, hyper)
    } else {
        InvGamma::new(hyper.c0 / 2.0, hyper.d0 / 2.0)
    };
    state.sigma2[m] = post.sample(rng)?;
    Ok(())
}

/// Step 6: staying probabilities from their Beta conditionals.
pub fn sample_transition_matrix<R: Rng + ?Sized>(
    states: &[usize],
    m: usize,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let mut p = DMatrix::zeros(m, m);
    for (k, d) in transition_posterior(states, m, hyper).iter().enumerate() {
        let stay = d.sample(rng)?;
        p[(k, k)] = stay;
        p[(k, k + 1)] = 1.0 - stay;
    }
    p[(m - 1, m - 1)] = 1.0;
    Ok(p)
}

/// Sum of squared residuals of every regime under the current path.
pub fn regime_ssr(state: &ChainState, target: &Target) -> Vec<f64> {
    let (_, squares) = residual_stats(state, target);
    let mut out = vec![0.0; state.n_regimes()];
    for (layers, total) in regime_layers(&state.states, state.n_regimes())
        .iter()
        .zip(out.iter_mut())
    {
        *total = layers.iter().map(|&t| squares[t]).sum();
    }
    out
}
