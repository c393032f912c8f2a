use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use super::conditionals::{
    sample_beta, sample_latent_positions, sample_latent_weights, sample_sigma2,
    sample_transition_matrix,
};
use super::dist::std_normal;
use super::ffbs::{ffbs_sample_states, log_layer_likelihood, perturb_singleton_states};
use super::gram::{canonical_signs, gram_schmidt};
use super::state::{low_rank, ChainState};
use super::{HyperParams, ModelConfig, Target};
use crate::error::{Error, Result};

/// Contiguous partition of the layers into `m` regimes minimizing the total
/// squared deviation of each layer from its segment's mean layer. Exact
/// dynamic program; ties go to the earliest change.
pub fn least_squares_partition(layers: &[DMatrix<f64>], m: usize) -> Vec<usize> {
    let t_len = layers.len();
    assert!(m >= 1 && m <= t_len, "need 1 <= m <= T");
    let n = layers[0].nrows();
    let mut sums = vec![DMatrix::<f64>::zeros(n, n)];
    let mut sq = vec![0.0];
    for b in layers {
        sums.push(sums.last().unwrap() + b);
        sq.push(sq.last().unwrap() + b.norm_squared());
    }
    // cost[a][b]: layers a..b (half-open)
    let mut cost = vec![vec![0.0; t_len + 1]; t_len + 1];
    for a in 0..t_len {
        for b in (a + 1)..=t_len {
            let s = &sums[b] - &sums[a];
            cost[a][b] = sq[b] - sq[a] - s.norm_squared() / (b - a) as f64;
        }
    }
    let mut best = vec![vec![f64::INFINITY; t_len + 1]; m + 1];
    let mut from = vec![vec![0usize; t_len + 1]; m + 1];
    best[0][0] = 0.0;
    for k in 1..=m {
        for b in k..=t_len {
            for a in (k - 1)..b {
                let c = best[k - 1][a] + cost[a][b];
                if c < best[k][b] {
                    best[k][b] = c;
                    from[k][b] = a;
                }
            }
        }
    }
    let mut states = vec![0; t_len];
    let mut b = t_len;
    for k in (1..=m).rev() {
        let a = from[k][b];
        states[a..b].iter_mut().for_each(|s| *s = k - 1);
        b = a;
    }
    states
}

/// Transition matrix at the prior mean of each staying probability.
pub fn prior_mean_transition(m: usize, hyper: &HyperParams) -> DMatrix<f64> {
    let stay = hyper.a0 / (hyper.a0 + hyper.b0);
    let mut p = DMatrix::zeros(m, m);
    for k in 0..m - 1 {
        p[(k, k)] = stay;
        p[(k, k + 1)] = 1.0 - stay;
    }
    p[(m - 1, m - 1)] = 1.0;
    p
}

/// Starting point of a chain: the [`least_squares_partition`] of the layers,
/// `β` at the grand mean, latent positions from the leading eigenvectors of
/// each block's centered mean layer, and residual variances.
pub fn init_chain<R: Rng + ?Sized>(
    config: &ModelConfig,
    hyper: &HyperParams,
    target: &Target,
    rng: &mut R,
) -> Result<ChainState> {
    let (n, t_len) = (target.n(), target.t());
    config.validate(n, t_len)?;
    hyper.validate(config)?;
    let m_len = config.n_regimes();
    let r = config.latent_dim;
    let states = least_squares_partition(target.layers(), m_len);
    let beta = target.layers().iter().map(|b| b.sum()).sum::<f64>() / (n * n * t_len) as f64;

    let mut u = Vec::with_capacity(m_len);
    let mut v = DMatrix::zeros(t_len, r);
    for m in 0..m_len {
        let block: Vec<usize> = (0..t_len).filter(|&t| states[t] == m).collect();
        let mut mean = DMatrix::zeros(n, n);
        for &t in &block {
            mean += &target.layers()[t];
        }
        mean /= block.len() as f64;
        mean.add_scalar_mut(-beta);
        let eig = SymmetricEigen::new(mean.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .abs()
                .total_cmp(&eig.eigenvalues[a].abs())
        });
        let floor = 1e-10 * mean.amax().max(1e-300);
        let mut um = DMatrix::zeros(n, r);
        let mut signs = vec![1.0; r];
        for (k, &idx) in order.iter().take(r).enumerate() {
            let lambda = eig.eigenvalues[idx];
            if lambda.abs() > floor {
                um.set_column(k, &(eig.eigenvectors.column(idx) * lambda.abs().sqrt()));
                signs[k] = lambda.signum();
            } else {
                // flat block: small random column, orthogonalized below
                let col = DVector::from_fn(n, |_, _| 0.1 * std_normal(rng));
                um.set_column(k, &col);
            }
        }
        let mut um = gram_schmidt(&um)?;
        canonical_signs(&mut um);
        for &t in &block {
            for k in 0..r {
                v[(t, k)] = signs[k];
            }
        }
        u.push(um);
    }

    let mut mu_u = Vec::with_capacity(m_len);
    let mut psi_u = Vec::with_capacity(m_len);
    let mut mu_v = Vec::with_capacity(m_len);
    let mut psi_v = Vec::with_capacity(m_len);
    let mut sigma2 = Vec::with_capacity(m_len);
    let scale = target
        .layers()
        .iter()
        .map(|b| b.norm_squared())
        .sum::<f64>()
        / (n * n * t_len) as f64;
    for m in 0..m_len {
        let block: Vec<usize> = (0..t_len).filter(|&t| states[t] == m).collect();
        let um = &u[m];
        mu_u.push(DVector::from_fn(r, |k, _| um.column(k).sum() / n as f64));
        psi_u.push(DVector::from_fn(r, |k, _| {
            (um.column(k).norm_squared() + hyper.u1) / (hyper.u0 + n as f64)
        }));
        let tm = block.len() as f64;
        mu_v.push(DVector::from_fn(r, |k, _| block.iter().map(|&t| v[(t, k)]).sum::<f64>() / tm));
        psi_v.push(DVector::from_fn(r, |k, _| {
            (block.iter().map(|&t| v[(t, k)].powi(2)).sum::<f64>() + hyper.v1) / (hyper.v0 + tm)
        }));
        let mut ssr = 0.0;
        for &t in &block {
            let e = (&target.layers()[t] - low_rank(um, v.row(t).iter().copied())).add_scalar(-beta);
            ssr += e.norm_squared();
        }
        let var = ssr / (n * n * block.len()) as f64;
        sigma2.push(var.max(1e-8 * scale).max(1e-12));
    }

    let state = ChainState {
        u,
        v,
        mu_u,
        psi_u,
        mu_v,
        psi_v,
        beta,
        sigma2,
        states,
        transition: prior_mean_transition(m_len, hyper),
    };
    state.check()?;
    Ok(state)
}

/// One full sweep: latent positions and weights per regime, intercept, error
/// variances, regime path (with the burn-in escape from singleton regimes),
/// transition matrix.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target,
    hyper: &HyperParams,
    rng: &mut R,
    in_burnin: bool,
) -> Result<()> {
    let m_len = state.n_regimes();
    for m in 0..m_len {
        sample_latent_positions(state, target, m, hyper, rng)?;
    }
    for m in 0..m_len {
        sample_latent_weights(state, target, m, hyper, rng)?;
    }
    sample_beta(state, target, hyper, rng)?;
    for m in 0..m_len {
        sample_sigma2(state, target, m, hyper, rng)?;
    }
    ffbs_sample_states(state, target, rng)?;
    perturb_singleton_states(&mut state.states, m_len, &hyper.w_perturb, rng, in_burnin);
    state.transition = sample_transition_matrix(&state.states, m_len, hyper, rng)?;
    state.check()
}

/// Log-likelihood of all layers along the current path.
pub fn path_loglik(state: &ChainState, target: &Target) -> f64 {
    target
        .layers()
        .iter()
        .enumerate()
        .map(|(t, b)| log_layer_likelihood(state, b, t, state.states[t]))
        .sum()
}

/// Retained draws and their summaries.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub config: ModelConfig,
    pub hyper: HyperParams,
    pub draws: Vec<ChainState>,
    /// Sweep number (1-based) of each retained draw.
    pub draw_iterations: Vec<usize>,
    /// `T×M` share of retained draws placing layer `t` in regime `m`.
    pub state_probs: DMatrix<f64>,
    /// Averages of `U_m` and `V` after aligning the column order and signs of
    /// each draw to the first retained one.
    pub mean_u: Vec<DMatrix<f64>>,
    pub mean_v: DMatrix<f64>,
    /// Posterior mean of `U_m diag(v_t) U_mᵀ` for every regime `m` and layer
    /// `t`, indexed `[m][t]`. Unlike `U` and `V` this is identified.
    pub mean_layers: Vec<Vec<DMatrix<f64>>>,
    /// Path log-likelihood after every sweep, burn-in included.
    pub loglik_trace: Vec<f64>,
}

impl FitResult {
    /// Summaries of a set of retained draws, as produced by [`run_from`].
    pub fn from_draws(
        config: ModelConfig,
        hyper: HyperParams,
        draws: Vec<ChainState>,
        draw_iterations: Vec<usize>,
        loglik_trace: Vec<f64>,
    ) -> Result<Self> {
        let first = draws
            .first()
            .ok_or_else(|| Error::Validation("no retained draws".into()))?;
        if draws.len() != draw_iterations.len() {
            return Err(Error::Validation("one sweep number per draw required".into()));
        }
        let (n, t_len, m_len, r) = (first.n(), first.t(), first.n_regimes(), first.latent_dim());
        if m_len != config.n_regimes() || r != config.latent_dim {
            return Err(Error::Validation("draws do not match the configuration".into()));
        }
        let mut counts = DMatrix::<f64>::zeros(t_len, m_len);
        let mut sum_u = vec![DMatrix::<f64>::zeros(n, r); m_len];
        let mut sum_v = DMatrix::<f64>::zeros(t_len, r);
        let mut sum_layers = vec![vec![DMatrix::<f64>::zeros(n, n); t_len]; m_len];
        let reference = first.u.clone();
        for state in &draws {
            for (t, &m) in state.states.iter().enumerate() {
                counts[(t, m)] += 1.0;
            }
            for (m, per_layer) in sum_layers.iter_mut().enumerate() {
                for (t, acc) in per_layer.iter_mut().enumerate() {
                    *acc += low_rank(&state.u[m], state.v.row(t).iter().copied());
                }
            }
            let (u, v) = aligned(state, &reference);
            for (acc, u) in sum_u.iter_mut().zip(&u) {
                *acc += u;
            }
            sum_v += &v;
        }
        let kept = draws.len() as f64;
        Ok(FitResult {
            config,
            hyper,
            state_probs: counts / kept,
            mean_u: sum_u.into_iter().map(|u| u / kept).collect(),
            mean_v: sum_v / kept,
            mean_layers: sum_layers
                .into_iter()
                .map(|per_layer| per_layer.into_iter().map(|b| b / kept).collect())
                .collect(),
            draws,
            draw_iterations,
            loglik_trace,
        })
    }

    pub fn n_regimes(&self) -> usize {
        self.config.n_regimes()
    }

    pub fn mean_beta(&self) -> f64 {
        self.draws.iter().map(|d| d.beta).sum::<f64>() / self.draws.len() as f64
    }

    pub fn mean_sigma2(&self) -> Vec<f64> {
        let k = self.draws.len() as f64;
        (0..self.n_regimes())
            .map(|m| self.draws.iter().map(|d| d.sigma2[m]).sum::<f64>() / k)
            .collect()
    }

    pub fn mean_transition(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n_regimes(), self.n_regimes());
        for d in &self.draws {
            p += &d.transition;
        }
        p / self.draws.len() as f64
    }

    /// Most probable regime per layer, ties to the lower regime.
    pub fn modal_states(&self) -> Vec<usize> {
        self.state_probs
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for m in 1..row.len() {
                    if row[m] > row[best] {
                        best = m;
                    }
                }
                best
            })
            .collect()
    }

    /// 1-based layers at which a new regime starts along the modal path.
    pub fn modal_breaks(&self) -> Vec<usize> {
        let s = self.modal_states();
        (1..s.len()).filter(|&t| s[t] != s[t - 1]).map(|t| t + 1).collect()
    }

    /// Posterior means arranged as a state, with the modal path.
    pub fn posterior_mean_state(&self) -> ChainState {
        let k = self.draws.len() as f64;
        let avg = |f: &dyn Fn(&ChainState) -> Vec<DVector<f64>>| -> Vec<DVector<f64>> {
            let mut acc = f(&self.draws[0]);
            for d in &self.draws[1..] {
                for (a, x) in acc.iter_mut().zip(f(d)) {
                    *a += x;
                }
            }
            acc.into_iter().map(|a| a / k).collect()
        };
        ChainState {
            u: self.mean_u.clone(),
            v: self.mean_v.clone(),
            mu_u: avg(&|d| d.mu_u.clone()),
            psi_u: avg(&|d| d.psi_u.clone()),
            mu_v: avg(&|d| d.mu_v.clone()),
            psi_v: avg(&|d| d.psi_v.clone()),
            beta: self.mean_beta(),
            sigma2: self.mean_sigma2(),
            states: self.modal_states(),
            transition: self.mean_transition(),
        }
    }
}

/// Runs burn-in and retained sweeps from `init_chain`.
pub fn run_chain<R: Rng + ?Sized>(
    config: &ModelConfig,
    hyper: &HyperParams,
    target: &Target,
    rng: &mut R,
) -> Result<FitResult> {
    let state = init_chain(config, hyper, target, rng)?;
    run_from(state, config, hyper, target, rng)
}

/// Runs the sweeps of `config` starting from a given state.
pub fn run_from<R: Rng + ?Sized>(
    mut state: ChainState,
    config: &ModelConfig,
    hyper: &HyperParams,
    target: &Target,
    rng: &mut R,
) -> Result<FitResult> {
    config.validate(target.n(), target.t())?;
    hyper.validate(config)?;
    if state.n_regimes() != config.n_regimes() || state.t() != target.t() {
        return Err(Error::Validation("starting state does not match the configuration".into()));
    }
    let mut draws = Vec::with_capacity(config.retained());
    let mut draw_iterations = Vec::with_capacity(config.retained());
    let mut loglik_trace = Vec::with_capacity(config.iterations);
    for sweep in 0..config.iterations {
        let in_burnin = sweep < config.burn_in;
        gibbs_sweep(&mut state, target, hyper, rng, in_burnin)?;
        loglik_trace.push(path_loglik(&state, target));
        if !in_burnin && (sweep + 1 - config.burn_in) % config.thin == 0 {
            draws.push(state.clone());
            draw_iterations.push(sweep + 1);
        }
        if (sweep + 1) % 500 == 0 {
            log::debug!(
                "k={} sweep {}/{} loglik {:.3}",
                config.n_breaks,
                sweep + 1,
                config.iterations,
                loglik_trace[sweep]
            );
        }
    }
    FitResult::from_draws(config.clone(), hyper.clone(), draws, draw_iterations, loglik_trace)
}

/// Column order and signs of each `U_m` matched greedily to `reference` by
/// absolute cosine; the weights of the layers in regime `m` follow the same
/// permutation. The reconstruction is unchanged.
fn aligned(state: &ChainState, reference: &[DMatrix<f64>]) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
    let r = state.latent_dim();
    let mut us = Vec::with_capacity(state.n_regimes());
    let mut v = state.v.clone();
    for (m, (u, target)) in state.u.iter().zip(reference).enumerate() {
        let mut used = vec![false; r];
        let mut out = DMatrix::zeros(u.nrows(), r);
        let mut perm = vec![0; r];
        for k in 0..r {
            let rk = target.column(k);
            let mut best = None;
            let mut best_cos = -1.0;
            for j in (0..r).filter(|&j| !used[j]) {
                let uj = u.column(j);
                let cos = rk.dot(&uj).abs() / (rk.norm() * uj.norm()).max(1e-300);
                if cos > best_cos {
                    best_cos = cos;
                    best = Some(j);
                }
            }
            let j = best.expect("a free column remains");
            used[j] = true;
            perm[k] = j;
            let sign = if rk.dot(&u.column(j)) < 0.0 { -1.0 } else { 1.0 };
            out.set_column(k, &(u.column(j) * sign));
        }
        for t in (0..state.t()).filter(|&t| state.states[t] == m) {
            for k in 0..r {
                v[(t, k)] = state.v[(t, perm[k])];
            }
        }
        us.push(out);
    }
    (us, v)
}
