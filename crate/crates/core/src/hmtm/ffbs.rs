//! Forward filtering, backward sampling of the regime path.
//!
//! All recursions run on log probabilities; each step subtracts its maximum
//! before exponentiating.

use nalgebra::DMatrix;
use rand::Rng;

use super::dist::log_sum_exp;
use super::state::{low_rank, ChainState};
use super::Target;
use crate::error::{Error, Result};

/// `Σ_ij log N(b_ij | β + μ_ij, σ²_m)` over all `N²` entries of one layer.
pub fn log_layer_likelihood(state: &ChainState, layer: &DMatrix<f64>, t: usize, m: usize) -> f64 {
    let mu = low_rank(&state.u[m], state.v.row(t).iter().copied());
    gaussian_loglik(layer, &mu, state.beta, state.sigma2[m])
}

pub(crate) fn gaussian_loglik(b: &DMatrix<f64>, mu: &DMatrix<f64>, beta: f64, sigma2: f64) -> f64 {
    let count = b.len() as f64;
    let ssr: f64 = b
        .iter()
        .zip(mu.iter())
        .map(|(x, m)| (x - beta - m).powi(2))
        .sum();
    -0.5 * count * (2.0 * std::f64::consts::PI * sigma2).ln() - ssr / (2.0 * sigma2)
}

/// `T×M` table of layer log-likelihoods under each regime; all zeros when
/// the likelihood is switched off.
pub fn log_likelihood_table(state: &ChainState, target: &Target) -> DMatrix<f64> {
    let (t_len, m_len) = (state.t(), state.n_regimes());
    if !target.has_likelihood() {
        return DMatrix::zeros(t_len, m_len);
    }
    DMatrix::from_fn(t_len, m_len, |t, m| {
        log_layer_likelihood(state, &target.layers()[t], t, m)
    })
}

/// Output of the forward recursion.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `log p(S_t = m | B_1..B_t)`, `T×M`.
    pub log_filtered: DMatrix<f64>,
    /// `log p(B_1..B_T)` with the final regime unrestricted.
    pub log_evidence: f64,
}

impl ForwardPass {
    /// `log p(B_1..B_T, S_T = M)`.
    pub fn log_evidence_terminal(&self) -> f64 {
        let (t, m) = self.log_filtered.shape();
        self.log_evidence + self.log_filtered[(t - 1, m - 1)]
    }
}

/// Predict-update recursion from `π₀ = (1, 0, …, 0)`.
pub fn forward_filter(log_lik: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<ForwardPass> {
    let (t_len, m_len) = log_lik.shape();
    let log_p = p.map(f64::ln);
    let mut log_filtered = DMatrix::from_element(t_len, m_len, f64::NEG_INFINITY);
    let mut log_evidence = 0.0;
    let mut pred = vec![f64::NEG_INFINITY; m_len];
    pred[0] = 0.0;
    for t in 0..t_len {
        if t > 0 {
            for (m, slot) in pred.iter_mut().enumerate() {
                *slot = log_sum_exp((0..m_len).map(|k| log_filtered[(t - 1, k)] + log_p[(k, m)]));
            }
        }
        let joint: Vec<f64> = (0..m_len)
            .map(|m| {
                if pred[m] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    pred[m] + log_lik[(t, m)]
                }
            })
            .collect();
        let c = log_sum_exp(joint.iter().copied());
        if !c.is_finite() {
            return Err(Error::numerical(
                "forward filter",
                format!("filtered probabilities degenerate at layer {}", t + 1),
            ));
        }
        log_evidence += c;
        for m in 0..m_len {
            log_filtered[(t, m)] = joint[m] - c;
        }
    }
    Ok(ForwardPass {
        log_filtered,
        log_evidence,
    })
}

fn sample_log_weights<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> Option<usize> {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let probs: Vec<f64> = w.iter().map(|x| (x - max).exp()).collect();
    categorical(&probs, rng)
}

/// Index drawn proportionally to non-negative weights.
pub(crate) fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return Some(k);
            }
            u -= w;
            last = Some(k);
        }
    }
    last
}

/// Draws a path from `p(S | B, S_T = M)` for a fixed likelihood table.
pub fn sample_path<R: Rng + ?Sized>(
    log_lik: &DMatrix<f64>,
    p: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let (t_len, m_len) = log_lik.shape();
    let fwd = forward_filter(log_lik, p)?;
    let log_p = p.map(f64::ln);
    let mut states = vec![0; t_len];
    states[t_len - 1] = m_len - 1;
    for t in (0..t_len - 1).rev() {
        let next = states[t + 1];
        let w: Vec<f64> = (0..m_len)
            .map(|k| fwd.log_filtered[(t, k)] + log_p[(k, next)])
            .collect();
        states[t] = sample_log_weights(&w, rng).ok_or_else(|| {
            Error::numerical(
                "backward sampling",
                format!("no admissible regime at layer {}", t + 1),
            )
        })?;
    }
    Ok(states)
}

/// Step 5: replaces the path with a draw from its full conditional.
pub fn ffbs_sample_states<R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target,
    rng: &mut R,
) -> Result<()> {
    let table = log_likelihood_table(state, target);
    state.states = sample_path(&table, &state.transition, rng)?;
    Ok(())
}

/// Burn-in escape from single-layer regimes: when some regime holds exactly
/// one layer, regime durations are redrawn as `1 + Multinomial(T − M, w)`.
/// Returns whether the path changed.
pub fn perturb_singleton_states<R: Rng + ?Sized>(
    states: &mut [usize],
    n_regimes: usize,
    w_perturb: &[f64],
    rng: &mut R,
    in_burnin: bool,
) -> bool {
    if !in_burnin {
        return false;
    }
    let mut counts = vec![0usize; n_regimes];
    for &s in states.iter() {
        counts[s] += 1;
    }
    if !counts.contains(&1) {
        return false;
    }
    let mut durations = vec![1usize; n_regimes];
    for _ in 0..states.len() - n_regimes {
        let k = categorical(w_perturb, rng).expect("perturbation weights are positive");
        durations[k] += 1;
    }
    let before = states.to_vec();
    let mut t = 0;
    for (m, d) in durations.into_iter().enumerate() {
        for _ in 0..d {
            states[t] = m;
            t += 1;
        }
    }
    before != states
}
