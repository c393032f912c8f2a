//! Scores for comparing fits with different numbers of breaks.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmtm::dist::{log_sum_exp, BetaDist, InvGamma, Normal};
use crate::hmtm::{
    beta_posterior, chain_rng, forward_filter, sample_path, sample_transition_matrix,
    sigma2_posterior, transition_posterior, ChainState, FitResult, HyperParams, Target,
};
use crate::tensor::io::csv_err;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub k: usize,
    pub loglik: f64,
    pub log_marginal: f64,
    pub waic: f64,
    /// Posterior mean of the mean squared reconstruction residual.
    pub avg_loss: f64,
}

fn ln_normal_entry(x: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - x * x / (2.0 * var)
}

/// Residual layers `B_t − β − μ_t` of one draw along its own path.
fn residuals<'a>(
    state: &'a ChainState,
    target: &'a Target,
) -> impl Iterator<Item = (usize, DMatrix<f64>)> + 'a {
    target.layers().iter().enumerate().map(move |(t, b)| {
        let m = state.states[t];
        (m, (b - state.mean_layer(m, t)).add_scalar(-state.beta))
    })
}

/// Log-likelihood at the posterior-mean parameters along the modal path.
pub fn compute_loglik(fit: &FitResult, target: &Target) -> f64 {
    let sigma2 = fit.mean_sigma2();
    let beta = fit.mean_beta();
    fit.modal_states()
        .iter()
        .enumerate()
        .map(|(t, &m)| {
            let e = (&target.layers()[t] - &fit.mean_layers[m][t]).add_scalar(-beta);
            e.iter().map(|&x| ln_normal_entry(x, sigma2[m])).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
fn state_loglik(state: &ChainState, target: &Target) -> f64 {
    residuals(state, target)
        .map(|(m, e)| e.iter().map(|&x| ln_normal_entry(x, state.sigma2[m])).sum::<f64>())
        .sum()
}

/// Mean over draws of the mean squared residual over all entries.
pub fn compute_avg_loss(fit: &FitResult, target: &Target) -> f64 {
    let entries = target.layers().iter().map(DMatrix::len).sum::<usize>() as f64;
    let total: f64 = fit
        .draws
        .iter()
        .map(|d| residuals(d, target).map(|(_, e)| e.norm_squared()).sum::<f64>() / entries)
        .sum();
    total / fit.draws.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

/// Pointwise WAIC over every entry `(i, j, t)`; `p_waic` uses the sample
/// variance (divisor `S − 1`) of the log densities across draws.
pub fn compute_waic(fit: &FitResult, target: &Target) -> Result<Waic> {
    waic_of_draws(&fit.draws, target)
}

pub fn waic_of_draws(draws: &[ChainState], target: &Target) -> Result<Waic> {
    if draws.len() < 2 {
        return Err(Error::Validation(format!(
            "WAIC needs at least 2 draws, got {}",
            draws.len()
        )));
    }
    let size: usize = target.layers().iter().map(DMatrix::len).sum();
    // running log-sum-exp and Welford moments per entry
    let mut lse_max = vec![f64::NEG_INFINITY; size];
    let mut lse_sum = vec![0.0; size];
    let mut mean = vec![0.0; size];
    let mut m2 = vec![0.0; size];
    for (s, draw) in draws.iter().enumerate() {
        let count = (s + 1) as f64;
        let mut idx = 0;
        for (m, e) in residuals(draw, target) {
            let var = draw.sigma2[m];
            for &x in e.iter() {
                let lp = ln_normal_entry(x, var);
                if lp > lse_max[idx] {
                    lse_sum[idx] = lse_sum[idx] * (lse_max[idx] - lp).exp() + 1.0;
                    lse_max[idx] = lp;
                } else {
                    lse_sum[idx] += (lp - lse_max[idx]).exp();
                }
                let delta = lp - mean[idx];
                mean[idx] += delta / count;
                m2[idx] += delta * (lp - mean[idx]);
                idx += 1;
            }
        }
    }
    let ln_s = (draws.len() as f64).ln();
    let lppd: f64 = (0..size).map(|i| lse_max[i] + lse_sum[i].ln() - ln_s).sum();
    let p_waic: f64 = m2.iter().sum::<f64>() / (draws.len() - 1) as f64;
    Ok(Waic {
        waic: -2.0 * (lppd - p_waic),
        lppd,
        p_waic,
    })
}

/// Settings of the reduced runs behind the posterior ordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalOptions {
    /// Retained iterations per reduced run.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for MarginalOptions {
    fn default() -> Self {
        MarginalOptions {
            iterations: 2000,
            burn_in: 200,
            seed: 1,
        }
    }
}

/// Parameter values at which the marginal likelihood identity is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePoint {
    /// Low-rank part of layer `t` under regime `m`, indexed `[m][t]`.
    pub layers: Vec<Vec<DMatrix<f64>>>,
    pub beta: f64,
    pub sigma2: Vec<f64>,
    pub transition: DMatrix<f64>,
}

impl CandidatePoint {
    pub fn posterior_mean(fit: &FitResult) -> Self {
        CandidatePoint {
            layers: fit.mean_layers.clone(),
            beta: fit.mean_beta(),
            sigma2: fit.mean_sigma2(),
            transition: fit.mean_transition(),
        }
    }
}

/// Terms of `log p(B) ≈ log p(B | θ*) + log p(θ*) − log p̂(θ* | B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMarginal {
    pub value: f64,
    pub loglik: f64,
    pub log_prior: f64,
    pub ordinate_sigma2: f64,
    pub ordinate_beta: f64,
    pub ordinate_transition: f64,
    pub method: String,
}

/// Per-layer residual sufficient statistics with the latent part fixed:
/// `Σ (b − μ)` and `Σ (b − μ)²` for every layer and regime.
struct FixedLatent {
    s1: DMatrix<f64>,
    s2: DMatrix<f64>,
    entries: f64,
}

impl FixedLatent {
    fn new(point: &CandidatePoint, target: &Target) -> Self {
        let (t_len, m_len) = (target.t(), point.layers.len());
        let mut s1 = DMatrix::zeros(t_len, m_len);
        let mut s2 = DMatrix::zeros(t_len, m_len);
        for (t, b) in target.layers().iter().enumerate() {
            for m in 0..m_len {
                let e = b - &point.layers[m][t];
                s1[(t, m)] = e.sum();
                s2[(t, m)] = e.norm_squared();
            }
        }
        let n = target.n() as f64;
        FixedLatent {
            s1,
            s2,
            entries: n * n,
        }
    }

    fn ssr(&self, t: usize, m: usize, beta: f64) -> f64 {
        (self.s2[(t, m)] - 2.0 * beta * self.s1[(t, m)] + self.entries * beta * beta).max(0.0)
    }

    fn table(&self, beta: f64, sigma2: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.s1.nrows(), self.s1.ncols(), |t, m| {
            -0.5 * self.entries * (2.0 * std::f64::consts::PI * sigma2[m]).ln()
                - self.ssr(t, m, beta) / (2.0 * sigma2[m])
        })
    }

    fn sigma2_conditionals(&self, states: &[usize], beta: f64, hyper: &HyperParams) -> Vec<InvGamma> {
        let m_len = self.s1.ncols();
        let n = self.entries.sqrt().round() as usize;
        (0..m_len)
            .map(|m| {
                let layers: Vec<usize> = (0..states.len()).filter(|&t| states[t] == m).collect();
                let ssr = layers.iter().map(|&t| self.ssr(t, m, beta)).sum();
                sigma2_posterior(n, layers.len(), ssr, hyper)
            })
            .collect()
    }

    fn beta_conditional(&self, states: &[usize], sigma2: &[f64], hyper: &HyperParams) -> Normal {
        let mut count = 0.0;
        let mut total = 0.0;
        for (t, &m) in states.iter().enumerate() {
            count += self.entries / sigma2[m];
            total += self.s1[(t, m)] / sigma2[m];
        }
        beta_posterior(count, total, hyper)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Stage {
    Free,
    FixSigma,
    FixSigmaBeta,
}

/// Chib's candidate-point estimate at the posterior means of `fit`.
pub fn compute_log_marginal(
    fit: &FitResult,
    target: &Target,
    hyper: &HyperParams,
    opts: &MarginalOptions,
) -> Result<LogMarginal> {
    log_marginal_at(&CandidatePoint::posterior_mean(fit), target, hyper, opts)
}

/// Chib's identity with the low-rank layer means held at the candidate
/// point. The likelihood sums over paths ending in the last regime
/// with the forward recursion; the posterior ordinate of `(σ², β, P)` is
/// built from three reduced Gibbs runs.
pub fn log_marginal_at(
    point: &CandidatePoint,
    target: &Target,
    hyper: &HyperParams,
    opts: &MarginalOptions,
) -> Result<LogMarginal> {
    if opts.iterations == 0 {
        return Err(Error::Config("marginal likelihood needs at least one iteration".into()));
    }
    let m_len = point.layers.len();
    let fixed = FixedLatent::new(point, target);
    let table = fixed.table(point.beta, &point.sigma2);
    let loglik = forward_filter(&table, &point.transition)?.log_evidence_terminal();

    let stay_prior = BetaDist {
        alpha: hyper.effective_stay_shape(),
        beta: hyper.b0,
    };
    let sigma_prior = InvGamma::new(hyper.c0 / 2.0, hyper.d0 / 2.0);
    let beta_prior = Normal {
        mean: hyper.beta_mean,
        var: hyper.beta_var,
    };
    let log_prior = point.sigma2.iter().map(|&s| sigma_prior.ln_pdf(s)).sum::<f64>()
        + beta_prior.ln_pdf(point.beta)
        + (0..m_len - 1)
            .map(|k| stay_prior.ln_pdf(point.transition[(k, k)]))
            .sum::<f64>();

    let mut rng = chain_rng(opts.seed);
    let ordinate_sigma2 = reduced_run(Stage::Free, point, &fixed, hyper, opts, &mut rng)?;
    let ordinate_beta = reduced_run(Stage::FixSigma, point, &fixed, hyper, opts, &mut rng)?;
    let ordinate_transition = reduced_run(Stage::FixSigmaBeta, point, &fixed, hyper, opts, &mut rng)?;

    for (name, v) in [
        ("likelihood", loglik),
        ("prior", log_prior),
        ("sigma2 ordinate", ordinate_sigma2),
        ("beta ordinate", ordinate_beta),
        ("transition ordinate", ordinate_transition),
    ] {
        if !v.is_finite() {
            return Err(Error::numerical("log marginal", format!("{name} term is {v}")));
        }
    }
    Ok(LogMarginal {
        value: loglik + log_prior - ordinate_sigma2 - ordinate_beta - ordinate_transition,
        loglik,
        log_prior,
        ordinate_sigma2,
        ordinate_beta,
        ordinate_transition,
        method: "chib-candidate-point (low-rank layer means fixed at their posterior means)"
            .into(),
    })
}

/// Runs one reduced chain and returns the log of the averaged conditional
/// density of the block being estimated.
fn reduced_run<R: Rng + ?Sized>(
    stage: Stage,
    point: &CandidatePoint,
    fixed: &FixedLatent,
    hyper: &HyperParams,
    opts: &MarginalOptions,
    rng: &mut R,
) -> Result<f64> {
    let m_len = point.layers.len();
    let mut beta = point.beta;
    let mut sigma2 = point.sigma2.clone();
    let mut p = point.transition.clone();
    let mut states = sample_path(&fixed.table(beta, &sigma2), &p, rng)?;
    let mut values = Vec::with_capacity(opts.iterations);
    for it in 0..opts.burn_in + opts.iterations {
        if stage == Stage::Free {
            for (m, d) in fixed.sigma2_conditionals(&states, beta, hyper).iter().enumerate() {
                sigma2[m] = d.sample(rng)?;
            }
        }
        if stage != Stage::FixSigmaBeta {
            beta = fixed.beta_conditional(&states, &sigma2, hyper).sample(rng);
        }
        states = sample_path(&fixed.table(beta, &sigma2), &p, rng)?;
        p = sample_transition_matrix(&states, m_len, hyper, rng)?;
        if it < opts.burn_in {
            continue;
        }
        let value = match stage {
            Stage::Free => fixed
                .sigma2_conditionals(&states, beta, hyper)
                .iter()
                .zip(&point.sigma2)
                .map(|(d, &s)| d.ln_pdf(s))
                .sum(),
            Stage::FixSigma => fixed.beta_conditional(&states, &sigma2, hyper).ln_pdf(point.beta),
            Stage::FixSigmaBeta => transition_posterior(&states, m_len, hyper)
                .iter()
                .enumerate()
                .map(|(k, d)| d.ln_pdf(point.transition[(k, k)]))
                .sum(),
        };
        values.push(value);
    }
    Ok(log_sum_exp(values.iter().copied()) - (values.len() as f64).ln())
}

/// Break counts at which the log marginal likelihood rises into and falls
/// out of: `lm(k) − lm(k−1) > 0` and `lm(k+1) − lm(k) < 0`.
pub fn kink_candidates(ks: &[usize], log_marginals: &[f64]) -> Vec<usize> {
    (1..log_marginals.len().saturating_sub(1))
        .filter(|&i| {
            log_marginals[i] - log_marginals[i - 1] > 0.0
                && log_marginals[i + 1] - log_marginals[i] < 0.0
        })
        .map(|i| ks[i])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakSelection {
    /// Break count with the smallest WAIC.
    pub selected: usize,
    pub kinks: Vec<usize>,
    pub warning: Option<String>,
}

/// WAIC-minimizing break count (ties to the smaller `k`) with the kink report
/// of the log marginal likelihoods.
pub fn detect_break_number(scores: &[ModelScore]) -> Result<BreakSelection> {
    if scores.len() < 3 {
        return Err(Error::Validation(format!(
            "break detection needs at least 3 scored models, got {}",
            scores.len()
        )));
    }
    if scores.windows(2).any(|w| w[1].k <= w[0].k) {
        return Err(Error::Validation("scores must be sorted by strictly increasing k".into()));
    }
    if scores.iter().any(|s| !s.waic.is_finite() || !s.log_marginal.is_finite()) {
        return Err(Error::Validation("scores must be finite".into()));
    }
    let mut best = &scores[0];
    for s in &scores[1..] {
        if s.waic < best.waic {
            best = s;
        }
    }
    let ks: Vec<usize> = scores.iter().map(|s| s.k).collect();
    let lm: Vec<f64> = scores.iter().map(|s| s.log_marginal).collect();
    let kinks = kink_candidates(&ks, &lm);
    let warning = kinks
        .is_empty()
        .then(|| "no kink in the log marginal likelihoods".to_string());
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(BreakSelection {
        selected: best.k,
        kinks,
        warning,
    })
}

/// All four scores of one fit.
pub fn score_fit(
    fit: &FitResult,
    target: &Target,
    opts: &MarginalOptions,
) -> Result<ModelScore> {
    Ok(ModelScore {
        k: fit.config.n_breaks,
        loglik: compute_loglik(fit, target),
        log_marginal: compute_log_marginal(fit, target, &fit.hyper, opts)?.value,
        waic: compute_waic(fit, target)?.waic,
        avg_loss: compute_avg_loss(fit, target),
    })
}

pub fn write_scores_csv(path: &Path, scores: &[ModelScore]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for s in scores {
        w.serialize(s).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ModelScore>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|rec| rec.map_err(|e| csv_err(path, e)))
        .collect()
}
