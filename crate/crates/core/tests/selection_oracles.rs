use kfnet::hmtm::{chain_rng, run_chain, HyperParams, ModelConfig, Target};
use kfnet::selection::{
    compute_log_marginal, detect_break_number, kink_candidates, log_marginal_at, CandidatePoint,
    MarginalOptions, ModelScore,
};
use kfnet::synth::{generate, SynthSpec};
use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

/// `log p(d | σ²)` with the intercept integrated out against its normal prior.
fn log_evidence_given_sigma2(d: &[f64], sigma2: f64, hyper: &HyperParams) -> f64 {
    let n = d.len() as f64;
    let s: f64 = d.iter().sum();
    let ss: f64 = d.iter().map(|x| x * x).sum();
    let (b0, v0) = (hyper.beta_mean, hyper.beta_var);
    let precision = n / sigma2 + 1.0 / v0;
    let lin = s / sigma2 + b0 / v0;
    let tau = 2.0 * std::f64::consts::PI;
    -0.5 * n * (tau * sigma2).ln() - 0.5 * (tau * v0).ln() + 0.5 * (tau / precision).ln()
        + 0.5 * lin * lin / precision
        - 0.5 * (ss / sigma2 + b0 * b0 / v0)
}

/// `log p(d)` by trapezoidal quadrature over `log σ²`.
fn log_evidence(d: &[f64], hyper: &HyperParams) -> f64 {
    let (a, b) = (hyper.c0 / 2.0, hyper.d0 / 2.0);
    let ln_prior = |s2: f64| a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * s2.ln() - b / s2;
    let (lo, hi, steps) = (-8.0f64, 6.0f64, 40_000);
    let h = (hi - lo) / steps as f64;
    let terms: Vec<f64> = (0..=steps)
        .map(|i| {
            let x = lo + h * i as f64;
            let s2 = x.exp();
            let w: f64 = if i == 0 || i == steps { 0.5 } else { 1.0 };
            log_evidence_given_sigma2(d, s2, hyper) + ln_prior(s2) + x + w.ln()
        })
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() + h.ln()
}

#[test]
fn chib_estimate_matches_closed_form_evidence_for_one_regime() {
    let mut rng = chain_rng(12);
    let noise = Normal::new(0.3, 0.5).unwrap();
    let layers: Vec<DMatrix<f64>> = (0..6)
        .map(|_| {
            let mut b = DMatrix::from_fn(4, 4, |_, _| noise.sample(&mut rng));
            b = (&b + b.transpose()) * 0.5;
            b
        })
        .collect();
    let target = Target::from_layers(&layers);
    let hyper = HyperParams::defaults(1, 1);
    let entries: Vec<f64> = layers.iter().flat_map(|b| b.iter().copied()).collect();
    let mean = entries.iter().sum::<f64>() / entries.len() as f64;
    let var = entries.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / entries.len() as f64;

    let point = CandidatePoint {
        layers: vec![vec![DMatrix::zeros(4, 4); 6]],
        beta: mean,
        sigma2: vec![var],
        transition: DMatrix::from_element(1, 1, 1.0),
    };
    let opts = MarginalOptions {
        iterations: 5000,
        burn_in: 200,
        seed: 3,
    };
    let chib = log_marginal_at(&point, &target, &hyper, &opts).unwrap().value;
    let exact = log_evidence(&entries, &hyper);
    assert!((chib - exact).abs() < 0.1, "chib {chib} vs quadrature {exact}");
}

fn fit_scores(layers: &[DMatrix<f64>], ks: &[usize]) -> Vec<f64> {
    let target = Target::from_layers(layers);
    ks.iter()
        .map(|&k| {
            let cfg = ModelConfig {
                n_breaks: k,
                latent_dim: 1,
                iterations: 600,
                burn_in: 300,
                thin: 1,
                seed: 5,
            };
            let fit = run_chain(&cfg, &HyperParams::defaults(1, k + 1), &target, &mut chain_rng(5)).unwrap();
            compute_log_marginal(&fit, &target, &fit.hyper, &MarginalOptions::default())
                .unwrap()
                .value
        })
        .collect()
}

#[test]
fn one_break_data_prefers_one_break_over_none() {
    let spec = SynthSpec::planted(12, 14, 2, vec![8], (2.0, 0.5), 0.5, 4);
    let layers = generate(&spec).unwrap().layers;
    let lm = fit_scores(&layers, &[0, 1]);
    assert!(lm[1] > lm[0], "{lm:?}");
}

#[test]
fn log_marginal_is_deterministic() {
    let spec = SynthSpec::planted(8, 10, 2, vec![5], (2.0, 0.5), 0.5, 2);
    let layers = generate(&spec).unwrap().layers;
    assert_eq!(fit_scores(&layers, &[1]), fit_scores(&layers, &[1]));
}

#[test]
fn published_values_have_kinks_at_four_six_and_eight() {
    let lm = [
        -15090.85, -13970.58, -13865.45, -13135.31, -13118.15, -13119.40, -12684.86, -12841.46,
        -12541.92, -12578.19, -12655.21,
    ];
    let ks: Vec<usize> = (0..lm.len()).collect();
    assert_eq!(kink_candidates(&ks, &lm), vec![4, 6, 8]);
}

#[test]
fn selection_uses_waic_and_breaks_ties_low() {
    let score = |k, waic, lm| ModelScore {
        k,
        loglik: 0.0,
        log_marginal: lm,
        waic,
        avg_loss: 0.0,
    };
    let scores = [score(0, 10.0, -5.0), score(1, 7.0, -3.0), score(2, 7.0, -4.0)];
    let sel = detect_break_number(&scores).unwrap();
    assert_eq!(sel.selected, 1);
    assert_eq!(sel.kinks, vec![1]);
    assert!(sel.warning.is_none());
    assert!(detect_break_number(&scores[..2]).is_err());
}
