//! Oracles and fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kfnet::hmtm::{
    chain_rng, gibbs_sweep, init_chain, sample_beta, sample_latent_positions,
    sample_latent_weights, sample_sigma2, sample_transition_matrix, ChainState, HyperParams,
    ModelConfig, Target,
};
use kfnet::synth::{generate, SynthSpec};
use nalgebra::DMatrix;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Sample mean and variance with their Monte Carlo standard errors.
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
    pub se_mean: f64,
    pub se_var: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = sq.iter().sum::<f64>() / (n - 1.0);
    let var_of_sq = sq.iter().map(|d| (d - var).powi(2)).sum::<f64>() / (n - 1.0);
    Moments {
        mean,
        var,
        se_mean: (var / n).sqrt(),
        se_var: (var_of_sq / n).sqrt(),
    }
}

/// Largest deviation of the sample moments from `(mean, var)` in units of
/// their standard errors.
pub fn z_scores(m: &Moments, mean: f64, var: f64) -> (f64, f64) {
    ((m.mean - mean).abs() / m.se_mean, (m.var - var).abs() / m.se_var)
}

pub fn inv_gamma_moments(shape: f64, rate: f64) -> (f64, f64) {
    let mean = rate / (shape - 1.0);
    (mean, mean * mean / (shape - 2.0))
}

pub fn beta_moments(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (a / s, a * b / (s * s * (s + 1.0)))
}

/// Entry `(i, j)` of `U_m diag(v_t) U_mᵀ` by explicit summation.
pub fn low_rank_entry(s: &ChainState, m: usize, t: usize, i: usize, j: usize) -> f64 {
    (0..s.v.ncols())
        .map(|k| s.u[m][(i, k)] * s.v[(t, k)] * s.u[m][(j, k)])
        .sum()
}

/// A mid-chain state of a 3-regime model on small synthetic data.
pub fn frozen_context() -> (Vec<DMatrix<f64>>, ChainState, HyperParams) {
    let spec = SynthSpec::planted(6, 9, 2, vec![4, 7], (2.0, 0.5), 0.7, 11);
    let layers = generate(&spec).unwrap().layers;
    let config = ModelConfig {
        n_breaks: 2,
        latent_dim: 2,
        iterations: 50,
        burn_in: 0,
        thin: 1,
        seed: 5,
    };
    let hyper = HyperParams::defaults(2, 3);
    let target = Target::from_layers(&layers);
    let mut rng = chain_rng(5);
    let mut state = init_chain(&config, &hyper, &target, &mut rng).unwrap();
    for _ in 0..50 {
        gibbs_sweep(&mut state, &target, &hyper, &mut rng, false).unwrap();
    }
    (layers, state, hyper)
}

/// One conjugacy check: sample moments of a conditional against its closed form.
#[derive(Debug, Clone)]
pub struct ConjugacyCheck {
    pub name: String,
    pub expected: (f64, f64),
    pub sample: Moments,
}

impl ConjugacyCheck {
    pub fn worst_z(&self) -> f64 {
        let (a, b) = z_scores(&self.sample, self.expected.0, self.expected.1);
        a.max(b)
    }
}

/// Draws every conditional `draws` times from the frozen context and pairs
/// the sample moments with independently computed closed forms.
pub fn conjugacy_checks(draws: usize) -> Vec<ConjugacyCheck> {
    let (layers, state, hyper) = frozen_context();
    let target = Target::from_layers(&layers);
    let (n, t_len, m_len, r) = (state.n(), state.t(), state.n_regimes(), state.latent_dim());
    let mut rng = chain_rng(2024);
    let mut out = Vec::new();

    // σ²_m: IG((c0 + N²T_m)/2, (d0 + SSR_m)/2)
    for m in 0..m_len {
        let mut ssr = 0.0;
        let mut t_m = 0;
        for t in (0..t_len).filter(|&t| state.states[t] == m) {
            t_m += 1;
            for i in 0..n {
                for j in 0..n {
                    let e = layers[t][(i, j)] - state.beta - low_rank_entry(&state, m, t, i, j);
                    ssr += e * e;
                }
            }
        }
        let shape = (hyper.c0 + (n * n * t_m) as f64) / 2.0;
        let expected = inv_gamma_moments(shape, (hyper.d0 + ssr) / 2.0);
        let mut s = state.clone();
        let xs: Vec<f64> = (0..draws)
            .map(|_| {
                sample_sigma2(&mut s, &target, m, &hyper, &mut rng).unwrap();
                s.sigma2[m]
            })
            .collect();
        out.push(ConjugacyCheck {
            name: format!("sigma2[{}]", m + 1),
            expected,
            sample: moments(&xs),
        });
    }

    // β: N(b1, B1) with precision 1/B0 + Σ_t N²/σ²_{S_t}
    let mut precision = 1.0 / hyper.beta_var;
    let mut lin = hyper.beta_mean / hyper.beta_var;
    for t in 0..t_len {
        let m = state.states[t];
        precision += (n * n) as f64 / state.sigma2[m];
        for i in 0..n {
            for j in 0..n {
                lin += (layers[t][(i, j)] - low_rank_entry(&state, m, t, i, j)) / state.sigma2[m];
            }
        }
    }
    let mut s = state.clone();
    let xs: Vec<f64> = (0..draws)
        .map(|_| {
            sample_beta(&mut s, &target, &hyper, &mut rng).unwrap();
            s.beta
        })
        .collect();
    out.push(ConjugacyCheck {
        name: "beta".into(),
        expected: (lin / precision, 1.0 / precision),
        sample: moments(&xs),
    });

    // ψ_u,r of regime 1: IG((u0 + N)/2, (Σ_i U_ir² + u1)/2)
    let mut psi_u = vec![Vec::with_capacity(draws); r];
    let mut psi_v = vec![Vec::with_capacity(draws); r];
    for _ in 0..draws {
        let mut s = state.clone();
        sample_latent_positions(&mut s, &target, 0, &hyper, &mut rng).unwrap();
        let mut w = state.clone();
        sample_latent_weights(&mut w, &target, 0, &hyper, &mut rng).unwrap();
        for k in 0..r {
            psi_u[k].push(s.psi_u[0][k]);
            psi_v[k].push(w.psi_v[0][k]);
        }
    }
    let regime_rows: Vec<usize> = (0..t_len).filter(|&t| state.states[t] == 0).collect();
    for k in 0..r {
        let ss: f64 = (0..n).map(|i| state.u[0][(i, k)].powi(2)).sum();
        out.push(ConjugacyCheck {
            name: format!("psi_u[1][{}]", k + 1),
            expected: inv_gamma_moments((hyper.u0 + n as f64) / 2.0, (ss + hyper.u1) / 2.0),
            sample: moments(&psi_u[k]),
        });
        // ψ_v,r of regime 1 over its own layers.
        let ss: f64 = regime_rows.iter().map(|&t| state.v[(t, k)].powi(2)).sum();
        out.push(ConjugacyCheck {
            name: format!("psi_v[1][{}]", k + 1),
            expected: inv_gamma_moments(
                (hyper.v0 + regime_rows.len() as f64) / 2.0,
                (ss + hyper.v1) / 2.0,
            ),
            sample: moments(&psi_v[k]),
        });
    }

    // p_kk: Beta(a0 + j_kk − 1, b0 + j_k,k+1)
    let mut stays = vec![Vec::with_capacity(draws); m_len - 1];
    for _ in 0..draws {
        let p = sample_transition_matrix(&state.states, m_len, &hyper, &mut rng).unwrap();
        for (k, xs) in stays.iter_mut().enumerate() {
            xs.push(p[(k, k)]);
        }
    }
    for (k, xs) in stays.iter().enumerate() {
        let mut j_stay = 0.0;
        let mut j_move = 0.0;
        for t in 1..t_len {
            if state.states[t - 1] == k {
                if state.states[t] == k {
                    j_stay += 1.0;
                } else {
                    j_move += 1.0;
                }
            }
        }
        out.push(ConjugacyCheck {
            name: format!("p[{}][{}]", k + 1, k + 1),
            expected: beta_moments(hyper.a0 + j_stay - 1.0, hyper.b0 + j_move),
            sample: moments(xs),
        });
    }
    out
}

/// Every admissible path (`S_1 = 0`, steps of 0 or 1, `S_T = M − 1`) with
/// its normalized probability under `p(S | table)`.
pub fn enumerate_paths(table: &DMatrix<f64>, p: &DMatrix<f64>) -> Vec<(Vec<usize>, f64)> {
    let (t_len, m_len) = table.shape();
    let mut paths = Vec::new();
    let mut stack = vec![vec![0usize]];
    while let Some(path) = stack.pop() {
        if path.len() == t_len {
            if path[t_len - 1] == m_len - 1 {
                paths.push(path);
            }
            continue;
        }
        let last = *path.last().unwrap();
        for next in [last, last + 1] {
            if next < m_len {
                let mut p2 = path.clone();
                p2.push(next);
                stack.push(p2);
            }
        }
    }
    let log_w: Vec<f64> = paths
        .iter()
        .map(|s| {
            let mut lw = table[(0, s[0])];
            for t in 1..t_len {
                lw += p[(s[t - 1], s[t])].ln() + table[(t, s[t])];
            }
            lw
        })
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_w.iter().map(|w| (w - max).exp()).sum();
    paths
        .into_iter()
        .zip(log_w)
        .map(|(s, w)| (s, (w - max).exp() / total))
        .collect()
}

/// `P(S_t ≠ S_{t−1})` for `t = 2..T` under a path distribution.
pub fn change_frequencies(paths: &[(Vec<usize>, f64)]) -> Vec<f64> {
    let t_len = paths[0].0.len();
    (1..t_len)
        .map(|t| paths.iter().filter(|(s, _)| s[t] != s[t - 1]).map(|(_, w)| w).sum())
        .collect()
}

/// Every file below `dir` except `manifest.json`, keyed by relative path.
pub fn output_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.file_name().unwrap() != "manifest.json" {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn read_csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}
