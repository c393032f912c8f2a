//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use kfnet::cli::{self, BuildArgs, FitArgs, ReplayArgs, ReportArgs, SelectArgs, SynthArgs};
use kfnet::corpus::{AliasTable, DateWindow, MentionExtractor, SurnameLexicon};
use kfnet::hmtm::{
    chain_rng, check_path, max_off_diagonal, run_chain, sample_path, HyperParams, ModelConfig,
    Target,
};
use kfnet::selection::{detect_break_number, score_fit, MarginalOptions, ModelScore};
use kfnet::synth::{generate, SynthSpec};
use kfnet::tensor::degree_correct;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let pass = out.pass && elapsed <= budget;
    println!(
        "[{}] {id}. {name}: {} ({:.1}s, budget {}s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn default_build(input: &Path, out: &Path, drop: Option<&str>) -> BuildArgs {
    BuildArgs {
        input: input.to_path_buf(),
        out: out.to_path_buf(),
        window_start: "2018-01-01".parse().unwrap(),
        window_end: "2018-06-16".parse().unwrap(),
        keyword: "Korea".into(),
        min_mentions: 10,
        min_week_frac: 0.25,
        drop: drop.map(String::from),
        aliases: None,
        surnames: None,
        count_articles: false,
        force: false,
    }
}

fn read_layers(dir: &Path, t: usize) -> Vec<Vec<Vec<i64>>> {
    (1..=t)
        .map(|k| {
            read_csv_rows(&dir.join(format!("Y_{k}.csv")))
                .into_iter()
                .map(|row| row.iter().map(|c| c.parse().unwrap()).collect())
                .collect()
        })
        .collect()
}

fn pipeline_fidelity() -> Outcome {
    let expected: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("toy_expected.json")).unwrap()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();

    for (drop, figures_key, layers_key) in [
        (None, "figures_default", "layers_default"),
        (Some(""), "selected", "layers_all"),
    ] {
        let out = tmp.path().join(format!("toy_{}", figures_key));
        cli::build_tensor(&default_build(&fixture("toy_corpus.jsonl"), &out, drop)).unwrap();
        let meta: Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
        let figures: Vec<String> = serde_json::from_value(meta["figures"].clone()).unwrap();
        let want_figures: Vec<String> = serde_json::from_value(expected[figures_key].clone()).unwrap();
        if figures != want_figures {
            problems.push(format!("figures {figures:?} != {want_figures:?}"));
            continue;
        }
        let want: Vec<Vec<Vec<i64>>> = serde_json::from_value(expected[layers_key].clone()).unwrap();
        if read_layers(&out, want.len()) != want {
            problems.push(format!("{layers_key} differs"));
        }
    }

    let extractor = MentionExtractor::new(&AliasTable::bundled(), &SurnameLexicon::bundled());
    let window = DateWindow::new("2018-01-01".parse().unwrap(), "2018-12-31".parse().unwrap()).unwrap();
    let articles = kfnet::corpus::load_articles(&fixture("appendix_articles.jsonl"), &window).unwrap();
    let want: BTreeMap<String, BTreeSet<String>> = serde_json::from_str(
        &std::fs::read_to_string(fixture("appendix_expected.json")).unwrap(),
    )
    .unwrap();
    for a in &articles.records {
        let got = extractor.mentions(&a.text);
        if Some(&got) != want.get(&a.id) {
            problems.push(format!("{}: {got:?}", a.id));
        }
    }
    if articles.records.len() != want.len() {
        problems.push(format!("{} appendix articles loaded", articles.records.len()));
    }
    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            "toy tensor (both drop settings) and appendix mention sets exact".into()
        } else {
            problems.join("; ")
        },
    }
}

fn spectral_invariant() -> Outcome {
    let mut rng = chain_rng(77);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(1..=30);
        let mut y = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(0..=20) as f64;
                y[(i, j)] = v;
                y[(j, i)] = v;
            }
        }
        let dc = degree_correct(&y).unwrap();
        let sv = dc.null_model.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let rank_excess = sv.get(1).copied().unwrap_or(0.0);

        let principal = |m: &DMatrix<f64>| {
            SymmetricEigen::new(m.clone())
                .eigenvalues
                .iter()
                .copied()
                .fold(0.0f64, |acc, l| if l.abs() > acc.abs() { l } else { acc })
        };
        let eig_gap = (principal(&y) - principal(&dc.null_model)).abs();
        let recon = (&y - &dc.corrected - &dc.null_model).amax();
        worst = (worst.0.max(rank_excess), worst.1.max(eig_gap), worst.2.max(recon));
    }
    Outcome {
        pass: worst.0 <= 1e-9 && worst.1 <= 1e-9 && worst.2 <= 1e-9,
        detail: format!(
            "max 2nd singular value of Ω {:.1e}, eigenvalue gap {:.1e}, ‖Y−B−Ω‖∞ {:.1e}",
            worst.0, worst.1, worst.2
        ),
    }
}

fn conjugacy() -> Outcome {
    let checks = conjugacy_checks(50_000);
    let worst = checks
        .iter()
        .max_by(|a, b| a.worst_z().partial_cmp(&b.worst_z()).unwrap())
        .unwrap();
    let failed: Vec<&str> = checks.iter().filter(|c| c.worst_z() > 3.0).map(|c| c.name.as_str()).collect();
    Outcome {
        pass: failed.is_empty(),
        detail: format!(
            "{} conditionals, worst {} at {:.2} SE{}",
            checks.len(),
            worst.name,
            worst.worst_z(),
            if failed.is_empty() { String::new() } else { format!(", failed {failed:?}") }
        ),
    }
}

fn ffbs_exactness() -> Outcome {
    let draws = 100_000;
    let mut rng = chain_rng(4);
    let mut worst = 0.0f64;
    let mut bad_paths = 0usize;
    for t_len in 4..=6 {
        for m_len in 2..=3 {
            let table = DMatrix::from_fn(t_len, m_len, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                1.5 * z
            });
            let mut p = DMatrix::zeros(m_len, m_len);
            for k in 0..m_len - 1 {
                let stay = rng.random_range(0.3..0.9);
                p[(k, k)] = stay;
                p[(k, k + 1)] = 1.0 - stay;
            }
            p[(m_len - 1, m_len - 1)] = 1.0;

            let exact = change_frequencies(&enumerate_paths(&table, &p));
            let mut counts = vec![0usize; t_len - 1];
            for _ in 0..draws {
                let s = sample_path(&table, &p, &mut rng).unwrap();
                if check_path(&s, m_len).is_err() || s[0] != 0 || s[t_len - 1] != m_len - 1 {
                    bad_paths += 1;
                }
                for t in 1..t_len {
                    if s[t] != s[t - 1] {
                        counts[t - 1] += 1;
                    }
                }
            }
            for (c, &q) in counts.iter().zip(&exact) {
                let freq = *c as f64 / draws as f64;
                let se = (q * (1.0 - q) / draws as f64).sqrt();
                let z = if se > 0.0 {
                    (freq - q).abs() / se
                } else if freq == q {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
        }
    }
    Outcome {
        pass: worst <= 3.0 && bad_paths == 0,
        detail: format!("worst change-frequency deviation {worst:.2} SE, {bad_paths} invalid paths"),
    }
}

fn planted_recovery() -> (Outcome, Outcome) {
    let mut hits = 0;
    let mut misses = Vec::new();
    let mut worst_off = 0.0f64;
    let mut sweeps = 0usize;
    for seed in 0..20u64 {
        let spec = SynthSpec::planted(20, 24, 2, vec![13], (2.0, 0.5), 0.5, seed);
        let data = generate(&spec).unwrap();
        let target = Target::from_layers(&data.layers);
        let config = ModelConfig {
            n_breaks: 1,
            latent_dim: 2,
            iterations: 2000,
            burn_in: 1000,
            thin: 1,
            seed,
        };
        let fit = run_chain(&config, &HyperParams::defaults(2, 2), &target, &mut chain_rng(seed)).unwrap();
        let breaks = fit.modal_breaks();
        if breaks.len() == 1 && breaks[0].abs_diff(13) <= 1 {
            hits += 1;
        } else {
            misses.push((seed, breaks));
        }
        for d in &fit.draws {
            sweeps += 1;
            for u in &d.u {
                worst_off = worst_off.max(max_off_diagonal(u));
            }
        }
    }
    (
        Outcome {
            pass: hits >= 18,
            detail: format!("{hits}/20 within ±1 of week 13, misses {misses:?}"),
        },
        Outcome {
            pass: worst_off <= 1e-8 && sweeps == 20 * 1000,
            detail: format!("{sweeps} retained sweeps, max off-diagonal |UᵀU| {worst_off:.1e}"),
        },
    )
}

fn break_selection() -> Outcome {
    let mut hits = 0;
    let mut picks = Vec::new();
    for seed in 0..20u64 {
        let spec = SynthSpec::planted(20, 24, 2, vec![7, 16], (2.0, 0.5), 0.5, seed);
        let data = generate(&spec).unwrap();
        let target = Target::from_layers(&data.layers);
        let scores: Vec<ModelScore> = (0..=4)
            .map(|k| {
                let config = ModelConfig {
                    n_breaks: k,
                    latent_dim: 1,
                    iterations: 2000,
                    burn_in: 1000,
                    thin: 1,
                    seed,
                };
                let fit = run_chain(&config, &HyperParams::defaults(1, k + 1), &target, &mut chain_rng(seed))
                    .unwrap();
                score_fit(&fit, &target, &MarginalOptions::default()).unwrap()
            })
            .collect();
        let selected = detect_break_number(&scores).unwrap().selected;
        if selected == 2 {
            hits += 1;
        }
        picks.push(selected);
    }
    Outcome {
        pass: hits >= 18,
        detail: format!("selected 2 in {hits}/20, picks {picks:?}"),
    }
}

fn kink_anchor() -> Outcome {
    let published = [
        -15090.85, -13970.58, -13865.45, -13135.31, -13118.15, -13119.40, -12684.86, -12841.46,
        -12541.92, -12578.19, -12655.21,
    ];
    let scores: Vec<ModelScore> = published
        .iter()
        .enumerate()
        .map(|(k, &lm)| ModelScore {
            k,
            loglik: lm,
            log_marginal: lm,
            waic: -2.0 * lm,
            avg_loss: 0.0,
        })
        .collect();
    let kinks = detect_break_number(&scores).unwrap().kinks;
    Outcome {
        pass: kinks.contains(&6),
        detail: format!("kinks {kinks:?}"),
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let synth_dir = root.join("synth");
    let fits = root.join("fits");
    let sel = root.join("selection");
    let rep = root.join("report");
    let toy = root.join("toy");

    cli::build_tensor(&default_build(&fixture("toy_corpus.jsonl"), &toy, None)).unwrap();
    cli::synth(&SynthArgs {
        out: synth_dir.clone(),
        n: 8,
        t: 10,
        dims: 2,
        breakpoints: "6".into(),
        within: 2.0,
        between: 0.5,
        noise: 0.5,
        seed: 3,
        counts: false,
        force: false,
    })
    .unwrap();
    cli::fit(&FitArgs {
        input: synth_dir.clone(),
        out: fits.clone(),
        breaks: 0,
        dims: 1,
        iters: 300,
        burnin: 100,
        thin: 2,
        seed: 9,
        kmax: Some(2),
        force: false,
    })
    .unwrap();
    cli::select(&SelectArgs {
        input: fits.clone(),
        out: Some(sel.clone()),
        kmax: None,
        tensor: None,
        seed: 1,
        marginal_iters: 200,
        force: false,
    })
    .unwrap();
    cli::report(&ReportArgs {
        input: fits.join("k1"),
        out: Some(rep.clone()),
        tensor: None,
        force: false,
    })
    .unwrap();

    let mut checked = 0;
    let mut differing = Vec::new();
    for dir in [&toy, &synth_dir, &fits, &sel, &rep] {
        let name = dir.file_name().unwrap().to_string_lossy().to_string();
        let again = root.join(format!("{name}_replay"));
        cli::replay(&ReplayArgs {
            manifest: dir.clone(),
            out: Some(again.clone()),
            force: false,
        })
        .unwrap();
        let (a, b) = (output_files(dir), output_files(&again));
        checked += a.len();
        if a != b || a.is_empty() {
            differing.push(name);
        }
    }
    Outcome {
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            format!("5 commands replayed, {checked} files byte-identical")
        } else {
            format!("outputs differ for {differing:?}")
        },
    }
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= run(1, "pipeline fidelity on fixtures", secs(5), pipeline_fidelity);
    ok &= run(2, "degree-correction spectral invariant", secs(10), spectral_invariant);
    ok &= run(3, "conjugacy oracles", secs(60), conjugacy);
    ok &= run(4, "FFBS exactness", secs(60), ffbs_exactness);

    let mut orthogonality = None;
    ok &= run(5, "planted-break recovery", secs(600), || {
        let (recovery, orth) = planted_recovery();
        orthogonality = Some(orth);
        recovery
    });
    ok &= run(6, "break-number selection", secs(1800), break_selection);
    ok &= run(7, "kink-report anchor", secs(1), kink_anchor);
    ok &= run(8, "determinism from manifests", secs(300), determinism);
    ok &= run(9, "orthogonality invariant", secs(1), || orthogonality.take().unwrap());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
