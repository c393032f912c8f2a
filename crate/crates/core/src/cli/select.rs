use std::collections::BTreeMap;
use std::fs;

use rayon::prelude::*;
use serde::Serialize;

use super::fit::load_fit;
use super::{absolute, now, prepare_out, write_manifest, Command, SelectArgs};
use crate::error::{Error, Result};
use crate::hmtm::Target;
use crate::selection::{
    compute_avg_loss, compute_log_marginal, compute_loglik, compute_waic, detect_break_number,
    write_scores_csv, LogMarginal, MarginalOptions, ModelScore, Waic,
};
use crate::tensor::io::write_json;
use crate::tensor::TensorBundle;

#[derive(Serialize)]
struct SelectionReport {
    selected: usize,
    kink_candidates: Vec<usize>,
    warning: Option<String>,
    criterion: &'static str,
    average_loss: &'static str,
    marginal: MarginalOptions,
    models: Vec<ModelDetail>,
}

#[derive(Serialize)]
struct ModelDetail {
    k: usize,
    modal_breaks: Vec<usize>,
    waic: Waic,
    log_marginal: LogMarginal,
}

pub fn select(args: &SelectArgs) -> Result<()> {
    let started = now();
    let mut args = args.clone();
    args.input = absolute(&args.input)?;
    args.tensor = args.tensor.as_deref().map(absolute).transpose()?;

    let found = fit_dirs(&args.input)?;
    let kmax = args.kmax.or_else(|| found.keys().next_back().copied()).unwrap_or(0);
    let missing: Vec<usize> = (0..=kmax).filter(|k| !found.contains_key(k)).collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "no fit for k = {missing:?} under {}",
            args.input.display()
        )));
    }
    if kmax + 1 < 3 {
        return Err(Error::Validation(format!(
            "break selection needs fits for at least three values of k, found {}",
            kmax + 1
        )));
    }

    let fits = (0..=kmax)
        .map(|k| load_fit(&found[&k]))
        .collect::<Result<Vec<_>>>()?;
    let tensor_dir = match &args.tensor {
        Some(p) => p.clone(),
        None => fits[0].0.tensor.clone(),
    };
    let bundle = TensorBundle::read(&tensor_dir)?;
    let target = Target::new(&bundle.corrected);
    let opts = MarginalOptions {
        iterations: args.marginal_iters,
        burn_in: (args.marginal_iters / 10).max(1),
        seed: args.seed,
    };

    let scored = fits
        .par_iter()
        .map(|(_, fit)| {
            let waic = compute_waic(fit, &target)?;
            let lm = compute_log_marginal(fit, &target, &fit.hyper, &opts)?;
            let score = ModelScore {
                k: fit.config.n_breaks,
                loglik: compute_loglik(fit, &target),
                log_marginal: lm.value,
                waic: waic.waic,
                avg_loss: compute_avg_loss(fit, &target),
            };
            let detail = ModelDetail {
                k: score.k,
                modal_breaks: fit.modal_breaks(),
                waic,
                log_marginal: lm,
            };
            Ok((score, detail))
        })
        .collect::<Result<Vec<_>>>()?;
    let (scores, models): (Vec<ModelScore>, Vec<ModelDetail>) = scored.into_iter().unzip();
    let selection = detect_break_number(&scores)?;
    log::info!("selected k={} (kinks {:?})", selection.selected, selection.kinks);

    let out = args.out.clone().unwrap_or_else(|| args.input.join("selection"));
    prepare_out(&out, args.force)?;
    args.out = Some(absolute(&out)?);
    write_scores_csv(&out.join("scores.csv"), &scores)?;
    let report = SelectionReport {
        selected: selection.selected,
        kink_candidates: selection.kinks,
        warning: selection.warning,
        criterion: "minimum WAIC, ties to the smaller k; kinks of the log marginal likelihood are advisory",
        average_loss: "posterior mean of the mean squared reconstruction residual",
        marginal: opts,
        models,
    };
    write_json(&out.join("report.json"), &report)?;
    write_manifest(&out, &Command::Select(args.clone()), started)
}

/// `k{n}` subdirectories holding a `fit.json`.
fn fit_dirs(root: &std::path::Path) -> Result<BTreeMap<usize, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name();
        let Some(k) = name
            .to_str()
            .and_then(|s| s.strip_prefix('k'))
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        if entry.path().join("fit.json").is_file() {
            out.insert(k, entry.path());
        }
    }
    Ok(out)
}
