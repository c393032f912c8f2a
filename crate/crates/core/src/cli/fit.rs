use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{absolute, now, prepare_out, write_manifest, Command, FitArgs};
use crate::error::{Error, Result};
use crate::hmtm::{chain_rng, run_chain, DrawRecord, FitResult, HyperParams, ModelConfig, Target};
use crate::tensor::io::{csv_err, read_json, write_json};
use crate::tensor::{TensorBundle, WeekIndex};

/// Contiguous run of weeks sharing a modal regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpan {
    pub regime: usize,
    pub first_week: usize,
    pub last_week: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub config: ModelConfig,
    pub hyper: HyperParams,
    pub tensor: PathBuf,
    pub n: usize,
    pub t: usize,
    pub figures: Vec<String>,
    pub retained: usize,
    /// 1-based weeks at which a new modal regime starts.
    pub modal_breaks: Vec<usize>,
    pub spans: Vec<RegimeSpan>,
    pub mean_beta: f64,
    pub mean_sigma2: Vec<f64>,
    pub mean_transition: Vec<Vec<f64>>,
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let started = now();
    let mut args = args.clone();
    args.input = absolute(&args.input)?;
    let bundle = TensorBundle::read(&args.input)?;
    prepare_out(&args.out, args.force)?;
    args.out = absolute(&args.out)?;

    match args.kmax {
        None => fit_one(&args, &bundle)?,
        Some(kmax) => {
            (0..=kmax)
                .into_par_iter()
                .map(|k| {
                    let mut sub = args.clone();
                    sub.breaks = k;
                    sub.kmax = None;
                    sub.out = args.out.join(format!("k{k}"));
                    prepare_out(&sub.out, args.force)?;
                    let sub_started = now();
                    fit_one(&sub, &bundle)?;
                    write_manifest(&sub.out, &Command::Fit(sub.clone()), sub_started)
                })
                .collect::<Result<Vec<()>>>()?;
        }
    }
    write_manifest(&args.out, &Command::Fit(args.clone()), started)
}

fn fit_one(args: &FitArgs, bundle: &TensorBundle) -> Result<()> {
    let config = ModelConfig {
        n_breaks: args.breaks,
        latent_dim: args.dims,
        iterations: args.iters,
        burn_in: args.burnin,
        thin: args.thin,
        seed: args.seed,
    };
    let hyper = HyperParams::defaults(config.latent_dim, config.n_regimes());
    let target = Target::new(&bundle.corrected);
    let result = run_chain(&config, &hyper, &target, &mut chain_rng(config.seed))?;
    log::info!("k={} modal breaks {:?}", config.n_breaks, result.modal_breaks());
    write_fit(&args.out, &args.input, bundle, &result)
}

fn write_fit(out: &Path, tensor: &Path, bundle: &TensorBundle, fit: &FitResult) -> Result<()> {
    let weeks = &bundle.meta.weeks;
    let modal = fit.modal_states();
    let summary = FitSummary {
        config: fit.config.clone(),
        hyper: fit.hyper.clone(),
        tensor: tensor.to_path_buf(),
        n: bundle.meta.n,
        t: bundle.meta.t,
        figures: bundle.meta.figures.names().to_vec(),
        retained: fit.draws.len(),
        modal_breaks: fit.modal_breaks(),
        spans: spans(&modal, weeks),
        mean_beta: fit.mean_beta(),
        mean_sigma2: fit.mean_sigma2(),
        mean_transition: fit
            .mean_transition()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
    };
    write_json(&out.join("fit.json"), &summary)?;

    let path = out.join("draws.jsonl");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for (state, &it) in fit.draws.iter().zip(&fit.draw_iterations) {
        let line = serde_json::to_string(&DrawRecord::from_state(it, state))
            .map_err(|e| Error::parse(&path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let m_len = fit.n_regimes();
    let mut header = vec!["week".to_string(), "start_date".into(), "end_date".into()];
    header.extend((1..=m_len).map(|m| format!("regime_{m}")));
    write_rows(
        &out.join("state_probs.csv"),
        &header,
        weeks.iter().enumerate().map(|(t, w)| {
            let mut row = week_cells(w);
            row.extend((0..m_len).map(|m| fit.state_probs[(t, m)].to_string()));
            row
        }),
    )?;
    write_rows(
        &out.join("regimes.csv"),
        &["week", "start_date", "end_date", "regime"].map(String::from),
        weeks.iter().zip(&modal).map(|(w, &m)| {
            let mut row = week_cells(w);
            row.push((m + 1).to_string());
            row
        }),
    )?;
    write_rows(
        &out.join("loglik_trace.csv"),
        &["sweep", "loglik"].map(String::from),
        fit.loglik_trace
            .iter()
            .enumerate()
            .map(|(i, ll)| vec![(i + 1).to_string(), ll.to_string()]),
    )
}

fn week_cells(w: &WeekIndex) -> Vec<String> {
    vec![w.t.to_string(), w.start_date.to_string(), w.end_date.to_string()]
}

pub(crate) fn write_rows<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn spans(modal: &[usize], weeks: &[WeekIndex]) -> Vec<RegimeSpan> {
    let mut out: Vec<RegimeSpan> = Vec::new();
    for (w, &m) in weeks.iter().zip(modal) {
        match out.last_mut() {
            Some(s) if s.regime == m + 1 => {
                s.last_week = w.t;
                s.end_date = w.end_date;
            }
            _ => out.push(RegimeSpan {
                regime: m + 1,
                first_week: w.t,
                last_week: w.t,
                start_date: w.start_date,
                end_date: w.end_date,
            }),
        }
    }
    out
}

/// Reads a fit directory back into its summary and draws.
pub fn load_fit(dir: &Path) -> Result<(FitSummary, FitResult)> {
    let summary: FitSummary = read_json(&dir.join("fit.json"))?;
    let path = dir.join("draws.jsonl");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut draws = Vec::new();
    let mut iterations = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DrawRecord = serde_json::from_str(&line).map_err(|e| Error::parse(&path, e))?;
        iterations.push(rec.iteration);
        draws.push(rec.to_state()?);
    }
    let path = dir.join("loglik_trace.csv");
    let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let trace = r
        .deserialize::<(usize, f64)>()
        .map(|rec| rec.map(|(_, ll)| ll).map_err(|e| csv_err(&path, e)))
        .collect::<Result<Vec<_>>>()?;
    let result = FitResult::from_draws(summary.config.clone(), summary.hyper.clone(), draws, iterations, trace)?;
    Ok((summary, result))
}
