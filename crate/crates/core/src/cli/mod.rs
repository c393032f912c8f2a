//! Command-line front end.
//!
//! Every command writes a `manifest.json` holding its full argument set, so
//! `kfnet replay` can re-run it. Timestamps appear only in the manifest.

mod build;
mod fit;
mod report;
mod select;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorKind, Result};
use crate::tensor::io::{read_json, write_json};

pub use build::build_tensor;
pub use fit::{fit, load_fit};
pub use report::report;
pub use select::select;
pub use synth::synth;

/// Figures dropped by default before analysis.
pub const DEFAULT_DROP: [&str; 3] = ["Kim Jong-un", "Donald Trump", "Moon Jae-in"];

#[derive(Debug, Parser)]
#[command(name = "kfnet", version, about = "Key-figure network changepoint analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Articles to co-occurrence tensor.
    BuildTensor(BuildArgs),
    /// Synthetic tensor with planted breaks.
    Synth(SynthArgs),
    /// Fit the hidden Markov tensor model.
    Fit(FitArgs),
    /// Score fits over k and pick the break number.
    Select(SelectArgs),
    /// Plot-ready CSVs for one fit.
    Report(ReportArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BuildArgs {
    /// Article file, one JSON object per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "2018-01-01")]
    pub window_start: NaiveDate,
    #[arg(long, default_value = "2018-06-16")]
    pub window_end: NaiveDate,
    #[arg(long, default_value = "Korea")]
    pub keyword: String,
    #[arg(long, default_value_t = 10)]
    pub min_mentions: u64,
    #[arg(long, default_value_t = 0.25)]
    pub min_week_frac: f64,
    /// Comma-separated figures to remove. Without the flag the three
    /// highest-degree figures of the original study are removed when present.
    #[arg(long)]
    pub drop: Option<String>,
    /// Alias table (canonical<TAB>variant); the bundled table by default.
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    /// Surname list, one per line; the bundled list by default.
    #[arg(long)]
    pub surnames: Option<PathBuf>,
    /// Threshold on articles per person instead of name occurrences.
    #[arg(long)]
    pub count_articles: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 24)]
    pub t: usize,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// Comma-separated 1-based weeks at which a new regime starts.
    #[arg(long, default_value = "13")]
    pub breakpoints: String,
    #[arg(long, default_value_t = 2.0)]
    pub within: f64,
    #[arg(long, default_value_t = 0.5)]
    pub between: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Poisson counts instead of real-valued layers.
    #[arg(long)]
    pub counts: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Tensor directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub breaks: usize,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// Total sweeps, burn-in included.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fit every k in 0..=kmax into `out/k{k}` instead of a single fit.
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SelectArgs {
    /// Directory holding `k0`, `k1`, ... fit directories.
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to `<input>/selection`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Expected largest k; gaps below it are an error.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Tensor directory; defaults to the one recorded by the fits.
    #[arg(long)]
    pub tensor: Option<PathBuf>,
    /// Seed of the reduced runs behind the marginal likelihood.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Retained iterations per reduced run.
    #[arg(long, default_value_t = 2000)]
    pub marginal_iters: usize,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Fit directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to `<input>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tensor: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A `manifest.json`, or the directory containing one.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Everything needed to reproduce one output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub started: String,
    pub finished: String,
}

pub const MANIFEST: &str = "manifest.json";

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(MANIFEST) } else { path.to_path_buf() };
        read_json(&path)
    }
}

pub(crate) fn write_manifest(dir: &Path, command: &Command, started: String) -> Result<()> {
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.clone(),
        started,
        finished: now(),
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub(crate) fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
pub(crate) fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Absolute form of an existing input path, for the manifest.
pub(crate) fn absolute(path: &Path) -> Result<PathBuf> {
    fs::canonicalize(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildTensor(args) => build_tensor(&args),
        Command::Synth(args) => synth(&args),
        Command::Fit(args) => fit(&args),
        Command::Select(args) => select(&args),
        Command::Report(args) => report(&args),
        Command::Replay(args) => replay(&args),
    }
}

pub fn replay(args: &ReplayArgs) -> Result<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    let mut command = manifest.command;
    match &mut command {
        Command::BuildTensor(a) => retarget(&mut a.out, &mut a.force, args),
        Command::Synth(a) => retarget(&mut a.out, &mut a.force, args),
        Command::Fit(a) => retarget(&mut a.out, &mut a.force, args),
        Command::Select(a) => retarget_opt(&mut a.out, &mut a.force, args),
        Command::Report(a) => retarget_opt(&mut a.out, &mut a.force, args),
        Command::Replay(_) => {
            return Err(Error::Validation("a replay manifest cannot be replayed".into()))
        }
    }
    run(command)
}

fn retarget(out: &mut PathBuf, force: &mut bool, args: &ReplayArgs) {
    if let Some(o) = &args.out {
        *out = o.clone();
    }
    *force = args.force;
}

fn retarget_opt(out: &mut Option<PathBuf>, force: &mut bool, args: &ReplayArgs) {
    if let Some(o) = &args.out {
        *out = Some(o.clone());
    }
    *force = args.force;
}

/// Process exit code of a failure class.
pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Validation => 1,
        ErrorKind::Numerical => 2,
        ErrorKind::Io => 3,
    }
}
