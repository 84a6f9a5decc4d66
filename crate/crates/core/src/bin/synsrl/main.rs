//! `synsrl`: synthetic corpora, training, constrained decoding, evaluation
//! and manifest replay.
//!
//! Exit codes: 0 success, 1 usage, 2 data or format, 3 contract violation.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use synsrl_core::Error;

#[derive(Parser, Debug)]
#[command(name = "synsrl", version, about = "Span SRL tagging with syntactic inconsistency training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate train/dev/test/unlabeled corpora and a noise ledger.
    Synth(SynthArgs),
    /// Train one objective for each seed and summarize.
    Train(TrainArgs),
    /// Tag a corpus with a checkpoint.
    Decode(DecodeArgs),
    /// Score prediction files against gold.
    Eval(EvalArgs),
    /// Re-run a command from its manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 500)]
    pub n_dev: usize,
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_unlabeled: usize,
    /// Probability that a gold span is moved off the parse.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub min_len: usize,
    #[arg(long, default_value_t = 16)]
    pub max_len: usize,
    #[arg(long, value_delimiter = ',', default_value = "ARG0,ARG1,ARG2")]
    pub roles: Vec<String>,
    #[arg(long, default_value_t = synsrl_core::corpus::GenConfig::default().marker_rate)]
    pub marker_rate: f64,
    #[arg(long, default_value_t = synsrl_core::corpus::GenConfig::default().distractor_rate)]
    pub distractor_rate: f64,
    /// Defaults to `<out-dir>/manifest.txt`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Parse-only pool for SI objectives; defaults to the unsampled rest of --train.
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// `supervised`, `joint-scratch`, `si-continue`, `joint-ssl` or `supervised-continue`.
    #[arg(long)]
    pub objective: String,
    /// Pretrained checkpoint for continue objectives; `{seed}` is substituted.
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    /// Pool size as a multiple of the labeled sample size.
    #[arg(long, default_value_t = 1)]
    pub unlabeled_mult: usize,
    /// `keep` or `strip` parses of labeled instances whose gold disagrees.
    #[arg(long, default_value = "keep")]
    pub labeled_parses: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `score` (2d - 1) or `agreement` (d - 1).
    #[arg(long)]
    pub si_coefficient: Option<String>,
    /// Decoder producing the SI term's prediction: `viterbi`, `astar` or `gradient`.
    #[arg(long)]
    pub si_decoder: Option<String>,
    /// Global gradient norm cap, or `none`.
    #[arg(long)]
    pub clip_norm: Option<String>,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// File stem for outputs; defaults to the objective name.
    #[arg(long)]
    pub name: Option<String>,
    /// Defaults to `<out-dir>/<name>.manifest.txt`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `viterbi`, `astar` or `gradient`.
    #[arg(long, default_value = "viterbi")]
    pub decoder: String,
    /// Comma list from `bio`, `syn`, `u`; used by A*.
    #[arg(long, default_value = "bio,syn")]
    pub constraints: String,
    /// `hard` or `penalty:<rho>`.
    #[arg(long, default_value = "hard")]
    pub syntax_mode: String,
    /// `keep` or `strip` parses that disagree with the input's gold tags.
    #[arg(long, default_value = "keep")]
    pub noisy_parses: String,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub step_size: f64,
    /// Defaults to `<out>.manifest.txt`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// `NAME=PATH`, or `PATH` to use the file stem; repeatable.
    #[arg(long, required = true)]
    pub pred: Vec<String>,
    /// Row name that deltas are reported against.
    #[arg(long)]
    pub baseline: Option<String>,
    /// `micro` or `macro` disagreement.
    #[arg(long, default_value = "micro")]
    pub averaging: String,
    /// `keep` or `strip` noisy gold parses before measuring disagreement.
    #[arg(long, default_value = "keep")]
    pub noisy_parses: String,
    /// `table` or `records`.
    #[arg(long, default_value = "table")]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to `<out>.manifest.txt`, or `eval.manifest.txt` without --out.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Failure classes that decide the exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Contract(String),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => 1,
                Failure::Data(_) => 2,
                Failure::Contract(_) => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Argument(_) => 1,
                Error::Contract(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
fn read_config(path: &str) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: PathBuf::from(path),
        source: e,
    })?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("{path}:{}: expected key=value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Expands `--config FILE` into flags. Flags given on the command line win.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let path = it.next().ok_or_else(|| Failure::Usage("--config needs a path".into()))?;
            config = Some(path);
        } else if let Some(path) = a.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let given = |key: &str| {
        let flag = format!("--{key}");
        rest.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let extra: Vec<String> = read_config(&path)?
        .into_iter()
        .filter(|(k, _)| !given(k))
        .map(|(k, v)| format!("--{k}={v}"))
        .collect();
    rest.extend(extra);
    Ok(rest)
}

/// Every flag of the chosen subcommand with its value, defaults included,
/// one `--long=value` entry per value.
fn resolved_flags(name: &str, matches: &ArgMatches) -> Vec<String> {
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(name) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for arg in sub.get_arguments() {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        let Ok(Some(values)) = matches.try_get_raw(id) else {
            continue;
        };
        for v in values {
            out.push(format!("--{long}={}", v.to_string_lossy()));
        }
    }
    out
}

/// Parses argv (after config expansion) into a command and its resolved flags.
pub fn parse(argv: Vec<String>) -> std::result::Result<(Command, Vec<String>), clap::Error> {
    let matches = Cli::command().try_get_matches_from(argv)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let flags = match matches.subcommand() {
        Some((name, sub)) => resolved_flags(name, sub),
        None => Vec::new(),
    };
    Ok((cli.command, flags))
}

fn run(argv: Vec<String>) -> Result<()> {
    let argv = expand_config(argv)?;
    let (command, flags) = match parse(argv) {
        Ok(parsed) => parsed,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            let text = e.render().to_string();
            let text = text.trim_end().trim_start_matches("error: ").to_string();
            return Err(Failure::Usage(text).into());
        }
    };
    commands::execute(command, flags)
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
