//! `termshift` command-line front end.

mod analysis;
mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{Run, Stage};
use config::AnalysisConfig;

const OUT_ENV: &str = "TERMSHIFT_OUT";
const DEFAULT_OUT: &str = "termshift-out";

/// Failures with a dedicated exit code. Anything else exits with 1.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    EmptyCorpus(String),
    #[error("{0}")]
    NotFound(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::EmptyCorpus(_) => 3,
            Failure::NotFound(_) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "termshift", version, about = "Consumer-to-clinical terminology shift analysis")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (falls back to the config file, then $TERMSHIFT_OUT).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Corpus JSONL.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Prebuilt dictionary cache (JSONL).
    #[arg(long, global = true)]
    dictionary: Option<PathBuf>,
    /// Mapping source CSV; repeatable.
    #[arg(long = "sources", global = true, value_delimiter = ',')]
    sources: Vec<PathBuf>,
    /// Exclusion list; repeatable.
    #[arg(long = "exclude", global = true, value_delimiter = ',')]
    exclude: Vec<PathBuf>,
    #[arg(long, global = true)]
    stop_list: Option<PathBuf>,
    /// Run per-section work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build and cache the mapping dictionary.
    BuildDict {
        /// Cache path; defaults to dictionary.jsonl in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with ground truth.
    Synth {
        #[arg(long, default_value = "small")]
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sections: Option<usize>,
    },
    /// Term counts, section table and statistics.
    Analyze,
    /// Dictionary-confirmed substitution events and pair tables.
    Transforms,
    /// Clinician editing profiles and k-means clusters.
    Cluster,
    /// Annotated side-by-side view of one note-section.
    Diff {
        #[arg(long)]
        note: String,
        #[arg(long)]
        section: String,
        /// Also write the tagged spans as JSON.
        #[arg(long)]
        spans: bool,
    },
    /// Analyze, transforms and cluster in one pass.
    ReportAll,
}

fn resolve(common: &Common) -> Result<Run> {
    let (mut cfg, file_out) = match &common.config {
        Some(path) => config::load(path)?,
        None => (AnalysisConfig::default(), None),
    };
    if common.corpus.is_some() {
        cfg.corpus = common.corpus.clone();
    }
    if common.dictionary.is_some() {
        cfg.dictionary = common.dictionary.clone();
    }
    if !common.sources.is_empty() {
        cfg.sources = common.sources.clone();
    }
    if !common.exclude.is_empty() {
        cfg.exclude = common.exclude.clone();
    }
    if common.stop_list.is_some() {
        cfg.stop_list = common.stop_list.clone();
    }
    if common.sequential {
        cfg.parallel = false;
    }
    let mut set_out = None;
    for kv in &common.set {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| Failure::Input(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        let k = k.trim();
        if k == "out_dir" {
            set_out = Some(PathBuf::from(v.trim()));
        }
        cfg.set(k, v).map_err(|e| Failure::Input(e.to_string()))?;
    }
    cfg.validate().map_err(|e| Failure::Input(e.to_string()))?;
    let out_dir = common
        .out_dir
        .clone()
        .or(set_out)
        .or(file_out)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Run { cfg, out_dir })
}

fn run(cli: Cli) -> Result<()> {
    let run = resolve(&cli.common)?;
    match cli.command {
        Command::BuildDict { out } => commands::build_dict(&run, out.as_deref()),
        Command::Synth { preset, seed, sections } => commands::synth(&run.out_dir, &preset, seed, sections),
        Command::Analyze => commands::analyze(&run, Stage::Analyze),
        Command::Transforms => commands::analyze(&run, Stage::Transforms),
        Command::Cluster => commands::analyze(&run, Stage::Cluster),
        Command::ReportAll => commands::analyze(&run, Stage::All),
        Command::Diff { note, section, spans } => {
            let header = commands::diff(&run, &note, &section, spans).context("diff")?;
            println!("{header}");
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain().find_map(|e| e.downcast_ref::<Failure>().map(Failure::exit_code)).unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
