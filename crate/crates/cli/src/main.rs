//! `embio`: command-line front end for the EM solvers.
//!
//! Exit status is 0 on success, 1 for data or model errors and 2 for usage errors.

mod commands;
mod report;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use embio::em::EmConfig;
use embio::mixture::CovarianceFamily;
use embio::motif::MotifMode;
use embio::seqio::Alphabet;
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Bad flag combinations that clap cannot express.
    Usage(String),
    /// Unreadable or invalid input, or a solver failure.
    Data(String),
}

impl From<embio::Error> for CliError {
    fn from(e: embio::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "embio",
    version,
    about = "Expectation-maximization solvers for sequences, alignments, genotypes and numeric data"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Tsv,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Number of EM restarts.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub restarts: u64,
    /// Relative log-likelihood change that counts as converged.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long = "max-iter", global = true, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iter: u64,
    /// Where to write the machine report (see --format).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// What --out receives: the JSON run report or the result table.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Also write the result table here.
    #[arg(long, global = true)]
    pub table: Option<PathBuf>,
}

impl GlobalArgs {
    fn em(&self) -> Result<EmConfig, CliError> {
        EmConfig::new(
            self.tol,
            self.max_iter as usize,
            self.restarts as usize,
            self.seed,
        )
        .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Discover a fixed-width motif in unaligned sequences.
    Motif(MotifArgs),
    /// Train a profile HMM or align sequences to one.
    Phmm {
        #[command(subcommand)]
        action: PhmmAction,
    },
    /// Score per-column conservation of a DNA alignment on a tree.
    Conserve(ConserveArgs),
    /// Estimate haplotype frequencies from unphased genotypes.
    Haplotype(HaplotypeArgs),
    /// Fit Gaussian mixtures, optionally choosing K by BIC.
    Cluster(ClusterArgs),
    /// Generate synthetic data with a ground-truth sidecar.
    Simulate {
        #[command(subcommand)]
        kind: simulate::SimulateKind,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MotifArgs {
    #[arg(long)]
    pub fasta: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub width: u64,
    #[arg(long, default_value = "oops")]
    pub mode: MotifMode,
    #[arg(long, default_value = "dna")]
    pub alphabet: Alphabet,
    #[arg(long, default_value_t = 0.5)]
    pub pseudocount: f64,
    /// Initial site prior for the zoops mode.
    #[arg(long, default_value_t = 0.01)]
    pub site_prior: f64,
}

#[derive(Debug, Subcommand)]
pub enum PhmmAction {
    /// Fit a profile HMM to unaligned sequences.
    Train(PhmmTrainArgs),
    /// Align sequences to a trained model by Viterbi paths.
    Align(PhmmAlignArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhmmTrainArgs {
    #[arg(long)]
    pub fasta: PathBuf,
    #[arg(long, default_value = "protein")]
    pub alphabet: Alphabet,
    #[arg(long, default_value_t = 0.5)]
    pub pseudocount: f64,
    /// Comma-separated per-sequence weights.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Where to write the trained model.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhmmAlignArgs {
    /// Model written by `phmm train --model`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub fasta: PathBuf,
    /// Expected alphabet; must match the model's.
    #[arg(long)]
    pub alphabet: Option<Alphabet>,
    /// Where to write the aligned FASTA (standard output when omitted).
    #[arg(long)]
    pub aligned: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConserveArgs {
    /// Aligned DNA FASTA without gaps.
    #[arg(long)]
    pub alignment: PathBuf,
    /// Rooted binary Newick tree whose leaves name the alignment rows.
    #[arg(long)]
    pub tree: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HaplotypeArgs {
    #[arg(long)]
    pub genotypes: PathBuf,
    /// Largest number of heterozygous loci per individual.
    #[arg(long, default_value_t = embio::haplotype::MAX_HETEROZYGOUS)]
    pub max_het: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("components").required(true).args(["k", "k_range"])))]
pub struct ClusterArgs {
    /// Numeric CSV or TSV, one row per observation.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    /// Inclusive range `LO:HI` searched by BIC.
    #[arg(long, value_parser = parse_k_range)]
    pub k_range: Option<(usize, usize)>,
    #[arg(long, default_value = "full")]
    pub family: CovarianceFamily,
    /// Enables the rejection-controlled E-step with this threshold.
    #[arg(long)]
    pub rcem_c: Option<f64>,
}

fn parse_k_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got {s:?}"))?;
    let lo: usize = lo
        .trim()
        .parse()
        .map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: usize = hi
        .trim()
        .parse()
        .map_err(|e| format!("bad upper bound: {e}"))?;
    if lo == 0 || hi < lo {
        return Err(format!("range {lo}:{hi} must satisfy 1 <= LO <= HI"));
    }
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Motif(a) => commands::motif(g, &g.em()?, a),
        Command::Phmm {
            action: PhmmAction::Train(a),
        } => commands::phmm_train(g, &g.em()?, a),
        Command::Phmm {
            action: PhmmAction::Align(a),
        } => commands::phmm_align(g, a),
        Command::Conserve(a) => commands::conserve(g, &g.em()?, a),
        Command::Haplotype(a) => commands::haplotype(g, &g.em()?, a),
        Command::Cluster(a) => commands::cluster(g, &g.em()?, a),
        Command::Simulate { kind } => simulate::run(g, kind),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
