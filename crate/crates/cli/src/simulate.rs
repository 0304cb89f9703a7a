//! Synthetic data generators with ground-truth sidecars.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand};
use embio::phylo::{self, PhyloHmmParams};
use embio::rng::{derive_seed, rng_from_seed};
use embio::seqio::{write_alignment, write_fasta, Alphabet, Sequence};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::json;

use crate::report::{finish, write_atomic, Inputs, Outcome};
use crate::{CliError, GlobalArgs};

#[derive(Debug, Subcommand)]
pub enum SimulateKind {
    /// DNA alignment from the two-state conservation model on a tree.
    Phylo(PhyloSim),
    /// DNA sequences with one planted motif occurrence each.
    Motif(MotifSim),
    /// Spherical Gaussian clusters as CSV.
    Mixture(MixtureSim),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhyloSim {
    /// Newick tree; its branch lengths are the nonconserved lengths.
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub length: usize,
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.05)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.3)]
    pub rho: f64,
    /// Aligned FASTA destination.
    #[arg(long)]
    pub output: PathBuf,
    /// Ground-truth JSON destination (default: OUTPUT.truth.json).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MotifSim {
    #[arg(long, default_value_t = 20)]
    pub num_seqs: usize,
    #[arg(long, default_value_t = 50)]
    pub length: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MixtureSim {
    /// Component means separated by `;`, coordinates by `,` (e.g. `0,0;5,5`).
    #[arg(long, default_value = "0;10")]
    pub means: String,
    #[arg(long, default_value_t = 100)]
    pub per_component: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sd: f64,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

fn truth_path(output: &Path, truth: &Option<PathBuf>) -> PathBuf {
    truth.clone().unwrap_or_else(|| {
        let mut s = output.as_os_str().to_owned();
        s.push(".truth.json");
        PathBuf::from(s)
    })
}

fn write_truth(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("truth serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn run(global: &GlobalArgs, kind: SimulateKind) -> Result<(), CliError> {
    match kind {
        SimulateKind::Phylo(a) => phylo_sim(global, a),
        SimulateKind::Motif(a) => motif_sim(global, a),
        SimulateKind::Mixture(a) => mixture_sim(global, a),
    }
}

fn phylo_sim(global: &GlobalArgs, args: PhyloSim) -> Result<(), CliError> {
    let started = Instant::now();
    let mut inputs = Inputs::default();
    let tree = phylo::parse_newick(&inputs.read(&args.tree)?)?;
    let params = PhyloHmmParams::from_tree(&tree, args.mu, args.nu, args.rho);
    let (aln, hidden) = phylo::simulate(&tree, &params, args.length, global.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_atomic(&args.output, &write_alignment(&aln))?;
    let truth = json!({
        "model": "phylo",
        "seed": global.seed,
        "mu": args.mu,
        "nu": args.nu,
        "rho": args.rho,
        "length": args.length,
        "tree": phylo::write_newick(&tree, &tree.branch_lengths()),
        "conserved": hidden,
    });
    write_truth(&truth_path(&args.output, &args.truth), &truth)?;
    let mut table = String::from("column\tconserved\n");
    for (j, &c) in hidden.iter().enumerate() {
        writeln!(table, "{}\t{}", j + 1, u8::from(c)).unwrap();
    }
    let frac = hidden.iter().filter(|&&c| c).count() as f64 / hidden.len() as f64;
    let summary = format!(
        "simulated {} columns on {} leaves, {:.1}% conserved\n",
        args.length,
        aln.num_rows(),
        100.0 * frac
    );
    finish(
        global,
        inputs,
        started,
        Outcome {
            solver: "simulate-phylo",
            config: json!({ "global": global, "command": &args }),
            results: truth,
            trace: None,
            table,
            summary,
        },
    )
}

fn motif_sim(global: &GlobalArgs, args: MotifSim) -> Result<(), CliError> {
    let started = Instant::now();
    if args.width == 0 || args.width > args.length || args.num_seqs == 0 {
        return Err(CliError::Usage(format!(
            "need 1 <= width <= length and at least one sequence (width {}, length {})",
            args.width, args.length
        )));
    }
    let mut rng = rng_from_seed(derive_seed(global.seed, &[1]));
    let dna = Alphabet::Dna;
    let site: Vec<u8> = (0..args.width).map(|_| rng.random_range(0..4)).collect();
    let mut seqs = Vec::with_capacity(args.num_seqs);
    let mut starts = Vec::with_capacity(args.num_seqs);
    for i in 0..args.num_seqs {
        let mut r: Vec<u8> = (0..args.length).map(|_| rng.random_range(0..4)).collect();
        let at = rng.random_range(0..=args.length - args.width);
        r[at..at + args.width].copy_from_slice(&site);
        starts.push(at + 1);
        seqs.push(Sequence::new(format!("seq{}", i + 1), r));
    }
    write_atomic(&args.output, &write_fasta(&seqs, dna))?;
    let truth = json!({
        "model": "motif",
        "seed": global.seed,
        "motif": dna.decode(&site),
        "width": args.width,
        "length": args.length,
        "sites": seqs.iter().zip(&starts).map(|(s, &at)| json!({ "sequence": s.id, "start": at })).collect::<Vec<_>>(),
    });
    write_truth(&truth_path(&args.output, &args.truth), &truth)?;
    let mut table = String::from("sequence\tstart\n");
    for (s, at) in seqs.iter().zip(&starts) {
        writeln!(table, "{}\t{at}", s.id).unwrap();
    }
    let summary = format!(
        "simulated {} sequences of length {} with motif {}\n",
        args.num_seqs,
        args.length,
        dna.decode(&site)
    );
    finish(
        global,
        Inputs::default(),
        started,
        Outcome {
            solver: "simulate-motif",
            config: json!({ "global": global, "command": &args }),
            results: truth,
            trace: None,
            table,
            summary,
        },
    )
}

fn parse_means(s: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let means: Vec<Vec<f64>> = s
        .split(';')
        .map(|c| {
            c.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Usage(format!("bad mean {x:?}: {e}")))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let p = means[0].len();
    if means.iter().any(|m| m.len() != p) {
        return Err(CliError::Usage(
            "every mean needs the same number of coordinates".into(),
        ));
    }
    Ok(means)
}

fn mixture_sim(global: &GlobalArgs, args: MixtureSim) -> Result<(), CliError> {
    let started = Instant::now();
    let means = parse_means(&args.means)?;
    let noise = Normal::new(0.0, args.sd)
        .ok()
        .filter(|_| args.sd > 0.0)
        .ok_or_else(|| {
            CliError::Usage(format!("standard deviation {} must be positive", args.sd))
        })?;
    if args.per_component == 0 {
        return Err(CliError::Usage("--per-component must be positive".into()));
    }
    let mut rng = rng_from_seed(derive_seed(global.seed, &[2]));
    let p = means[0].len();
    let header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    let mut csv = format!("id,{}\n", header.join(","));
    let mut labels = Vec::new();
    let mut row = 0;
    for (k, m) in means.iter().enumerate() {
        for _ in 0..args.per_component {
            row += 1;
            let x: Vec<String> = m
                .iter()
                .map(|&c| format!("{}", c + noise.sample(&mut rng)))
                .collect();
            writeln!(csv, "r{row},{}", x.join(",")).unwrap();
            labels.push(k + 1);
        }
    }
    write_atomic(&args.output, csv.as_bytes())?;
    let truth = json!({
        "model": "mixture",
        "seed": global.seed,
        "means": means,
        "sd": args.sd,
        "per_component": args.per_component,
        "labels": labels,
    });
    write_truth(&truth_path(&args.output, &args.truth), &truth)?;
    let mut table = String::from("row\tcomponent\n");
    for (i, k) in labels.iter().enumerate() {
        writeln!(table, "r{}\t{k}", i + 1).unwrap();
    }
    let summary = format!(
        "simulated {} rows from {} components in {p} dimensions\n",
        row,
        means.len()
    );
    finish(
        global,
        Inputs::default(),
        started,
        Outcome {
            solver: "simulate-mixture",
            config: json!({ "global": global, "command": &args }),
            results: truth,
            trace: None,
            table,
            summary,
        },
    )
}
