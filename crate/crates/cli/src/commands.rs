//! Solver subcommands.

use std::fmt::Write as _;
use std::time::Instant;

use embio::em::EmConfig;
use embio::mixture::{self, MixtureFit, RcemConfig};
use embio::motif::{self, MotifConfig, MotifMode};
use embio::phylo;
use embio::profile_hmm::{self, ProfileHmm};
use embio::seqio::{
    parse_alignment, parse_fasta, parse_genotypes, parse_matrix, write_alignment, Alphabet,
};
use embio::{haplotype, numeric::argmax};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::report::{finish, to_json, write_atomic, Inputs, Outcome};
use crate::{
    CliError, ClusterArgs, ConserveArgs, GlobalArgs, HaplotypeArgs, MotifArgs, PhmmAlignArgs,
    PhmmTrainArgs,
};

fn config_echo(global: &GlobalArgs, args: &impl Serialize) -> serde_json::Value {
    json!({ "global": global, "command": args })
}

fn consensus(rows: &[Vec<f64>], alphabet: Alphabet) -> String {
    rows.iter()
        .map(|r| alphabet.letter(argmax(r).expect("nonempty row") as u8) as char)
        .collect()
}

pub fn motif(global: &GlobalArgs, em: &EmConfig, args: MotifArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut inputs = Inputs::default();
    let seqs = parse_fasta(&inputs.read(&args.fasta)?, args.alphabet)?;
    let width = args.width as usize;
    let config = MotifConfig {
        width,
        mode: args.mode,
        pseudocount: args.pseudocount,
        site_prior: args.site_prior,
    };
    let fit = motif::discover::<f64>(&seqs, args.alphabet.size(), config, em)?;
    let consensus = consensus(&fit.model.positions, args.alphabet);

    let mut table = String::from("sequence\tstart\tposterior\tsite\n");
    let mut sites = Vec::new();
    for ((l, p), s) in fit.posterior.best_sites().into_iter().zip(&seqs) {
        let site = args.alphabet.decode(&s.residues[l..l + width]);
        writeln!(table, "{}\t{}\t{p:.6}\t{site}", s.id, l + 1).unwrap();
        sites.push(json!({ "sequence": s.id, "start": l + 1, "posterior": p, "site": site }));
    }
    let summary = format!(
        "motif: {} sequences, width {width}, {} mode\nconsensus {consensus}\nlog-likelihood {:.6} (restart {})\n",
        seqs.len(),
        serde_json::to_value(args.mode).unwrap().as_str().unwrap(),
        fit.loglik,
        fit.best_restart
    );
    let results = json!({
        "alphabet": args.alphabet,
        "width": width,
        "mode": args.mode,
        "consensus": consensus,
        "loglik": fit.loglik,
        "site_prior": fit.site_prior,
        "best_restart": fit.best_restart,
        "background": fit.model.background,
        "positions": fit.model.positions,
        "sites": sites,
    });
    finish(
        global,
        inputs,
        started,
        Outcome {
            solver: if args.mode == MotifMode::Oops {
                "motif-oops"
            } else {
                "motif-zoops"
            },
            config: config_echo(global, &args),
            results,
            trace: Some(to_json(&fit.trace)),
            table,
            summary,
        },
    )
}

/// On-disk profile model.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    alphabet: Alphabet,
    hmm: ProfileHmm<f64>,
}

pub fn phmm_train(global: &GlobalArgs, em: &EmConfig, args: PhmmTrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut inputs = Inputs::default();
    let seqs = parse_fasta(&inputs.read(&args.fasta)?, args.alphabet)?;
    let fit = profile_hmm::train::<f64>(
        &seqs,
        args.weights.as_deref(),
        args.alphabet.size(),
        args.pseudocount,
        em,
    )?;
    let consensus = consensus(&fit.hmm.match_emissions, args.alphabet);
    let model = ModelFile {
        alphabet: args.alphabet,
        hmm: fit.hmm,
    };
    if let Some(path) = &args.model {
        let mut bytes = serde_json::to_vec_pretty(&model).expect("model serializes");
        bytes.push(b'\n');
        write_atomic(path, &bytes)?;
    }
    let mut table = String::from("match_state\tconsensus\tprobability\n");
    for (j, row) in model.hmm.match_emissions.iter().enumerate() {
        let r = argmax(row).expect("nonempty row");
        writeln!(
            table,
            "M{}\t{}\t{:.6}",
            j + 1,
            args.alphabet.letter(r as u8) as char,
            row[r]
        )
        .unwrap();
    }
    let summary = format!(
        "profile HMM: {} sequences, {} match states\nconsensus {consensus}\nlog-likelihood {:.6} (restart {})\n",
        seqs.len(),
        model.hmm.num_match(),
        fit.loglik,
        fit.best_restart
    );
    let results = json!({
        "alphabet": args.alphabet,
        "num_match": model.hmm.num_match(),
        "consensus": consensus,
        "loglik": fit.loglik,
        "best_restart": fit.best_restart,
        "model": model.hmm,
    });
    finish(
        global,
        inputs,
        started,
        Outcome {
            solver: "phmm-train",
            config: config_echo(global, &args),
            results,
            trace: Some(to_json(&fit.trace)),
            table,
            summary,
        },
    )
}

pub fn phmm_align(global: &GlobalArgs, args: PhmmAlignArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut inputs = Inputs::default();
    let model: ModelFile = serde_json::from_slice(&inputs.read(&args.model)?).map_err(|e| {
        CliError::Data(format!(
            "{} is not a profile model: {e}",
            args.model.display()
        ))
    })?;
    model.hmm.validate()?;
    if model.hmm.alphabet_size() != model.alphabet.size() {
        return Err(CliError::Data(
            "model tables do not match its declared alphabet".into(),
        ));
    }
    if let Some(a) = args.alphabet {
        if a != model.alphabet {
            return Err(CliError::Data(format!(
                "model alphabet is {} but {} was requested",
                to_json(&model.alphabet),
                to_json(&a)
            )));
        }
    }
    let seqs = parse_fasta(&inputs.read(&args.fasta)?, model.alphabet)?;
    let (paths, aln) = profile_hmm::align(&model.hmm, &seqs, model.alphabet)?;
    let fasta = write_alignment(&aln);
    let mut table = String::from("sequence\tviterbi_log_prob\n");
    let mut scores = Vec::new();
    for (s, path) in seqs.iter().zip(&paths) {
        let lp = profile_hmm::path_log_prob(&model.hmm, path, &s.residues);
        writeln!(table, "{}\t{lp:.6}", s.id).unwrap();
        scores.push(json!({ "sequence": s.id, "viterbi_log_prob": lp }));
    }
    let summary = match &args.aligned {
        Some(path) => {
            write_atomic(path, &fasta)?;
            format!(
                "aligned {} sequences into {} columns\n",
                aln.num_rows(),
                aln.num_columns()
            )
        }
        None => String::from_utf8(fasta.clone()).expect("alignment text is ASCII"),
    };
    let results = json!({
        "num_columns": aln.num_columns(),
        "alignment": String::from_utf8(fasta).expect("alignment text is ASCII"),
        "paths": scores,
    });
    finish(
        global,
        inputs,
        started,
        Outcome {
            solver: "phmm-align",
            config: config_echo(global, &args),
            results,
            trace: None,
            table,
            summary,
        },
    )
}

pub fn conserve(global: &GlobalArgs, em: &EmConfig, args: ConserveArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut inputs = Inputs::default();
    let aln = parse_alignment(&inputs.read(&args.alignment)?, Alphabet::Dna)?;
    let tree = phylo::parse_newick(&inputs.read(&args.tree)?)?;
    let fit = phylo::fit::<f64>(&aln, &tree, em)?;
    let scores = phylo::conservation_scores(&aln, &tree, &fit.params)?;
    let mut table = String::from("column\tconserved_posterior\n");
    for (j, s) in scores.iter().enumerate() {
        writeln!(table, "{}\t{s:.6}", j + 1).unwrap();
    }
    let fitted_tree = phylo::write_newick(&tree, &fit.params.branch_lengths);
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let summary = format!(
        "conservation: {} columns, {} leaves\nmu {:.4}  nu {:.4}  rho {:.4}\nmean conserved posterior {mean:.4}\nlog-likelihood {:.6} (restart {})\n",
        aln.num_columns(),
        aln.num_rows(),
        fit.params.mu,
        fit.params.nu,
        fit.params.rho,
        fit.loglik,
        fit.best_restart
    );
    let results = json!({
        "mu": fit.params.mu,
        "nu": fit.params.nu,
        "rho": fit.params.rho,
        "tree": fitted_tree,
        "loglik": fit.loglik,
        "best_restart": fit.best_restart,
        "conserved_posterior": scores,
    });
    finish(
        global,
        inputs,
        started,
        Outcome {
            solver: "phylo-hmm",
            config: config_echo(global, &args),
            results,
            trace: Some(to_json(&fit.trace)),
            table,
            summary,
        },
    )
}

pub fn haplotype(global: &GlobalArgs, em: &EmConfig, args: HaplotypeArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut inputs = Inputs::default();
    let table_in = parse_genotypes(&inputs.read(&args.genotypes)?)?;
    let fit = haplotype::phase::<f64>(&table_in, em, args.max_het)?;
    let names: Vec<String> = fit
        .pool
        .haplotypes
        .iter()
        .map(|h| haplotype::render(h, &table_in.loci))
        .collect();
    let mut table = String::from("individual\thaplotype1\thaplotype2\tposterior\n");
    let mut phases = Vec::new();
    for (id, call) in table_in.ids.iter().zip(&fit.calls) {
        let (a, b) = (&names[call.first], &names[call.second]);
        writeln!(table, "{id}\t{a}\t{b}\t{:.6}", call.posterior).unwrap();
        phases.push(json!({ "individual": id, "haplotypes": [a, b], "posterior": call.posterior }));
    }
    let freqs: Vec<_> = names
        .iter()
        .zip(&fit.pool.frequencies)
        .map(|(h, f)| json!({ "haplotype": h, "frequency": f }))
        .collect();
    let mut summary = format!(
        "haplotypes: {} individuals, {} loci, pool of {}\n",
        table_in.num_individuals(),
        table_in.num_loci(),
        names.len()
    );
    for (h, f) in names.iter().zip(&fit.pool.frequencies) {
        writeln!(summary, "  {h}\t{f:.6}").unwrap();
    }
    writeln!(
        summary,
        "log-likelihood {:.6} (restart {})",
        fit.loglik, fit.best_restart
    )
    .unwrap();
    let results = json!({
        "pool_size": names.len(),
        "frequencies": freqs,
        "phases": phases,
        "loglik": fit.loglik,
        "best_restart": fit.best_restart,
    });
    finish(
        global,
        inputs,
        started,
        Outcome {
            solver: "haplotype",
            config: config_echo(global, &args),
            results,
            trace: Some(to_json(&fit.trace)),
            table,
            summary,
        },
    )
}

pub fn cluster(global: &GlobalArgs, em: &EmConfig, args: ClusterArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut inputs = Inputs::default();
    let matrix = parse_matrix(&inputs.read(&args.data)?)?;
    if matrix.num_rows() == 0 {
        return Err(CliError::Data(format!(
            "{} holds no data rows",
            args.data.display()
        )));
    }
    let rcem = args
        .rcem_c
        .map(|c| RcemConfig::new(c, global.seed))
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (fit, bic_table): (MixtureFit<f64>, Option<serde_json::Value>) =
        match (args.k, args.k_range) {
            (Some(k), _) => (
                mixture::fit(&matrix.rows, k as usize, args.family, em, rcem)?,
                None,
            ),
            (None, Some((lo, hi))) => {
                let ks: Vec<usize> = (lo..=hi).collect();
                let sel = mixture::select_k(&matrix.rows, &ks, args.family, em, rcem)?;
                (sel.best, Some(to_json(&sel.table)))
            }
            (None, None) => {
                return Err(CliError::Usage(
                    "one of --k or --k-range is required".into(),
                ))
            }
        };
    let assignments = fit.assignments();
    let mut table = String::from("row\tcluster\tresponsibility\n");
    for ((id, &k), r) in matrix
        .row_ids
        .iter()
        .zip(&assignments)
        .zip(&fit.responsibilities)
    {
        writeln!(table, "{id}\t{}\t{:.6}", k + 1, r[k]).unwrap();
    }
    let k = fit.model.num_components();
    let mut summary = format!(
        "mixture: {} rows, {} columns, {k} components ({:?})\n",
        matrix.num_rows(),
        matrix.num_columns(),
        args.family
    );
    for (i, c) in fit.model.components.iter().enumerate() {
        let mean: Vec<String> = c.mean.iter().map(|m| format!("{m:.4}")).collect();
        writeln!(
            summary,
            "  component {}: weight {:.4}, mean [{}]",
            i + 1,
            c.weight,
            mean.join(", ")
        )
        .unwrap();
    }
    writeln!(
        summary,
        "log-likelihood {:.6}, BIC {:.4} (restart {})",
        fit.loglik, fit.bic, fit.best_restart
    )
    .unwrap();
    let results = json!({
        "k": k,
        "family": args.family,
        "rcem": rcem,
        "loglik": fit.loglik,
        "bic": fit.bic,
        "free_parameters": fit.model.free_parameters(),
        "best_restart": fit.best_restart,
        "components": fit.model.components,
        "assignments": assignments.iter().map(|k| k + 1).collect::<Vec<_>>(),
        "bic_table": bic_table,
    });
    finish(
        global,
        inputs,
        started,
        Outcome {
            solver: "mixture",
            config: config_echo(global, &args),
            results,
            trace: Some(to_json(&fit.trace)),
            table,
            summary,
        },
    )
}
