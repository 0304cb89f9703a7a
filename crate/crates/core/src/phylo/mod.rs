//! Two-state phylogenetic HMM for per-column conservation scoring.
//!
//! Each alignment column is emitted by either a conserved state, whose branch
//! lengths are `rho * beta`, or a nonconserved state with branch lengths `beta`.
//! The state sequence is a stationary two-state Markov chain with
//! `P(c -> n) = mu` and `P(n -> c) = nu`. Substitution is unit-rate Jukes-Cantor
//! with a uniform root distribution; ancestral residues are summed out by pruning.

mod chain;
pub mod optimize;
mod substitution;
mod tree;

pub use chain::{
    chain_forward_backward, chain_forward_backward_log, stationary, ChainPosterior, CONSERVED,
    NONCONSERVED,
};
pub use substitution::{
    column_likelihood, column_log_likelihood, jc_rate_matrix, jc_stationary, jc_transition,
    Matrix4, PruningPlan,
};
pub use tree::{parse_newick, write_newick, Node, PhyloTree, DEFAULT_BRANCH_LENGTH};

use std::collections::{BTreeSet, HashMap};
use std::marker::PhantomData;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::em::{multi_start, EmConfig, EmProblem, EmTrace, StepContext};
use crate::numeric::NeumaierSum;
use crate::rng::rng_from_seed;
use crate::seqio::{Alignment, Alphabet, GAP};
use crate::{Error, Real, Result};
use optimize::{maximize_bounded, Maximum, OptimizeOptions};

pub const RHO_BOUNDS: (f64, f64) = (1e-4, 0.999);
pub const BRANCH_BOUNDS: (f64, f64) = (1e-6, 10.0);
const CHAIN_BOUNDS: (f64, f64) = (1e-6, 1.0 - 1e-6);
const M_STEP_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyloHmmParams<T> {
    /// `P(conserved -> nonconserved)`.
    pub mu: T,
    /// `P(nonconserved -> conserved)`.
    pub nu: T,
    /// Conserved-state branch-length scale.
    pub rho: T,
    /// Nonconserved branch lengths indexed by tree node (the root entry is unused).
    pub branch_lengths: Vec<T>,
}

impl<T: Real> PhyloHmmParams<T> {
    /// Takes initial branch lengths from the tree, clamped to the allowed range.
    pub fn from_tree(tree: &PhyloTree, mu: T, nu: T, rho: T) -> Self {
        let mut branch_lengths: Vec<T> = tree
            .branch_lengths()
            .into_iter()
            .map(|b| T::lit(b.clamp(BRANCH_BOUNDS.0, BRANCH_BOUNDS.1)))
            .collect();
        branch_lengths[tree.root] = T::zero();
        PhyloHmmParams {
            mu,
            nu,
            rho,
            branch_lengths,
        }
    }

    pub fn validate(&self, tree: &PhyloTree) -> Result<()> {
        let open = |x: T| x > T::zero() && x < T::one();
        if !open(self.mu) || !open(self.nu) {
            return Err(Error::Config(format!(
                "mu={} and nu={} must lie in (0, 1)",
                self.mu, self.nu
            )));
        }
        if !(self.rho > T::zero() && self.rho <= T::one()) {
            return Err(Error::Config(format!(
                "rho={} must lie in (0, 1]",
                self.rho
            )));
        }
        if self.branch_lengths.len() != tree.num_nodes() {
            return Err(Error::Config(
                "one branch length per tree node is required".into(),
            ));
        }
        if tree
            .edges()
            .iter()
            .any(|&v| !(self.branch_lengths[v] >= T::zero()))
        {
            return Err(Error::Config("branch lengths must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Alignment columns compressed to distinct site patterns, rows in tree-leaf order.
#[derive(Debug, Clone, PartialEq)]
pub struct SitePatterns {
    pub patterns: Vec<Vec<u8>>,
    /// Pattern index of every alignment column.
    pub column_pattern: Vec<usize>,
}

impl SitePatterns {
    /// Maps alignment rows to tree leaves by name and compresses columns.
    pub fn new(alignment: &Alignment, tree: &PhyloTree) -> Result<Self> {
        tree.check_binary()?;
        if alignment.alphabet != Alphabet::Dna {
            return Err(Error::Input(
                "the conservation model needs a DNA alignment".into(),
            ));
        }
        let names = tree.leaf_names();
        let leaf_set: BTreeSet<&str> = names.iter().map(String::as_str).collect();
        let row_set: BTreeSet<&str> = alignment.ids.iter().map(String::as_str).collect();
        if leaf_set != row_set {
            let only_tree: Vec<&str> = leaf_set.difference(&row_set).copied().collect();
            let only_rows: Vec<&str> = row_set.difference(&leaf_set).copied().collect();
            return Err(Error::Input(format!(
                "tree leaves and alignment rows differ: only in tree {only_tree:?}, only in alignment {only_rows:?}"
            )));
        }
        if names.len() != alignment.num_rows() || leaf_set.len() != names.len() {
            return Err(Error::Input(format!(
                "tree has {} leaves but the alignment has {} rows; names must be unique",
                names.len(),
                alignment.num_rows()
            )));
        }
        let row_of: HashMap<&str, usize> = alignment
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows = names
            .iter()
            .map(|n| {
                row_of
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::Input(format!("tree leaf {n:?} has no alignment row")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(j) = alignment.first_gap_column() {
            return Err(Error::Input(format!("alignment column {j} contains a gap")));
        }
        let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let mut column_pattern = Vec::with_capacity(alignment.num_columns());
        for j in 0..alignment.num_columns() {
            let col: Vec<u8> = rows.iter().map(|&r| alignment.rows[r][j]).collect();
            debug_assert!(col.iter().all(|&b| b != GAP));
            let next = patterns.len();
            let p = *index.entry(col.clone()).or_insert(next);
            if p == next {
                patterns.push(col);
            }
            column_pattern.push(p);
        }
        Ok(SitePatterns {
            patterns,
            column_pattern,
        })
    }

    pub fn num_columns(&self) -> usize {
        self.column_pattern.len()
    }
}

/// Per-pattern log-likelihoods under the conserved and nonconserved states.
pub fn pattern_log_likelihoods<T: Real>(
    plan: &PruningPlan,
    patterns: &[Vec<u8>],
    branch_lengths: &[T],
    rho: T,
) -> Result<(Vec<T>, Vec<T>)> {
    let ec = plan.edge_entries(branch_lengths, rho);
    let en = plan.edge_entries(branch_lengths, T::one());
    let mut lc = Vec::with_capacity(patterns.len());
    let mut ln = Vec::with_capacity(patterns.len());
    for p in patterns {
        lc.push(plan.log_likelihood_with(&ec, p)?);
        ln.push(plan.log_likelihood_with(&en, p)?);
    }
    Ok((lc, ln))
}

/// Posterior state weights summed per pattern, plus chain expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyloStats<T> {
    pub pattern_conserved: Vec<T>,
    pub pattern_nonconserved: Vec<T>,
    pub transitions: [[T; 2]; 2],
    /// Posterior of the first column's state.
    pub first: [T; 2],
    pub num_columns: usize,
}

/// Expected log-likelihood of the emissions as a function of `(rho, beta)`,
/// divided by the number of columns. `x = [rho, beta_e for e in edges]`.
pub fn branch_objective(
    plan: &PruningPlan,
    tree: &PhyloTree,
    patterns: &[Vec<u8>],
    weight_c: &[f64],
    weight_n: &[f64],
    num_columns: usize,
    x: &[f64],
) -> f64 {
    let mut lens = vec![0.0; tree.num_nodes()];
    for (k, v) in tree.edges().into_iter().enumerate() {
        lens[v] = x[k + 1];
    }
    let Ok((lc, ln)) = pattern_log_likelihoods(plan, patterns, &lens, x[0]) else {
        return f64::NEG_INFINITY;
    };
    let mut acc = NeumaierSum::default();
    for p in 0..patterns.len() {
        if weight_c[p] > 0.0 {
            acc.add(weight_c[p] * lc[p]);
        }
        if weight_n[p] > 0.0 {
            acc.add(weight_n[p] * ln[p]);
        }
    }
    acc.value() / num_columns as f64
}

/// Bounded quasi-Newton maximization of [`branch_objective`] from `start`.
pub fn maximize_branch_objective(
    plan: &PruningPlan,
    tree: &PhyloTree,
    patterns: &[Vec<u8>],
    weight_c: &[f64],
    weight_n: &[f64],
    num_columns: usize,
    start: &[f64],
) -> Maximum {
    let n = start.len();
    let mut lower = vec![BRANCH_BOUNDS.0; n];
    let mut upper = vec![BRANCH_BOUNDS.1; n];
    lower[0] = RHO_BOUNDS.0;
    upper[0] = RHO_BOUNDS.1;
    let f = |x: &[f64]| branch_objective(plan, tree, patterns, weight_c, weight_n, num_columns, x);
    maximize_bounded(
        f,
        start,
        &lower,
        &upper,
        OptimizeOptions {
            gradient_tol: M_STEP_TOL,
            max_iter: 500,
        },
    )
}

/// Expected complete-data log-likelihood of the chain parameters.
fn chain_objective(counts: &[[f64; 2]; 2], first: [f64; 2], mu: f64, nu: f64) -> f64 {
    let [bc, bn] = stationary(mu, nu);
    counts[0][0] * (1.0 - mu).ln()
        + counts[0][1] * mu.ln()
        + counts[1][0] * nu.ln()
        + counts[1][1] * (1.0 - nu).ln()
        + first[0] * bc.ln()
        + first[1] * bn.ln()
}

/// Updates `(mu, nu)`: the transition-count ratios are the starting point (or the
/// previous values if those score better), refined against the full expected
/// log-likelihood, which also contains the stationary first-column term.
fn update_chain(counts: &[[f64; 2]; 2], first: [f64; 2], old: (f64, f64)) -> (f64, f64) {
    let clamp = |x: f64| x.clamp(CHAIN_BOUNDS.0, CHAIN_BOUNDS.1);
    let ratio = |a: f64, b: f64, fallback: f64| {
        if a + b > 0.0 {
            clamp(a / (a + b))
        } else {
            fallback
        }
    };
    let closed = (
        ratio(counts[0][1], counts[0][0], old.0),
        ratio(counts[1][0], counts[1][1], old.1),
    );
    let q = |x: &[f64]| chain_objective(counts, first, x[0], x[1]);
    let start = if q(&[closed.0, closed.1]) >= q(&[old.0, old.1]) {
        closed
    } else {
        old
    };
    let scale = 1.0 / (counts.iter().flatten().sum::<f64>() + 1.0);
    let m = maximize_bounded(
        |x| q(x) * scale,
        &[start.0, start.1],
        &[CHAIN_BOUNDS.0; 2],
        &[CHAIN_BOUNDS.1; 2],
        OptimizeOptions {
            gradient_tol: 1e-10,
            max_iter: 100,
        },
    );
    (m.x[0], m.x[1])
}

/// Conservation model fit as an [`EmProblem`].
pub struct PhyloProblem<'a, T> {
    tree: &'a PhyloTree,
    plan: PruningPlan,
    data: SitePatterns,
    scalar: PhantomData<T>,
}

impl<'a, T: Real> PhyloProblem<'a, T> {
    pub fn new(alignment: &Alignment, tree: &'a PhyloTree) -> Result<Self> {
        let data = SitePatterns::new(alignment, tree)?;
        if data.num_columns() == 0 {
            return Err(Error::Input("alignment has no columns".into()));
        }
        Ok(PhyloProblem {
            tree,
            plan: PruningPlan::new(tree)?,
            data,
            scalar: PhantomData,
        })
    }

    pub fn patterns(&self) -> &SitePatterns {
        &self.data
    }

    fn column_logliks(&self, params: &PhyloHmmParams<T>) -> Result<(Vec<T>, Vec<T>)> {
        let (pc, pn) = pattern_log_likelihoods(
            &self.plan,
            &self.data.patterns,
            &params.branch_lengths,
            params.rho,
        )?;
        Ok((
            self.data.column_pattern.iter().map(|&p| pc[p]).collect(),
            self.data.column_pattern.iter().map(|&p| pn[p]).collect(),
        ))
    }

    /// Chain posterior at `params` over every alignment column.
    pub fn posterior(&self, params: &PhyloHmmParams<T>) -> Result<ChainPosterior<T>> {
        params.validate(self.tree)?;
        let (lc, ln) = self.column_logliks(params)?;
        chain_forward_backward_log(&lc, &ln, params.mu, params.nu)
    }

    /// The `(rho, beta)` half of the M-step, exposed for diagnostics.
    pub fn maximize_branches(&self, stats: &PhyloStats<T>, params: &PhyloHmmParams<T>) -> Maximum {
        let wc: Vec<f64> = stats.pattern_conserved.iter().map(|x| x.as_f64()).collect();
        let wn: Vec<f64> = stats
            .pattern_nonconserved
            .iter()
            .map(|x| x.as_f64())
            .collect();
        let mut start = vec![params.rho.as_f64().clamp(RHO_BOUNDS.0, RHO_BOUNDS.1)];
        start.extend(self.tree.edges().into_iter().map(|v| {
            params.branch_lengths[v]
                .as_f64()
                .clamp(BRANCH_BOUNDS.0, BRANCH_BOUNDS.1)
        }));
        maximize_branch_objective(
            &self.plan,
            self.tree,
            &self.data.patterns,
            &wc,
            &wn,
            stats.num_columns,
            &start,
        )
    }
}

impl<T: Real> EmProblem for PhyloProblem<'_, T> {
    type Scalar = T;
    type Params = PhyloHmmParams<T>;
    type Stats = PhyloStats<T>;

    /// Restart 0 starts at `mu = nu = 0.1`, `rho = 0.5` with the tree's branch
    /// lengths; later restarts draw the chain parameters and `rho` at random and
    /// jitter each branch length by a factor in `[e^-0.5, e^0.5]`.
    fn initialize(&self, restart: usize, rng: &mut ChaCha8Rng) -> Result<PhyloHmmParams<T>> {
        let mut params =
            PhyloHmmParams::from_tree(self.tree, T::lit(0.1), T::lit(0.1), T::lit(0.5));
        if restart > 0 {
            params.mu = T::lit(rng.random_range(0.01..0.3));
            params.nu = T::lit(rng.random_range(0.01..0.3));
            params.rho = T::lit(rng.random_range(0.1..0.9));
            for v in self.tree.edges() {
                let f: f64 = rng.random_range(-0.5..0.5);
                let b = (params.branch_lengths[v].as_f64() * f.exp())
                    .clamp(BRANCH_BOUNDS.0, BRANCH_BOUNDS.1);
                params.branch_lengths[v] = T::lit(b);
            }
        }
        Ok(params)
    }

    fn e_step(&self, params: &PhyloHmmParams<T>, _: StepContext) -> Result<(PhyloStats<T>, T)> {
        let post = self.posterior(params)?;
        let k = self.data.patterns.len();
        let mut wc = vec![NeumaierSum::default(); k];
        let mut wn = vec![NeumaierSum::default(); k];
        for (&p, &g) in self.data.column_pattern.iter().zip(&post.conserved) {
            wc[p].add(g);
            wn[p].add(T::one() - g);
        }
        let g0 = post.conserved[0];
        Ok((
            PhyloStats {
                pattern_conserved: wc.iter().map(NeumaierSum::value).collect(),
                pattern_nonconserved: wn.iter().map(NeumaierSum::value).collect(),
                transitions: post.transitions,
                first: [g0, T::one() - g0],
                num_columns: self.data.num_columns(),
            },
            post.loglik,
        ))
    }

    fn m_step(
        &self,
        stats: &PhyloStats<T>,
        params: &PhyloHmmParams<T>,
    ) -> Result<PhyloHmmParams<T>> {
        let counts = stats.transitions.map(|r| r.map(|x| x.as_f64()));
        let first = stats.first.map(|x| x.as_f64());
        let (mu, nu) = update_chain(&counts, first, (params.mu.as_f64(), params.nu.as_f64()));
        let best = self.maximize_branches(stats, params);
        let mut next = params.clone();
        next.mu = T::lit(mu);
        next.nu = T::lit(nu);
        next.rho = T::lit(best.x[0]);
        for (k, v) in self.tree.edges().into_iter().enumerate() {
            next.branch_lengths[v] = T::lit(best.x[k + 1]);
        }
        Ok(next)
    }

    fn log_likelihood(&self, params: &PhyloHmmParams<T>) -> Result<T> {
        Ok(self.posterior(params)?.loglik)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyloFit<T> {
    pub params: PhyloHmmParams<T>,
    pub loglik: T,
    pub trace: EmTrace<T>,
    pub best_restart: usize,
}

/// Fits `(mu, nu, rho, beta)` by seeded multi-start EM. The tree supplies the
/// topology and the starting branch lengths.
pub fn fit<T: Real>(alignment: &Alignment, tree: &PhyloTree, em: &EmConfig) -> Result<PhyloFit<T>> {
    let problem = PhyloProblem::<T>::new(alignment, tree)?;
    let result = multi_start(&problem, em)?;
    let params = result.best.params;
    let loglik = problem.posterior(&params)?.loglik;
    Ok(PhyloFit {
        params,
        loglik,
        trace: result.best.trace,
        best_restart: result.best.index,
    })
}

/// `P(z_i = conserved | alignment, params)` for every column.
pub fn conservation_scores<T: Real>(
    alignment: &Alignment,
    tree: &PhyloTree,
    params: &PhyloHmmParams<T>,
) -> Result<Vec<T>> {
    Ok(PhyloProblem::<T>::new(alignment, tree)?
        .posterior(params)?
        .conserved)
}

/// Log-likelihood of the alignment under `params`.
pub fn log_likelihood<T: Real>(
    alignment: &Alignment,
    tree: &PhyloTree,
    params: &PhyloHmmParams<T>,
) -> Result<T> {
    Ok(PhyloProblem::<T>::new(alignment, tree)?
        .posterior(params)?
        .loglik)
}

/// Samples an alignment: states from the stationary chain, root residues from
/// the uniform distribution, then each edge by Jukes-Cantor with conserved
/// columns using `rho`-scaled branches. Rows follow [`PhyloTree::leaves`] order.
pub fn simulate<T: Real>(
    tree: &PhyloTree,
    params: &PhyloHmmParams<T>,
    length: usize,
    seed: u64,
) -> Result<(Alignment, Vec<bool>)> {
    tree.check_binary()?;
    params.validate(tree)?;
    if length == 0 {
        return Err(Error::Config(
            "simulated alignment length must be positive".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mu = params.mu.as_f64();
    let nu = params.nu.as_f64();
    let rho = params.rho.as_f64();
    let lens: Vec<f64> = params.branch_lengths.iter().map(|b| b.as_f64()).collect();
    let same_c: Vec<f64> = lens
        .iter()
        .map(|&b| substitution::jc_entries(b * rho).0)
        .collect();
    let same_n: Vec<f64> = lens
        .iter()
        .map(|&b| substitution::jc_entries(b).0)
        .collect();
    let mut preorder = tree.postorder();
    preorder.reverse();
    let leaves = tree.leaves();

    let mut states = Vec::with_capacity(length);
    let mut rows = vec![Vec::with_capacity(length); leaves.len()];
    let mut residue = vec![0u8; tree.num_nodes()];
    let mut conserved = rng.random::<f64>() < nu / (mu + nu);
    for i in 0..length {
        if i > 0 {
            let flip = if conserved { mu } else { nu };
            if rng.random::<f64>() < flip {
                conserved = !conserved;
            }
        }
        states.push(conserved);
        let same = if conserved { &same_c } else { &same_n };
        for &v in &preorder {
            residue[v] = match tree.nodes[v].parent {
                None => rng.random_range(0..4),
                Some(p) => {
                    if rng.random::<f64>() < same[v] {
                        residue[p]
                    } else {
                        // uniform over the three other residues
                        let k: u8 = rng.random_range(0..3);
                        if k >= residue[p] {
                            k + 1
                        } else {
                            k
                        }
                    }
                }
            };
        }
        for (row, &leaf) in rows.iter_mut().zip(&leaves) {
            row.push(residue[leaf]);
        }
    }
    let alignment = Alignment::new(Alphabet::Dna, tree.leaf_names(), rows)?;
    Ok((alignment, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::run_em;

    fn four_leaf() -> PhyloTree {
        parse_newick(b"((A:0.3,B:0.3):0.2,(C:0.3,D:0.3):0.2);").unwrap()
    }

    fn aln(rows: &[&str]) -> Alignment {
        let ids = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        Alignment::new(
            Alphabet::Dna,
            ids,
            rows.iter().map(|r| Alphabet::Dna.encode(r)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn patterns_compress_and_map_by_name() {
        let tree = four_leaf();
        let a = Alignment::new(
            Alphabet::Dna,
            vec!["D".into(), "C".into(), "B".into(), "A".into()],
            vec![
                Alphabet::Dna.encode("AAC"),
                Alphabet::Dna.encode("AAC"),
                Alphabet::Dna.encode("AAC"),
                Alphabet::Dna.encode("AAG"),
            ],
        )
        .unwrap();
        let sp = SitePatterns::new(&a, &tree).unwrap();
        assert_eq!(sp.patterns.len(), 2);
        assert_eq!(sp.column_pattern, vec![0, 0, 1]);
        // leaf A (first in tree order) is the alignment's last row
        assert_eq!(sp.patterns[1], vec![2, 1, 1, 1]);
    }

    #[test]
    fn gaps_and_missing_leaves_are_rejected() {
        let tree = four_leaf();
        let gapped =
            crate::seqio::parse_alignment(b">A\nA-\n>B\nAA\n>C\nAA\n>D\nAA\n", Alphabet::Dna)
                .unwrap();
        assert!(SitePatterns::new(&gapped, &tree).is_err());
        let other = parse_newick(b"((A,B),(C,E));").unwrap();
        assert!(SitePatterns::new(&aln(&["A", "A", "A", "A"]), &other).is_err());
        let multifurcating = parse_newick(b"(A,B,C,D);").unwrap();
        assert!(SitePatterns::new(&aln(&["A", "A", "A", "A"]), &multifurcating).is_err());
    }

    #[test]
    fn near_one_rho_gives_flat_track() {
        let tree = four_leaf();
        let params = PhyloHmmParams::<f64>::from_tree(&tree, 0.1, 0.05, 0.999999);
        let scores = conservation_scores(
            &aln(&["ACGTAC", "ACGAAC", "TCGTAG", "ACCTAC"]),
            &tree,
            &params,
        )
        .unwrap();
        for s in scores {
            assert!((s - 1.0 / 3.0).abs() < 1e-4, "{s}");
        }
    }

    #[test]
    fn identical_column_scores_above_discordant() {
        let tree = four_leaf();
        let params = PhyloHmmParams::<f64>::from_tree(&tree, 0.2, 0.2, 0.2);
        // columns 0..3 shared; column 1 is AAAA in one and ACGT in the other
        let s1 = conservation_scores(&aln(&["CAG", "CAG", "TAG", "CAG"]), &tree, &params).unwrap();
        let s2 = conservation_scores(&aln(&["CAG", "CCG", "TGG", "CTG"]), &tree, &params).unwrap();
        assert!(s1[1] > s2[1], "{} vs {}", s1[1], s2[1]);
        // the emission ratio favours the conserved state more for the identical column
        let plan = PruningPlan::new(&tree).unwrap();
        let lens = params.branch_lengths.clone();
        let ratio = |col: &[u8]| {
            plan.log_likelihood(&lens, col, 0.2).unwrap()
                - plan.log_likelihood(&lens, col, 1.0).unwrap()
        };
        assert!(ratio(&[0, 0, 0, 0]) > ratio(&[0, 1, 2, 3]));
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let tree = four_leaf();
        let params = PhyloHmmParams::<f64>::from_tree(&tree, 0.1, 0.05, 0.3);
        let a = simulate(&tree, &params, 300, 5).unwrap();
        let b = simulate(&tree, &params, 300, 5).unwrap();
        let c = simulate(&tree, &params, 300, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn balanced_chain_visits_states_equally() {
        let tree = four_leaf();
        let params = PhyloHmmParams::<f64>::from_tree(&tree, 0.5, 0.5, 0.3);
        let (_, states) = simulate(&tree, &params, 10_000, 17).unwrap();
        let c = states.iter().filter(|&&s| s).count() as f64;
        // 3 sigma of Binomial(10^4, 1/2) is 150
        assert!((c - 5000.0).abs() < 150.0, "{c}");
    }

    #[test]
    fn conserved_columns_are_mostly_monomorphic() {
        let tree = parse_newick(b"((A:2,B:2):2,(C:2,D:2):2);").unwrap();
        let params = PhyloHmmParams::<f64>::from_tree(&tree, 0.01, 0.99, 0.001);
        let (a, states) = simulate(&tree, &params, 4000, 9).unwrap();
        let mut mono = 0;
        let mut total = 0;
        for j in 0..a.num_columns() {
            if states[j] {
                total += 1;
                let col = a.column(j);
                mono += usize::from(col.iter().all(|&r| r == col[0]));
            }
        }
        // at least the probability that all six edges keep their residue
        let keep = jc_transition(2.0 * 0.001f64).unwrap()[0][0];
        let frac = mono as f64 / total as f64;
        assert!(frac >= keep.powi(6) - 0.01, "{frac}");
    }

    #[test]
    fn em_trace_is_monotone_and_m_step_is_stationary() {
        let tree = four_leaf();
        let truth = PhyloHmmParams::<f64>::from_tree(&tree, 0.1, 0.05, 0.3);
        let (a, _) = simulate(&tree, &truth, 400, 3).unwrap();
        let problem = PhyloProblem::<f64>::new(&a, &tree).unwrap();
        let init = PhyloHmmParams::from_tree(&tree, 0.2, 0.2, 0.5);
        let cfg = EmConfig::new(1e-8, 30, 1, 0).unwrap();
        let (params, trace) = run_em(&problem, init, &cfg).unwrap();
        assert!(trace.is_monotone(1e-9), "{:?}", trace.loglik_per_iter);
        let (stats, _) = problem
            .e_step(
                &params,
                StepContext {
                    seed: 0,
                    iteration: 0,
                },
            )
            .unwrap();
        let m = problem.maximize_branches(&stats, &params);
        assert!(m.projected_gradient < 1e-4, "{}", m.projected_gradient);
    }

    #[test]
    fn chain_update_beats_previous_values() {
        let counts = [[40.0, 5.0], [3.0, 51.0]];
        let first = [0.7, 0.3];
        let old = (0.3, 0.4);
        let (mu, nu) = update_chain(&counts, first, old);
        assert!(
            chain_objective(&counts, first, mu, nu)
                >= chain_objective(&counts, first, old.0, old.1)
        );
        assert!(
            chain_objective(&counts, first, mu, nu)
                >= chain_objective(&counts, first, 5.0 / 45.0, 3.0 / 54.0) - 1e-12
        );
    }
}
