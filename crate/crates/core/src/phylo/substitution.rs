//! Unit-rate Jukes-Cantor substitution and Felsenstein pruning.

use crate::phylo::tree::PhyloTree;
use crate::{Error, Real, Result};

/// Number of nucleotide states.
pub const NUM_STATES: usize = 4;

pub type Matrix4<T> = [[T; NUM_STATES]; NUM_STATES];

/// Jukes-Cantor rate matrix normalized to one expected substitution per unit time.
pub fn jc_rate_matrix<T: Real>() -> Matrix4<T> {
    let off = T::one() / T::lit(3.0);
    let mut q = [[off; NUM_STATES]; NUM_STATES];
    for (i, row) in q.iter_mut().enumerate() {
        row[i] = -T::one();
    }
    q
}

/// Uniform stationary distribution of the Jukes-Cantor model.
pub fn jc_stationary<T: Real>() -> [T; NUM_STATES] {
    [T::lit(0.25); NUM_STATES]
}

/// `exp(t Q)` for the unit-rate Jukes-Cantor matrix, in closed form.
pub fn jc_transition<T: Real>(branch_length: T) -> Result<Matrix4<T>> {
    if !(branch_length >= T::zero()) {
        return Err(Error::Input(format!(
            "branch length {branch_length} must be nonnegative"
        )));
    }
    let (same, diff) = jc_entries(branch_length);
    let mut p = [[diff; NUM_STATES]; NUM_STATES];
    for (i, row) in p.iter_mut().enumerate() {
        row[i] = same;
    }
    Ok(p)
}

/// Diagonal and off-diagonal entries of the Jukes-Cantor transition matrix.
#[inline]
pub fn jc_entries<T: Real>(t: T) -> (T, T) {
    let quarter = T::lit(0.25);
    let decay = (-T::lit(4.0 / 3.0) * t).exp();
    (quarter + T::lit(0.75) * decay, quarter - quarter * decay)
}

/// Log-likelihood of one alignment column under Jukes-Cantor on `tree`.
///
/// `column[k]` is the residue of the `k`-th leaf in [`PhyloTree::leaves`] order;
/// every branch length is multiplied by `scale`. Partial likelihoods are
/// rescaled at each internal node so deep trees do not underflow.
pub fn column_log_likelihood<T: Real>(
    tree: &PhyloTree,
    branch_lengths: &[T],
    column: &[u8],
    scale: T,
) -> Result<T> {
    let plan = PruningPlan::new(tree)?;
    plan.log_likelihood(branch_lengths, column, scale)
}

/// `P(column | tree)`; may underflow for large trees, see [`column_log_likelihood`].
pub fn column_likelihood<T: Real>(
    tree: &PhyloTree,
    branch_lengths: &[T],
    column: &[u8],
    scale: T,
) -> Result<T> {
    Ok(column_log_likelihood(tree, branch_lengths, column, scale)?.exp())
}

/// Precomputed traversal order for repeated pruning on one topology.
#[derive(Debug, Clone)]
pub struct PruningPlan {
    postorder: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// `leaf_slot[v]` is the column index of leaf `v`.
    leaf_slot: Vec<Option<usize>>,
    num_leaves: usize,
    root: usize,
}

impl PruningPlan {
    pub fn new(tree: &PhyloTree) -> Result<Self> {
        let leaves = tree.leaves();
        let mut leaf_slot = vec![None; tree.num_nodes()];
        for (k, &v) in leaves.iter().enumerate() {
            leaf_slot[v] = Some(k);
        }
        Ok(PruningPlan {
            postorder: tree.postorder(),
            children: tree.nodes.iter().map(|n| n.children.clone()).collect(),
            leaf_slot,
            num_leaves: leaves.len(),
            root: tree.root,
        })
    }

    pub fn num_leaves(&self) -> usize {
        self.num_leaves
    }

    /// Per-edge transition entries `(same, different)` for the given scale.
    pub fn edge_entries<T: Real>(&self, branch_lengths: &[T], scale: T) -> Vec<(T, T)> {
        branch_lengths
            .iter()
            .map(|&b| jc_entries(b * scale))
            .collect()
    }

    pub fn log_likelihood<T: Real>(
        &self,
        branch_lengths: &[T],
        column: &[u8],
        scale: T,
    ) -> Result<T> {
        if branch_lengths.iter().any(|&b| !(b >= T::zero())) || !(scale >= T::zero()) {
            return Err(Error::Input(
                "branch lengths and scale must be nonnegative".into(),
            ));
        }
        self.log_likelihood_with(&self.edge_entries(branch_lengths, scale), column)
    }

    /// Pruning with precomputed per-edge `(same, different)` probabilities.
    pub fn log_likelihood_with<T: Real>(&self, edges: &[(T, T)], column: &[u8]) -> Result<T> {
        if column.len() != self.num_leaves {
            return Err(Error::Input(format!(
                "column has {} residues for {} leaves",
                column.len(),
                self.num_leaves
            )));
        }
        let mut partial = vec![[T::zero(); NUM_STATES]; self.children.len()];
        let mut log_scale = T::zero();
        for &v in &self.postorder {
            if let Some(k) = self.leaf_slot[v] {
                let r = column[k] as usize;
                if r >= NUM_STATES {
                    return Err(Error::Input(format!(
                        "residue index {r} at leaf {k} is not a nucleotide"
                    )));
                }
                partial[v][r] = T::one();
                continue;
            }
            let mut acc = [T::one(); NUM_STATES];
            for &c in &self.children[v] {
                let (same, diff) = edges[c];
                let child = &partial[c];
                let total: T = child.iter().copied().sum();
                for (x, a) in acc.iter_mut().enumerate() {
                    // sum_y P(x -> y) L_c(y) = diff * total + (same - diff) * L_c(x)
                    *a *= diff * total + (same - diff) * child[x];
                }
            }
            let max = acc.iter().copied().fold(T::zero(), T::max);
            if max > T::zero() {
                for a in &mut acc {
                    *a /= max;
                }
                log_scale += max.ln();
            }
            partial[v] = acc;
        }
        let root: T = partial[self.root].iter().copied().sum::<T>() * T::lit(0.25);
        Ok(root.ln() + log_scale)
    }
}
