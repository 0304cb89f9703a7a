//! Profile hidden Markov models with match, insert and delete states.
//!
//! Topology for `M` match states:
//!
//! ```text
//! Begin(=M0) -> M1 | I0 | D1
//! Mj         -> M(j+1) | Ij | D(j+1)      (MM -> End | IM)
//! Ij         -> M(j+1) | Ij               (IM -> End | IM)
//! Dj         -> M(j+1) | D(j+1)           (DM -> End)
//! ```
//!
//! Insert and delete states never follow each other. Forward and backward use
//! per-column scaling, where a column holds every state reachable after emitting
//! `i` residues (delete states are silent, so a column may contain several of
//! them). Viterbi runs in log space.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{multi_start, EmConfig, EmProblem, EmTrace, StepContext};
use crate::numeric::NeumaierSum;
use crate::seqio::{Alignment, Alphabet, Sequence, GAP};
use crate::{Error, Real, Result};

/// Transition slots out of a match state (`Begin` is match row 0).
pub const TO_NEXT: usize = 0;
pub const TO_INSERT: usize = 1;
pub const TO_DELETE: usize = 2;
/// Self-loop slot of insert rows and delete-to-delete slot of delete rows.
pub const TO_SELF: usize = 1;

/// Model parameters. `next` always means `M(j+1)`, or `End` from the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileHmm<T> {
    /// `M` rows, `match_emissions[j - 1]` belongs to `Mj`.
    pub match_emissions: Vec<Vec<T>>,
    /// `M + 1` rows, `I0..IM`.
    pub insert_emissions: Vec<Vec<T>>,
    /// `M + 1` rows for `Begin, M1..MM`: `[next, insert, delete]`; the last row has no delete slot.
    pub match_transitions: Vec<Vec<T>>,
    /// `M + 1` rows for `I0..IM`: `[next, self]`.
    pub insert_transitions: Vec<Vec<T>>,
    /// `M` rows for `D1..DM`: `[next, delete]`; the last row only has `next`.
    pub delete_transitions: Vec<Vec<T>>,
}

/// A state on a path. Indices follow the usual numbering: `Match(1..=M)`,
/// `Insert(0..=M)`, `Delete(1..=M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    Begin,
    Match(usize),
    Insert(usize),
    Delete(usize),
    End,
}

impl State {
    pub fn emits(self) -> bool {
        matches!(self, State::Match(_) | State::Insert(_))
    }
}

/// Begin-to-end state path.
pub type StatePath = Vec<State>;

/// Expected emission and transition counts, shaped like [`ProfileHmm`].
pub type SufficientStats<T> = ProfileHmm<T>;

fn row_outdegrees(m: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut mt = vec![3; m + 1];
    mt[m] = 2;
    let it = vec![2; m + 1];
    let mut dt = vec![2; m];
    dt[m - 1] = 1;
    (mt, it, dt)
}

fn normalize_row<T: Real>(row: &[T], pseudocount: T) -> Vec<T> {
    let total = row.iter().copied().sum::<T>() + pseudocount * T::from_usize_lossy(row.len());
    if !(total > T::zero()) {
        return vec![T::one() / T::from_usize_lossy(row.len()); row.len()];
    }
    row.iter().map(|&x| (x + pseudocount) / total).collect()
}

impl<T: Real> ProfileHmm<T> {
    /// Model of the given size with zero in every slot; the shape of [`SufficientStats`].
    pub fn zeros(num_match: usize, alphabet_size: usize) -> Self {
        let (mt, it, dt) = row_outdegrees(num_match);
        let z = |n: usize| vec![T::zero(); n];
        ProfileHmm {
            match_emissions: vec![z(alphabet_size); num_match],
            insert_emissions: vec![z(alphabet_size); num_match + 1],
            match_transitions: mt.into_iter().map(z).collect(),
            insert_transitions: it.into_iter().map(z).collect(),
            delete_transitions: dt.into_iter().map(z).collect(),
        }
    }

    pub fn num_match(&self) -> usize {
        self.match_emissions.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.insert_emissions[0].len()
    }

    fn rows(&self) -> impl Iterator<Item = &Vec<T>> {
        self.match_emissions
            .iter()
            .chain(&self.insert_emissions)
            .chain(&self.match_transitions)
            .chain(&self.insert_transitions)
            .chain(&self.delete_transitions)
    }

    fn rows_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.match_emissions
            .iter_mut()
            .chain(&mut self.insert_emissions)
            .chain(&mut self.match_transitions)
            .chain(&mut self.insert_transitions)
            .chain(&mut self.delete_transitions)
    }

    /// Checks shapes and that every row is a probability vector (sum within 1e-9).
    pub fn validate(&self) -> Result<()> {
        let m = self.num_match();
        if m == 0 {
            return Err(Error::Input(
                "profile HMM needs at least one match state".into(),
            ));
        }
        let shape = Self::zeros(m, self.alphabet_size());
        let same_shape = self.insert_emissions.len() == m + 1
            && self.rows().count() == shape.rows().count()
            && self
                .rows()
                .zip(shape.rows())
                .all(|(a, b)| a.len() == b.len());
        if !same_shape {
            return Err(Error::Input(
                "profile HMM rows have inconsistent shapes".into(),
            ));
        }
        for (i, row) in self.rows().enumerate() {
            if row.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
                return Err(Error::Input(format!(
                    "profile HMM row {i} has an invalid entry"
                )));
            }
            let s = row.iter().copied().sum::<T>().as_f64();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Input(format!("profile HMM row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    /// `sum of log theta` over every free parameter, the Dirichlet log-prior kernel.
    pub fn log_prior_kernel(&self) -> T {
        self.rows()
            .flatten()
            .map(|x| x.ln())
            .collect::<NeumaierSum<T>>()
            .value()
    }

    /// Adds `other` into `self` slot by slot.
    pub fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.rows_mut().zip(other.rows()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, w: T) {
        self.rows_mut().flatten().for_each(|x| *x *= w);
    }

    /// Maximizes the expected complete-data log-likelihood plus a symmetric
    /// Dirichlet log-prior: `(n + alpha) / (n_total + alpha * outdegree)`.
    /// Rows with no mass and no pseudocount become uniform.
    pub fn baum_welch_update(stats: &SufficientStats<T>, pseudocount: T) -> Self {
        let mut out = stats.clone();
        for (o, s) in out.rows_mut().zip(stats.rows()) {
            *o = normalize_row(s, pseudocount);
        }
        out
    }

    /// Transition probability between adjacent states; zero for illegal pairs.
    pub fn transition(&self, from: State, to: State) -> T {
        let m = self.num_match();
        let next_of = |j: usize| {
            if j == m {
                State::End
            } else {
                State::Match(j + 1)
            }
        };
        match from {
            State::Begin | State::Match(_) => {
                let j = if let State::Match(j) = from { j } else { 0 };
                let row = &self.match_transitions[j];
                if to == next_of(j) {
                    row[TO_NEXT]
                } else if to == State::Insert(j) {
                    row[TO_INSERT]
                } else if j < m && to == State::Delete(j + 1) {
                    row[TO_DELETE]
                } else {
                    T::zero()
                }
            }
            State::Insert(j) => {
                let row = &self.insert_transitions[j];
                if to == next_of(j) {
                    row[TO_NEXT]
                } else if to == State::Insert(j) {
                    row[TO_SELF]
                } else {
                    T::zero()
                }
            }
            State::Delete(j) => {
                let row = &self.delete_transitions[j - 1];
                if to == next_of(j) {
                    row[TO_NEXT]
                } else if j < m && to == State::Delete(j + 1) {
                    row[TO_SELF]
                } else {
                    T::zero()
                }
            }
            State::End => T::zero(),
        }
    }

    /// Emission probability of residue `r` (zero for silent states).
    pub fn emission(&self, state: State, r: u8) -> T {
        match state {
            State::Match(j) => self.match_emissions[j - 1][r as usize],
            State::Insert(j) => self.insert_emissions[j][r as usize],
            _ => T::zero(),
        }
    }

    fn check_sequence(&self, seq: &[u8]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Input("empty sequence".into()));
        }
        let d = self.alphabet_size();
        if let Some(&r) = seq.iter().find(|&&r| r as usize >= d) {
            return Err(Error::Input(format!(
                "residue index {r} is outside the model alphabet"
            )));
        }
        Ok(())
    }
}

/// Initial model: `M = round(mean length)`, emissions from global residue
/// frequencies smoothed by `pseudocount`, transitions putting 0.8 on the
/// next match (or end) and splitting the rest evenly.
pub fn init_model<T: Real>(
    seqs: &[Sequence],
    alphabet_size: usize,
    pseudocount: T,
) -> Result<ProfileHmm<T>> {
    if seqs.is_empty() {
        return Err(Error::Input(
            "profile HMM initialization needs at least one sequence".into(),
        ));
    }
    let total: usize = seqs.iter().map(Sequence::len).sum();
    let m = ((total as f64 / seqs.len() as f64).round() as usize).max(1);
    let mut counts = vec![T::zero(); alphabet_size];
    for s in seqs {
        for &r in &s.residues {
            let slot = counts.get_mut(r as usize).ok_or_else(|| {
                Error::Input(format!(
                    "sequence {:?} has a residue outside the alphabet",
                    s.id
                ))
            })?;
            *slot += T::one();
        }
    }
    let freq = normalize_row(&counts, pseudocount);
    let mut hmm = ProfileHmm::zeros(m, alphabet_size);
    for row in hmm
        .match_emissions
        .iter_mut()
        .chain(&mut hmm.insert_emissions)
    {
        row.clone_from(&freq);
    }
    let favour_next = |n: usize| -> Vec<T> {
        if n == 1 {
            return vec![T::one()];
        }
        let rest = T::lit(0.2) / T::from_usize_lossy(n - 1);
        std::iter::once(T::lit(0.8))
            .chain(std::iter::repeat_n(rest, n - 1))
            .collect()
    };
    for row in hmm
        .match_transitions
        .iter_mut()
        .chain(&mut hmm.insert_transitions)
        .chain(&mut hmm.delete_transitions)
    {
        *row = favour_next(row.len());
    }
    Ok(hmm)
}

/// One column of forward or backward values. `m[0]` is the begin state.
#[derive(Debug, Clone, PartialEq)]
pub struct Column<T> {
    pub m: Vec<T>,
    pub i: Vec<T>,
    /// `d[0]` is unused.
    pub d: Vec<T>,
}

impl<T: Real> Column<T> {
    fn zeros(m: usize) -> Self {
        Column {
            m: vec![T::zero(); m + 1],
            i: vec![T::zero(); m + 1],
            d: vec![T::zero(); m + 1],
        }
    }

    fn sum(&self) -> T {
        self.m.iter().chain(&self.i).chain(&self.d).copied().sum()
    }

    fn scale(&mut self, c: T) {
        for x in self.m.iter_mut().chain(&mut self.i).chain(&mut self.d) {
            *x /= c;
        }
    }
}

/// Scaled forward and backward tables for one sequence.
///
/// `forward[i]` holds column `i` (after `i` emissions) divided by
/// `scales[0] * ... * scales[i]`. `backward` uses the same factors so that
/// `forward[i].x * backward[i].x` is the posterior probability of visiting `x`
/// in column `i`. `end` is the scaled probability of reaching the end state.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable<T> {
    pub forward: Vec<Column<T>>,
    pub backward: Vec<Column<T>>,
    pub scales: Vec<T>,
    pub end: T,
}

impl<T: Real> DpTable<T> {
    /// `sum log c_i + log end`.
    pub fn loglik(&self) -> T {
        let mut acc: NeumaierSum<T> = self.scales.iter().map(|c| c.ln()).collect();
        acc.add(self.end.ln());
        acc.value()
    }
}

fn zero_likelihood() -> Error {
    Error::Numerical("sequence has zero likelihood under the profile HMM".into())
}

/// Forward columns, scale factors, scaled end probability and log-likelihood.
pub type ForwardPass<T> = (Vec<Column<T>>, Vec<T>, T, T);

/// Scaled forward pass.
pub fn forward<T: Real>(hmm: &ProfileHmm<T>, seq: &[u8]) -> Result<ForwardPass<T>> {
    hmm.check_sequence(seq)?;
    let m = hmm.num_match();
    let (mt, it, dt) = (
        &hmm.match_transitions,
        &hmm.insert_transitions,
        &hmm.delete_transitions,
    );
    let mut cols: Vec<Column<T>> = Vec::with_capacity(seq.len() + 1);
    let mut scales = Vec::with_capacity(seq.len() + 1);

    for i in 0..=seq.len() {
        let mut col = Column::zeros(m);
        if i == 0 {
            col.m[0] = T::one();
        } else {
            let prev = &cols[i - 1];
            let r = seq[i - 1] as usize;
            for j in 0..=m {
                col.i[j] = hmm.insert_emissions[j][r]
                    * (prev.m[j] * mt[j][TO_INSERT] + prev.i[j] * it[j][TO_SELF]);
            }
            for j in 1..=m {
                let mut into =
                    prev.m[j - 1] * mt[j - 1][TO_NEXT] + prev.i[j - 1] * it[j - 1][TO_NEXT];
                if j >= 2 {
                    into += prev.d[j - 1] * dt[j - 2][TO_NEXT];
                }
                col.m[j] = hmm.match_emissions[j - 1][r] * into;
            }
        }
        col.d[1] = col.m[0] * mt[0][TO_DELETE];
        for j in 2..=m {
            col.d[j] = col.m[j - 1] * mt[j - 1][TO_DELETE] + col.d[j - 1] * dt[j - 2][TO_SELF];
        }
        let c = col.sum();
        if !(c > T::zero()) || !c.is_finite() {
            return Err(zero_likelihood());
        }
        col.scale(c);
        scales.push(c);
        cols.push(col);
    }
    let last = &cols[seq.len()];
    let end =
        last.m[m] * mt[m][TO_NEXT] + last.i[m] * it[m][TO_NEXT] + last.d[m] * dt[m - 1][TO_NEXT];
    if !(end > T::zero()) {
        return Err(zero_likelihood());
    }
    let mut ll: NeumaierSum<T> = scales.iter().map(|c| c.ln()).collect();
    ll.add(end.ln());
    Ok((cols, scales, end, ll.value()))
}

/// Scaled backward pass using the forward scale factors.
pub fn backward<T: Real>(
    hmm: &ProfileHmm<T>,
    seq: &[u8],
    scales: &[T],
    end: T,
) -> Result<Vec<Column<T>>> {
    hmm.check_sequence(seq)?;
    let m = hmm.num_match();
    let len = seq.len();
    if scales.len() != len + 1 {
        return Err(Error::Input(
            "scale factors do not match the sequence length".into(),
        ));
    }
    let (mt, it, dt) = (
        &hmm.match_transitions,
        &hmm.insert_transitions,
        &hmm.delete_transitions,
    );
    let mut cols = vec![Column::zeros(m); len + 1];

    for i in (0..=len).rev() {
        let mut col = Column::zeros(m);
        if i == len {
            col.m[m] = mt[m][TO_NEXT] / end;
            col.i[m] = it[m][TO_NEXT] / end;
            col.d[m] = dt[m - 1][TO_NEXT] / end;
        }
        let next = (i < len).then(|| (&cols[i + 1], seq[i] as usize, scales[i + 1]));
        for j in (0..=m).rev() {
            // emitting successors in the next column
            let (mut to_m, mut to_i) = (T::zero(), T::zero());
            if let Some((nc, r, c)) = next {
                if j < m {
                    to_m = hmm.match_emissions[j][r] * nc.m[j + 1] / c;
                }
                to_i = hmm.insert_emissions[j][r] * nc.i[j] / c;
            }
            let to_d = if j < m { col.d[j + 1] } else { T::zero() };
            if j >= 1 {
                let dj = &dt[j - 1];
                let mut v = dj[TO_NEXT] * to_m;
                if j < m {
                    v += dj[TO_SELF] * to_d;
                }
                if i < len || j < m {
                    col.d[j] = v;
                }
            }
            if i < len {
                col.i[j] = it[j][TO_NEXT] * to_m + it[j][TO_SELF] * to_i;
            }
            let mut v = mt[j][TO_INSERT] * to_i;
            if j < m {
                v += mt[j][TO_NEXT] * to_m + mt[j][TO_DELETE] * to_d;
            }
            if i < len || j < m {
                col.m[j] = v;
            }
        }
        cols[i] = col;
    }
    Ok(cols)
}

/// Runs both passes.
pub fn forward_backward<T: Real>(hmm: &ProfileHmm<T>, seq: &[u8]) -> Result<DpTable<T>> {
    let (fwd, scales, end, _) = forward(hmm, seq)?;
    let bwd = backward(hmm, seq, &scales, end)?;
    Ok(DpTable {
        forward: fwd,
        backward: bwd,
        scales,
        end,
    })
}

/// Posterior expected emission and transition counts for one sequence, times `weight`.
pub fn expected_stats<T: Real>(
    hmm: &ProfileHmm<T>,
    seq: &[u8],
    weight: T,
) -> Result<(SufficientStats<T>, T)> {
    let dp = forward_backward(hmm, seq)?;
    let m = hmm.num_match();
    let len = seq.len();
    let (mt, it, dt) = (
        &hmm.match_transitions,
        &hmm.insert_transitions,
        &hmm.delete_transitions,
    );
    let mut st = SufficientStats::zeros(m, hmm.alphabet_size());

    for i in 0..=len {
        let f = &dp.forward[i];
        let b = &dp.backward[i];
        if i >= 1 {
            let r = seq[i - 1] as usize;
            for j in 1..=m {
                st.match_emissions[j - 1][r] += f.m[j] * b.m[j];
            }
            for j in 0..=m {
                st.insert_emissions[j][r] += f.i[j] * b.i[j];
            }
        }
        // silent moves into delete states of this column
        for j in 1..=m {
            let bd = b.d[j];
            st.match_transitions[j - 1][TO_DELETE] += f.m[j - 1] * mt[j - 1][TO_DELETE] * bd;
            if j >= 2 {
                st.delete_transitions[j - 2][TO_SELF] += f.d[j - 1] * dt[j - 2][TO_SELF] * bd;
            }
        }
        if i < len {
            let nb = &dp.backward[i + 1];
            let r = seq[i] as usize;
            let c = dp.scales[i + 1];
            for j in 0..=m {
                let into_i = hmm.insert_emissions[j][r] * nb.i[j] / c;
                st.match_transitions[j][TO_INSERT] += f.m[j] * mt[j][TO_INSERT] * into_i;
                st.insert_transitions[j][TO_SELF] += f.i[j] * it[j][TO_SELF] * into_i;
                if j < m {
                    let into_m = hmm.match_emissions[j][r] * nb.m[j + 1] / c;
                    st.match_transitions[j][TO_NEXT] += f.m[j] * mt[j][TO_NEXT] * into_m;
                    st.insert_transitions[j][TO_NEXT] += f.i[j] * it[j][TO_NEXT] * into_m;
                    if j >= 1 {
                        st.delete_transitions[j - 1][TO_NEXT] +=
                            f.d[j] * dt[j - 1][TO_NEXT] * into_m;
                    }
                }
            }
        } else {
            st.match_transitions[m][TO_NEXT] += f.m[m] * mt[m][TO_NEXT] / dp.end;
            st.insert_transitions[m][TO_NEXT] += f.i[m] * it[m][TO_NEXT] / dp.end;
            st.delete_transitions[m - 1][TO_NEXT] += f.d[m] * dt[m - 1][TO_NEXT] / dp.end;
        }
    }
    st.scale(weight);
    Ok((st, dp.loglik()))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    M,
    I,
    D,
}

/// Most probable state path and its log probability.
///
/// Equal-scoring predecessors are resolved in the order match, delete, insert.
pub fn viterbi<T: Real>(hmm: &ProfileHmm<T>, seq: &[u8]) -> Result<(StatePath, T)> {
    hmm.check_sequence(seq)?;
    let m = hmm.num_match();
    let len = seq.len();
    let ln = |x: T| x.ln();
    let (mt, it, dt) = (
        &hmm.match_transitions,
        &hmm.insert_transitions,
        &hmm.delete_transitions,
    );
    let neg = T::neg_infinity();

    let pick = |cands: [(Kind, T); 3]| -> (Kind, T) {
        let mut best = (cands[0].0, neg);
        let mut first = true;
        for (k, v) in cands {
            if first || v > best.1 {
                best = (k, v);
                first = false;
            }
        }
        best
    };

    let mut v: Vec<Column<T>> = Vec::with_capacity(len + 1);
    let mut ptr: Vec<[Vec<Kind>; 3]> = Vec::with_capacity(len + 1);
    for i in 0..=len {
        let mut col = Column {
            m: vec![neg; m + 1],
            i: vec![neg; m + 1],
            d: vec![neg; m + 1],
        };
        let mut p = [
            vec![Kind::M; m + 1],
            vec![Kind::M; m + 1],
            vec![Kind::M; m + 1],
        ];
        if i == 0 {
            col.m[0] = T::zero();
        } else {
            let prev = &v[i - 1];
            let r = seq[i - 1] as usize;
            for j in 0..=m {
                let (k, s) = pick([
                    (Kind::M, prev.m[j] + ln(mt[j][TO_INSERT])),
                    (Kind::D, neg),
                    (Kind::I, prev.i[j] + ln(it[j][TO_SELF])),
                ]);
                col.i[j] = s + ln(hmm.insert_emissions[j][r]);
                p[1][j] = k;
            }
            for j in 1..=m {
                let from_d = if j >= 2 {
                    prev.d[j - 1] + ln(dt[j - 2][TO_NEXT])
                } else {
                    neg
                };
                let (k, s) = pick([
                    (Kind::M, prev.m[j - 1] + ln(mt[j - 1][TO_NEXT])),
                    (Kind::D, from_d),
                    (Kind::I, prev.i[j - 1] + ln(it[j - 1][TO_NEXT])),
                ]);
                col.m[j] = s + ln(hmm.match_emissions[j - 1][r]);
                p[0][j] = k;
            }
        }
        for j in 1..=m {
            let from_d = if j >= 2 {
                col.d[j - 1] + ln(dt[j - 2][TO_SELF])
            } else {
                neg
            };
            let (k, s) = pick([
                (Kind::M, col.m[j - 1] + ln(mt[j - 1][TO_DELETE])),
                (Kind::D, from_d),
                (Kind::I, neg),
            ]);
            col.d[j] = s;
            p[2][j] = k;
        }
        v.push(col);
        ptr.push(p);
    }

    let last = &v[len];
    let (mut kind, score) = pick([
        (Kind::M, last.m[m] + ln(mt[m][TO_NEXT])),
        (Kind::D, last.d[m] + ln(dt[m - 1][TO_NEXT])),
        (Kind::I, last.i[m] + ln(it[m][TO_NEXT])),
    ]);
    if score == neg || score.is_nan() {
        return Err(zero_likelihood());
    }

    let mut path = vec![State::End];
    let (mut i, mut j) = (len, m);
    loop {
        if kind == Kind::M && j == 0 {
            debug_assert_eq!(i, 0);
            path.push(State::Begin);
            break;
        }
        let next = match kind {
            Kind::M => {
                path.push(State::Match(j));
                let k = ptr[i][0][j];
                i -= 1;
                j -= 1;
                k
            }
            Kind::I => {
                path.push(State::Insert(j));
                let k = ptr[i][1][j];
                i -= 1;
                k
            }
            Kind::D => {
                path.push(State::Delete(j));
                let k = ptr[i][2][j];
                j -= 1;
                k
            }
        };
        kind = next;
    }
    path.reverse();
    Ok((path, score))
}

/// Log probability of `path` jointly with `seq`; `-inf` for illegal paths.
pub fn path_log_prob<T: Real>(hmm: &ProfileHmm<T>, path: &[State], seq: &[u8]) -> T {
    let mut acc = NeumaierSum::default();
    let mut pos = 0;
    for w in path.windows(2) {
        acc.add(hmm.transition(w[0], w[1]).ln());
        if w[1].emits() {
            match seq.get(pos) {
                Some(&r) => acc.add(hmm.emission(w[1], r).ln()),
                None => return T::neg_infinity(),
            }
            pos += 1;
        }
    }
    if pos != seq.len() || path.first() != Some(&State::Begin) || path.last() != Some(&State::End) {
        return T::neg_infinity();
    }
    acc.value()
}

/// Assembles a multiple alignment from state paths.
///
/// Each match state owns one column; residues emitted by `Ij` go into an insert
/// block between match columns `j` and `j + 1`, left-justified and as wide as
/// the longest insertion. Match columns where every path deletes are dropped.
pub fn build_alignment(
    paths: &[StatePath],
    seqs: &[Sequence],
    num_match: usize,
    alphabet: Alphabet,
) -> Result<Alignment> {
    if paths.len() != seqs.len() {
        return Err(Error::Input(format!(
            "{} paths for {} sequences",
            paths.len(),
            seqs.len()
        )));
    }
    // per sequence: insert runs per layer and match/delete residue per column
    let mut inserts = vec![vec![Vec::new(); num_match + 1]; seqs.len()];
    let mut matches = vec![vec![None; num_match + 1]; seqs.len()];
    for (k, (path, seq)) in paths.iter().zip(seqs).enumerate() {
        let emitted = path.iter().filter(|s| s.emits()).count();
        if emitted != seq.len() {
            return Err(Error::Input(format!(
                "path for {:?} emits {emitted} residues but the sequence has {}",
                seq.id,
                seq.len()
            )));
        }
        let mut pos = 0;
        for &s in path {
            match s {
                State::Match(j) if (1..=num_match).contains(&j) => {
                    matches[k][j] = Some(seq.residues[pos]);
                    pos += 1;
                }
                State::Insert(j) if j <= num_match => {
                    inserts[k][j].push(seq.residues[pos]);
                    pos += 1;
                }
                State::Delete(j) if (1..=num_match).contains(&j) => {}
                State::Begin | State::End => {}
                other => {
                    return Err(Error::Input(format!(
                        "state {other:?} is outside a model with {num_match} match states"
                    )))
                }
            }
        }
    }
    let mut rows = vec![Vec::new(); seqs.len()];
    for j in 0..=num_match {
        if j >= 1 && matches.iter().any(|mk| mk[j].is_some()) {
            for (row, mk) in rows.iter_mut().zip(&matches) {
                row.push(mk[j].unwrap_or(GAP));
            }
        }
        let width = inserts.iter().map(|ik| ik[j].len()).max().unwrap_or(0);
        for (row, ik) in rows.iter_mut().zip(&inserts) {
            row.extend_from_slice(&ik[j]);
            row.extend(std::iter::repeat_n(GAP, width - ik[j].len()));
        }
    }
    Alignment::new(alphabet, seqs.iter().map(|s| s.id.clone()).collect(), rows)
}

/// Baum-Welch training as an [`EmProblem`].
pub struct ProfileProblem<'a, T> {
    seqs: &'a [Sequence],
    weights: Vec<T>,
    alphabet_size: usize,
    pseudocount: T,
}

impl<'a, T: Real> ProfileProblem<'a, T> {
    pub fn new(
        seqs: &'a [Sequence],
        weights: Option<&[T]>,
        alphabet_size: usize,
        pseudocount: T,
    ) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::Input(
                "profile HMM training needs at least one sequence".into(),
            ));
        }
        if !(pseudocount >= T::zero()) {
            return Err(Error::Config("pseudocount must be nonnegative".into()));
        }
        let weights = match weights {
            None => vec![T::one(); seqs.len()],
            Some(w) if w.len() != seqs.len() => {
                return Err(Error::Config(format!(
                    "{} weights for {} sequences",
                    w.len(),
                    seqs.len()
                )));
            }
            Some(w) if w.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) => {
                return Err(Error::Config(
                    "sequence weights must be finite and nonnegative".into(),
                ));
            }
            Some(w) => w.to_vec(),
        };
        Ok(ProfileProblem {
            seqs,
            weights,
            alphabet_size,
            pseudocount,
        })
    }

    fn prior(&self, hmm: &ProfileHmm<T>) -> T {
        if self.pseudocount > T::zero() {
            self.pseudocount * hmm.log_prior_kernel()
        } else {
            T::zero()
        }
    }

    /// Weighted log-likelihood `sum_n w_n log P(Y_n)`.
    pub fn weighted_loglik(&self, hmm: &ProfileHmm<T>) -> Result<T> {
        let lls = self
            .seqs
            .par_iter()
            .map(|s| forward(hmm, &s.residues).map(|f| f.3))
            .collect::<Result<Vec<T>>>()?;
        Ok(lls
            .into_iter()
            .zip(&self.weights)
            .map(|(l, &w)| l * w)
            .collect::<NeumaierSum<T>>()
            .value())
    }
}

impl<T: Real> EmProblem for ProfileProblem<'_, T> {
    type Scalar = T;
    type Params = ProfileHmm<T>;
    type Stats = SufficientStats<T>;

    /// Restart 0 starts from [`init_model`]; later restarts mix each match
    /// emission row half and half with a flat-Dirichlet draw.
    fn initialize(&self, restart: usize, rng: &mut ChaCha8Rng) -> Result<ProfileHmm<T>> {
        let mut hmm = init_model(
            self.seqs,
            self.alphabet_size,
            self.pseudocount.max(T::lit(0.5)),
        )?;
        if restart > 0 {
            for row in &mut hmm.match_emissions {
                let draw: Vec<f64> = (0..row.len())
                    .map(|_| rng.sample::<f64, _>(Exp1) + 1e-12)
                    .collect();
                let total: f64 = draw.iter().sum();
                for (x, g) in row.iter_mut().zip(draw) {
                    *x = T::lit(0.5) * *x + T::lit(0.5 * g / total);
                }
            }
        }
        Ok(hmm)
    }

    fn e_step(&self, hmm: &ProfileHmm<T>, _: StepContext) -> Result<(SufficientStats<T>, T)> {
        let per_seq = self
            .seqs
            .par_iter()
            .zip(&self.weights)
            .map(|(s, &w)| expected_stats(hmm, &s.residues, w))
            .collect::<Result<Vec<_>>>()?;
        let mut stats = SufficientStats::zeros(hmm.num_match(), self.alphabet_size);
        let mut ll = NeumaierSum::default();
        for ((st, l), &w) in per_seq.iter().zip(&self.weights) {
            stats.accumulate(st);
            ll.add(*l * w);
        }
        Ok((stats, ll.value() + self.prior(hmm)))
    }

    fn m_step(&self, stats: &SufficientStats<T>, _: &ProfileHmm<T>) -> Result<ProfileHmm<T>> {
        Ok(ProfileHmm::baum_welch_update(stats, self.pseudocount))
    }

    fn log_likelihood(&self, hmm: &ProfileHmm<T>) -> Result<T> {
        Ok(self.weighted_loglik(hmm)? + self.prior(hmm))
    }
}

/// Output of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedProfile<T> {
    pub hmm: ProfileHmm<T>,
    /// Weighted log-likelihood at `hmm`, without the prior term.
    pub loglik: T,
    pub trace: EmTrace<T>,
    pub best_restart: usize,
}

/// Baum-Welch training with seeded restarts.
pub fn train<T: Real>(
    seqs: &[Sequence],
    weights: Option<&[T]>,
    alphabet_size: usize,
    pseudocount: T,
    em: &EmConfig,
) -> Result<TrainedProfile<T>> {
    let problem = ProfileProblem::new(seqs, weights, alphabet_size, pseudocount)?;
    let result = multi_start(&problem, em)?;
    let loglik = problem.weighted_loglik(&result.best.params)?;
    Ok(TrainedProfile {
        hmm: result.best.params,
        loglik,
        trace: result.best.trace,
        best_restart: result.best.index,
    })
}

/// Viterbi-decodes every sequence and assembles the alignment.
pub fn align<T: Real>(
    hmm: &ProfileHmm<T>,
    seqs: &[Sequence],
    alphabet: Alphabet,
) -> Result<(Vec<StatePath>, Alignment)> {
    let paths = seqs
        .par_iter()
        .map(|s| viterbi(hmm, &s.residues).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    let aln = build_alignment(&paths, seqs, hmm.num_match(), alphabet)?;
    Ok((paths, aln))
}
