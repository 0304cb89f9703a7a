//! Brute-force reference implementations shared by the integration and
//! acceptance tests. Everything here enumerates explicitly and works in plain
//! probability space, so it shares no dynamic programming with the library.
#![allow(dead_code)]

use embio::phylo::PhyloTree;
use embio::profile_hmm::{ProfileHmm, State};
use rand::Rng;

/// Relative difference, with an absolute floor of 1 in the denominator.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn random_simplex(rng: &mut impl Rng, d: usize, floor: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(floor..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

pub fn random_residues(rng: &mut impl Rng, len: usize, d: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..d as u8)).collect()
}

// ---------------------------------------------------------------------------
// motif

/// Expected counts and observed-data log-likelihood by enumeration.
#[derive(Debug, Clone)]
pub struct MotifEnumeration {
    pub motif_counts: Vec<Vec<f64>>,
    pub background_counts: Vec<f64>,
    pub loglik: f64,
}

fn cartesian(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &s in sizes {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..s).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

/// One-site-per-sequence model: every joint placement `(l_1, ..., l_K)` with a
/// uniform prior over starts, summed explicitly.
pub fn motif_oops_enumeration(
    seqs: &[Vec<u8>],
    background: &[f64],
    positions: &[Vec<f64>],
) -> MotifEnumeration {
    let w = positions.len();
    let d = background.len();
    let starts: Vec<usize> = seqs.iter().map(|s| s.len() - w + 1).collect();
    let mut total = 0.0;
    let mut motif = vec![vec![0.0; d]; w];
    let mut bg = vec![0.0; d];
    for placement in cartesian(&starts) {
        let mut p = 1.0;
        for (k, s) in seqs.iter().enumerate() {
            p /= starts[k] as f64;
            for (j, &r) in s.iter().enumerate() {
                let l = placement[k];
                p *= if j >= l && j < l + w {
                    positions[j - l][r as usize]
                } else {
                    background[r as usize]
                };
            }
        }
        total += p;
        for (k, s) in seqs.iter().enumerate() {
            let l = placement[k];
            for (j, &r) in s.iter().enumerate() {
                if j >= l && j < l + w {
                    motif[j - l][r as usize] += p;
                } else {
                    bg[r as usize] += p;
                }
            }
        }
    }
    MotifEnumeration {
        motif_counts: motif
            .into_iter()
            .map(|r| r.into_iter().map(|x| x / total).collect())
            .collect(),
        background_counts: bg.into_iter().map(|x| x / total).collect(),
        loglik: total.ln(),
    }
}

/// Windowed zero-or-one model: every joint assignment of site indicators to
/// all windows of all sequences, each window an independent two-way mixture.
pub fn motif_zoops_enumeration(
    seqs: &[Vec<u8>],
    background: &[f64],
    positions: &[Vec<f64>],
    p0: f64,
) -> MotifEnumeration {
    let w = positions.len();
    let d = background.len();
    let windows: Vec<&[u8]> = seqs.iter().flat_map(|s| s.windows(w)).collect();
    let mut total = 0.0;
    let mut motif = vec![vec![0.0; d]; w];
    let mut bg = vec![0.0; d];
    for z in cartesian(&vec![2; windows.len()]) {
        let mut p = 1.0;
        for (win, &zi) in windows.iter().zip(&z) {
            p *= if zi == 1 {
                p0 * win
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| positions[i][r as usize])
                    .product::<f64>()
            } else {
                (1.0 - p0) * win.iter().map(|&r| background[r as usize]).product::<f64>()
            };
        }
        total += p;
        for (win, &zi) in windows.iter().zip(&z) {
            for (i, &r) in win.iter().enumerate() {
                if zi == 1 {
                    motif[i][r as usize] += p;
                } else {
                    bg[r as usize] += p;
                }
            }
        }
    }
    MotifEnumeration {
        motif_counts: motif
            .into_iter()
            .map(|r| r.into_iter().map(|x| x / total).collect())
            .collect(),
        background_counts: bg.into_iter().map(|x| x / total).collect(),
        loglik: total.ln(),
    }
}

// ---------------------------------------------------------------------------
// profile HMM

/// Every row of every table drawn from a positive simplex.
pub fn random_profile(rng: &mut impl Rng, m: usize, d: usize) -> ProfileHmm<f64> {
    let mut hmm = ProfileHmm::zeros(m, d);
    for table in [
        &mut hmm.match_emissions,
        &mut hmm.insert_emissions,
        &mut hmm.match_transitions,
        &mut hmm.insert_transitions,
        &mut hmm.delete_transitions,
    ] {
        for row in table.iter_mut() {
            *row = random_simplex(rng, row.len(), 0.05);
        }
    }
    hmm
}

/// Which table a transition count lands in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Match,
    Insert,
    Delete,
}

/// Legal successors of `from` with their (table, row, slot) coordinates.
/// Written from the topology description rather than the library accessor.
pub fn successors(m: usize, from: State) -> Vec<(State, Table, usize, usize)> {
    let next = |j: usize| {
        if j == m {
            State::End
        } else {
            State::Match(j + 1)
        }
    };
    match from {
        State::Begin | State::Match(_) => {
            let j = if let State::Match(j) = from { j } else { 0 };
            let mut v = vec![
                (next(j), Table::Match, j, 0),
                (State::Insert(j), Table::Match, j, 1),
            ];
            if j < m {
                v.push((State::Delete(j + 1), Table::Match, j, 2));
            }
            v
        }
        State::Insert(j) => vec![
            (next(j), Table::Insert, j, 0),
            (State::Insert(j), Table::Insert, j, 1),
        ],
        State::Delete(j) => {
            let mut v = vec![(next(j), Table::Delete, j - 1, 0)];
            if j < m {
                v.push((State::Delete(j + 1), Table::Delete, j - 1, 1));
            }
            v
        }
        State::End => vec![],
    }
}

fn table_entry(hmm: &ProfileHmm<f64>, t: Table, row: usize, slot: usize) -> f64 {
    match t {
        Table::Match => hmm.match_transitions[row][slot],
        Table::Insert => hmm.insert_transitions[row][slot],
        Table::Delete => hmm.delete_transitions[row][slot],
    }
}

fn emission_prob(hmm: &ProfileHmm<f64>, s: State, r: u8) -> f64 {
    match s {
        State::Match(j) => hmm.match_emissions[j - 1][r as usize],
        State::Insert(j) => hmm.insert_emissions[j][r as usize],
        _ => 1.0,
    }
}

/// All Begin-to-End state paths emitting exactly `seq`, with probabilities.
pub fn enumerate_paths(hmm: &ProfileHmm<f64>, seq: &[u8]) -> Vec<(Vec<State>, f64)> {
    let m = hmm.match_emissions.len();
    let mut out = Vec::new();
    let mut stack = vec![(vec![State::Begin], 0usize, 1.0f64)];
    while let Some((path, used, p)) = stack.pop() {
        let last = *path.last().unwrap();
        if last == State::End {
            if used == seq.len() {
                out.push((path, p));
            }
            continue;
        }
        for (next, t, row, slot) in successors(m, last) {
            let emits = matches!(next, State::Match(_) | State::Insert(_));
            if emits && used == seq.len() {
                continue;
            }
            let mut q = p * table_entry(hmm, t, row, slot);
            let mut u = used;
            if emits {
                q *= emission_prob(hmm, next, seq[used]);
                u += 1;
            }
            let mut np = path.clone();
            np.push(next);
            stack.push((np, u, q));
        }
    }
    out
}

/// Posterior-weighted transition and emission counts over all paths.
pub fn enumerated_stats(hmm: &ProfileHmm<f64>, seq: &[u8]) -> (ProfileHmm<f64>, f64) {
    let m = hmm.match_emissions.len();
    let d = hmm.insert_emissions[0].len();
    let paths = enumerate_paths(hmm, seq);
    let total: f64 = paths.iter().map(|(_, p)| p).sum();
    let mut st = ProfileHmm::zeros(m, d);
    for (path, p) in &paths {
        let g = p / total;
        let mut pos = 0;
        for w in path.windows(2) {
            let (_, t, row, slot) = successors(m, w[0])
                .into_iter()
                .find(|s| s.0 == w[1])
                .unwrap();
            match t {
                Table::Match => st.match_transitions[row][slot] += g,
                Table::Insert => st.insert_transitions[row][slot] += g,
                Table::Delete => st.delete_transitions[row][slot] += g,
            }
            match w[1] {
                State::Match(j) => {
                    st.match_emissions[j - 1][seq[pos] as usize] += g;
                    pos += 1;
                }
                State::Insert(j) => {
                    st.insert_emissions[j][seq[pos] as usize] += g;
                    pos += 1;
                }
                _ => {}
            }
        }
    }
    (st, total.ln())
}

pub fn profile_tables(h: &ProfileHmm<f64>) -> Vec<f64> {
    [
        &h.match_emissions,
        &h.insert_emissions,
        &h.match_transitions,
        &h.insert_transitions,
        &h.delete_transitions,
    ]
    .into_iter()
    .flatten()
    .flatten()
    .copied()
    .collect()
}

// ---------------------------------------------------------------------------
// substitution and pruning

pub type M4 = [[f64; 4]; 4];

fn mat_mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// `exp(t Q)` by scaling and squaring with a Taylor series, independent of
/// any closed form.
pub fn expm(q: &M4, t: f64) -> M4 {
    let norm = q
        .iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        * t;
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = t / 2f64.powi(s);
    let a: M4 = q.map(|r| r.map(|x| x * scale));
    let mut result = [[0.0; 4]; 4];
    let mut term = [[0.0; 4]; 4];
    for i in 0..4 {
        result[i][i] = 1.0;
        term[i][i] = 1.0;
    }
    for k in 1..30 {
        term = mat_mul(&term, &a).map(|r| r.map(|x| x / k as f64));
        for i in 0..4 {
            for j in 0..4 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = mat_mul(&result, &result);
    }
    result
}

/// Unit-rate Jukes-Cantor generator written out by hand.
pub fn jc_generator() -> M4 {
    let mut q = [[1.0 / 3.0; 4]; 4];
    for (i, row) in q.iter_mut().enumerate() {
        row[i] = -1.0;
    }
    q
}

pub fn compose(a: &M4, b: &M4) -> M4 {
    mat_mul(a, b)
}

/// Column likelihood by summing over every assignment of states to the
/// internal nodes, transition matrices from [`expm`].
pub fn brute_force_column(tree: &PhyloTree, lengths: &[f64], column: &[u8], scale: f64) -> f64 {
    let q = jc_generator();
    let n = tree.nodes.len();
    let leaves = tree.leaves();
    let internal: Vec<usize> = (0..n)
        .filter(|&v| !tree.nodes[v].children.is_empty())
        .collect();
    let p: Vec<Option<M4>> = (0..n)
        .map(|v| tree.nodes[v].parent.map(|_| expm(&q, lengths[v] * scale)))
        .collect();
    let mut state = vec![0u8; n];
    for (k, &leaf) in leaves.iter().enumerate() {
        state[leaf] = column[k];
    }
    let mut total = 0.0;
    for assign in cartesian(&vec![4; internal.len()]) {
        for (&v, &s) in internal.iter().zip(&assign) {
            state[v] = s as u8;
        }
        let mut prob = 0.25;
        for v in 0..n {
            if let Some(par) = tree.nodes[v].parent {
                prob *= p[v].unwrap()[state[par] as usize][state[v] as usize];
            }
        }
        total += prob;
    }
    total
}

// ---------------------------------------------------------------------------
// two-state chain

pub struct ChainEnumeration {
    pub conserved: Vec<f64>,
    pub transitions: [[f64; 2]; 2],
    pub loglik: f64,
}

/// Sums over all `2^L` state paths of the stationary two-state chain.
pub fn chain_enumeration(emit_c: &[f64], emit_n: &[f64], mu: f64, nu: f64) -> ChainEnumeration {
    let len = emit_c.len();
    let a = [[1.0 - mu, mu], [nu, 1.0 - nu]];
    let pi = [nu / (mu + nu), mu / (mu + nu)];
    let mut total = 0.0;
    let mut conserved = vec![0.0; len];
    let mut tr = [[0.0; 2]; 2];
    for z in cartesian(&vec![2; len]) {
        let e = |i: usize| if z[i] == 0 { emit_c[i] } else { emit_n[i] };
        let mut p = pi[z[0]] * e(0);
        for i in 1..len {
            p *= a[z[i - 1]][z[i]] * e(i);
        }
        total += p;
        for i in 0..len {
            if z[i] == 0 {
                conserved[i] += p;
            }
            if i > 0 {
                tr[z[i - 1]][z[i]] += p;
            }
        }
    }
    ChainEnumeration {
        conserved: conserved.into_iter().map(|x| x / total).collect(),
        transitions: tr.map(|r| r.map(|x| x / total)),
        loglik: total.ln(),
    }
}

// ---------------------------------------------------------------------------
// haplotype frequencies

/// Multinomial log-likelihood of unphased genotypes for explicit frequencies.
pub fn haplotype_loglik(pairs: &[Vec<(usize, usize)>], theta: &[f64]) -> f64 {
    pairs
        .iter()
        .map(|ps| {
            ps.iter()
                .map(|&(j, k)| {
                    if j == k {
                        theta[j] * theta[j]
                    } else {
                        2.0 * theta[j] * theta[k]
                    }
                })
                .sum::<f64>()
                .ln()
        })
        .sum()
}

/// Maximum log-likelihood over the simplex grid with spacing `1/steps`
/// (pools of one to three haplotypes).
pub fn haplotype_grid_max(pairs: &[Vec<(usize, usize)>], pool: usize, steps: usize) -> f64 {
    let h = 1.0 / steps as f64;
    let mut best = f64::NEG_INFINITY;
    match pool {
        1 => best = haplotype_loglik(pairs, &[1.0]),
        2 => {
            for i in 0..=steps {
                let t = i as f64 * h;
                best = best.max(haplotype_loglik(pairs, &[t, 1.0 - t]));
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let (a, b) = (i as f64 * h, j as f64 * h);
                    let c = (1.0 - a - b).max(0.0);
                    best = best.max(haplotype_loglik(pairs, &[a, b, c]));
                }
            }
        }
        _ => panic!("grid search supports pools of at most three haplotypes"),
    }
    best
}

// ---------------------------------------------------------------------------
// scoring

/// Area under the ROC curve of `scores` against boolean labels, ties counted half.
pub fn auc(scores: &[f64], truth: &[bool]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| !t)
        .map(|(&s, _)| s)
        .collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}
