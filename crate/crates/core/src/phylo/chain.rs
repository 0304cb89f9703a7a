//! Two-state (conserved, nonconserved) hidden chain over alignment columns.

use serde::{Deserialize, Serialize};

use crate::numeric::NeumaierSum;
use crate::{Error, Real, Result};

/// Index of the conserved state.
pub const CONSERVED: usize = 0;
/// Index of the nonconserved state.
pub const NONCONSERVED: usize = 1;

/// Stationary distribution `(nu, mu) / (mu + nu)` of the chain with
/// `P(c -> n) = mu` and `P(n -> c) = nu`.
pub fn stationary<T: Real>(mu: T, nu: T) -> [T; 2] {
    [nu / (mu + nu), mu / (mu + nu)]
}

pub fn transition_matrix<T: Real>(mu: T, nu: T) -> [[T; 2]; 2] {
    [[T::one() - mu, mu], [nu, T::one() - nu]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPosterior<T> {
    /// `P(z_i = c | data)` per column.
    pub conserved: Vec<T>,
    /// Expected transition counts `counts[a][b]` for `a -> b`.
    pub transitions: [[T; 2]; 2],
    pub loglik: T,
}

/// Forward-backward from per-column emission likelihoods.
pub fn chain_forward_backward<T: Real>(
    emit_c: &[T],
    emit_n: &[T],
    mu: T,
    nu: T,
) -> Result<ChainPosterior<T>> {
    let lc: Vec<T> = emit_c.iter().map(|x| x.ln()).collect();
    let ln: Vec<T> = emit_n.iter().map(|x| x.ln()).collect();
    chain_forward_backward_log(&lc, &ln, mu, nu)
}

/// Forward-backward from per-column emission log-likelihoods. Each column is
/// shifted by its larger log-emission before exponentiating.
pub fn chain_forward_backward_log<T: Real>(
    log_c: &[T],
    log_n: &[T],
    mu: T,
    nu: T,
) -> Result<ChainPosterior<T>> {
    let len = log_c.len();
    if len == 0 || log_n.len() != len {
        return Err(Error::Input(format!(
            "emission vectors must be nonempty and equal length ({} vs {})",
            log_c.len(),
            log_n.len()
        )));
    }
    if !(mu > T::zero() && mu < T::one() && nu > T::zero() && nu < T::one()) {
        return Err(Error::Config(format!(
            "chain probabilities mu={mu}, nu={nu} must lie in (0, 1)"
        )));
    }
    let a = transition_matrix(mu, nu);
    let init = stationary(mu, nu);

    let mut shift = Vec::with_capacity(len);
    let mut emit = Vec::with_capacity(len);
    for i in 0..len {
        let m = log_c[i].max(log_n[i]);
        if m == T::neg_infinity() || m.is_nan() {
            return Err(Error::Numerical(format!(
                "column {} has zero likelihood in both states",
                i + 1
            )));
        }
        shift.push(m);
        emit.push([(log_c[i] - m).exp(), (log_n[i] - m).exp()]);
    }

    let mut alpha = vec![[T::zero(); 2]; len];
    let mut scales = vec![T::zero(); len];
    for i in 0..len {
        let prior = if i == 0 {
            init
        } else {
            let p = alpha[i - 1];
            [
                p[0] * a[0][0] + p[1] * a[1][0],
                p[0] * a[0][1] + p[1] * a[1][1],
            ]
        };
        let f = [prior[0] * emit[i][0], prior[1] * emit[i][1]];
        let c = f[0] + f[1];
        if !(c > T::zero()) {
            return Err(Error::Numerical(format!(
                "column {} has zero forward probability",
                i + 1
            )));
        }
        alpha[i] = [f[0] / c, f[1] / c];
        scales[i] = c;
    }

    let mut beta = vec![[T::one(); 2]; len];
    for i in (0..len - 1).rev() {
        let next = beta[i + 1];
        let e = emit[i + 1];
        let c = scales[i + 1];
        for s in 0..2 {
            beta[i][s] = (a[s][0] * e[0] * next[0] + a[s][1] * e[1] * next[1]) / c;
        }
    }

    let mut conserved = Vec::with_capacity(len);
    for i in 0..len {
        let g = [alpha[i][0] * beta[i][0], alpha[i][1] * beta[i][1]];
        conserved.push(g[0] / (g[0] + g[1]));
    }
    let mut counts = [
        [NeumaierSum::default(), NeumaierSum::default()],
        [NeumaierSum::default(), NeumaierSum::default()],
    ];
    for i in 0..len - 1 {
        let e = emit[i + 1];
        let c = scales[i + 1];
        for s in 0..2 {
            for t in 0..2 {
                counts[s][t].add(alpha[i][s] * a[s][t] * e[t] * beta[i + 1][t] / c);
            }
        }
    }
    let transitions = [
        [counts[0][0].value(), counts[0][1].value()],
        [counts[1][0].value(), counts[1][1].value()],
    ];
    let loglik = scales
        .iter()
        .zip(&shift)
        .map(|(&c, &m)| c.ln() + m)
        .collect::<NeumaierSum<T>>()
        .value();
    Ok(ChainPosterior {
        conserved,
        transitions,
        loglik,
    })
}
