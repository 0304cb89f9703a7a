//! Gaussian mixture clustering with covariance families, BIC model selection
//! and the rejection-controlled E-step.
//!
//! Every M-step adds a small ridge to the covariance diagonals. The ridge is
//! the exact maximizer of the expected complete-data log-likelihood with a
//! `-(c/2) tr(Sigma_k^{-1})` penalty per component, so EM stays monotone in the
//! penalized objective, which is what traces record. With
//! `c = 1e-6 * mean_variance * n / K` the ridge is `c / n_k`, i.e.
//! `1e-6 * mean_variance` for balanced components.

pub mod linalg;

use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{multi_start, EmConfig, EmProblem, EmTrace, StepContext};
use crate::numeric::{argmax, log_sum_exp, NeumaierSum};
use crate::rng::counter_uniform;
use crate::{Error, Real, Result};
use linalg::{cholesky, log_det, mahalanobis, trace_inverse};
use rand::Rng as _;

/// Relative ridge strength.
pub const RIDGE: f64 = 1e-6;
/// Components with less total responsibility are re-seeded.
pub const EMPTY_WEIGHT: f64 = 1e-8;
/// Dirichlet concentration on a row's nearest anchor at initialization (1 elsewhere).
const ANCHOR_CONCENTRATION: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceFamily {
    /// `lambda_k I`.
    Spherical,
    /// Per-component diagonal.
    Diagonal,
    /// Per-component unrestricted.
    Full,
    /// One unrestricted matrix shared by all components.
    SharedFull,
}

impl CovarianceFamily {
    /// Free covariance parameters for `k` components in dimension `p`.
    pub fn covariance_parameters(self, k: usize, p: usize) -> usize {
        match self {
            CovarianceFamily::Spherical => k,
            CovarianceFamily::Diagonal => k * p,
            CovarianceFamily::Full => k * p * (p + 1) / 2,
            CovarianceFamily::SharedFull => p * (p + 1) / 2,
        }
    }
}

impl FromStr for CovarianceFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spherical" => Ok(CovarianceFamily::Spherical),
            "diagonal" => Ok(CovarianceFamily::Diagonal),
            "full" => Ok(CovarianceFamily::Full),
            "shared-full" | "shared" => Ok(CovarianceFamily::SharedFull),
            other => Err(format!(
                "unknown covariance family {other:?} (expected spherical, diagonal, full or shared-full)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component<T> {
    pub weight: T,
    pub mean: Vec<T>,
    pub covariance: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel<T> {
    pub family: CovarianceFamily,
    pub components: Vec<Component<T>>,
}

impl<T: Real> MixtureModel<T> {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn dimension(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    /// `(K - 1) + K p` plus the family's covariance parameters.
    pub fn free_parameters(&self) -> usize {
        let (k, p) = (self.num_components(), self.dimension());
        k - 1 + k * p + self.family.covariance_parameters(k, p)
    }

    fn factors(&self) -> Result<Vec<(Vec<Vec<T>>, T)>> {
        self.components
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let l =
                    cholesky(&c.covariance).ok_or(Error::SingularCovariance { component: k })?;
                let ld = log_det(&l);
                Ok((l, ld))
            })
            .collect()
    }

    /// `sum_k tr(Sigma_k^{-1})`, the ridge penalty kernel.
    pub fn trace_inverse_sum(&self) -> Result<T> {
        Ok(self.factors()?.iter().map(|(l, _)| trace_inverse(l)).sum())
    }
}

/// `n x K` matrix of posterior component memberships.
pub type Responsibilities<T> = Vec<Vec<T>>;

fn check_data<T: Real>(data: &[Vec<T>]) -> Result<usize> {
    let p = data.first().map_or(0, Vec::len);
    if data.is_empty() || p == 0 {
        return Err(Error::Input(
            "data matrix must have at least one row and one column".into(),
        ));
    }
    if let Some(i) = data.iter().position(|r| r.len() != p) {
        return Err(Error::Input(format!(
            "data row {} has {} columns, expected {p}",
            i + 1,
            data[i].len()
        )));
    }
    if let Some(i) = data.iter().position(|r| r.iter().any(|x| !x.is_finite())) {
        return Err(Error::Input(format!(
            "data row {} has a non-finite value",
            i + 1
        )));
    }
    Ok(p)
}

/// `log(tau_k f_k(x))` for every component.
fn joint_log_densities<T: Real>(
    model: &MixtureModel<T>,
    factors: &[(Vec<Vec<T>>, T)],
    x: &[T],
) -> Vec<T> {
    let half = T::lit(0.5);
    let log_2pi = (T::PI() * T::lit(2.0)).ln();
    let p = T::from_usize_lossy(x.len());
    model
        .components
        .iter()
        .zip(factors)
        .map(|(c, (l, ld))| {
            let diff: Vec<T> = x.iter().zip(&c.mean).map(|(&a, &b)| a - b).collect();
            c.weight.ln() - half * (p * log_2pi + *ld + mahalanobis(l, &diff))
        })
        .collect()
}

/// Responsibilities and `sum_i log sum_k tau_k f_k(x_i)`.
pub fn e_step<T: Real>(
    data: &[Vec<T>],
    model: &MixtureModel<T>,
) -> Result<(Responsibilities<T>, T)> {
    check_data(data)?;
    if model.dimension() != data[0].len() {
        return Err(Error::Input(format!(
            "model dimension {} does not match data dimension {}",
            model.dimension(),
            data[0].len()
        )));
    }
    let factors = model.factors()?;
    let rows: Vec<(Vec<T>, T)> = data
        .par_iter()
        .map(|x| {
            let lj = joint_log_densities(model, &factors, x);
            let norm = log_sum_exp(&lj);
            (lj.iter().map(|&v| (v - norm).exp()).collect(), norm)
        })
        .collect();
    let mut ll = NeumaierSum::default();
    let mut resp = Vec::with_capacity(rows.len());
    for (r, l) in rows {
        if !l.is_finite() {
            return Err(Error::Numerical(
                "a data point has zero density under every component".into(),
            ));
        }
        ll.add(l);
        resp.push(r);
    }
    Ok((resp, ll.value()))
}

/// Per-dimension population variance averaged over dimensions, floored to 1 when zero.
pub fn mean_variance<T: Real>(data: &[Vec<T>]) -> T {
    let n = T::from_usize_lossy(data.len());
    let p = data[0].len();
    let mut total = T::zero();
    for j in 0..p {
        let mean = data
            .iter()
            .map(|r| r[j])
            .collect::<NeumaierSum<T>>()
            .value()
            / n;
        total += data
            .iter()
            .map(|r| (r[j] - mean) * (r[j] - mean))
            .collect::<NeumaierSum<T>>()
            .value()
            / n;
    }
    let v = total / T::from_usize_lossy(p);
    if v > T::zero() {
        v
    } else {
        T::one()
    }
}

/// Ridge strength `c` such that the per-component ridge is `c / n_k`.
pub fn ridge_strength<T: Real>(data: &[Vec<T>], k: usize) -> T {
    T::lit(RIDGE) * mean_variance(data) * T::from_usize_lossy(data.len()) / T::from_usize_lossy(k)
}

/// Scatter matrix (already divided by the component weight and ridged) projected
/// onto a per-component family. The shared family is handled by the caller.
fn project_family<T: Real>(family: CovarianceFamily, mut cov: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let p = cov.len();
    match family {
        CovarianceFamily::Spherical => {
            let lambda = (0..p).map(|j| cov[j][j]).sum::<T>() / T::from_usize_lossy(p);
            (0..p)
                .map(|i| {
                    (0..p)
                        .map(|j| if i == j { lambda } else { T::zero() })
                        .collect()
                })
                .collect()
        }
        CovarianceFamily::Diagonal => {
            for (i, row) in cov.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    if i != j {
                        *v = T::zero();
                    }
                }
            }
            cov
        }
        CovarianceFamily::Full | CovarianceFamily::SharedFull => cov,
    }
}

fn weighted_scatter<T: Real>(
    data: &[Vec<T>],
    weights: impl Fn(usize) -> T,
    mean: &[T],
) -> Vec<Vec<T>> {
    let p = mean.len();
    let mut acc = vec![vec![NeumaierSum::default(); p]; p];
    for (i, x) in data.iter().enumerate() {
        let w = weights(i);
        if w == T::zero() {
            continue;
        }
        for a in 0..p {
            let da = x[a] - mean[a];
            for b in 0..=a {
                acc[a][b].add(w * da * (x[b] - mean[b]));
            }
        }
    }
    let mut s = vec![vec![T::zero(); p]; p];
    for a in 0..p {
        for b in 0..=a {
            let v = acc[a][b].value();
            s[a][b] = v;
            s[b][a] = v;
        }
    }
    s
}

fn add_ridge<T: Real>(m: &mut [Vec<T>], r: T) {
    for (i, row) in m.iter_mut().enumerate() {
        row[i] += r;
    }
}

/// M-step from (possibly unnormalized) membership weights.
///
/// `tau_k` is the component's share of the total weight, `mu_k` the weighted
/// mean and `Sigma_k = (S_k + c I) / n_k` projected onto the family, where
/// `S_k` is the weighted scatter. A component whose weight falls below
/// [`EMPTY_WEIGHT`] is re-seeded at the point with the lowest density under
/// `previous` (the first point when there is none), with the ridged global
/// covariance and weight `1/n`.
pub fn m_step<T: Real>(
    data: &[Vec<T>],
    weights: &Responsibilities<T>,
    family: CovarianceFamily,
    ridge: T,
    previous: Option<&MixtureModel<T>>,
) -> Result<MixtureModel<T>> {
    let p = check_data(data)?;
    let n = data.len();
    let k = weights.first().map_or(0, Vec::len);
    if k == 0 || weights.len() != n {
        return Err(Error::Input(
            "responsibility matrix must be n x K with K >= 1".into(),
        ));
    }
    let totals: Vec<T> = (0..k)
        .map(|c| {
            weights
                .iter()
                .map(|r| r[c])
                .collect::<NeumaierSum<T>>()
                .value()
        })
        .collect();
    let grand: T = totals.iter().copied().sum();
    if !(grand > T::zero()) {
        return Err(Error::Numerical("all membership weights are zero".into()));
    }
    let empty = T::lit(EMPTY_WEIGHT);
    let mut components = Vec::with_capacity(k);
    let mut pooled = vec![vec![T::zero(); p]; p];
    let mut rescued = Vec::new();
    for c in 0..k {
        if totals[c] < empty {
            rescued.push(c);
            components.push(Component {
                weight: T::zero(),
                mean: vec![T::zero(); p],
                covariance: vec![vec![T::zero(); p]; p],
            });
            continue;
        }
        let nk = totals[c];
        let mean: Vec<T> = (0..p)
            .map(|j| {
                data.iter()
                    .zip(weights)
                    .map(|(x, r)| r[c] * x[j])
                    .collect::<NeumaierSum<T>>()
                    .value()
                    / nk
            })
            .collect();
        let scatter = weighted_scatter(data, |i| weights[i][c], &mean);
        let covariance = if family == CovarianceFamily::SharedFull {
            for (a, row) in pooled.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v += scatter[a][b];
                }
            }
            Vec::new()
        } else {
            let mut cov: Vec<Vec<T>> = scatter
                .iter()
                .map(|row| row.iter().map(|&v| v / nk).collect())
                .collect();
            add_ridge(&mut cov, ridge / nk);
            project_family(family, cov)
        };
        components.push(Component {
            weight: nk / grand,
            mean,
            covariance,
        });
    }

    if family == CovarianceFamily::SharedFull {
        let live: T = rescued.iter().fold(grand, |acc, &c| acc - totals[c]);
        let mut shared: Vec<Vec<T>> = pooled
            .iter()
            .map(|row| row.iter().map(|&v| v / live).collect())
            .collect();
        add_ridge(&mut shared, ridge * T::from_usize_lossy(k) / live);
        for c in &mut components {
            c.covariance = shared.clone();
        }
    }

    if !rescued.is_empty() {
        let seed_point = match previous {
            Some(model) => {
                let factors = model.factors()?;
                let dens: Vec<T> = data
                    .iter()
                    .map(|x| log_sum_exp(&joint_log_densities(model, &factors, x)))
                    .collect();
                (0..n).fold(0, |best, i| if dens[i] < dens[best] { i } else { best })
            }
            None => 0,
        };
        let ones = vec![vec![T::one()]; n];
        let global = m_step(
            data,
            &ones,
            CovarianceFamily::Full,
            ridge * T::from_usize_lossy(k),
            None,
        )?;
        for &c in &rescued {
            log::warn!(
                "component {c} lost all weight; re-seeding it at data row {}",
                seed_point + 1
            );
            components[c].mean = data[seed_point].clone();
            components[c].weight = T::one() / T::from_usize_lossy(n);
            if family != CovarianceFamily::SharedFull {
                components[c].covariance =
                    project_family(family, global.components[0].covariance.clone());
            }
        }
        let s: T = components.iter().map(|c| c.weight).sum();
        components.iter_mut().for_each(|c| c.weight /= s);
    }
    Ok(MixtureModel { family, components })
}

/// Expected complete-data log-likelihood minus the ridge penalty:
/// `sum_ik w_ik [log tau_k + log f_k(x_i)] - (c/2) sum_k tr(Sigma_k^{-1})`.
pub fn q_function<T: Real>(
    data: &[Vec<T>],
    weights: &Responsibilities<T>,
    model: &MixtureModel<T>,
    ridge: T,
) -> Result<T> {
    check_data(data)?;
    let factors = model.factors()?;
    let mut acc = NeumaierSum::default();
    for (x, w) in data.iter().zip(weights) {
        for (lj, &wk) in joint_log_densities(model, &factors, x).into_iter().zip(w) {
            if wk > T::zero() {
                acc.add(wk * lj);
            }
        }
    }
    let penalty: T = factors.iter().map(|(l, _)| trace_inverse(l)).sum();
    Ok(acc.value() - T::lit(0.5) * ridge * penalty)
}

/// Rejection-control settings for the randomized E-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcemConfig<T> {
    pub threshold: T,
    pub seed: u64,
}

impl<T: Real> RcemConfig<T> {
    pub fn new(threshold: T, seed: u64) -> Result<Self> {
        if !(threshold > T::zero() && threshold < T::one()) {
            return Err(Error::Config(format!(
                "rejection threshold {threshold} must lie in (0, 1)"
            )));
        }
        Ok(RcemConfig { threshold, seed })
    }
}

/// Keeps each entry `g` as `max(g, c)` with probability `min(1, g/c)`, else 0.
///
/// Draws come from a counter-based stream keyed by `(seed, iteration, i, k)`, so
/// the result does not depend on evaluation order. Rows are not renormalized.
pub fn rcem_reweight<T: Real>(
    resp: &Responsibilities<T>,
    config: &RcemConfig<T>,
    iteration: u64,
) -> Responsibilities<T> {
    let c = config.threshold;
    resp.par_iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(k, &g)| {
                    if g >= c {
                        return g;
                    }
                    let u = counter_uniform(config.seed, &[iteration, i as u64, k as u64]);
                    if T::lit(u) < g / c {
                        c
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect()
}

/// Mixture fitting as an [`EmProblem`].
pub struct MixtureProblem<'a, T> {
    data: &'a [Vec<T>],
    k: usize,
    family: CovarianceFamily,
    ridge: T,
    rcem: Option<RcemConfig<T>>,
}

impl<'a, T: Real> MixtureProblem<'a, T> {
    pub fn new(
        data: &'a [Vec<T>],
        k: usize,
        family: CovarianceFamily,
        rcem: Option<RcemConfig<T>>,
    ) -> Result<Self> {
        check_data(data)?;
        if k == 0 {
            return Err(Error::Config(
                "number of components must be at least 1".into(),
            ));
        }
        if data.len() <= k {
            return Err(Error::Input(format!(
                "{} data rows are too few for {k} components",
                data.len()
            )));
        }
        if let Some(r) = &rcem {
            RcemConfig::new(r.threshold, r.seed)?;
        }
        Ok(MixtureProblem {
            data,
            k,
            family,
            ridge: ridge_strength(data, k),
            rcem,
        })
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    fn penalized(&self, model: &MixtureModel<T>, loglik: T) -> Result<T> {
        Ok(loglik - T::lit(0.5) * self.ridge * model.trace_inverse_sum()?)
    }
}

impl<T: Real> EmProblem for MixtureProblem<'_, T> {
    type Scalar = T;
    type Params = MixtureModel<T>;
    type Stats = Responsibilities<T>;

    /// Random Dirichlet responsibility rows followed by an M-step.
    ///
    /// Flat rows would put every initial mean at the grand mean, a saddle point
    /// EM barely moves from. Instead `K` distinct rows are drawn as anchors and
    /// each row's Dirichlet concentration is raised on its nearest anchor.
    fn initialize(&self, _restart: usize, rng: &mut ChaCha8Rng) -> Result<MixtureModel<T>> {
        let anchors = rand::seq::index::sample(rng, self.data.len(), self.k).into_vec();
        let boost = Gamma::new(ANCHOR_CONCENTRATION, 1.0).expect("valid shape");
        let resp: Responsibilities<T> = self
            .data
            .iter()
            .map(|x| {
                let dist: Vec<T> = anchors
                    .iter()
                    .map(|&a| {
                        x.iter()
                            .zip(&self.data[a])
                            .map(|(&u, &v)| (u - v) * (u - v))
                            .sum()
                    })
                    .collect();
                let near = (0..self.k).fold(0, |b, j| if dist[j] < dist[b] { j } else { b });
                let draw: Vec<f64> = (0..self.k)
                    .map(|j| {
                        if j == near {
                            rng.sample(boost)
                        } else {
                            rng.sample::<f64, _>(Exp1)
                        }
                    })
                    .collect();
                let s: f64 = draw.iter().sum();
                draw.into_iter().map(|g| T::lit(g / s)).collect()
            })
            .collect();
        m_step(self.data, &resp, self.family, self.ridge, None)
    }

    fn e_step(
        &self,
        model: &MixtureModel<T>,
        ctx: StepContext,
    ) -> Result<(Responsibilities<T>, T)> {
        let (resp, ll) = e_step(self.data, model)?;
        let stats = match &self.rcem {
            None => resp,
            Some(cfg) => {
                let keyed = RcemConfig {
                    threshold: cfg.threshold,
                    seed: crate::rng::derive_seed(cfg.seed, &[ctx.seed]),
                };
                rcem_reweight(&resp, &keyed, ctx.iteration as u64)
            }
        };
        Ok((stats, self.penalized(model, ll)?))
    }

    fn m_step(
        &self,
        weights: &Responsibilities<T>,
        previous: &MixtureModel<T>,
    ) -> Result<MixtureModel<T>> {
        m_step(self.data, weights, self.family, self.ridge, Some(previous))
    }

    fn log_likelihood(&self, model: &MixtureModel<T>) -> Result<T> {
        let (_, ll) = e_step(self.data, model)?;
        self.penalized(model, ll)
    }

    fn deterministic_e_step(&self) -> bool {
        self.rcem.is_none()
    }
}

/// `-2 loglik + free_parameters * ln n`; lower is better.
pub fn bic<T: Real>(model: &MixtureModel<T>, data: &[Vec<T>]) -> Result<T> {
    let (_, ll) = e_step(data, model)?;
    Ok(bic_from_loglik(ll, model.free_parameters(), data.len()))
}

fn bic_from_loglik<T: Real>(loglik: T, free: usize, n: usize) -> T {
    -T::lit(2.0) * loglik + T::from_usize_lossy(free) * T::from_usize_lossy(n).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit<T> {
    pub model: MixtureModel<T>,
    pub responsibilities: Responsibilities<T>,
    /// Plain (unpenalized) log-likelihood at `model`.
    pub loglik: T,
    pub bic: T,
    pub trace: EmTrace<T>,
    pub best_restart: usize,
}

impl<T: Real> MixtureFit<T> {
    /// Hard assignment per row: the highest-responsibility component, ties to the lower index.
    pub fn assignments(&self) -> Vec<usize> {
        self.responsibilities
            .iter()
            .map(|r| argmax(r).expect("K >= 1"))
            .collect()
    }
}

/// Multi-start EM for a `k`-component mixture; `rcem` switches on the randomized E-step.
pub fn fit<T: Real>(
    data: &[Vec<T>],
    k: usize,
    family: CovarianceFamily,
    em: &EmConfig,
    rcem: Option<RcemConfig<T>>,
) -> Result<MixtureFit<T>> {
    let problem = MixtureProblem::new(data, k, family, rcem)?;
    let result = multi_start(&problem, em)?;
    let model = result.best.params;
    let (responsibilities, loglik) = e_step(data, &model)?;
    Ok(MixtureFit {
        bic: bic_from_loglik(loglik, model.free_parameters(), data.len()),
        model,
        responsibilities,
        loglik,
        trace: result.best.trace,
        best_restart: result.best.index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicRow<T> {
    pub k: usize,
    pub loglik: T,
    pub free_parameters: usize,
    pub bic: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection<T> {
    pub best: MixtureFit<T>,
    pub best_k: usize,
    pub table: Vec<BicRow<T>>,
}

/// Fits every `K` in `k_range` and keeps the lowest BIC, ties going to the smaller `K`.
pub fn select_k<T: Real>(
    data: &[Vec<T>],
    k_range: &[usize],
    family: CovarianceFamily,
    em: &EmConfig,
    rcem: Option<RcemConfig<T>>,
) -> Result<Selection<T>> {
    if k_range.is_empty() {
        return Err(Error::Config("the range of K is empty".into()));
    }
    let mut ks = k_range.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut best: Option<(usize, MixtureFit<T>)> = None;
    let mut table = Vec::with_capacity(ks.len());
    for k in ks {
        let f = fit(data, k, family, em, rcem)?;
        table.push(BicRow {
            k,
            loglik: f.loglik,
            free_parameters: f.model.free_parameters(),
            bic: f.bic,
        });
        if best.as_ref().is_none_or(|(_, b)| f.bic < b.bic) {
            best = Some((k, f));
        }
    }
    let (best_k, best) = best.expect("nonempty range");
    Ok(Selection {
        best,
        best_k,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::run_em;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn spherical_1d(mean: f64, var: f64, weight: f64) -> Component<f64> {
        Component {
            weight,
            mean: vec![mean],
            covariance: vec![vec![var]],
        }
    }

    fn planted(means: &[f64], per: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        let mut data = Vec::new();
        for &m in means {
            let d = Normal::new(m, 1.0).unwrap();
            for _ in 0..per {
                data.push(vec![d.sample(&mut rng)]);
            }
        }
        data
    }

    fn random_data(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect()
    }

    fn random_resp(n: usize, k: usize, seed: u64) -> Responsibilities<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let r: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|x| x / s).collect()
            })
            .collect()
    }

    #[test]
    fn one_component_takes_everything() {
        let data = random_data(10, 2, 1);
        let model = m_step(
            &data,
            &vec![vec![1.0]; 10],
            CovarianceFamily::Full,
            0.0,
            None,
        )
        .unwrap();
        let (resp, _) = e_step(&data, &model).unwrap();
        assert!(resp.iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn identical_components_return_weights() {
        let model = MixtureModel {
            family: CovarianceFamily::Spherical,
            components: vec![spherical_1d(0.0, 1.0, 0.3), spherical_1d(0.0, 1.0, 0.7)],
        };
        let (resp, _) = e_step(&[vec![-1.0], vec![4.0]], &model).unwrap();
        for r in resp {
            assert!((r[0] - 0.3).abs() < 1e-14 && (r[1] - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn single_point_bayes_rule() {
        let model = MixtureModel {
            family: CovarianceFamily::Spherical,
            components: vec![spherical_1d(0.0, 1.0, 0.4), spherical_1d(2.0, 4.0, 0.6)],
        };
        let x = 1.5f64;
        let f = |m: f64, v: f64| {
            (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
        };
        let (a, b) = (0.4 * f(0.0, 1.0), 0.6 * f(2.0, 4.0));
        let (resp, ll) = e_step(&[vec![x]], &model).unwrap();
        assert!((resp[0][0] - a / (a + b)).abs() < 1e-14);
        assert!((ll - (a + b).ln()).abs() < 1e-14);
    }

    #[test]
    fn singular_covariance_names_component() {
        let model = MixtureModel {
            family: CovarianceFamily::Spherical,
            components: vec![spherical_1d(0.0, 1.0, 0.5), spherical_1d(0.0, 0.0, 0.5)],
        };
        assert!(matches!(
            e_step(&[vec![0.0]], &model),
            Err(Error::SingularCovariance { component: 1 })
        ));
    }

    #[test]
    fn hard_assignments_give_sample_statistics() {
        let data = vec![
            vec![0.0, 1.0],
            vec![2.0, 3.0],
            vec![10.0, 10.0],
            vec![12.0, 14.0],
        ];
        let resp = vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ];
        let m = m_step(&data, &resp, CovarianceFamily::Full, 0.0, None).unwrap();
        assert_eq!(m.components[0].mean, vec![1.0, 2.0]);
        assert_eq!(m.components[1].mean, vec![11.0, 12.0]);
        assert_eq!(
            m.components[1].covariance,
            vec![vec![1.0, 2.0], vec![2.0, 4.0]]
        );
        assert_eq!(m.components[0].weight, 0.5);
    }

    #[test]
    fn uniform_responsibilities_give_identical_components() {
        let data = random_data(12, 3, 4);
        let m = m_step(
            &data,
            &vec![vec![0.5, 0.5]; 12],
            CovarianceFamily::Full,
            0.1,
            None,
        )
        .unwrap();
        assert_eq!(m.components[0], m.components[1]);
    }

    #[test]
    fn spherical_family_is_scalar_identity() {
        let data = random_data(15, 3, 5);
        let m = m_step(
            &data,
            &random_resp(15, 2, 6),
            CovarianceFamily::Spherical,
            0.01,
            None,
        )
        .unwrap();
        for c in &m.components {
            let l = c.covariance[0][0];
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(c.covariance[i][j], if i == j { l } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn shared_family_shares() {
        let data = random_data(15, 2, 7);
        let m = m_step(
            &data,
            &random_resp(15, 3, 8),
            CovarianceFamily::SharedFull,
            0.01,
            None,
        )
        .unwrap();
        assert!(m
            .components
            .windows(2)
            .all(|w| w[0].covariance == w[1].covariance));
    }

    #[test]
    fn empty_component_is_reseeded() {
        let data = vec![vec![0.0], vec![0.1], vec![0.2], vec![9.0]];
        let resp = vec![vec![1.0, 0.0]; 4];
        let prev = MixtureModel {
            family: CovarianceFamily::Spherical,
            components: vec![spherical_1d(0.1, 0.01, 0.5), spherical_1d(0.1, 0.01, 0.5)],
        };
        let m = m_step(&data, &resp, CovarianceFamily::Spherical, 1e-6, Some(&prev)).unwrap();
        assert_eq!(m.components[1].mean, vec![9.0]);
        let s: f64 = m.components.iter().map(|c| c.weight).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rcem_keeps_large_and_zero_entries() {
        let cfg = RcemConfig::new(0.05, 3).unwrap();
        let resp = vec![vec![0.5, 0.5, 0.0]; 200];
        let out = rcem_reweight(&resp, &cfg, 1);
        assert!(out.iter().all(|r| r == &vec![0.5, 0.5, 0.0]));
        assert!(RcemConfig::new(1.0, 0).is_err());
    }

    #[test]
    fn rcem_is_unbiased_below_threshold() {
        let cfg = RcemConfig::new(0.05, 99).unwrap();
        let n = 100_000;
        for g in [0.001, 0.01, 0.049] {
            let resp = vec![vec![g]; n];
            let out = rcem_reweight(&resp, &cfg, 7);
            assert!(out.iter().all(|r| r[0] == 0.0 || r[0] == 0.05));
            let mean: f64 = out.iter().map(|r| r[0]).sum::<f64>() / n as f64;
            // Var = c g - g^2 per draw
            let sd = ((0.05 * g - g * g) / n as f64).sqrt();
            assert!((mean - g).abs() < 3.0 * sd, "g={g} mean={mean}");
        }
    }

    #[test]
    fn free_parameter_counts() {
        let m = MixtureModel {
            family: CovarianceFamily::Spherical,
            components: vec![spherical_1d(0.0, 1.0, 1.0)],
        };
        assert_eq!(m.free_parameters(), 2);
        assert_eq!(CovarianceFamily::Full.covariance_parameters(2, 3), 12);
        assert_eq!(CovarianceFamily::SharedFull.covariance_parameters(2, 3), 6);
        assert_eq!(CovarianceFamily::Diagonal.covariance_parameters(2, 3), 6);
    }

    #[test]
    fn planted_two_cluster_recovery() {
        let data = planted(&[0.0, 10.0], 100, 21);
        let em = EmConfig::default().with_restarts(4).with_seed(5);
        let fit = fit(&data, 2, CovarianceFamily::Full, &em, None).unwrap();
        let mut means: Vec<f64> = fit.model.components.iter().map(|c| c.mean[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!(
            (means[0] - 0.0).abs() < 0.5 && (means[1] - 10.0).abs() < 0.5,
            "{means:?}"
        );
        assert!(fit.trace.is_monotone(1e-9));
        let one = super::fit(&data, 1, CovarianceFamily::Full, &em, None).unwrap();
        assert!(fit.bic < one.bic);
    }

    #[test]
    fn rcem_matches_plain_assignments() {
        let data = planted(&[0.0, 10.0], 100, 21);
        let em = EmConfig::default().with_restarts(4).with_seed(5);
        let plain = fit(&data, 2, CovarianceFamily::Full, &em, None).unwrap();
        let rc = fit(
            &data,
            2,
            CovarianceFamily::Full,
            &em,
            Some(RcemConfig::new(0.05, 8).unwrap()),
        )
        .unwrap();
        let (a, b) = (plain.assignments(), rc.assignments());
        // labels may be swapped between runs
        let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
        let agree = same.max(a.len() - same);
        assert!(agree as f64 >= 0.95 * a.len() as f64, "{agree}");
    }

    #[test]
    fn single_component_converges_immediately() {
        let data = random_data(30, 2, 9);
        let fit = fit(&data, 1, CovarianceFamily::Full, &EmConfig::default(), None).unwrap();
        assert!(fit.trace.iterations <= 1);
        let mean0 = data.iter().map(|r| r[0]).sum::<f64>() / 30.0;
        assert!((fit.model.components[0].mean[0] - mean0).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let data = random_data(3, 1, 1);
        assert!(fit(&data, 3, CovarianceFamily::Full, &EmConfig::default(), None).is_err());
    }

    #[test]
    fn identical_points_prefer_one_component() {
        let data = vec![vec![2.0, -1.0]; 5];
        let sel = select_k(
            &data,
            &[1, 2],
            CovarianceFamily::Full,
            &EmConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(sel.best_k, 1);
        let only = select_k(
            &data,
            &[2],
            CovarianceFamily::Full,
            &EmConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(only.best_k, 2);
    }

    #[test]
    fn full_fits_at_least_as_well_as_spherical() {
        let data = random_data(40, 2, 12);
        let em = EmConfig::default().with_restarts(3);
        let full = fit(&data, 1, CovarianceFamily::Full, &em, None).unwrap();
        let sph = fit(&data, 1, CovarianceFamily::Spherical, &em, None).unwrap();
        assert!(full.loglik >= sph.loglik - 1e-9);
        assert!(full.model.free_parameters() > sph.model.free_parameters());
    }

    #[test]
    fn permuted_initialization_permutes_result() {
        let data = planted(&[0.0, 6.0, 12.0], 20, 2);
        let problem = MixtureProblem::new(&data, 3, CovarianceFamily::Diagonal, None).unwrap();
        let mut rng = rng_from_seed(1);
        let init = problem.initialize(0, &mut rng).unwrap();
        let mut permuted = init.clone();
        permuted.components.rotate_left(1);
        let cfg = EmConfig::new(1e-10, 200, 1, 0).unwrap();
        let (a, _) = run_em(&problem, init, &cfg).unwrap();
        let (mut b, _) = run_em(&problem, permuted, &cfg).unwrap();
        b.components.rotate_right(1);
        for (x, y) in a.components.iter().zip(&b.components) {
            assert!((x.mean[0] - y.mean[0]).abs() < 1e-9 && (x.weight - y.weight).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn m_step_does_not_decrease_penalized_q(seed in any::<u64>()) {
            let data = random_data(20, 2, seed);
            let resp = random_resp(20, 2, seed ^ 1);
            let ridge = ridge_strength(&data, 2);
            let prev = m_step(&data, &random_resp(20, 2, seed ^ 2), CovarianceFamily::Full, ridge, None).unwrap();
            let next = m_step(&data, &resp, CovarianceFamily::Full, ridge, None).unwrap();
            let q0 = q_function(&data, &resp, &prev, ridge).unwrap();
            let q1 = q_function(&data, &resp, &next, ridge).unwrap();
            prop_assert!(q1 >= q0 - 1e-9, "{q1} < {q0}");
        }

        #[test]
        fn plain_em_is_monotone(seed in any::<u64>(), k in 1usize..4) {
            let data = random_data(25, 2, seed);
            let em = EmConfig::new(1e-8, 100, 1, seed).unwrap();
            let f = fit(&data, k, CovarianceFamily::Full, &em, None).unwrap();
            prop_assert!(f.trace.is_monotone(1e-9));
            for r in &f.responsibilities {
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
    }
}
