//! Fixed-width ungapped motif discovery by EM.
//!
//! The motif is a product-multinomial weight matrix: `positions[i]` is the
//! residue distribution at motif column `i`, `background` the distribution of
//! every residue outside a site. Two occurrence models are supported:
//!
//! * **OOPS**: each sequence holds exactly one site, uniformly placed among its
//!   `L - w + 1` start positions.
//! * **ZOOPS**: every length-`w` window is an independent draw from a two-part
//!   mixture, motif with prior `p0` and background with prior `1 - p0`.
//!
//! Start positions are 0-based throughout. Pseudocounts are added in every
//! M-step, which makes the iteration MAP-EM under a Dirichlet prior; the EM
//! objective reported in traces is therefore `loglik + alpha * sum(log theta)`
//! over all weight-matrix rows.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::em::{multi_start, EmConfig, EmProblem, EmTrace, StepContext};
use crate::numeric::{argmax, log_sum_exp, NeumaierSum};
use crate::seqio::Sequence;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotifMode {
    Oops,
    Zoops,
}

impl std::str::FromStr for MotifMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "oops" => Ok(MotifMode::Oops),
            "zoops" => Ok(MotifMode::Zoops),
            other => Err(format!(
                "unknown motif mode {other:?} (expected oops or zoops)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifConfig<T> {
    pub width: usize,
    pub mode: MotifMode,
    pub pseudocount: T,
    /// Initial per-window site prior; ZOOPS only.
    pub site_prior: T,
}

impl<T: Real> MotifConfig<T> {
    pub fn oops(width: usize) -> Self {
        MotifConfig {
            width,
            mode: MotifMode::Oops,
            pseudocount: T::lit(0.5),
            site_prior: T::lit(0.01),
        }
    }

    pub fn zoops(width: usize, site_prior: T) -> Self {
        MotifConfig {
            mode: MotifMode::Zoops,
            site_prior,
            ..Self::oops(width)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("motif width must be at least 1".into()));
        }
        if !(self.pseudocount > T::zero()) {
            return Err(Error::Config("pseudocount must be positive".into()));
        }
        if self.mode == MotifMode::Zoops
            && !(self.site_prior > T::zero() && self.site_prior < T::one())
        {
            return Err(Error::Config("site prior p0 must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Weight matrix `(theta_0, theta_1, ..., theta_w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifModel<T> {
    pub background: Vec<T>,
    pub positions: Vec<Vec<T>>,
}

impl<T: Real> MotifModel<T> {
    pub fn uniform(width: usize, alphabet_size: usize) -> Self {
        let u = T::one() / T::from_usize_lossy(alphabet_size);
        MotifModel {
            background: vec![u; alphabet_size],
            positions: vec![vec![u; alphabet_size]; width],
        }
    }

    pub fn width(&self) -> usize {
        self.positions.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.background.len()
    }

    /// Checks every row is a strictly positive distribution summing to one (within 1e-9).
    pub fn validate(&self) -> Result<()> {
        let d = self.alphabet_size();
        if d == 0 || self.positions.is_empty() {
            return Err(Error::Input(
                "motif model needs a width and an alphabet".into(),
            ));
        }
        for (i, row) in std::iter::once(&self.background)
            .chain(&self.positions)
            .enumerate()
        {
            if row.len() != d {
                return Err(Error::Input(format!(
                    "weight-matrix row {i} has {} entries, expected {d}",
                    row.len()
                )));
            }
            if row.iter().any(|&x| !(x > T::zero())) {
                return Err(Error::Input(format!(
                    "weight-matrix row {i} has a non-positive entry"
                )));
            }
            let sum = row.iter().copied().sum::<T>().as_f64();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Input(format!("weight-matrix row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    fn log_rows(&self) -> (Vec<T>, Vec<Vec<T>>) {
        (
            self.background.iter().map(|x| x.ln()).collect(),
            self.positions
                .iter()
                .map(|r| r.iter().map(|x| x.ln()).collect())
                .collect(),
        )
    }

    /// `sum over rows and residues of log theta`, the Dirichlet log-prior kernel.
    pub fn log_prior_kernel(&self) -> T {
        std::iter::once(&self.background)
            .chain(&self.positions)
            .flat_map(|r| r.iter())
            .map(|x| x.ln())
            .collect::<NeumaierSum<T>>()
            .value()
    }
}

/// Expected residue counts per motif column and in the background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCounts<T> {
    pub motif_counts: Vec<Vec<T>>,
    pub background_counts: Vec<T>,
}

impl<T: Real> ExpectedCounts<T> {
    fn zeros(width: usize, d: usize) -> Self {
        ExpectedCounts {
            motif_counts: vec![vec![T::zero(); d]; width],
            background_counts: vec![T::zero(); d],
        }
    }
}

/// `per_sequence[k][l]`: posterior that a site starts at `l` in sequence `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitePosterior<T> {
    pub per_sequence: Vec<Vec<T>>,
}

impl<T: Real> SitePosterior<T> {
    /// Highest-posterior start per sequence; ties go to the smallest start.
    pub fn best_sites(&self) -> Vec<(usize, T)> {
        self.per_sequence
            .iter()
            .map(|p| {
                let l = argmax(p).expect("every sequence has a window");
                (l, p[l])
            })
            .collect()
    }
}

fn check_sequences<T: Real>(seqs: &[Sequence], model: &MotifModel<T>) -> Result<()> {
    let w = model.width();
    let d = model.alphabet_size();
    for s in seqs {
        if s.len() < w {
            return Err(Error::Input(format!(
                "sequence {:?} has length {} shorter than the motif width {w}",
                s.id,
                s.len()
            )));
        }
        if let Some(&r) = s.residues.iter().find(|&&r| r as usize >= d) {
            return Err(Error::Input(format!(
                "sequence {:?} holds residue index {r} outside the model alphabet",
                s.id
            )));
        }
    }
    Ok(())
}

/// `log P(Y_k | site at l, theta)`.
fn log_weights<T: Real>(residues: &[u8], log_bg: &[T], log_pos: &[Vec<T>]) -> Vec<T> {
    let w = log_pos.len();
    let base: T = residues
        .iter()
        .map(|&r| log_bg[r as usize])
        .collect::<NeumaierSum<T>>()
        .value();
    (0..=residues.len() - w)
        .map(|l| {
            let mut acc = NeumaierSum::default();
            acc.add(base);
            for (i, row) in log_pos.iter().enumerate() {
                let r = residues[l + i] as usize;
                acc.add(row[r] - log_bg[r]);
            }
            acc.value()
        })
        .collect()
}

/// `log w_{k,l}`, the log-likelihood of `seq` given a site starting at `start`.
pub fn log_site_weight<T: Real>(seq: &Sequence, start: usize, model: &MotifModel<T>) -> Result<T> {
    check_sequences(std::slice::from_ref(seq), model)?;
    let w = model.width();
    if start + w > seq.len() {
        return Err(Error::Input(format!(
            "start {start} is out of range for sequence {:?} of length {} and width {w}",
            seq.id,
            seq.len()
        )));
    }
    let (log_bg, log_pos) = model.log_rows();
    let mut acc = NeumaierSum::default();
    for (j, &r) in seq.residues.iter().enumerate() {
        let r = r as usize;
        if j >= start && j < start + w {
            acc.add(log_pos[j - start][r]);
        } else {
            acc.add(log_bg[r]);
        }
    }
    Ok(acc.value())
}

/// `w_{k,l} = P(Y_k | Gamma_{k,l} = 1, theta)`.
///
/// The product is accumulated in log space; for long sequences the value itself
/// underflows, which is why the E-steps work with [`log_site_weight`]-style values
/// shifted by their per-sequence maximum.
pub fn site_weight<T: Real>(seq: &Sequence, start: usize, model: &MotifModel<T>) -> Result<T> {
    Ok(log_site_weight(seq, start, model)?.exp())
}

/// OOPS E-step: expected counts, site posteriors and `sum_k log(W_k / L'_k)`.
pub fn e_step_oops<T: Real>(
    seqs: &[Sequence],
    model: &MotifModel<T>,
) -> Result<(ExpectedCounts<T>, SitePosterior<T>, T)> {
    check_sequences(seqs, model)?;
    let w = model.width();
    let d = model.alphabet_size();
    let (log_bg, log_pos) = model.log_rows();
    let mut counts = ExpectedCounts::zeros(w, d);
    let mut total = vec![T::zero(); d];
    let mut posteriors = Vec::with_capacity(seqs.len());
    let mut loglik = NeumaierSum::default();

    for seq in seqs {
        let lw = log_weights(&seq.residues, &log_bg, &log_pos);
        let log_total = log_sum_exp(&lw);
        if !log_total.is_finite() {
            return Err(Error::Numerical(format!(
                "sequence {:?} has zero total site weight",
                seq.id
            )));
        }
        let n_starts = T::from_usize_lossy(lw.len());
        loglik.add(log_total - n_starts.ln());
        let post: Vec<T> = lw.iter().map(|&x| (x - log_total).exp()).collect();
        for (l, &p) in post.iter().enumerate() {
            for (i, row) in counts.motif_counts.iter_mut().enumerate() {
                row[seq.residues[l + i] as usize] += p;
            }
        }
        for &r in &seq.residues {
            total[r as usize] += T::one();
        }
        posteriors.push(post);
    }
    for r in 0..d {
        let motif: T = counts.motif_counts.iter().map(|row| row[r]).sum();
        counts.background_counts[r] = (total[r] - motif).max(T::zero());
    }
    Ok((
        counts,
        SitePosterior {
            per_sequence: posteriors,
        },
        loglik.value(),
    ))
}

/// ZOOPS E-step over every window. Returns counts, per-window posteriors and
/// `sum over windows of log(p0 f_motif + (1 - p0) f_background)`.
pub fn e_step_zoops<T: Real>(
    seqs: &[Sequence],
    model: &MotifModel<T>,
    site_prior: T,
) -> Result<(ExpectedCounts<T>, SitePosterior<T>, T)> {
    check_sequences(seqs, model)?;
    if !(site_prior > T::zero() && site_prior < T::one()) {
        return Err(Error::Config("site prior p0 must lie in (0, 1)".into()));
    }
    let w = model.width();
    let d = model.alphabet_size();
    let (log_bg, log_pos) = model.log_rows();
    let log_p0 = site_prior.ln();
    let log_q0 = (-site_prior).ln_1p();
    let mut counts = ExpectedCounts::zeros(w, d);
    let mut posteriors = Vec::with_capacity(seqs.len());
    let mut loglik = NeumaierSum::default();

    for seq in seqs {
        let mut post = Vec::with_capacity(seq.len() + 1 - w);
        for l in 0..=seq.len() - w {
            let window = &seq.residues[l..l + w];
            let mut lm = NeumaierSum::default();
            let mut lb = NeumaierSum::default();
            for (i, &r) in window.iter().enumerate() {
                lm.add(log_pos[i][r as usize]);
                lb.add(log_bg[r as usize]);
            }
            let a = log_p0 + lm.value();
            let b = log_q0 + lb.value();
            let norm = log_sum_exp(&[a, b]);
            loglik.add(norm);
            let z = (a - norm).exp();
            for (i, &r) in window.iter().enumerate() {
                counts.motif_counts[i][r as usize] += z;
                counts.background_counts[r as usize] += T::one() - z;
            }
            post.push(z);
        }
        posteriors.push(post);
    }
    Ok((
        counts,
        SitePosterior {
            per_sequence: posteriors,
        },
        loglik.value(),
    ))
}

/// M-step: `theta_i = (c_i + alpha) / (motif_total + d alpha)` and
/// `theta_0 = (b + alpha) / (background_total + d alpha)`.
///
/// For OOPS `motif_total` is the number of sequences `K` and `background_total`
/// is `sum_k (L_k - w)`; for ZOOPS they are the expected site count and the
/// expected number of background residues. Rows are renormalized afterwards,
/// which only matters when the counts disagree with the stated totals.
pub fn m_step<T: Real>(
    counts: &ExpectedCounts<T>,
    motif_total: T,
    background_total: T,
    pseudocount: T,
) -> MotifModel<T> {
    let d = T::from_usize_lossy(counts.background_counts.len());
    let row = |c: &[T], total: T| -> Vec<T> {
        let denom = total + d * pseudocount;
        let mut row: Vec<T> = c.iter().map(|&x| (x + pseudocount) / denom).collect();
        let sum: T = row.iter().copied().sum();
        if sum > T::zero() {
            row.iter_mut().for_each(|x| *x /= sum);
        }
        row
    };
    MotifModel {
        background: row(&counts.background_counts, background_total),
        positions: counts
            .motif_counts
            .iter()
            .map(|c| row(c, motif_total))
            .collect(),
    }
}

/// Parameters the EM driver iterates over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifParams<T> {
    pub model: MotifModel<T>,
    /// ZOOPS window prior; `None` in OOPS mode.
    pub site_prior: Option<T>,
}

/// Motif discovery as an [`EmProblem`].
pub struct MotifProblem<'a, T> {
    seqs: &'a [Sequence],
    config: MotifConfig<T>,
    alphabet_size: usize,
}

impl<'a, T: Real> MotifProblem<'a, T> {
    pub fn new(seqs: &'a [Sequence], alphabet_size: usize, config: MotifConfig<T>) -> Result<Self> {
        config.validate()?;
        if seqs.is_empty() {
            return Err(Error::Input(
                "motif discovery needs at least one sequence".into(),
            ));
        }
        check_sequences(seqs, &MotifModel::<T>::uniform(config.width, alphabet_size))?;
        Ok(MotifProblem {
            seqs,
            config,
            alphabet_size,
        })
    }

    fn e_step_raw(
        &self,
        params: &MotifParams<T>,
    ) -> Result<(ExpectedCounts<T>, SitePosterior<T>, T)> {
        match self.config.mode {
            MotifMode::Oops => e_step_oops(self.seqs, &params.model),
            MotifMode::Zoops => e_step_zoops(
                self.seqs,
                &params.model,
                params.site_prior.unwrap_or(self.config.site_prior),
            ),
        }
    }

    fn objective(&self, params: &MotifParams<T>, loglik: T) -> T {
        loglik + self.config.pseudocount * params.model.log_prior_kernel()
    }

    /// Site posteriors and the plain log-likelihood at `params`.
    pub fn posteriors(&self, params: &MotifParams<T>) -> Result<(SitePosterior<T>, T)> {
        let (_, post, ll) = self.e_step_raw(params)?;
        Ok((post, ll))
    }
}

impl<T: Real> EmProblem for MotifProblem<'_, T> {
    type Scalar = T;
    type Params = MotifParams<T>;
    type Stats = (ExpectedCounts<T>, T, T);

    /// Seeds the motif columns from one random window, smoothed by the pseudocount,
    /// and the background from global residue frequencies.
    fn initialize(&self, _restart: usize, rng: &mut ChaCha8Rng) -> Result<MotifParams<T>> {
        let d = self.alphabet_size;
        let w = self.config.width;
        let alpha = self.config.pseudocount;
        let k = rng.random_range(0..self.seqs.len());
        let seq = &self.seqs[k].residues;
        let start = rng.random_range(0..=seq.len() - w);

        let mut freq = vec![T::zero(); d];
        let mut n = 0usize;
        for s in self.seqs {
            for &r in &s.residues {
                freq[r as usize] += T::one();
                n += 1;
            }
        }
        let dt = T::from_usize_lossy(d);
        let background = freq
            .iter()
            .map(|&c| (c + alpha) / (T::from_usize_lossy(n) + dt * alpha))
            .collect();
        let positions = (0..w)
            .map(|i| {
                (0..d)
                    .map(|r| {
                        let hit = if seq[start + i] as usize == r {
                            T::one()
                        } else {
                            T::zero()
                        };
                        (hit + alpha) / (T::one() + dt * alpha)
                    })
                    .collect()
            })
            .collect();
        Ok(MotifParams {
            model: MotifModel {
                background,
                positions,
            },
            site_prior: (self.config.mode == MotifMode::Zoops).then_some(self.config.site_prior),
        })
    }

    fn e_step(
        &self,
        params: &MotifParams<T>,
        _: StepContext,
    ) -> Result<((ExpectedCounts<T>, T, T), T)> {
        let (counts, post, ll) = self.e_step_raw(params)?;
        let (sites, windows) = match self.config.mode {
            MotifMode::Oops => (T::from_usize_lossy(self.seqs.len()), T::zero()),
            MotifMode::Zoops => {
                let mut s = NeumaierSum::default();
                let mut n = 0usize;
                for p in &post.per_sequence {
                    for &z in p {
                        s.add(z);
                    }
                    n += p.len();
                }
                (s.value(), T::from_usize_lossy(n))
            }
        };
        let objective = self.objective(params, ll);
        Ok(((counts, sites, windows), objective))
    }

    fn m_step(
        &self,
        stats: &(ExpectedCounts<T>, T, T),
        _: &MotifParams<T>,
    ) -> Result<MotifParams<T>> {
        let (counts, sites, windows) = stats;
        let w = T::from_usize_lossy(self.config.width);
        let alpha = self.config.pseudocount;
        match self.config.mode {
            MotifMode::Oops => {
                let background_total: usize =
                    self.seqs.iter().map(|s| s.len() - self.config.width).sum();
                Ok(MotifParams {
                    model: m_step(counts, *sites, T::from_usize_lossy(background_total), alpha),
                    site_prior: None,
                })
            }
            MotifMode::Zoops => {
                let background_total = (*windows - *sites) * w;
                let p0 = (*sites / *windows)
                    .max(T::min_positive_value())
                    .min(T::one() - T::epsilon());
                Ok(MotifParams {
                    model: m_step(counts, *sites, background_total, alpha),
                    site_prior: Some(p0),
                })
            }
        }
    }

    fn log_likelihood(&self, params: &MotifParams<T>) -> Result<T> {
        let (_, _, ll) = self.e_step_raw(params)?;
        Ok(self.objective(params, ll))
    }
}

/// Outcome of [`discover`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifDiscovery<T> {
    pub model: MotifModel<T>,
    pub site_prior: Option<T>,
    pub posterior: SitePosterior<T>,
    /// Observed-data log-likelihood at the returned model (no prior term).
    pub loglik: T,
    pub trace: EmTrace<T>,
    pub best_restart: usize,
}

/// Runs seeded multi-start EM and returns the best model with its site posteriors.
pub fn discover<T: Real>(
    seqs: &[Sequence],
    alphabet_size: usize,
    config: MotifConfig<T>,
    em: &EmConfig,
) -> Result<MotifDiscovery<T>> {
    let problem = MotifProblem::new(seqs, alphabet_size, config)?;
    let result = multi_start(&problem, em)?;
    let params = result.best.params;
    let (posterior, loglik) = problem.posteriors(&params)?;
    Ok(MotifDiscovery {
        model: params.model,
        site_prior: params.site_prior,
        posterior,
        loglik,
        trace: result.best.trace,
        best_restart: result.best.index,
    })
}
