//! Generic expectation-maximization driver.
//!
//! A solver implements [`EmProblem`]; [`run_em`] iterates E- and M-steps from a
//! given starting point and [`multi_start`] runs several seeded restarts and
//! keeps the one with the highest final objective.
//!
//! The trace records the objective evaluated at every parameter point visited,
//! starting with the initial point, so a run that stops after `t` iterations has
//! `t + 1` entries. Convergence is declared when
//! `|l_t - l_{t-1}| / (|l_t| + 1) < tol`.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{restart_seed, rng_from_seed};
use crate::{Error, Real, Result};

/// Slack allowed before a decrease of the objective is reported.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl EmConfig {
    pub fn new(tol: f64, max_iter: usize, restarts: usize, seed: u64) -> Result<Self> {
        let config = EmConfig {
            tol,
            max_iter,
            restarts,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        EmConfig { seed, ..self }
    }

    pub fn with_restarts(self, restarts: usize) -> Self {
        EmConfig { restarts, ..self }
    }
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-6,
            max_iter: 1000,
            restarts: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace<T> {
    pub loglik_per_iter: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of steps whose objective dropped by more than [`MONOTONE_SLACK`].
    pub monotone_violations: usize,
}

impl<T: Real> EmTrace<T> {
    pub fn final_loglik(&self) -> T {
        *self
            .loglik_per_iter
            .last()
            .expect("trace has the initial point")
    }

    /// True when every step is nondecreasing up to `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.loglik_per_iter
            .windows(2)
            .all(|w| w[1].as_f64() >= w[0].as_f64() - slack)
    }
}

/// Context handed to the E-step: which restart stream and which iteration.
///
/// Deterministic E-steps ignore it; randomized ones draw from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepContext {
    pub seed: u64,
    pub iteration: usize,
}

/// Capability bundle a solver supplies to the driver.
pub trait EmProblem: Sync {
    type Scalar: Real;
    type Params: Clone + Send;
    type Stats;

    /// Starting point for restart `restart`, drawn from `rng`.
    fn initialize(&self, restart: usize, rng: &mut ChaCha8Rng) -> Result<Self::Params>;

    /// Sufficient statistics at `params` together with the objective at `params`.
    fn e_step(
        &self,
        params: &Self::Params,
        ctx: StepContext,
    ) -> Result<(Self::Stats, Self::Scalar)>;

    fn m_step(&self, stats: &Self::Stats, params: &Self::Params) -> Result<Self::Params>;

    /// Objective at `params` (observed-data log-likelihood, plus log-prior when
    /// the solver uses pseudocounts).
    fn log_likelihood(&self, params: &Self::Params) -> Result<Self::Scalar>;

    /// Whether the E-step is deterministic, i.e. the objective must not decrease.
    fn deterministic_e_step(&self) -> bool {
        true
    }
}

fn check_finite<T: Real>(value: T, iteration: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration,
            value: value.as_f64(),
        })
    }
}

/// Relative change used by the convergence test.
pub fn relative_change<T: Real>(previous: T, current: T) -> f64 {
    let (p, c) = (previous.as_f64(), current.as_f64());
    (c - p).abs() / (c.abs() + 1.0)
}

/// Runs EM from `init` until convergence or `config.max_iter` iterations.
pub fn run_em<P: EmProblem>(
    problem: &P,
    init: P::Params,
    config: &EmConfig,
) -> Result<(P::Params, EmTrace<P::Scalar>)> {
    config.validate()?;
    let mut params = init;
    let (mut stats, mut ll) = problem.e_step(
        &params,
        StepContext {
            seed: config.seed,
            iteration: 0,
        },
    )?;
    check_finite(ll, 0)?;

    let mut trace = EmTrace {
        loglik_per_iter: vec![ll],
        iterations: 0,
        converged: false,
        monotone_violations: 0,
    };
    let deterministic = problem.deterministic_e_step();

    for iteration in 1..=config.max_iter {
        params = problem.m_step(&stats, &params)?;
        let (next_stats, next_ll) = problem.e_step(
            &params,
            StepContext {
                seed: config.seed,
                iteration,
            },
        )?;
        check_finite(next_ll, iteration)?;
        if deterministic && next_ll.as_f64() < ll.as_f64() - MONOTONE_SLACK {
            trace.monotone_violations += 1;
            log::warn!(
                "objective decreased at iteration {iteration}: {} -> {}",
                ll,
                next_ll
            );
        }
        trace.loglik_per_iter.push(next_ll);
        trace.iterations = iteration;
        let change = relative_change(ll, next_ll);
        stats = next_stats;
        ll = next_ll;
        if change < config.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((params, trace))
}

/// Result of a single restart.
#[derive(Debug, Clone)]
pub struct RestartOutcome<P, T> {
    pub index: usize,
    pub seed: u64,
    pub params: P,
    pub trace: EmTrace<T>,
}

#[derive(Debug, Clone)]
pub struct MultiStart<P, T> {
    pub best: RestartOutcome<P, T>,
    /// Traces of successful restarts, in restart order.
    pub traces: Vec<(usize, EmTrace<T>)>,
    pub failures: Vec<(usize, String)>,
}

/// Runs one restart: seed-derived initialization, then [`run_em`].
pub fn run_restart<P: EmProblem>(
    problem: &P,
    config: &EmConfig,
    index: usize,
) -> Result<RestartOutcome<P::Params, P::Scalar>> {
    let seed = restart_seed(config.seed, index);
    let mut rng = rng_from_seed(seed);
    let init = problem.initialize(index, &mut rng)?;
    let (params, trace) = run_em(problem, init, &config.with_seed(seed))?;
    Ok(RestartOutcome {
        index,
        seed,
        params,
        trace,
    })
}

/// Runs `config.restarts` independent restarts (concurrently) and keeps the best.
///
/// Ties on the final objective go to the lowest restart index, so the result is
/// a deterministic function of the problem and `config.seed`.
pub fn multi_start<P: EmProblem>(
    problem: &P,
    config: &EmConfig,
) -> Result<MultiStart<P::Params, P::Scalar>> {
    config.validate()?;
    let outcomes: Vec<Result<RestartOutcome<P::Params, P::Scalar>>> = (0..config.restarts)
        .into_par_iter()
        .map(|index| run_restart(problem, config, index))
        .collect();

    let mut best: Option<RestartOutcome<P::Params, P::Scalar>> = None;
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(run) => {
                traces.push((index, run.trace.clone()));
                let better = match &best {
                    None => true,
                    Some(b) => run.trace.final_loglik() > b.trace.final_loglik(),
                };
                if better {
                    best = Some(run);
                }
            }
            Err(e) => failures.push((index, e.to_string())),
        }
    }
    match best {
        Some(best) => Ok(MultiStart {
            best,
            traces,
            failures,
        }),
        None => Err(Error::AllRestartsFailed(failures)),
    }
}
