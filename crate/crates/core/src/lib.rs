//! Expectation-maximization solvers for biological sequence and expression data.
//!
//! Five solvers share one EM driver ([`em`]):
//!
//! * [`motif`]: fixed-width motif discovery (one occurrence per sequence, or the
//!   zero-or-one windowed mixture),
//! * [`profile_hmm`]: profile hidden Markov models trained by Baum-Welch,
//! * [`phylo`]: two-state phylogenetic HMM conservation scoring,
//! * [`haplotype`]: haplotype frequency estimation from unphased genotypes,
//! * [`mixture`]: Gaussian mixture clustering with covariance families and BIC.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*F64` aliases
//! below name the usual double-precision instantiations.

// `!(x > 0)` deliberately rejects NaN too; index loops mirror the recurrences.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod em;
mod error;
pub mod haplotype;
pub mod mixture;
pub mod motif;
pub mod numeric;
pub mod phylo;
pub mod profile_hmm;
pub mod rng;
mod scalar;
pub mod seqio;

pub use error::{Error, Result};
pub use scalar::Real;

pub type EmTraceF64 = em::EmTrace<f64>;
pub type MotifModelF64 = motif::MotifModel<f64>;
pub type MotifConfigF64 = motif::MotifConfig<f64>;
pub type MotifDiscoveryF64 = motif::MotifDiscovery<f64>;
pub type ProfileHmmF64 = profile_hmm::ProfileHmm<f64>;
pub type TrainedProfileF64 = profile_hmm::TrainedProfile<f64>;
pub type PhyloHmmParamsF64 = phylo::PhyloHmmParams<f64>;
pub type PhyloFitF64 = phylo::PhyloFit<f64>;
pub type PhaseResultF64 = haplotype::PhaseResult<f64>;
pub type MixtureModelF64 = mixture::MixtureModel<f64>;
pub type MixtureFitF64 = mixture::MixtureFit<f64>;
pub type RcemConfigF64 = mixture::RcemConfig<f64>;
