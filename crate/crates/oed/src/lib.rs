//! Simulation-based optimal Bayesian experimental design.
//!
//! The central quantity is the expected information gain (EIG) of a design
//! `d`: the expected Kullback-Leibler divergence from the prior on model
//! parameters to the posterior, averaged over data predicted at `d`. This
//! crate estimates it with a nested Monte Carlo estimator ([`eig`]),
//! maximizes it over a continuous design space with stochastic optimizers
//! built for noisy objectives ([`opt`]), accelerates expensive forward
//! models with polynomial chaos surrogates projected on dimension-adaptive
//! sparse quadrature ([`pce`], [`quad`], [`dasq`]), checks the designs by
//! running the actual posterior inference with DRAM MCMC ([`mcmc`]), and
//! ships a stiff hydrogen-oxygen ignition model as a physics exemplar
//! ([`kinetics`]).
//!
//! Everything is deterministic given a seed: parallel loops assign one rng
//! stream per work item (see [`rng::stream`]) and reduce in a fixed order,
//! so results are bit-identical at any worker count.

pub mod dasq;
pub mod eig;
pub mod error;
pub mod kahan;
pub mod kinetics;
pub mod mcmc;
pub mod model;
pub mod opt;
pub mod pce;
pub mod quad;
pub mod rng;

pub(crate) mod evidence;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
