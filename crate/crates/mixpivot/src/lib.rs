//! Label-switching correction for Bayesian finite mixture MCMC output.
//!
//! Posterior draws from a mixture with exchangeable component priors are
//! invariant under relabelling of the components, so raw chains wander
//! between the G! symmetric modes and naive ergodic averages of
//! component-specific quantities are meaningless. This crate undoes the
//! switching after the fact:
//!
//! 1. estimate the posterior co-clustering probability of every pair of
//!    units from the allocation draws ([`similarity`]),
//! 2. cut a complete-linkage dendrogram of the induced dissimilarity into
//!    a reference partition ([`partitioning`]),
//! 3. pick one "pivotal" unit per reference group, chosen to be as
//!    separated from the other groups as possible ([`pivotal`]),
//! 4. relabel every retained iteration so that each pivot keeps its own
//!    group's label, dropping iterations where the pivots collide or the
//!    draw occupies more groups than the reference ([`pivotal::relabel`]).
//!
//! Alternative relabelling strategies (latent-class EM on the allocation
//! indicators, KL-based permutation selection, parameter ordering
//! constraints) live in [`baselines`], and all of them are exposed behind
//! runtime-selectable trait objects in [`strategy`]. The [`sim`] module
//! provides conjugate Gibbs samplers and the synthetic benchmark
//! scenarios used to exercise the pipeline end to end.

pub mod baselines;
pub mod chain;
pub mod chainfile;
pub mod error;
pub mod partitioning;
pub mod pipeline;
pub mod pivotal;
pub mod seeds;
pub mod sim;
pub mod similarity;
pub mod strategy;

mod assignment;

pub use chain::{ChainBuilder, ChainMeta, Dataset, MixtureChain, Violation};
pub use error::{Error, Result};
