//! Marginal likelihoods for discrete hidden Markov models, hierarchical
//! capture-recapture model building, MCMC sampling strategies over those
//! models, and effective-sample-size benchmarking of the strategies.
//!
//! The crate is organized bottom-up:
//!
//! * [`hmm`] - forward-filter, closed-form, and brute-force likelihoods for
//!   discrete HMMs;
//! * [`data`] - capture-history parsing and reduction to unique histories
//!   with multiplicities;
//! * [`model`] - hierarchical model assembly (priors, parameter vectors,
//!   per-history HMM construction) plus three ready-made ecological models
//!   and a data simulator;
//! * [`mcmc`] - adaptive random-walk Metropolis (scalar and block), latent
//!   state Gibbs updates, and the four sampling strategies;
//! * [`autoblock`] - posterior-correlation-driven search over parameter
//!   blockings;
//! * [`diagnostics`] - effective sample size, efficiency reports, and
//!   strategy comparison tables;
//! * [`io`] - chain, report, and configuration (de)serialization.

pub mod autoblock;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod hmm;
pub mod io;
pub mod math;
pub mod mcmc;
pub mod model;

pub use error::{Error, Result};
