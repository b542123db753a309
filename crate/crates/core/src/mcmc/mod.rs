//! Markov chain Monte Carlo over model posteriors.
//!
//! [`run_chain`] samples any [`Target`] under a [`SamplerScheme`] (a
//! partition of the parameter indices into update blocks) with adaptive
//! random-walk Metropolis kernels. [`run_mcmc`] wires a hierarchical model
//! and a dataset into one of four strategies:
//!
//! * [`Strategy::LatentState`] - parameters updated conditional on explicit
//!   per-individual latent state sequences, which are in turn Gibbs-swept;
//! * [`Strategy::Filtering`] - latent states integrated out by the forward
//!   filter, one likelihood evaluation per individual;
//! * [`Strategy::FilteringReduced`] - as above but evaluating each unique
//!   history once and weighting by multiplicity;
//! * [`Strategy::FilteringBlocked`] - reduced-representation filtering with
//!   a caller-supplied blocking scheme (see [`crate::autoblock`]).
//!
//! Chains are deterministic functions of their seed. Reported runtime covers
//! the sampling loop only, not target construction or output handling.

pub mod latent;
pub mod samplers;
pub mod target;

pub use target::{FnTarget, ModelData, PosteriorTarget, Target};

use std::time::Instant;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{expand, ParsedData};
use crate::error::{Error, Result};
use crate::model::HierarchicalModel;

use rand::SeedableRng;
use samplers::Kernel;

// ---------------------------------------------------------------------------
// Schemes and configuration
// ---------------------------------------------------------------------------

/// A partition of parameter indices into Metropolis update blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerScheme {
    pub blocks: Vec<Vec<usize>>,
}

impl SamplerScheme {
    /// One block per parameter, in index order.
    pub fn univariate(dim: usize) -> Self {
        Self {
            blocks: (0..dim).map(|i| vec![i]).collect(),
        }
    }

    /// All parameters in a single block.
    pub fn single_block(dim: usize) -> Self {
        Self {
            blocks: vec![(0..dim).collect()],
        }
    }

    /// Check the blocks form a partition of `0..dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let mut seen = vec![false; dim];
        for block in &self.blocks {
            if block.is_empty() {
                return Err(Error::InvalidArgument("empty block in sampling scheme".into()));
            }
            for &i in block {
                if i >= dim {
                    return Err(Error::InvalidArgument(format!(
                        "block index {i} outside 0..{dim}"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(format!(
                        "parameter {i} appears in more than one block"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidArgument(format!(
                "parameter {missing} is not covered by any block"
            )));
        }
        Ok(())
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Number of blocks holding more than one parameter.
    pub fn multi_param_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.len() > 1).count()
    }
}

/// Adaptation settings for the Metropolis kernels.
#[derive(Debug, Clone, Copy)]
pub struct AdaptConfig {
    pub enabled: bool,
    /// Iterations between adaptation updates.
    pub interval: usize,
    /// Target acceptance rate for one-parameter kernels.
    pub scalar_target: f64,
    /// Target acceptance rate for multi-parameter kernels.
    pub block_target: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            interval: 200,
            scalar_target: 0.44,
            block_target: 0.234,
        }
    }
}

/// Settings for one chain.
#[derive(Debug, Clone, Copy)]
pub struct McmcConfig {
    pub iterations: usize,
    pub seed: u64,
    pub initial_scale: f64,
    pub adapt: AdaptConfig,
}

impl McmcConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            initial_scale: 1.0,
            adapt: AdaptConfig::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Acceptance bookkeeping for one update block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub indices: Vec<usize>,
    pub accepted: u64,
    pub proposed: u64,
}

impl BlockAcceptance {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// A completed chain: every iteration's parameter vector plus run metadata.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub names: Vec<String>,
    pub dim: usize,
    /// Row-major `iterations x dim`.
    pub samples: Vec<f64>,
    pub seed: u64,
    /// Wall-clock seconds spent in the sampling loop.
    pub runtime_seconds: f64,
    pub acceptance: Vec<BlockAcceptance>,
    pub scheme: SamplerScheme,
}

impl ChainOutput {
    pub fn iterations(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.samples.len() / self.dim
        }
    }

    pub fn row(&self, it: usize) -> &[f64] {
        &self.samples[it * self.dim..(it + 1) * self.dim]
    }

    /// All values of one parameter across iterations.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.iterations()).map(|it| self.samples[it * self.dim + j]).collect()
    }
}

// ---------------------------------------------------------------------------
// Generic chain runner
// ---------------------------------------------------------------------------

/// Sample `target` with random-walk Metropolis under `scheme`, starting at
/// `initial`. Fails fast if the initial point has non-finite log density.
pub fn run_chain(
    target: &dyn Target,
    scheme: &SamplerScheme,
    config: &McmcConfig,
    initial: &[f64],
) -> Result<ChainOutput> {
    let dim = target.dim();
    scheme.validate(dim)?;
    if initial.len() != dim {
        return Err(Error::Dimension(format!(
            "initial point has length {}, target has dimension {dim}",
            initial.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut x = initial.to_vec();
    let mut lp = target.log_density(&x)?;
    if !lp.is_finite() {
        return Err(Error::NonFiniteInitial(format!(
            "log density {lp} at the starting point"
        )));
    }

    let mut kernels: Vec<Kernel> = scheme
        .blocks
        .iter()
        .map(|b| Kernel::for_block(b, config.initial_scale))
        .collect();
    let mut samples = Vec::with_capacity(config.iterations * dim);

    let start = Instant::now();
    for it in 1..=config.iterations {
        for kernel in &mut kernels {
            kernel.step(target, &mut x, &mut lp, &mut rng)?;
        }
        for kernel in &mut kernels {
            kernel.observe(&x);
        }
        samples.extend_from_slice(&x);
        if config.adapt.enabled && it % config.adapt.interval == 0 {
            let round = (it / config.adapt.interval) as f64;
            let gamma = 1.0 / round.sqrt();
            for kernel in &mut kernels {
                kernel.adapt(gamma, &config.adapt);
            }
        }
    }
    let runtime_seconds = start.elapsed().as_secs_f64();

    let acceptance = kernels
        .iter()
        .map(|k| {
            let c = k.total();
            BlockAcceptance {
                indices: k.indices(),
                accepted: c.accepted,
                proposed: c.proposed,
            }
        })
        .collect();

    Ok(ChainOutput {
        names: target.names(),
        dim,
        samples,
        seed: config.seed,
        runtime_seconds,
        acceptance,
        scheme: scheme.clone(),
    })
}

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

/// The four benchmarked sampling strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    LatentState,
    Filtering,
    FilteringReduced,
    FilteringBlocked,
}

impl Strategy {
    /// Stable label used in reports and comparison tables.
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::LatentState => "LatentState",
            Strategy::Filtering => "Filtering",
            Strategy::FilteringReduced => "FilteringRR",
            Strategy::FilteringBlocked => "FilteringBlocking",
        }
    }
}

/// Run one strategy on a model and dataset.
///
/// `scheme` must be given for [`Strategy::FilteringBlocked`] and must be
/// absent otherwise. The latent-state strategy needs the full dataset: with
/// only unique histories and multiplicities there is no way to carry one
/// latent sequence per individual.
pub fn run_mcmc(
    model: &HierarchicalModel,
    data: &ParsedData,
    strategy: Strategy,
    scheme: Option<&SamplerScheme>,
    config: &McmcConfig,
) -> Result<ChainOutput> {
    if strategy != Strategy::FilteringBlocked && scheme.is_some() {
        return Err(Error::InvalidArgument(format!(
            "a blocking scheme only applies to the {} strategy",
            Strategy::FilteringBlocked.label()
        )));
    }
    let initial = model.initial_theta();
    match strategy {
        Strategy::LatentState => match data {
            ParsedData::Full(full) => latent::run_latent_chain(model, full, config),
            ParsedData::Reduced(_) => Err(Error::LatentNeedsFullData),
        },
        Strategy::Filtering => {
            let owned;
            let full = match data {
                ParsedData::Full(d) => d,
                ParsedData::Reduced(r) => {
                    owned = expand(r);
                    &owned
                }
            };
            let target = PosteriorTarget::new(model, ModelData::Full(full));
            run_chain(
                &target,
                &SamplerScheme::univariate(model.dim()),
                config,
                &initial,
            )
        }
        Strategy::FilteringReduced => {
            let reduced = data.to_reduced();
            let target = PosteriorTarget::new(model, ModelData::Reduced(&reduced));
            run_chain(
                &target,
                &SamplerScheme::univariate(model.dim()),
                config,
                &initial,
            )
        }
        Strategy::FilteringBlocked => {
            let scheme = scheme.ok_or_else(|| {
                Error::InvalidArgument(
                    "the blocked strategy needs a blocking scheme; run the blocking search first"
                        .into(),
                )
            })?;
            let reduced = data.to_reduced();
            let target = PosteriorTarget::new(model, ModelData::Reduced(&reduced));
            run_chain(&target, scheme, config, &initial)
        }
    }
}
