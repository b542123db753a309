//! The latent-state sampling strategy.
//!
//! State is the pair (parameters, latent state sequences). Parameters are
//! updated by the same adaptive Metropolis kernels as elsewhere, but against
//! the joint density with the latent states held fixed; the latent states
//! are then refreshed by a systematic-scan Gibbs sweep (individuals in
//! dataset order, occasions ascending). Only the parameter part of the state
//! is recorded.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use std::time::Instant;

use crate::data::CaptureDataset;
use crate::error::{Error, Result};
use crate::model::{HierarchicalModel, LatentStates, ThetaMatrices};

use super::samplers::Kernel;
use super::target::Target;
use super::{BlockAcceptance, ChainOutput, McmcConfig, SamplerScheme};

/// Joint density of (data, latents) as a function of the parameters, with
/// the latent states frozen.
struct LatentConditional<'a> {
    model: &'a HierarchicalModel,
    data: &'a CaptureDataset,
    latents: &'a LatentStates,
}

impl Target for LatentConditional<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn names(&self) -> Vec<String> {
        self.model.param_names()
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        let prior = self.model.log_prior(theta);
        if prior == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let mats = self.model.build_matrices(theta)?;
        Ok(prior + self.model.log_lik_given_latents(&mats.log(), self.data, self.latents))
    }
}

/// One systematic Gibbs sweep over every latent state.
///
/// The full conditional of the state at occasion `t` is proportional to the
/// transition into it, the transition out of it (when one exists), and the
/// emission of the observed code.
pub fn gibbs_sweep(
    model: &HierarchicalModel,
    mats: &ThetaMatrices,
    data: &CaptureDataset,
    latents: &mut LatentStates,
    rng: &mut ChaCha20Rng,
) -> Result<()> {
    let num_states = model.num_states();
    let mut weights = vec![0.0f64; num_states];

    for (i, h) in data.histories().iter().enumerate() {
        let f = h.first_occasion();
        let seq = latents.seq_mut(i);
        for j in 0..seq.len() {
            let t = f + 1 + j;
            let prev = if j == 0 {
                h.code(f) as usize // sighting codes identify the state
            } else {
                seq[j - 1] as usize
            };
            let next = if j + 1 < seq.len() {
                Some(seq[j + 1] as usize)
            } else {
                None
            };
            let y = h.code(t) as usize;
            let trans_in = mats.transition(t);
            let emit = mats.emission(t);
            let mut total = 0.0;
            for s in 1..=num_states {
                let mut w = trans_in.get(s - 1, prev - 1) * emit.get(y - 1, s - 1);
                if let Some(nx) = next {
                    w *= mats.transition(t + 1).get(nx - 1, s - 1);
                }
                weights[s - 1] = w;
                total += w;
            }
            if !(total > 0.0) {
                return Err(Error::DegenerateConditional {
                    history: i + 1,
                    occasion: t,
                });
            }
            let mut u = rng.random::<f64>() * total;
            let mut chosen = num_states;
            for s in 1..=num_states {
                u -= weights[s - 1];
                if u < 0.0 {
                    chosen = s;
                    break;
                }
            }
            seq[j] = chosen as u8;
        }
    }
    Ok(())
}

/// Run the latent-state strategy: alternate parameter Metropolis updates
/// (given the latents) with a full Gibbs sweep of the latents.
pub(crate) fn run_latent_chain(
    model: &HierarchicalModel,
    data: &CaptureDataset,
    config: &McmcConfig,
) -> Result<ChainOutput> {
    let dim = model.dim();
    let scheme = SamplerScheme::univariate(dim);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);

    let mut theta = model.initial_theta();
    let mut latents = model.initial_latents(data)?;
    let mut lp = {
        let target = LatentConditional {
            model,
            data,
            latents: &latents,
        };
        target.log_density(&theta)?
    };
    if !lp.is_finite() {
        return Err(Error::NonFiniteInitial(format!(
            "joint log density {lp} at the starting state"
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
        {
            let target = LatentConditional {
                model,
                data,
                latents: &latents,
            };
            for kernel in &mut kernels {
                kernel.step(&target, &mut theta, &mut lp, &mut rng)?;
            }
        }
        let mats = model.build_matrices(&theta)?;
        gibbs_sweep(model, &mats, data, &mut latents, &mut rng)?;
        // the sweep moved the latents, so the conditional density moved too
        lp = model.log_prior(&theta)
            + model.log_lik_given_latents(&mats.log(), data, &latents);

        for kernel in &mut kernels {
            kernel.observe(&theta);
        }
        samples.extend_from_slice(&theta);
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
        names: model.param_names(),
        dim,
        samples,
        seed: config.seed,
        runtime_seconds,
        acceptance,
        scheme,
    })
}
