//! Random-walk Metropolis kernels with diminishing adaptation.
//!
//! A sampling scheme is a partition of the parameter indices; one-element
//! blocks get a scalar kernel, larger blocks a multivariate kernel whose
//! proposal covariance tracks the empirical covariance of the chain. Scale
//! adaptation is Robbins-Monro on the log scale: after each adaptation
//! interval `r` the scale moves by `exp(gamma_r (acc - target))` with
//! `gamma_r = 1/sqrt(r)`, so early intervals move fast and the process
//! settles. Scalar kernels aim at 0.44 acceptance, block kernels at 0.234,
//! and block proposals use the classic `2.38^2/d` covariance scaling with a
//! small ridge so degenerate empirical covariance cannot wedge the sampler.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::math::cholesky_lower;

use super::target::Target;
use super::AdaptConfig;

const COV_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Counter {
    pub accepted: u64,
    pub proposed: u64,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
        }
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn reset(&mut self) {
        *self = Counter::default();
    }
}

pub(crate) struct ScalarKernel {
    idx: usize,
    scale: f64,
    interval: Counter,
    pub total: Counter,
}

pub(crate) struct BlockKernel {
    idxs: Vec<usize>,
    scale: f64,
    /// Lower-triangular factor of the base proposal covariance, row-major.
    chol: Vec<f64>,
    // running mean / co-moment of the chain over this block
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    interval: Counter,
    pub total: Counter,
}

pub(crate) enum Kernel {
    Scalar(ScalarKernel),
    Block(BlockKernel),
}

impl Kernel {
    pub fn for_block(indices: &[usize], initial_scale: f64) -> Kernel {
        if indices.len() == 1 {
            Kernel::Scalar(ScalarKernel {
                idx: indices[0],
                scale: initial_scale,
                interval: Counter::default(),
                total: Counter::default(),
            })
        } else {
            let d = indices.len();
            let mut chol = vec![0.0; d * d];
            let unit = 2.38 / (d as f64).sqrt();
            for i in 0..d {
                chol[i * d + i] = unit;
            }
            Kernel::Block(BlockKernel {
                idxs: indices.to_vec(),
                scale: initial_scale,
                chol,
                n: 0,
                mean: vec![0.0; d],
                m2: vec![0.0; d * d],
                interval: Counter::default(),
                total: Counter::default(),
            })
        }
    }

    pub fn indices(&self) -> Vec<usize> {
        match self {
            Kernel::Scalar(k) => vec![k.idx],
            Kernel::Block(k) => k.idxs.clone(),
        }
    }

    pub fn total(&self) -> Counter {
        match self {
            Kernel::Scalar(k) => k.total,
            Kernel::Block(k) => k.total,
        }
    }

    /// One Metropolis proposal on this kernel's coordinates.
    pub fn step(
        &mut self,
        target: &dyn Target,
        x: &mut [f64],
        lp: &mut f64,
        rng: &mut ChaCha20Rng,
    ) -> Result<()> {
        match self {
            Kernel::Scalar(k) => {
                let z: f64 = rng.sample(StandardNormal);
                let old = x[k.idx];
                x[k.idx] = old + k.scale * z;
                let lp_new = match target.log_density(x) {
                    Ok(v) => v,
                    Err(e) => {
                        x[k.idx] = old;
                        return Err(e);
                    }
                };
                let u: f64 = rng.random();
                // NaN never accepts: the comparison below is then false
                let accept = u.ln() < lp_new - *lp;
                if accept {
                    *lp = lp_new;
                } else {
                    x[k.idx] = old;
                }
                k.interval.record(accept);
                k.total.record(accept);
            }
            Kernel::Block(k) => {
                let d = k.idxs.len();
                let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let old: Vec<f64> = k.idxs.iter().map(|&i| x[i]).collect();
                for i in 0..d {
                    let mut delta = 0.0;
                    for j in 0..=i {
                        delta += k.chol[i * d + j] * z[j];
                    }
                    x[k.idxs[i]] = old[i] + k.scale * delta;
                }
                let lp_new = match target.log_density(x) {
                    Ok(v) => v,
                    Err(e) => {
                        for (i, &idx) in k.idxs.iter().enumerate() {
                            x[idx] = old[i];
                        }
                        return Err(e);
                    }
                };
                let u: f64 = rng.random();
                let accept = u.ln() < lp_new - *lp;
                if accept {
                    *lp = lp_new;
                } else {
                    for (i, &idx) in k.idxs.iter().enumerate() {
                        x[idx] = old[i];
                    }
                }
                k.interval.record(accept);
                k.total.record(accept);
            }
        }
        Ok(())
    }

    /// Feed the current state into the running covariance (blocks only).
    pub fn observe(&mut self, x: &[f64]) {
        let Kernel::Block(k) = self else { return };
        let d = k.idxs.len();
        k.n += 1;
        let nf = k.n as f64;
        let mut delta = vec![0.0; d];
        for i in 0..d {
            delta[i] = x[k.idxs[i]] - k.mean[i];
            k.mean[i] += delta[i] / nf;
        }
        for i in 0..d {
            for j in 0..d {
                k.m2[i * d + j] += delta[i] * (x[k.idxs[j]] - k.mean[j]);
            }
        }
    }

    /// End-of-interval adaptation: move the scale toward the target
    /// acceptance rate and refresh the block proposal covariance.
    pub fn adapt(&mut self, gamma: f64, cfg: &AdaptConfig) {
        match self {
            Kernel::Scalar(k) => {
                let acc = k.interval.rate();
                k.scale *= (gamma * (acc - cfg.scalar_target)).exp();
                k.interval.reset();
            }
            Kernel::Block(k) => {
                let acc = k.interval.rate();
                k.scale *= (gamma * (acc - cfg.block_target)).exp();
                k.interval.reset();
                let d = k.idxs.len();
                if k.n >= (2 * d as u64).max(10) {
                    let c = 2.38 * 2.38 / d as f64;
                    let denom = (k.n - 1) as f64;
                    let mut a = vec![0.0; d * d];
                    for i in 0..d {
                        for j in 0..d {
                            let ridge = if i == j { COV_RIDGE } else { 0.0 };
                            a[i * d + j] = c * (k.m2[i * d + j] / denom + ridge);
                        }
                    }
                    match cholesky_lower(d, &a) {
                        Some(l) => k.chol = l,
                        None => {
                            // fall back to the diagonal of the scaled covariance
                            let mut l = vec![0.0; d * d];
                            for i in 0..d {
                                l[i * d + i] = a[i * d + i].max(COV_RIDGE).sqrt();
                            }
                            k.chol = l;
                        }
                    }
                }
            }
        }
    }
}
