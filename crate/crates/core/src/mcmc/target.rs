//! Log-density targets the samplers draw from.

use crate::data::{CaptureDataset, ReducedDataset};
use crate::error::Result;
use crate::model::HierarchicalModel;

/// An unnormalized log density over a fixed-dimension parameter vector.
pub trait Target {
    fn dim(&self) -> usize;
    fn names(&self) -> Vec<String>;
    /// Unnormalized log density; negative infinity rejects the point.
    fn log_density(&self, x: &[f64]) -> Result<f64>;
}

/// A target defined by a plain function, for tests and generic use.
pub struct FnTarget<F: Fn(&[f64]) -> f64> {
    dim: usize,
    names: Vec<String>,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        let names = (1..=dim).map(|i| format!("x{i}")).collect();
        Self { dim, names, f }
    }

    pub fn with_names(names: Vec<String>, f: F) -> Self {
        Self {
            dim: names.len(),
            names,
            f,
        }
    }
}

impl<F: Fn(&[f64]) -> f64> Target for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }
}

/// Dataset view a posterior target evaluates against.
pub enum ModelData<'a> {
    Full(&'a CaptureDataset),
    Reduced(&'a ReducedDataset),
}

/// Posterior (prior times marginal likelihood) of a hierarchical model.
///
/// The marginal likelihood integrates the latent states out by the model's
/// likelihood path, so this target lives on the parameter vector alone.
pub struct PosteriorTarget<'a> {
    model: &'a HierarchicalModel,
    data: ModelData<'a>,
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(model: &'a HierarchicalModel, data: ModelData<'a>) -> Self {
        Self { model, data }
    }
}

impl Target for PosteriorTarget<'_> {
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
        let lik = match &self.data {
            ModelData::Full(d) => self.model.log_marginal(theta, d)?,
            ModelData::Reduced(d) => self.model.log_marginal_reduced(theta, d)?,
        };
        Ok(prior + lik)
    }
}
