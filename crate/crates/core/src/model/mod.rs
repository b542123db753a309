//! Hierarchical capture-recapture models over discrete HMM likelihoods.
//!
//! A [`HierarchicalModel`] couples a parameter vector (with independent
//! priors) to a structural recipe for turning parameter values into
//! per-occasion transition and observation matrices. Likelihoods condition
//! on each individual's first sighting: the embedded HMM starts one survival
//! step after the first sighting occasion, from the state that sighting
//! identifies, and by default no detection term is charged at the first
//! occasion itself.
//!
//! Two structural families are supported: the two-state absorbing
//! survival/detection model (`Cjs`) and a multistate family with living
//! states, an absorbing dead state, and a "not seen" observation symbol
//! (`Multistate`). The shipped dipper, orchid, and goose models in
//! [`builders`] are instances of these; [`config`] builds further instances
//! from TOML descriptions.

pub mod builders;
pub mod config;
pub mod simulate;

use rand::Rng;
use rand_distr::Distribution;

use crate::data::CaptureDataset;
use crate::data::ReducedDataset;
use crate::error::{Error, Result};
use crate::hmm::{CjsParams, DiscreteHmmSpec, ObservationHistory, ProbMatrix};
use crate::math::ln_gamma;

// ---------------------------------------------------------------------------
// Parameters and priors
// ---------------------------------------------------------------------------

/// Support of a scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    UnitInterval,
    Positive,
}

/// Independent prior for a scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Uniform01,
    Gamma { shape: f64, rate: f64 },
}

impl Prior {
    fn log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Uniform01 => {
                if (0.0..=1.0).contains(&x) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Gamma { shape, rate } => {
                if x > 0.0 {
                    (shape - 1.0) * x.ln() - rate * x + shape * rate.ln() - ln_gamma(shape)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Uniform01 => rng.random::<f64>(),
            Prior::Gamma { shape, rate } => {
                let g = rand_distr::Gamma::new(shape, 1.0 / rate).expect("valid gamma");
                g.sample(rng)
            }
        }
    }
}

/// One scalar parameter of a hierarchical model.
#[derive(Debug, Clone)]
pub struct ParameterSpec {
    pub name: String,
    pub support: Support,
    pub prior: Prior,
    /// Structural role: `"survival"`, `"transition-weight"`, or `"detection"`.
    pub role: &'static str,
}

// ---------------------------------------------------------------------------
// Structure
// ---------------------------------------------------------------------------

/// How a family of scalar parameters varies over the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Constant,
    PerOccasion,
    PerState,
}

/// Observation process of a multistate model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionForm {
    /// Observable states are always seen; other living states never are.
    Deterministic,
    /// One detection probability per observable state per occasion `2..=k`.
    PerStateOccasion,
}

/// Structural recipe mapping parameters to matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelStructure {
    /// Two states (alive, dead), two symbols (seen, not seen).
    Cjs { survival: Form, detection: Form },
    /// `living` transient states plus an absorbing dead state; the first
    /// `observable` living states each have their own observation symbol,
    /// the rest are never observed directly.
    Multistate {
        living: usize,
        observable: usize,
        survival: Form,
        transitions: Form,
        detection: DetectionForm,
    },
}

/// Which marginal-likelihood computation the model uses by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodMode {
    /// Closed-form survival/detection likelihood (`Cjs` structure only).
    ClosedForm,
    /// Forward filtering over the embedded HMM.
    Filter,
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    transition: usize,
    detection: usize,
}

/// A parameterized capture-recapture model over a fixed number of occasions.
#[derive(Debug, Clone)]
pub struct HierarchicalModel {
    name: String,
    occasions: usize,
    structure: ModelStructure,
    likelihood_mode: LikelihoodMode,
    include_first_emission: bool,
    params: Vec<ParameterSpec>,
    offsets: Offsets,
}

fn layout_parameters(structure: &ModelStructure, occasions: usize) -> (Vec<ParameterSpec>, Offsets) {
    let k = occasions;
    let mut params = Vec::new();
    let unit = |name: String, role: &'static str| ParameterSpec {
        name,
        support: Support::UnitInterval,
        prior: Prior::Uniform01,
        role,
    };
    let weight = |name: String| ParameterSpec {
        name,
        support: Support::Positive,
        prior: Prior::Gamma { shape: 1.0, rate: 1.0 },
        role: "transition-weight",
    };

    match structure {
        ModelStructure::Cjs { survival, detection } => {
            match survival {
                Form::Constant => params.push(unit("phi".into(), "survival")),
                Form::PerOccasion => {
                    for t in 2..=k {
                        params.push(unit(format!("phi_t{t}"), "survival"));
                    }
                }
                Form::PerState => unreachable!("validated in HierarchicalModel::new"),
            }
            let transition = params.len();
            match detection {
                Form::Constant => params.push(unit("p".into(), "detection")),
                Form::PerOccasion => {
                    for t in 2..=k {
                        params.push(unit(format!("p_t{t}"), "detection"));
                    }
                }
                Form::PerState => unreachable!("validated in HierarchicalModel::new"),
            }
            (
                params,
                Offsets {
                    transition,
                    detection: transition,
                },
            )
        }
        ModelStructure::Multistate {
            living,
            observable,
            survival,
            transitions,
            detection,
        } => {
            let l = *living;
            match survival {
                Form::Constant => params.push(unit("phi".into(), "survival")),
                Form::PerOccasion => {
                    for t in 2..=k {
                        params.push(unit(format!("phi_t{t}"), "survival"));
                    }
                }
                Form::PerState => {
                    for r in 1..=l {
                        params.push(unit(format!("phi_{r}"), "survival"));
                    }
                }
            }
            let transition = params.len();
            match transitions {
                Form::Constant => {
                    for r in 1..=l {
                        for s in 1..=l {
                            params.push(weight(format!("psi_{r}_{s}")));
                        }
                    }
                }
                Form::PerOccasion => {
                    for t in 2..=k {
                        for r in 1..=l {
                            for s in 1..=l {
                                params.push(weight(format!("psi_t{t}_{r}_{s}")));
                            }
                        }
                    }
                }
                Form::PerState => unreachable!("validated in HierarchicalModel::new"),
            }
            let det_off = params.len();
            match detection {
                DetectionForm::Deterministic => {}
                DetectionForm::PerStateOccasion => {
                    for r in 1..=*observable {
                        for t in 2..=k {
                            params.push(unit(format!("p_{r}_t{t}"), "detection"));
                        }
                    }
                }
            }
            (
                params,
                Offsets {
                    transition,
                    detection: det_off,
                },
            )
        }
    }
}

impl HierarchicalModel {
    pub fn new(
        name: impl Into<String>,
        occasions: usize,
        structure: ModelStructure,
        likelihood_mode: LikelihoodMode,
        include_first_emission: bool,
    ) -> Result<Self> {
        if occasions < 2 {
            return Err(Error::Config(
                "a capture-recapture model needs at least two occasions".into(),
            ));
        }
        match &structure {
            ModelStructure::Cjs { survival, detection } => {
                if *survival == Form::PerState || *detection == Form::PerState {
                    return Err(Error::Config(
                        "the two-state model has a single living state; use constant or per-occasion forms"
                            .into(),
                    ));
                }
            }
            ModelStructure::Multistate {
                living,
                observable,
                survival,
                transitions,
                ..
            } => {
                if *living == 0 {
                    return Err(Error::Config("at least one living state is required".into()));
                }
                if *observable == 0 || observable > living {
                    return Err(Error::Config(format!(
                        "observable states must lie in 1..={living}, got {observable}"
                    )));
                }
                if *transitions == Form::PerState {
                    return Err(Error::Config(
                        "transition weights vary by occasion or not at all".into(),
                    ));
                }
                if *survival == Form::PerState && *living == 1 {
                    // legal, just redundant with Constant
                }
            }
        }
        if likelihood_mode == LikelihoodMode::ClosedForm
            && !matches!(structure, ModelStructure::Cjs { .. })
        {
            return Err(Error::Config(
                "the closed-form likelihood applies only to the two-state model".into(),
            ));
        }
        if likelihood_mode == LikelihoodMode::ClosedForm && include_first_emission {
            return Err(Error::Config(
                "the closed form conditions on first capture; first-occasion emission terms need the filter"
                    .into(),
            ));
        }
        let (params, offsets) = layout_parameters(&structure, occasions);
        Ok(Self {
            name: name.into(),
            occasions,
            structure,
            likelihood_mode,
            include_first_emission,
            params,
            offsets,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn occasions(&self) -> usize {
        self.occasions
    }

    pub fn structure(&self) -> &ModelStructure {
        &self.structure
    }

    pub fn likelihood_mode(&self) -> LikelihoodMode {
        self.likelihood_mode
    }

    /// Same model with the marginal likelihood forced through a given path.
    pub fn with_likelihood_mode(mut self, mode: LikelihoodMode) -> Result<Self> {
        if mode == LikelihoodMode::ClosedForm && !matches!(self.structure, ModelStructure::Cjs { .. })
        {
            return Err(Error::Config(
                "the closed-form likelihood applies only to the two-state model".into(),
            ));
        }
        self.likelihood_mode = mode;
        Ok(self)
    }

    pub fn include_first_emission(&self) -> bool {
        self.include_first_emission
    }

    /// Number of scalar parameters.
    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn num_states(&self) -> usize {
        match &self.structure {
            ModelStructure::Cjs { .. } => 2,
            ModelStructure::Multistate { living, .. } => living + 1,
        }
    }

    pub fn num_obs(&self) -> usize {
        match &self.structure {
            ModelStructure::Cjs { .. } => 2,
            ModelStructure::Multistate { observable, .. } => observable + 1,
        }
    }

    /// The "not seen" observation symbol (always the last one).
    pub fn not_seen_symbol(&self) -> u8 {
        self.num_obs() as u8
    }

    // -- priors -------------------------------------------------------------

    /// Sum of log prior densities; negative infinity outside the support.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        let mut lp = 0.0;
        for (spec, &x) in self.params.iter().zip(theta) {
            lp += spec.prior.log_density(x);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
        }
        lp
    }

    /// Independent draw from the prior.
    pub fn sample_prior<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.params.iter().map(|p| p.prior.sample(rng)).collect()
    }

    /// Deterministic interior starting point: 0.5 for unit-interval
    /// parameters, 1 for positive weights.
    pub fn initial_theta(&self) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| match p.support {
                Support::UnitInterval => 0.5,
                Support::Positive => 1.0,
            })
            .collect()
    }

    fn check_support(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "parameter vector has length {}, model has {}",
                theta.len(),
                self.dim()
            )));
        }
        for (spec, &x) in self.params.iter().zip(theta) {
            let ok = match spec.support {
                Support::UnitInterval => (0.0..=1.0).contains(&x),
                Support::Positive => x > 0.0 && x.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "{} = {x} outside its support",
                    spec.name
                )));
            }
        }
        Ok(())
    }

    // -- parameter accessors --------------------------------------------------

    /// Survival probability governing the transition into occasion `t`
    /// (`2..=k`) from living state `r` (1-based).
    fn survival_prob(&self, theta: &[f64], t: usize, r: usize) -> f64 {
        let form = match &self.structure {
            ModelStructure::Cjs { survival, .. } => survival,
            ModelStructure::Multistate { survival, .. } => survival,
        };
        match form {
            Form::Constant => theta[0],
            Form::PerOccasion => theta[t - 2],
            Form::PerState => theta[r - 1],
        }
    }

    /// Movement weights out of living state `r` for the transition into
    /// occasion `t`; one weight per destination living state.
    fn movement_weights<'a>(&self, theta: &'a [f64], t: usize, r: usize) -> &'a [f64] {
        let ModelStructure::Multistate {
            living, transitions, ..
        } = &self.structure
        else {
            unreachable!("movement weights exist only in multistate models");
        };
        let l = *living;
        let base = match transitions {
            Form::Constant => self.offsets.transition + (r - 1) * l,
            Form::PerOccasion => self.offsets.transition + (t - 2) * l * l + (r - 1) * l,
            Form::PerState => unreachable!(),
        };
        &theta[base..base + l]
    }

    /// Detection probability at occasion `t` (`2..=k`; occasion 1 borrows
    /// occasion 2 where forms have no first-occasion parameter) for
    /// observable state `r`.
    fn detection_prob(&self, theta: &[f64], t: usize, r: usize) -> f64 {
        let t = t.max(2);
        match &self.structure {
            ModelStructure::Cjs { detection, .. } => match detection {
                Form::Constant => theta[self.offsets.detection],
                Form::PerOccasion => theta[self.offsets.detection + t - 2],
                Form::PerState => unreachable!(),
            },
            ModelStructure::Multistate { detection, .. } => match detection {
                DetectionForm::Deterministic => 1.0,
                DetectionForm::PerStateOccasion => {
                    theta[self.offsets.detection + (r - 1) * (self.occasions - 1) + (t - 2)]
                }
            },
        }
    }

    // -- matrices -------------------------------------------------------------

    fn transition_matrix(&self, theta: &[f64], t: usize) -> Result<ProbMatrix> {
        let n = self.num_states();
        let mut data = vec![0.0; n * n];
        match &self.structure {
            ModelStructure::Cjs { .. } => {
                let phi = self.survival_prob(theta, t, 1);
                data[0] = phi; // alive -> alive
                data[n] = 1.0 - phi; // alive -> dead
                data[n + 1] = 1.0; // dead -> dead
            }
            ModelStructure::Multistate { living, .. } => {
                let l = *living;
                for r in 1..=l {
                    let phi = self.survival_prob(theta, t, r);
                    let weights = self.movement_weights(theta, t, r);
                    let total: f64 = weights.iter().sum();
                    if !(total > 0.0) || !total.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "movement weights out of state {r} sum to {total}"
                        )));
                    }
                    for s in 1..=l {
                        data[(s - 1) * n + (r - 1)] = phi * weights[s - 1] / total;
                    }
                    data[l * n + (r - 1)] = 1.0 - phi;
                }
                data[l * n + l] = 1.0; // dead -> dead
            }
        }
        ProbMatrix::column_stochastic(n, n, data)
    }

    fn emission_matrix(&self, theta: &[f64], t: usize) -> Result<ProbMatrix> {
        let n = self.num_states();
        let m = self.num_obs();
        let mut data = vec![0.0; m * n];
        match &self.structure {
            ModelStructure::Cjs { .. } => {
                let p = self.detection_prob(theta, t, 1);
                data[0] = p; // alive, seen
                data[n] = 1.0 - p; // alive, not seen
                data[n + 1] = 1.0; // dead, not seen
            }
            ModelStructure::Multistate {
                living, observable, ..
            } => {
                for r in 1..=*observable {
                    let p = self.detection_prob(theta, t, r);
                    data[(r - 1) * n + (r - 1)] = p;
                    data[(m - 1) * n + (r - 1)] = 1.0 - p;
                }
                for r in observable + 1..=*living {
                    data[(m - 1) * n + (r - 1)] = 1.0;
                }
                data[(m - 1) * n + (n - 1)] = 1.0; // dead, not seen
            }
        }
        ProbMatrix::column_stochastic(m, n, data)
    }

    /// Materialize all transition and observation matrices for one value of
    /// the parameter vector.
    pub fn build_matrices(&self, theta: &[f64]) -> Result<ThetaMatrices> {
        self.check_support(theta)?;
        let k = self.occasions;
        let mut transitions = Vec::with_capacity(k - 1);
        for t in 2..=k {
            transitions.push(self.transition_matrix(theta, t)?);
        }
        let mut emissions = Vec::with_capacity(k);
        for t in 1..=k {
            emissions.push(self.emission_matrix(theta, t)?);
        }
        Ok(ThetaMatrices {
            transitions,
            emissions,
        })
    }

    fn cjs_params(&self, theta: &[f64]) -> Result<CjsParams> {
        if !matches!(self.structure, ModelStructure::Cjs { .. }) {
            return Err(Error::Config(
                "closed-form parameters exist only for the two-state model".into(),
            ));
        }
        self.check_support(theta)?;
        let k = self.occasions;
        let survival: Vec<f64> = (2..=k).map(|t| self.survival_prob(theta, t, 1)).collect();
        let detection: Vec<f64> = (1..=k).map(|t| self.detection_prob(theta, t, 1)).collect();
        CjsParams::new(survival, detection)
    }

    /// Latent state identified by a sighting code.
    pub fn sighting_state(&self, code: u8) -> Result<usize> {
        let observable = match &self.structure {
            ModelStructure::Cjs { .. } => 1,
            ModelStructure::Multistate { observable, .. } => *observable,
        };
        if code == 0 || code as usize > observable {
            return Err(Error::InvalidArgument(format!(
                "code {code} does not identify a state at first sighting"
            )));
        }
        Ok(code as usize)
    }

    // -- marginal likelihoods ---------------------------------------------------

    /// Forward-filter log-likelihood of one history, conditioned on its
    /// first sighting, using prebuilt matrices.
    pub fn history_log_lik(&self, mats: &ThetaMatrices, h: &ObservationHistory) -> Result<f64> {
        let k = self.occasions;
        if h.len() != k {
            return Err(Error::Dimension(format!(
                "history has {} occasions, model has {k}",
                h.len()
            )));
        }
        let f = h.first_occasion();
        let s0 = self.sighting_state(h.code(f))?;
        let n = self.num_states();

        let mut ll = 0.0;
        if self.include_first_emission {
            let z = mats.emission(f).get(h.code(f) as usize - 1, s0 - 1);
            if z <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            ll += z.ln();
        }
        if f == k {
            return Ok(ll);
        }

        // predicted distribution at occasion f+1 is the column of the
        // transition matrix out of the known state at f
        let mut predicted: Vec<f64> = (0..n).map(|i| mats.transition(f + 1).get(i, s0 - 1)).collect();
        let mut filtered = vec![0.0; n];
        for t in f + 1..=k {
            if t > f + 1 {
                let tm = mats.transition(t);
                for i in 0..n {
                    predicted[i] = (0..n).map(|j| tm.get(i, j) * filtered[j]).sum();
                }
            }
            let row = mats.emission(t).row(h.code(t) as usize - 1);
            let step: f64 = row.iter().zip(&predicted).map(|(z, p)| z * p).sum();
            if step <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            for i in 0..n {
                filtered[i] = row[i] * predicted[i] / step;
            }
            ll += step.ln();
        }
        Ok(ll)
    }

    /// The embedded HMM whose filter likelihood equals
    /// [`Self::history_log_lik`] (up to the optional first-emission term):
    /// it covers occasions `f+1..=k` and starts from one survival step out
    /// of the state identified at the first sighting. `None` when the first
    /// sighting is at the last occasion.
    pub fn embedded_hmm(
        &self,
        mats: &ThetaMatrices,
        h: &ObservationHistory,
    ) -> Result<Option<DiscreteHmmSpec>> {
        let k = self.occasions;
        let f = h.first_occasion();
        let s0 = self.sighting_state(h.code(f))?;
        if f == k {
            return Ok(None);
        }
        let n = self.num_states();
        let initial: Vec<f64> = (0..n).map(|i| mats.transition(f + 1).get(i, s0 - 1)).collect();
        let transitions: Vec<ProbMatrix> = (f + 2..=k).map(|t| mats.transition(t).clone()).collect();
        let emissions: Vec<ProbMatrix> = (f + 1..=k).map(|t| mats.emission(t).clone()).collect();
        Ok(Some(DiscreteHmmSpec::new(
            n,
            self.num_obs(),
            initial,
            transitions,
            emissions,
        )?))
    }

    /// Marginal log-likelihood of a full dataset, one history at a time,
    /// through the model's default likelihood path.
    pub fn log_marginal(&self, theta: &[f64], data: &CaptureDataset) -> Result<f64> {
        match self.likelihood_mode {
            LikelihoodMode::ClosedForm => {
                let params = self.cjs_params(theta)?;
                let mut total = 0.0;
                for h in data.histories() {
                    let ll = crate::hmm::cjs_log_lik(&params, h)?;
                    if ll == f64::NEG_INFINITY {
                        return Ok(f64::NEG_INFINITY);
                    }
                    total += ll;
                }
                Ok(total)
            }
            LikelihoodMode::Filter => self.log_marginal_via_filter(theta, data),
        }
    }

    /// Marginal log-likelihood of a reduced dataset: each unique history is
    /// evaluated once and weighted by its multiplicity.
    pub fn log_marginal_reduced(&self, theta: &[f64], data: &ReducedDataset) -> Result<f64> {
        let mut total = 0.0;
        match self.likelihood_mode {
            LikelihoodMode::ClosedForm => {
                let params = self.cjs_params(theta)?;
                for e in data.entries() {
                    let ll = crate::hmm::cjs_log_lik(&params, &e.history)?;
                    if ll == f64::NEG_INFINITY {
                        return Ok(f64::NEG_INFINITY);
                    }
                    total += e.multiplicity as f64 * ll;
                }
            }
            LikelihoodMode::Filter => {
                let mats = self.build_matrices(theta)?;
                for e in data.entries() {
                    let ll = self.history_log_lik(&mats, &e.history)?;
                    if ll == f64::NEG_INFINITY {
                        return Ok(f64::NEG_INFINITY);
                    }
                    total += e.multiplicity as f64 * ll;
                }
            }
        }
        Ok(total)
    }

    /// Marginal log-likelihood forced through the forward filter.
    pub fn log_marginal_via_filter(&self, theta: &[f64], data: &CaptureDataset) -> Result<f64> {
        let mats = self.build_matrices(theta)?;
        let mut total = 0.0;
        for h in data.histories() {
            let ll = self.history_log_lik(&mats, h)?;
            if ll == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            total += ll;
        }
        Ok(total)
    }

    /// Marginal log-likelihood forced through the closed form (two-state
    /// models only).
    pub fn log_marginal_via_closed_form(&self, theta: &[f64], data: &CaptureDataset) -> Result<f64> {
        let params = self.cjs_params(theta)?;
        let mut total = 0.0;
        for h in data.histories() {
            let ll = crate::hmm::cjs_log_lik(&params, h)?;
            if ll == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            total += ll;
        }
        Ok(total)
    }

    // -- latent-state representation ----------------------------------------

    /// A latent state assignment consistent with the observations: sighted
    /// occasions take the identified state, silent occasions take a state
    /// that can plausibly go unobserved.
    pub fn initial_latents(&self, data: &CaptureDataset) -> Result<LatentStates> {
        let k = self.occasions;
        let mut seqs = Vec::with_capacity(data.len());
        for (i, h) in data.histories().iter().enumerate() {
            let f = h.first_occasion();
            let mut prev = self.sighting_state(h.code(f))?;
            let mut seq = Vec::with_capacity(k - f);
            for t in f + 1..=k {
                let code = h.code(t);
                let state = if code == self.not_seen_symbol() {
                    self.silent_state(prev, i + 1, t)?
                } else {
                    self.sighting_state(code)?
                };
                seq.push(state as u8);
                prev = state;
            }
            seqs.push(seq);
        }
        Ok(LatentStates { seqs })
    }

    /// A living state that can emit "not seen", preferring to stay put.
    fn silent_state(&self, prev: usize, individual: usize, t: usize) -> Result<usize> {
        match &self.structure {
            ModelStructure::Cjs { .. } => Ok(1),
            ModelStructure::Multistate {
                living,
                observable,
                detection,
                ..
            } => match detection {
                DetectionForm::PerStateOccasion => Ok(prev),
                DetectionForm::Deterministic => {
                    if observable < living {
                        Ok(observable + 1)
                    } else {
                        Err(Error::DegenerateConditional {
                            history: individual,
                            occasion: t,
                        })
                    }
                }
            },
        }
    }

    /// Log-probability of the data and a complete latent assignment, given
    /// the parameters (prior not included).
    pub fn log_lik_given_latents(
        &self,
        log_mats: &LogThetaMatrices,
        data: &CaptureDataset,
        latents: &LatentStates,
    ) -> f64 {
        let mut total = 0.0;
        for (i, h) in data.histories().iter().enumerate() {
            let f = h.first_occasion();
            let mut prev = h.code(f) as usize; // sighting code == state index
            if self.include_first_emission {
                total += log_mats.ln_emission(f, h.code(f) as usize, prev);
            }
            let seq = latents.seq(i);
            for (j, &state) in seq.iter().enumerate() {
                let t = f + 1 + j;
                let s = state as usize;
                total += log_mats.ln_transition(t, s, prev);
                total += log_mats.ln_emission(t, h.code(t) as usize, s);
                prev = s;
            }
            if total == f64::NEG_INFINITY {
                return total;
            }
        }
        total
    }
}

// ---------------------------------------------------------------------------
// Per-theta matrix caches
// ---------------------------------------------------------------------------

/// All transition and observation matrices for one parameter vector.
#[derive(Debug, Clone)]
pub struct ThetaMatrices {
    transitions: Vec<ProbMatrix>, // into occasions 2..=k
    emissions: Vec<ProbMatrix>,   // occasions 1..=k
}

impl ThetaMatrices {
    /// Transition matrix into occasion `t` (`2..=k`).
    pub fn transition(&self, t: usize) -> &ProbMatrix {
        &self.transitions[t - 2]
    }

    /// Observation matrix at occasion `t` (`1..=k`).
    pub fn emission(&self, t: usize) -> &ProbMatrix {
        &self.emissions[t - 1]
    }

    pub fn num_occasions(&self) -> usize {
        self.emissions.len()
    }

    /// Element-wise logarithms, for repeated latent-path evaluations.
    pub fn log(&self) -> LogThetaMatrices {
        let ln_of = |m: &ProbMatrix| -> Vec<f64> {
            let mut out = Vec::with_capacity(m.rows() * m.cols());
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    out.push(m.get(i, j).ln());
                }
            }
            out
        };
        LogThetaMatrices {
            states: self.transitions[0].cols(),
            obs: self.emissions[0].rows(),
            ln_transitions: self.transitions.iter().map(ln_of).collect(),
            ln_emissions: self.emissions.iter().map(ln_of).collect(),
        }
    }
}

/// Log-space view of [`ThetaMatrices`].
#[derive(Debug, Clone)]
pub struct LogThetaMatrices {
    states: usize,
    obs: usize,
    ln_transitions: Vec<Vec<f64>>,
    ln_emissions: Vec<Vec<f64>>,
}

impl LogThetaMatrices {
    /// `ln Pr(state `to` at occasion t | state `from` at t-1)`, 1-based.
    #[inline]
    pub fn ln_transition(&self, t: usize, to: usize, from: usize) -> f64 {
        self.ln_transitions[t - 2][(to - 1) * self.states + (from - 1)]
    }

    /// `ln Pr(symbol at occasion t | state)`, 1-based.
    #[inline]
    pub fn ln_emission(&self, t: usize, symbol: usize, state: usize) -> f64 {
        self.ln_emissions[t - 1][(symbol - 1) * self.states + (state - 1)]
    }

    pub fn num_obs(&self) -> usize {
        self.obs
    }
}

// ---------------------------------------------------------------------------
// Latent states
// ---------------------------------------------------------------------------

/// Per-individual latent state sequences for the occasions after each first
/// sighting. `seq(i)[j]` is the 1-based state of individual `i` at occasion
/// `first_occasion(i) + 1 + j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentStates {
    seqs: Vec<Vec<u8>>,
}

impl LatentStates {
    pub fn num_individuals(&self) -> usize {
        self.seqs.len()
    }

    pub fn seq(&self, i: usize) -> &[u8] {
        &self.seqs[i]
    }

    pub fn seq_mut(&mut self, i: usize) -> &mut [u8] {
        &mut self.seqs[i]
    }

    /// Total number of latent scalar states.
    pub fn total_states(&self) -> usize {
        self.seqs.iter().map(|s| s.len()).sum()
    }
}
