//! Discrete hidden Markov model likelihood kernels.
//!
//! A [`DiscreteHmmSpec`] holds an initial state distribution together with
//! per-occasion transition and observation matrices. Likelihood of an
//! observation history is computed three ways:
//!
//! * [`forward_filter_log_lik`] - the matrix forward filter, linear in the
//!   number of occasions;
//! * [`cjs_log_lik`] - a closed form for the two-state absorbing
//!   (survival/detection) special case;
//! * [`latent_enumeration_log_lik`] - brute-force summation over every
//!   latent state sequence, usable only at small sizes and intended as an
//!   independent cross-check of the other two.
//!
//! Matrices are column-stochastic: entry `(i, j)` of a transition matrix is
//! the probability of moving to state `i` from state `j`, and entry `(i, j)`
//! of an observation matrix is the probability of emitting symbol `i` from
//! state `j`. States and symbols are indexed from 1.
//!
//! Per-step filtered distributions stay in probability space (each step
//! renormalizes), while the total likelihood is accumulated in log space so
//! long histories do not underflow.

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Default cap on the number of latent sequences the enumeration oracle
/// will visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// Dense column-stochastic matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    /// Build a matrix and verify that every column is a probability
    /// distribution (entries in `[0, 1]`, sum 1 within 1e-12).
    pub fn column_stochastic(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        for j in 0..cols {
            let mut sum = 0.0;
            for i in 0..rows {
                let v = data[i * cols + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::NonStochastic(format!(
                        "entry ({}, {}) = {v} outside [0, 1]",
                        i + 1,
                        j + 1
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NonStochastic(format!(
                    "column {} sums to {sum}, expected 1",
                    j + 1
                )));
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = M v`.
    fn matvec(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.rows {
            let row = self.row(i);
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }
}

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

/// Time-indexed specification of a discrete HMM over a fixed number of
/// sampling occasions.
///
/// For `k` occasions there are `k - 1` transition matrices (occasion `t-1`
/// to `t` for `t = 2..=k`) and `k` observation matrices (one per occasion).
#[derive(Debug, Clone)]
pub struct DiscreteHmmSpec {
    num_states: usize,
    num_obs: usize,
    initial: Vec<f64>,
    transitions: Vec<ProbMatrix>,
    emissions: Vec<ProbMatrix>,
}

impl DiscreteHmmSpec {
    pub fn new(
        num_states: usize,
        num_obs: usize,
        initial: Vec<f64>,
        transitions: Vec<ProbMatrix>,
        emissions: Vec<ProbMatrix>,
    ) -> Result<Self> {
        if num_states == 0 || num_obs == 0 {
            return Err(Error::Dimension(
                "state and observation alphabets must be nonempty".into(),
            ));
        }
        if emissions.is_empty() {
            return Err(Error::Dimension("at least one occasion is required".into()));
        }
        if transitions.len() + 1 != emissions.len() {
            return Err(Error::Dimension(format!(
                "{} transition matrices cannot cover {} occasions",
                transitions.len(),
                emissions.len()
            )));
        }
        if initial.len() != num_states {
            return Err(Error::Dimension(format!(
                "initial distribution has length {}, expected {num_states}",
                initial.len()
            )));
        }
        let mut sum = 0.0;
        for &v in &initial {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::NonStochastic(format!(
                    "initial probability {v} outside [0, 1]"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NonStochastic(format!(
                "initial distribution sums to {sum}, expected 1"
            )));
        }
        for (t, m) in transitions.iter().enumerate() {
            if m.rows() != num_states || m.cols() != num_states {
                return Err(Error::Dimension(format!(
                    "transition matrix {} is {}x{}, expected {num_states}x{num_states}",
                    t + 2,
                    m.rows(),
                    m.cols()
                )));
            }
        }
        for (t, m) in emissions.iter().enumerate() {
            if m.rows() != num_obs || m.cols() != num_states {
                return Err(Error::Dimension(format!(
                    "observation matrix {} is {}x{}, expected {num_obs}x{num_states}",
                    t + 1,
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(Self {
            num_states,
            num_obs,
            initial,
            transitions,
            emissions,
        })
    }

    /// Time-homogeneous convenience constructor: one transition and one
    /// observation matrix reused across all `occasions`.
    pub fn homogeneous(
        initial: Vec<f64>,
        transition: ProbMatrix,
        emission: ProbMatrix,
        occasions: usize,
    ) -> Result<Self> {
        if occasions == 0 {
            return Err(Error::Dimension("at least one occasion is required".into()));
        }
        let num_states = transition.cols();
        let num_obs = emission.rows();
        DiscreteHmmSpec::new(
            num_states,
            num_obs,
            initial,
            vec![transition; occasions - 1],
            vec![emission; occasions],
        )
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn num_occasions(&self) -> usize {
        self.emissions.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Transition matrix into occasion `t` (1-based, `t >= 2`).
    pub fn transition(&self, t: usize) -> &ProbMatrix {
        &self.transitions[t - 2]
    }

    /// Observation matrix at occasion `t` (1-based).
    pub fn emission(&self, t: usize) -> &ProbMatrix {
        &self.emissions[t - 1]
    }
}

// ---------------------------------------------------------------------------
// Observation histories
// ---------------------------------------------------------------------------

/// One sequence of observation codes over the sampling occasions.
///
/// Codes are 1-based symbol indices. `first_occasion` marks where evaluation
/// begins; occasions before it carry no information (for capture-recapture
/// data it is the occasion of first sighting).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationHistory {
    codes: Vec<u8>,
    first_occasion: usize,
}

impl ObservationHistory {
    pub fn new(codes: Vec<u8>, first_occasion: usize) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::Dimension("history must be nonempty".into()));
        }
        if first_occasion == 0 || first_occasion > codes.len() {
            return Err(Error::Dimension(format!(
                "first occasion {first_occasion} outside 1..={}",
                codes.len()
            )));
        }
        if codes.iter().any(|&c| c == 0) {
            return Err(Error::Dimension("codes are 1-based; 0 is not a symbol".into()));
        }
        Ok(Self {
            codes,
            first_occasion,
        })
    }

    /// History evaluated from its first occasion.
    pub fn from_codes(codes: Vec<u8>) -> Result<Self> {
        Self::new(codes, 1)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn first_occasion(&self) -> usize {
        self.first_occasion
    }

    /// Code at 1-based occasion `t`.
    pub fn code(&self, t: usize) -> u8 {
        self.codes[t - 1]
    }

    /// The evaluated suffix: codes from `first_occasion` onward.
    pub fn evaluated_codes(&self) -> &[u8] {
        &self.codes[self.first_occasion - 1..]
    }

    /// New history consisting of the codes from 1-based occasion `start`
    /// onward, evaluated from its beginning.
    pub fn tail(&self, start: usize) -> Result<Self> {
        if start == 0 || start > self.codes.len() {
            return Err(Error::Dimension(format!(
                "tail start {start} outside 1..={}",
                self.codes.len()
            )));
        }
        Self::new(self.codes[start - 1..].to_vec(), 1)
    }
}

fn check_filter_dims(hmm: &DiscreteHmmSpec, history: &ObservationHistory) -> Result<()> {
    let covered = history.len() - history.first_occasion() + 1;
    if covered != hmm.num_occasions() {
        return Err(Error::Dimension(format!(
            "history covers {covered} occasions from its first occasion, model covers {}",
            hmm.num_occasions()
        )));
    }
    if let Some(&c) = history.evaluated_codes().iter().find(|&&c| c as usize > hmm.num_obs()) {
        return Err(Error::Dimension(format!(
            "code {c} outside observation alphabet of size {}",
            hmm.num_obs()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Forward filter
// ---------------------------------------------------------------------------

/// One step of the forward filter: the predicted state distribution, the
/// filtered (posterior) state distribution, and the conditional likelihood
/// of the observation at that occasion.
#[derive(Debug, Clone)]
pub struct FilterStep {
    /// Distribution of the state given observations before this occasion.
    pub predicted: Vec<f64>,
    /// Distribution of the state given observations through this occasion.
    pub filtered: Vec<f64>,
    /// Probability of this occasion's observation given the earlier ones.
    pub step_likelihood: f64,
}

/// Log-likelihood of a history under the model by forward filtering.
///
/// Each step propagates the filtered distribution through the transition
/// matrix, weights it by the observation row, and renormalizes; the log of
/// the per-step normalizers accumulates into the total. A history that is
/// impossible under the model yields negative infinity rather than an error.
pub fn forward_filter_log_lik(hmm: &DiscreteHmmSpec, history: &ObservationHistory) -> Result<f64> {
    check_filter_dims(hmm, history)?;
    let codes = history.evaluated_codes();
    let n = hmm.num_states();

    let mut predicted = hmm.initial().to_vec();
    let mut filtered = vec![0.0; n];
    let mut log_lik = 0.0;

    for (step, &code) in codes.iter().enumerate() {
        let t = step + 1;
        if t >= 2 {
            let prev = filtered.clone();
            hmm.transition(t).matvec(&prev, &mut predicted);
        }
        let obs_row = hmm.emission(t).row(code as usize - 1);
        let step_lik: f64 = obs_row.iter().zip(&predicted).map(|(z, p)| z * p).sum();
        if step_lik <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        for i in 0..n {
            filtered[i] = obs_row[i] * predicted[i] / step_lik;
        }
        log_lik += step_lik.ln();
    }
    Ok(log_lik)
}

/// Forward filter returning the per-occasion distributions and conditional
/// likelihoods alongside nothing else.
///
/// Unlike [`forward_filter_log_lik`], a zero-probability observation is an
/// error here: the filtered distribution past that point is undefined.
pub fn forward_filter_distributions(
    hmm: &DiscreteHmmSpec,
    history: &ObservationHistory,
) -> Result<Vec<FilterStep>> {
    check_filter_dims(hmm, history)?;
    let codes = history.evaluated_codes();
    let n = hmm.num_states();

    let mut steps = Vec::with_capacity(codes.len());
    let mut predicted = hmm.initial().to_vec();
    let mut filtered = vec![0.0; n];

    for (step, &code) in codes.iter().enumerate() {
        let t = step + 1;
        if t >= 2 {
            let prev = filtered.clone();
            hmm.transition(t).matvec(&prev, &mut predicted);
        }
        let obs_row = hmm.emission(t).row(code as usize - 1);
        let step_lik: f64 = obs_row.iter().zip(&predicted).map(|(z, p)| z * p).sum();
        if step_lik <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "history has probability zero at evaluated occasion {t}; \
                 filtered distributions are undefined"
            )));
        }
        for i in 0..n {
            filtered[i] = obs_row[i] * predicted[i] / step_lik;
        }
        steps.push(FilterStep {
            predicted: predicted.clone(),
            filtered: filtered.clone(),
            step_likelihood: step_lik,
        });
    }
    Ok(steps)
}

// ---------------------------------------------------------------------------
// Brute-force enumeration
// ---------------------------------------------------------------------------

/// Log-likelihood by summing the joint probability over every latent state
/// sequence. Exponential in the number of occasions; refuses to start if the
/// number of sequences exceeds `cap`.
///
/// This is deliberately written as a direct product-of-factors sum with no
/// shared code with the filter, so the two can check each other.
pub fn latent_enumeration_log_lik_with_cap(
    hmm: &DiscreteHmmSpec,
    history: &ObservationHistory,
    cap: u128,
) -> Result<f64> {
    check_filter_dims(hmm, history)?;
    let codes = history.evaluated_codes();
    let n = hmm.num_states();
    let k = codes.len();

    let mut terms: u128 = 1;
    for _ in 0..k {
        terms = terms.saturating_mul(n as u128);
        if terms > cap {
            return Err(Error::EnumerationCap { terms, cap });
        }
    }

    // Odometer over state assignments, states 0-based here.
    let mut assignment = vec![0usize; k];
    let mut total = 0.0f64;
    loop {
        let mut prob = hmm.initial()[assignment[0]]
            * hmm.emission(1).get(codes[0] as usize - 1, assignment[0]);
        for t in 2..=k {
            if prob == 0.0 {
                break;
            }
            prob *= hmm.transition(t).get(assignment[t - 1], assignment[t - 2]);
            prob *= hmm.emission(t).get(codes[t - 1] as usize - 1, assignment[t - 1]);
        }
        total += prob;

        // advance odometer
        let mut pos = 0;
        loop {
            if pos == k {
                return Ok(total.ln());
            }
            assignment[pos] += 1;
            if assignment[pos] < n {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// [`latent_enumeration_log_lik_with_cap`] with the default cap.
pub fn latent_enumeration_log_lik(
    hmm: &DiscreteHmmSpec,
    history: &ObservationHistory,
) -> Result<f64> {
    latent_enumeration_log_lik_with_cap(hmm, history, DEFAULT_ENUMERATION_CAP)
}

// ---------------------------------------------------------------------------
// Closed-form absorbing-state (survival/detection) likelihood
// ---------------------------------------------------------------------------

/// Symbol for a sighting in binary-coded capture histories.
pub const SEEN: u8 = 1;
/// Symbol for "not seen" in binary-coded capture histories.
pub const NOT_SEEN: u8 = 2;

/// Survival and detection probabilities for the two-state absorbing model.
///
/// `survival[t-1]` is the probability of surviving from occasion `t` to
/// `t + 1` (length `k - 1` for `k` occasions); `detection[t-1]` is the
/// probability of being seen at occasion `t` when alive (length `k`).
#[derive(Debug, Clone)]
pub struct CjsParams {
    survival: Vec<f64>,
    detection: Vec<f64>,
}

impl CjsParams {
    pub fn new(survival: Vec<f64>, detection: Vec<f64>) -> Result<Self> {
        for &v in survival.iter().chain(detection.iter()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "survival/detection probability {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            survival,
            detection,
        })
    }

    /// Constant survival and detection over `occasions` occasions.
    pub fn constant(phi: f64, p: f64, occasions: usize) -> Result<Self> {
        Self::new(vec![phi; occasions.saturating_sub(1)], vec![p; occasions])
    }

    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    pub fn detection(&self) -> &[f64] {
        &self.detection
    }
}

/// Closed-form log-likelihood of a binary capture history, conditioned on
/// the sighting at its first occasion.
///
/// With `f` the first and `t*` the final sighting occasion, the likelihood
/// is the product of survival terms from `f` to `t*`, detection terms at
/// occasions `f+1..=t*`, and the probability of never being seen after `t*`,
/// computed by the backward recursion
/// `chi[k] = 1`, `chi[t] = 1 - phi[t] + phi[t] (1 - p[t+1]) chi[t+1]`.
pub fn cjs_log_lik(params: &CjsParams, history: &ObservationHistory) -> Result<f64> {
    let k = history.len();
    if params.survival.len() != k - 1 || params.detection.len() != k {
        return Err(Error::Dimension(format!(
            "history of {k} occasions needs {} survival and {k} detection values, got {} and {}",
            k - 1,
            params.survival.len(),
            params.detection.len()
        )));
    }
    if history.codes().iter().any(|&c| c != SEEN && c != NOT_SEEN) {
        return Err(Error::InvalidArgument(
            "capture histories must use binary seen/not-seen coding".into(),
        ));
    }
    let f = history.first_occasion();
    if history.code(f) != SEEN {
        return Err(Error::NoSighting);
    }
    let t_final = (f..=k).filter(|&t| history.code(t) == SEEN).max().unwrap();

    let phi = &params.survival;
    let p = &params.detection;

    let mut ll = 0.0;
    // survival from t to t+1 for t = f .. t_final-1
    for t in f..t_final {
        ll += phi[t - 1].ln();
    }
    // detection outcomes at occasions f+1 ..= t_final
    for t in f + 1..=t_final {
        if history.code(t) == SEEN {
            ll += p[t - 1].ln();
        } else {
            ll += (1.0 - p[t - 1]).ln();
        }
    }
    // probability of never being seen after t_final
    let mut chi = 1.0;
    for t in (t_final..k).rev() {
        chi = 1.0 - phi[t - 1] + phi[t - 1] * (1.0 - p[t]) * chi;
    }
    ll += chi.ln();
    Ok(ll)
}

/// The two-state absorbing HMM equivalent to [`cjs_log_lik`] for a history
/// first sighted at occasion `first`: state 1 is "alive", state 2 the
/// absorbing "dead" state, and the model covers occasions `first+1..=k`
/// with the initial distribution obtained by one survival step from "alive".
///
/// Evaluating the forward filter on `history.tail(first + 1)` reproduces the
/// closed form. Returns `None` when the history is first sighted at the last
/// occasion, in which case the conditional likelihood is 1.
pub fn cjs_absorbing_hmm(params: &CjsParams, first: usize) -> Result<Option<DiscreteHmmSpec>> {
    let k = params.detection.len();
    if first == 0 || first > k {
        return Err(Error::Dimension(format!(
            "first occasion {first} outside 1..={k}"
        )));
    }
    if first == k {
        return Ok(None);
    }
    let phi_first = params.survival[first - 1];
    let initial = vec![phi_first, 1.0 - phi_first];
    let mut transitions = Vec::new();
    for t in first + 2..=k {
        let phi = params.survival[t - 2];
        transitions.push(ProbMatrix::column_stochastic(
            2,
            2,
            vec![phi, 0.0, 1.0 - phi, 1.0],
        )?);
    }
    let mut emissions = Vec::new();
    for t in first + 1..=k {
        let p = params.detection[t - 1];
        emissions.push(ProbMatrix::column_stochastic(
            2,
            2,
            vec![p, 0.0, 1.0 - p, 1.0],
        )?);
    }
    Ok(Some(DiscreteHmmSpec::new(
        2,
        2,
        initial,
        transitions,
        emissions,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn random_stochastic(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> ProbMatrix {
        let mut data = vec![0.0; rows * cols];
        for j in 0..cols {
            let mut col: Vec<f64> = (0..rows).map(|_| rng.random::<f64>() + 0.01).collect();
            let sum: f64 = col.iter().sum();
            for v in &mut col {
                *v /= sum;
            }
            // force exact stochasticity on the last entry
            let head: f64 = col[..rows - 1].iter().sum();
            col[rows - 1] = 1.0 - head;
            for (i, v) in col.iter().enumerate() {
                data[i * cols + j] = *v;
            }
        }
        ProbMatrix::column_stochastic(rows, cols, data).unwrap()
    }

    fn random_hmm(
        states: usize,
        obs: usize,
        occasions: usize,
        rng: &mut ChaCha20Rng,
    ) -> DiscreteHmmSpec {
        let init = random_stochastic(states, 1, rng);
        let initial: Vec<f64> = (0..states).map(|i| init.get(i, 0)).collect();
        let transitions = (1..occasions)
            .map(|_| random_stochastic(states, states, rng))
            .collect();
        let emissions = (0..occasions)
            .map(|_| random_stochastic(obs, states, rng))
            .collect();
        DiscreteHmmSpec::new(states, obs, initial, transitions, emissions).unwrap()
    }

    fn random_history(obs: usize, occasions: usize, rng: &mut ChaCha20Rng) -> ObservationHistory {
        let codes = (0..occasions)
            .map(|_| rng.random_range(1..=obs as u8))
            .collect();
        ObservationHistory::from_codes(codes).unwrap()
    }

    #[test]
    fn single_state_model_has_likelihood_one() {
        let t = ProbMatrix::column_stochastic(1, 1, vec![1.0]).unwrap();
        let z = ProbMatrix::column_stochastic(1, 1, vec![1.0]).unwrap();
        let hmm = DiscreteHmmSpec::homogeneous(vec![1.0], t, z, 3).unwrap();
        let h = ObservationHistory::from_codes(vec![1, 1, 1]).unwrap();
        assert_eq!(forward_filter_log_lik(&hmm, &h).unwrap(), 0.0);
        assert_eq!(latent_enumeration_log_lik(&hmm, &h).unwrap(), 0.0);
    }

    #[test]
    fn two_state_identity_emissions_one_step() {
        // Transition columns (0.5, 0.5); emissions identity; P1 = (1, 0).
        // History (1, 2) has probability 1 * 0.5.
        let t = ProbMatrix::column_stochastic(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let z = ProbMatrix::column_stochastic(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let hmm = DiscreteHmmSpec::homogeneous(vec![1.0, 0.0], t, z, 2).unwrap();
        let h = ObservationHistory::from_codes(vec![1, 2]).unwrap();
        let ll = forward_filter_log_lik(&hmm, &h).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn filter_matches_enumeration_on_random_models() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for case in 0..120 {
            let states = rng.random_range(1..=4);
            let obs = rng.random_range(1..=4);
            let occasions = rng.random_range(1..=6);
            let hmm = random_hmm(states, obs, occasions, &mut rng);
            let h = random_history(obs, occasions, &mut rng);
            let filtered = forward_filter_log_lik(&hmm, &h).unwrap();
            let enumerated = latent_enumeration_log_lik(&hmm, &h).unwrap();
            let rel = (filtered - enumerated).abs() / enumerated.abs().max(1.0);
            assert!(
                rel < 1e-10,
                "case {case}: filter {filtered} vs enumeration {enumerated}"
            );
        }
    }

    #[test]
    fn three_state_five_occasion_oracle_case() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let hmm = random_hmm(3, 3, 5, &mut rng);
        let h = random_history(3, 5, &mut rng);
        let filtered = forward_filter_log_lik(&hmm, &h).unwrap();
        let enumerated = latent_enumeration_log_lik(&hmm, &h).unwrap();
        assert!((filtered - enumerated).abs() / enumerated.abs() < 1e-10);
    }

    #[test]
    fn enumeration_is_directly_computable_for_one_occasion() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let hmm = random_hmm(2, 2, 1, &mut rng);
        let h = ObservationHistory::from_codes(vec![1]).unwrap();
        let expected: f64 = (0..2)
            .map(|x| hmm.initial()[x] * hmm.emission(1).get(0, x))
            .sum::<f64>()
            .ln();
        let got = latent_enumeration_log_lik(&hmm, &h).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let hmm = random_hmm(4, 2, 4, &mut rng);
        let h = random_history(2, 4, &mut rng);
        let err = latent_enumeration_log_lik_with_cap(&hmm, &h, 100).unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { .. }));
        assert!(err.to_string().contains("forward filter"));
    }

    #[test]
    fn deterministic_model_gives_unit_basis_filtered_distributions() {
        // Permutation transitions, identity emissions: state is known exactly.
        let t = ProbMatrix::column_stochastic(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let z = ProbMatrix::column_stochastic(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let hmm = DiscreteHmmSpec::homogeneous(vec![1.0, 0.0], t, z, 4).unwrap();
        let h = ObservationHistory::from_codes(vec![1, 2, 1, 2]).unwrap();
        for step in forward_filter_distributions(&hmm, &h).unwrap() {
            let mut sorted = step.filtered.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(sorted, vec![0.0, 1.0]);
        }
    }

    #[test]
    fn uninformative_emissions_leave_predicted_equal_to_filtered() {
        let t = ProbMatrix::column_stochastic(2, 2, vec![0.7, 0.4, 0.3, 0.6]).unwrap();
        let z = ProbMatrix::column_stochastic(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let hmm = DiscreteHmmSpec::homogeneous(vec![0.2, 0.8], t, z, 5).unwrap();
        let h = ObservationHistory::from_codes(vec![1, 2, 1, 1, 2]).unwrap();
        for step in forward_filter_distributions(&hmm, &h).unwrap() {
            for (p, q) in step.predicted.iter().zip(&step.filtered) {
                assert!((p - q).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn filtered_distributions_match_enumerated_conditionals() {
        // Pr(X_t | y_1..y_t) by brute force over state prefixes.
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let hmm = random_hmm(2, 2, 4, &mut rng);
        let h = random_history(2, 4, &mut rng);
        let steps = forward_filter_distributions(&hmm, &h).unwrap();

        for t in 1..=4usize {
            let mut joint = vec![0.0f64; 2];
            let total_paths = 2usize.pow(t as u32);
            for path_id in 0..total_paths {
                let states: Vec<usize> = (0..t).map(|j| (path_id >> j) & 1).collect();
                let mut prob = hmm.initial()[states[0]]
                    * hmm.emission(1).get(h.code(1) as usize - 1, states[0]);
                for s in 2..=t {
                    prob *= hmm.transition(s).get(states[s - 1], states[s - 2]);
                    prob *= hmm.emission(s).get(h.code(s) as usize - 1, states[s - 1]);
                }
                joint[states[t - 1]] += prob;
            }
            let norm: f64 = joint.iter().sum();
            for i in 0..2 {
                assert!(
                    (steps[t - 1].filtered[i] - joint[i] / norm).abs() < 1e-12,
                    "occasion {t} state {i}"
                );
            }
        }
    }

    #[test]
    fn step_likelihood_product_matches_total() {
        let mut rng = ChaCha20Rng::seed_from_u64(20);
        for _ in 0..30 {
            let states = rng.random_range(2..=4);
            let obs = rng.random_range(2..=4);
            let occasions = rng.random_range(2..=6);
            let hmm = random_hmm(states, obs, occasions, &mut rng);
            let h = random_history(obs, occasions, &mut rng);
            let steps = forward_filter_distributions(&hmm, &h).unwrap();
            let product_log: f64 = steps.iter().map(|s| s.step_likelihood.ln()).sum();
            let total = forward_filter_log_lik(&hmm, &h).unwrap();
            assert!((product_log - total).abs() < 1e-10 * total.abs().max(1.0));
            for step in &steps {
                let sp: f64 = step.predicted.iter().sum();
                let sf: f64 = step.filtered.iter().sum();
                assert!((sp - 1.0).abs() < 1e-10);
                assert!((sf - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn impossible_history_yields_negative_infinity() {
        // Symbol 2 has probability zero in every state.
        let t = ProbMatrix::column_stochastic(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let z = ProbMatrix::column_stochastic(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let hmm = DiscreteHmmSpec::homogeneous(vec![0.5, 0.5], t, z, 3).unwrap();
        let h = ObservationHistory::from_codes(vec![1, 2, 1]).unwrap();
        let ll = forward_filter_log_lik(&hmm, &h).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
        assert_eq!(latent_enumeration_log_lik(&hmm, &h).unwrap(), f64::NEG_INFINITY);
        assert!(forward_filter_distributions(&hmm, &h).is_err());
    }

    #[test]
    fn uniform_emission_column_keeps_filter_well_defined() {
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let hmm = random_hmm(3, 3, 5, &mut rng);
        // rebuild with one emission column made uniform
        let mut data = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                data.push(if j == 1 { 1.0 / 3.0 } else { hmm.emission(2).get(i, j) });
            }
        }
        let z2 = ProbMatrix::column_stochastic(3, 3, data).unwrap();
        let emissions: Vec<ProbMatrix> =
            (1..=5).map(|t| if t == 2 { z2.clone() } else { hmm.emission(t).clone() }).collect();
        let transitions: Vec<ProbMatrix> = (2..=5).map(|t| hmm.transition(t).clone()).collect();
        let degraded =
            DiscreteHmmSpec::new(3, 3, hmm.initial().to_vec(), transitions, emissions).unwrap();
        let h = random_history(3, 5, &mut rng);
        let ll = forward_filter_log_lik(&degraded, &h).unwrap();
        assert!(ll.is_finite());
        for step in forward_filter_distributions(&degraded, &h).unwrap() {
            assert!(step.filtered.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let t = ProbMatrix::column_stochastic(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let z = ProbMatrix::column_stochastic(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let hmm = DiscreteHmmSpec::homogeneous(vec![1.0, 0.0], t, z, 3).unwrap();
        let h = ObservationHistory::from_codes(vec![1, 2]).unwrap();
        assert!(matches!(
            forward_filter_log_lik(&hmm, &h),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn non_stochastic_matrices_rejected_at_construction() {
        assert!(ProbMatrix::column_stochastic(2, 2, vec![0.5, 0.5, 0.6, 0.5]).is_err());
        assert!(ProbMatrix::column_stochastic(2, 2, vec![1.2, 0.5, -0.2, 0.5]).is_err());
        let t = ProbMatrix::column_stochastic(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let z = ProbMatrix::column_stochastic(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(DiscreteHmmSpec::homogeneous(vec![0.6, 0.6], t, z, 2).is_err());
    }

    // -----------------------------------------------------------------------
    // Closed-form absorbing-state likelihood
    // -----------------------------------------------------------------------

    #[test]
    fn certain_survival_and_detection_gives_log_one() {
        let params = CjsParams::constant(1.0, 1.0, 5).unwrap();
        let h = ObservationHistory::from_codes(vec![SEEN; 5]).unwrap();
        assert_eq!(cjs_log_lik(&params, &h).unwrap(), 0.0);
    }

    #[test]
    fn two_occasion_unseen_tail_is_chi() {
        let (phi, p) = (0.7, 0.4);
        let params = CjsParams::constant(phi, p, 2).unwrap();
        let h = ObservationHistory::from_codes(vec![SEEN, NOT_SEEN]).unwrap();
        let expected = (1.0 - phi + phi * (1.0 - p)).ln();
        assert!((cjs_log_lik(&params, &h).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_absorbing_filter() {
        let params = CjsParams::constant(0.6, 0.9, 7).unwrap();
        let h = ObservationHistory::from_codes(vec![
            SEEN, NOT_SEEN, SEEN, SEEN, NOT_SEEN, NOT_SEEN, SEEN,
        ])
        .unwrap();
        let closed = cjs_log_lik(&params, &h).unwrap();
        let hmm = cjs_absorbing_hmm(&params, 1).unwrap().unwrap();
        let filtered = forward_filter_log_lik(&hmm, &h.tail(2).unwrap()).unwrap();
        assert!((closed - filtered).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_absorbing_filter_on_random_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(55);
        for case in 0..150 {
            let k = rng.random_range(2..=8);
            let survival: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>()).collect();
            let detection: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let params = CjsParams::new(survival, detection).unwrap();
            let f = rng.random_range(1..=k);
            let mut codes: Vec<u8> = (0..k)
                .map(|t| if t + 1 < f { NOT_SEEN } else if rng.random::<f64>() < 0.5 { SEEN } else { NOT_SEEN })
                .collect();
            codes[f - 1] = SEEN;
            let h = ObservationHistory::new(codes, f).unwrap();
            let closed = cjs_log_lik(&params, &h).unwrap();
            if f == k {
                assert_eq!(closed, 0.0, "case {case}");
                continue;
            }
            let hmm = cjs_absorbing_hmm(&params, f).unwrap().unwrap();
            let filtered = forward_filter_log_lik(&hmm, &h.tail(f + 1).unwrap()).unwrap();
            if closed == f64::NEG_INFINITY {
                assert_eq!(filtered, f64::NEG_INFINITY, "case {case}");
            } else {
                assert!((closed - filtered).abs() < 1e-12, "case {case}: {closed} vs {filtered}");
            }
        }
    }

    #[test]
    fn cjs_rejects_bad_input() {
        let params = CjsParams::constant(0.5, 0.5, 3).unwrap();
        let all_unseen = ObservationHistory::new(vec![NOT_SEEN; 3], 1).unwrap();
        assert!(matches!(cjs_log_lik(&params, &all_unseen), Err(Error::NoSighting)));
        assert!(CjsParams::constant(1.5, 0.5, 3).is_err());
        assert!(CjsParams::constant(0.5, -0.1, 3).is_err());
        let short = ObservationHistory::from_codes(vec![SEEN, SEEN]).unwrap();
        assert!(matches!(cjs_log_lik(&params, &short), Err(Error::Dimension(_))));
    }
}
