//! Forward simulation of capture histories from a parameterized model.
//!
//! Each individual's latent path starts at occasion 1 (always alive for the
//! two-state model, uniform over living states otherwise) and is propagated
//! through the transition matrices; observations are drawn from the
//! occasion's observation matrix. Individuals never seen on any occasion do
//! not enter a capture-recapture dataset, so such draws are rejected and
//! redrawn; a model that practically never produces sightings exhausts the
//! attempt budget and errors instead of spinning forever.
//!
//! Detection forms without first-occasion parameters reuse the occasion-2
//! observation matrix at occasion 1.

use rand::Rng;

use crate::data::CaptureDataset;
use crate::error::{Error, Result};
use crate::hmm::{ObservationHistory, ProbMatrix};

use super::{HierarchicalModel, ModelStructure};

const MAX_ATTEMPTS: usize = 1_000_000;

fn sample_column<R: Rng>(m: &ProbMatrix, col: usize, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for i in 0..m.rows() {
        cum += m.get(i, col);
        if u < cum {
            return i + 1;
        }
    }
    m.rows()
}

/// Draw a dataset of `individuals` capture histories under `theta`.
pub fn simulate_dataset<R: Rng>(
    model: &HierarchicalModel,
    theta: &[f64],
    individuals: usize,
    rng: &mut R,
) -> Result<CaptureDataset> {
    if individuals == 0 {
        return Err(Error::InvalidArgument(
            "at least one individual is required".into(),
        ));
    }
    let mats = model.build_matrices(theta)?;
    let k = model.occasions();
    let not_seen = model.not_seen_symbol();
    let living = match model.structure() {
        ModelStructure::Cjs { .. } => 1,
        ModelStructure::Multistate { living, .. } => *living,
    };

    let mut histories = Vec::with_capacity(individuals);
    let mut attempts: usize = 0;
    while histories.len() < individuals {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::DegenerateSimulation { attempts });
        }
        let mut state = if living == 1 {
            1
        } else {
            rng.random_range(1..=living)
        };
        let mut codes = Vec::with_capacity(k);
        for t in 1..=k {
            if t >= 2 {
                state = sample_column(mats.transition(t), state - 1, rng);
            }
            codes.push(sample_column(mats.emission(t), state - 1, rng) as u8);
        }
        let Some(first) = codes.iter().position(|&c| c != not_seen) else {
            continue;
        };
        histories.push(ObservationHistory::new(codes, first + 1)?);
    }
    CaptureDataset::new(model.num_obs(), histories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builders::{build_dipper, build_goose, build_orchid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn same_seed_gives_same_dataset() {
        let model = build_goose().unwrap();
        let mut rng1 = ChaCha20Rng::seed_from_u64(101);
        let theta = model.sample_prior(&mut rng1);
        let a = simulate_dataset(&model, &theta, 80, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        let b = simulate_dataset(&model, &theta, 80, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let c = simulate_dataset(&model, &theta, 80, &mut ChaCha20Rng::seed_from_u64(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn certain_detection_and_survival_sees_everyone_everywhere() {
        let model = build_dipper().unwrap();
        let data =
            simulate_dataset(&model, &[1.0, 1.0], 25, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert_eq!(data.len(), 25);
        for h in data.histories() {
            assert_eq!(h.first_occasion(), 1);
            assert!(h.codes().iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn undetectable_population_errors_out() {
        let model = build_dipper().unwrap();
        let err = simulate_dataset(&model, &[0.5, 0.0], 1, &mut ChaCha20Rng::seed_from_u64(2))
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateSimulation { .. }));
    }

    #[test]
    fn simulated_datasets_satisfy_structural_invariants() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for model in [build_dipper().unwrap(), build_orchid().unwrap(), build_goose().unwrap()] {
            let theta = model.sample_prior(&mut rng);
            // CaptureDataset::new would reject malformed histories
            let data = simulate_dataset(&model, &theta, 120, &mut rng).unwrap();
            assert_eq!(data.len(), 120);
            assert_eq!(data.num_occasions(), model.occasions());
            assert_eq!(data.num_obs(), model.num_obs());
        }
    }

    #[test]
    fn orchid_histories_can_contain_dormant_gaps() {
        // deterministic detection: a gap after first sighting means the plant
        // was dormant, which the likelihood must support
        let model = build_orchid().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let theta = model.initial_theta();
        let data = simulate_dataset(&model, &theta, 200, &mut rng).unwrap();
        let not_seen = model.not_seen_symbol();
        let has_gap = data.histories().iter().any(|h| {
            (h.first_occasion()..=model.occasions()).any(|t| h.code(t) == not_seen)
                && h.codes().iter().rev().take_while(|&&c| c == not_seen).count()
                    < model.occasions() - h.first_occasion()
        });
        assert!(has_gap);
        // and it does: every simulated dataset must have finite likelihood
        // at the generating parameters
        let ll = model.log_marginal(&theta, &data).unwrap();
        assert!(ll.is_finite());
    }
}
