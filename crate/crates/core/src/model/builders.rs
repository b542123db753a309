//! Ready-made models for three classic capture-recapture studies.

use crate::error::Result;

use super::{DetectionForm, Form, HierarchicalModel, LikelihoodMode, ModelStructure};

/// Dipper survival study: 7 annual occasions, constant survival and
/// detection (2 parameters), closed-form likelihood.
pub fn build_dipper() -> Result<HierarchicalModel> {
    HierarchicalModel::new(
        "dipper",
        7,
        ModelStructure::Cjs {
            survival: Form::Constant,
            detection: Form::Constant,
        },
        LikelihoodMode::ClosedForm,
        false,
    )
}

/// Orchid life-state study: 11 occasions; states vegetative, flowering,
/// dormant, dead. Vegetative and flowering plants are always recorded,
/// dormant ones never are. Per-occasion survival (10 parameters) plus a
/// 3x3 grid of time-constant movement weights (9 parameters).
pub fn build_orchid() -> Result<HierarchicalModel> {
    HierarchicalModel::new(
        "orchid",
        11,
        ModelStructure::Multistate {
            living: 3,
            observable: 2,
            survival: Form::PerOccasion,
            transitions: Form::Constant,
            detection: DetectionForm::Deterministic,
        },
        LikelihoodMode::Filter,
        false,
    )
}

/// Goose site-fidelity study: 4 occasions; states are three wintering sites
/// plus dead. Per-site survival (3 parameters), time-constant movement
/// weights (9), and per-site per-occasion detection for occasions 2-4 (9),
/// for 21 parameters in all.
pub fn build_goose() -> Result<HierarchicalModel> {
    HierarchicalModel::new(
        "goose",
        4,
        ModelStructure::Multistate {
            living: 3,
            observable: 3,
            survival: Form::PerState,
            transitions: Form::Constant,
            detection: DetectionForm::PerStateOccasion,
        },
        LikelihoodMode::Filter,
        false,
    )
}

/// Look up a shipped model by name.
pub fn build_named(name: &str) -> Option<Result<HierarchicalModel>> {
    match name {
        "dipper" => Some(build_dipper()),
        "orchid" => Some(build_orchid()),
        "goose" => Some(build_goose()),
        _ => None,
    }
}
