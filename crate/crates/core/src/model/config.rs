//! Custom model descriptions in TOML.
//!
//! ```toml
//! name = "my-study"
//! kind = "multistate"        # or "cjs"
//! occasions = 6
//! survival = "per-state"     # "constant" | "per-occasion" | "per-state"
//! transitions = "constant"   # "constant" | "per-occasion"
//! detection = "per-state-occasion"  # or "deterministic"; for cjs:
//!                                   # "constant" | "per-occasion"
//! living_states = 3
//! observable_states = 3
//! # optional:
//! # likelihood = "filter"            # cjs models default to "closed-form"
//! # include_first_emission = false
//! ```

use serde::Deserialize;

use crate::error::{Error, Result};

use super::{DetectionForm, Form, HierarchicalModel, LikelihoodMode, ModelStructure};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    kind: String,
    occasions: usize,
    survival: String,
    detection: String,
    transitions: Option<String>,
    living_states: Option<usize>,
    observable_states: Option<usize>,
    likelihood: Option<String>,
    include_first_emission: Option<bool>,
}

fn parse_form(value: &str, field: &str) -> Result<Form> {
    match value {
        "constant" => Ok(Form::Constant),
        "per-occasion" => Ok(Form::PerOccasion),
        "per-state" => Ok(Form::PerState),
        other => Err(Error::Config(format!(
            "{field} must be constant, per-occasion, or per-state; got {other:?}"
        ))),
    }
}

/// Build a model from a TOML description.
pub fn model_from_toml(text: &str) -> Result<HierarchicalModel> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let name = raw.name.unwrap_or_else(|| "custom".into());

    let structure = match raw.kind.as_str() {
        "cjs" => {
            for (field, value) in [
                ("transitions", raw.transitions.is_some()),
                ("living_states", raw.living_states.is_some()),
                ("observable_states", raw.observable_states.is_some()),
            ] {
                if value {
                    return Err(Error::Config(format!(
                        "{field} does not apply to the two-state model"
                    )));
                }
            }
            ModelStructure::Cjs {
                survival: parse_form(&raw.survival, "survival")?,
                detection: parse_form(&raw.detection, "detection")?,
            }
        }
        "multistate" => {
            let living = raw
                .living_states
                .ok_or_else(|| Error::Config("multistate models need living_states".into()))?;
            let observable = raw.observable_states.unwrap_or(living);
            let transitions = parse_form(
                raw.transitions.as_deref().unwrap_or("constant"),
                "transitions",
            )?;
            let detection = match raw.detection.as_str() {
                "deterministic" => DetectionForm::Deterministic,
                "per-state-occasion" => DetectionForm::PerStateOccasion,
                other => {
                    return Err(Error::Config(format!(
                        "detection must be deterministic or per-state-occasion; got {other:?}"
                    )))
                }
            };
            ModelStructure::Multistate {
                living,
                observable,
                survival: parse_form(&raw.survival, "survival")?,
                transitions,
                detection,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "kind must be cjs or multistate; got {other:?}"
            )))
        }
    };

    let default_mode = match &structure {
        ModelStructure::Cjs { .. } => LikelihoodMode::ClosedForm,
        ModelStructure::Multistate { .. } => LikelihoodMode::Filter,
    };
    let mode = match raw.likelihood.as_deref() {
        None => default_mode,
        Some("filter") => LikelihoodMode::Filter,
        Some("closed-form") => LikelihoodMode::ClosedForm,
        Some(other) => {
            return Err(Error::Config(format!(
                "likelihood must be filter or closed-form; got {other:?}"
            )))
        }
    };
    let include_first = raw.include_first_emission.unwrap_or(false);
    // the closed form always conditions the first emission away
    let mode = if include_first && mode == LikelihoodMode::ClosedForm && raw.likelihood.is_none() {
        LikelihoodMode::Filter
    } else {
        mode
    };

    HierarchicalModel::new(name, raw.occasions, structure, mode, include_first)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_a_cjs_model() {
        let model = model_from_toml(
            r#"
            name = "streamside"
            kind = "cjs"
            occasions = 7
            survival = "constant"
            detection = "constant"
            "#,
        )
        .unwrap();
        assert_eq!(model.name(), "streamside");
        assert_eq!(model.dim(), 2);
        assert_eq!(model.likelihood_mode(), LikelihoodMode::ClosedForm);
    }

    #[test]
    fn builds_a_multistate_model() {
        let model = model_from_toml(
            r#"
            kind = "multistate"
            occasions = 4
            living_states = 3
            survival = "per-state"
            transitions = "constant"
            detection = "per-state-occasion"
            "#,
        )
        .unwrap();
        assert_eq!(model.name(), "custom");
        assert_eq!(model.dim(), 3 + 9 + 9);
        assert_eq!(model.num_obs(), 4);
    }

    #[test]
    fn per_occasion_everything() {
        let model = model_from_toml(
            r#"
            kind = "multistate"
            occasions = 3
            living_states = 2
            observable_states = 1
            survival = "per-occasion"
            transitions = "per-occasion"
            detection = "deterministic"
            "#,
        )
        .unwrap();
        // 2 survival + 2 occasions x 4 weights, deterministic detection
        assert_eq!(model.dim(), 2 + 8);
        assert_eq!(model.num_obs(), 2);
    }

    #[test]
    fn first_emission_flag_switches_cjs_to_filter() {
        let model = model_from_toml(
            r#"
            kind = "cjs"
            occasions = 5
            survival = "constant"
            detection = "per-occasion"
            include_first_emission = true
            "#,
        )
        .unwrap();
        assert_eq!(model.likelihood_mode(), LikelihoodMode::Filter);
        assert!(model.include_first_emission());
    }

    #[test]
    fn rejects_malformed_configs() {
        assert!(model_from_toml("kind = \"cjs\"").is_err());
        assert!(model_from_toml(
            "kind = \"frog\"\noccasions = 3\nsurvival = \"constant\"\ndetection = \"constant\""
        )
        .is_err());
        assert!(model_from_toml(
            "kind = \"cjs\"\noccasions = 3\nsurvival = \"per-state\"\ndetection = \"constant\""
        )
        .is_err());
        assert!(model_from_toml(
            "kind = \"multistate\"\noccasions = 3\nsurvival = \"constant\"\ndetection = \"deterministic\""
        )
        .is_err());
        assert!(model_from_toml(
            "kind = \"cjs\"\noccasions = 3\nsurvival = \"constant\"\ndetection = \"constant\"\nliving_states = 2"
        )
        .is_err());
        // unknown fields are caught rather than silently ignored
        assert!(model_from_toml(
            "kind = \"cjs\"\noccasions = 3\nsurvival = \"constant\"\ndetection = \"constant\"\ntypo = 1"
        )
        .is_err());
        // explicit closed-form with the first-emission flag is contradictory
        assert!(model_from_toml(
            "kind = \"cjs\"\noccasions = 3\nsurvival = \"constant\"\ndetection = \"constant\"\nlikelihood = \"closed-form\"\ninclude_first_emission = true"
        )
        .is_err());
    }
}
