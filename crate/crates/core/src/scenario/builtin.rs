//! Scenario files shipped with the crate.

use super::config::{parse_config, ScenarioConfig};
use crate::error::{Error, Result};

pub const BUILTIN: [(&str, &str); 6] = [
    (
        "canonical_wave",
        include_str!("../../scenarios/canonical_wave.toml"),
    ),
    (
        "canonical_pendulum",
        include_str!("../../scenarios/canonical_pendulum.toml"),
    ),
    (
        "mean_field",
        include_str!("../../scenarios/mean_field.toml"),
    ),
    (
        "tiny_oracle",
        include_str!("../../scenarios/tiny_oracle.toml"),
    ),
    ("madelung", include_str!("../../scenarios/madelung.toml")),
    ("closure", include_str!("../../scenarios/closure.toml")),
];

pub fn builtin_source(name: &str) -> Result<&'static str> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::InvalidParameter(format!("no built-in scenario named {name:?}")))
}

pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    Ok(parse_config(builtin_source(name)?)?)
}
