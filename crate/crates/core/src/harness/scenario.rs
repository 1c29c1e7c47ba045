use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::sim::sensor::AmbientProfile;
use crate::sim::{generate_scene, BerryInstance, Scene, SceneSpec, SimConfig};

/// A bundled or user scenario: a scene (explicit or generated) plus config
/// overrides on top of the base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub berries: Option<Vec<BerryInstance>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient_profile: Option<AmbientProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<SceneSpec>,
    /// Partial configuration merged over the base configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

impl Scenario {
    /// Builds the scene for `seed`.
    pub fn scene(&self, seed: u64) -> Result<Scene, HarnessError> {
        match (&self.berries, &self.generate) {
            (Some(berries), None) => Ok(Scene {
                berries: berries.clone(),
                ambient_profile: self.ambient_profile.unwrap_or_default(),
                rng_seed: seed,
            }),
            (None, Some(spec)) => {
                let mut spec = spec.clone();
                if let Some(a) = self.ambient_profile {
                    spec.ambient = a;
                }
                Ok(generate_scene(&spec, seed)?)
            }
            _ => Err(HarnessError::Usage("scenario needs exactly one of `berries` or `generate`".into())),
        }
    }

    /// Base configuration with this scenario's overrides applied.
    pub fn config(&self, base: &SimConfig, path: &Path) -> Result<SimConfig, HarnessError> {
        match &self.config {
            None => Ok(base.clone()),
            Some(over) => {
                let mut merged = serde_json::to_value(base).expect("config serializes");
                merge(&mut merged, over);
                config_from_value(merged, path)
            }
        }
    }
}

/// Recursively overlays `over` onto `base`; objects merge, everything else replaces.
pub fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn parse_error(path: &Path, field: String, err: &serde_json::Error) -> HarnessError {
    let message = if err.line() > 0 {
        format!("line {} column {}: field `{field}`: {err}", err.line(), err.column())
    } else {
        format!("field `{field}`: {err}")
    };
    HarnessError::Parse { path: path.to_path_buf(), message }
}

fn parse_str<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        parse_error(path, field, e.inner())
    })
}

fn config_from_value(v: Value, path: &Path) -> Result<SimConfig, HarnessError> {
    let cfg: SimConfig = serde_path_to_error::deserialize(v).map_err(|e| {
        let field = e.path().to_string();
        parse_error(path, field, e.inner())
    })?;
    cfg.validate().map_err(|e| HarnessError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Parse { path: path.to_path_buf(), message: format!("cannot read: {e}") })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    parse_scenario(&read(path)?, path)
}

/// Parses scenario JSON. `origin` only labels error messages.
pub fn parse_scenario(text: &str, origin: &Path) -> Result<Scenario, HarnessError> {
    let path = origin;
    let s: Scenario = parse_str(text, path)?;
    if s.berries.is_some() == s.generate.is_some() {
        return Err(HarnessError::Parse {
            path: path.to_path_buf(),
            message: "scenario needs exactly one of `berries` or `generate`".into(),
        });
    }
    if let Some(spec) = &s.generate {
        spec.validate().map_err(|e| HarnessError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    }
    Ok(s)
}

/// Loads a full or partial configuration file over the defaults.
pub fn load_config(path: &Path) -> Result<SimConfig, HarnessError> {
    parse_config(&read(path)?, path)
}

/// Parses full or partial configuration JSON over the defaults.
pub fn parse_config(text: &str, origin: &Path) -> Result<SimConfig, HarnessError> {
    let path = origin;
    let over: Value = parse_str(text, path)?;
    let mut merged = serde_json::to_value(SimConfig::default()).expect("config serializes");
    merge(&mut merged, &over);
    config_from_value(merged, path)
}

/// Base configuration: the given file, or the defaults.
pub fn base_config(path: Option<&PathBuf>) -> Result<SimConfig, HarnessError> {
    match path {
        Some(p) => load_config(p),
        None => Ok(SimConfig::default()),
    }
}
