//! Experiment configuration files (TOML).
//!
//! ```toml
//! preset = "synthetic_v2"   # optional, default synthetic_v1
//!
//! [scene]                   # any subset of SceneConfig fields
//! defects_per_scene = [2, 4]
//!
//! [augment]                 # any subset of AugmentConfig fields
//! p_elastic = 0.0
//! ```
//!
//! Keys missing from a table keep the preset's (or the default) values.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::scene::SceneConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    SyntheticV1,
    SyntheticV2,
}

impl Preset {
    pub fn scene(self) -> SceneConfig {
        match self {
            Preset::SyntheticV1 => SceneConfig::synthetic_v1(),
            Preset::SyntheticV2 => SceneConfig::synthetic_v2(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::SyntheticV1 => "synthetic_v1",
            Preset::SyntheticV2 => "synthetic_v2",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "synthetic_v1" | "v1" => Ok(Preset::SyntheticV1),
            "synthetic_v2" | "v2" => Ok(Preset::SyntheticV2),
            _ => Err(Error::param(format!("unknown preset {s:?} (synthetic_v1, synthetic_v2)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub scene: SceneConfig,
    pub augment: AugmentConfig,
}

/// Recursively overlays `patch` onto `base`; tables merge, other values
/// replace.
fn merge(base: &mut toml::Value, patch: toml::Value) {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_err(e: impl fmt::Display) -> Error {
    Error::Data(format!("config: {e}"))
}

impl ExperimentConfig {
    pub fn from_preset(preset: Preset) -> Self {
        ExperimentConfig {
            preset,
            scene: preset.scene(),
            augment: AugmentConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(parse_err)?;
        let preset = match table.remove("preset") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(other) => return Err(parse_err(format!("preset must be a string, got {other}"))),
            None => Preset::default(),
        };
        let mut out = ExperimentConfig::from_preset(preset);
        if let Some(patch) = table.remove("scene") {
            let mut base = toml::Value::try_from(&out.scene).map_err(parse_err)?;
            merge(&mut base, patch);
            out.scene = base.try_into().map_err(parse_err)?;
        }
        if let Some(patch) = table.remove("augment") {
            out.augment = patch.try_into().map_err(parse_err)?;
        }
        if let Some(key) = table.keys().next() {
            return Err(parse_err(format!("unknown key {key:?}")));
        }
        out.scene.validate()?;
        out.augment.validate()?;
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(parse_err)
    }
}
