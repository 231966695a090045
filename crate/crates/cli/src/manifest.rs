//! Run manifests: a scenario, the policies to run and the seeds.
//!
//! Streams may name a built-in preset and override any of its fields:
//!
//! ```json
//! { "preset": "bimodal", "rate": 5000 }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use valleycut_core::{builtin_profile, Policy, Scenario};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scenario: Scenario,
    #[serde(default = "default_policies")]
    pub policies: Vec<Policy>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_policies() -> Vec<Policy> {
    vec![Policy::Ours, Policy::WindowQuantile]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
            _ => CliError::io(path, e),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        expand_presets(&mut doc)?;
        let m: RunManifest = serde_path_to_error::deserialize(doc).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.scenario.validate()?;
        if self.policies.is_empty() {
            return Err(CliError::Config("`policies` must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("`seeds` must not be empty".into()));
        }
        if has_duplicates(&self.policies) || has_duplicates(&self.seeds) {
            return Err(CliError::Config("`policies` and `seeds` must not repeat".into()));
        }
        for s in &self.scenario.streams {
            let ok = !s.name.is_empty()
                && s.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return Err(CliError::Config(format!(
                    "stream name `{}` must be ASCII letters, digits, `-` or `_`",
                    s.name
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; identifies every output.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}

fn expand_presets(doc: &mut Value) -> CliResult<()> {
    let Some(streams) = doc.pointer_mut("/scenario/streams").and_then(Value::as_array_mut) else {
        return Ok(());
    };
    for (i, s) in streams.iter_mut().enumerate() {
        let Some(obj) = s.as_object_mut() else { continue };
        let Some(name) = obj.remove("preset") else { continue };
        let name = name
            .as_str()
            .ok_or_else(|| CliError::Config(format!("at `scenario.streams[{i}].preset`: expected a string")))?;
        let base =
            builtin_profile(name).map_err(|e| CliError::Config(format!("at `scenario.streams[{i}].preset`: {e}")))?;
        let mut merged = serde_json::to_value(base)?;
        let target = merged.as_object_mut().expect("profile is an object");
        for (k, v) in std::mem::take(obj) {
            target.insert(k, v);
        }
        *s = merged;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "scenario": { "intervals": 4, "streams": [ { "preset": "bimodal", "rate": 300 } ] },
        "policies": ["ours", "ewma"],
        "seeds": [1, 2]
    }"#;

    #[test]
    fn preset_with_override() {
        let m = RunManifest::from_json(MINIMAL).unwrap();
        let s = &m.scenario.streams[0];
        assert_eq!(s.name, "bimodal");
        assert_eq!(s.rate, 300);
        assert_eq!(s.components.len(), 2);
        assert_eq!(m.policies, vec![Policy::Ours, Policy::Ewma]);
    }

    #[test]
    fn unknown_policy_is_a_config_error() {
        let text = MINIMAL.replace("\"ewma\"", "\"oracle\"");
        let err = RunManifest::from_json(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("policies"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"rate\": 300", "\"rate\": 300, \"rte\": 1");
        let err = RunManifest::from_json(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("rte"), "{err}");
    }

    #[test]
    fn unknown_preset_rejected() {
        let text = MINIMAL.replace("bimodal", "pentamodal");
        assert_eq!(RunManifest::from_json(&text).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunManifest::from_json(MINIMAL).unwrap();
        let b = RunManifest::from_json(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.seeds.push(3);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn missing_file_exits_3() {
        let err = RunManifest::load(Path::new("/nonexistent/scenario.json")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
