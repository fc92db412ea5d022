//! Evaluation manifests: a config block and a list of prediction/reference
//! pairs, stored as TOML.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, Result};
use crate::io::skin::BoneNaming;
use crate::metrics::{BoneAnchor, EvalConfig, PointPairing, SkinMetricConfig, DEFAULT_SAMPLES_PER_BONE};
use crate::metrics::skin::{DEFAULT_KL_EPSILON, DEFAULT_SAMPLE_POINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifestConfig {
    pub samples_per_bone: usize,
    pub n_points: usize,
    pub kl_epsilon: f64,
    pub seed: Option<u64>,
    pub pairing: PointPairing,
    pub anchor: BoneAnchor,
    /// Skin naming convention for RigNet text inputs.
    pub bone_naming: BoneNaming,
}

impl Default for ManifestConfig {
    fn default() -> Self {
        Self {
            samples_per_bone: DEFAULT_SAMPLES_PER_BONE,
            n_points: DEFAULT_SAMPLE_POINTS,
            kl_epsilon: DEFAULT_KL_EPSILON,
            seed: None,
            pairing: PointPairing::default(),
            anchor: BoneAnchor::default(),
            bone_naming: BoneNaming::default(),
        }
    }
}

impl ManifestConfig {
    /// Metric configuration; `seed` overrides the manifest's seed.
    pub fn eval_config(&self, seed: Option<u64>) -> EvalConfig {
        EvalConfig {
            samples_per_bone: self.samples_per_bone,
            skin: SkinMetricConfig {
                n_points: self.n_points,
                epsilon: self.kl_epsilon,
                seed: seed.or(self.seed).unwrap_or(0),
                pairing: self.pairing,
                anchor: self.anchor,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPair {
    pub id: String,
    pub pred: String,
    #[serde(rename = "ref")]
    pub reference: String,
    /// Mesh for a prediction given as a RigNet text file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_mesh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_mesh: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalManifest {
    #[serde(default)]
    pub config: ManifestConfig,
    #[serde(default, rename = "pair")]
    pub pairs: Vec<ManifestPair>,
}

pub fn read_manifest(text: &str) -> Result<EvalManifest> {
    let manifest: EvalManifest = toml::from_str(text).map_err(|e| {
        let location = e
            .span()
            .map(|s| format!("line {}", text[..s.start.min(text.len())].matches('\n').count() + 1))
            .unwrap_or_else(|| "manifest".into());
        ParseError::at_path(location, e.message().to_string())
    })?;
    let c = &manifest.config;
    if c.samples_per_bone < 2 {
        return Err(ParseError::at_path("config.samples_per_bone", "must be at least 2").into());
    }
    if c.n_points == 0 {
        return Err(ParseError::at_path("config.n_points", "must be positive").into());
    }
    if !(c.kl_epsilon > 0.0) || !c.kl_epsilon.is_finite() {
        return Err(ParseError::at_path("config.kl_epsilon", "must be positive").into());
    }
    let mut ids = HashSet::new();
    for (i, p) in manifest.pairs.iter().enumerate() {
        for (field, value) in [("id", &p.id), ("pred", &p.pred), ("ref", &p.reference)] {
            if value.is_empty() {
                return Err(ParseError::at_path(format!("pair[{i}].{field}"), "must not be empty").into());
            }
        }
        if !ids.insert(p.id.as_str()) {
            return Err(ParseError::at_path(format!("pair[{i}].id"), format!("duplicate id {:?}", p.id)).into());
        }
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &EvalManifest) -> Result<String> {
    toml::to_string(manifest).map_err(|e| crate::error::RigError::InvalidArgument(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        let text = r#"
[config]
n_points = 1024
anchor = "midpoint"

[[pair]]
id = "a"
pred = "p/a.json"
ref = "r/a.json"
"#;
        let m = read_manifest(text).unwrap();
        assert_eq!(m.config.n_points, 1024);
        assert_eq!(m.config.samples_per_bone, 32);
        assert_eq!(m.config.anchor, BoneAnchor::Midpoint);
        assert_eq!(m.pairs[0].reference, "r/a.json");
        assert_eq!(read_manifest(&write_manifest(&m).unwrap()).unwrap(), m);
        assert_eq!(m.config.eval_config(Some(7)).skin.seed, 7);

        let dup = format!("{text}\n[[pair]]\nid = \"a\"\npred = \"x\"\nref = \"y\"\n");
        assert!(read_manifest(&dup).is_err());
        assert!(read_manifest("[config]\nbogus = 1\n").is_err());
        assert!(read_manifest("[[pair]]\nid = \"\"\npred = \"x\"\nref = \"y\"\n").is_err());
    }
}
