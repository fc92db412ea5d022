//! JSON rig interchange document.
//!
//! Output is canonical: fixed field order, sorted weight maps and floats
//! rounded to 9 significant digits, so writing a document that was read
//! back reproduces the same bytes.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, Result, RigError};
use crate::geometry::Vec3;
use crate::io::skin::{densify_skin, sparsify_skin, BoneNaming, SparseSkin};
use crate::model::{Joint, Mesh, NormalizationRecord, RiggedAsset, Skeleton, SkinningMatrix};

pub const DOCUMENT_FORMAT: &str = "rigkit-rig";
pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationEntry {
    pub scale: f64,
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    /// Map that was applied to reach the stored coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationEntry>,
    #[serde(default)]
    pub bone_naming: BoneNaming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub name: String,
    pub position: [f64; 3],
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkinEntry {
    pub vertex: usize,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigDocument {
    pub format: String,
    pub version: u32,
    pub id: String,
    /// Mesh file, relative to the document's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    #[serde(default)]
    pub metadata: Metadata,
    pub joints: Vec<JointEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skin: Vec<SkinEntry>,
}

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn round3(p: [f64; 3]) -> [f64; 3] {
    p.map(round_sig9)
}

impl RigDocument {
    /// Document for `asset`, naming unnamed joints `joint_<index>`.
    pub fn from_asset(asset: &RiggedAsset, mesh: Option<String>, normalization: Option<&NormalizationRecord>) -> Result<Self> {
        let skeleton = &asset.skeleton;
        let names: Vec<String> = skeleton
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| j.name.clone().unwrap_or_else(|| format!("joint_{i}")))
            .collect();
        let joints = skeleton
            .joints
            .iter()
            .zip(&names)
            .map(|(j, name)| JointEntry {
                name: name.clone(),
                position: [j.position.x, j.position.y, j.position.z],
                parent: j.parent.map(|p| names[p].clone()),
            })
            .collect();
        let skin = if asset.has_skinning() {
            sparsify_skin(skeleton, &asset.skinning)
                .into_iter()
                .map(|(vertex, entries)| SkinEntry {
                    vertex,
                    weights: entries.into_iter().map(|(j, w)| (names[j].clone(), w)).collect(),
                })
                .collect()
        } else {
            Vec::new()
        };
        let doc = Self {
            format: DOCUMENT_FORMAT.into(),
            version: DOCUMENT_VERSION,
            id: asset.id.clone(),
            mesh,
            metadata: Metadata {
                units: None,
                normalization: normalization.map(|r| NormalizationEntry {
                    scale: r.scale,
                    translation: [r.translation.x, r.translation.y, r.translation.z],
                }),
                bone_naming: BoneNaming::Tail,
            },
            joints,
            skin,
        };
        doc.check()?;
        Ok(doc)
    }

    fn check(&self) -> Result<HashMap<&str, usize>, ParseError> {
        if self.format != DOCUMENT_FORMAT {
            return Err(ParseError::at_path("format", format!("expected {DOCUMENT_FORMAT:?}, found {:?}", self.format)));
        }
        if self.version != DOCUMENT_VERSION {
            return Err(ParseError::at_path("version", format!("unsupported version {}", self.version)));
        }
        if self.joints.is_empty() {
            return Err(ParseError::at_path("joints", "at least one joint is required"));
        }
        let mut index = HashMap::new();
        for (i, j) in self.joints.iter().enumerate() {
            if index.insert(j.name.as_str(), i).is_some() {
                return Err(ParseError::at_path(format!("joints[{i}].name"), format!("duplicate joint name {:?}", j.name)));
            }
            if let Some(c) = j.position.iter().position(|c| !c.is_finite()) {
                return Err(ParseError::at_path(format!("joints[{i}].position[{c}]"), "non-finite coordinate"));
            }
        }
        for (i, j) in self.joints.iter().enumerate() {
            if let Some(p) = &j.parent {
                if !index.contains_key(p.as_str()) {
                    return Err(ParseError::at_path(format!("joints[{i}].parent"), format!("unknown joint {p:?}")));
                }
            }
        }
        for (i, s) in self.skin.iter().enumerate() {
            for (name, w) in &s.weights {
                if !index.contains_key(name.as_str()) {
                    return Err(ParseError::at_path(format!("skin[{i}].weights.{name}"), "unknown joint"));
                }
                if !w.is_finite() || *w < 0.0 {
                    return Err(ParseError::at_path(format!("skin[{i}].weights.{name}"), format!("invalid weight {w}")));
                }
            }
        }
        Ok(index)
    }

    pub fn skeleton(&self) -> Result<Skeleton> {
        let index = self.check()?;
        let joints = self
            .joints
            .iter()
            .map(|j| {
                Joint::named(
                    j.name.clone(),
                    Vec3::from(j.position),
                    j.parent.as_ref().map(|p| index[p.as_str()]),
                )
            })
            .collect();
        Skeleton::from_joints(joints)
    }

    pub fn normalization(&self) -> Option<NormalizationRecord> {
        self.metadata.normalization.as_ref().map(|n| NormalizationRecord {
            scale: n.scale,
            translation: Vec3::from(n.translation),
        })
    }

    /// Sparse skin rows with joint names resolved to indices.
    pub fn sparse_skin(&self) -> Result<SparseSkin> {
        let index = self.check()?;
        Ok(self
            .skin
            .iter()
            .map(|s| (s.vertex, s.weights.iter().map(|(n, &w)| (index[n.as_str()], w)).collect()))
            .collect())
    }

    /// Combines the document with its mesh. Returns the asset and the number
    /// of vertices that had no skin weights.
    pub fn to_asset(&self, mesh: Mesh) -> Result<(RiggedAsset, usize)> {
        let skeleton = self.skeleton()?;
        let (skinning, empty) = if self.skin.is_empty() {
            (SkinningMatrix::zeros(0, 0), 0)
        } else {
            densify_skin(&skeleton, mesh.vertices.len(), &self.sparse_skin()?, self.metadata.bone_naming)?
        };
        Ok((
            RiggedAsset {
                id: self.id.clone(),
                mesh,
                skeleton,
                skinning,
            },
            empty,
        ))
    }

    fn canonical(&self) -> Self {
        let mut doc = self.clone();
        for j in &mut doc.joints {
            j.position = round3(j.position);
        }
        for s in &mut doc.skin {
            s.weights.values_mut().for_each(|w| *w = round_sig9(*w));
        }
        if let Some(n) = &mut doc.metadata.normalization {
            n.scale = round_sig9(n.scale);
            n.translation = round3(n.translation);
        }
        doc
    }
}

pub fn read_rig_document(bytes: &[u8]) -> Result<RigDocument> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let doc: RigDocument = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let location = if path == "." {
            format!("line {} column {}", inner.line(), inner.column())
        } else {
            path
        };
        RigError::Parse(ParseError::at_path(location, inner.to_string()))
    })?;
    doc.check()?;
    Ok(doc)
}

pub fn write_rig_document(doc: &RigDocument) -> Result<String> {
    doc.check()?;
    let mut out = serde_json::to_string_pretty(&doc.canonical())
        .map_err(|e| RigError::InvalidArgument(e.to_string()))?;
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"format":"rigkit-rig","version":1,"id":"a","joints":[{"name":"root","position":[0,0,0],"parent":null}]}"#;

    #[test]
    fn minimal_round_trip_is_byte_stable() {
        let doc = read_rig_document(MINIMAL.as_bytes()).unwrap();
        let once = write_rig_document(&doc).unwrap();
        let twice = write_rig_document(&read_rig_document(once.as_bytes()).unwrap()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn weights_keep_nine_digits() {
        let src = r#"{"format":"rigkit-rig","version":1,"id":"b",
            "joints":[{"name":"hip","position":[0,0,0],"parent":null},
                      {"name":"spine","position":[0,1.23456789012,0],"parent":"hip"},
                      {"name":"neck","position":[0,2,0],"parent":"spine"}],
            "skin":[{"vertex":0,"weights":{"spine":0.123456789012,"neck":0.876543210988}}]}"#;
        let doc = read_rig_document(src.as_bytes()).unwrap();
        let out = write_rig_document(&doc).unwrap();
        let back = read_rig_document(out.as_bytes()).unwrap();
        assert_eq!(back.skin[0].weights["spine"], 0.123456789);
        assert_eq!(back.skin[0].weights["neck"], 0.876543211);
        assert_eq!(back.joints[1].position[1], 1.23456789);
        assert_eq!(write_rig_document(&back).unwrap(), out);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let dup = MINIMAL.replace(r#"}]}"#, r#"},{"name":"root","position":[1,0,0],"parent":"root"}]}"#);
        let err = read_rig_document(dup.as_bytes()).unwrap_err();
        assert_eq!(
            err,
            RigError::Parse(ParseError::at_path("joints[1].name", "duplicate joint name \"root\""))
        );
        let bad = MINIMAL.replace("[0,0,0]", r#"[0,"x",0]"#);
        match read_rig_document(bad.as_bytes()).unwrap_err() {
            RigError::Parse(p) => assert_eq!(p.location, "joints[0].position[1]"),
            other => panic!("{other:?}"),
        }
        assert!(read_rig_document(b"not json").is_err());
    }
}
