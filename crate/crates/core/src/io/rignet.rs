//! RigNet-style rig text files: `joints`, `root`, `hier` and `skin` records.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{ParseError, Result};
use crate::geometry::Vec3;
use crate::io::skin::SparseSkin;
use crate::model::{Joint, Skeleton, SkinningMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct RigNetRig {
    pub skeleton: Skeleton,
    /// Per-vertex joint weights, in file order.
    pub skin: SparseSkin,
}

fn number(token: &str, line: usize) -> Result<f64, ParseError> {
    token
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ParseError::at_line(line, format!("bad number {token:?}")))
}

/// Parses a rig file. Joints keep their declaration order.
pub fn parse_rignet_rig(text: &str) -> Result<RigNetRig> {
    let mut names: Vec<String> = Vec::new();
    let mut positions: Vec<Vec3> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut hier: Vec<(String, String, usize)> = Vec::new();
    let mut root: Option<(String, usize)> = None;
    let mut skin_lines: Vec<(usize, Vec<&str>, usize)> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        let Some((&kind, rest)) = fields.split_first() else { continue };
        if kind.starts_with('#') {
            continue;
        }
        match kind {
            "joints" => {
                let [name, x, y, z] = rest else {
                    return Err(ParseError::at_line(line, "expected: joints <name> <x> <y> <z>").into());
                };
                if index.contains_key(*name) {
                    return Err(ParseError::at_line(line, format!("joint {name:?} declared twice")).into());
                }
                index.insert(name.to_string(), names.len());
                names.push(name.to_string());
                positions.push(Vec3::new(number(x, line)?, number(y, line)?, number(z, line)?));
            }
            "root" => {
                let [name] = rest else {
                    return Err(ParseError::at_line(line, "expected: root <name>").into());
                };
                if root.is_some() {
                    return Err(ParseError::at_line(line, "multiple root records").into());
                }
                root = Some((name.to_string(), line));
            }
            "hier" => {
                let [parent, child] = rest else {
                    return Err(ParseError::at_line(line, "expected: hier <parent> <child>").into());
                };
                hier.push((parent.to_string(), child.to_string(), line));
            }
            "skin" => {
                let Some((v, pairs)) = rest.split_first() else {
                    return Err(ParseError::at_line(line, "expected: skin <vertex> (<bone> <weight>)+").into());
                };
                let v: usize = v
                    .parse()
                    .map_err(|_| ParseError::at_line(line, format!("bad vertex index {v:?}")))?;
                if pairs.is_empty() || pairs.len() % 2 != 0 {
                    return Err(ParseError::at_line(line, "skin needs <bone> <weight> pairs").into());
                }
                skin_lines.push((v, pairs.to_vec(), line));
            }
            other => {
                return Err(ParseError::at_line(line, format!("unknown record {other:?}")).into());
            }
        }
    }

    let resolve = |name: &str, line: usize| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| ParseError::at_line(line, format!("unknown joint {name:?}")))
    };
    let (root_name, root_line) = root.ok_or_else(|| ParseError::at_path("root", "no root"))?;
    let root = resolve(&root_name, root_line)?;

    let mut parents: Vec<Option<usize>> = vec![None; names.len()];
    for (parent, child, line) in &hier {
        let p = resolve(parent, *line)?;
        let c = resolve(child, *line)?;
        if c == root {
            return Err(ParseError::at_line(*line, format!("root {child:?} cannot have a parent")).into());
        }
        if parents[c].is_some() {
            return Err(ParseError::at_line(*line, format!("joint {child:?} has two parents")).into());
        }
        parents[c] = Some(p);
    }
    if let Some(orphan) = (0..names.len()).find(|&j| j != root && parents[j].is_none()) {
        return Err(ParseError::at_path(
            "hier",
            format!("joint {:?} has no parent and is not the root", names[orphan]),
        )
        .into());
    }
    let joints = names
        .iter()
        .zip(&positions)
        .zip(&parents)
        .map(|((name, &p), &parent)| Joint::named(name.clone(), p, parent))
        .collect();
    let skeleton = Skeleton::from_joints(joints)?;

    let mut skin = Vec::with_capacity(skin_lines.len());
    for (v, pairs, line) in skin_lines {
        let entries = pairs
            .chunks(2)
            .map(|pair| Ok((resolve(pair[0], line)?, number(pair[1], line)?)))
            .collect::<Result<Vec<_>, ParseError>>()?;
        skin.push((v, entries));
    }
    Ok(RigNetRig { skeleton, skin })
}

/// Writes a rig file; every nonzero skin weight is attributed to its bone's
/// tail joint.
pub fn write_rignet_rig(skeleton: &Skeleton, skinning: Option<&SkinningMatrix>) -> String {
    let name = |j: usize| skeleton.joints[j].name.clone().unwrap_or_else(|| format!("joint_{j}"));
    let mut out = String::new();
    for (j, joint) in skeleton.joints.iter().enumerate() {
        let p = joint.position;
        let _ = writeln!(out, "joints {} {} {} {}", name(j), p.x, p.y, p.z);
    }
    let _ = writeln!(out, "root {}", name(skeleton.root));
    for (j, joint) in skeleton.joints.iter().enumerate() {
        if let Some(p) = joint.parent {
            let _ = writeln!(out, "hier {} {}", name(p), name(j));
        }
    }
    if let Some(w) = skinning {
        for (v, entries) in crate::io::skin::sparsify_skin(skeleton, w) {
            let _ = write!(out, "skin {v}");
            for (j, weight) in entries {
                let _ = write!(out, " {} {}", name(j), weight);
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::RigError;
    use crate::io::skin::{densify_skin, BoneNaming};

    const CHAIN: &str = "joints hip 0 0 0\njoints spine 0 1 0\njoints neck 0 2 0\nroot hip\nhier hip spine\nhier spine neck\n";

    #[test]
    fn two_joint_chain() {
        let rig = parse_rignet_rig("joints a 0 0 0\njoints b 0 1 0\nroot a\nhier a b\n").unwrap();
        assert_eq!(rig.skeleton.len(), 2);
        assert_eq!(rig.skeleton.joints[1].parent, Some(0));
        assert_eq!(rig.skeleton.root, 0);
    }

    #[test]
    fn skin_line_resolves_names() {
        let rig = parse_rignet_rig(&format!("{CHAIN}skin 0 spine 0.7 neck 0.3\n")).unwrap();
        assert_eq!(rig.skin, vec![(0, vec![(1, 0.7), (2, 0.3)])]);
        let (dense, _) = densify_skin(&rig.skeleton, 1, &rig.skin, BoneNaming::Tail).unwrap();
        assert_eq!(dense.row(0), &[0.7, 0.3]);
        assert_eq!(dense.row(0).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn errors() {
        let no_root = parse_rignet_rig("joints a 0 0 0\n").unwrap_err();
        assert_eq!(no_root, RigError::Parse(ParseError::at_path("root", "no root")));
        let two = parse_rignet_rig("joints a 0 0 0\nroot a\nroot a\n").unwrap_err();
        assert_eq!(two, RigError::Parse(ParseError::at_line(3, "multiple root records")));
        assert!(matches!(parse_rignet_rig("bones a\n"), Err(RigError::Parse(p)) if p.location == "line 1"));
        assert!(matches!(parse_rignet_rig(&format!("{CHAIN}skin 0 tail 1\n")), Err(RigError::Parse(p)) if p.location == "line 7"));
        assert!(parse_rignet_rig("joints a 0 0 0\njoints b 0 0 0\nroot a\n").is_err());
    }

    #[test]
    fn write_then_parse() {
        let rig = parse_rignet_rig(CHAIN).unwrap();
        let again = parse_rignet_rig(&write_rignet_rig(&rig.skeleton, None)).unwrap();
        assert_eq!(again.skeleton, rig.skeleton);
    }
}
