//! Conversion between sparse per-joint skin maps found in rig files and
//! dense per-bone skinning matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RigError};
use crate::model::{renormalize_skinning, Skeleton, SkinningMatrix};

/// Which joint names a bone in a skin file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoneNaming {
    /// A weight on joint `j` belongs to the bone ending at `j`. Weights on
    /// the root are shared evenly by the root's child bones.
    #[default]
    Tail,
    /// A weight on joint `j` is shared evenly by the bones starting at `j`;
    /// a leaf joint falls back to the bone ending at it.
    Head,
}

impl BoneNaming {
    pub fn name(self) -> &'static str {
        match self {
            BoneNaming::Tail => "tail",
            BoneNaming::Head => "head",
        }
    }
}

/// Sparse skin: per vertex, `(joint index, weight)` entries.
pub type SparseSkin = Vec<(usize, Vec<(usize, f64)>)>;

/// Bone columns that share the weight placed on each joint.
pub fn joint_bone_shares(skeleton: &Skeleton, naming: BoneNaming) -> Vec<Vec<usize>> {
    let n = skeleton.len();
    let bones = skeleton.bones();
    let mut ending = vec![None; n];
    let mut starting = vec![Vec::new(); n];
    for (c, b) in bones.iter().enumerate() {
        ending[b.tail] = Some(c);
        starting[b.head].push(c);
    }
    (0..n)
        .map(|j| match (naming, ending[j]) {
            (BoneNaming::Tail, Some(c)) => vec![c],
            (BoneNaming::Tail, None) => starting[j].clone(),
            (BoneNaming::Head, tail) => {
                if starting[j].is_empty() {
                    tail.into_iter().collect()
                } else {
                    starting[j].clone()
                }
            }
        })
        .collect()
}

/// Dense, row-normalized skinning matrix from sparse joint weights.
/// Vertices without any weight get a uniform row; the number of such
/// vertices is returned alongside.
pub fn densify_skin(
    skeleton: &Skeleton,
    vertices: usize,
    sparse: &SparseSkin,
    naming: BoneNaming,
) -> Result<(SkinningMatrix, usize)> {
    let bones = skeleton.bone_count();
    if bones == 0 {
        return Err(RigError::NoBones);
    }
    let shares = joint_bone_shares(skeleton, naming);
    let mut dense = SkinningMatrix::zeros(vertices, bones);
    for (v, entries) in sparse {
        if *v >= vertices {
            return Err(RigError::IndexOutOfRange {
                index: *v,
                len: vertices,
            });
        }
        for &(joint, w) in entries {
            if !w.is_finite() {
                return Err(RigError::NonFinite);
            }
            if w < 0.0 {
                return Err(RigError::NegativeWeight {
                    row: *v,
                    col: joint,
                    value: w,
                });
            }
            let cols = shares.get(joint).ok_or(RigError::IndexOutOfRange {
                index: joint,
                len: skeleton.len(),
            })?;
            let part = w / cols.len() as f64;
            for &c in cols {
                let row = dense.row_mut(*v);
                row[c] += part;
            }
        }
    }
    let empty = dense.iter_rows().filter(|r| r.iter().all(|&w| w == 0.0)).count();
    Ok((renormalize_skinning(&dense, 0.0)?, empty))
}

/// Sparse skin naming each bone column by its tail joint; zero weights are
/// dropped.
pub fn sparsify_skin(skeleton: &Skeleton, skinning: &SkinningMatrix) -> SparseSkin {
    let tails: Vec<usize> = skeleton.bones().iter().map(|b| b.tail).collect();
    skinning
        .iter_rows()
        .enumerate()
        .filter_map(|(v, row)| {
            let entries: Vec<(usize, f64)> = row
                .iter()
                .zip(&tails)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, &t)| (t, *w))
                .collect();
            (!entries.is_empty()).then_some((v, entries))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::model::Joint;

    fn fork() -> Skeleton {
        // 0 -> 1, 0 -> 2, 1 -> 3
        Skeleton::from_joints(vec![
            Joint::new(Vec3::zeros(), None),
            Joint::new(Vec3::x(), Some(0)),
            Joint::new(Vec3::y(), Some(0)),
            Joint::new(Vec3::z(), Some(1)),
        ])
        .unwrap()
    }

    #[test]
    fn shares_by_convention() {
        let s = fork();
        assert_eq!(joint_bone_shares(&s, BoneNaming::Tail), vec![vec![0, 1], vec![0], vec![1], vec![2]]);
        assert_eq!(joint_bone_shares(&s, BoneNaming::Head), vec![vec![0, 1], vec![2], vec![1], vec![2]]);
    }

    #[test]
    fn densify_and_back() {
        let s = fork();
        let sparse = vec![(0, vec![(1, 0.7), (3, 0.3)]), (2, vec![(0, 1.0)])];
        let (dense, empty) = densify_skin(&s, 3, &sparse, BoneNaming::Tail).unwrap();
        assert_eq!(empty, 1);
        assert_eq!(dense.row(0), &[0.7, 0.0, 0.3]);
        assert_eq!(dense.row(2), &[0.5, 0.5, 0.0]);
        let row1: f64 = dense.row(1).iter().sum();
        assert!((row1 - 1.0).abs() < 1e-15);
        assert_eq!(sparsify_skin(&s, &dense)[0], (0, vec![(1, 0.7), (3, 0.3)]));
        assert!(densify_skin(&s, 3, &vec![(5, vec![(1, 1.0)])], BoneNaming::Tail).is_err());
    }
}
