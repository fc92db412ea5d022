//! Conversion between joint trees and discrete skeleton token sequences.
//!
//! A skeleton is serialized breadth-first from the root. Joints of equal
//! depth are sorted by their quantized `(z, y, x)` cell, ascending. Each
//! token carries the joint's cell in a 128³ grid and the index of its
//! parent token; the root points at itself (index 0).

use crate::error::{Result, RigError};
use crate::geometry::Vec3;
use crate::model::{Joint, Skeleton};

/// Cells per axis of the joint quantization grid.
pub const GRID_RESOLUTION: u32 = 128;
pub const DEFAULT_MAX_JOINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SkeletonToken {
    pub qx: u8,
    pub qy: u8,
    pub qz: u8,
    pub parent: usize,
}

impl SkeletonToken {
    pub fn cell(&self) -> [u8; 3] {
        [self.qx, self.qy, self.qz]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<SkeletonToken>,
    /// Whether an end-of-sequence marker followed the last token.
    pub terminated: bool,
    pub max_joints: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantized {
    pub cell: [u8; 3],
    /// Set when some coordinate fell outside `[0, 1]` and was clamped.
    pub clamped: bool,
}

/// `floor(c * 128)` per axis, clamped to `[0, 127]`.
pub fn quantize(p: &Vec3) -> Result<Quantized> {
    let mut cell = [0u8; 3];
    let mut clamped = false;
    for a in 0..3 {
        let c = p[a];
        if !c.is_finite() {
            return Err(RigError::NonFinite);
        }
        if !(0.0..=1.0).contains(&c) {
            clamped = true;
        }
        let q = (c * GRID_RESOLUTION as f64).floor();
        cell[a] = q.clamp(0.0, (GRID_RESOLUTION - 1) as f64) as u8;
    }
    Ok(Quantized { cell, clamped })
}

/// Cell center `(q + 0.5) / 128`.
pub fn dequantize(q: [i64; 3]) -> Result<Vec3> {
    let mut p = Vec3::zeros();
    for a in 0..3 {
        if !(0..GRID_RESOLUTION as i64).contains(&q[a]) {
            return Err(RigError::OutOfGrid(q[a], GRID_RESOLUTION));
        }
        p[a] = (q[a] as f64 + 0.5) / GRID_RESOLUTION as f64;
    }
    Ok(p)
}

fn dequantize_cell(cell: [u8; 3]) -> Vec3 {
    Vec3::new(
        (cell[0] as f64 + 0.5) / GRID_RESOLUTION as f64,
        (cell[1] as f64 + 0.5) / GRID_RESOLUTION as f64,
        (cell[2] as f64 + 0.5) / GRID_RESOLUTION as f64,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfsOrder {
    pub skeleton: Skeleton,
    /// `permutation[old] = new`.
    pub permutation: Vec<usize>,
}

/// Reorders joints breadth-first from the root, sorting each depth level
/// by quantized `(z, y, x)`.
///
/// Ties inside a cell fall back to the parent's new index, then the exact
/// `(z, y, x)` coordinates, then the original index, so the order depends
/// on storage order only for coincident sibling joints.
pub fn bfs_order(skeleton: &Skeleton) -> Result<BfsOrder> {
    let tree = skeleton.tree()?;
    let n = skeleton.len();
    let cells: Vec<[u8; 3]> = skeleton
        .joints
        .iter()
        .map(|j| quantize(&j.position).map(|q| q.cell))
        .collect::<Result<_>>()?;

    let mut permutation = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    permutation[tree.root] = 0;
    order.push(tree.root);
    let mut level = vec![tree.root];
    while !level.is_empty() {
        let mut next: Vec<usize> = level
            .iter()
            .flat_map(|&j| tree.children[j].iter().copied())
            .collect();
        next.sort_by(|&a, &b| {
            let (ca, cb) = (cells[a], cells[b]);
            let pa = &skeleton.joints[a].position;
            let pb = &skeleton.joints[b].position;
            (ca[2], ca[1], ca[0])
                .cmp(&(cb[2], cb[1], cb[0]))
                .then_with(|| {
                    let par = |j: usize| permutation[skeleton.joints[j].parent.unwrap_or(j)];
                    par(a).cmp(&par(b))
                })
                .then_with(|| pa.z.total_cmp(&pb.z))
                .then_with(|| pa.y.total_cmp(&pb.y))
                .then_with(|| pa.x.total_cmp(&pb.x))
                .then_with(|| a.cmp(&b))
        });
        for &j in &next {
            permutation[j] = order.len();
            order.push(j);
        }
        level = next;
    }
    Ok(BfsOrder {
        skeleton: skeleton.permuted(&permutation),
        permutation,
    })
}

/// Tokenizes a skeleton whose joints are in the unit box. Coordinates
/// outside it are clamped into the edge cells.
pub fn tokenize(skeleton: &Skeleton, max_joints: usize) -> Result<TokenSequence> {
    if skeleton.len() > max_joints {
        return Err(RigError::SequenceOverflow {
            joints: skeleton.len(),
            max: max_joints,
        });
    }
    let ordered = bfs_order(skeleton)?.skeleton;
    let mut clamped = 0;
    let tokens = ordered
        .joints
        .iter()
        .map(|j| {
            let q = quantize(&j.position)?;
            clamped += usize::from(q.clamped);
            Ok(SkeletonToken {
                qx: q.cell[0],
                qy: q.cell[1],
                qz: q.cell[2],
                parent: j.parent.unwrap_or(0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if clamped > 0 {
        log::warn!("{clamped} joints outside the unit box were clamped during tokenization");
    }
    Ok(TokenSequence {
        tokens,
        terminated: true,
        max_joints,
    })
}

/// Rebuilds a skeleton from tokens; joints land on cell centers.
pub fn detokenize(seq: &TokenSequence) -> Result<Skeleton> {
    if seq.tokens.is_empty() {
        return Err(RigError::EmptySequence);
    }
    let joints = seq
        .tokens
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let parent = match k {
                0 if t.parent == 0 => None,
                0 => {
                    return Err(RigError::ForwardParent {
                        index: 0,
                        parent: t.parent,
                    })
                }
                _ if t.parent >= k => {
                    return Err(RigError::ForwardParent {
                        index: k,
                        parent: t.parent,
                    })
                }
                _ => Some(t.parent),
            };
            Ok(Joint::new(dequantize_cell(t.cell()), parent))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Skeleton { joints, root: 0 })
}

/// Positions token `k` may select as its parent: `{0..k}` exclusive for
/// `k > 0`, and `{0}` for the root. The mask has length `k + 1`.
pub fn parent_mask(k: usize) -> Vec<bool> {
    let mut mask = vec![false; k + 1];
    if k == 0 {
        mask[0] = true;
    } else {
        mask[..k].iter_mut().for_each(|m| *m = true);
    }
    mask
}

/// Depth of every token in a decodable sequence.
pub fn token_depths(seq: &TokenSequence) -> Vec<usize> {
    let mut depth = vec![0; seq.tokens.len()];
    for (k, t) in seq.tokens.iter().enumerate().skip(1) {
        depth[k] = depth[t.parent] + 1;
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn j(x: f64, y: f64, z: f64, parent: Option<usize>) -> Joint {
        Joint::new(Vec3::new(x, y, z), parent)
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(&Vec3::zeros()).unwrap().cell, [0, 0, 0]);
        let top = quantize(&Vec3::repeat(1.0)).unwrap();
        assert_eq!(top.cell, [127, 127, 127]);
        assert!(!top.clamped);
        assert_eq!(
            quantize(&Vec3::new(0.5, 0.25, 0.999)).unwrap().cell,
            [64, 32, 127]
        );
        let out = quantize(&Vec3::new(-0.1, 1.5, 0.5)).unwrap();
        assert_eq!(out.cell, [0, 127, 64]);
        assert!(out.clamped);
        assert_eq!(
            quantize(&Vec3::new(f64::NAN, 0.0, 0.0)),
            Err(RigError::NonFinite)
        );
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize([0, 0, 0]).unwrap(), Vec3::repeat(0.00390625));
        assert_eq!(dequantize([64, 64, 64]).unwrap(), Vec3::repeat(0.50390625));
        assert!(dequantize([128, 0, 0]).is_err());
        assert!(dequantize([0, -1, 0]).is_err());
    }

    #[test]
    fn single_joint_is_identity() {
        let s = Skeleton::from_joints(vec![j(0.5, 0.5, 0.5, None)]).unwrap();
        let o = bfs_order(&s).unwrap();
        assert_eq!(o.permutation, vec![0]);
        let t = tokenize(&s, DEFAULT_MAX_JOINTS).unwrap();
        assert_eq!(
            t.tokens,
            vec![SkeletonToken {
                qx: 64,
                qy: 64,
                qz: 64,
                parent: 0
            }]
        );
    }

    #[test]
    fn lower_z_child_first() {
        let s = Skeleton::from_joints(vec![
            j(0.5, 0.5, 0.5, None),
            j(0.5, 0.5, 0.8, Some(0)),
            j(0.5, 0.5, 0.2, Some(0)),
        ])
        .unwrap();
        let o = bfs_order(&s).unwrap();
        assert_eq!(o.permutation, vec![0, 2, 1]);
        assert_abs_diff_eq!(o.skeleton.joints[1].position.z, 0.2);
    }

    #[test]
    fn chain_tokens() {
        let s = Skeleton::from_joints(vec![j(0.5, 0.5, 0.1, None), j(0.5, 0.5, 0.9, Some(0))])
            .unwrap();
        let t = tokenize(&s, DEFAULT_MAX_JOINTS).unwrap();
        let cells: Vec<_> = t.tokens.iter().map(|t| (t.cell(), t.parent)).collect();
        assert_eq!(cells, vec![([64, 64, 12], 0), ([64, 64, 115], 0)]);
    }

    #[test]
    fn overflow_is_rejected() {
        let s = Skeleton::from_joints(vec![j(0.5, 0.5, 0.1, None), j(0.5, 0.5, 0.9, Some(0))])
            .unwrap();
        assert_eq!(
            tokenize(&s, 1),
            Err(RigError::SequenceOverflow { joints: 2, max: 1 })
        );
    }

    #[test]
    fn detokenize_direct() {
        let seq = TokenSequence {
            tokens: vec![
                SkeletonToken {
                    qx: 64,
                    qy: 64,
                    qz: 64,
                    parent: 0,
                },
                SkeletonToken {
                    qx: 10,
                    qy: 64,
                    qz: 64,
                    parent: 0,
                },
            ],
            terminated: true,
            max_joints: DEFAULT_MAX_JOINTS,
        };
        let s = detokenize(&seq).unwrap();
        assert_eq!(s.root, 0);
        assert_eq!(s.joints[0].parent, None);
        assert_eq!(s.joints[1].parent, Some(0));
        assert_abs_diff_eq!(s.joints[1].position.x, 10.5 / 128.0);
    }

    #[test]
    fn detokenize_rejects_forward_parent() {
        let tok = |parent| SkeletonToken {
            qx: 1,
            qy: 1,
            qz: 1,
            parent,
        };
        let seq = TokenSequence {
            tokens: vec![tok(0), tok(1)],
            terminated: false,
            max_joints: 4,
        };
        assert_eq!(
            detokenize(&seq),
            Err(RigError::ForwardParent {
                index: 1,
                parent: 1
            })
        );
    }

    #[test]
    fn parent_mask_examples() {
        assert_eq!(parent_mask(0), vec![true]);
        assert_eq!(parent_mask(1), vec![true, false]);
        assert_eq!(parent_mask(5), vec![true, true, true, true, true, false]);
    }

    #[test]
    fn not_a_tree_is_rejected() {
        let s = Skeleton {
            joints: vec![j(0.1, 0.1, 0.1, Some(1)), j(0.2, 0.2, 0.2, Some(0))],
            root: 0,
        };
        assert!(matches!(bfs_order(&s), Err(RigError::NotATree(_))));
    }
}
