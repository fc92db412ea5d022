//! Skinning mathematics: point–bone softmax weights, the soft cross-entropy
//! loss, a distance-based baseline skinner, forward kinematics and linear
//! blend skinning.

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion};

use crate::error::{Result, RigError};
use crate::geometry::{pairwise_sum, point_segment_distance, Vec3};
use crate::model::{Mesh, Skeleton, SkinningMatrix};

/// Lower clamp applied to predicted probabilities inside logarithms.
pub const LOG_CLAMP: f64 = 1e-12;
const QUATERNION_TOLERANCE: f64 = 1e-6;

/// Row-major matrix of embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(RigError::InvalidArgument("embedding dimension must be positive".into()));
        }
        if values.len() != rows * dim {
            return Err(RigError::ShapeMismatch(format!(
                "{} values for {rows} rows of dimension {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RigError::NonFinite);
        }
        Ok(Self { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(RigError::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    logits.iter_mut().for_each(|l| *l /= sum);
}

/// `softmax_b(<p_i, b_b> / sqrt(D))` for every point `i`, over all bones.
pub fn skinning_from_embeddings(
    points: &EmbeddingMatrix,
    bones: &EmbeddingMatrix,
) -> Result<SkinningMatrix> {
    if bones.rows() == 0 {
        return Err(RigError::NoBones);
    }
    if points.dim() != bones.dim() {
        return Err(RigError::DimensionMismatch {
            expected: bones.dim(),
            found: points.dim(),
        });
    }
    let scale = 1.0 / (points.dim() as f64).sqrt();
    let nb = bones.rows();
    let mut out = SkinningMatrix::zeros(points.rows(), nb);
    for i in 0..points.rows() {
        let p = points.row(i);
        let row = out.row_mut(i);
        for (b, logit) in row.iter_mut().enumerate() {
            *logit = p.iter().zip(bones.row(b)).map(|(x, y)| x * y).sum::<f64>() * scale;
        }
        softmax_in_place(row);
    }
    Ok(out)
}

/// Mean over rows of `-Σ_b w_ref log max(w_pred, 1e-12)`.
pub fn soft_cross_entropy(reference: &SkinningMatrix, predicted: &SkinningMatrix) -> Result<f64> {
    if reference.rows() != predicted.rows() || reference.cols() != predicted.cols() {
        return Err(RigError::ShapeMismatch(format!(
            "reference {}x{} vs predicted {}x{}",
            reference.rows(),
            reference.cols(),
            predicted.rows(),
            predicted.cols()
        )));
    }
    if reference.rows() == 0 {
        return Ok(0.0);
    }
    let per_row: Vec<f64> = reference
        .iter_rows()
        .zip(predicted.iter_rows())
        .map(|(r, p)| {
            -r.iter()
                .zip(p)
                .map(|(w, q)| if *w == 0.0 { 0.0 } else { w * q.max(LOG_CLAMP).ln() })
                .sum::<f64>()
        })
        .collect();
    Ok(pairwise_sum(&per_row) / reference.rows() as f64)
}

/// Baseline skinner: `softmax_b(-sharpness * dist(v, bone_b))`.
pub fn heuristic_skin(mesh: &Mesh, skeleton: &Skeleton, sharpness: f64) -> Result<SkinningMatrix> {
    if !(sharpness > 0.0) {
        return Err(RigError::InvalidArgument("sharpness must be positive".into()));
    }
    let segments = skeleton.bone_segments();
    if segments.is_empty() {
        return Err(RigError::NoBones);
    }
    let mut out = SkinningMatrix::zeros(mesh.vertices.len(), segments.len());
    for (i, v) in mesh.vertices.iter().enumerate() {
        let row = out.row_mut(i);
        for (b, (h, t)) in segments.iter().enumerate() {
            row[b] = -sharpness * point_segment_distance(v, h, t);
        }
        softmax_in_place(row);
    }
    Ok(out)
}

/// Keeps the `k` largest weights of each row (ties to the lower column) and
/// renormalizes them to sum to 1.
pub fn prune_top_k(weights: &SkinningMatrix, k: usize) -> SkinningMatrix {
    let mut out = weights.clone();
    if k >= weights.cols() {
        return out;
    }
    for i in 0..weights.rows() {
        let row = out.row_mut(i);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for &c in &order[k..] {
            row[c] = 0.0;
        }
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|w| *w /= sum);
        } else {
            let u = 1.0 / k as f64;
            for &c in &order[..k] {
                row[c] = u;
            }
        }
    }
    out
}

/// Per-joint local rotations plus an optional root translation.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSpec {
    pub rotations: Vec<UnitQuaternion<f64>>,
    pub root_translation: Vec3,
}

impl PoseSpec {
    pub fn identity(joints: usize) -> Self {
        Self {
            rotations: vec![UnitQuaternion::identity(); joints],
            root_translation: Vec3::zeros(),
        }
    }

    /// Builds a pose from raw `(w, x, y, z)` quaternions, which must be unit
    /// length within 1e-6.
    pub fn from_quaternions(quats: &[[f64; 4]], root_translation: Vec3) -> Result<Self> {
        let rotations = quats
            .iter()
            .map(|&q| unit_quaternion(q))
            .collect::<Result<_>>()?;
        Ok(Self {
            rotations,
            root_translation,
        })
    }
}

pub fn unit_quaternion([w, x, y, z]: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let q = Quaternion::new(w, x, y, z);
    if !q.coords.iter().all(|c| c.is_finite()) {
        return Err(RigError::NonFinite);
    }
    if (q.norm() - 1.0).abs() > QUATERNION_TOLERANCE {
        return Err(RigError::InvalidArgument(format!(
            "quaternion norm {} is not 1",
            q.norm()
        )));
    }
    Ok(UnitQuaternion::new_normalize(q))
}

/// Rest and posed world transforms for every bone, taken from its head
/// joint. Rest transforms sit at the head joint with identity rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneTransforms {
    pub rest: Vec<Isometry3<f64>>,
    pub posed: Vec<Isometry3<f64>>,
    /// Posed world transform of every joint.
    pub joint_world: Vec<Isometry3<f64>>,
}

impl BoneTransforms {
    /// `posed_b ∘ rest_b⁻¹` for every bone.
    pub fn skinning_transforms(&self) -> Vec<Isometry3<f64>> {
        self.posed
            .iter()
            .zip(&self.rest)
            .map(|(p, r)| p * r.inverse())
            .collect()
    }
}

pub fn forward_kinematics(skeleton: &Skeleton, pose: &PoseSpec) -> Result<BoneTransforms> {
    let tree = skeleton.tree()?;
    let n = skeleton.len();
    if pose.rotations.len() != n {
        return Err(RigError::ShapeMismatch(format!(
            "pose has {} rotations for {n} joints",
            pose.rotations.len()
        )));
    }
    let mut order = Vec::with_capacity(n);
    order.push(tree.root);
    let mut head = 0;
    while head < order.len() {
        let j = order[head];
        order.extend(tree.children[j].iter().copied());
        head += 1;
    }

    // Accumulate displacements from rest (`world_j ∘ rest_j⁻¹`) so that the
    // identity pose reproduces rest transforms bit for bit.
    let mut delta = vec![Isometry3::identity(); n];
    for &j in &order {
        let joint = &skeleton.joints[j];
        let at = Translation3::from(joint.position);
        let local = at * pose.rotations[j] * at.inverse();
        delta[j] = match joint.parent {
            None => Translation3::from(pose.root_translation) * local,
            Some(p) => delta[p] * local,
        };
    }
    let world: Vec<Isometry3<f64>> = delta
        .iter()
        .zip(&skeleton.joints)
        .map(|(d, joint)| d * Translation3::from(joint.position))
        .collect();
    let bones = skeleton.bones();
    let rest = bones
        .iter()
        .map(|b| Isometry3::translation(
            skeleton.joints[b.head].position.x,
            skeleton.joints[b.head].position.y,
            skeleton.joints[b.head].position.z,
        ))
        .collect();
    let posed = bones.iter().map(|b| world[b.head]).collect();
    Ok(BoneTransforms {
        rest,
        posed,
        joint_world: world,
    })
}

/// Linear blend skinning: `v' = Σ_b w[v, b] (posed_b ∘ rest_b⁻¹)(v)`.
pub fn lbs_pose(mesh: &Mesh, weights: &SkinningMatrix, transforms: &BoneTransforms) -> Result<Mesh> {
    if weights.rows() != mesh.vertices.len() || weights.cols() != transforms.posed.len() {
        return Err(RigError::ShapeMismatch(format!(
            "{}x{} weights for {} vertices and {} bones",
            weights.rows(),
            weights.cols(),
            mesh.vertices.len(),
            transforms.posed.len()
        )));
    }
    let skin = transforms.skinning_transforms();
    let vertices = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = nalgebra::Point3::from(*v);
            weights
                .row(i)
                .iter()
                .zip(&skin)
                .filter(|(w, _)| **w != 0.0)
                .fold(Vec3::zeros(), |acc, (w, m)| acc + (m * p).coords * *w)
        })
        .collect();
    Ok(Mesh {
        vertices,
        faces: mesh.faces.clone(),
        normals: None,
    })
}
