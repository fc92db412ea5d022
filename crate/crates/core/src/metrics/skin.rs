//! Skinning comparison across rigs with different skeletons: surface
//! sampling, transport-based weight alignment and per-point distances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spatial::{KdTree, TriangleBvh};
use super::transport::{euclidean_cost, solve_ot, uniform_mass, TransportPlan};
use crate::error::{Result, RigError};
use crate::geometry::{barycentric_point, pairwise_sum, triangle_area, Vec3};
use crate::model::{renormalize_skinning, Mesh, RiggedAsset, Skeleton, SkinningMatrix};

pub const DEFAULT_SAMPLE_POINTS: usize = 8192;
pub const DEFAULT_KL_EPSILON: f64 = 1e-8;

/// How a predicted surface sample finds its reference weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointPairing {
    /// Closest point on the reference surface, weights interpolated there.
    #[default]
    ClosestSurfacePoint,
    /// Weights of the nearest reference vertex.
    NearestVertex,
}

/// Which point stands in for a bone during transport alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoneAnchor {
    /// The bone's child joint, so sibling bones stay distinct.
    #[default]
    Tail,
    /// The bone's parent joint.
    Head,
    /// Transport over bone midpoints instead of joints.
    Midpoint,
}

impl PointPairing {
    pub fn name(self) -> &'static str {
        match self {
            PointPairing::ClosestSurfacePoint => "closest-surface-point",
            PointPairing::NearestVertex => "nearest-vertex",
        }
    }
}

impl BoneAnchor {
    pub fn name(self) -> &'static str {
        match self {
            BoneAnchor::Tail => "tail",
            BoneAnchor::Head => "head",
            BoneAnchor::Midpoint => "midpoint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkinMetricConfig {
    pub n_points: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub pairing: PointPairing,
    pub anchor: BoneAnchor,
}

impl Default for SkinMetricConfig {
    fn default() -> Self {
        Self {
            n_points: DEFAULT_SAMPLE_POINTS,
            epsilon: DEFAULT_KL_EPSILON,
            seed: 0,
            pairing: PointPairing::default(),
            anchor: BoneAnchor::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkinScores {
    pub l1: f64,
    pub l2: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub face: usize,
    pub bary: [f64; 3],
    pub point: Vec3,
}

/// Area-weighted uniform samples on the mesh surface, reproducible from
/// `seed`.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    if mesh.faces.is_empty() {
        return Err(RigError::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        let (a, b, c) = mesh.triangle(f);
        total += triangle_area(&a, &b, &c);
        cumulative.push(total);
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(RigError::ZeroExtent);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let face = cumulative
                .partition_point(|&c| c <= target)
                .min(mesh.faces.len() - 1);
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            let bary = [1.0 - r1, r1 * (1.0 - r2), r1 * r2];
            let (a, b, c) = mesh.triangle(face);
            SurfaceSample {
                face,
                bary,
                point: barycentric_point(&bary, &a, &b, &c),
            }
        })
        .collect();
    Ok(samples)
}

/// Barycentric blend of the three vertex rows of `face`.
pub fn interpolate_weights(weights: &SkinningMatrix, mesh: &Mesh, face: usize, bary: &[f64; 3]) -> Vec<f64> {
    let [a, b, c] = mesh.faces[face];
    let (ra, rb, rc) = (weights.row(a), weights.row(b), weights.row(c));
    (0..weights.cols())
        .map(|k| bary[0] * ra[k] + bary[1] * rb[k] + bary[2] * rc[k])
        .collect()
}

/// Anchor points for transport and, per bone, the index of its anchor.
pub fn bone_anchors(skeleton: &Skeleton, anchor: BoneAnchor) -> (Vec<Vec3>, Vec<usize>) {
    let bones = skeleton.bones();
    match anchor {
        BoneAnchor::Tail => (skeleton.positions(), bones.iter().map(|b| b.tail).collect()),
        BoneAnchor::Head => (skeleton.positions(), bones.iter().map(|b| b.head).collect()),
        BoneAnchor::Midpoint => (
            skeleton
                .bone_segments()
                .iter()
                .map(|(a, b)| (a + b) * 0.5)
                .collect(),
            (0..bones.len()).collect(),
        ),
    }
}

/// Maps predicted bone weights onto reference bones through the row-normalized
/// transport plan: `aligned[v, r] = Σ_p M[map_pred[p], map_ref[r]] w[v, p]`,
/// followed by row renormalization.
pub fn align_skinning(
    pred_weights: &SkinningMatrix,
    plan: &TransportPlan,
    bone_to_point_pred: &[usize],
    bone_to_point_ref: &[usize],
) -> Result<SkinningMatrix> {
    if pred_weights.cols() != bone_to_point_pred.len() {
        return Err(RigError::DimensionMismatch {
            expected: bone_to_point_pred.len(),
            found: pred_weights.cols(),
        });
    }
    if bone_to_point_ref.is_empty() {
        return Err(RigError::NoBones);
    }
    for (map, len) in [(bone_to_point_pred, plan.rows()), (bone_to_point_ref, plan.cols())] {
        if let Some(&index) = map.iter().find(|&&i| i >= len) {
            return Err(RigError::IndexOutOfRange { index, len });
        }
    }
    let row_mass = plan.row_sums();
    // Sparse bone-to-bone map: the plan has few nonzeros per row.
    let bone_map: Vec<Vec<(usize, f64)>> = bone_to_point_pred
        .iter()
        .map(|&p| {
            bone_to_point_ref
                .iter()
                .enumerate()
                .filter_map(|(r, &q)| {
                    let m = plan.get(p, q);
                    (m > 0.0).then(|| (r, m / row_mass[p]))
                })
                .collect()
        })
        .collect();
    let mut aligned = SkinningMatrix::zeros(pred_weights.rows(), bone_to_point_ref.len());
    for v in 0..pred_weights.rows() {
        let src = pred_weights.row(v);
        let dst = aligned.row_mut(v);
        for (p, links) in bone_map.iter().enumerate() {
            let w = src[p];
            if w == 0.0 {
                continue;
            }
            for &(r, m) in links {
                dst[r] += m * w;
            }
        }
    }
    renormalize_skinning(&aligned, 0.0)
}

/// Transport plan between the bone anchors of two skeletons with Euclidean
/// ground cost and uniform masses.
pub fn alignment_plan(
    pred: &Skeleton,
    reference: &Skeleton,
    anchor: BoneAnchor,
) -> Result<(TransportPlan, Vec<usize>, Vec<usize>)> {
    let (pred_points, pred_map) = bone_anchors(pred, anchor);
    let (ref_points, ref_map) = bone_anchors(reference, anchor);
    if pred_points.is_empty() || ref_points.is_empty() {
        return Err(RigError::NoBones);
    }
    let cost = euclidean_cost(&pred_points, &ref_points);
    let plan = solve_ot(&cost, &uniform_mass(pred_points.len()), &uniform_mass(ref_points.len()))?;
    Ok((plan, pred_map, ref_map))
}

/// Per-point `(l1, l2, kl)` between an aligned prediction and a reference
/// row; KL(reference ‖ prediction) after additive `epsilon` smoothing.
pub fn point_distances(aligned: &[f64], reference: &[f64], epsilon: f64) -> (f64, f64, f64) {
    let mut l1 = 0.0;
    let mut sq = 0.0;
    for (a, r) in aligned.iter().zip(reference) {
        let d = a - r;
        l1 += d.abs();
        sq += d * d;
    }
    let zp: f64 = reference.iter().map(|r| r + epsilon).sum();
    let zq: f64 = aligned.iter().map(|a| a + epsilon).sum();
    let kl = aligned
        .iter()
        .zip(reference)
        .map(|(a, r)| {
            let p = (r + epsilon) / zp;
            let q = (a + epsilon) / zq;
            if p > 0.0 {
                p * (p / q).ln()
            } else {
                0.0
            }
        })
        .sum();
    (l1, sq.sqrt(), kl)
}

/// Mean per-point skinning distances between a predicted and a reference
/// asset, both already normalized.
pub fn skin_metrics(pred: &RiggedAsset, reference: &RiggedAsset, config: &SkinMetricConfig) -> Result<SkinScores> {
    if pred.mesh.vertices.is_empty() || reference.mesh.vertices.is_empty() {
        return Err(RigError::EmptyMesh);
    }
    if config.n_points == 0 {
        return Err(RigError::InvalidArgument("n_points must be positive".into()));
    }
    for asset in [pred, reference] {
        if asset.skinning.rows() != asset.mesh.vertices.len() || asset.skinning.cols() != asset.skeleton.bone_count() {
            return Err(RigError::ShapeMismatch(format!(
                "asset {}: skinning is {}x{} for {} vertices and {} bones",
                asset.id,
                asset.skinning.rows(),
                asset.skinning.cols(),
                asset.mesh.vertices.len(),
                asset.skeleton.bone_count()
            )));
        }
    }
    let samples = sample_surface(&pred.mesh, config.n_points, config.seed)?;
    let mut interpolated = SkinningMatrix::zeros(samples.len(), pred.skinning.cols());
    for (i, s) in samples.iter().enumerate() {
        interpolated
            .row_mut(i)
            .copy_from_slice(&interpolate_weights(&pred.skinning, &pred.mesh, s.face, &s.bary));
    }
    let (plan, pred_map, ref_map) = alignment_plan(&pred.skeleton, &reference.skeleton, config.anchor)?;
    let aligned = align_skinning(&interpolated, &plan, &pred_map, &ref_map)?;

    let reference_rows: Vec<Vec<f64>> = match config.pairing {
        PointPairing::ClosestSurfacePoint => {
            if reference.mesh.faces.is_empty() {
                return Err(RigError::EmptyMesh);
            }
            let bvh = TriangleBvh::new(&reference.mesh);
            samples
                .iter()
                .map(|s| {
                    let hit = bvh.closest(&s.point).expect("non-empty mesh");
                    interpolate_weights(&reference.skinning, &reference.mesh, hit.face, &hit.bary)
                })
                .collect()
        }
        PointPairing::NearestVertex => {
            let tree = KdTree::new(&reference.mesh.vertices);
            samples
                .iter()
                .map(|s| {
                    let (v, _) = tree.nearest(&s.point).expect("non-empty mesh");
                    reference.skinning.row(v).to_vec()
                })
                .collect()
        }
    };

    let n = samples.len();
    let (mut l1, mut l2, mut kl) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (i, r) in reference_rows.iter().enumerate() {
        let (a, b, c) = point_distances(aligned.row(i), r, config.epsilon);
        l1.push(a);
        l2.push(b);
        kl.push(c);
    }
    Ok(SkinScores {
        l1: pairwise_sum(&l1) / n as f64,
        l2: pairwise_sum(&l2) / n as f64,
        kl: pairwise_sum(&kl) / n as f64,
    })
}
