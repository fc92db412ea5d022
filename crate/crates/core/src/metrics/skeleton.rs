//! Skeleton distances: joint-to-joint, joint-to-bone and bone-to-bone
//! Chamfer metrics.

use crate::error::{Result, RigError};
use crate::geometry::{pairwise_sum, point_segment_distance, Vec3};

pub type Segment = (Vec3, Vec3);

pub const DEFAULT_SAMPLES_PER_BONE: usize = 32;

fn mean_min_point_distance(from: &[Vec3], to: &[Vec3]) -> f64 {
    let mins: Vec<f64> = from
        .iter()
        .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .collect();
    pairwise_sum(&mins) / from.len() as f64
}

fn mean_min_segment_distance(from: &[Vec3], to: &[Segment]) -> f64 {
    let mins: Vec<f64> = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|(a, b)| point_segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    pairwise_sum(&mins) / from.len() as f64
}

/// Symmetric Chamfer distance between joint sets, averaging both directions.
pub fn chamfer_j2j(pred: &[Vec3], reference: &[Vec3]) -> Result<f64> {
    if pred.is_empty() || reference.is_empty() {
        return Err(RigError::EmptyJointSet);
    }
    Ok(0.5 * (mean_min_point_distance(pred, reference) + mean_min_point_distance(reference, pred)))
}

/// Joints of each rig against the bones of the other, averaged.
pub fn j2b(
    pred_joints: &[Vec3],
    pred_bones: &[Segment],
    ref_joints: &[Vec3],
    ref_bones: &[Segment],
) -> Result<f64> {
    if pred_joints.is_empty() || ref_joints.is_empty() {
        return Err(RigError::EmptyJointSet);
    }
    if pred_bones.is_empty() || ref_bones.is_empty() {
        return Err(RigError::EmptyBoneSet);
    }
    Ok(0.5
        * (mean_min_segment_distance(pred_joints, ref_bones)
            + mean_min_segment_distance(ref_joints, pred_bones)))
}

/// `n` evenly spaced points on each bone, endpoints included.
pub fn sample_bones(bones: &[Segment], samples_per_bone: usize) -> Vec<Vec3> {
    let last = (samples_per_bone - 1) as f64;
    bones
        .iter()
        .flat_map(|(a, b)| (0..samples_per_bone).map(move |s| a + (b - a) * (s as f64 / last)))
        .collect()
}

/// Bone-set Chamfer distance: sampled points of each set against the exact
/// segments of the other, averaged over both directions.
pub fn b2b(pred_bones: &[Segment], ref_bones: &[Segment], samples_per_bone: usize) -> Result<f64> {
    if pred_bones.is_empty() || ref_bones.is_empty() {
        return Err(RigError::EmptyBoneSet);
    }
    if samples_per_bone < 2 {
        return Err(RigError::InvalidArgument(format!(
            "samples_per_bone must be at least 2, got {samples_per_bone}"
        )));
    }
    let pred_samples = sample_bones(pred_bones, samples_per_bone);
    let ref_samples = sample_bones(ref_bones, samples_per_bone);
    Ok(0.5
        * (mean_min_segment_distance(&pred_samples, ref_bones)
            + mean_min_segment_distance(&ref_samples, pred_bones)))
}
