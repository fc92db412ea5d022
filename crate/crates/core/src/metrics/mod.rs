//! Rig evaluation: skeleton distances, transport-aligned skinning scores
//! and batch reports.

pub mod skeleton;
pub mod skin;
pub mod spatial;
pub mod transport;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::geometry::point_segment_distance;
use crate::error::Result;
use crate::model::{normalize_unit_box, RiggedAsset};
pub use skeleton::{b2b, chamfer_j2j, j2b, sample_bones, Segment, DEFAULT_SAMPLES_PER_BONE};
pub use skin::{
    align_skinning, alignment_plan, bone_anchors, point_distances, sample_surface, skin_metrics, BoneAnchor,
    PointPairing, SkinMetricConfig, SkinScores, SurfaceSample,
};
pub use transport::{euclidean_cost, solve_ot, uniform_mass, TransportPlan};

pub const CHAMFER_CONVENTION: &str = "mean of both directions";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub samples_per_bone: usize,
    #[serde(flatten)]
    pub skin: SkinMetricConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples_per_bone: DEFAULT_SAMPLES_PER_BONE,
            skin: SkinMetricConfig::default(),
        }
    }
}

/// Scores for one asset pair. Skeleton distances are in normalized units,
/// the `_x100` fields are the same values scaled by 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub id: String,
    pub j2j: f64,
    pub j2b: f64,
    pub b2b: f64,
    pub j2j_x100: f64,
    pub j2b_x100: f64,
    pub b2b_x100: f64,
    /// Absent when either asset carries no skinning or has no bones.
    pub skin: Option<SkinScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: EvalConfig,
    pub chamfer_convention: String,
    pub record: MetricRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub pairs: usize,
    pub j2j_x100: f64,
    pub j2b_x100: f64,
    pub b2b_x100: f64,
    pub skinned_pairs: usize,
    pub skin: Option<SkinScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub config: EvalConfig,
    pub chamfer_convention: String,
    pub records: Vec<MetricRecord>,
    pub aggregate: Aggregate,
}

/// Skeleton distances between two rigs in the given coordinates.
pub fn skeleton_distances(pred: &RiggedAsset, reference: &RiggedAsset, samples_per_bone: usize) -> Result<(f64, f64, f64)> {
    let pj = pred.skeleton.positions();
    let rj = reference.skeleton.positions();
    let pb = pred.skeleton.metric_segments();
    let rb = reference.skeleton.metric_segments();
    Ok((
        chamfer_j2j(&pj, &rj)?,
        j2b(&pj, &pb, &rj, &rb)?,
        b2b(&pb, &rb, samples_per_bone)?,
    ))
}

/// Record for one pair under `id`, normalizing both assets independently.
/// A prediction without a mesh is placed on the reference mesh.
pub fn evaluate_record(id: &str, pred: &RiggedAsset, reference: &RiggedAsset, config: &EvalConfig) -> Result<MetricRecord> {
    let (pred, _) = if pred.mesh.vertices.is_empty() && !reference.mesh.vertices.is_empty() {
        let mut on_reference = pred.clone();
        on_reference.mesh = reference.mesh.clone();
        normalize_unit_box(&on_reference)?
    } else {
        normalize_unit_box(pred)?
    };
    let (reference, _) = normalize_unit_box(reference)?;
    let (j2j, j2b, b2b) = skeleton_distances(&pred, &reference, config.samples_per_bone)?;
    let skinned = |a: &RiggedAsset| a.has_skinning() && a.skeleton.bone_count() > 0;
    let skin = if skinned(&pred) && skinned(&reference) {
        Some(skin_metrics(&pred, &reference, &config.skin)?)
    } else {
        None
    };
    Ok(MetricRecord {
        id: id.to_string(),
        j2j,
        j2b,
        b2b,
        j2j_x100: j2j * 100.0,
        j2b_x100: j2b * 100.0,
        b2b_x100: b2b * 100.0,
        skin,
    })
}

/// Normalizes both assets independently and computes every metric.
pub fn evaluate_pair(pred: &RiggedAsset, reference: &RiggedAsset, config: &EvalConfig) -> Result<MetricReport> {
    Ok(MetricReport {
        config: *config,
        chamfer_convention: CHAMFER_CONVENTION.into(),
        record: evaluate_record(&reference.id, pred, reference, config)?,
    })
}

/// One pair of a batch: `(id, prediction, reference)`.
pub type EvalPair = (String, RiggedAsset, RiggedAsset);

/// Scores all pairs in parallel. Records are sorted by id and aggregated in
/// that order, so the report does not depend on the thread count.
pub fn evaluate_batch(pairs: &[EvalPair], config: &EvalConfig) -> Result<BatchReport> {
    let records = pairs
        .par_iter()
        .map(|(id, pred, reference)| evaluate_record(id, pred, reference, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchReport::from_records(records, config))
}

impl BatchReport {
    /// Sorts records by id and aggregates them in that order.
    pub fn from_records(mut records: Vec<MetricRecord>, config: &EvalConfig) -> Self {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        Self {
            config: *config,
            chamfer_convention: CHAMFER_CONVENTION.into(),
            aggregate: aggregate(&records),
            records,
        }
    }
}

/// Means over records in their given order.
pub fn aggregate(records: &[MetricRecord]) -> Aggregate {
    let mean = |f: &dyn Fn(&MetricRecord) -> f64| {
        if records.is_empty() {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / records.len() as f64
        }
    };
    let skinned: Vec<SkinScores> = records.iter().filter_map(|r| r.skin).collect();
    let skin = (!skinned.is_empty()).then(|| {
        let n = skinned.len() as f64;
        SkinScores {
            l1: skinned.iter().map(|s| s.l1).sum::<f64>() / n,
            l2: skinned.iter().map(|s| s.l2).sum::<f64>() / n,
            kl: skinned.iter().map(|s| s.kl).sum::<f64>() / n,
        }
    });
    Aggregate {
        pairs: records.len(),
        j2j_x100: mean(&|r| r.j2j_x100),
        j2b_x100: mean(&|r| r.j2b_x100),
        b2b_x100: mean(&|r| r.b2b_x100),
        skinned_pairs: skinned.len(),
        skin,
    }
}
