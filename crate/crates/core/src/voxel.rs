//! Sparse voxelization of surfaces and bone segments, and skinning-weighted
//! bone feature pooling.
//!
//! Cells are half-open: a point `p` belongs to voxel `floor(p * res)`, with
//! the upper boundary `p = 1` clamped into the last cell. A voxel is active
//! when the surface or segment has at least one point inside its cell.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Result, RigError};
use crate::geometry::Vec3;
use crate::model::{Mesh, RiggedAsset};

pub const DEFAULT_RESOLUTION: u32 = 64;
pub const DEFAULT_POOL_EPSILON: f64 = 1e-8;

const UNIT_BOX_SLACK: f64 = 1e-6;
/// Shrink applied to the upper faces of interior cells in the triangle test.
const HALF_OPEN_SHRINK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelCoord {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl VoxelCoord {
    pub fn new(i: u32, j: u32, k: u32) -> Self {
        Self { i, j, k }
    }

    pub fn as_array(&self) -> [u32; 3] {
        [self.i, self.j, self.k]
    }

    fn from_array(a: [u32; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Cell containing `p` (unit-box coordinates) at `resolution`.
pub fn voxel_of_point(p: &Vec3, resolution: u32) -> VoxelCoord {
    let r = resolution as f64;
    let c = |x: f64| (x * r).floor().clamp(0.0, r - 1.0) as u32;
    VoxelCoord::new(c(p.x), c(p.y), c(p.z))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancySet {
    pub resolution: u32,
    pub active: BTreeSet<VoxelCoord>,
}

impl OccupancySet {
    pub fn new(resolution: u32) -> Self {
        Self {
            resolution,
            active: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains(&self, v: &VoxelCoord) -> bool {
        self.active.contains(v)
    }

    pub fn insert(&mut self, v: VoxelCoord) {
        debug_assert!(v.i < self.resolution && v.j < self.resolution && v.k < self.resolution);
        self.active.insert(v);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub feature: Vec<f64>,
    /// Number of bones whose rasterization covers this voxel.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatureGrid {
    pub resolution: u32,
    pub dim: usize,
    pub entries: BTreeMap<VoxelCoord, GridEntry>,
}

impl SparseFeatureGrid {
    pub fn new(resolution: u32, dim: usize) -> Self {
        Self {
            resolution,
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_finite(p: &Vec3) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(RigError::NonFinite)
    }
}

/// Voxels intersected by the segment `head → tail`, found by parametric
/// grid traversal. Endpoints are clamped into the unit box.
pub fn rasterize_bone(head: &Vec3, tail: &Vec3, resolution: u32) -> Result<OccupancySet> {
    check_finite(head)?;
    check_finite(tail)?;
    let res = resolution as f64;
    let g0 = head.map(|c| c.clamp(0.0, 1.0) * res);
    let g1 = tail.map(|c| c.clamp(0.0, 1.0) * res);
    let d = g1 - g0;
    let last = resolution as i64 - 1;
    let cell_of = |g: &Vec3| -> [i64; 3] {
        [0, 1, 2].map(|a| (g[a].floor() as i64).clamp(0, last))
    };

    let mut out = OccupancySet::new(resolution);
    let mut cur = cell_of(&g0);
    let end = cell_of(&g1);
    let to_coord = |c: [i64; 3]| VoxelCoord::from_array(c.map(|x| x as u32));
    out.insert(to_coord(cur));

    // Parameter at which the segment crosses the next boundary on `axis`.
    let crossing = |axis: usize, cell: i64| -> f64 {
        if d[axis] > 0.0 {
            if cell >= last {
                f64::INFINITY
            } else {
                ((cell + 1) as f64 - g0[axis]) / d[axis]
            }
        } else if d[axis] < 0.0 {
            if cell <= 0 {
                f64::INFINITY
            } else {
                (cell as f64 - g0[axis]) / d[axis]
            }
        } else {
            f64::INFINITY
        }
    };

    let mut t_next = [0, 1, 2].map(|a| crossing(a, cur[a]));
    let max_steps = 3 * resolution as usize + 3;
    for _ in 0..max_steps {
        let t = t_next.iter().copied().fold(f64::INFINITY, f64::min);
        if !t.is_finite() || t > 1.0 {
            break;
        }
        // A point on an upper face already belongs to the next cell; a point
        // on a lower face still belongs to the current one.
        let rising: Vec<usize> = (0..3).filter(|&a| t_next[a] == t && d[a] > 0.0).collect();
        let falling: Vec<usize> = (0..3)
            .filter(|&a| t_next[a] == t && d[a] < 0.0 && t < 1.0)
            .collect();
        if rising.is_empty() && falling.is_empty() {
            break;
        }
        for &a in &rising {
            cur[a] += 1;
        }
        out.insert(to_coord(cur));
        if !falling.is_empty() {
            for &a in &falling {
                cur[a] -= 1;
            }
            out.insert(to_coord(cur));
        }
        for &a in rising.iter().chain(&falling) {
            t_next[a] = crossing(a, cur[a]);
        }
    }
    out.insert(to_coord(end));
    Ok(out)
}

/// Active voxels of the mesh surface: cells overlapped by at least one
/// triangle (separating-axis test), plus every vertex's own cell.
pub fn voxelize_surface(mesh: &Mesh, resolution: u32) -> Result<OccupancySet> {
    for (i, v) in mesh.vertices.iter().enumerate() {
        check_finite(v)?;
        if v.iter().any(|&c| !(-UNIT_BOX_SLACK..=1.0 + UNIT_BOX_SLACK).contains(&c)) {
            return Err(RigError::Unnormalized { index: i });
        }
    }
    let res = resolution as f64;
    let last = resolution as i64 - 1;
    let per_face: Vec<Vec<VoxelCoord>> = mesh
        .faces
        .par_iter()
        .map(|face| {
            let tri = face.map(|i| mesh.vertices[i].map(|c| c.clamp(0.0, 1.0) * res));
            let mut cells: Vec<VoxelCoord> = face
                .iter()
                .map(|&i| voxel_of_point(&mesh.vertices[i], resolution))
                .collect();
            let lo = [0, 1, 2].map(|a| {
                (tri.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min).floor() as i64).clamp(0, last)
            });
            let hi = [0, 1, 2].map(|a| {
                (tri.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max).floor() as i64)
                    .clamp(0, last)
            });
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        let min = Vec3::new(i as f64, j as f64, k as f64);
                        let top = |c: i64| if c == last { 1.0 } else { 1.0 - HALF_OPEN_SHRINK };
                        let max = min + Vec3::new(top(i), top(j), top(k));
                        if triangle_box_overlap(&tri, &min, &max) {
                            cells.push(VoxelCoord::new(i as u32, j as u32, k as u32));
                        }
                    }
                }
            }
            cells
        })
        .collect();
    let mut out = OccupancySet::new(resolution);
    for v in per_face.into_iter().flatten() {
        out.insert(v);
    }
    Ok(out)
}

/// Separating-axis overlap test between a triangle and a closed box
/// (Akenine-Möller). Coordinates are taken relative to the box's minimum
/// corner so that exact face contact is decided without rounding.
pub fn triangle_box_overlap(tri: &[Vec3; 3], box_min: &Vec3, box_max: &Vec3) -> bool {
    let size = box_max - box_min;
    let v = [tri[0] - box_min, tri[1] - box_min, tri[2] - box_min];
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let separated = |axis: &Vec3| {
        let p = [axis.dot(&v[0]), axis.dot(&v[1]), axis.dot(&v[2])];
        let lo = p[0].min(p[1]).min(p[2]);
        let hi = p[0].max(p[1]).max(p[2]);
        let (mut box_lo, mut box_hi) = (0.0, 0.0);
        for a in 0..3 {
            let s = axis[a] * size[a];
            if s < 0.0 {
                box_lo += s;
            } else {
                box_hi += s;
            }
        }
        lo > box_hi || hi < box_lo
    };

    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    if axes.iter().any(&separated) {
        return false;
    }
    let n = e[0].cross(&e[1]);
    if n.norm_squared() > 0.0 && separated(&n) {
        return false;
    }
    for edge in &e {
        for unit in &axes {
            let axis = unit.cross(edge);
            if axis.norm_squared() > 0.0 && separated(&axis) {
                return false;
            }
        }
    }
    true
}

/// Skinning-weighted average of per-vertex features for one bone:
/// `Σ w_v f_v / (Σ w_v + ε)` over vertices with positive weight.
pub fn pool_bone_feature(weights: &[f64], features: &[Vec<f64>], epsilon: f64) -> Result<Vec<f64>> {
    if weights.len() != features.len() {
        return Err(RigError::DimensionMismatch {
            expected: weights.len(),
            found: features.len(),
        });
    }
    let dim = features.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (v, (&w, f)) in weights.iter().zip(features).enumerate() {
        if f.len() != dim {
            return Err(RigError::DimensionMismatch {
                expected: dim,
                found: f.len(),
            });
        }
        if w < 0.0 {
            return Err(RigError::NegativeWeight {
                row: v,
                col: 0,
                value: w,
            });
        }
        if w > 0.0 {
            total += w;
            acc.iter_mut().zip(f).for_each(|(a, x)| *a += w * x);
        }
    }
    let denom = total + epsilon;
    if denom > 0.0 {
        acc.iter_mut().for_each(|a| *a /= denom);
    }
    Ok(acc)
}

/// Bone features for every skinning column of `asset`.
pub fn asset_bone_features(
    asset: &RiggedAsset,
    vertex_features: &[Vec<f64>],
    epsilon: f64,
) -> Result<Vec<Vec<f64>>> {
    (0..asset.skinning.cols())
        .map(|b| pool_bone_feature(&asset.skinning.column(b), vertex_features, epsilon))
        .collect()
}

/// Rasterizes each bone and attaches its feature to the covered voxels;
/// voxels covered by several bones carry the mean of their features.
pub fn build_skeleton_grid(
    bones: &[(Vec3, Vec3)],
    bone_features: &[Vec<f64>],
    resolution: u32,
) -> Result<SparseFeatureGrid> {
    if bones.len() != bone_features.len() {
        return Err(RigError::DimensionMismatch {
            expected: bones.len(),
            found: bone_features.len(),
        });
    }
    let dim = bone_features.first().map_or(0, Vec::len);
    if let Some(bad) = bone_features.iter().find(|f| f.len() != dim) {
        return Err(RigError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let cover: Vec<OccupancySet> = bones
        .par_iter()
        .map(|(h, t)| rasterize_bone(h, t, resolution))
        .collect::<Result<_>>()?;

    let mut grid = SparseFeatureGrid::new(resolution, dim);
    for (set, f) in cover.iter().zip(bone_features) {
        for v in &set.active {
            let e = grid.entries.entry(*v).or_insert_with(|| GridEntry {
                feature: vec![0.0; dim],
                count: 0,
            });
            e.feature.iter_mut().zip(f).for_each(|(a, x)| *a += x);
            e.count += 1;
        }
    }
    for e in grid.entries.values_mut() {
        let n = e.count as f64;
        e.feature.iter_mut().for_each(|a| *a /= n);
    }
    Ok(grid)
}
