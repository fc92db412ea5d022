//! Rigged asset data model: meshes, joint trees, skinning matrices,
//! validation and unit-box normalization.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Result, RigError};
use crate::geometry::{Aabb, Vec3};

const NORMAL_TOLERANCE: f64 = 1e-6;
const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub normals: Option<Vec<Vec3>>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        Self {
            vertices,
            faces,
            normals: None,
        }
    }

    pub fn triangle(&self, face: usize) -> (Vec3, Vec3, Vec3) {
        let [a, b, c] = self.faces[face];
        (self.vertices[a], self.vertices[b], self.vertices[c])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub position: Vec3,
    pub parent: Option<usize>,
    pub name: Option<String>,
}

impl Joint {
    pub fn new(position: Vec3, parent: Option<usize>) -> Self {
        Self {
            position,
            parent,
            name: None,
        }
    }

    pub fn named(name: impl Into<String>, position: Vec3, parent: Option<usize>) -> Self {
        Self {
            position,
            parent,
            name: Some(name.into()),
        }
    }
}

/// A directed bone from the `head` (parent) joint to the `tail` (child) joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bone {
    pub head: usize,
    pub tail: usize,
}

/// Parent/child structure of a validated joint tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeInfo {
    pub root: usize,
    pub children: Vec<Vec<usize>>,
    pub depth: Vec<usize>,
}

/// Joint tree. Bones are derived: one per non-root joint, ordered by the
/// tail joint's index.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub joints: Vec<Joint>,
    pub root: usize,
}

impl Skeleton {
    /// Builds a skeleton whose root is the unique parentless joint.
    pub fn from_joints(joints: Vec<Joint>) -> Result<Self> {
        let roots: Vec<usize> = joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.parent.is_none())
            .map(|(i, _)| i)
            .collect();
        match roots.as_slice() {
            [root] => {
                let s = Self {
                    joints,
                    root: *root,
                };
                s.tree()?;
                Ok(s)
            }
            [] => Err(RigError::NotATree("no root".into())),
            _ => Err(RigError::NotATree("multiple roots".into())),
        }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.joints.iter().map(|j| j.position).collect()
    }

    pub fn bones(&self) -> Vec<Bone> {
        self.joints
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.parent.map(|p| Bone { head: p, tail: i }))
            .collect()
    }

    pub fn bone_count(&self) -> usize {
        self.joints.iter().filter(|j| j.parent.is_some()).count()
    }

    pub fn bone_segments(&self) -> Vec<(Vec3, Vec3)> {
        self.bones()
            .iter()
            .map(|b| (self.joints[b.head].position, self.joints[b.tail].position))
            .collect()
    }

    /// Bone segments for distance metrics: a lone root contributes a
    /// zero-length bone at its own position.
    pub fn metric_segments(&self) -> Vec<(Vec3, Vec3)> {
        let segs = self.bone_segments();
        if segs.is_empty() && !self.joints.is_empty() {
            let p = self.joints[self.root.min(self.joints.len() - 1)].position;
            vec![(p, p)]
        } else {
            segs
        }
    }

    pub fn find_joint(&self, name: &str) -> Option<usize> {
        self.joints
            .iter()
            .position(|j| j.name.as_deref() == Some(name))
    }

    /// Checks that parent links form a single tree rooted at `root`.
    pub fn tree(&self) -> Result<TreeInfo> {
        let n = self.joints.len();
        if n == 0 {
            return Err(RigError::NotATree("empty skeleton".into()));
        }
        if self.root >= n {
            return Err(RigError::NotATree(format!("root {} out of range", self.root)));
        }
        let mut children = vec![Vec::new(); n];
        let mut roots = 0;
        for (i, j) in self.joints.iter().enumerate() {
            match j.parent {
                Some(p) if p >= n => {
                    return Err(RigError::NotATree(format!(
                        "joint {i} has parent {p} out of range"
                    )))
                }
                Some(p) if p == i => {
                    return Err(RigError::NotATree(format!("joint {i} is its own parent")))
                }
                Some(p) => children[p].push(i),
                None => roots += 1,
            }
        }
        if roots != 1 {
            return Err(RigError::NotATree(if roots == 0 {
                "no root".into()
            } else {
                "multiple roots".into()
            }));
        }
        if self.joints[self.root].parent.is_some() {
            return Err(RigError::NotATree("declared root has a parent".into()));
        }
        let mut depth = vec![usize::MAX; n];
        depth[self.root] = 0;
        let mut queue = VecDeque::from([self.root]);
        let mut seen = 1;
        while let Some(j) = queue.pop_front() {
            for &c in &children[j] {
                depth[c] = depth[j] + 1;
                seen += 1;
                queue.push_back(c);
            }
        }
        if seen != n {
            return Err(RigError::NotATree("parent links contain a cycle".into()));
        }
        Ok(TreeInfo {
            root: self.root,
            children,
            depth,
        })
    }

    /// Reorders joints by `perm` (old index → new index), remapping parents.
    pub fn permuted(&self, perm: &[usize]) -> Skeleton {
        let mut joints = vec![self.joints[0].clone(); self.joints.len()];
        for (old, j) in self.joints.iter().enumerate() {
            joints[perm[old]] = Joint {
                position: j.position,
                parent: j.parent.map(|p| perm[p]),
                name: j.name.clone(),
            };
        }
        Skeleton {
            joints,
            root: perm[self.root],
        }
    }
}

/// Dense row-major skinning matrix: rows are vertices (or sample points),
/// columns are bones.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinningMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SkinningMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(RigError::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(RigError::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// New matrix whose column `perm[old]` holds the old column `old`.
    pub fn permute_columns(&self, perm: &[usize]) -> SkinningMatrix {
        let mut out = SkinningMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (old, &new) in perm.iter().enumerate() {
                out.set(i, new, self.get(i, old));
            }
        }
        out
    }
}

/// Divides each row by `(row sum + epsilon)`. All-zero rows become uniform.
pub fn renormalize_skinning(weights: &SkinningMatrix, epsilon: f64) -> Result<SkinningMatrix> {
    let mut out = weights.clone();
    let cols = weights.cols();
    for i in 0..weights.rows() {
        let row = out.row_mut(i);
        if let Some((col, &value)) = row.iter().enumerate().find(|(_, w)| **w < 0.0) {
            return Err(RigError::NegativeWeight { row: i, col, value });
        }
        let sum: f64 = row.iter().sum();
        if sum == 0.0 {
            row.fill(1.0 / cols as f64);
        } else {
            let d = sum + epsilon;
            row.iter_mut().for_each(|w| *w /= d);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiggedAsset {
    pub id: String,
    pub mesh: Mesh,
    pub skeleton: Skeleton,
    pub skinning: SkinningMatrix,
}

impl RiggedAsset {
    /// An empty 0x0 skinning matrix marks an asset without skin weights.
    pub fn has_skinning(&self) -> bool {
        self.skinning.rows() > 0 || self.skinning.cols() > 0
    }

    /// Reorders joints by `perm` (old → new) and moves skinning columns with
    /// the bones they belong to.
    pub fn reorder_joints(&self, perm: &[usize]) -> RiggedAsset {
        let skeleton = self.skeleton.permuted(perm);
        let old_bones = self.skeleton.bones();
        let new_bones = skeleton.bones();
        let mut column_of_tail = vec![usize::MAX; skeleton.len()];
        for (c, b) in new_bones.iter().enumerate() {
            column_of_tail[b.tail] = c;
        }
        let col_perm: Vec<usize> = old_bones
            .iter()
            .map(|b| column_of_tail[perm[b.tail]])
            .collect();
        let skinning = if self.skinning.cols() == col_perm.len() {
            self.skinning.permute_columns(&col_perm)
        } else {
            self.skinning.clone()
        };
        RiggedAsset {
            id: self.id.clone(),
            mesh: self.mesh.clone(),
            skeleton,
            skinning,
        }
    }
}

/// Uniform scale followed by translation: `p' = scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationRecord {
    pub scale: f64,
    pub translation: Vec3,
}

impl NormalizationRecord {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            translation: Vec3::zeros(),
        }
    }

    /// Fits the isotropic map sending the bounding box of `points` to a box
    /// whose longest side is 1, centered at (0.5, 0.5, 0.5).
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Result<Self> {
        let bbox = Aabb::from_points(points);
        if bbox.is_empty() {
            return Err(RigError::EmptyMesh);
        }
        let extent = bbox.extent().max();
        if !extent.is_finite() {
            return Err(RigError::NonFinite);
        }
        if extent <= 0.0 {
            return Err(RigError::ZeroExtent);
        }
        let scale = 1.0 / extent;
        Ok(Self {
            scale,
            translation: Vec3::repeat(0.5) - bbox.center() * scale,
        })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.translation
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        (p - self.translation) / self.scale
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &NormalizationRecord) -> NormalizationRecord {
        NormalizationRecord {
            scale: self.scale * first.scale,
            translation: first.translation * self.scale + self.translation,
        }
    }
}

/// Maps mesh vertices and joints jointly into the unit box. Skinning is
/// left untouched.
pub fn normalize_unit_box(asset: &RiggedAsset) -> Result<(RiggedAsset, NormalizationRecord)> {
    if asset.mesh.vertices.is_empty() {
        return Err(RigError::EmptyMesh);
    }
    let record = NormalizationRecord::fit(
        asset
            .mesh
            .vertices
            .iter()
            .chain(asset.skeleton.joints.iter().map(|j| &j.position)),
    )?;
    Ok((apply_normalization(asset, &record), record))
}

pub fn apply_normalization(asset: &RiggedAsset, record: &NormalizationRecord) -> RiggedAsset {
    let mut out = asset.clone();
    for v in &mut out.mesh.vertices {
        *v = record.apply(v);
    }
    for j in &mut out.skeleton.joints {
        j.position = record.apply(&j.position);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    NonFinite,
    FaceIndex,
    RepeatedFaceIndex,
    NormalCount,
    NormalNorm,
    ParentRange,
    Cycle,
    MultipleRoots,
    NoRoot,
    RootMismatch,
    NegativeWeight,
    RowSum,
    SkinRows,
    SkinColumns,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::NonFinite => "non-finite",
            Self::FaceIndex => "face-index",
            Self::RepeatedFaceIndex => "repeated-face-index",
            Self::NormalCount => "normal-count",
            Self::NormalNorm => "normal-norm",
            Self::ParentRange => "parent-range",
            Self::Cycle => "cycle",
            Self::MultipleRoots => "multiple roots",
            Self::NoRoot => "no root",
            Self::RootMismatch => "root-mismatch",
            Self::NegativeWeight => "negative-weight",
            Self::RowSum => "row-sum",
            Self::SkinRows => "skin-rows",
            Self::SkinColumns => "skin-columns",
        }
    }

    /// Violations that depend on coordinates or mesh topology.
    pub fn is_geometric(self) -> bool {
        matches!(
            self,
            Self::NonFinite
                | Self::FaceIndex
                | Self::RepeatedFaceIndex
                | Self::NormalCount
                | Self::NormalNorm
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub index: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{} [{}]: {}", self.kind.name(), i, self.detail),
            None => write!(f, "{}: {}", self.kind.name(), self.detail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, index: Option<usize>, detail: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            index,
            detail: detail.into(),
        });
    }
}

pub fn validate_asset(asset: &RiggedAsset) -> ValidationReport {
    let mut report = ValidationReport::default();
    validate_mesh(&asset.mesh, &mut report);
    validate_skeleton(&asset.skeleton, &mut report);

    let w = &asset.skinning;
    if !asset.has_skinning() {
        return report;
    }
    if w.rows() != asset.mesh.vertices.len() {
        report.push(
            ViolationKind::SkinRows,
            None,
            format!("{} rows for {} vertices", w.rows(), asset.mesh.vertices.len()),
        );
    }
    let bones = asset.skeleton.bone_count();
    if w.cols() != bones {
        report.push(
            ViolationKind::SkinColumns,
            None,
            format!("{} columns for {bones} bones", w.cols()),
        );
    }
    for (i, row) in w.iter_rows().enumerate() {
        if let Some(c) = row.iter().position(|x| *x < 0.0 || !x.is_finite()) {
            report.push(
                ViolationKind::NegativeWeight,
                Some(i),
                format!("column {c} holds {}", row[c]),
            );
            continue;
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            report.push(ViolationKind::RowSum, Some(i), format!("row sums to {sum}"));
        }
    }
    report
}

fn validate_mesh(mesh: &Mesh, report: &mut ValidationReport) {
    let n = mesh.vertices.len();
    for (i, v) in mesh.vertices.iter().enumerate() {
        if !v.iter().all(|c| c.is_finite()) {
            report.push(ViolationKind::NonFinite, Some(i), "vertex coordinate");
        }
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        if let Some(&bad) = face.iter().find(|&&i| i >= n) {
            report.push(
                ViolationKind::FaceIndex,
                Some(f),
                format!("index {bad} >= vertex count {n}"),
            );
        }
        if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            report.push(
                ViolationKind::RepeatedFaceIndex,
                Some(f),
                format!("{face:?}"),
            );
        }
    }
    if let Some(normals) = &mesh.normals {
        if normals.len() != n {
            report.push(
                ViolationKind::NormalCount,
                None,
                format!("{} normals for {n} vertices", normals.len()),
            );
        }
        for (i, nrm) in normals.iter().enumerate() {
            if (nrm.norm() - 1.0).abs() > NORMAL_TOLERANCE || !nrm.norm().is_finite() {
                report.push(
                    ViolationKind::NormalNorm,
                    Some(i),
                    format!("norm {}", nrm.norm()),
                );
            }
        }
    }
}

fn validate_skeleton(skeleton: &Skeleton, report: &mut ValidationReport) {
    let n = skeleton.joints.len();
    for (i, j) in skeleton.joints.iter().enumerate() {
        if !j.position.iter().all(|c| c.is_finite()) {
            report.push(ViolationKind::NonFinite, Some(i), "joint position");
        }
    }
    let mut range_ok = true;
    for (i, j) in skeleton.joints.iter().enumerate() {
        if let Some(p) = j.parent {
            if p >= n || p == i {
                report.push(ViolationKind::ParentRange, Some(i), format!("parent {p}"));
                range_ok = false;
            }
        }
    }
    let roots: Vec<usize> = (0..n)
        .filter(|&i| skeleton.joints[i].parent.is_none())
        .collect();
    match roots.len() {
        0 if n > 0 => report.push(ViolationKind::NoRoot, None, "no parentless joint"),
        0 => report.push(ViolationKind::NoRoot, None, "empty skeleton"),
        1 => {
            if roots[0] != skeleton.root {
                report.push(
                    ViolationKind::RootMismatch,
                    Some(skeleton.root),
                    format!("unique parentless joint is {}", roots[0]),
                );
            }
        }
        _ => report.push(
            ViolationKind::MultipleRoots,
            Some(roots[1]),
            format!("parentless joints {roots:?}"),
        ),
    }
    if !range_ok {
        return;
    }
    // Joints whose ancestor chain never reaches a parentless joint.
    for start in 0..n {
        let mut cur = start;
        let mut steps = 0;
        while let Some(p) = skeleton.joints[cur].parent {
            cur = p;
            steps += 1;
            if steps > n {
                report.push(ViolationKind::Cycle, Some(start), "ancestor chain loops");
                break;
            }
        }
    }
}
