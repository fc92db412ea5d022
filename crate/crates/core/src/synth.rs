//! Seeded synthetic rigs for tests, benchmarks and demos.

use rand::Rng;

use crate::geometry::Vec3;
use crate::model::{Joint, Mesh, RiggedAsset, Skeleton};
use crate::skinning::{heuristic_skin, prune_top_k};

fn random_direction<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random joint tree with `n ≥ 1` joints. Parents are drawn among earlier
/// joints with a bias toward the most recent one, giving limb-like chains.
pub fn random_skeleton<R: Rng>(rng: &mut R, n: usize) -> Skeleton {
    let mut joints = vec![Joint::new(Vec3::zeros(), None)];
    for i in 1..n {
        let parent = if rng.random_bool(0.6) { i - 1 } else { rng.random_range(0..i) };
        let length = rng.random_range(0.05..0.3);
        let position = joints[parent].position + random_direction(rng) * length;
        joints.push(Joint::named(format!("j{i}"), position, Some(parent)));
    }
    joints[0].name = Some("j0".into());
    Skeleton::from_joints(joints).expect("generated parents form a tree")
}

/// Random tree whose joints fill the unit box: the longest side of the
/// joints' bounding box spans `[0, 1]`.
pub fn random_normalized_skeleton<R: Rng>(rng: &mut R, n: usize) -> Skeleton {
    let mut s = random_skeleton(rng, n);
    if s.len() > 1 {
        if let Ok(record) = crate::model::NormalizationRecord::fit(s.joints.iter().map(|j| &j.position)) {
            for j in &mut s.joints {
                j.position = record.apply(&j.position);
            }
        }
    }
    s
}

/// Closed star-shaped surface around the skeleton: a perturbed latitude /
/// longitude sphere stretched over the joints' bounding box.
pub fn blob_mesh<R: Rng>(rng: &mut R, skeleton: &Skeleton, rings: usize, segments: usize) -> Mesh {
    let rings = rings.max(2);
    let segments = segments.max(3);
    let bbox = crate::geometry::Aabb::from_points(skeleton.joints.iter().map(|j| &j.position));
    let center = bbox.center();
    let radii = bbox.extent().map(|e| e * 0.6 + 0.05);
    let wobble: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..0.08)).collect();

    let mut vertices = vec![center + Vec3::new(0.0, 0.0, radii.z)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            let bump = 1.0 + wobble[0] * (3.0 * phi).sin() + wobble[1] * (2.0 * theta).cos()
                + wobble[2] * (5.0 * phi + theta).sin() + rng.random_range(-1.0..1.0) * wobble[3] * 0.1;
            let dir = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            vertices.push(center + dir.component_mul(&radii) * bump);
        }
    }
    vertices.push(center - Vec3::new(0.0, 0.0, radii.z));
    let south = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;

    let mut faces = Vec::with_capacity(2 * rings * segments);
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            faces.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
            faces.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    Mesh::new(vertices, faces)
}

/// Number of vertices of [`blob_mesh`] for the given resolution.
pub fn blob_vertex_count(rings: usize, segments: usize) -> usize {
    (rings.max(2) - 1) * segments.max(3) + 2
}

/// Skinned asset with `joints` joints and a blob mesh; weights come from
/// the distance heuristic, pruned to four influences per vertex.
pub fn random_asset<R: Rng>(rng: &mut R, id: &str, joints: usize, rings: usize, segments: usize) -> RiggedAsset {
    let skeleton = random_skeleton(rng, joints.max(2));
    let mesh = blob_mesh(rng, &skeleton, rings, segments);
    let sharpness = rng.random_range(10.0..40.0);
    let skinning = prune_top_k(&heuristic_skin(&mesh, &skeleton, sharpness).expect("skeleton has bones"), 4);
    RiggedAsset {
        id: id.to_string(),
        mesh,
        skeleton,
        skinning,
    }
}

/// Imperfect prediction of `reference`: jittered joints, possibly an extra
/// or a missing leaf, and re-derived skinning on the same mesh.
pub fn perturbed_prediction<R: Rng>(rng: &mut R, reference: &RiggedAsset, jitter: f64) -> RiggedAsset {
    let mut joints = reference.skeleton.joints.clone();
    for j in &mut joints {
        j.position += random_direction(rng) * rng.random_range(0.0..jitter);
    }
    match rng.random_range(0..3) {
        0 if joints.len() > 3 => {
            let tree = reference.skeleton.tree().expect("reference is a tree");
            if let Some(leaf) = (0..joints.len()).rev().find(|&j| tree.children[j].is_empty() && j != tree.root) {
                joints.remove(leaf);
                for j in &mut joints {
                    j.parent = j.parent.map(|p| if p > leaf { p - 1 } else { p });
                }
            }
        }
        1 => {
            let parent = rng.random_range(0..joints.len());
            let position = joints[parent].position + random_direction(rng) * 0.1;
            let name = format!("extra{}", joints.len());
            joints.push(Joint::named(name, position, Some(parent)));
        }
        _ => {}
    }
    let skeleton = Skeleton::from_joints(joints).expect("edits keep a tree");
    let sharpness = rng.random_range(10.0..40.0);
    let skinning = prune_top_k(
        &heuristic_skin(&reference.mesh, &skeleton, sharpness).expect("skeleton has bones"),
        4,
    );
    RiggedAsset {
        id: reference.id.clone(),
        mesh: reference.mesh.clone(),
        skeleton,
        skinning,
    }
}
