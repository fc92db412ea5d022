//! Nearest-neighbor structures: a kd-tree over points and a bounding volume
//! hierarchy over mesh triangles.

use crate::geometry::{barycentric_point, closest_point_on_triangle, Aabb, Vec3};
use crate::model::Mesh;

const LEAF_SIZE: usize = 8;

enum KdNode {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree answering exact nearest-point queries.
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let bounds = Aabb::from_points(self.order[start..end].iter().map(|&i| &self.points[i]));
        let ext = bounds.extent();
        let axis = (0..3).fold(0, |best, a| if ext[a] > ext[best] { a } else { best });
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(KdNode::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = KdNode::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Index and squared distance of the closest point; ties go to the lower
    /// index. `None` on an empty tree.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        let mut stack = vec![(0usize, 0.0f64)];
        while let Some((node, bound)) = stack.pop() {
            if bound > best.1 {
                continue;
            }
            match self.nodes[node] {
                KdNode::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d = (self.points[i] - q).norm_squared();
                        if d < best.1 || (d == best.1 && i < best.0) {
                            best = (i, d);
                        }
                    }
                }
                KdNode::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = q[axis] - value;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    stack.push((far, diff * diff));
                    stack.push((near, 0.0));
                }
            }
        }
        Some(best)
    }
}

/// Closest point on a mesh surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub face: usize,
    pub bary: [f64; 3],
    pub distance_squared: f64,
}

struct BvhNode {
    bounds: Aabb,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Bounding volume hierarchy over the faces of a mesh.
pub struct TriangleBvh<'a> {
    mesh: &'a Mesh,
    order: Vec<usize>,
    nodes: Vec<BvhNode>,
}

impl<'a> TriangleBvh<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut bvh = Self {
            mesh,
            order: (0..mesh.faces.len()).collect(),
            nodes: Vec::new(),
        };
        if !mesh.faces.is_empty() {
            let centroids: Vec<Vec3> = (0..mesh.faces.len())
                .map(|f| {
                    let (a, b, c) = mesh.triangle(f);
                    (a + b + c) / 3.0
                })
                .collect();
            bvh.build(&centroids, 0, mesh.faces.len());
        }
        bvh
    }

    fn face_bounds(&self, f: usize) -> Aabb {
        let (a, b, c) = self.mesh.triangle(f);
        Aabb::from_points([&a, &b, &c])
    }

    fn build(&mut self, centroids: &[Vec3], start: usize, end: usize) -> usize {
        let bounds = self.order[start..end]
            .iter()
            .fold(Aabb::empty(), |acc, &f| acc.merge(&self.face_bounds(f)));
        let id = self.nodes.len();
        self.nodes.push(BvhNode {
            bounds,
            start,
            end,
            children: None,
        });
        if end - start <= 4 {
            return id;
        }
        let spread = Aabb::from_points(self.order[start..end].iter().map(|&f| &centroids[f])).extent();
        let axis = (0..3).fold(0, |best, a| if spread[a] > spread[best] { a } else { best });
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
        });
        let left = self.build(centroids, start, mid);
        let right = self.build(centroids, mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    /// Exact closest surface point; ties go to the lower face index.
    pub fn closest(&self, q: &Vec3) -> Option<SurfaceHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<SurfaceHit> = None;
        let mut best_d = f64::INFINITY;
        let mut stack = vec![(0usize, self.nodes[0].bounds.distance_squared(q))];
        while let Some((node, bound)) = stack.pop() {
            if bound > best_d {
                continue;
            }
            let n = &self.nodes[node];
            match n.children {
                None => {
                    for &f in &self.order[n.start..n.end] {
                        let (a, b, c) = self.mesh.triangle(f);
                        let bary = closest_point_on_triangle(q, &a, &b, &c);
                        let d = (barycentric_point(&bary, &a, &b, &c) - q).norm_squared();
                        let better = match best {
                            None => true,
                            Some(h) => d < best_d || (d == best_d && f < h.face),
                        };
                        if better {
                            best_d = d;
                            best = Some(SurfaceHit {
                                face: f,
                                bary,
                                distance_squared: d,
                            });
                        }
                    }
                }
                Some((l, r)) => {
                    let dl = self.nodes[l].bounds.distance_squared(q);
                    let dr = self.nodes[r].bounds.distance_squared(q);
                    if dl <= dr {
                        stack.push((r, dr));
                        stack.push((l, dl));
                    } else {
                        stack.push((l, dl));
                        stack.push((r, dr));
                    }
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn kd_tree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 500);
        let tree = KdTree::new(&pts);
        for q in random_points(&mut rng, 200) {
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            assert_eq!(tree.nearest(&q), Some(brute));
        }
        assert_eq!(KdTree::new(&[]).nearest(&Vec3::zeros()), None);
    }

    #[test]
    fn bvh_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vertices = random_points(&mut rng, 90);
        let faces: Vec<[usize; 3]> = (0..30).map(|f| [3 * f, 3 * f + 1, 3 * f + 2]).collect();
        let mesh = Mesh::new(vertices, faces);
        let bvh = TriangleBvh::new(&mesh);
        for q in random_points(&mut rng, 100) {
            let brute = (0..mesh.faces.len())
                .map(|f| {
                    let (a, b, c) = mesh.triangle(f);
                    let bary = closest_point_on_triangle(&q, &a, &b, &c);
                    (barycentric_point(&bary, &a, &b, &c) - q).norm_squared()
                })
                .fold(f64::INFINITY, f64::min);
            let hit = bvh.closest(&q).unwrap();
            assert_eq!(hit.distance_squared, brute);
        }
    }
}
