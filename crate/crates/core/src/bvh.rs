//! Bounding volume hierarchy over mesh triangles: closest-point queries, ray
//! casting, and BVH-to-BVH minimum distance.

use crate::mesh::{Aabb, TriangleMesh, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    aabb: Aabb,
    /// Leaf: triangle range `[start, start+count)`. Internal: `start` is the
    /// left child, right child is `start + 1`... stored explicitly instead.
    left: u32,
    right: u32,
    start: u32,
    count: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

/// Closest point on the mesh to a query point.
#[derive(Debug, Clone, Copy)]
pub struct ClosestHit {
    pub distance: f64,
    pub point: Vec3,
    /// Index into the original mesh face array.
    pub triangle: u32,
}

/// Ray/triangle intersection.
#[derive(Debug, Clone, Copy)]
pub struct RayHit {
    pub t: f64,
    pub triangle: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangles in build order; `tri_face[i]` maps back to the mesh face.
    tris: Vec<[Vec3; 3]>,
    tri_face: Vec<u32>,
    root_aabb: Aabb,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let n = mesh.faces.len();
        assert!(n > 0, "BVH needs at least one face");
        let mut tris: Vec<[Vec3; 3]> = (0..n).map(|f| mesh.triangle(f)).collect();
        let mut tri_face: Vec<u32> = (0..n as u32).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n);
        build_node(&tris, &centroids, &mut order, 0, n, &mut nodes);
        // reorder triangle storage to match leaf ranges
        let tris_sorted: Vec<[Vec3; 3]> = order.iter().map(|&i| tris[i as usize]).collect();
        let faces_sorted: Vec<u32> = order.iter().map(|&i| tri_face[i as usize]).collect();
        tris = tris_sorted;
        tri_face = faces_sorted;
        let root_aabb = nodes[0].aabb;
        Bvh {
            nodes,
            tris,
            tri_face,
            root_aabb,
        }
    }

    pub fn aabb(&self) -> Aabb {
        self.root_aabb
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    /// Closest point on any triangle, exact.
    pub fn closest_point(&self, p: &Vec3) -> ClosestHit {
        let mut best = ClosestHit {
            distance: f64::INFINITY,
            point: *p,
            triangle: u32::MAX,
        };
        let mut best_sq = f64::INFINITY;
        // manual stack ordered by box distance
        let mut stack: Vec<(u32, f64)> = vec![(0, self.nodes[0].aabb.distance_sq(p))];
        while let Some((ni, d)) = stack.pop() {
            if d >= best_sq {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.is_leaf() {
                for k in node.start..node.start + node.count {
                    let tri = &self.tris[k as usize];
                    let q = closest_point_on_triangle(p, tri);
                    let dsq = (q - p).norm_squared();
                    if dsq < best_sq {
                        best_sq = dsq;
                        best = ClosestHit {
                            distance: dsq.sqrt(),
                            point: q,
                            triangle: self.tri_face[k as usize],
                        };
                    }
                }
            } else {
                let l = node.left as usize;
                let r = node.right as usize;
                let dl = self.nodes[l].aabb.distance_sq(p);
                let dr = self.nodes[r].aabb.distance_sq(p);
                // push farther first so nearer is processed first
                if dl < dr {
                    stack.push((node.right, dr));
                    stack.push((node.left, dl));
                } else {
                    stack.push((node.left, dl));
                    stack.push((node.right, dr));
                }
            }
        }
        best
    }

    /// Unsigned distance to the mesh.
    #[inline]
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.closest_point(p).distance
    }

    /// Same as [`Bvh::distance`] but gives up early once the distance is
    /// provably larger than `cutoff` (returns a value > cutoff).
    pub fn distance_capped(&self, p: &Vec3, cutoff: f64) -> f64 {
        let mut prune_sq = cutoff * cutoff;
        let mut found_sq = f64::INFINITY;
        let mut stack: Vec<(u32, f64)> = vec![(0, self.nodes[0].aabb.distance_sq(p))];
        while let Some((ni, d)) = stack.pop() {
            if d > prune_sq {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.is_leaf() {
                for k in node.start..node.start + node.count {
                    let q = closest_point_on_triangle(p, &self.tris[k as usize]);
                    let dsq = (q - p).norm_squared();
                    if dsq < found_sq {
                        found_sq = dsq;
                        prune_sq = prune_sq.min(dsq);
                    }
                }
            } else {
                let l = node.left as usize;
                let r = node.right as usize;
                let dl = self.nodes[l].aabb.distance_sq(p);
                let dr = self.nodes[r].aabb.distance_sq(p);
                if dl < dr {
                    stack.push((node.right, dr));
                    stack.push((node.left, dl));
                } else {
                    stack.push((node.left, dl));
                    stack.push((node.right, dr));
                }
            }
        }
        found_sq.sqrt()
    }

    /// All ray hits with `t >= t_min`, sorted by t.
    pub fn ray_hits(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> Vec<RayHit> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut hits = Vec::new();
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if !ray_box(origin, &inv, &node.aabb, f64::INFINITY) {
                continue;
            }
            if node.is_leaf() {
                for k in node.start..node.start + node.count {
                    if let Some(t) = ray_triangle(origin, dir, &self.tris[k as usize]) {
                        if t >= t_min {
                            hits.push(RayHit {
                                t,
                                triangle: self.tri_face[k as usize],
                            });
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        hits.sort_by(|a, b| a.t.total_cmp(&b.t));
        hits
    }

    /// Nearest hit with `t >= t_min`, optionally ignoring one source triangle.
    pub fn first_hit(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        skip_triangle: Option<u32>,
    ) -> Option<RayHit> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            let t_cap = best.map_or(f64::INFINITY, |h| h.t);
            if !ray_box(origin, &inv, &node.aabb, t_cap) {
                continue;
            }
            if node.is_leaf() {
                for k in node.start..node.start + node.count {
                    let face = self.tri_face[k as usize];
                    if skip_triangle == Some(face) {
                        continue;
                    }
                    if let Some(t) = ray_triangle(origin, dir, &self.tris[k as usize]) {
                        if t >= t_min && best.map_or(true, |h| t < h.t) {
                            best = Some(RayHit { t, triangle: face });
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        best
    }

    /// Minimum surface-to-surface distance between two meshes.
    ///
    /// `upper_bound` prunes the search; pass `f64::INFINITY` for the exact
    /// minimum, or a smaller value when only distances below it matter.
    pub fn mesh_distance(&self, other: &Bvh, upper_bound: f64) -> f64 {
        let mut best = upper_bound;
        let mut stack: Vec<(u32, u32, f64)> = vec![(
            0,
            0,
            self.nodes[0].aabb.box_distance_sq(&other.nodes[0].aabb),
        )];
        // best-first would be ideal; depth-first with pruning is close enough
        while let Some((a, b, dsq)) = stack.pop() {
            if dsq >= best * best {
                continue;
            }
            let na = &self.nodes[a as usize];
            let nb = &other.nodes[b as usize];
            match (na.is_leaf(), nb.is_leaf()) {
                (true, true) => {
                    for i in na.start..na.start + na.count {
                        for j in nb.start..nb.start + nb.count {
                            let d = triangle_triangle_distance(
                                &self.tris[i as usize],
                                &other.tris[j as usize],
                            );
                            if d < best {
                                best = d;
                                if best == 0.0 {
                                    return 0.0;
                                }
                            }
                        }
                    }
                }
                (leaf_a, _) => {
                    // split the larger box (or whichever is internal)
                    let split_a = !leaf_a
                        && (nb.is_leaf()
                            || na.aabb.extent().max() >= nb.aabb.extent().max());
                    if split_a {
                        for child in [na.left, na.right] {
                            let d = self.nodes[child as usize]
                                .aabb
                                .box_distance_sq(&nb.aabb);
                            stack.push((child, b, d));
                        }
                    } else {
                        for child in [nb.left, nb.right] {
                            let d = na
                                .aabb
                                .box_distance_sq(&other.nodes[child as usize].aabb);
                            stack.push((a, child, d));
                        }
                    }
                }
            }
        }
        best
    }
}

fn build_node(
    tris: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [u32],
    start: usize,
    count: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let slice = &order[start..start + count];
    let mut aabb = Aabb::from_points(&[]);
    for &t in slice {
        let tri = &tris[t as usize];
        aabb = aabb.union(&Aabb::from_points(tri));
    }
    let idx = nodes.len() as u32;
    nodes.push(Node {
        aabb,
        left: 0,
        right: 0,
        start: start as u32,
        count: 0,
    });
    if count <= LEAF_SIZE {
        nodes[idx as usize].count = count as u32;
        return idx;
    }
    // split on the longest axis of the centroid bounds at the median
    let mut cb = Aabb::from_points(&[]);
    for &t in slice {
        let c = centroids[t as usize];
        cb = cb.union(&Aabb { min: c, max: c });
    }
    let ext = cb.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = count / 2;
    order[start..start + count].select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
    });
    let left = build_node(tris, centroids, order, start, mid, nodes);
    let right = build_node(tris, centroids, order, start + mid, count - mid, nodes);
    nodes[idx as usize].left = left;
    nodes[idx as usize].right = right;
    idx
}

/// Closest point on triangle `[a, b, c]` to `p` (Ericson, Real-Time
/// Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, tri: &[Vec3; 3]) -> Vec3 {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = va + vb + vc;
    if denom.abs() < f64::MIN_POSITIVE {
        // degenerate triangle: fall back to closest edge point
        let q1 = closest_point_on_segment(p, &a, &b);
        let q2 = closest_point_on_segment(p, &b, &c);
        let q3 = closest_point_on_segment(p, &c, &a);
        let mut best = q1;
        for q in [q2, q3] {
            if (q - p).norm_squared() < (best - p).norm_squared() {
                best = q;
            }
        }
        return best;
    }
    let v = vb / denom;
    let w = vc / denom;
    a + ab * v + ac * w
}

pub fn closest_point_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let denom = ab.norm_squared();
    if denom < f64::MIN_POSITIVE {
        return *a;
    }
    let t = ((p - a).dot(&ab) / denom).clamp(0.0, 1.0);
    a + ab * t
}

/// Möller–Trumbore, double-sided. Returns t or None.
fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let [a, b, c] = *tri;
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&qvec) * inv_det)
}

fn ray_box(origin: &Vec3, inv_dir: &Vec3, aabb: &Aabb, t_cap: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_cap;
    for i in 0..3 {
        let mut near = (aabb.min[i] - origin[i]) * inv_dir[i];
        let mut far = (aabb.max[i] - origin[i]) * inv_dir[i];
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(if near.is_nan() { 0.0 } else { near });
        t1 = t1.min(if far.is_nan() { f64::INFINITY } else { far });
        if t0 > t1 {
            return false;
        }
    }
    true
}

fn segment_segment_distance(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> f64 {
    // Ericson 5.1.9
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= f64::MIN_POSITIVE && e <= f64::MIN_POSITIVE {
        return (p1 - p2).norm();
    }
    if a <= f64::MIN_POSITIVE {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= f64::MIN_POSITIVE {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s_ = if denom.abs() > f64::MIN_POSITIVE {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t_ = (b * s_ + f) / e;
            if t_ < 0.0 {
                t_ = 0.0;
                s_ = (-c / a).clamp(0.0, 1.0);
            } else if t_ > 1.0 {
                t_ = 1.0;
                s_ = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s_;
            t = t_;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Exact minimum distance between two triangles.
pub fn triangle_triangle_distance(t1: &[Vec3; 3], t2: &[Vec3; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for v in t1 {
        best = best.min((closest_point_on_triangle(v, t2) - v).norm());
    }
    for v in t2 {
        best = best.min((closest_point_on_triangle(v, t1) - v).norm());
    }
    for i in 0..3 {
        let (p1, q1) = (t1[i], t1[(i + 1) % 3]);
        for j in 0..3 {
            let (p2, q2) = (t2[j], t2[(j + 1) % 3]);
            best = best.min(segment_segment_distance(&p1, &q1, &p2, &q2));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn brute_force_distance(mesh: &TriangleMesh, p: &Vec3) -> f64 {
        (0..mesh.faces.len())
            .map(|f| {
                let tri = mesh.triangle(f);
                (closest_point_on_triangle(p, &tri) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn analytic_plane_distance() {
        let quad = shapes::quad_y0(1.0);
        let bvh = Bvh::build(&quad);
        let hit = bvh.closest_point(&Vec3::new(0.0, 1.0, 0.0));
        assert!((hit.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_cube() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let bvh = Bvh::build(&cube);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let got = bvh.distance(&p);
            let want = brute_force_distance(&cube, &p);
            assert!((got - want).abs() < 1e-9, "{p:?}: {got} vs {want}");
        }
    }

    #[test]
    fn ray_through_cube_center_hits_twice() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let bvh = Bvh::build(&cube);
        let hits = bvh.ray_hits(&Vec3::new(-2.0, 0.01, 0.02), &Vec3::x(), 0.0);
        assert_eq!(hits.len(), 2);
        assert!((hits[0].t - 1.5).abs() < 1e-9);
        assert!((hits[1].t - 2.5).abs() < 1e-9);
    }

    #[test]
    fn first_hit_matches_sorted_hits() {
        let sphere = shapes::icosphere(0.5, 3);
        let bvh = Bvh::build(&sphere);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let origin = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                -2.0,
            );
            let dir = Vec3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                1.0,
            )
            .normalize();
            let all = bvh.ray_hits(&origin, &dir, 0.0);
            let first = bvh.first_hit(&origin, &dir, 0.0, None);
            match (all.first(), first) {
                (Some(a), Some(b)) => assert!((a.t - b.t).abs() < 1e-12),
                (None, None) => {}
                other => panic!("mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn mesh_distance_between_separated_cubes() {
        let a = shapes::cube(Vec3::zeros(), 0.5);
        let b = shapes::cube(Vec3::new(2.0, 0.0, 0.0), 0.5);
        let (ba, bb) = (Bvh::build(&a), Bvh::build(&b));
        let d = ba.mesh_distance(&bb, f64::INFINITY);
        assert!((d - 1.0).abs() < 1e-9, "d={d}");
        // overlapping boxes have distance 0
        let c = shapes::cube(Vec3::new(0.4, 0.0, 0.0), 0.5);
        let bc = Bvh::build(&c);
        assert_eq!(ba.mesh_distance(&bc, f64::INFINITY), 0.0);
    }

    #[test]
    fn capped_distance_agrees_below_cutoff() {
        let sphere = shapes::icosphere(0.5, 3);
        let bvh = Bvh::build(&sphere);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let p = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let exact = bvh.distance(&p);
            let capped = bvh.distance_capped(&p, 0.2);
            if exact <= 0.2 {
                assert!((capped - exact).abs() < 1e-12);
            } else {
                assert!(capped > 0.2);
            }
        }
    }
}
