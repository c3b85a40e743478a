//! Generalized winding number: a real-valued inside/outside indicator that
//! stays meaningful on open, self-intersecting and non-manifold meshes
//! (about 1 inside, about 0 outside).
//!
//! [`winding_number`] sums exact signed solid angles over every triangle.
//! [`WindingField`] accelerates batch queries with a hierarchy whose far
//! nodes are approximated by their area-weighted normal (first-order dipole),
//! recursing to the exact sum near the surface.

use std::f64::consts::PI;

use crate::mesh::{Aabb, TriangleMesh, Vec3};

/// Signed solid angle of triangle `[a, b, c]` seen from `p`, divided by 4 pi.
#[inline]
pub fn triangle_winding(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    // van Oosterom & Strackee
    let va = a - p;
    let vb = b - p;
    let vc = c - p;
    let la = va.norm();
    let lb = vb.norm();
    let lc = vc.norm();
    let num = va.dot(&vb.cross(&vc));
    let den = la * lb * lc + va.dot(&vb) * lc + vb.dot(&vc) * la + vc.dot(&va) * lb;
    let omega = 2.0 * num.atan2(den);
    omega / (4.0 * PI)
}

/// Exact generalized winding number of the whole mesh at `p`.
pub fn winding_number(mesh: &TriangleMesh, p: &Vec3) -> f64 {
    mesh.faces
        .iter()
        .map(|&[a, b, c]| {
            triangle_winding(
                p,
                &mesh.vertices[a as usize],
                &mesh.vertices[b as usize],
                &mesh.vertices[c as usize],
            )
        })
        .sum()
}

struct WindingNode {
    /// Area centroid of the node's triangles.
    centroid: Vec3,
    /// Sum of area-weighted unit normals.
    dipole: Vec3,
    /// Bounding radius: max distance from centroid to any node vertex.
    radius: f64,
    left: u32,
    right: u32,
    start: u32,
    count: u32,
}

/// Hierarchical winding-number evaluator over a fixed mesh.
pub struct WindingField {
    nodes: Vec<WindingNode>,
    tris: Vec<[Vec3; 3]>,
    /// Far-field accuracy knob: nodes farther than `beta * radius` use the
    /// dipole approximation. 2.8 keeps first-order truncation error well
    /// under the 0.5 decision threshold.
    beta: f64,
}

const WINDING_LEAF: usize = 8;

impl WindingField {
    pub fn new(mesh: &TriangleMesh) -> WindingField {
        Self::with_beta(mesh, 2.8)
    }

    pub fn with_beta(mesh: &TriangleMesh, beta: f64) -> WindingField {
        let tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut nodes = Vec::new();
        build(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        let tris_sorted: Vec<[Vec3; 3]> = order.iter().map(|&i| tris[i as usize]).collect();
        WindingField {
            nodes,
            tris: tris_sorted,
            beta,
        }
    }

    /// Winding number at `p`; dipole-approximated in the far field.
    pub fn eval(&self, p: &Vec3) -> f64 {
        let mut acc = 0.0;
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            let d = p - node.centroid;
            let dist = d.norm();
            if dist > self.beta * node.radius {
                // dipole: integral of dA n . (x - p) / |x - p|^3 over the node
                let r3 = dist * dist * dist;
                acc += node.dipole.dot(&(-d)) / (4.0 * PI * r3);
                continue;
            }
            if node.count > 0 {
                for k in node.start..node.start + node.count {
                    let t = &self.tris[k as usize];
                    acc += triangle_winding(p, &t[0], &t[1], &t[2]);
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        acc
    }
}

fn build(
    tris: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [u32],
    start: usize,
    count: usize,
    nodes: &mut Vec<WindingNode>,
) -> u32 {
    let slice = &order[start..start + count];
    let mut area_sum = 0.0;
    let mut weighted_centroid = Vec3::zeros();
    let mut dipole = Vec3::zeros();
    for &t in slice {
        let tri = &tris[t as usize];
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
        let area = n.norm() * 0.5;
        if area > 0.0 {
            dipole += n * 0.5; // area-weighted unit normal
        }
        area_sum += area;
        weighted_centroid += centroids[t as usize] * area;
    }
    let centroid = if area_sum > 0.0 {
        weighted_centroid / area_sum
    } else {
        // zero-area node: any anchor works, the radius stays conservative
        tris[slice[0] as usize][0]
    };
    let mut radius: f64 = 0.0;
    for &t in slice {
        for v in &tris[t as usize] {
            radius = radius.max((v - centroid).norm());
        }
    }
    let idx = nodes.len() as u32;
    nodes.push(WindingNode {
        centroid,
        dipole,
        radius,
        left: 0,
        right: 0,
        start: start as u32,
        count: 0,
    });
    if count <= WINDING_LEAF {
        nodes[idx as usize].count = count as u32;
        return idx;
    }
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
    let left = build(tris, centroids, order, start, mid, nodes);
    let right = build(tris, centroids, order, start + mid, count - mid, nodes);
    nodes[idx as usize].left = left;
    nodes[idx as usize].right = right;
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_sphere_is_binary() {
        let sphere = shapes::icosphere(0.5, 3);
        assert!((winding_number(&sphere, &Vec3::zeros()) - 1.0).abs() < 1e-9);
        assert!(winding_number(&sphere, &Vec3::new(0.9, 0.0, 0.0)).abs() < 1e-9);
    }

    #[test]
    fn overlapping_cubes_wind_twice() {
        let union = shapes::two_cube_union();
        // deep inside the overlap region both cubes contribute 1
        let w = winding_number(&union, &Vec3::new(0.0, 0.1, 0.05));
        assert!((w - 2.0).abs() < 1e-6, "w={w}");
    }

    #[test]
    fn open_disk_is_half_near_center() {
        let disk = shapes::disk(0.8, 64);
        let above = winding_number(&disk, &Vec3::new(0.0, 0.0, 1e-4));
        let below = winding_number(&disk, &Vec3::new(0.0, 0.0, -1e-4));
        assert!((above + 0.5).abs() < 1e-3, "above={above}");
        assert!((below - 0.5).abs() < 1e-3, "below={below}");
    }

    #[test]
    fn fast_field_matches_exact() {
        let torus = shapes::torus(0.6, 0.2, 48, 24);
        let field = WindingField::new(&torus);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let p = Vec3::new(
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
            );
            let exact = winding_number(&torus, &p);
            let fast = field.eval(&p);
            // first-order dipole error stays far below the 0.5 decision margin
            assert!((exact - fast).abs() < 0.05, "{p:?}: {exact} vs {fast}");
            // the inside/outside decision never flips away from the surface
            if (exact - 0.5).abs() > 0.1 {
                assert_eq!(exact > 0.5, fast > 0.5);
            }
        }
    }
}
