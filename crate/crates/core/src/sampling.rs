//! Hybrid point-cloud and SDF sample generation on watertight meshes: the
//! training-data contract for downstream shape models.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::bvh::Bvh;
use crate::mesh::{manifold_report, TriangleMesh, Vec3};
use crate::winding::WindingField;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("mesh is not a closed 2-manifold ({0} boundary, {1} non-manifold edges)")]
    NotManifold(usize, usize),
    #[error("mesh is not closed; SDF sign is undefined")]
    NotClosed,
}

/// Edge whose dihedral angle is at or above the detection threshold.
#[derive(Debug, Clone, Copy)]
pub struct SharpEdge {
    pub v0: u32,
    pub v1: u32,
    /// Angle between the two incident face normals, radians.
    pub dihedral: f64,
    pub faces: [u32; 2],
}

#[derive(Debug, Clone, Default)]
pub struct SharpEdgeSet {
    pub edges: Vec<SharpEdge>,
}

impl SharpEdgeSet {
    pub fn total_length(&self, mesh: &TriangleMesh) -> f64 {
        self.edges
            .iter()
            .map(|e| (mesh.vertices[e.v1 as usize] - mesh.vertices[e.v0 as usize]).norm())
            .sum()
    }
}

/// Find edges whose dihedral angle meets `angle_threshold` (radians).
/// Requires a closed manifold mesh so every edge has exactly two faces.
pub fn detect_sharp_edges(
    mesh: &TriangleMesh,
    angle_threshold: f64,
) -> Result<SharpEdgeSet, SamplingError> {
    if mesh.faces.is_empty() {
        return Err(SamplingError::EmptyMesh);
    }
    let report = manifold_report(mesh);
    if !report.closed || !report.manifold {
        return Err(SamplingError::NotManifold(
            report.boundary_edge_count,
            report.nonmanifold_edge_count,
        ));
    }
    let mut edge_faces: std::collections::HashMap<(u32, u32), [u32; 2]> =
        std::collections::HashMap::new();
    let mut order: Vec<(u32, u32)> = Vec::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = if a < b { (a, b) } else { (b, a) };
            match edge_faces.entry(key) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert([fi as u32, u32::MAX]);
                    order.push(key);
                }
                std::collections::hash_map::Entry::Occupied(mut e) => {
                    e.get_mut()[1] = fi as u32;
                }
            }
        }
    }
    let mut edges = Vec::new();
    for key in order {
        let faces = edge_faces[&key];
        let n0 = mesh.face_normal(faces[0] as usize);
        let n1 = mesh.face_normal(faces[1] as usize);
        let dihedral = n0.dot(&n1).clamp(-1.0, 1.0).acos();
        if dihedral >= angle_threshold {
            edges.push(SharpEdge {
                v0: key.0,
                v1: key.1,
                dihedral,
                faces,
            });
        }
    }
    Ok(SharpEdgeSet { edges })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SampleSource {
    Uniform,
    SharpEdge,
}

/// Oriented surface samples: positions with unit normals and their origin
/// (uniform area sampling or sharp-edge importance sampling).
#[derive(Debug, Clone)]
pub struct SurfaceSampleSet {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub tags: Vec<SampleSource>,
}

impl SurfaceSampleSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Area-weighted uniform samples plus length-weighted sharp-edge samples.
///
/// Uniform normals interpolate the per-vertex normals and renormalize; edge
/// normals bisect the two incident face normals. When the mesh has no sharp
/// edges the edge budget is folded into uniform sampling. Deterministic for
/// a fixed seed.
pub fn sample_hybrid(
    mesh: &TriangleMesh,
    n_uniform: usize,
    n_edge: usize,
    angle_threshold: f64,
    seed: u64,
) -> Result<SurfaceSampleSet, SamplingError> {
    if mesh.faces.is_empty() {
        return Err(SamplingError::EmptyMesh);
    }
    let sharp = detect_sharp_edges(mesh, angle_threshold)?;
    let (n_uniform, n_edge) = if sharp.edges.is_empty() {
        (n_uniform + n_edge, 0)
    } else {
        (n_uniform, n_edge)
    };

    let mut set = SurfaceSampleSet {
        positions: Vec::with_capacity(n_uniform + n_edge),
        normals: Vec::with_capacity(n_uniform + n_edge),
        tags: Vec::with_capacity(n_uniform + n_edge),
    };

    // vertex normals: area-weighted average of incident faces
    let mut vertex_normals = vec![Vec3::zeros(); mesh.vertices.len()];
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.faces[f];
        let [pa, pb, pc] = mesh.triangle(f);
        let weighted = (pb - pa).cross(&(pc - pa)) * 0.5;
        vertex_normals[a as usize] += weighted;
        vertex_normals[b as usize] += weighted;
        vertex_normals[c as usize] += weighted;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // uniform stage
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    for _ in 0..n_uniform {
        let r = rng.random_range(0.0..total);
        let f = cumulative.partition_point(|&c| c <= r).min(mesh.faces.len() - 1);
        let [pa, pb, pc] = mesh.triangle(f);
        let [ia, ib, ic] = mesh.faces[f];
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        set.positions.push(pa * wa + pb * wb + pc * wc);
        let n = vertex_normals[ia as usize] * wa
            + vertex_normals[ib as usize] * wb
            + vertex_normals[ic as usize] * wc;
        let n = if n.norm() > 1e-12 {
            n.normalize()
        } else {
            mesh.face_normal(f)
        };
        set.normals.push(n);
        set.tags.push(SampleSource::Uniform);
    }
    // edge stage: length-weighted
    if n_edge > 0 {
        let mut cumulative = Vec::with_capacity(sharp.edges.len());
        let mut total = 0.0;
        for e in &sharp.edges {
            total += (mesh.vertices[e.v1 as usize] - mesh.vertices[e.v0 as usize]).norm();
            cumulative.push(total);
        }
        for _ in 0..n_edge {
            let r = rng.random_range(0.0..total);
            let ei = cumulative.partition_point(|&c| c <= r).min(sharp.edges.len() - 1);
            let e = &sharp.edges[ei];
            let a = mesh.vertices[e.v0 as usize];
            let b = mesh.vertices[e.v1 as usize];
            let t: f64 = rng.random();
            set.positions.push(a + (b - a) * t);
            let bisector = mesh.face_normal(e.faces[0] as usize)
                + mesh.face_normal(e.faces[1] as usize);
            let n = if bisector.norm() > 1e-12 {
                bisector.normalize()
            } else {
                mesh.face_normal(e.faces[0] as usize)
            };
            set.normals.push(n);
            set.tags.push(SampleSource::SharpEdge);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum BandTag {
    NearSurface,
    Volume,
}

/// Signed-distance training samples: negative inside the mesh.
#[derive(Debug, Clone)]
pub struct SdfSampleSet {
    pub positions: Vec<Vec3>,
    pub sdf: Vec<f64>,
    pub tags: Vec<BandTag>,
}

impl SdfSampleSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Near-surface (Gaussian-displaced) and uniform-volume SDF samples.
///
/// The magnitude is the exact unsigned distance; the sign comes from the
/// generalized winding number (inside when w > 0.5), which requires a closed
/// mesh.
pub fn sample_sdf(
    mesh: &TriangleMesh,
    n_near: usize,
    n_volume: usize,
    near_sigma: f64,
    seed: u64,
) -> Result<SdfSampleSet, SamplingError> {
    if mesh.faces.is_empty() {
        return Err(SamplingError::EmptyMesh);
    }
    if !manifold_report(mesh).closed {
        return Err(SamplingError::NotClosed);
    }
    let bvh = Bvh::build(mesh);
    let winding = WindingField::new(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, near_sigma).expect("sigma must be positive");

    let mut positions = Vec::with_capacity(n_near + n_volume);
    let mut tags = Vec::with_capacity(n_near + n_volume);
    let surface_points = area_weighted_points(mesh, n_near, &mut rng);
    for p in surface_points {
        let noise = Vec3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        );
        positions.push(p + noise);
        tags.push(BandTag::NearSurface);
    }
    for _ in 0..n_volume {
        positions.push(Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        tags.push(BandTag::Volume);
    }
    let sdf: Vec<f64> = positions
        .iter()
        .map(|p| {
            let d = bvh.distance(p);
            if winding.eval(p) > 0.5 {
                -d
            } else {
                d
            }
        })
        .collect();
    Ok(SdfSampleSet {
        positions,
        sdf,
        tags,
    })
}

/// Area-weighted point samples using an existing RNG stream.
pub(crate) fn area_weighted_points(
    mesh: &TriangleMesh,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec3> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    (0..count)
        .map(|_| {
            let r = rng.random_range(0.0..total);
            let f = cumulative.partition_point(|&c| c <= r).min(mesh.faces.len() - 1);
            let [a, b, c] = mesh.triangle(f);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    const DEG30: f64 = 30.0 * std::f64::consts::PI / 180.0;

    #[test]
    fn cube_has_exactly_twelve_sharp_edges() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let sharp = detect_sharp_edges(&cube, DEG30).unwrap();
        assert_eq!(sharp.edges.len(), 12);
        for e in &sharp.edges {
            assert!((e.dihedral - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        }
        // threshold zero returns every edge (12 sharp + 6 face diagonals)
        let all = detect_sharp_edges(&cube, 0.0).unwrap();
        assert_eq!(all.edges.len(), 18);
    }

    #[test]
    fn smooth_icosphere_has_no_sharp_edges() {
        let sphere = shapes::icosphere(0.5, 4);
        let sharp = detect_sharp_edges(&sphere, DEG30).unwrap();
        assert!(sharp.edges.is_empty());
        // oracle: enumerate all edges and confirm the max dihedral is small
        let all = detect_sharp_edges(&sphere, 0.0).unwrap();
        let max = all.edges.iter().map(|e| e.dihedral).fold(0.0, f64::max);
        assert!(max < DEG30, "max dihedral {max}");
    }

    #[test]
    fn open_mesh_rejected() {
        let disk = shapes::disk(0.5, 16);
        assert!(matches!(
            detect_sharp_edges(&disk, DEG30),
            Err(SamplingError::NotManifold(..))
        ));
        assert!(matches!(
            sample_sdf(&disk, 10, 10, 0.01, 7),
            Err(SamplingError::NotClosed)
        ));
    }

    #[test]
    fn edge_budget_reassigned_on_smooth_mesh() {
        let sphere = shapes::icosphere(0.5, 3);
        let set = sample_hybrid(&sphere, 1000, 500, DEG30, 7).unwrap();
        assert_eq!(set.len(), 1500);
        assert!(set.tags.iter().all(|&t| t == SampleSource::Uniform));
    }

    #[test]
    fn edge_samples_lie_on_cube_edges() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let set = sample_hybrid(&cube, 0, 1200, DEG30, 7).unwrap();
        let sharp = detect_sharp_edges(&cube, DEG30).unwrap();
        for (p, tag) in set.positions.iter().zip(&set.tags) {
            assert_eq!(*tag, SampleSource::SharpEdge);
            let on_edge = sharp.edges.iter().any(|e| {
                let a = cube.vertices[e.v0 as usize];
                let b = cube.vertices[e.v1 as usize];
                (crate::bvh::closest_point_on_segment(p, &a, &b) - p).norm() < 1e-9
            });
            assert!(on_edge, "{p:?}");
        }
        // bisector normals are unit and diagonal (45 degrees off both faces)
        for n in &set.normals {
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_samples_on_surface_deterministic() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let bvh = Bvh::build(&cube);
        let a = sample_hybrid(&cube, 2000, 0, DEG30, 11).unwrap();
        let b = sample_hybrid(&cube, 2000, 0, DEG30, 11).unwrap();
        assert_eq!(a.positions, b.positions);
        for p in &a.positions {
            assert!(bvh.distance(p) < 1e-6);
        }
        for n in &a.normals {
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_sdf_analytic() {
        // fine sphere so faceting error stays small
        let sphere = shapes::icosphere(0.5, 5);
        let set = sample_sdf(&sphere, 0, 0, 0.01, 7).unwrap();
        assert!(set.is_empty());
        // center and outside point, checked against brute-force distances
        let bvh = Bvh::build(&sphere);
        let winding = WindingField::new(&sphere);
        let center = Vec3::zeros();
        let d_center = bvh.distance(&center);
        assert!(winding.eval(&center) > 0.5);
        assert!((d_center - 0.5).abs() < 1e-3);
        let outside = Vec3::new(0.9, 0.9, 0.9);
        let d_out = bvh.distance(&outside);
        assert!(winding.eval(&outside) < 0.5);
        assert!((d_out - (outside.norm() - 0.5)).abs() < 1e-3);
    }

    #[test]
    fn sdf_sign_matches_ray_parity() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let set = sample_sdf(&cube, 500, 500, 0.02, 13).unwrap();
        let bvh = Bvh::build(&cube);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (p, &sdf) in set.positions.iter().zip(&set.sdf) {
            // parity oracle with a random direction to dodge edge grazing
            let dir = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let crossings = bvh.ray_hits(p, &dir, 1e-12).len();
            let inside_parity = crossings % 2 == 1;
            assert_eq!(sdf < 0.0, inside_parity, "p={p:?} sdf={sdf}");
        }
    }
}
