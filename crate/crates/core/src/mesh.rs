//! Indexed triangle meshes and the topology/transform predicates shared by
//! every pipeline stage.

use std::collections::HashMap;

use nalgebra::Matrix3;
use thiserror::Error;

/// 3D point/vector type used throughout the crate.
pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but mesh has {vertex_count} vertices")]
    InvalidIndex {
        face: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("face {0} repeats a vertex index")]
    DegenerateFace(usize),
    #[error("face_labels has {labels} entries for {faces} faces")]
    LabelMismatch { labels: usize, faces: usize },
    #[error("mesh bounding box has no positive extent")]
    DegenerateExtent,
}

/// Indexed triangle soup with optional per-face part labels.
///
/// Vertices are unitless model-space positions. Invariants (all indices in
/// range, no face repeating a vertex, labels one-per-face) are enforced by
/// [`TriangleMesh::new`]; constructing through the public fields is allowed
/// for internal code that upholds them by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub face_labels: Option<Vec<u16>>,
}

impl TriangleMesh {
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        face_labels: Option<Vec<u16>>,
    ) -> Result<Self, MeshError> {
        let mesh = Self {
            name: name.into(),
            vertices,
            faces,
            face_labels,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.faces.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let vc = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v as usize >= vc {
                    return Err(MeshError::InvalidIndex {
                        face: fi,
                        index: v,
                        vertex_count: vc,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace(fi));
            }
        }
        if let Some(labels) = &self.face_labels {
            if labels.len() != self.faces.len() {
                return Err(MeshError::LabelMismatch {
                    labels: labels.len(),
                    faces: self.faces.len(),
                });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    #[inline]
    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).norm() * 0.5
    }

    /// Unit normal of a face; zero vector for areal-degenerate faces.
    #[inline]
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Signed volume enclosed by the mesh (meaningful for closed, outward
    /// oriented meshes) via the divergence theorem.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (
                    self.vertices[a as usize],
                    self.vertices[b as usize],
                    self.vertices[c as usize],
                );
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Keep only the faces selected by `keep`, dropping unreferenced vertices.
    pub fn submesh(&self, keep: &[u32]) -> TriangleMesh {
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut faces = Vec::with_capacity(keep.len());
        let mut labels = self.face_labels.as_ref().map(|_| Vec::with_capacity(keep.len()));
        for &fi in keep {
            let face = self.faces[fi as usize];
            let mut nf = [0u32; 3];
            for (slot, &v) in nf.iter_mut().zip(face.iter()) {
                *slot = *remap.entry(v).or_insert_with(|| {
                    vertices.push(self.vertices[v as usize]);
                    (vertices.len() - 1) as u32
                });
            }
            faces.push(nf);
            if let (Some(out), Some(src)) = (labels.as_mut(), self.face_labels.as_ref()) {
                out.push(src[fi as usize]);
            }
        }
        TriangleMesh {
            name: self.name.clone(),
            vertices,
            faces,
            face_labels: labels,
        }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points(points: &[Vec3]) -> Aabb {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Aabb { min, max }
    }

    #[inline]
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    #[inline]
    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    #[inline]
    pub fn longest_side(&self) -> f64 {
        self.extent().max()
    }

    #[inline]
    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn grown(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min - Vec3::repeat(margin),
            max: self.max + Vec3::repeat(margin),
        }
    }

    /// Squared distance from `p` to this box (0 inside).
    #[inline]
    pub fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = p[i];
            if v < self.min[i] {
                d += (self.min[i] - v) * (self.min[i] - v);
            } else if v > self.max[i] {
                d += (v - self.max[i]) * (v - self.max[i]);
            }
        }
        d
    }

    /// Squared distance between two boxes (0 if overlapping).
    pub fn box_distance_sq(&self, other: &Aabb) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let gap = (self.min[i] - other.max[i]).max(other.min[i] - self.max[i]).max(0.0);
            d += gap * gap;
        }
        d
    }
}

/// Rigid rotation + uniform scale + translation, applied as
/// `x' = rotation * (scale * x) + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    pub translation: Vec3,
    pub uniform_scale: f64,
    pub rotation: Matrix3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            uniform_scale: 1.0,
            rotation: Matrix3::identity(),
        }
    }

    pub fn validate(&self) -> bool {
        self.uniform_scale > 0.0 && (self.rotation.determinant() - 1.0).abs() <= 1e-9
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * (p * self.uniform_scale) + self.translation
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv_scale = 1.0 / self.uniform_scale;
        let inv_rot = self.rotation.transpose();
        SimilarityTransform {
            translation: inv_rot * (-self.translation) * inv_scale,
            uniform_scale: inv_scale,
            rotation: inv_rot,
        }
    }

    pub fn apply_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        TriangleMesh {
            name: mesh.name.clone(),
            vertices: mesh.vertices.iter().map(|v| self.apply(v)).collect(),
            faces: mesh.faces.clone(),
            face_labels: mesh.face_labels.clone(),
        }
    }
}

/// Sum of triangle areas over `subset` (all faces when `None`).
pub fn surface_area(mesh: &TriangleMesh, subset: Option<&[u32]>) -> f64 {
    match subset {
        Some(faces) => faces.iter().map(|&f| mesh.face_area(f as usize)).sum(),
        None => (0..mesh.faces.len()).map(|f| mesh.face_area(f)).sum(),
    }
}

/// Center the mesh at the origin and scale so the longest AABB side becomes
/// `2 * (1 - pad)`. Returns the transform mapping normalized coordinates back
/// to the original frame.
///
/// The pad keeps a margin of empty grid cells around the asset inside the
/// canonical `[-1, 1]^3` sampling domain.
pub fn normalize_unit(
    mesh: &TriangleMesh,
    pad: f64,
) -> Result<(TriangleMesh, SimilarityTransform), MeshError> {
    let aabb = mesh.aabb();
    let longest = aabb.longest_side();
    if !(longest > 0.0) {
        return Err(MeshError::DegenerateExtent);
    }
    let scale = 2.0 * (1.0 - pad) / longest;
    let center = aabb.center();
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| (v - center) * scale)
        .collect();
    // normalized -> original: x = x_n / scale + center
    let back = SimilarityTransform {
        translation: center,
        uniform_scale: 1.0 / scale,
        rotation: Matrix3::identity(),
    };
    Ok((
        TriangleMesh {
            name: mesh.name.clone(),
            vertices,
            faces: mesh.faces.clone(),
            face_labels: mesh.face_labels.clone(),
        },
        back,
    ))
}

/// Rotate -90 degrees about X: +Z maps to +Y, +Y maps to -Z.
pub fn rotate_z_up_to_y_up(mesh: &TriangleMesh) -> TriangleMesh {
    TriangleMesh {
        name: mesh.name.clone(),
        vertices: mesh
            .vertices
            .iter()
            .map(|v| Vec3::new(v.x, v.z, -v.y))
            .collect(),
        faces: mesh.faces.clone(),
        face_labels: mesh.face_labels.clone(),
    }
}

/// Edge-level topology summary.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifoldReport {
    /// Every edge has exactly two incident faces.
    pub closed: bool,
    /// No over-shared edges and face orientations are consistent.
    pub manifold: bool,
    /// V - E + F over referenced vertices.
    pub euler: i64,
    pub boundary_edge_count: usize,
    pub nonmanifold_edge_count: usize,
}

/// Classify every edge of the mesh and compute the Euler characteristic.
pub fn manifold_report(mesh: &TriangleMesh) -> ManifoldReport {
    // For each undirected edge record how often each direction is used.
    let mut edges: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let a = f[k];
            let b = f[(k + 1) % 3];
            let (key, fwd) = if a < b { ((a, b), true) } else { ((b, a), false) };
            let e = edges.entry(key).or_insert((0, 0));
            if fwd {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    let mut boundary = 0usize;
    let mut nonmanifold = 0usize;
    let mut oriented = true;
    for &(fwd, rev) in edges.values() {
        let total = fwd + rev;
        match total {
            1 => boundary += 1,
            2 => {
                // A consistently oriented closed edge is used once per direction.
                if fwd != 1 || rev != 1 {
                    oriented = false;
                }
            }
            _ => nonmanifold += 1,
        }
    }
    let mut referenced: Vec<u32> = mesh.faces.iter().flatten().copied().collect();
    referenced.sort_unstable();
    referenced.dedup();
    let v = referenced.len() as i64;
    let e = edges.len() as i64;
    let f = mesh.faces.len() as i64;
    let closed = boundary == 0 && nonmanifold == 0 && !mesh.faces.is_empty();
    ManifoldReport {
        closed,
        manifold: nonmanifold == 0 && oriented,
        euler: v - e + f,
        boundary_edge_count: boundary,
        nonmanifold_edge_count: nonmanifold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn rejects_out_of_range_and_degenerate_faces() {
        let verts = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(matches!(
            TriangleMesh::new("m", verts.clone(), vec![[0, 1, 3]], None),
            Err(MeshError::InvalidIndex { .. })
        ));
        assert!(matches!(
            TriangleMesh::new("m", verts.clone(), vec![[0, 1, 1]], None),
            Err(MeshError::DegenerateFace(0))
        ));
        assert!(matches!(
            TriangleMesh::new("m", verts, vec![], None),
            Err(MeshError::EmptyMesh)
        ));
    }

    #[test]
    fn cube_area_and_subset() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        assert!((surface_area(&cube, None) - 6.0).abs() < 1e-9);
        assert!((surface_area(&cube, Some(&[0])) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn icosphere_area_close_to_analytic() {
        let sphere = shapes::icosphere(1.0, 4);
        let area = surface_area(&sphere, None);
        let exact = 4.0 * std::f64::consts::PI;
        assert!((area - exact).abs() / exact < 0.01, "area {area}");
    }

    #[test]
    fn normalize_centers_and_scales() {
        let cube = shapes::cube(Vec3::new(1.0, 1.0, 1.0), 1.0); // spans [0,2]^3
        let (norm, back) = normalize_unit(&cube, 0.0).unwrap();
        let aabb = norm.aabb();
        assert!((aabb.min + Vec3::repeat(1.0)).norm() < 1e-12);
        assert!((aabb.max - Vec3::repeat(1.0)).norm() < 1e-12);
        // transform recovers the original vertices
        for (orig, n) in cube.vertices.iter().zip(norm.vertices.iter()) {
            assert!((back.apply(n) - orig).norm() < 1e-12);
        }
    }

    #[test]
    fn normalize_offcenter_sphere() {
        let mut sphere = shapes::icosphere(3.0, 3);
        for v in &mut sphere.vertices {
            *v += Vec3::new(5.0, 0.0, 0.0);
        }
        let (norm, _) = normalize_unit(&sphere, 0.0).unwrap();
        let aabb = norm.aabb();
        assert!(aabb.center().norm() < 1e-9);
        assert!((aabb.longest_side() - 2.0).abs() < 1e-9);
        // oracle: the AABB of the transformed vertices stays within the unit box
        for v in &norm.vertices {
            assert!(v.norm() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn normalize_rejects_point_cloud() {
        let verts = vec![Vec3::repeat(2.0); 3];
        let mesh = TriangleMesh {
            name: "pt".into(),
            vertices: verts,
            faces: vec![[0, 1, 2]],
            face_labels: None,
        };
        assert!(matches!(
            normalize_unit(&mesh, 0.02),
            Err(MeshError::DegenerateExtent)
        ));
    }

    #[test]
    fn y_up_rotation_convention() {
        let mesh = TriangleMesh {
            name: "axes".into(),
            vertices: vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0), Vec3::x()],
            faces: vec![[0, 1, 2]],
            face_labels: None,
        };
        let r = rotate_z_up_to_y_up(&mesh);
        assert!((r.vertices[0] - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!((r.vertices[1] - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn four_rotations_are_identity() {
        let mesh = shapes::icosphere(0.7, 2);
        let mut m = mesh.clone();
        for _ in 0..4 {
            m = rotate_z_up_to_y_up(&m);
        }
        for (a, b) in mesh.vertices.iter().zip(m.vertices.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn manifold_report_cases() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let r = manifold_report(&cube);
        assert!(r.closed && r.manifold);
        assert_eq!(r.euler, 2);

        let tri = TriangleMesh {
            name: "tri".into(),
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            faces: vec![[0, 1, 2]],
            face_labels: None,
        };
        let r = manifold_report(&tri);
        assert!(!r.closed);
        assert_eq!(r.boundary_edge_count, 3);

        // three faces sharing one edge
        let fan = TriangleMesh {
            name: "fan".into(),
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z(), Vec3::new(0.0, -1.0, 0.0)],
            faces: vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]],
            face_labels: None,
        };
        let r = manifold_report(&fan);
        assert_eq!(r.nonmanifold_edge_count, 1);
        assert!(!r.manifold);
    }

    #[test]
    fn torus_euler_is_zero() {
        let torus = shapes::torus(0.6, 0.2, 48, 24);
        let r = manifold_report(&torus);
        assert!(r.closed && r.manifold);
        assert_eq!(r.euler, 0);
    }
}
