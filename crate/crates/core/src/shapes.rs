//! Procedural primitives used as pipeline fixtures and by the mock 3D backend.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::mesh::{TriangleMesh, Vec3};

/// Axis-aligned cube of the given half extent, 12 triangles with outward
/// normals.
pub fn cube(center: Vec3, half: f64) -> TriangleMesh {
    box_mesh(center, Vec3::repeat(half))
}

/// Axis-aligned box with per-axis half extents.
pub fn box_mesh(center: Vec3, half: Vec3) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
        let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
        vertices.push(center + Vec3::new(sx * half.x, sy * half.y, sz * half.z));
    }
    // Quads per box side, wound so normals face outward.
    let quads: [[u32; 4]; 6] = [
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
    ];
    let mut faces = Vec::with_capacity(12);
    for q in quads {
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    }
    TriangleMesh {
        name: "box".into(),
        vertices,
        faces,
        face_labels: None,
    }
}

/// Icosphere: subdivided icosahedron with vertices projected onto the sphere.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = vec![
        Vec3::new(-1.0, phi, 0.0),
        Vec3::new(1.0, phi, 0.0),
        Vec3::new(-1.0, -phi, 0.0),
        Vec3::new(1.0, -phi, 0.0),
        Vec3::new(0.0, -1.0, phi),
        Vec3::new(0.0, 1.0, phi),
        Vec3::new(0.0, -1.0, -phi),
        Vec3::new(0.0, 1.0, -phi),
        Vec3::new(phi, 0.0, -1.0),
        Vec3::new(phi, 0.0, 1.0),
        Vec3::new(-phi, 0.0, -1.0),
        Vec3::new(-phi, 0.0, 1.0),
    ];
    for v in &mut vertices {
        *v = v.normalize();
    }
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoints.entry(key).or_insert_with(|| {
                let m = ((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh {
        name: "icosphere".into(),
        vertices,
        faces,
        face_labels: None,
    }
}

/// Torus around the Z axis, closed and manifold.
pub fn torus(major: f64, minor: f64, seg_major: u32, seg_minor: u32) -> TriangleMesh {
    let mut vertices = Vec::with_capacity((seg_major * seg_minor) as usize);
    for i in 0..seg_major {
        let u = 2.0 * PI * i as f64 / seg_major as f64;
        let (su, cu) = u.sin_cos();
        for j in 0..seg_minor {
            let v = 2.0 * PI * j as f64 / seg_minor as f64;
            let (sv, cv) = v.sin_cos();
            let r = major + minor * cv;
            vertices.push(Vec3::new(r * cu, r * su, minor * sv));
        }
    }
    let mut faces = Vec::with_capacity((seg_major * seg_minor * 2) as usize);
    for i in 0..seg_major {
        let i2 = (i + 1) % seg_major;
        for j in 0..seg_minor {
            let j2 = (j + 1) % seg_minor;
            let a = i * seg_minor + j;
            let b = i2 * seg_minor + j;
            let c = i2 * seg_minor + j2;
            let d = i * seg_minor + j2;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh {
        name: "torus".into(),
        vertices,
        faces,
        face_labels: None,
    }
}

/// Open-ended cylinder barrel along Y (no caps).
pub fn open_cylinder(radius: f64, height: f64, segments: u32) -> TriangleMesh {
    let mut vertices = Vec::with_capacity((segments * 2) as usize);
    let h = height / 2.0;
    for i in 0..segments {
        let a = 2.0 * PI * i as f64 / segments as f64;
        let (s, c) = a.sin_cos();
        vertices.push(Vec3::new(radius * c, -h, radius * s));
        vertices.push(Vec3::new(radius * c, h, radius * s));
    }
    let mut faces = Vec::with_capacity((segments * 2) as usize);
    for i in 0..segments {
        let i2 = (i + 1) % segments;
        let (b0, t0, b1, t1) = (2 * i, 2 * i + 1, 2 * i2, 2 * i2 + 1);
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
    }
    TriangleMesh {
        name: "open_cylinder".into(),
        vertices,
        faces,
        face_labels: None,
    }
}

/// Flat open disk in the z=0 plane, triangulated as a fan.
pub fn disk(radius: f64, segments: u32) -> TriangleMesh {
    let mut vertices = vec![Vec3::zeros()];
    for i in 0..segments {
        let a = 2.0 * PI * i as f64 / segments as f64;
        vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), 0.0));
    }
    let mut faces = Vec::with_capacity(segments as usize);
    for i in 0..segments {
        let i2 = (i + 1) % segments;
        faces.push([0, 1 + i, 1 + i2]);
    }
    TriangleMesh {
        name: "disk".into(),
        vertices,
        faces,
        face_labels: None,
    }
}

/// Single quad (two triangles) spanning [-w, w]^2 in the y=0 plane.
pub fn quad_y0(half_width: f64) -> TriangleMesh {
    let w = half_width;
    TriangleMesh {
        name: "quad".into(),
        vertices: vec![
            Vec3::new(-w, 0.0, -w),
            Vec3::new(w, 0.0, -w),
            Vec3::new(w, 0.0, w),
            Vec3::new(-w, 0.0, w),
        ],
        faces: vec![[0, 1, 2], [0, 2, 3]],
        face_labels: None,
    }
}

/// Concatenate meshes into one (vertices disjoint, labels preserved when
/// every part has them).
pub fn concat(meshes: &[&TriangleMesh]) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let all_labeled = meshes.iter().all(|m| m.face_labels.is_some());
    let mut labels = if all_labeled { Some(Vec::new()) } else { None };
    for m in meshes {
        let base = vertices.len() as u32;
        vertices.extend_from_slice(&m.vertices);
        faces.extend(m.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        if let (Some(out), Some(src)) = (labels.as_mut(), m.face_labels.as_ref()) {
            out.extend_from_slice(src);
        }
    }
    TriangleMesh {
        name: "concat".into(),
        vertices,
        faces,
        face_labels: labels,
    }
}

/// Two interpenetrating cubes, a self-intersecting non-manifold union.
pub fn two_cube_union() -> TriangleMesh {
    let a = cube(Vec3::new(-0.25, 0.0, 0.0), 0.5);
    let b = cube(Vec3::new(0.25, 0.2, 0.1), 0.5);
    let mut m = concat(&[&a, &b]);
    m.name = "two_cube_union".into();
    m
}

/// Table-like assembly: a slab top and four legs, legs open where they meet
/// the top (five connected components).
pub fn table() -> TriangleMesh {
    let top = box_mesh(Vec3::new(0.0, 0.95, 0.0), Vec3::new(1.0, 0.05, 0.7));
    let mut parts: Vec<TriangleMesh> = vec![top];
    for (sx, sz) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
        let leg = open_box_y(
            Vec3::new(0.85 * sx, 0.45, 0.55 * sz),
            Vec3::new(0.06, 0.45, 0.06),
        );
        parts.push(leg);
    }
    let refs: Vec<&TriangleMesh> = parts.iter().collect();
    let mut m = concat(&refs);
    m.name = "table".into();
    m
}

/// Box without its +y face: open at the top.
fn open_box_y(center: Vec3, half: Vec3) -> TriangleMesh {
    let full = box_mesh(center, half);
    // Quad order in box_mesh: -x,+x,-y,+y,-z,+z; faces 6 and 7 are +y.
    let keep: Vec<u32> = (0..12u32).filter(|&f| f != 6 && f != 7).collect();
    full.submesh(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{manifold_report, surface_area};

    #[test]
    fn primitives_are_well_formed() {
        for (mesh, closed) in [
            (cube(Vec3::zeros(), 0.5), true),
            (icosphere(0.5, 3), true),
            (torus(0.6, 0.2, 32, 16), true),
            (open_cylinder(0.5, 1.2, 32), false),
            (disk(0.6, 24), false),
        ] {
            mesh.validate().unwrap();
            assert_eq!(manifold_report(&mesh).closed, closed, "{}", mesh.name);
        }
    }

    #[test]
    fn cube_volume_positive() {
        // outward winding
        let c = cube(Vec3::zeros(), 0.5);
        assert!((c.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_has_five_components_worth_of_area() {
        let t = table();
        assert!(surface_area(&t, None) > 0.0);
        assert!(!manifold_report(&t).closed); // legs are open at the joint
    }
}
