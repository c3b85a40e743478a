//! Iso-surface extraction from the UDF via the standard 256-case marching
//! cubes table with linear edge interpolation.
//!
//! Extracting at a small iso value epsilon turns any input surface into a
//! thin two-sided shell (a closed "pillow" around open sheets).

use rayon::prelude::*;
use thiserror::Error;

use super::mc_tables::{CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE};
use super::udf::UdfGrid;
use crate::mesh::{TriangleMesh, Vec3};

#[derive(Debug, Error)]
pub enum McError {
    #[error("no grid cell crosses the iso value {0}")]
    EmptyIso(f64),
    #[error("iso value {0} outside (0, domain half extent)")]
    BadIso(f64),
}

/// Extract the `epsilon` iso-surface of the UDF as a welded triangle mesh.
pub fn extract_shell(grid: &UdfGrid, epsilon: f64) -> Result<TriangleMesh, McError> {
    let half_extent = grid.origin.x.abs();
    if !(epsilon > 0.0 && epsilon < half_extent) {
        return Err(McError::BadIso(epsilon));
    }
    let n = grid.resolution;
    let iso = epsilon;

    // Each produced triangle refers to three global edge keys; welding maps
    // each key to one interpolated vertex. Cells are processed per z-slab in
    // parallel, then stitched in slab order so the output is deterministic.
    let slabs: Vec<Vec<[u64; 3]>> = (0..n - 1)
        .into_par_iter()
        .map(|k| {
            let mut tris = Vec::new();
            for j in 0..n - 1 {
                for i in 0..n - 1 {
                    cell_triangles(grid, iso, i, j, k, &mut tris);
                }
            }
            tris
        })
        .collect();

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut edge_vertex: std::collections::HashMap<u64, u32> = std::collections::HashMap::new();
    for slab in slabs {
        for tri in slab {
            let mut face = [0u32; 3];
            for (slot, &key) in face.iter_mut().zip(tri.iter()) {
                *slot = *edge_vertex.entry(key).or_insert_with(|| {
                    vertices.push(edge_point(grid, iso, key));
                    (vertices.len() - 1) as u32
                });
            }
            // interpolated points can coincide when the iso grazes a node
            if face[0] != face[1] && face[1] != face[2] && face[0] != face[2] {
                faces.push(face);
            }
        }
    }
    if faces.is_empty() {
        return Err(McError::EmptyIso(epsilon));
    }
    Ok(TriangleMesh {
        name: "shell".into(),
        vertices,
        faces,
        face_labels: None,
    })
}

/// Global key for the axis-aligned grid edge starting at node `(i, j, k)`.
#[inline]
fn edge_key(grid: &UdfGrid, i: usize, j: usize, k: usize, axis: usize) -> u64 {
    (grid.index(i, j, k) as u64) * 3 + axis as u64
}

fn cell_triangles(grid: &UdfGrid, iso: f64, i: usize, j: usize, k: usize, out: &mut Vec<[u64; 3]>) {
    let mut case = 0usize;
    for (c, off) in CORNER_OFFSETS.iter().enumerate() {
        if (grid.value(i + off[0], j + off[1], k + off[2]) as f64) < iso {
            case |= 1 << c;
        }
    }
    if EDGE_TABLE[case] == 0 {
        return;
    }
    // map local cube edges to global edge keys
    let mut keys = [0u64; 12];
    for (e, corners) in EDGE_CORNERS.iter().enumerate() {
        if EDGE_TABLE[case] & (1 << e) == 0 {
            continue;
        }
        let a = CORNER_OFFSETS[corners[0]];
        let b = CORNER_OFFSETS[corners[1]];
        let base = [
            i + a[0].min(b[0]),
            j + a[1].min(b[1]),
            k + a[2].min(b[2]),
        ];
        let axis = if a[0] != b[0] {
            0
        } else if a[1] != b[1] {
            1
        } else {
            2
        };
        keys[e] = edge_key(grid, base[0], base[1], base[2], axis);
    }
    let row = &TRI_TABLE[case];
    let mut t = 0;
    while t + 2 < row.len() && row[t] >= 0 {
        out.push([
            keys[row[t] as usize],
            keys[row[t + 1] as usize],
            keys[row[t + 2] as usize],
        ]);
        t += 3;
    }
}

fn edge_point(grid: &UdfGrid, iso: f64, key: u64) -> Vec3 {
    let axis = (key % 3) as usize;
    let idx = (key / 3) as usize;
    let n = grid.resolution;
    let i = idx % n;
    let j = (idx / n) % n;
    let k = idx / (n * n);
    let p0 = grid.position(i, j, k);
    let (i2, j2, k2) = match axis {
        0 => (i + 1, j, k),
        1 => (i, j + 1, k),
        _ => (i, j, k + 1),
    };
    let p1 = grid.position(i2, j2, k2);
    let v0 = grid.value(i, j, k) as f64;
    let v1 = grid.value(i2, j2, k2) as f64;
    let t = if (v1 - v0).abs() < f64::MIN_POSITIVE {
        0.5
    } else {
        ((iso - v0) / (v1 - v0)).clamp(0.0, 1.0)
    };
    p0 + (p1 - p0) * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::Bvh;
    use crate::mesh::manifold_report;
    use crate::shapes;
    use crate::watertight::udf::{compute_udf, UdfConfig};

    fn shell_of(mesh: &TriangleMesh, res: usize, eps: f64) -> (TriangleMesh, Bvh, f64) {
        let bvh = Bvh::build(mesh);
        let grid = compute_udf(
            mesh,
            &bvh,
            &UdfConfig {
                resolution: res,
                band_cells: Some(8.0),
                domain_half_extent: 1.0,
            },
        )
        .unwrap();
        let spacing = grid.spacing;
        (extract_shell(&grid, eps).unwrap(), bvh, spacing)
    }

    #[test]
    fn table_consistency() {
        // every edge referenced by a triangle is flagged in the edge table,
        // and flagged edges actually straddle the iso for that case
        for case in 0..256usize {
            let mut used = 0u16;
            let row = &TRI_TABLE[case];
            let mut t = 0;
            while t < row.len() && row[t] >= 0 {
                used |= 1 << row[t];
                t += 1;
            }
            assert_eq!(used, EDGE_TABLE[case], "case {case}");
            for (e, corners) in EDGE_CORNERS.iter().enumerate() {
                let crossing =
                    ((case >> corners[0]) & 1) != ((case >> corners[1]) & 1);
                let flagged = EDGE_TABLE[case] & (1 << e) != 0;
                assert_eq!(crossing, flagged, "case {case} edge {e}");
            }
        }
    }

    #[test]
    fn sphere_shell_two_components_at_true_distance() {
        let sphere = shapes::icosphere(0.5, 4);
        let (shell, bvh, spacing) = shell_of(&sphere, 128, 0.05);
        // every shell vertex sits at distance ~epsilon from the input
        for v in &shell.vertices {
            let d = bvh.distance(v);
            assert!((d - 0.05).abs() < 2.0 * spacing, "d={d}");
        }
        // two sheets: inner and outer
        let decomp = crate::parts::connected_components(&shell).unwrap();
        assert_eq!(decomp.component_count(), 2);
        assert!(manifold_report(&shell).closed);
    }

    #[test]
    fn open_disk_becomes_closed_pillow() {
        let disk = shapes::disk(0.7, 48);
        let (shell, _, _) = shell_of(&disk, 96, 0.05);
        let report = manifold_report(&shell);
        assert!(report.closed, "{report:?}");
        let decomp = crate::parts::connected_components(&shell).unwrap();
        assert_eq!(decomp.component_count(), 1);
    }

    #[test]
    fn iso_outside_domain_rejected() {
        let sphere = shapes::icosphere(0.5, 2);
        let bvh = Bvh::build(&sphere);
        let grid = compute_udf(
            &sphere,
            &bvh,
            &UdfConfig {
                resolution: 32,
                band_cells: Some(4.0),
                domain_half_extent: 1.0,
            },
        )
        .unwrap();
        assert!(matches!(extract_shell(&grid, 0.0), Err(McError::BadIso(_))));
        assert!(matches!(extract_shell(&grid, 1.5), Err(McError::BadIso(_))));
        // iso below any crossing: whole grid is outside the band
        assert!(matches!(
            extract_shell(&grid, 1e-12),
            Err(McError::EmptyIso(_)) | Ok(_)
        ));
    }
}
