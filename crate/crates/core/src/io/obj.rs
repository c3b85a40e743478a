//! Wavefront OBJ input: `v` and `f` records, polygon faces fan-triangulated.
//!
//! Texture/normal indices, materials and groups are ignored. Negative face
//! indices are resolved relative to the vertices seen so far, per the OBJ
//! convention.

use crate::mesh::Vec3;

use super::{assemble_mesh, LoadError, LoadOptions, LoadReport};
use crate::mesh::TriangleMesh;

pub fn parse_obj(
    bytes: &[u8],
    options: &LoadOptions,
) -> Result<(TriangleMesh, LoadReport), LoadError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| LoadError::parse("obj", format!("not valid utf-8: {e}")))?;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_ascii_whitespace();
        let tag = fields.next().unwrap_or("");
        match tag {
            "v" => {
                let mut coords = [0.0f64; 3];
                for c in coords.iter_mut() {
                    let field = fields.next().ok_or_else(|| {
                        LoadError::parse(format!("line {}", lineno + 1), "vertex needs 3 coordinates")
                    })?;
                    *c = field.parse::<f64>().map_err(|e| {
                        LoadError::parse(format!("line {}", lineno + 1), format!("bad coordinate: {e}"))
                    })?;
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let mut poly: Vec<u32> = Vec::new();
                for field in fields {
                    poly.push(parse_face_index(field, vertices.len(), lineno + 1)?);
                }
                if poly.len() < 3 {
                    return Err(LoadError::parse(
                        format!("line {}", lineno + 1),
                        "face needs at least 3 vertices",
                    ));
                }
                for i in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[i], poly[i + 1]]);
                }
            }
            // vt/vn/usemtl/mtllib/o/g/s and anything else: ignored
            _ => {}
        }
    }
    assemble_mesh(vertices, faces, None, options)
}

fn parse_face_index(field: &str, vertex_count: usize, lineno: usize) -> Result<u32, LoadError> {
    let first = field.split('/').next().unwrap_or("");
    let idx: i64 = first
        .parse()
        .map_err(|e| LoadError::parse(format!("line {lineno}"), format!("bad face index: {e}")))?;
    let resolved = if idx > 0 {
        idx - 1
    } else if idx < 0 {
        vertex_count as i64 + idx
    } else {
        return Err(LoadError::parse(
            format!("line {lineno}"),
            "face index 0 is invalid",
        ));
    };
    if resolved < 0 || resolved >= vertex_count as i64 {
        return Err(LoadError::parse(
            format!("line {lineno}"),
            format!("face index {idx} out of range ({vertex_count} vertices)"),
        ));
    }
    Ok(resolved as u32)
}
