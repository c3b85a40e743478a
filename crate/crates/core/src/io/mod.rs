//! Mesh file IO: OBJ input, binary little-endian PLY input/output.

mod obj;
mod ply;

use std::path::Path;

use thiserror::Error;

use crate::mesh::TriangleMesh;

pub use obj::parse_obj;
pub use ply::{encode_ply, parse_ply};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    /// Infer the format from a file extension.
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::Ply),
            _ => None,
        }
    }
}

/// What the loader dropped or repaired while reading a file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct LoadReport {
    pub degenerate_faces_dropped: usize,
}

/// How to treat faces that repeat a vertex index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegeneratePolicy {
    /// Drop the face and count it in the [`LoadReport`].
    #[default]
    Drop,
    /// Fail the load.
    Error,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub degenerate: DegeneratePolicy,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("mesh has no faces after cleanup")]
    EmptyMesh,
    #[error("degenerate face at index {0}")]
    DegenerateFace(usize),
}

impl LoadError {
    pub(crate) fn parse(location: impl std::fmt::Display, message: impl Into<String>) -> Self {
        LoadError::Parse {
            location: location.to_string(),
            message: message.into(),
        }
    }
}

/// Load a mesh from disk, dropping (and counting) degenerate faces.
pub fn load_mesh(
    path: impl AsRef<Path>,
    format: MeshFormat,
) -> Result<(TriangleMesh, LoadReport), LoadError> {
    load_mesh_with(path, format, &LoadOptions::default())
}

pub fn load_mesh_with(
    path: impl AsRef<Path>,
    format: MeshFormat,
    options: &LoadOptions,
) -> Result<(TriangleMesh, LoadReport), LoadError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    let (mut mesh, report) = match format {
        MeshFormat::Obj => parse_obj(&bytes, options)?,
        MeshFormat::Ply => parse_ply(&bytes, options)?,
    };
    mesh.name = name;
    Ok((mesh, report))
}

/// Write a mesh as binary little-endian PLY (the only output format).
pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<(), LoadError> {
    let bytes = encode_ply(mesh);
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Shared face-assembly step: validates indices, applies the degenerate-face
/// policy and builds the final mesh.
pub(crate) fn assemble_mesh(
    vertices: Vec<crate::mesh::Vec3>,
    raw_faces: Vec<[u32; 3]>,
    raw_labels: Option<Vec<u16>>,
    options: &LoadOptions,
) -> Result<(TriangleMesh, LoadReport), LoadError> {
    let vc = vertices.len() as u64;
    let mut faces = Vec::with_capacity(raw_faces.len());
    let mut labels = raw_labels.as_ref().map(|_| Vec::with_capacity(raw_faces.len()));
    let mut dropped = 0usize;
    for (fi, f) in raw_faces.iter().enumerate() {
        if f.iter().any(|&v| v as u64 >= vc) {
            return Err(LoadError::parse(
                format!("face {fi}"),
                format!("vertex index out of range (vertex count {vc})"),
            ));
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            match options.degenerate {
                DegeneratePolicy::Drop => {
                    dropped += 1;
                    continue;
                }
                DegeneratePolicy::Error => return Err(LoadError::DegenerateFace(fi)),
            }
        }
        faces.push(*f);
        if let (Some(out), Some(src)) = (labels.as_mut(), raw_labels.as_ref()) {
            out.push(src[fi]);
        }
    }
    if faces.is_empty() {
        return Err(LoadError::EmptyMesh);
    }
    Ok((
        TriangleMesh {
            name: "mesh".into(),
            vertices,
            faces,
            face_labels: labels,
        },
        LoadReport {
            degenerate_faces_dropped: dropped,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vec3;
    use crate::shapes;

    #[test]
    fn save_load_round_trip_is_bit_identical() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.ply");
        save_mesh(&cube, &path).unwrap();
        let (loaded, report) = load_mesh(&path, MeshFormat::Ply).unwrap();
        assert_eq!(report.degenerate_faces_dropped, 0);
        assert_eq!(loaded.vertices, cube.vertices);
        assert_eq!(loaded.faces, cube.faces);
    }

    #[test]
    fn face_labels_survive_round_trip() {
        let mut cube = shapes::cube(Vec3::zeros(), 0.5);
        cube.face_labels = Some((0..12u16).collect());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labeled.ply");
        save_mesh(&cube, &path).unwrap();
        let (loaded, _) = load_mesh(&path, MeshFormat::Ply).unwrap();
        assert_eq!(loaded.face_labels, cube.face_labels);
        assert_eq!(loaded.vertices, cube.vertices);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let err = save_mesh(&cube, "/nonexistent-dir/cube.ply").unwrap_err();
        assert!(matches!(err, LoadError::Io(_)));
    }
}
