//! Binary little-endian PLY reader/writer.
//!
//! The writer emits `double` vertex coordinates so save/load round-trips are
//! bit-identical, plus an optional `ushort part_id` per face. The reader
//! additionally accepts `float` coordinates, arbitrary extra scalar
//! properties (skipped) and the usual zoo of list count/index types.

use crate::mesh::{TriangleMesh, Vec3};

use super::{assemble_mesh, LoadError, LoadOptions, LoadReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<ScalarType> {
        Some(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List { name: String, count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LoadError> {
        if self.pos + n > self.bytes.len() {
            return Err(LoadError::parse(
                format!("byte {}", self.pos),
                "unexpected end of file (element data truncated)",
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_scalar(&mut self, ty: ScalarType) -> Result<f64, LoadError> {
        let raw = self.take(ty.size())?;
        Ok(match ty {
            ScalarType::I8 => raw[0] as i8 as f64,
            ScalarType::U8 => raw[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([raw[0], raw[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([raw[0], raw[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(raw.try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(raw.try_into().unwrap()) as f64,
            ScalarType::F32 => f32::from_le_bytes(raw.try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(raw.try_into().unwrap()),
        })
    }
}

pub fn parse_ply(
    bytes: &[u8],
    options: &LoadOptions,
) -> Result<(TriangleMesh, LoadReport), LoadError> {
    let (elements, body_start) = parse_header(bytes)?;
    let mut cursor = Cursor {
        bytes,
        pos: body_start,
    };

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut labels: Option<Vec<u16>> = None;

    for element in &elements {
        match element.name.as_str() {
            "vertex" => read_vertices(&mut cursor, element, &mut vertices)?,
            "face" => read_faces(&mut cursor, element, vertices.len(), &mut faces, &mut labels)?,
            _ => skip_element(&mut cursor, element)?,
        }
    }
    let labels = match labels {
        Some(l) if l.len() == faces.len() => Some(l),
        _ => None,
    };
    assemble_mesh(vertices, faces, labels, options)
}

fn parse_header(bytes: &[u8]) -> Result<(Vec<Element>, usize), LoadError> {
    let mut elements: Vec<Element> = Vec::new();
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut saw_format = false;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|k| pos + k)
            .ok_or_else(|| LoadError::parse("header", "missing end_header"))?;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| LoadError::parse(format!("header line {}", line_no + 1), "non-utf8 header"))?
            .trim_end_matches('\r')
            .trim();
        pos = end + 1;
        line_no += 1;
        if line_no == 1 {
            if line != "ply" {
                return Err(LoadError::parse("header", "missing 'ply' magic"));
            }
            continue;
        }
        let mut fields = line.split_ascii_whitespace();
        match fields.next().unwrap_or("") {
            "format" => {
                let kind = fields.next().unwrap_or("");
                if kind != "binary_little_endian" {
                    return Err(LoadError::parse(
                        "header",
                        format!("unsupported format '{kind}' (binary_little_endian only)"),
                    ));
                }
                saw_format = true;
            }
            "comment" | "obj_info" => {}
            "element" => {
                let name = fields
                    .next()
                    .ok_or_else(|| LoadError::parse("header", "element without name"))?;
                let count: usize = fields
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| LoadError::parse("header", "element without valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| LoadError::parse("header", "property before any element"))?;
                let first = fields.next().unwrap_or("");
                if first == "list" {
                    let count = fields.next().and_then(ScalarType::parse).ok_or_else(|| {
                        LoadError::parse("header", "bad list count type")
                    })?;
                    let item = fields.next().and_then(ScalarType::parse).ok_or_else(|| {
                        LoadError::parse("header", "bad list item type")
                    })?;
                    let name = fields
                        .next()
                        .ok_or_else(|| LoadError::parse("header", "list property without name"))?;
                    element.properties.push(Property::List {
                        name: name.to_string(),
                        count,
                        item,
                    });
                } else {
                    let ty = ScalarType::parse(first)
                        .ok_or_else(|| LoadError::parse("header", format!("unknown type '{first}'")))?;
                    let name = fields
                        .next()
                        .ok_or_else(|| LoadError::parse("header", "property without name"))?;
                    element.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            "end_header" => {
                if !saw_format {
                    return Err(LoadError::parse("header", "missing format line"));
                }
                return Ok((elements, pos));
            }
            other => {
                return Err(LoadError::parse(
                    format!("header line {line_no}"),
                    format!("unknown keyword '{other}'"),
                ));
            }
        }
    }
}

fn read_vertices(
    cursor: &mut Cursor,
    element: &Element,
    vertices: &mut Vec<Vec3>,
) -> Result<(), LoadError> {
    let mut xyz_slots = [usize::MAX; 3];
    for (pi, p) in element.properties.iter().enumerate() {
        if let Property::Scalar { name, .. } = p {
            match name.as_str() {
                "x" => xyz_slots[0] = pi,
                "y" => xyz_slots[1] = pi,
                "z" => xyz_slots[2] = pi,
                _ => {}
            }
        }
    }
    if xyz_slots.contains(&usize::MAX) {
        return Err(LoadError::parse("vertex element", "missing x/y/z properties"));
    }
    vertices.reserve(element.count.min(1 << 20));
    for _ in 0..element.count {
        let mut coords = [0.0f64; 3];
        for (pi, p) in element.properties.iter().enumerate() {
            match p {
                Property::Scalar { ty, .. } => {
                    let v = cursor.read_scalar(*ty)?;
                    if let Some(axis) = xyz_slots.iter().position(|&s| s == pi) {
                        coords[axis] = v;
                    }
                }
                Property::List { count, item, .. } => {
                    skip_list(cursor, *count, *item)?;
                }
            }
        }
        vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
    }
    Ok(())
}

fn read_faces(
    cursor: &mut Cursor,
    element: &Element,
    vertex_count: usize,
    faces: &mut Vec<[u32; 3]>,
    labels: &mut Option<Vec<u16>>,
) -> Result<(), LoadError> {
    faces.reserve(element.count.min(1 << 20));
    for fi in 0..element.count {
        let mut poly: Vec<u32> = Vec::new();
        let mut label: Option<u16> = None;
        for p in &element.properties {
            match p {
                Property::List { name, count, item } => {
                    if name == "vertex_indices" || name == "vertex_index" {
                        let n = cursor.read_scalar(*count)? as i64;
                        if !(0..=255).contains(&n) {
                            return Err(LoadError::parse(
                                format!("face {fi}"),
                                format!("unreasonable polygon size {n}"),
                            ));
                        }
                        for _ in 0..n {
                            let idx = cursor.read_scalar(*item)?;
                            if idx < 0.0 || idx >= vertex_count as f64 {
                                return Err(LoadError::parse(
                                    format!("face {fi}"),
                                    format!("vertex index {idx} out of range"),
                                ));
                            }
                            poly.push(idx as u32);
                        }
                    } else {
                        skip_list(cursor, *count, *item)?;
                    }
                }
                Property::Scalar { name, ty } => {
                    let v = cursor.read_scalar(*ty)?;
                    if name == "part_id" {
                        label = Some(v.clamp(0.0, u16::MAX as f64) as u16);
                    }
                }
            }
        }
        if poly.len() < 3 {
            return Err(LoadError::parse(
                format!("face {fi}"),
                "face with fewer than 3 vertices",
            ));
        }
        for i in 1..poly.len() - 1 {
            faces.push([poly[0], poly[i], poly[i + 1]]);
            if let Some(l) = label {
                labels.get_or_insert_with(Vec::new).push(l);
            }
        }
    }
    Ok(())
}

fn skip_list(cursor: &mut Cursor, count: ScalarType, item: ScalarType) -> Result<(), LoadError> {
    let n = cursor.read_scalar(count)? as i64;
    if !(0..=65_535).contains(&n) {
        return Err(LoadError::parse("list property", format!("unreasonable list size {n}")));
    }
    cursor.take(n as usize * item.size())?;
    Ok(())
}

fn skip_element(cursor: &mut Cursor, element: &Element) -> Result<(), LoadError> {
    for _ in 0..element.count {
        for p in &element.properties {
            match p {
                Property::Scalar { ty, .. } => {
                    cursor.take(ty.size())?;
                }
                Property::List { count, item, .. } => skip_list(cursor, *count, *item)?,
            }
        }
    }
    Ok(())
}

/// Encode as binary little-endian PLY with double-precision coordinates.
pub fn encode_ply(mesh: &TriangleMesh) -> Vec<u8> {
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    header.push_str(&format!("element face {}\n", mesh.faces.len()));
    header.push_str("property list uchar uint vertex_indices\n");
    if mesh.face_labels.is_some() {
        header.push_str("property ushort part_id\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for (fi, f) in mesh.faces.iter().enumerate() {
        out.push(3u8);
        for &idx in f {
            out.extend_from_slice(&idx.to_le_bytes());
        }
        if let Some(labels) = &mesh.face_labels {
            out.extend_from_slice(&labels[fi].to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_ply(vertex_count_declared: usize, vertices: usize) -> Vec<u8> {
        let mut out = format!(
            "ply\nformat binary_little_endian 1.0\nelement vertex {vertex_count_declared}\n\
             property float x\nproperty float y\nproperty float z\n\
             element face 1\nproperty list uchar int vertex_indices\nend_header\n"
        )
        .into_bytes();
        for i in 0..vertices {
            for c in [i as f32, 0.0, 0.0] {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out.push(3);
        for idx in [0i32, 1, 2] {
            out.extend_from_slice(&idx.to_le_bytes());
        }
        out
    }

    #[test]
    fn minimal_binary_triangle() {
        let bytes = tiny_ply(3, 3);
        let (mesh, _) = parse_ply(&bytes, &LoadOptions::default()).unwrap();
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn truncated_vertex_data_is_parse_error() {
        let bytes = tiny_ply(10, 8);
        let err = parse_ply(&bytes, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, LoadError::Parse { .. }), "{err}");
    }

    #[test]
    fn ascii_ply_rejected() {
        let bytes = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(parse_ply(bytes, &LoadOptions::default()).is_err());
    }

    #[test]
    fn quad_faces_fan_triangulated() {
        let mut out = "ply\nformat binary_little_endian 1.0\nelement vertex 4\n\
             property double x\nproperty double y\nproperty double z\n\
             element face 1\nproperty list uchar uint vertex_indices\nend_header\n"
            .to_string()
            .into_bytes();
        for v in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]] {
            for c in v {
                out.extend_from_slice(&(c as f64).to_le_bytes());
            }
        }
        out.push(4);
        for idx in [0u32, 1, 2, 3] {
            out.extend_from_slice(&idx.to_le_bytes());
        }
        let (mesh, _) = parse_ply(&out, &LoadOptions::default()).unwrap();
        assert_eq!(mesh.faces.len(), 2);
    }
}
