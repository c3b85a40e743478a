//! PTS1: the binary container for exported training samples.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    "PTS1"          4 bytes
//! version  u32             currently 1
//! K        u64             surface record count
//! C        u32             attribute channels per surface record (3 = normals)
//! M        u64             sdf record count
//! reserved u32             zero
//! surface  K * (3 + C) f32 position + attributes
//! tags     K u8            0 = uniform, 1 = sharp edge
//! sdf      M * 4 f32       position + signed distance
//! tags     M u8            0 = near surface, 1 = volume
//! ```

use std::path::Path;

use thiserror::Error;

use crate::sampling::{BandTag, SampleSource, SdfSampleSet, SurfaceSampleSet};

pub const PTS_MAGIC: &[u8; 4] = b"PTS1";
pub const PTS_VERSION: u32 = 1;
pub const PTS_HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum PtsError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

fn parse_err(offset: usize, message: impl Into<String>) -> PtsError {
    PtsError::Parse {
        offset,
        message: message.into(),
    }
}

/// Decoded PTS1 payload. Arrays are stored exactly as on disk (f32), so
/// encode/parse round-trips are byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct PtsFile {
    pub channels: u32,
    /// `K * (3 + channels)` floats, position first.
    pub surface: Vec<f32>,
    pub surface_tags: Vec<u8>,
    /// `M * 4` floats: xyz + sdf.
    pub sdf: Vec<f32>,
    pub sdf_tags: Vec<u8>,
}

impl PtsFile {
    pub fn surface_count(&self) -> usize {
        self.surface_tags.len()
    }

    pub fn sdf_count(&self) -> usize {
        self.sdf_tags.len()
    }

    pub fn from_samples(surface: &SurfaceSampleSet, sdf: &SdfSampleSet) -> PtsFile {
        let channels = 3u32;
        let mut surf = Vec::with_capacity(surface.len() * 6);
        for (p, n) in surface.positions.iter().zip(&surface.normals) {
            for c in [p.x, p.y, p.z, n.x, n.y, n.z] {
                surf.push(c as f32);
            }
        }
        let surface_tags = surface
            .tags
            .iter()
            .map(|t| match t {
                SampleSource::Uniform => 0u8,
                SampleSource::SharpEdge => 1,
            })
            .collect();
        let mut sdf_records = Vec::with_capacity(sdf.len() * 4);
        for (p, &d) in sdf.positions.iter().zip(&sdf.sdf) {
            for c in [p.x, p.y, p.z, d] {
                sdf_records.push(c as f32);
            }
        }
        let sdf_tags = sdf
            .tags
            .iter()
            .map(|t| match t {
                BandTag::NearSurface => 0u8,
                BandTag::Volume => 1,
            })
            .collect();
        PtsFile {
            channels,
            surface: surf,
            surface_tags,
            sdf: sdf_records,
            sdf_tags,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let k = self.surface_tags.len() as u64;
        let m = self.sdf_tags.len() as u64;
        let mut out = Vec::with_capacity(
            PTS_HEADER_LEN + self.surface.len() * 4 + self.sdf.len() * 4 + (k + m) as usize,
        );
        out.extend_from_slice(PTS_MAGIC);
        out.extend_from_slice(&PTS_VERSION.to_le_bytes());
        out.extend_from_slice(&k.to_le_bytes());
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&m.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.surface {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.surface_tags);
        for v in &self.sdf {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.sdf_tags);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<PtsFile, PtsError> {
        if bytes.len() < PTS_HEADER_LEN {
            return Err(parse_err(0, "file shorter than header"));
        }
        if &bytes[0..4] != PTS_MAGIC {
            return Err(parse_err(0, "bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != PTS_VERSION {
            return Err(parse_err(4, format!("unsupported version {version}")));
        }
        let k = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let channels = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        let m = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        if channels > 64 {
            return Err(parse_err(16, format!("unreasonable channel count {channels}")));
        }
        let record = 3usize + channels as usize;
        let expected = (k as u128)
            .checked_mul(record as u128 * 4 + 1)
            .and_then(|s| s.checked_add(m as u128 * (16 + 1)))
            .and_then(|s| s.checked_add(PTS_HEADER_LEN as u128))
            .ok_or_else(|| parse_err(8, "size overflow"))?;
        if expected != bytes.len() as u128 {
            return Err(parse_err(
                PTS_HEADER_LEN,
                format!("expected {expected} bytes for K={k} C={channels} M={m}, got {}", bytes.len()),
            ));
        }
        let k = k as usize;
        let m = m as usize;
        let mut pos = PTS_HEADER_LEN;
        let read_f32s = |pos: &mut usize, count: usize| -> Vec<f32> {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                out.push(f32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap()));
                *pos += 4;
            }
            out
        };
        let surface = read_f32s(&mut pos, k * record);
        let surface_tags = bytes[pos..pos + k].to_vec();
        pos += k;
        let sdf = read_f32s(&mut pos, m * 4);
        let sdf_tags = bytes[pos..pos + m].to_vec();
        Ok(PtsFile {
            channels,
            surface,
            surface_tags,
            sdf,
            sdf_tags,
        })
    }
}

/// Write surface + SDF sample sets as a PTS1 file.
pub fn export_samples(
    surface: &SurfaceSampleSet,
    sdf: &SdfSampleSet,
    path: impl AsRef<Path>,
) -> Result<(), PtsError> {
    let file = PtsFile::from_samples(surface, sdf);
    std::fs::write(path, file.encode())?;
    Ok(())
}

pub fn import_samples(path: impl AsRef<Path>) -> Result<PtsFile, PtsError> {
    let bytes = std::fs::read(path)?;
    PtsFile::parse(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_hybrid, sample_sdf};
    use crate::shapes;
    use crate::Vec3;

    fn sample_sets() -> (SurfaceSampleSet, SdfSampleSet) {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let surface = sample_hybrid(&cube, 64, 36, 0.5, 3).unwrap();
        let sdf = sample_sdf(&cube, 40, 24, 0.02, 3).unwrap();
        (surface, sdf)
    }

    #[test]
    fn round_trip_bit_identical() {
        let (surface, sdf) = sample_sets();
        let file = PtsFile::from_samples(&surface, &sdf);
        let bytes = file.encode();
        let parsed = PtsFile::parse(&bytes).unwrap();
        assert_eq!(parsed, file);
        assert_eq!(parsed.encode(), bytes);
    }

    #[test]
    fn empty_sdf_set_is_valid() {
        let (surface, _) = sample_sets();
        let empty = SdfSampleSet {
            positions: vec![],
            sdf: vec![],
            tags: vec![],
        };
        let file = PtsFile::from_samples(&surface, &empty);
        let parsed = PtsFile::parse(&file.encode()).unwrap();
        assert_eq!(parsed.sdf_count(), 0);
        assert_eq!(parsed.surface_count(), surface.len());
    }

    #[test]
    fn file_size_arithmetic() {
        // K=100 C=3 M=0: header + 100 * 6 * 4 record bytes + 100 tag bytes
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let surface = sample_hybrid(&cube, 100, 0, 0.5, 1).unwrap();
        let empty = SdfSampleSet {
            positions: vec![],
            sdf: vec![],
            tags: vec![],
        };
        let bytes = PtsFile::from_samples(&surface, &empty).encode();
        assert_eq!(bytes.len(), 32 + 100 * 6 * 4 + 100);
    }

    #[test]
    fn truncated_and_corrupt_files_rejected() {
        let (surface, sdf) = sample_sets();
        let bytes = PtsFile::from_samples(&surface, &sdf).encode();
        assert!(PtsFile::parse(&bytes[..bytes.len() - 1]).is_err());
        assert!(PtsFile::parse(&bytes[..16]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(PtsFile::parse(&bad_magic).is_err());
    }
}
