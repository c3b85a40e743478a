//! Ray-cast part-ID masks and silhouettes under orthographic and perspective
//! cameras. Exact nearest-hit semantics: label images never blend, so there
//! is no anti-aliasing and no z-buffer precision policy.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvh::Bvh;
use crate::mesh::{TriangleMesh, Vec3};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("duplicate or zero part id {0}")]
    BadPartId(u16),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("png encode error: {0}")]
    Png(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Projection {
    Orthographic { half_extent: f64 },
    Perspective { vertical_fov: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraSpec {
    pub projection: Projection,
    pub eye: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl CameraSpec {
    fn eye_v(&self) -> Vec3 {
        Vec3::new(self.eye[0], self.eye[1], self.eye[2])
    }

    fn look_at_v(&self) -> Vec3 {
        Vec3::new(self.look_at[0], self.look_at[1], self.look_at[2])
    }

    fn up_v(&self) -> Vec3 {
        Vec3::new(self.up[0], self.up[1], self.up[2])
    }

    pub fn validate(&self) -> Result<CameraBasis, RasterError> {
        if self.width == 0 || self.height == 0 {
            return Err(RasterError::InvalidCamera("zero image size".into()));
        }
        let forward = self.look_at_v() - self.eye_v();
        if forward.norm() < 1e-12 {
            return Err(RasterError::InvalidCamera("eye equals look_at".into()));
        }
        let forward = forward.normalize();
        let up = self.up_v();
        if up.norm() < 1e-12 || forward.cross(&up.normalize()).norm() < 1e-9 {
            return Err(RasterError::InvalidCamera(
                "up vector parallel to view direction".into(),
            ));
        }
        if let Projection::Perspective { vertical_fov } = self.projection {
            if !(vertical_fov > 0.0 && vertical_fov < std::f64::consts::PI) {
                return Err(RasterError::InvalidCamera(format!(
                    "fov {vertical_fov} outside (0, pi)"
                )));
            }
        }
        let right = forward.cross(&up).normalize();
        let true_up = right.cross(&forward);
        Ok(CameraBasis {
            eye: self.eye_v(),
            forward,
            right,
            up: true_up,
        })
    }

    /// World ray through the center of pixel `(px, py)`.
    pub fn pixel_ray(&self, basis: &CameraBasis, px: u32, py: u32) -> (Vec3, Vec3) {
        let aspect = self.width as f64 / self.height as f64;
        let ndc_x = ((px as f64 + 0.5) / self.width as f64) * 2.0 - 1.0;
        let ndc_y = 1.0 - ((py as f64 + 0.5) / self.height as f64) * 2.0;
        match self.projection {
            Projection::Orthographic { half_extent } => {
                let origin = basis.eye
                    + basis.right * (ndc_x * half_extent * aspect)
                    + basis.up * (ndc_y * half_extent);
                (origin, basis.forward)
            }
            Projection::Perspective { vertical_fov } => {
                let tan = (vertical_fov / 2.0).tan();
                let dir = (basis.forward
                    + basis.right * (ndc_x * tan * aspect)
                    + basis.up * (ndc_y * tan))
                    .normalize();
                (basis.eye, dir)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CameraBasis {
    pub eye: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
}

/// Ring of perspective views at 20 degrees elevation plus one orthographic
/// top view, all aimed at the origin.
pub fn default_views(n_views: usize, width: u32, height: u32) -> Vec<CameraSpec> {
    let elevation = 20.0f64.to_radians();
    let distance = 2.8;
    let fov = 40.0f64.to_radians();
    let mut cams = Vec::with_capacity(n_views + 1);
    for i in 0..n_views {
        let azimuth = 2.0 * std::f64::consts::PI * i as f64 / n_views as f64;
        let eye = [
            distance * elevation.cos() * azimuth.cos(),
            distance * elevation.sin(),
            distance * elevation.cos() * azimuth.sin(),
        ];
        cams.push(CameraSpec {
            projection: Projection::Perspective { vertical_fov: fov },
            eye,
            look_at: [0.0; 3],
            up: [0.0, 1.0, 0.0],
            width,
            height,
        });
    }
    // top-down orthographic view; up points toward -z so "north" is stable
    cams.push(CameraSpec {
        projection: Projection::Orthographic { half_extent: 1.2 },
        eye: [0.0, distance, 0.0],
        look_at: [0.0; 3],
        up: [0.0, 0.0, -1.0],
        width,
        height,
    });
    cams
}

/// Row-major u16 label image; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMask {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u16>,
}

impl IdMask {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.pixels[(y * self.width + x) as usize]
    }

    /// Count of pixels carrying each nonzero id.
    pub fn id_histogram(&self) -> std::collections::BTreeMap<u16, usize> {
        let mut h = std::collections::BTreeMap::new();
        for &p in &self.pixels {
            if p != 0 {
                *h.entry(p).or_insert(0) += 1;
            }
        }
        h
    }
}

/// A set of parts prepared for rendering.
pub struct Scene {
    parts: Vec<(u16, Bvh)>,
}

impl Scene {
    pub fn new(parts: &[(u16, &TriangleMesh)]) -> Result<Scene, RasterError> {
        let mut seen = std::collections::HashSet::new();
        for &(id, _) in parts {
            if id == 0 || !seen.insert(id) {
                return Err(RasterError::BadPartId(id));
            }
        }
        Ok(Scene {
            parts: parts
                .iter()
                .map(|&(id, mesh)| (id, Bvh::build(mesh)))
                .collect(),
        })
    }

    /// Nearest hit across all parts for one ray; ties break toward the
    /// smaller part id (deterministic).
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> u16 {
        let mut best: Option<(f64, u16)> = None;
        for (id, bvh) in &self.parts {
            if let Some(hit) = bvh.first_hit(origin, dir, 0.0, None) {
                let better = match best {
                    None => true,
                    Some((t, bid)) => hit.t < t || (hit.t == t && *id < bid),
                };
                if better {
                    best = Some((hit.t, *id));
                }
            }
        }
        best.map_or(0, |(_, id)| id)
    }
}

/// Render the part-ID mask for one camera.
pub fn render_id_mask(
    parts: &[(u16, &TriangleMesh)],
    cam: &CameraSpec,
) -> Result<IdMask, RasterError> {
    let scene = Scene::new(parts)?;
    render_scene(&scene, cam)
}

/// Render a prepared scene (avoids rebuilding BVHs per view).
pub fn render_scene(scene: &Scene, cam: &CameraSpec) -> Result<IdMask, RasterError> {
    let basis = cam.validate()?;
    let mut pixels = vec![0u16; (cam.width * cam.height) as usize];
    pixels
        .par_chunks_mut(cam.width as usize)
        .enumerate()
        .for_each(|(py, row)| {
            for (px, out) in row.iter_mut().enumerate() {
                let (origin, dir) = cam.pixel_ray(&basis, px as u32, py as u32);
                *out = scene.cast(&origin, &dir);
            }
        });
    Ok(IdMask {
        width: cam.width,
        height: cam.height,
        pixels,
    })
}

/// Binary 0/1 silhouette of a single mesh.
pub fn render_silhouette(mesh: &TriangleMesh, cam: &CameraSpec) -> Result<IdMask, RasterError> {
    render_id_mask(&[(1, mesh)], cam)
}

/// Save as 16-bit grayscale PNG with a JSON sidecar describing ids + camera.
pub fn save_mask_png(
    mask: &IdMask,
    cam: &CameraSpec,
    part_ids: &[u16],
    path: impl AsRef<Path>,
) -> Result<(), RasterError> {
    let path = path.as_ref();
    let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(mask.width, mask.height, mask.pixels.clone())
            .expect("buffer size matches dimensions");
    image::DynamicImage::ImageLuma16(img).save_with_format(path, image::ImageFormat::Png)?;
    let sidecar = serde_json::json!({
        "part_ids": part_ids,
        "camera": cam,
    });
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_vec_pretty(&sidecar).expect("serializable"),
    )?;
    Ok(())
}

/// Read a mask back from PNG (for tests and downstream consumers).
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<IdMask, RasterError> {
    let img = image::open(path)?.into_luma16();
    Ok(IdMask {
        width: img.width(),
        height: img.height(),
        pixels: img.into_raw(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn ortho_camera(size: u32) -> CameraSpec {
        CameraSpec {
            projection: Projection::Orthographic { half_extent: 1.0 },
            eye: [0.0, 0.0, 3.0],
            look_at: [0.0; 3],
            up: [0.0, 1.0, 0.0],
            width: size,
            height: size,
        }
    }

    #[test]
    fn default_views_ring_and_top() {
        let views = default_views(4, 256, 256);
        assert_eq!(views.len(), 5);
        for v in &views {
            assert_eq!(v.look_at, [0.0; 3]);
        }
        // azimuths 0, 90, 180, 270 on the y-elevated ring
        let azimuths: Vec<f64> = views[..4]
            .iter()
            .map(|v| v.eye[2].atan2(v.eye[0]).rem_euclid(2.0 * std::f64::consts::PI))
            .collect();
        for (i, a) in azimuths.iter().enumerate() {
            let expect = i as f64 * std::f64::consts::FRAC_PI_2;
            assert!((a - expect).abs() < 1e-9, "azimuth {a} vs {expect}");
        }
        assert!(matches!(views[4].projection, Projection::Orthographic { .. }));
        let single = default_views(1, 64, 64);
        assert_eq!(single.len(), 2);
        assert!((single[0].eye[2]).abs() < 1e-12); // azimuth 0 is in the xz plane
    }

    #[test]
    fn sphere_projects_to_disk() {
        let sphere = shapes::icosphere(0.5, 4);
        let mask = render_silhouette(&sphere, &ortho_camera(256)).unwrap();
        let hist = mask.id_histogram();
        let count = *hist.get(&1).unwrap() as f64;
        let expected = std::f64::consts::PI * 64.0 * 64.0;
        assert!(
            (count - expected).abs() / expected < 0.02,
            "pixel count {count} vs {expected}"
        );
        // center pixel filled, corner empty
        assert_eq!(mask.get(128, 128), 1);
        assert_eq!(mask.get(0, 0), 0);
        // radius within +-1px of 64: probe along the center row
        let row = 128u32;
        let filled: Vec<u32> = (0..256).filter(|&x| mask.get(x, row) == 1).collect();
        let r_measured = (filled.last().unwrap() - filled.first().unwrap() + 1) as f64 / 2.0;
        assert!((r_measured - 64.0).abs() <= 1.5, "radius {r_measured}");
    }

    #[test]
    fn empty_scene_all_zeros_and_camera_away() {
        let mask = render_id_mask(&[], &ortho_camera(32)).unwrap();
        assert!(mask.pixels.iter().all(|&p| p == 0));
        let sphere = shapes::icosphere(0.5, 2);
        let away = CameraSpec {
            eye: [0.0, 0.0, 3.0],
            look_at: [0.0, 0.0, 6.0],
            ..ortho_camera(32)
        };
        let mask = render_silhouette(&sphere, &away).unwrap();
        assert!(mask.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn occlusion_picks_nearest() {
        let near = shapes::icosphere(0.3, 3); // id 2, at z=+1 (closer to eye)
        let mut near = near;
        for v in &mut near.vertices {
            v.z += 1.0;
        }
        let far = shapes::icosphere(0.3, 3); // id 1 at origin
        let mask = render_id_mask(&[(1, &far), (2, &near)], &ortho_camera(64)).unwrap();
        assert_eq!(mask.get(32, 32), 2);
    }

    #[test]
    fn silhouette_equals_nonzero_mask() {
        let a = shapes::cube(crate::Vec3::new(-0.4, 0.0, 0.0), 0.3);
        let b = shapes::icosphere(0.35, 3);
        let union = shapes::concat(&[&a, &b]);
        let cam = ortho_camera(128);
        let mask = render_id_mask(&[(3, &a), (9, &b)], &cam).unwrap();
        let sil = render_silhouette(&union, &cam).unwrap();
        for (m, s) in mask.pixels.iter().zip(&sil.pixels) {
            assert_eq!(*m > 0, *s > 0);
        }
    }

    #[test]
    fn invalid_cameras_rejected() {
        let sphere = shapes::icosphere(0.5, 2);
        let mut cam = ortho_camera(32);
        cam.look_at = cam.eye;
        assert!(matches!(
            render_silhouette(&sphere, &cam),
            Err(RasterError::InvalidCamera(_))
        ));
        let mut cam = ortho_camera(32);
        cam.up = [0.0, 0.0, 1.0]; // parallel to view direction
        assert!(render_silhouette(&sphere, &cam).is_err());
        assert!(matches!(
            render_id_mask(&[(0, &sphere)], &ortho_camera(8)),
            Err(RasterError::BadPartId(0))
        ));
        assert!(matches!(
            render_id_mask(&[(5, &sphere), (5, &sphere)], &ortho_camera(8)),
            Err(RasterError::BadPartId(5))
        ));
    }

    #[test]
    fn png_round_trip() {
        let sphere = shapes::icosphere(0.5, 2);
        let cam = ortho_camera(64);
        let mask = render_silhouette(&sphere, &cam).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        save_mask_png(&mask, &cam, &[1], &path).unwrap();
        let loaded = load_mask_png(&path).unwrap();
        assert_eq!(loaded, mask);
        assert!(path.with_extension("json").exists());
    }
}
