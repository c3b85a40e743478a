//! Geometric quality filters: polygon count, complexity (dihedral entropy)
//! and thin-structure detection, with auditable verdicts.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvh::Bvh;
use crate::mesh::{surface_area, TriangleMesh};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("mesh has no faces")]
    EmptyMesh,
}

pub const DIHEDRAL_BINS: usize = 18;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub face_count: usize,
    pub vertex_count: usize,
    pub surface_area: f64,
    pub aabb_diagonal: f64,
    /// Shannon entropy (bits) of the 18-bin dihedral-angle histogram over
    /// manifold edges; 0 when the mesh has no two-faced edges.
    pub dihedral_entropy: f64,
    /// Fraction of surface points whose opposite side lies within
    /// `thin_delta` along the inward normal.
    pub thin_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThinConfig {
    /// Opposite-side distance below which a point counts as thin.
    pub thin_delta: f64,
    pub thin_samples: usize,
    pub seed: u64,
}

impl Default for ThinConfig {
    fn default() -> Self {
        Self {
            thin_delta: 4.0 / 512.0,
            thin_samples: 10_000,
            seed: 7,
        }
    }
}

/// Compute all quality metrics for one mesh.
pub fn compute_quality_metrics(
    mesh: &TriangleMesh,
    config: &ThinConfig,
) -> Result<QualityMetrics, FilterError> {
    if mesh.faces.is_empty() {
        return Err(FilterError::EmptyMesh);
    }
    let area = surface_area(mesh, None);
    let aabb = mesh.aabb();
    Ok(QualityMetrics {
        face_count: mesh.faces.len(),
        vertex_count: mesh.vertices.len(),
        surface_area: area,
        aabb_diagonal: aabb.diagonal(),
        dihedral_entropy: dihedral_entropy(mesh),
        thin_score: thin_score(mesh, config),
    })
}

/// Shannon entropy of the dihedral-angle distribution over manifold edges.
pub fn dihedral_entropy(mesh: &TriangleMesh) -> f64 {
    let mut edge_faces: std::collections::HashMap<(u32, u32), Vec<u32>> =
        std::collections::HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = if a < b { (a, b) } else { (b, a) };
            edge_faces.entry(key).or_default().push(fi as u32);
        }
    }
    let mut bins = [0usize; DIHEDRAL_BINS];
    let mut total = 0usize;
    for faces in edge_faces.values() {
        if faces.len() != 2 {
            continue;
        }
        let n0 = mesh.face_normal(faces[0] as usize);
        let n1 = mesh.face_normal(faces[1] as usize);
        let angle = n0.dot(&n1).clamp(-1.0, 1.0).acos();
        let bin = ((angle / std::f64::consts::PI) * DIHEDRAL_BINS as f64) as usize;
        bins[bin.min(DIHEDRAL_BINS - 1)] += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    let mut entropy = 0.0;
    for &count in &bins {
        if count > 0 {
            let p = count as f64 / total as f64;
            entropy -= p * p.log2();
        }
    }
    entropy
}

/// Fraction of area-weighted surface points where a ray cast inward (against
/// the face normal) hits the opposite side within `thin_delta`.
///
/// This operationalizes the sign-flip-within-small-range property of thin
/// sheets: the signed field crosses zero twice inside the delta window.
pub fn thin_score(mesh: &TriangleMesh, config: &ThinConfig) -> f64 {
    if config.thin_samples == 0 {
        return 0.0;
    }
    let bvh = Bvh::build(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total_area = 0.0;
    for f in 0..mesh.faces.len() {
        total_area += mesh.face_area(f);
        cumulative.push(total_area);
    }
    let t_min = 1e-7 * mesh.aabb().diagonal().max(1e-12);
    let mut thin = 0usize;
    for _ in 0..config.thin_samples {
        let r = rng.random_range(0.0..total_area);
        let f = cumulative.partition_point(|&c| c <= r).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.triangle(f);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let p = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
        let n = mesh.face_normal(f);
        if n.norm() == 0.0 {
            continue;
        }
        if let Some(hit) = bvh.first_hit(&p, &(-n), t_min, Some(f as u32)) {
            if hit.t <= config.thin_delta {
                thin += 1;
            }
        }
    }
    thin as f64 / config.thin_samples as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectCode {
    LowPoly,
    LowComplexity,
    ThinStructure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reject {
    pub code: RejectCode,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub accepted: bool,
    pub reasons: Vec<Reject>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    pub min_faces: usize,
    pub min_entropy: f64,
    pub max_thin: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            min_faces: 100,
            min_entropy: 0.5,
            max_thin: 0.5,
        }
    }
}

/// Apply thresholds to computed metrics. Pure: identical inputs give
/// identical verdicts.
pub fn apply_full_filters(metrics: &QualityMetrics, thresholds: &FilterThresholds) -> FilterVerdict {
    let mut reasons = Vec::new();
    if metrics.face_count < thresholds.min_faces {
        reasons.push(Reject {
            code: RejectCode::LowPoly,
            value: metrics.face_count as f64,
            threshold: thresholds.min_faces as f64,
        });
    }
    if metrics.dihedral_entropy < thresholds.min_entropy {
        reasons.push(Reject {
            code: RejectCode::LowComplexity,
            value: metrics.dihedral_entropy,
            threshold: thresholds.min_entropy,
        });
    }
    if metrics.thin_score > thresholds.max_thin {
        reasons.push(Reject {
            code: RejectCode::ThinStructure,
            value: metrics.thin_score,
            threshold: thresholds.max_thin,
        });
    }
    FilterVerdict {
        accepted: reasons.is_empty(),
        reasons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vec3;
    use crate::shapes;

    #[test]
    fn cube_metrics_analytic() {
        let cube = shapes::cube(Vec3::zeros(), 0.5);
        let m = compute_quality_metrics(&cube, &ThinConfig::default()).unwrap();
        assert_eq!(m.face_count, 12);
        assert_eq!(m.vertex_count, 8);
        assert!((m.surface_area - 6.0).abs() < 1e-9);
        // 12 edges at 90 degrees, 6 diagonals at 0: two occupied bins
        let expect = -(2.0 / 3.0 * (2.0f64 / 3.0).log2() + 1.0 / 3.0 * (1.0f64 / 3.0).log2());
        assert!((m.dihedral_entropy - expect).abs() < 1e-9);
        assert!(m.dihedral_entropy <= (DIHEDRAL_BINS as f64).log2());
    }

    #[test]
    fn thin_plate_scores_high_solid_sphere_low() {
        let config = ThinConfig {
            thin_delta: 0.0078125,
            thin_samples: 4000,
            seed: 7,
        };
        let plate = shapes::box_mesh(Vec3::zeros(), Vec3::new(0.8, 0.8, 0.0025));
        let plate_score = thin_score(&plate, &config);
        assert!(plate_score > 0.9, "plate {plate_score}");

        let sphere = shapes::icosphere(0.5, 3);
        let sphere_score = thin_score(&sphere, &config);
        assert!(sphere_score < 0.01, "sphere {sphere_score}");
    }

    #[test]
    fn verdict_logic() {
        let thresholds = FilterThresholds::default();
        let mut metrics = QualityMetrics {
            face_count: 10,
            vertex_count: 8,
            surface_area: 1.0,
            aabb_diagonal: 1.0,
            dihedral_entropy: 1.2,
            thin_score: 0.0,
        };
        let v = apply_full_filters(&metrics, &thresholds);
        assert!(!v.accepted);
        assert_eq!(v.reasons.len(), 1);
        assert!(matches!(v.reasons[0].code, RejectCode::LowPoly));
        assert_eq!(v.reasons[0].value, 10.0);

        metrics.face_count = 500;
        metrics.thin_score = 0.95;
        let v = apply_full_filters(&metrics, &thresholds);
        assert!(!v.accepted);
        assert!(matches!(v.reasons[0].code, RejectCode::ThinStructure));

        metrics.thin_score = 0.1;
        let v = apply_full_filters(&metrics, &thresholds);
        assert!(v.accepted);
        assert!(v.reasons.is_empty());
    }

    #[test]
    fn raising_max_thin_never_rejects_more() {
        let metrics = QualityMetrics {
            face_count: 500,
            vertex_count: 300,
            surface_area: 2.0,
            aabb_diagonal: 1.5,
            dihedral_entropy: 1.0,
            thin_score: 0.4,
        };
        let mut accepted_prev = false;
        for max_thin in [0.1, 0.3, 0.39, 0.41, 0.8] {
            let v = apply_full_filters(
                &metrics,
                &FilterThresholds {
                    max_thin,
                    ..FilterThresholds::default()
                },
            );
            if accepted_prev {
                assert!(v.accepted, "monotonicity broken at {max_thin}");
            }
            accepted_prev = v.accepted;
        }
    }
}
