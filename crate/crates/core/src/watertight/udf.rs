//! Unsigned distance field sampled on a uniform grid over the canonical
//! `[-1, 1]^3` domain.
//!
//! Values are exact point-to-mesh distances (BVH accelerated). By default
//! only a narrow band around the surface is computed exactly; everything
//! beyond `band_cells * spacing` is clamped to `band + spacing`, which the
//! iso-surface extraction never reads.

use rayon::prelude::*;
use thiserror::Error;

use crate::bvh::Bvh;
use crate::mesh::{TriangleMesh, Vec3};

#[derive(Debug, Error)]
pub enum UdfError {
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("resolution {0} too small (need at least 16)")]
    ResolutionTooSmall(usize),
}

#[derive(Debug, Clone)]
pub struct UdfConfig {
    /// Grid nodes per axis.
    pub resolution: usize,
    /// Half-width of the exactly-computed band in cells; `None` computes the
    /// full grid exactly.
    pub band_cells: Option<f64>,
    /// Half extent of the cubic sampling domain.
    pub domain_half_extent: f64,
}

impl Default for UdfConfig {
    fn default() -> Self {
        Self {
            resolution: 512,
            band_cells: Some(8.0),
            domain_half_extent: 1.0,
        }
    }
}

/// Uniform scalar grid of unsigned distances.
#[derive(Debug, Clone)]
pub struct UdfGrid {
    pub resolution: usize,
    pub origin: Vec3,
    pub spacing: f64,
    /// x-fastest layout: `values[i + n*(j + n*k)]`.
    pub values: Vec<f32>,
}

impl UdfGrid {
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.index(i, j, k)]
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }
}

/// Sample the unsigned distance to `mesh` on a uniform grid.
pub fn compute_udf(mesh: &TriangleMesh, bvh: &Bvh, config: &UdfConfig) -> Result<UdfGrid, UdfError> {
    if mesh.faces.is_empty() {
        return Err(UdfError::EmptyMesh);
    }
    let n = config.resolution;
    if n < 16 {
        return Err(UdfError::ResolutionTooSmall(n));
    }
    let h = config.domain_half_extent;
    let spacing = 2.0 * h / (n - 1) as f64;
    let origin = Vec3::repeat(-h);
    let mut grid = UdfGrid {
        resolution: n,
        origin,
        spacing,
        values: Vec::new(),
    };
    match config.band_cells {
        None => compute_full(&mut grid, bvh),
        Some(band_cells) => compute_band(&mut grid, mesh, bvh, band_cells),
    }
    Ok(grid)
}

fn compute_full(grid: &mut UdfGrid, bvh: &Bvh) {
    let n = grid.resolution;
    let origin = grid.origin;
    let spacing = grid.spacing;
    let mut values = vec![0f32; n * n * n];
    values
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(k, slab)| {
            for j in 0..n {
                for i in 0..n {
                    let p = origin + Vec3::new(i as f64, j as f64, k as f64) * spacing;
                    slab[i + n * j] = bvh.distance(&p) as f32;
                }
            }
        });
    grid.values = values;
}

fn compute_band(grid: &mut UdfGrid, mesh: &TriangleMesh, bvh: &Bvh, band_cells: f64) {
    let n = grid.resolution;
    let spacing = grid.spacing;
    let band = band_cells * spacing;
    let clamp_value = (band + spacing) as f32;
    // expand one extra ring so every node with d <= band is provably reached
    let expand_limit = band + 2.0 * spacing;

    let total = n * n * n;
    let mut values = vec![clamp_value; total];
    let mut visited = vec![false; total];

    // Seed: nodes inside each triangle's AABB dilated by one cell.
    let mut frontier: Vec<usize> = Vec::new();
    let h = grid.origin.x.abs();
    let node_range = |lo: f64, hi: f64| -> (usize, usize) {
        let a = ((lo + h) / spacing).floor() as i64 - 1;
        let b = ((hi + h) / spacing).ceil() as i64 + 1;
        (
            a.clamp(0, n as i64 - 1) as usize,
            b.clamp(0, n as i64 - 1) as usize,
        )
    };
    for f in 0..mesh.faces.len() {
        let tri = mesh.triangle(f);
        let aabb = crate::mesh::Aabb::from_points(&tri);
        let (i0, i1) = node_range(aabb.min.x, aabb.max.x);
        let (j0, j1) = node_range(aabb.min.y, aabb.max.y);
        let (k0, k1) = node_range(aabb.min.z, aabb.max.z);
        for k in k0..=k1 {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let idx = grid.index(i, j, k);
                    if !visited[idx] {
                        visited[idx] = true;
                        frontier.push(idx);
                    }
                }
            }
        }
    }

    // Breadth-first expansion: distances are 1-Lipschitz, so the sub-band
    // region is reachable through nodes within the expand limit.
    while !frontier.is_empty() {
        let computed: Vec<(usize, f64)> = frontier
            .par_iter()
            .map(|&idx| {
                let i = idx % n;
                let j = (idx / n) % n;
                let k = idx / (n * n);
                let p = grid.position(i, j, k);
                (idx, bvh.distance_capped(&p, expand_limit))
            })
            .collect();
        let mut next = Vec::new();
        for (idx, d) in computed {
            values[idx] = if d > band { clamp_value } else { d as f32 };
            if d <= expand_limit {
                let i = idx % n;
                let j = (idx / n) % n;
                let k = idx / (n * n);
                let mut push = |ii: i64, jj: i64, kk: i64| {
                    if ii < 0 || jj < 0 || kk < 0 || ii >= n as i64 || jj >= n as i64 || kk >= n as i64
                    {
                        return;
                    }
                    let nidx = ii as usize + n * (jj as usize + n * kk as usize);
                    if !visited[nidx] {
                        visited[nidx] = true;
                        next.push(nidx);
                    }
                };
                push(i as i64 - 1, j as i64, k as i64);
                push(i as i64 + 1, j as i64, k as i64);
                push(i as i64, j as i64 - 1, k as i64);
                push(i as i64, j as i64 + 1, k as i64);
                push(i as i64, j as i64, k as i64 - 1);
                push(i as i64, j as i64, k as i64 + 1);
            }
        }
        frontier = next;
    }
    grid.values = values;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn quad_plane_distances_are_analytic() {
        // quad spans the domain in y=0; grid nodes measure |y|
        let quad = shapes::quad_y0(1.0);
        let bvh = Bvh::build(&quad);
        let config = UdfConfig {
            resolution: 17,
            band_cells: None,
            domain_half_extent: 1.0,
        };
        let grid = compute_udf(&quad, &bvh, &config).unwrap();
        // node (8, 10, 8) sits at (0, 0.25, 0)
        let p = grid.position(8, 10, 8);
        assert!((p - Vec3::new(0.0, 0.25, 0.0)).norm() < 1e-12);
        assert!((grid.value(8, 10, 8) as f64 - 0.25).abs() < 1e-9);
    }

    #[test]
    fn all_values_non_negative_and_band_matches_exact() {
        let sphere = shapes::icosphere(0.5, 2);
        let bvh = Bvh::build(&sphere);
        let banded = compute_udf(
            &sphere,
            &bvh,
            &UdfConfig {
                resolution: 32,
                band_cells: Some(4.0),
                domain_half_extent: 1.0,
            },
        )
        .unwrap();
        let exact = compute_udf(
            &sphere,
            &bvh,
            &UdfConfig {
                resolution: 32,
                band_cells: None,
                domain_half_extent: 1.0,
            },
        )
        .unwrap();
        let band = 4.0 * banded.spacing;
        for idx in 0..banded.values.len() {
            let b = banded.values[idx] as f64;
            let e = exact.values[idx] as f64;
            assert!(b >= 0.0);
            if e <= band {
                assert!((b - e).abs() < 1e-6, "idx {idx}: {b} vs {e}");
            } else {
                assert!((b - (band + banded.spacing)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn default_resolution_is_512() {
        assert_eq!(UdfConfig::default().resolution, 512);
    }

    #[test]
    fn tiny_resolution_rejected() {
        let quad = shapes::quad_y0(1.0);
        let bvh = Bvh::build(&quad);
        let config = UdfConfig {
            resolution: 8,
            band_cells: None,
            domain_half_extent: 1.0,
        };
        assert!(matches!(
            compute_udf(&quad, &bvh, &config),
            Err(UdfError::ResolutionTooSmall(8))
        ));
    }
}
