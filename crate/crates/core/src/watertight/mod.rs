//! Watertight reconstruction: UDF sampling, iso-shell extraction, shell point
//! sampling, Delaunay tetrahedralization, min-cut inner/outer labeling and
//! boundary extraction.
//!
//! The output encloses the input surface: tets whose barycenter lies within
//! the iso offset of the input are pinned inner and hull tets are pinned
//! outer, so open sheets come out sealed as thin closed pillows while solid
//! regions follow the winding number of the input.

mod delaunay;
mod graphcut;
mod mc;
mod mc_tables;
mod udf;

pub use delaunay::{circumsphere, dedup_points, delaunay_tets, DelaunayError, InteriorFace, TetComplex};
pub use graphcut::{evaluate_energy, solve_min_cut, CutError, CutProblem, CutSolution, Label};
pub use mc::{extract_shell, McError};
pub use udf::{compute_udf, UdfConfig, UdfError, UdfGrid};

use std::collections::BTreeMap;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bvh::Bvh;
use crate::mesh::{self, manifold_report, normalize_unit, MeshError, TriangleMesh, Vec3};
use crate::winding::WindingField;

/// Surface area of the canonical `[-1,1]^3` domain box, the reference for
/// shell sample budgets.
const DOMAIN_BOX_AREA: f64 = 24.0;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WatertightConfig {
    /// UDF grid nodes per axis.
    pub resolution: usize,
    /// Iso offset for the thin shell; `None` uses `1 / resolution`.
    pub epsilon: Option<f64>,
    /// Points sampled on the shell before tetrahedralization; `None` scales
    /// `16 * resolution^2` by the shell's share of the domain box area.
    pub shell_samples: Option<usize>,
    /// Upper bound for the automatic shell sample budget.
    pub sample_cap: usize,
    /// Pairwise smoothness weight (per unit of shared-face area).
    pub lambda_smooth: f64,
    pub seed: u64,
    /// Exact-UDF band half-width in cells; `None` computes the full grid.
    pub band_cells: Option<f64>,
    /// Margin of the normalization target box.
    pub pad: f64,
    /// How far outside the domain the corner anchor points sit.
    pub corner_pad: f64,
}

impl Default for WatertightConfig {
    fn default() -> Self {
        Self {
            resolution: 512,
            epsilon: None,
            shell_samples: None,
            sample_cap: 500_000,
            lambda_smooth: 1.0,
            seed: 7,
            band_cells: Some(8.0),
            pad: 0.02,
            corner_pad: 0.1,
        }
    }
}

impl WatertightConfig {
    /// Iso offset in absolute domain units. The default is 1/resolution of
    /// the domain extent (2), which keeps the offset slab just under one
    /// grid spacing thick: any thinner and a zero-thickness sheet sitting
    /// exactly between two node planes produces no iso crossing at all.
    pub fn effective_epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(2.0 / self.resolution as f64)
    }

    pub fn effective_shell_samples(&self, shell_area: f64) -> usize {
        match self.shell_samples {
            Some(n) => n.max(4),
            None => {
                let n = self.resolution as f64;
                let budget = 16.0 * n * n * (shell_area / DOMAIN_BOX_AREA);
                (budget.ceil() as usize).clamp(1000, self.sample_cap)
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.resolution < 16 {
            return Err(format!("resolution {} < 16", self.resolution));
        }
        let eps = self.effective_epsilon();
        if !(eps > 0.0 && eps < 1.0) {
            return Err(format!("epsilon {eps} outside (0, 1)"));
        }
        if self.lambda_smooth < 0.0 {
            return Err("lambda_smooth must be >= 0".into());
        }
        if !(0.0..0.5).contains(&self.pad) {
            return Err(format!("pad {} outside [0, 0.5)", self.pad));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WatertightError {
    #[error("normalize: {0}")]
    Normalize(#[from] MeshError),
    #[error("udf: {0}")]
    Udf(#[from] UdfError),
    #[error("shell: {0}")]
    Shell(#[from] McError),
    #[error("delaunay: {0}")]
    Delaunay(#[from] DelaunayError),
    #[error("labeling: {0}")]
    Labeling(#[from] CutError),
    #[error("no tet was labeled inner; the input was invisible to the grid")]
    EmptyInterior,
    #[error("config: {0}")]
    Config(String),
}

impl WatertightError {
    /// Pipeline stage that produced the error.
    pub fn stage(&self) -> &'static str {
        match self {
            WatertightError::Normalize(_) => "normalize",
            WatertightError::Udf(_) => "udf",
            WatertightError::Shell(_) => "shell",
            WatertightError::Delaunay(_) => "delaunay",
            WatertightError::Labeling(_) => "label",
            WatertightError::EmptyInterior => "extract",
            WatertightError::Config(_) => "config",
        }
    }
}

/// Binary inner/outer labeling of a tet complex.
#[derive(Debug, Clone)]
pub struct TetLabeling {
    pub labels: Vec<Label>,
    /// Minimized objective (unary + pairwise), excluding hard-constraint
    /// infinities.
    pub cut_energy: f64,
}

/// Area-weighted point samples on the shell plus the 8 corner anchors of the
/// padded domain box. Deterministic for a fixed seed.
pub fn sample_shell(
    shell: &TriangleMesh,
    count: usize,
    seed: u64,
    corner_half_extent: f64,
) -> Result<Vec<Vec3>, MeshError> {
    if shell.faces.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let points = area_weighted_samples(shell, count, seed);
    let mut out = points;
    let c = corner_half_extent;
    for i in 0..8 {
        out.push(Vec3::new(
            if i & 1 == 0 { -c } else { c },
            if i & 2 == 0 { -c } else { c },
            if i & 4 == 0 { -c } else { c },
        ));
    }
    Ok(out)
}

/// `count` points drawn proportionally to triangle area.
pub(crate) fn area_weighted_samples(mesh: &TriangleMesh, count: usize, seed: u64) -> Vec<Vec3> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r = rng.random_range(0.0..total);
        let f = cumulative.partition_point(|&c| c <= r).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.triangle(f);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        out.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
    }
    out
}

/// Label every tet inner or outer by minimizing the volume-weighted winding
/// energy with an area-weighted smoothness term.
///
/// Hard constraints: hull tets are outer; tets whose barycenter lies within
/// `near_epsilon` of the input surface are inner (this is what seals
/// zero-thickness sheets, which carry no winding volume of their own).
pub fn label_tets(
    tc: &TetComplex,
    input_bvh: &Bvh,
    winding: &WindingField,
    lambda_smooth: f64,
    near_epsilon: f64,
) -> Result<TetLabeling, CutError> {
    let n = tc.tets.len();
    let mut problem = CutProblem {
        cost_inner: vec![0.0; n],
        cost_outer: vec![0.0; n],
        edges: Vec::with_capacity(tc.face_adjacency.len()),
    };
    let unary: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|t| {
            let b = tc.barycenter(t);
            let v = tc.tet_volume(t);
            let w = winding.eval(&b).clamp(0.0, 1.0);
            let near = input_bvh.distance_capped(&b, near_epsilon) <= near_epsilon;
            // (cost_inner, cost_outer)
            if near {
                (v * (1.0 - w), f64::INFINITY)
            } else {
                (v * (1.0 - w), v * w)
            }
        })
        .collect();
    for (t, (ci, co)) in unary.into_iter().enumerate() {
        problem.cost_inner[t] = ci;
        problem.cost_outer[t] = co;
    }
    for &t in &tc.hull_tets {
        // the hull constraint wins when a hull tet also grazes the surface
        problem.cost_inner[t as usize] = f64::INFINITY;
        if problem.cost_outer[t as usize].is_infinite() {
            problem.cost_outer[t as usize] = 0.0;
        }
    }
    for f in &tc.face_adjacency {
        problem.edges.push((f.tets[0], f.tets[1], lambda_smooth * f.area));
    }
    let solution = solve_min_cut(&problem)?;
    Ok(TetLabeling {
        labels: solution.labels,
        cut_energy: solution.energy,
    })
}

/// Interior faces whose two tets carry different labels, oriented so normals
/// point from inner toward outer. The result is closed by construction.
pub fn extract_boundary(
    tc: &TetComplex,
    labeling: &TetLabeling,
) -> Result<TriangleMesh, WatertightError> {
    if !labeling.labels.contains(&Label::Inner) {
        return Err(WatertightError::EmptyInterior);
    }
    let labels = &labeling.labels;
    let mut remap: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for f in &tc.face_adjacency {
        let l0 = labels[f.tets[0] as usize];
        let l1 = labels[f.tets[1] as usize];
        if l0 == l1 {
            continue;
        }
        // stored orientation has the normal pointing toward f.tets[0]
        let [a, b, c] = f.vertices;
        let tri = if l0 == Label::Outer { [a, b, c] } else { [a, c, b] };
        let mut face = [0u32; 3];
        for (slot, &v) in face.iter_mut().zip(tri.iter()) {
            *slot = *remap.entry(v).or_insert_with(|| {
                vertices.push(tc.points[v as usize]);
                (vertices.len() - 1) as u32
            });
        }
        faces.push(face);
    }
    if faces.is_empty() {
        return Err(WatertightError::EmptyInterior);
    }
    Ok(TriangleMesh {
        name: "watertight".into(),
        vertices,
        faces,
        face_labels: None,
    })
}

/// Flip labels next to edges where four or more boundary faces meet, which
/// turns the rare pinched cut into a manifold one. No-op on clean cuts.
pub fn repair_nonmanifold_edges(tc: &TetComplex, labeling: &mut TetLabeling, max_rounds: usize) {
    for _ in 0..max_rounds {
        let mut edge_faces: std::collections::HashMap<(u32, u32), Vec<usize>> =
            std::collections::HashMap::new();
        for (fi, f) in tc.face_adjacency.iter().enumerate() {
            if labeling.labels[f.tets[0] as usize] == labeling.labels[f.tets[1] as usize] {
                continue;
            }
            let [a, b, c] = f.vertices;
            for (u, v) in [(a, b), (b, c), (a, c)] {
                let key = if u < v { (u, v) } else { (v, u) };
                edge_faces.entry(key).or_default().push(fi);
            }
        }
        let mut bad: Vec<(u32, u32)> = edge_faces
            .iter()
            .filter(|(_, faces)| faces.len() > 2)
            .map(|(&e, _)| e)
            .collect();
        if bad.is_empty() {
            return;
        }
        bad.sort_unstable();
        let (eu, ev) = bad[0];
        // flip the smallest tet adjacent to the pinched edge that is not
        // hard-constrained (hull stays outer)
        let mut candidate: Option<(f64, u32)> = None;
        for &fi in &edge_faces[&(eu, ev)] {
            for &t in &tc.face_adjacency[fi].tets {
                if tc.is_hull_tet(t as usize) {
                    continue;
                }
                let vol = tc.tet_volume(t as usize);
                if candidate.map_or(true, |(cv, ct)| (vol, t) < (cv, ct)) {
                    candidate = Some((vol, t));
                }
            }
        }
        match candidate {
            Some((_, t)) => {
                let l = labeling.labels[t as usize];
                labeling.labels[t as usize] = match l {
                    Label::Inner => Label::Outer,
                    Label::Outer => Label::Inner,
                };
            }
            None => return,
        }
    }
}

/// Quality summary of one watertight run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WatertightReport {
    pub closed: bool,
    pub manifold: bool,
    pub euler: i64,
    pub faces: usize,
    /// Sampled two-sided Hausdorff distance to the input, in the coordinate
    /// frame of the returned mesh.
    pub hausdorff_est: f64,
    pub cut_energy: f64,
    pub stage_timings_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct WatertightOutput {
    pub mesh: TriangleMesh,
    pub report: WatertightReport,
}

/// Run the full watertight pipeline on a raw mesh: normalize into the
/// canonical domain, reconstruct, then map back to the original frame.
pub fn watertight_pipeline(
    mesh: &TriangleMesh,
    config: &WatertightConfig,
) -> Result<WatertightOutput, WatertightError> {
    config.validate().map_err(WatertightError::Config)?;
    let (normalized, back) = normalize_unit(mesh, config.pad)?;
    let mut out = watertight_in_frame(&normalized, config)?;
    out.mesh = back.apply_mesh(&out.mesh);
    out.mesh.name = format!("{}_watertight", mesh.name);
    // report the Hausdorff estimate in original units
    out.report.hausdorff_est *= back.uniform_scale;
    Ok(out)
}

/// Watertight reconstruction for a mesh already normalized into `[-1,1]^3`
/// (parts of an assembly share one frame and must not be re-normalized).
pub fn watertight_in_frame(
    mesh: &TriangleMesh,
    config: &WatertightConfig,
) -> Result<WatertightOutput, WatertightError> {
    config.validate().map_err(WatertightError::Config)?;
    let mut timings = BTreeMap::new();
    let epsilon = config.effective_epsilon();

    let t0 = Instant::now();
    let bvh = Bvh::build(mesh);
    let grid = compute_udf(
        mesh,
        &bvh,
        &UdfConfig {
            resolution: config.resolution,
            band_cells: config.band_cells,
            domain_half_extent: 1.0,
        },
    )?;
    timings.insert("udf".into(), ms(t0));

    let t0 = Instant::now();
    let shell = extract_shell(&grid, epsilon)?;
    timings.insert("shell".into(), ms(t0));

    let t0 = Instant::now();
    let shell_area = mesh::surface_area(&shell, None);
    let n_samples = config.effective_shell_samples(shell_area);
    let points = sample_shell(&shell, n_samples, config.seed, 1.0 + config.corner_pad)?;
    timings.insert("sample_shell".into(), ms(t0));

    let t0 = Instant::now();
    let tc = delaunay_tets(&points)?;
    timings.insert("delaunay".into(), ms(t0));

    let t0 = Instant::now();
    let winding = WindingField::new(mesh);
    let mut labeling = label_tets(&tc, &bvh, &winding, config.lambda_smooth, epsilon)?;
    timings.insert("label".into(), ms(t0));

    let t0 = Instant::now();
    repair_nonmanifold_edges(&tc, &mut labeling, 32);
    let boundary = extract_boundary(&tc, &labeling)?;
    timings.insert("extract".into(), ms(t0));

    let t0 = Instant::now();
    let report_topology = manifold_report(&boundary);
    let hausdorff = hausdorff_sampled(&boundary, mesh, 10_000, config.seed ^ 0x5eed);
    timings.insert("report".into(), ms(t0));

    Ok(WatertightOutput {
        report: WatertightReport {
            closed: report_topology.closed,
            manifold: report_topology.manifold,
            euler: report_topology.euler,
            faces: boundary.faces.len(),
            hausdorff_est: hausdorff,
            cut_energy: labeling.cut_energy,
            stage_timings_ms: timings,
        },
        mesh: boundary,
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Sampled two-sided Hausdorff distance between two meshes.
pub fn hausdorff_sampled(a: &TriangleMesh, b: &TriangleMesh, n: usize, seed: u64) -> f64 {
    let bvh_a = Bvh::build(a);
    let bvh_b = Bvh::build(b);
    let pa = area_weighted_samples(a, n, seed);
    let pb = area_weighted_samples(b, n, seed.wrapping_add(1));
    let d_ab = pa
        .par_iter()
        .map(|p| bvh_b.distance(p))
        .reduce(|| 0.0, f64::max);
    let d_ba = pb
        .par_iter()
        .map(|p| bvh_a.distance(p))
        .reduce(|| 0.0, f64::max);
    d_ab.max(d_ba)
}
