//! Part-level decomposition: connected-component splitting, proximity-driven
//! merging of trivial fragments, part-level quality filters and per-part
//! watertight reconstruction in a shared frame.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvh::Bvh;
use crate::mesh::{normalize_unit, MeshError, TriangleMesh};
use crate::watertight::{watertight_in_frame, WatertightConfig, WatertightError, WatertightOutput};

/// Raw component count above which an asset is rejected outright.
pub const MAX_RAW_COMPONENTS: usize = 888;

#[derive(Debug, Error)]
pub enum PartsError {
    #[error("mesh error: {0}")]
    Mesh(#[from] MeshError),
    #[error("component count {0} outside [2, 50]")]
    OutOfRange(usize),
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub absorbed: u32,
    pub into: u32,
    /// Area fraction of the absorbed component at merge time.
    pub area_fraction: f64,
}

/// Face partition of a mesh into vertex-connected components.
///
/// Component ids are dense from 1 in descending area order at construction;
/// merging retires absorbed ids. The proximity graph stores the minimum
/// surface-to-surface distance for every surviving pair.
#[derive(Debug, Clone)]
pub struct PartDecomposition {
    pub mesh: TriangleMesh,
    /// Component id per face.
    pub component_of_face: Vec<u32>,
    /// Surface area per surviving component.
    pub component_areas: BTreeMap<u32, f64>,
    /// `(i, j) -> min surface distance`, keys with `i < j`.
    pub proximity: BTreeMap<(u32, u32), f64>,
    pub merge_log: Vec<MergeEvent>,
}

impl PartDecomposition {
    pub fn component_count(&self) -> usize {
        self.component_areas.len()
    }

    pub fn total_area(&self) -> f64 {
        self.component_areas.values().sum()
    }

    pub fn component_ids(&self) -> Vec<u32> {
        self.component_areas.keys().copied().collect()
    }

    /// Faces belonging to one component.
    pub fn component_faces(&self, id: u32) -> Vec<u32> {
        self.component_of_face
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == id)
            .map(|(f, _)| f as u32)
            .collect()
    }

    /// Extract one component as a standalone mesh.
    pub fn component_mesh(&self, id: u32) -> TriangleMesh {
        let mut m = self.mesh.submesh(&self.component_faces(id));
        m.name = format!("{}_part_{}", self.mesh.name, id);
        m
    }

    pub fn distance(&self, a: u32, b: u32) -> Option<f64> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.proximity.get(&key).copied()
    }
}

/// Split into vertex-connected components, largest first.
///
/// The pairwise proximity graph is exact (BVH to BVH); it is skipped when the
/// raw count already exceeds [`MAX_RAW_COMPONENTS`], since such assets are
/// rejected by [`precheck_raw`] before any merge can run.
pub fn connected_components(mesh: &TriangleMesh) -> Result<PartDecomposition, PartsError> {
    mesh.validate()?;
    // union-find over faces through shared vertices
    let mut parent: Vec<u32> = (0..mesh.faces.len() as u32).collect();
    fn find(parent: &mut Vec<u32>, x: u32) -> u32 {
        let mut root = x;
        while parent[root as usize] != root {
            root = parent[root as usize];
        }
        let mut cur = x;
        while parent[cur as usize] != root {
            let next = parent[cur as usize];
            parent[cur as usize] = root;
            cur = next;
        }
        root
    }
    let mut vertex_face: HashMap<u32, u32> = HashMap::new();
    for (fi, face) in mesh.faces.iter().enumerate() {
        for &v in face {
            match vertex_face.entry(v) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    let a = find(&mut parent, *e.get());
                    let b = find(&mut parent, fi as u32);
                    if a != b {
                        parent[a as usize] = b;
                    }
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(fi as u32);
                }
            }
        }
    }
    // gather roots and areas
    let mut area_of_root: HashMap<u32, f64> = HashMap::new();
    let roots: Vec<u32> = (0..mesh.faces.len() as u32)
        .map(|f| find(&mut parent, f))
        .collect();
    for (fi, &root) in roots.iter().enumerate() {
        *area_of_root.entry(root).or_insert(0.0) += mesh.face_area(fi);
    }
    // ids in descending area order, ties by root index for determinism
    let mut ranked: Vec<(u32, f64)> = area_of_root.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let id_of_root: HashMap<u32, u32> = ranked
        .iter()
        .enumerate()
        .map(|(rank, &(root, _))| (root, rank as u32 + 1))
        .collect();
    let component_of_face: Vec<u32> = roots.iter().map(|r| id_of_root[r]).collect();
    let component_areas: BTreeMap<u32, f64> = ranked
        .iter()
        .enumerate()
        .map(|(rank, &(_, area))| (rank as u32 + 1, area))
        .collect();

    let mut decomp = PartDecomposition {
        mesh: mesh.clone(),
        component_of_face,
        component_areas,
        proximity: BTreeMap::new(),
        merge_log: Vec::new(),
    };
    if decomp.component_count() > 1 && decomp.component_count() <= MAX_RAW_COMPONENTS {
        decomp.proximity = build_proximity(&decomp);
    }
    Ok(decomp)
}

fn build_proximity(decomp: &PartDecomposition) -> BTreeMap<(u32, u32), f64> {
    let ids = decomp.component_ids();
    let bvhs: BTreeMap<u32, Bvh> = ids
        .iter()
        .map(|&id| (id, Bvh::build(&decomp.component_mesh(id))))
        .collect();
    let mut proximity = BTreeMap::new();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let d = bvhs[&a].mesh_distance(&bvhs[&b], f64::INFINITY);
            proximity.insert((a, b), d);
        }
    }
    proximity
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartRejectReason {
    TooFewComponents,
    TooManyComponents,
    DominantPart,
    IsolatedSmallParts,
    ExcessiveRawComponents,
    Indivisible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartReject {
    pub reason: PartRejectReason,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartFilterVerdict {
    pub accepted: bool,
    pub reasons: Vec<PartReject>,
    pub component_count_final: usize,
}

impl PartFilterVerdict {
    fn from_reasons(reasons: Vec<PartReject>, count: usize) -> Self {
        PartFilterVerdict {
            accepted: reasons.is_empty(),
            reasons,
            component_count_final: count,
        }
    }
}

/// Early rejection on the raw split, before any merging.
pub fn precheck_raw(decomp: &PartDecomposition) -> PartFilterVerdict {
    let count = decomp.component_count();
    let mut reasons = Vec::new();
    if count > MAX_RAW_COMPONENTS {
        reasons.push(PartReject {
            reason: PartRejectReason::ExcessiveRawComponents,
            value: count as f64,
            threshold: MAX_RAW_COMPONENTS as f64,
        });
    }
    if count < 2 {
        reasons.push(PartReject {
            reason: PartRejectReason::Indivisible,
            value: count as f64,
            threshold: 2.0,
        });
    }
    PartFilterVerdict::from_reasons(reasons, count)
}

/// Iteratively absorb components below `area_fraction_threshold` of the total
/// area into their nearest surviving neighbor.
///
/// Deterministic: always the smallest offending component first (ties toward
/// the smaller id); nearest neighbor by proximity distance with ties broken
/// toward the larger component, then the smaller id. Proximity updates use
/// the union rule `d(a+b, x) = min(d(a,x), d(b,x))`, which stays exact.
pub fn merge_small_components(
    decomp: &PartDecomposition,
    area_fraction_threshold: f64,
) -> PartDecomposition {
    let mut d = decomp.clone();
    let total = d.total_area();
    loop {
        if d.component_count() <= 1 {
            break;
        }
        // smallest component under the threshold
        let victim = d
            .component_areas
            .iter()
            .filter(|(_, &area)| area < area_fraction_threshold * total)
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
            .map(|(&id, &area)| (id, area));
        let Some((victim_id, victim_area)) = victim else {
            break;
        };
        // nearest neighbor; distances within 1e-9 tie toward the larger
        // component, then the smaller id
        let candidates: Vec<(u32, f64, f64)> = d
            .component_areas
            .keys()
            .filter(|&&id| id != victim_id)
            .map(|&id| {
                let dist = d.distance(victim_id, id).unwrap_or(f64::INFINITY);
                (id, dist, d.component_areas[&id])
            })
            .collect();
        let min_dist = candidates
            .iter()
            .map(|c| c.1)
            .fold(f64::INFINITY, f64::min);
        let target = candidates
            .iter()
            .filter(|c| c.1 <= min_dist + 1e-9)
            .min_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        let Some(&(target_id, _, _)) = target else {
            break;
        };
        // absorb
        for c in d.component_of_face.iter_mut() {
            if *c == victim_id {
                *c = target_id;
            }
        }
        let others: Vec<u32> = d
            .component_areas
            .keys()
            .copied()
            .filter(|&id| id != victim_id && id != target_id)
            .collect();
        for other in others {
            let key_v = if victim_id < other { (victim_id, other) } else { (other, victim_id) };
            let key_t = if target_id < other { (target_id, other) } else { (other, target_id) };
            let dv = d.proximity.get(&key_v).copied().unwrap_or(f64::INFINITY);
            let dt = d.proximity.get(&key_t).copied().unwrap_or(f64::INFINITY);
            d.proximity.insert(key_t, dv.min(dt));
            d.proximity.remove(&key_v);
        }
        let key_vt = if victim_id < target_id { (victim_id, target_id) } else { (target_id, victim_id) };
        d.proximity.remove(&key_vt);
        *d.component_areas.get_mut(&target_id).unwrap() += victim_area;
        d.component_areas.remove(&victim_id);
        d.merge_log.push(MergeEvent {
            absorbed: victim_id,
            into: target_id,
            area_fraction: victim_area / total,
        });
    }
    d
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartFilterConfig {
    pub max_components: usize,
    pub dominant_area_fraction: f64,
    /// A component is "small" below this fraction of total area.
    pub isolated_small_area_fraction: f64,
    /// A component is "isolated" when farther than this from every other.
    pub isolated_distance: f64,
    /// Reject when more than this fraction of components are isolated-small.
    pub isolated_count_fraction: f64,
}

impl Default for PartFilterConfig {
    fn default() -> Self {
        Self {
            max_components: 50,
            dominant_area_fraction: 0.85,
            isolated_small_area_fraction: 0.005,
            isolated_distance: 0.02,
            isolated_count_fraction: 0.3,
        }
    }
}

/// Structural filters on the merged decomposition.
pub fn part_filters(decomp: &PartDecomposition, config: &PartFilterConfig) -> PartFilterVerdict {
    let count = decomp.component_count();
    let total = decomp.total_area();
    let mut reasons = Vec::new();
    if count <= 1 {
        reasons.push(PartReject {
            reason: PartRejectReason::TooFewComponents,
            value: count as f64,
            threshold: 2.0,
        });
    }
    if count > config.max_components {
        reasons.push(PartReject {
            reason: PartRejectReason::TooManyComponents,
            value: count as f64,
            threshold: config.max_components as f64,
        });
    }
    if let Some((_, &max_area)) = decomp
        .component_areas
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        let fraction = max_area / total;
        if fraction > config.dominant_area_fraction {
            reasons.push(PartReject {
                reason: PartRejectReason::DominantPart,
                value: fraction,
                threshold: config.dominant_area_fraction,
            });
        }
    }
    if count > 1 {
        let isolated_small = decomp
            .component_areas
            .iter()
            .filter(|(&id, &area)| {
                area < config.isolated_small_area_fraction * total
                    && decomp
                        .component_areas
                        .keys()
                        .filter(|&&other| other != id)
                        .all(|&other| {
                            decomp.distance(id, other).unwrap_or(f64::INFINITY)
                                > config.isolated_distance
                        })
            })
            .count();
        let fraction = isolated_small as f64 / count as f64;
        if fraction > config.isolated_count_fraction {
            reasons.push(PartReject {
                reason: PartRejectReason::IsolatedSmallParts,
                value: fraction,
                threshold: config.isolated_count_fraction,
            });
        }
    }
    PartFilterVerdict::from_reasons(reasons, count)
}

/// Watertight results for the holistic mesh and each part.
pub struct PartWatertightOutput {
    pub holistic: WatertightOutput,
    /// `(component id, per-part result)`, in id order.
    pub parts: Vec<(u32, Result<WatertightOutput, WatertightError>)>,
}

/// Watertighten the holistic mesh and every component separately.
///
/// All meshes are normalized once in the holistic frame so parts stay
/// mutually registered; open boundaries at former contact regions come out
/// sealed by construction.
pub fn watertight_parts(
    decomp: &PartDecomposition,
    config: &WatertightConfig,
) -> Result<PartWatertightOutput, WatertightError> {
    let (normalized, back) = normalize_unit(&decomp.mesh, config.pad)?;
    let mut holistic = watertight_in_frame(&normalized, config)?;
    holistic.mesh = back.apply_mesh(&holistic.mesh);
    holistic.report.hausdorff_est *= back.uniform_scale;

    let mut parts = Vec::new();
    for id in decomp.component_ids() {
        let part = decomp.component_mesh(id);
        let part_normalized = crate::mesh::SimilarityTransform::inverse(&back).apply_mesh(&part);
        let result = watertight_in_frame(&part_normalized, config).map(|mut out| {
            out.mesh = back.apply_mesh(&out.mesh);
            out.report.hausdorff_est *= back.uniform_scale;
            out
        });
        parts.push((id, result));
    }
    Ok(PartWatertightOutput { holistic, parts })
}

/// Histogram over final component counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentHistogram {
    /// Fractions for the buckets 2-5, 6-10, 11-20, 21-50.
    pub buckets: [f64; 4],
    pub mean: f64,
    pub median: f64,
}

pub const HISTOGRAM_BUCKETS: [(u32, u32); 4] = [(2, 5), (6, 10), (11, 20), (21, 50)];

/// Bucket fractions plus mean and median of final component counts.
pub fn component_histogram(counts: &[u32]) -> Result<ComponentHistogram, PartsError> {
    if counts.is_empty() {
        return Err(PartsError::EmptyInput);
    }
    let mut buckets = [0usize; 4];
    for &c in counts {
        let slot = HISTOGRAM_BUCKETS
            .iter()
            .position(|&(lo, hi)| c >= lo && c <= hi)
            .ok_or(PartsError::OutOfRange(c as usize))?;
        buckets[slot] += 1;
    }
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let mut sorted: Vec<u32> = counts.to_vec();
    sorted.sort_unstable();
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2] as f64
    } else {
        (sorted[sorted.len() / 2 - 1] as f64 + sorted[sorted.len() / 2] as f64) / 2.0
    };
    Ok(ComponentHistogram {
        buckets: buckets.map(|b| b as f64 / n),
        mean,
        median,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vec3;
    use crate::shapes;

    #[test]
    fn disjoint_triangles_are_two_components() {
        let a = TriangleMesh {
            name: "a".into(),
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            faces: vec![[0, 1, 2]],
            face_labels: None,
        };
        let mut b = a.clone();
        for v in &mut b.vertices {
            v.x += 5.0;
        }
        let two = shapes::concat(&[&a, &b]);
        let decomp = connected_components(&two).unwrap();
        assert_eq!(decomp.component_count(), 2);
        let sphere = shapes::icosphere(0.5, 2);
        assert_eq!(connected_components(&sphere).unwrap().component_count(), 1);
    }

    #[test]
    fn ids_ranked_by_area() {
        let big = shapes::cube(Vec3::zeros(), 0.5); // area 6
        let mid = shapes::cube(Vec3::new(3.0, 0.0, 0.0), 0.25); // area 1.5
        let tiny = shapes::cube(Vec3::new(-3.0, 0.0, 0.0), 0.05); // area 0.06
        let mesh = shapes::concat(&[&tiny, &mid, &big]);
        let decomp = connected_components(&mesh).unwrap();
        assert_eq!(decomp.component_count(), 3);
        let areas = &decomp.component_areas;
        assert!((areas[&1] - 6.0).abs() < 1e-9);
        assert!((areas[&2] - 1.5).abs() < 1e-9);
        assert!((areas[&3] - 0.06).abs() < 1e-9);
        // proximity symmetric and positive
        assert!(decomp.distance(1, 2).unwrap() > 0.0);
        assert_eq!(decomp.distance(1, 2), decomp.distance(2, 1));
    }

    #[test]
    fn precheck_thresholds() {
        let sphere = shapes::icosphere(0.5, 2);
        let single = connected_components(&sphere).unwrap();
        let verdict = precheck_raw(&single);
        assert!(!verdict.accepted);
        assert!(matches!(
            verdict.reasons[0].reason,
            PartRejectReason::Indivisible
        ));
    }

    #[test]
    fn merge_absorbs_below_threshold() {
        let big = shapes::cube(Vec3::zeros(), 0.5);
        let tiny = shapes::cube(Vec3::new(0.51, 0.0, 0.0), 0.003);
        let far = shapes::cube(Vec3::new(4.0, 0.0, 0.0), 0.4);
        let mesh = shapes::concat(&[&big, &tiny, &far]);
        let decomp = connected_components(&mesh).unwrap();
        assert_eq!(decomp.component_count(), 3);
        let merged = merge_small_components(&decomp, 0.001);
        assert_eq!(merged.component_count(), 2);
        assert_eq!(merged.merge_log.len(), 1);
        // tiny cube merged into the adjacent big cube, not the far one
        let tiny_id = 3u32;
        let big_id = 1u32;
        assert_eq!(merged.merge_log[0].absorbed, tiny_id);
        assert_eq!(merged.merge_log[0].into, big_id);
        // partition invariant: areas still sum to mesh total
        let total =
            crate::mesh::surface_area(&mesh, None);
        assert!((merged.total_area() - total).abs() / total < 1e-9);
    }

    #[test]
    fn merge_is_fixed_point_above_threshold() {
        let a = shapes::cube(Vec3::zeros(), 0.5);
        let b = shapes::cube(Vec3::new(2.0, 0.0, 0.0), 0.5);
        let mesh = shapes::concat(&[&a, &b]);
        let decomp = connected_components(&mesh).unwrap();
        let merged = merge_small_components(&decomp, 0.001);
        assert_eq!(merged.component_count(), 2);
        assert!(merged.merge_log.is_empty());
    }

    #[test]
    fn equidistant_tiny_merges_into_larger() {
        // tiny cube exactly between a big and a small cube
        let tiny = shapes::cube(Vec3::zeros(), 0.0005);
        let big = shapes::cube(Vec3::new(2.0005, 0.0, 0.0), 1.0);
        let small = shapes::cube(Vec3::new(-1.2505, 0.0, 0.0), 0.25);
        // gaps: big face at x=1.0005 -> gap 1.0; small face at -1.0005 -> gap 1.0
        let mesh = shapes::concat(&[&tiny, &big, &small]);
        let decomp = connected_components(&mesh).unwrap();
        let d_big = decomp.distance(1, 3).unwrap();
        let d_small = decomp.distance(2, 3).unwrap();
        assert!((d_big - d_small).abs() < 1e-9, "{d_big} vs {d_small}");
        let merged = merge_small_components(&decomp, 0.001);
        assert_eq!(merged.merge_log[0].into, 1); // the larger one
    }

    #[test]
    fn part_filter_rules() {
        let config = PartFilterConfig::default();
        // dominant part: big cube + small cube
        let big = shapes::cube(Vec3::zeros(), 1.0); // 24
        let small = shapes::cube(Vec3::new(3.0, 0.0, 0.0), 0.2); // 0.96
        let mesh = shapes::concat(&[&big, &small]);
        let decomp = connected_components(&mesh).unwrap();
        let verdict = part_filters(&decomp, &config);
        assert!(!verdict.accepted);
        assert!(verdict
            .reasons
            .iter()
            .any(|r| matches!(r.reason, PartRejectReason::DominantPart)));

        // balanced pair passes
        let a = shapes::cube(Vec3::zeros(), 0.5);
        let b = shapes::cube(Vec3::new(1.2, 0.0, 0.0), 0.5);
        let mesh = shapes::concat(&[&a, &b]);
        let decomp = connected_components(&mesh).unwrap();
        let verdict = part_filters(&decomp, &config);
        assert!(verdict.accepted, "{:?}", verdict.reasons);
    }

    #[test]
    fn histogram_arithmetic() {
        let h = component_histogram(&[3, 7, 15, 30]).unwrap();
        assert_eq!(h.buckets, [0.25, 0.25, 0.25, 0.25]);
        assert!((h.mean - 13.75).abs() < 1e-12);
        assert!((h.median - 11.0).abs() < 1e-12);
        assert!(component_histogram(&[]).is_err());
        assert!(matches!(
            component_histogram(&[1]),
            Err(PartsError::OutOfRange(1))
        ));
        assert!(matches!(
            component_histogram(&[51]),
            Err(PartsError::OutOfRange(51))
        ));
    }
}
