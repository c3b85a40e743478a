//! Corpus bookkeeping: content-hash asset ids, deterministic splits,
//! taxonomy-validated manifests and distribution statistics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::filtering::FilterVerdict;
use crate::parts::{component_histogram, ComponentHistogram, PartFilterVerdict};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("need {needed} assets for the requested split, have {available}")]
    InsufficientAssets { needed: usize, available: usize },
    #[error("unknown category path {0}")]
    UnknownCategory(String),
    #[error("duplicate asset id {0}")]
    DuplicateAssetId(String),
    #[error("asset {asset}: missing artifact {role} at {path}")]
    MissingArtifact {
        asset: String,
        role: String,
        path: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Three-level category tree: top -> mid -> fine names.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Taxonomy {
    pub levels: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl Taxonomy {
    pub fn from_json(bytes: &[u8]) -> Result<Taxonomy, DatasetError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Taxonomy, DatasetError> {
        Self::from_json(&std::fs::read(path)?)
    }

    pub fn contains(&self, path: &CategoryPath) -> bool {
        self.levels
            .get(&path.top)
            .and_then(|mids| mids.get(&path.mid))
            .map(|fines| fines.iter().any(|f| f == &path.fine))
            .unwrap_or(false)
    }

    /// All `(top, mid, fine)` leaves in deterministic order.
    pub fn leaves(&self) -> Vec<CategoryPath> {
        let mut out = Vec::new();
        for (top, mids) in &self.levels {
            for (mid, fines) in mids {
                for fine in fines {
                    out.push(CategoryPath {
                        top: top.clone(),
                        mid: mid.clone(),
                        fine: fine.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.levels
            .values()
            .map(|m| m.values().map(Vec::len).sum::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryPath {
    pub top: String,
    pub mid: String,
    pub fine: String,
}

impl std::fmt::Display for CategoryPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.top, self.mid, self.fine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub n_test: usize,
    pub n_val: usize,
    pub seed: u64,
}

/// Stable content-hash id for an asset's source bytes.
pub fn asset_id_from_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Deterministic split assignment: ids are ranked by a seeded keyed hash, the
/// first `n_test` become test, the next `n_val` val, the rest train.
/// Permutation-invariant and rerun-stable.
pub fn assign_splits(
    ids: &[String],
    policy: &SplitPolicy,
) -> Result<BTreeMap<String, Split>, DatasetError> {
    let mut unique: Vec<&String> = ids.iter().collect();
    unique.sort();
    unique.dedup();
    if policy.n_test + policy.n_val > unique.len() {
        return Err(DatasetError::InsufficientAssets {
            needed: policy.n_test + policy.n_val,
            available: unique.len(),
        });
    }
    let mut keyed: Vec<([u8; 32], &String)> = unique
        .into_iter()
        .map(|id| {
            let mut hasher = Sha256::new();
            hasher.update(policy.seed.to_le_bytes());
            hasher.update(id.as_bytes());
            (hasher.finalize().into(), id)
        })
        .collect();
    keyed.sort();
    let mut out = BTreeMap::new();
    for (rank, (_, id)) in keyed.into_iter().enumerate() {
        let split = if rank < policy.n_test {
            Split::Test
        } else if rank < policy.n_test + policy.n_val {
            Split::Val
        } else {
            Split::Train
        };
        out.insert(id.clone(), split);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AssetVerdicts {
    pub full: Option<FilterVerdict>,
    pub part: Option<PartFilterVerdict>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetRecord {
    /// Content hash of the source mesh bytes.
    pub asset_id: String,
    pub category: CategoryPath,
    /// Role -> relative path (raw, watertight, samples, parts_dir, masks_dir,
    /// reports).
    pub artifacts: BTreeMap<String, String>,
    pub verdicts: AssetVerdicts,
    pub split: Split,
    /// Final component count for part-level assets.
    pub component_count: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub records: Vec<AssetRecord>,
    pub taxonomy: Taxonomy,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_top_category: BTreeMap<String, usize>,
    pub split_counts: BTreeMap<String, usize>,
    pub component_histogram: Option<ComponentHistogram>,
}

/// Validate records against the taxonomy (and, when `artifact_root` is
/// given, the filesystem) and build the manifest with embedded stats.
pub fn build_manifest(
    records: Vec<AssetRecord>,
    taxonomy: Taxonomy,
    artifact_root: Option<&Path>,
) -> Result<Manifest, DatasetError> {
    let mut seen = std::collections::HashSet::new();
    for r in &records {
        if !taxonomy.contains(&r.category) {
            return Err(DatasetError::UnknownCategory(r.category.to_string()));
        }
        if !seen.insert(r.asset_id.clone()) {
            return Err(DatasetError::DuplicateAssetId(r.asset_id.clone()));
        }
        if let Some(root) = artifact_root {
            for (role, rel) in &r.artifacts {
                if !root.join(rel).exists() {
                    return Err(DatasetError::MissingArtifact {
                        asset: r.asset_id.clone(),
                        role: role.clone(),
                        path: rel.clone(),
                    });
                }
            }
        }
    }
    let stats = stats_of(&records);
    Ok(Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        records,
        taxonomy,
        stats,
    })
}

fn stats_of(records: &[AssetRecord]) -> CorpusStats {
    let mut per_top = BTreeMap::new();
    let mut splits = BTreeMap::new();
    let mut counts = Vec::new();
    for r in records {
        *per_top.entry(r.category.top.clone()).or_insert(0) += 1;
        let split_name = match r.split {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        };
        *splits.entry(split_name.to_string()).or_insert(0) += 1;
        if let Some(c) = r.component_count {
            counts.push(c);
        }
    }
    CorpusStats {
        per_top_category: per_top,
        split_counts: splits,
        component_histogram: component_histogram(&counts).ok(),
    }
}

/// Recompute distribution statistics from a manifest.
pub fn corpus_stats(manifest: &Manifest) -> CorpusStats {
    stats_of(&manifest.records)
}

impl Manifest {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("manifest is serializable")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Manifest, DatasetError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
        Self::from_json(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_taxonomy() -> Taxonomy {
        let json = serde_json::json!({
            "levels": {
                "Animal": {"Pets": ["Dog", "Cat"]},
                "Furniture": {"Tables": ["Desk"]},
            }
        });
        Taxonomy::from_json(&serde_json::to_vec(&json).unwrap()).unwrap()
    }

    fn record(id: &str, top: &str, mid: &str, fine: &str) -> AssetRecord {
        AssetRecord {
            asset_id: id.into(),
            category: CategoryPath {
                top: top.into(),
                mid: mid.into(),
                fine: fine.into(),
            },
            artifacts: BTreeMap::new(),
            verdicts: AssetVerdicts::default(),
            split: Split::Unassigned,
            component_count: None,
        }
    }

    #[test]
    fn split_is_deterministic_and_order_free() {
        let ids: Vec<String> = (0..1000).map(|i| format!("asset-{i:04}")).collect();
        let policy = SplitPolicy {
            n_test: 40,
            n_val: 28,
            seed: 7,
        };
        let a = assign_splits(&ids, &policy).unwrap();
        let mut shuffled = ids.clone();
        shuffled.reverse();
        let b = assign_splits(&shuffled, &policy).unwrap();
        assert_eq!(a, b);
        let counts = |m: &BTreeMap<String, Split>, s: Split| {
            m.values().filter(|&&v| v == s).count()
        };
        assert_eq!(counts(&a, Split::Test), 40);
        assert_eq!(counts(&a, Split::Val), 28);
        assert_eq!(counts(&a, Split::Train), 932);
    }

    #[test]
    fn zero_split_all_train() {
        let ids: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let policy = SplitPolicy {
            n_test: 0,
            n_val: 0,
            seed: 0,
        };
        let splits = assign_splits(&ids, &policy).unwrap();
        assert!(splits.values().all(|&s| s == Split::Train));
    }

    #[test]
    fn insufficient_assets_rejected() {
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let policy = SplitPolicy {
            n_test: 4,
            n_val: 2,
            seed: 0,
        };
        assert!(matches!(
            assign_splits(&ids, &policy),
            Err(DatasetError::InsufficientAssets { .. })
        ));
    }

    #[test]
    fn manifest_validation() {
        let tax = tiny_taxonomy();
        let records = vec![
            record("a1", "Animal", "Pets", "Dog"),
            record("a2", "Animal", "Pets", "Cat"),
            record("a3", "Furniture", "Tables", "Desk"),
        ];
        let manifest = build_manifest(records.clone(), tax.clone(), None).unwrap();
        assert_eq!(manifest.records.len(), 3);
        assert_eq!(manifest.stats.per_top_category["Animal"], 2);

        let bad = vec![record("x", "Animal", "Pets", "Ferret")];
        assert!(matches!(
            build_manifest(bad, tax.clone(), None),
            Err(DatasetError::UnknownCategory(_))
        ));
        let dup = vec![
            record("same", "Animal", "Pets", "Dog"),
            record("same", "Animal", "Pets", "Cat"),
        ];
        assert!(matches!(
            build_manifest(dup, tax.clone(), None),
            Err(DatasetError::DuplicateAssetId(_))
        ));
        let mut with_artifact = record("a9", "Animal", "Pets", "Dog");
        with_artifact
            .artifacts
            .insert("raw".into(), "missing/raw.ply".into());
        assert!(matches!(
            build_manifest(vec![with_artifact], tax, Some(Path::new("/nonexistent"))),
            Err(DatasetError::MissingArtifact { .. })
        ));
    }

    #[test]
    fn manifest_json_round_trip() {
        let tax = tiny_taxonomy();
        let mut records = vec![record("a1", "Animal", "Pets", "Dog")];
        records[0].split = Split::Test;
        records[0].component_count = Some(12);
        let manifest = build_manifest(records, tax, None).unwrap();
        let json = manifest.to_json();
        let back = Manifest::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert_eq!(back.stats.split_counts["test"], 1);
    }

    #[test]
    fn content_hash_is_stable() {
        let id = asset_id_from_bytes(b"hello mesh");
        assert_eq!(id.len(), 64);
        assert_eq!(id, asset_id_from_bytes(b"hello mesh"));
        assert_ne!(id, asset_id_from_bytes(b"other mesh"));
    }

    #[test]
    fn empty_manifest_stats_are_zero() {
        let manifest = build_manifest(vec![], tiny_taxonomy(), None).unwrap();
        let stats = corpus_stats(&manifest);
        assert!(stats.per_top_category.is_empty());
        assert!(stats.split_counts.is_empty());
        assert!(stats.component_histogram.is_none());
    }
}
