//! Point-in-time feature vectors for (asset, candidate) pairs.
//!
//! Every feature is computed from facts timestamped strictly before `as_of`:
//! interactions, annotations, attribution, dependency edges and org
//! membership. Adding anything at or after `as_of` leaves the vector unchanged.

use std::collections::HashSet;
use std::io::{self, Write};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::model::store::{annotation_names, count_before};
use crate::model::{AssetId, AssetType, CandidateId, Direction, ModelError, Store};
use crate::time::{Timestamp, DAY};

pub const SCHEMA_VERSION: u32 = 1;

pub const RECENCY_CAP_DAYS: f64 = 365.0;
pub const ORG_DISTANCE_CAP: u32 = 10;
pub const TOUCH_WINDOW_DAYS: i64 = 90;
pub const ADMIN_WINDOW_DAYS: i64 = 30;

/// How a feature may be perturbed when searching for counterfactuals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Days since last touch; perturbed by setting it to a menu value.
    Recency,
    /// Event count; perturbed by adding a menu increment.
    Count,
    /// 0/1 indicator; perturbed by flipping.
    Binary,
    /// Shares, similarities and distances: not directly actionable.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDef {
    pub name: &'static str,
    pub doc: &'static str,
    pub kind: FeatureKind,
    pub min: f64,
    pub max: f64,
}

impl FeatureDef {
    const fn new(name: &'static str, doc: &'static str, kind: FeatureKind, min: f64, max: f64) -> Self {
        Self { name, doc, kind, min, max }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSchema {
    pub asset_type: AssetType,
    pub version: u32,
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn for_type(asset_type: AssetType) -> &'static FeatureSchema {
        match asset_type {
            AssetType::SourceFile => &SOURCE_FILE_SCHEMA,
            AssetType::WarehouseTable => &WAREHOUSE_TABLE_SCHEMA,
            AssetType::ConfigFile => &CONFIG_FILE_SCHEMA,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.features.iter().map(|f| f.name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

const F_RECENCY: FeatureDef = FeatureDef::new(
    "f_recency_days",
    "Days since the candidate last interacted with the asset (capped at 365).",
    FeatureKind::Recency,
    0.0,
    RECENCY_CAP_DAYS,
);
const F_TOUCH: FeatureDef = FeatureDef::new(
    "f_touch_count_90d",
    "Number of the candidate's interactions with the asset in the last 90 days.",
    FeatureKind::Count,
    0.0,
    f64::INFINITY,
);
const F_AUTHORSHIP: FeatureDef = FeatureDef::new(
    "f_authorship_share",
    "Share of all modifications of the asset made by the candidate.",
    FeatureKind::Fixed,
    0.0,
    1.0,
);
const F_ANNOTATION: FeatureDef = FeatureDef::new(
    "f_annotation_match",
    "1 when an ownership annotation in the asset names the candidate.",
    FeatureKind::Binary,
    0.0,
    1.0,
);
const F_ADMIN: FeatureDef = FeatureDef::new(
    "f_admin_actions_30d",
    "Admin-tool actions by the candidate on the table in the last 30 days.",
    FeatureKind::Count,
    0.0,
    f64::INFINITY,
);
const F_ORG: FeatureDef = FeatureDef::new(
    "f_org_distance",
    "Org-tree hops between the candidate and the current owner (10 when unowned).",
    FeatureKind::Fixed,
    0.0,
    ORG_DISTANCE_CAP as f64,
);
const F_DEP_EXPERIENCE: FeatureDef = FeatureDef::new(
    "f_dependency_experience",
    "Cosine similarity between the candidate's per-asset activity and the asset with its dependency neighbors.",
    FeatureKind::Fixed,
    0.0,
    1.0,
);
const F_NEIGHBOR_SHARE: FeatureDef = FeatureDef::new(
    "f_neighbor_ownership_share",
    "Fraction of the asset's dependency neighbors currently owned by the candidate.",
    FeatureKind::Fixed,
    0.0,
    1.0,
);

fn schema(asset_type: AssetType) -> FeatureSchema {
    let mut features = vec![F_RECENCY, F_TOUCH, F_AUTHORSHIP, F_ANNOTATION];
    if asset_type == AssetType::WarehouseTable {
        features.push(F_ADMIN);
    }
    features.extend([F_ORG, F_DEP_EXPERIENCE, F_NEIGHBOR_SHARE]);
    FeatureSchema {
        asset_type,
        version: SCHEMA_VERSION,
        features,
    }
}

static SOURCE_FILE_SCHEMA: LazyLock<FeatureSchema> =
    LazyLock::new(|| schema(AssetType::SourceFile));
static WAREHOUSE_TABLE_SCHEMA: LazyLock<FeatureSchema> =
    LazyLock::new(|| schema(AssetType::WarehouseTable));
static CONFIG_FILE_SCHEMA: LazyLock<FeatureSchema> =
    LazyLock::new(|| schema(AssetType::ConfigFile));

/// Feature values for one (asset, candidate, as_of) triple, ordered by the
/// asset type's schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub asset_id: AssetId,
    pub candidate_id: CandidateId,
    pub as_of: Timestamp,
    pub asset_type: AssetType,
    pub schema_version: u32,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn schema(&self) -> &'static FeatureSchema {
        FeatureSchema::for_type(self.asset_type)
    }

    /// `(feature_name, value)` pairs in schema order.
    pub fn named(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        self.schema().names().zip(self.values.iter().copied())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.schema().index_of(name).map(|i| self.values[i])
    }
}

pub fn compute_features(
    store: &Store,
    asset_id: &AssetId,
    candidate_id: &CandidateId,
    as_of: Timestamp,
) -> Result<FeatureVector, ModelError> {
    let aix = store.asset_ix(asset_id)?;
    let cix = store.candidate_ix(candidate_id)?;
    let asset = store.asset_at(aix);
    let asset_type = asset.asset.asset_type;
    let touches = asset.actors.get(&cix);

    let (recency, touch_90d, mine_modify, admin_30d) = match touches {
        None => (RECENCY_CAP_DAYS, 0, 0, 0),
        Some(t) => {
            let n = count_before(&t.all, as_of);
            let recency = if n == 0 {
                RECENCY_CAP_DAYS
            } else {
                ((as_of - t.all[n - 1]) as f64 / DAY as f64).min(RECENCY_CAP_DAYS)
            };
            let touch = n - count_before(&t.all, as_of - TOUCH_WINDOW_DAYS * DAY);
            let modify = count_before(&t.modify, as_of);
            let admin = count_before(&t.admin, as_of)
                - count_before(&t.admin, as_of - ADMIN_WINDOW_DAYS * DAY);
            (recency, touch, modify, admin)
        }
    };
    let all_modify = count_before(&asset.modify_times, as_of);
    let authorship = if all_modify == 0 {
        0.0
    } else {
        mine_modify as f64 / all_modify as f64
    };
    let annotation = if annotation_names(&asset.asset.annotations, candidate_id, as_of) {
        1.0
    } else {
        0.0
    };

    let org_distance = match store.owner_ix_before(aix, as_of) {
        None => ORG_DISTANCE_CAP,
        Some(owner) => {
            let (cand_org, _) = store.candidate_at(cix).state_at(as_of - 1);
            let (owner_org, _) = store.candidate_at(owner).state_at(as_of - 1);
            store.org_distance_ix(cand_org, owner_org).min(ORG_DISTANCE_CAP)
        }
    };

    let mut neighbors = store.neighbor_ixs(aix, None, Direction::Both, Some(as_of));
    neighbors.sort_unstable();
    neighbors.dedup();

    let experience = {
        let cand = store.candidate_at(cix);
        let mut norm_sq = 0.0;
        let mut counts = Vec::with_capacity(cand.touched.len());
        for &x in &cand.touched {
            let c = store
                .asset_at(x)
                .actors
                .get(&cix)
                .map_or(0, |t| count_before(&t.all, as_of));
            if c > 0 {
                norm_sq += (c * c) as f64;
                counts.push((x, c));
            }
        }
        if norm_sq == 0.0 {
            0.0
        } else {
            let required: HashSet<usize> =
                neighbors.iter().copied().chain(std::iter::once(aix)).collect();
            let dot: usize = counts
                .iter()
                .filter(|(x, _)| required.contains(x))
                .map(|&(_, c)| c)
                .sum();
            (dot as f64 / (norm_sq.sqrt() * (required.len() as f64).sqrt())).min(1.0)
        }
    };

    let neighbor_share = if neighbors.is_empty() {
        0.0
    } else {
        let owned = neighbors
            .iter()
            .filter(|&&n| store.owner_ix_before(n, as_of) == Some(cix))
            .count();
        owned as f64 / neighbors.len() as f64
    };

    let mut values = vec![recency, touch_90d as f64, authorship, annotation];
    if asset_type == AssetType::WarehouseTable {
        values.push(admin_30d as f64);
    }
    values.extend([org_distance as f64, experience, neighbor_share]);

    Ok(FeatureVector {
        asset_id: asset_id.clone(),
        candidate_id: candidate_id.clone(),
        as_of,
        asset_type,
        schema_version: SCHEMA_VERSION,
        values,
    })
}

/// Batch form of [`compute_features`]; order preserved, fails on the first invalid pair.
pub fn compute_feature_matrix(
    store: &Store,
    pairs: &[(AssetId, CandidateId, Timestamp)],
) -> Result<Vec<FeatureVector>, ModelError> {
    pairs
        .iter()
        .map(|(a, c, t)| compute_features(store, a, c, *t))
        .collect()
}

/// Writes vectors of a single asset type as tab-separated text with a header row.
pub fn write_matrix_tsv<W: Write>(out: &mut W, vectors: &[FeatureVector]) -> io::Result<()> {
    let Some(first) = vectors.first() else {
        return writeln!(out, "asset_id\tcandidate_id\tas_of");
    };
    if vectors.iter().any(|v| v.asset_type != first.asset_type) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "feature matrix mixes asset types",
        ));
    }
    write!(out, "asset_id\tcandidate_id\tas_of")?;
    for name in first.schema().names() {
        write!(out, "\t{name}")?;
    }
    writeln!(out)?;
    for v in vectors {
        write!(out, "{}\t{}\t{}", v.asset_id, v.candidate_id, v.as_of)?;
        for x in &v.values {
            write!(out, "\t{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schemas_are_type_specific_and_documented() {
        for &t in AssetType::ALL {
            let s = FeatureSchema::for_type(t);
            let names: HashSet<_> = s.names().collect();
            assert_eq!(names.len(), s.len());
            assert!(s.features.iter().all(|f| !f.doc.is_empty()));
            assert_eq!(
                s.index_of("f_admin_actions_30d").is_some(),
                t == AssetType::WarehouseTable
            );
        }
        assert_eq!(FeatureSchema::for_type(AssetType::SourceFile).len(), 7);
        assert_eq!(FeatureSchema::for_type(AssetType::WarehouseTable).len(), 8);
    }

    #[test]
    fn empty_matrix_writes_header_only() {
        let mut buf = Vec::new();
        write_matrix_tsv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "asset_id\tcandidate_id\tas_of\n");
    }
}
