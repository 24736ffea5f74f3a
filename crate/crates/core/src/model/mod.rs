//! Asset, owner-candidate, attribution and org-structure domain model.
//!
//! The [`Store`] is the materialized state of the event log: every mutation
//! arrives as a [`crate::persist::Event`] and is folded in by [`Store::apply`].
//! Read operations are deterministic functions of that state.

mod org;
pub(crate) mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

pub use org::OrgTree;
pub use store::{InteractionRef, OwnerChange, RecommendationState, Store};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque unique asset identifier.
    AssetId
);
string_id!(
    /// Opaque unique owner-candidate identifier.
    CandidateId
);
string_id!(OrgNodeId);

macro_rules! plain_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| format!("unknown {} `{}`", stringify!($name), s))
            }
        }
    };
}

plain_enum!(
    /// Closed at three representative types; each gets its own feature schema.
    AssetType { SourceFile, WarehouseTable, ConfigFile }
);
plain_enum!(CandidateType { Individual, Team, ReportingTeam, OncallRotation });
plain_enum!(OrgKind { Company, Org, Team });
plain_enum!(AttributionSource { Annotation, HumanDecision, AutoApplied, Import });
plain_enum!(EdgeKind { Build, Usage, FeatureMapping, ProductMapping });
plain_enum!(Direction { In, Out, Both });
plain_enum!(Action { Modify, Review, AdminAction, Comment });
plain_enum!(AnnotationKind { OwnersDirective, OncallDirective });
plain_enum!(DecisionKind { Accept, Reject, Delegate });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub asset_id: AssetId,
    pub asset_type: AssetType,
    pub path_or_name: String,
    #[serde(default)]
    pub annotations: Vec<OwnershipAnnotation>,
    pub created_at: Timestamp,
    #[serde(default)]
    pub deleted_at: Option<Timestamp>,
}

impl Asset {
    pub fn new(
        asset_id: impl Into<AssetId>,
        asset_type: AssetType,
        path_or_name: impl Into<String>,
        created_at: Timestamp,
    ) -> Self {
        Self {
            asset_id: asset_id.into(),
            asset_type,
            path_or_name: path_or_name.into(),
            annotations: Vec::new(),
            created_at,
            deleted_at: None,
        }
    }

    /// Live at `at`: created_at ≤ at < deleted_at.
    pub fn is_live_at(&self, at: Timestamp) -> bool {
        self.created_at <= at && self.deleted_at.is_none_or(|d| at < d)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerCandidate {
    pub candidate_id: CandidateId,
    pub candidate_type: CandidateType,
    pub display_name: String,
    pub org_node_id: OrgNodeId,
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgNode {
    pub node_id: OrgNodeId,
    pub parent_id: Option<OrgNodeId>,
    pub kind: OrgKind,
}

/// One interval of the attribution mapping. Intervals are half-open:
/// `[valid_from, valid_to)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub asset_id: AssetId,
    pub owner_id: CandidateId,
    pub valid_from: Timestamp,
    pub valid_to: Option<Timestamp>,
    pub source: AttributionSource,
}

impl AttributionRecord {
    pub fn contains(&self, at: Timestamp) -> bool {
        self.valid_from <= at && self.valid_to.is_none_or(|to| at < to)
    }

    pub fn overlaps(&self, other: &AttributionRecord) -> bool {
        let a_end = self.valid_to.unwrap_or(Timestamp::MAX);
        let b_end = other.valid_to.unwrap_or(Timestamp::MAX);
        self.valid_from < b_end && other.valid_from < a_end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub from_asset_id: AssetId,
    pub to_asset_id: AssetId,
    pub edge_kind: EdgeKind,
    /// When the dependency became known; features only see edges recorded before `as_of`.
    #[serde(default)]
    pub recorded_at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub event_id: String,
    pub actor_id: CandidateId,
    pub asset_id: AssetId,
    pub action: Action,
    pub at: Timestamp,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnershipAnnotation {
    pub asset_id: AssetId,
    pub named_candidate: CandidateId,
    pub annotation_kind: AnnotationKind,
    pub source_location: String,
    /// When the annotation was read from the asset.
    #[serde(default)]
    pub observed_at: Timestamp,
}

/// A recorded human decision on a recommended (asset, candidate) pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub decision_id: String,
    #[serde(default)]
    pub recommendation_id: Option<String>,
    pub asset_id: AssetId,
    pub candidate_id: CandidateId,
    pub decision: DecisionKind,
    #[serde(default)]
    pub delegate_to: Option<CandidateId>,
    pub decided_by: CandidateId,
    pub at: Timestamp,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown asset `{0}`")]
    UnknownAsset(AssetId),
    #[error("unknown candidate `{0}`")]
    UnknownCandidate(CandidateId),
    #[error("unknown org node `{0}`")]
    UnknownOrgNode(OrgNodeId),
    #[error("asset `{0}` already registered")]
    DuplicateAsset(AssetId),
    #[error("candidate `{0}` already registered")]
    DuplicateCandidate(CandidateId),
    #[error("invalid org tree: {0}")]
    InvalidOrgTree(String),
    #[error("candidate `{0}` is inactive")]
    InactiveCandidate(CandidateId),
    #[error("candidate `{0}` is not an individual")]
    NotAnIndividual(CandidateId),
    #[error("timestamp {at} precedes the open attribution of `{asset}` starting at {open_since}")]
    NonMonotonicTimestamp {
        asset: AssetId,
        at: Timestamp,
        open_since: Timestamp,
    },
    #[error("`{owner}` already owns `{asset}`")]
    RedundantTransfer { asset: AssetId, owner: CandidateId },
    #[error("attribution for `{0}` overlaps an existing interval")]
    OverlappingAttribution(AssetId),
    #[error("asset `{0}` is deleted")]
    AssetDeleted(AssetId),
    #[error("unknown recommendation `{0}`")]
    UnknownRecommendation(String),
    #[error("candidate `{candidate}` is not part of recommendation `{recommendation}`")]
    CandidateNotInRecommendation {
        recommendation: String,
        candidate: CandidateId,
    },
    #[error("recommendation `{recommendation}` was already decided by `{decided_by}`")]
    StaleRecommendation {
        recommendation: String,
        decided_by: CandidateId,
    },
    #[error("invalid record: {0}")]
    Invalid(String),
}
