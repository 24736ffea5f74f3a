use serde::{Deserialize, Serialize};

use crate::learn::ModelRecord;
use crate::model::{
    Asset, AssetId, AttributionRecord, CandidateId, DecisionRecord, DependencyEdge,
    InteractionEvent, OrgNode, OrgNodeId, OwnerCandidate, OwnershipAnnotation,
};
use crate::recommend::Recommendation;
use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRegistration {
    pub candidate: OwnerCandidate,
    /// Effective time of the registration.
    pub at: Timestamp,
}

/// One ingestion batch. Assets and actors first seen in the batch are
/// registered by the same event so that an ingest call is a single state change.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionBatch {
    pub source: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub org_nodes: Vec<OrgNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateRegistration>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assets: Vec<Asset>,
    pub interactions: Vec<InteractionEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OwnerChangeRecord {
    pub record: AttributionRecord,
    #[serde(default)]
    pub changed_by: Option<CandidateId>,
}

/// Every state change of the engine, in the order it was recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data")]
pub enum Event {
    OrgNodeRegistered(OrgNode),
    AssetRegistered(Asset),
    AssetDeleted {
        asset_id: AssetId,
        at: Timestamp,
    },
    CandidateRegistered(CandidateRegistration),
    /// Org move or (de)activation, effective from `at`.
    CandidateUpdated {
        candidate_id: CandidateId,
        at: Timestamp,
        org_node_id: OrgNodeId,
        active: bool,
    },
    DependencyRecorded(DependencyEdge),
    InteractionIngested(InteractionBatch),
    AnnotationRecorded {
        asset_id: AssetId,
        annotations: Vec<OwnershipAnnotation>,
    },
    OwnerChanged(OwnerChangeRecord),
    /// Historical intervals loaded from an external system, all with source Import.
    AttributionImported {
        records: Vec<AttributionRecord>,
    },
    RecommendationIssued(Box<Recommendation>),
    /// A human decision; an Accept carries the attribution change it caused.
    DecisionRecorded {
        decision: DecisionRecord,
        #[serde(default)]
        transfer: Option<AttributionRecord>,
    },
    ModelTrained(Box<ModelRecord>),
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::OrgNodeRegistered(_) => "OrgNodeRegistered",
            Event::AssetRegistered(_) => "AssetRegistered",
            Event::AssetDeleted { .. } => "AssetDeleted",
            Event::CandidateRegistered(_) => "CandidateRegistered",
            Event::CandidateUpdated { .. } => "CandidateUpdated",
            Event::DependencyRecorded(_) => "DependencyRecorded",
            Event::InteractionIngested(_) => "InteractionIngested",
            Event::AnnotationRecorded { .. } => "AnnotationRecorded",
            Event::OwnerChanged(_) => "OwnerChanged",
            Event::AttributionImported { .. } => "AttributionImported",
            Event::RecommendationIssued(_) => "RecommendationIssued",
            Event::DecisionRecorded { .. } => "DecisionRecorded",
            Event::ModelTrained(_) => "ModelTrained",
        }
    }

    /// Logical time of the event; used as `recorded_at` so logs are reproducible.
    pub fn effective_time(&self) -> Option<Timestamp> {
        match self {
            Event::OrgNodeRegistered(_) => None,
            Event::AssetRegistered(a) => Some(a.created_at),
            Event::AssetDeleted { at, .. } => Some(*at),
            Event::CandidateRegistered(c) => Some(c.at),
            Event::CandidateUpdated { at, .. } => Some(*at),
            Event::DependencyRecorded(e) => Some(e.recorded_at),
            Event::InteractionIngested(b) => b.interactions.iter().map(|i| i.at).max(),
            Event::AnnotationRecorded { annotations, .. } => {
                annotations.iter().map(|a| a.observed_at).max()
            }
            Event::OwnerChanged(c) => Some(c.record.valid_from),
            Event::AttributionImported { records } => records.iter().map(|r| r.valid_from).max(),
            Event::RecommendationIssued(r) => Some(r.as_of),
            Event::DecisionRecorded { decision, .. } => Some(decision.at),
            Event::ModelTrained(m) => Some(m.trained_at),
        }
    }
}
