use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{
    Action, Asset, AssetId, AssetType, AttributionRecord, AttributionSource, CandidateId,
    CandidateType, DecisionKind, DecisionRecord, DependencyEdge, Direction, EdgeKind,
    InteractionEvent, ModelError, OrgNode, OrgTree, OwnerCandidate, OwnershipAnnotation,
};
use crate::learn::ModelRecord;
use crate::persist::{CandidateRegistration, Event, InteractionBatch, OwnerChangeRecord};
use crate::recommend::Recommendation;
use crate::time::Timestamp;

/// Sorted interaction timestamps of one actor on one asset.
#[derive(Clone, Debug, Default)]
pub(crate) struct ActorTouches {
    pub all: Vec<Timestamp>,
    pub modify: Vec<Timestamp>,
    pub admin: Vec<Timestamp>,
}

fn insert_sorted(v: &mut Vec<Timestamp>, t: Timestamp) {
    if v.last().is_none_or(|&last| last <= t) {
        v.push(t);
    } else {
        let pos = v.partition_point(|&x| x <= t);
        v.insert(pos, t);
    }
}

/// Number of entries strictly before `t`.
pub(crate) fn count_before(v: &[Timestamp], t: Timestamp) -> usize {
    v.partition_point(|&x| x < t)
}

#[derive(Clone, Debug)]
pub(crate) struct AssetState {
    pub asset: Asset,
    pub seq: u64,
    /// Sorted by valid_from; pairwise non-overlapping.
    pub attribution: Vec<AttributionRecord>,
    pub actors: HashMap<usize, ActorTouches>,
    pub modify_times: Vec<Timestamp>,
    pub out_edges: Vec<usize>,
    pub in_edges: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct CandidateState {
    pub candidate: OwnerCandidate,
    pub seq: u64,
    /// (effective from, org node index, active), sorted by time.
    pub history: Vec<(Timestamp, usize, bool)>,
    pub touched: Vec<usize>,
    touched_set: HashSet<usize>,
}

impl CandidateState {
    /// Org node index and active flag in effect at `at`. Before the first
    /// entry the candidate is not yet registered, hence inactive.
    pub fn state_at(&self, at: Timestamp) -> (usize, bool) {
        let pos = self.history.partition_point(|&(from, _, _)| from <= at);
        if pos == 0 {
            (self.history[0].1, false)
        } else {
            let (_, org, active) = self.history[pos - 1];
            (org, active)
        }
    }
}

#[derive(Clone, Debug)]
struct Touch {
    event_id: Box<str>,
    asset: u32,
    actor: u32,
    action: Action,
    at: Timestamp,
}

/// Borrowed view of one stored interaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InteractionRef<'a> {
    pub event_id: &'a str,
    pub actor_id: &'a CandidateId,
    pub asset_id: &'a AssetId,
    pub action: Action,
    pub at: Timestamp,
}

/// An accepted change to the attribution mapping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerChange {
    pub asset_id: AssetId,
    pub owner_id: CandidateId,
    pub at: Timestamp,
    pub source: AttributionSource,
    pub changed_by: Option<CandidateId>,
    pub decision_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationState {
    pub recommendation: Recommendation,
    pub seq: u64,
    /// Set once an Accept or Reject lands.
    pub decided: Option<DecisionRecord>,
    /// Candidate whose queue holds the item after a delegation.
    pub queue: Option<CandidateId>,
}

impl RecommendationState {
    pub fn is_pending(&self) -> bool {
        self.decided.is_none()
    }
}

/// Materialized ownership state.
#[derive(Clone, Debug, Default)]
pub struct Store {
    org: OrgTree,
    assets: Vec<AssetState>,
    asset_index: HashMap<AssetId, usize>,
    path_index: HashMap<String, usize>,
    candidates: Vec<CandidateState>,
    candidate_index: HashMap<CandidateId, usize>,
    edges: Vec<DependencyEdge>,
    edge_set: HashSet<(usize, usize, EdgeKind)>,
    touches: Vec<Touch>,
    touch_ids: HashSet<Box<str>>,
    recommendations: Vec<RecommendationState>,
    recommendation_index: HashMap<String, usize>,
    decisions: Vec<DecisionRecord>,
    owner_changes: Vec<OwnerChange>,
    models: Vec<ModelRecord>,
    clock: Option<Timestamp>,
    last_seq: Option<u64>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    // ---- reads ---------------------------------------------------------

    pub fn org(&self) -> &OrgTree {
        &self.org
    }

    /// Latest logical time seen in any event.
    pub fn clock(&self) -> Option<Timestamp> {
        self.clock
    }

    pub fn last_sequence(&self) -> Option<u64> {
        self.last_seq
    }

    pub fn asset(&self, id: &AssetId) -> Option<&Asset> {
        self.asset_index.get(id).map(|&ix| &self.assets[ix].asset)
    }

    /// Assets in registration order.
    pub fn assets(&self) -> impl Iterator<Item = &Asset> {
        self.assets.iter().map(|s| &s.asset)
    }

    pub fn asset_count(&self) -> usize {
        self.assets.len()
    }

    /// Sequence number of the event that registered the asset.
    pub fn asset_sequence(&self, id: &AssetId) -> Option<u64> {
        self.asset_index.get(id).map(|&ix| self.assets[ix].seq)
    }

    /// Asset registered under `path` as its path/name, else as its id.
    pub fn find_asset_by_path(&self, path: &str) -> Option<&Asset> {
        self.path_index
            .get(path)
            .or_else(|| self.asset_index.get(path))
            .map(|&ix| &self.assets[ix].asset)
    }

    pub fn candidate(&self, id: &CandidateId) -> Option<&OwnerCandidate> {
        self.candidate_index
            .get(id)
            .map(|&ix| &self.candidates[ix].candidate)
    }

    pub fn candidates(&self) -> impl Iterator<Item = &OwnerCandidate> {
        self.candidates.iter().map(|s| &s.candidate)
    }

    /// Sequence number of the event that registered the candidate.
    pub fn candidate_sequence(&self, id: &CandidateId) -> Option<u64> {
        self.candidate_index.get(id).map(|&ix| self.candidates[ix].seq)
    }

    /// Org node and active flag of a candidate at `at`.
    pub fn candidate_state_at(
        &self,
        id: &CandidateId,
        at: Timestamp,
    ) -> Option<(&OrgNode, bool)> {
        let ix = *self.candidate_index.get(id)?;
        let (org, active) = self.candidates[ix].state_at(at);
        Some((self.org.node(org), active))
    }

    pub fn attribution(&self, id: &AssetId) -> Result<&[AttributionRecord], ModelError> {
        Ok(&self.asset_state(id)?.attribution)
    }

    /// Owner whose half-open interval contains `at`.
    pub fn current_owner(
        &self,
        id: &AssetId,
        at: Timestamp,
    ) -> Result<Option<&CandidateId>, ModelError> {
        let state = self.asset_state(id)?;
        Ok(owner_in(&state.attribution, at))
    }

    /// Live assets without an owner at `at`, sorted by id.
    pub fn unowned_assets(&self, at: Timestamp) -> Vec<AssetId> {
        let mut out: Vec<AssetId> = self
            .assets
            .iter()
            .filter(|s| s.asset.is_live_at(at) && owner_in(&s.attribution, at).is_none())
            .map(|s| s.asset.asset_id.clone())
            .collect();
        out.sort();
        out
    }

    pub fn dependency_neighbors(
        &self,
        id: &AssetId,
        kinds: &[EdgeKind],
        direction: Direction,
    ) -> Result<Vec<AssetId>, ModelError> {
        let ix = self.asset_ix(id)?;
        let mut out: Vec<AssetId> = self
            .neighbor_ixs(ix, Some(kinds), direction, None)
            .into_iter()
            .map(|n| self.assets[n].asset.asset_id.clone())
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }

    pub fn edges(&self) -> &[DependencyEdge] {
        &self.edges
    }

    pub fn interaction_count(&self) -> usize {
        self.touches.len()
    }

    pub fn has_interaction(&self, event_id: &str) -> bool {
        self.touch_ids.contains(event_id)
    }

    /// All interactions in ingestion order.
    pub fn interactions(&self) -> impl Iterator<Item = InteractionRef<'_>> {
        self.touches.iter().map(|t| InteractionRef {
            event_id: &t.event_id,
            actor_id: &self.candidates[t.actor as usize].candidate.candidate_id,
            asset_id: &self.assets[t.asset as usize].asset.asset_id,
            action: t.action,
            at: t.at,
        })
    }

    pub fn owner_changes(&self) -> &[OwnerChange] {
        &self.owner_changes
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn recommendations(&self) -> &[RecommendationState] {
        &self.recommendations
    }

    pub fn recommendation(&self, id: &str) -> Option<&RecommendationState> {
        self.recommendation_index
            .get(id)
            .map(|&ix| &self.recommendations[ix])
    }

    pub fn next_recommendation_id(&self) -> String {
        format!("rec-{:06}", self.recommendations.len() + 1)
    }

    pub fn next_decision_id(&self) -> String {
        format!("dec-{:06}", self.decisions.len() + 1)
    }

    pub fn models(&self) -> &[ModelRecord] {
        &self.models
    }

    /// Most recently trained model for an asset type.
    pub fn current_model(&self, asset_type: AssetType) -> Option<&ModelRecord> {
        self.models
            .iter()
            .rev()
            .find(|m| m.model.asset_type() == asset_type)
    }

    // ---- crate-internal accessors used by feature extraction ----------

    pub(crate) fn asset_ix(&self, id: &AssetId) -> Result<usize, ModelError> {
        self.asset_index
            .get(id)
            .copied()
            .ok_or_else(|| ModelError::UnknownAsset(id.clone()))
    }

    pub(crate) fn candidate_ix(&self, id: &CandidateId) -> Result<usize, ModelError> {
        self.candidate_index
            .get(id)
            .copied()
            .ok_or_else(|| ModelError::UnknownCandidate(id.clone()))
    }

    fn asset_state(&self, id: &AssetId) -> Result<&AssetState, ModelError> {
        Ok(&self.assets[self.asset_ix(id)?])
    }

    pub(crate) fn asset_at(&self, ix: usize) -> &AssetState {
        &self.assets[ix]
    }

    pub(crate) fn candidate_at(&self, ix: usize) -> &CandidateState {
        &self.candidates[ix]
    }

    pub(crate) fn candidate_len(&self) -> usize {
        self.candidates.len()
    }

    /// Owner index in effect just before `as_of` (attribution with timestamp < as_of).
    pub(crate) fn owner_ix_before(&self, asset_ix: usize, as_of: Timestamp) -> Option<usize> {
        owner_in(&self.assets[asset_ix].attribution, as_of - 1)
            .map(|id| self.candidate_index[id])
    }

    /// Neighbor indices (may contain duplicates); `recorded_before` filters edges by time.
    pub(crate) fn neighbor_ixs(
        &self,
        ix: usize,
        kinds: Option<&[EdgeKind]>,
        direction: Direction,
        recorded_before: Option<Timestamp>,
    ) -> Vec<usize> {
        let state = &self.assets[ix];
        let keep = |e: &DependencyEdge| {
            kinds.is_none_or(|k| k.contains(&e.edge_kind))
                && recorded_before.is_none_or(|t| e.recorded_at < t)
        };
        let mut out = Vec::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            for &e in &state.out_edges {
                let edge = &self.edges[e];
                if keep(edge) {
                    out.push(self.asset_index[&edge.to_asset_id]);
                }
            }
        }
        if matches!(direction, Direction::In | Direction::Both) {
            for &e in &state.in_edges {
                let edge = &self.edges[e];
                if keep(edge) {
                    out.push(self.asset_index[&edge.from_asset_id]);
                }
            }
        }
        out
    }

    pub(crate) fn org_distance_ix(&self, a: usize, b: usize) -> u32 {
        self.org.distance_ix(a, b)
    }

    // ---- validation ----------------------------------------------------

    /// Validates a transfer of `asset` to `owner` effective at `at`.
    pub fn check_transfer(
        &self,
        asset: &AssetId,
        owner: &CandidateId,
        at: Timestamp,
    ) -> Result<(), ModelError> {
        let state = self.asset_state(asset)?;
        let cix = self.candidate_ix(owner)?;
        if state.asset.deleted_at.is_some_and(|d| d <= at) {
            return Err(ModelError::AssetDeleted(asset.clone()));
        }
        if !self.candidates[cix].state_at(at).1 {
            return Err(ModelError::InactiveCandidate(owner.clone()));
        }
        if let Some(last) = state.attribution.last() {
            match last.valid_to {
                None => {
                    if at < last.valid_from {
                        return Err(ModelError::NonMonotonicTimestamp {
                            asset: asset.clone(),
                            at,
                            open_since: last.valid_from,
                        });
                    }
                    if &last.owner_id == owner {
                        return Err(ModelError::RedundantTransfer {
                            asset: asset.clone(),
                            owner: owner.clone(),
                        });
                    }
                }
                Some(end) => {
                    if at < end {
                        return Err(ModelError::NonMonotonicTimestamp {
                            asset: asset.clone(),
                            at,
                            open_since: end,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Validates an imported (possibly historical) attribution interval.
    pub fn check_import(&self, record: &AttributionRecord) -> Result<(), ModelError> {
        let state = self.asset_state(&record.asset_id)?;
        self.candidate_ix(&record.owner_id)?;
        if record.valid_to.is_some_and(|to| to <= record.valid_from) {
            return Err(ModelError::Invalid(format!(
                "empty interval for `{}`",
                record.asset_id
            )));
        }
        if state.attribution.iter().any(|r| r.overlaps(record)) {
            return Err(ModelError::OverlappingAttribution(record.asset_id.clone()));
        }
        Ok(())
    }

    fn check_individual(&self, id: &CandidateId) -> Result<(), ModelError> {
        let c = self
            .candidate(id)
            .ok_or_else(|| ModelError::UnknownCandidate(id.clone()))?;
        if c.candidate_type != CandidateType::Individual {
            return Err(ModelError::NotAnIndividual(id.clone()));
        }
        Ok(())
    }

    /// What an Accept decision does to the attribution mapping: `None` when
    /// the candidate already owns the asset at `at`.
    pub fn accept_transfer(
        &self,
        asset: &AssetId,
        candidate: &CandidateId,
        at: Timestamp,
    ) -> Result<Option<AttributionRecord>, ModelError> {
        match self.check_transfer(asset, candidate, at) {
            Ok(()) => Ok(Some(AttributionRecord {
                asset_id: asset.clone(),
                owner_id: candidate.clone(),
                valid_from: at,
                valid_to: None,
                source: AttributionSource::HumanDecision,
            })),
            Err(ModelError::RedundantTransfer { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn check_decision(
        &self,
        decision: &DecisionRecord,
        transfer: &Option<AttributionRecord>,
    ) -> Result<(), ModelError> {
        self.asset_ix(&decision.asset_id)?;
        self.candidate_ix(&decision.candidate_id)?;
        self.check_individual(&decision.decided_by)?;
        if let Some(rec_id) = &decision.recommendation_id {
            let rec = self
                .recommendation(rec_id)
                .ok_or_else(|| ModelError::UnknownRecommendation(rec_id.clone()))?;
            if let Some(prev) = &rec.decided {
                return Err(ModelError::StaleRecommendation {
                    recommendation: rec_id.clone(),
                    decided_by: prev.decided_by.clone(),
                });
            }
            if rec.recommendation.asset_id != decision.asset_id
                || !rec
                    .recommendation
                    .entries
                    .iter()
                    .any(|e| e.candidate_id == decision.candidate_id)
            {
                return Err(ModelError::CandidateNotInRecommendation {
                    recommendation: rec_id.clone(),
                    candidate: decision.candidate_id.clone(),
                });
            }
        }
        match decision.decision {
            DecisionKind::Accept => {
                let expected =
                    self.accept_transfer(&decision.asset_id, &decision.candidate_id, decision.at)?;
                if &expected != transfer {
                    return Err(ModelError::Invalid(
                        "decision transfer does not match attribution state".into(),
                    ));
                }
            }
            DecisionKind::Reject => {
                if transfer.is_some() {
                    return Err(ModelError::Invalid("reject cannot transfer".into()));
                }
            }
            DecisionKind::Delegate => {
                let to = decision
                    .delegate_to
                    .as_ref()
                    .ok_or_else(|| ModelError::Invalid("delegate without target".into()))?;
                self.candidate_ix(to)?;
                if transfer.is_some() {
                    return Err(ModelError::Invalid("delegate cannot transfer".into()));
                }
            }
        }
        Ok(())
    }

    fn check_candidate(
        &self,
        reg: &CandidateRegistration,
        extra_nodes: &[OrgNode],
    ) -> Result<(), ModelError> {
        let c = &reg.candidate;
        if self.candidate_index.contains_key(&c.candidate_id) {
            return Err(ModelError::DuplicateCandidate(c.candidate_id.clone()));
        }
        let kind = match self.org.get(&c.org_node_id) {
            Some(n) => n.kind,
            None => {
                extra_nodes
                    .iter()
                    .find(|n| n.node_id == c.org_node_id)
                    .ok_or_else(|| ModelError::UnknownOrgNode(c.org_node_id.clone()))?
                    .kind
            }
        };
        if c.candidate_type == CandidateType::Individual && kind != super::OrgKind::Team {
            return Err(ModelError::InvalidOrgTree(format!(
                "individual `{}` must sit on a team node",
                c.candidate_id
            )));
        }
        Ok(())
    }

    fn check_asset(&self, asset: &Asset) -> Result<(), ModelError> {
        if self.asset_index.contains_key(&asset.asset_id) {
            return Err(ModelError::DuplicateAsset(asset.asset_id.clone()));
        }
        if asset.deleted_at.is_some_and(|d| d < asset.created_at) {
            return Err(ModelError::Invalid(format!(
                "`{}` deleted before creation",
                asset.asset_id
            )));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &InteractionBatch) -> Result<(), ModelError> {
        let mut org = self.org.clone();
        for n in &batch.org_nodes {
            org.insert(n.clone())?;
        }
        let mut new_cands: HashMap<&CandidateId, CandidateType> = HashMap::new();
        for reg in &batch.candidates {
            self.check_candidate(reg, &batch.org_nodes)?;
            if new_cands
                .insert(&reg.candidate.candidate_id, reg.candidate.candidate_type)
                .is_some()
            {
                return Err(ModelError::DuplicateCandidate(
                    reg.candidate.candidate_id.clone(),
                ));
            }
        }
        let mut new_assets = HashSet::new();
        for a in &batch.assets {
            self.check_asset(a)?;
            if !new_assets.insert(&a.asset_id) {
                return Err(ModelError::DuplicateAsset(a.asset_id.clone()));
            }
        }
        let mut ids = HashSet::new();
        for ev in &batch.interactions {
            let kind = match self.candidate(&ev.actor_id) {
                Some(c) => c.candidate_type,
                None => *new_cands
                    .get(&ev.actor_id)
                    .ok_or_else(|| ModelError::UnknownCandidate(ev.actor_id.clone()))?,
            };
            if kind != CandidateType::Individual {
                return Err(ModelError::NotAnIndividual(ev.actor_id.clone()));
            }
            if !self.asset_index.contains_key(&ev.asset_id) && !new_assets.contains(&ev.asset_id)
            {
                return Err(ModelError::UnknownAsset(ev.asset_id.clone()));
            }
            if self.touch_ids.contains(ev.event_id.as_str()) || !ids.insert(ev.event_id.as_str())
            {
                return Err(ModelError::Invalid(format!(
                    "duplicate interaction `{}`",
                    ev.event_id
                )));
            }
        }
        Ok(())
    }

    // ---- fold ----------------------------------------------------------

    /// Folds one event into the state. Validation happens before any
    /// mutation, so a rejected event leaves the store untouched.
    pub fn apply(&mut self, seq: u64, event: &Event) -> Result<(), ModelError> {
        match event {
            Event::OrgNodeRegistered(node) => {
                self.org.insert(node.clone())?;
            }
            Event::AssetRegistered(asset) => {
                self.check_asset(asset)?;
                for a in &asset.annotations {
                    if a.asset_id != asset.asset_id {
                        return Err(ModelError::Invalid("annotation for another asset".into()));
                    }
                }
                self.insert_asset(seq, asset.clone());
            }
            Event::AssetDeleted { asset_id, at } => {
                let ix = self.asset_ix(asset_id)?;
                let a = &self.assets[ix].asset;
                if a.deleted_at.is_some() || *at < a.created_at {
                    return Err(ModelError::Invalid(format!(
                        "cannot delete `{asset_id}` at {at}"
                    )));
                }
                self.assets[ix].asset.deleted_at = Some(*at);
            }
            Event::CandidateRegistered(reg) => {
                self.check_candidate(reg, &[])?;
                self.insert_candidate(seq, reg);
            }
            Event::CandidateUpdated {
                candidate_id,
                at,
                org_node_id,
                active,
            } => {
                let cix = self.candidate_ix(candidate_id)?;
                let org = self
                    .org
                    .index_of(org_node_id)
                    .ok_or_else(|| ModelError::UnknownOrgNode(org_node_id.clone()))?;
                let state = &self.candidates[cix];
                if state.candidate.candidate_type == CandidateType::Individual
                    && !self.org.is_leaf_ix(org)
                {
                    return Err(ModelError::InvalidOrgTree(format!(
                        "individual `{candidate_id}` must sit on a team node"
                    )));
                }
                if state.history.last().is_some_and(|&(from, _, _)| *at < from) {
                    return Err(ModelError::Invalid(format!(
                        "update of `{candidate_id}` precedes its latest state"
                    )));
                }
                let state = &mut self.candidates[cix];
                state.history.push((*at, org, *active));
                state.candidate.org_node_id = org_node_id.clone();
                state.candidate.active = *active;
            }
            Event::DependencyRecorded(edge) => {
                let from = self.asset_ix(&edge.from_asset_id)?;
                let to = self.asset_ix(&edge.to_asset_id)?;
                if from == to {
                    return Err(ModelError::Invalid(format!(
                        "self-loop on `{}`",
                        edge.from_asset_id
                    )));
                }
                if self.edge_set.insert((from, to, edge.edge_kind)) {
                    let e = self.edges.len();
                    self.edges.push(edge.clone());
                    self.assets[from].out_edges.push(e);
                    self.assets[to].in_edges.push(e);
                }
            }
            Event::InteractionIngested(batch) => {
                self.check_batch(batch)?;
                for n in &batch.org_nodes {
                    self.org.insert(n.clone())?;
                }
                for reg in &batch.candidates {
                    self.insert_candidate(seq, reg);
                }
                for a in &batch.assets {
                    self.insert_asset(seq, a.clone());
                }
                for ev in &batch.interactions {
                    self.insert_touch(ev);
                }
            }
            Event::AnnotationRecorded {
                asset_id,
                annotations,
            } => {
                let ix = self.asset_ix(asset_id)?;
                for a in annotations {
                    if &a.asset_id != asset_id {
                        return Err(ModelError::Invalid("annotation for another asset".into()));
                    }
                    self.candidate_ix(&a.named_candidate)?;
                }
                self.assets[ix]
                    .asset
                    .annotations
                    .extend(annotations.iter().cloned());
            }
            Event::OwnerChanged(change) => {
                if change.record.source == AttributionSource::HumanDecision {
                    let by = change.changed_by.as_ref().ok_or_else(|| {
                        ModelError::Invalid("human transfer without a decider".into())
                    })?;
                    self.check_individual(by)?;
                }
                self.apply_owner_change(change, None)?
            }
            Event::AttributionImported { records } => {
                for (i, r) in records.iter().enumerate() {
                    if r.source != AttributionSource::Import {
                        return Err(ModelError::Invalid("imported record with a non-import source".into()));
                    }
                    self.check_import(r)?;
                    if records[..i].iter().any(|q| q.asset_id == r.asset_id && q.overlaps(r)) {
                        return Err(ModelError::OverlappingAttribution(r.asset_id.clone()));
                    }
                }
                for r in records {
                    let change = OwnerChangeRecord {
                        record: r.clone(),
                        changed_by: None,
                    };
                    self.apply_owner_change(&change, None)?;
                }
            }
            Event::RecommendationIssued(rec) => {
                self.asset_ix(&rec.asset_id)?;
                if self.recommendation_index.contains_key(&rec.recommendation_id) {
                    return Err(ModelError::Invalid(format!(
                        "duplicate recommendation `{}`",
                        rec.recommendation_id
                    )));
                }
                self.recommendation_index
                    .insert(rec.recommendation_id.clone(), self.recommendations.len());
                self.recommendations.push(RecommendationState {
                    recommendation: (**rec).clone(),
                    seq,
                    decided: None,
                    queue: None,
                });
            }
            Event::DecisionRecorded { decision, transfer } => {
                self.check_decision(decision, transfer)?;
                if let Some(record) = transfer {
                    let change = OwnerChangeRecord {
                        record: record.clone(),
                        changed_by: Some(decision.decided_by.clone()),
                    };
                    self.apply_owner_change(&change, Some(&decision.decision_id))?;
                }
                if let Some(rec_id) = &decision.recommendation_id {
                    let ix = self.recommendation_index[rec_id];
                    let rec = &mut self.recommendations[ix];
                    match decision.decision {
                        DecisionKind::Delegate => rec.queue = decision.delegate_to.clone(),
                        _ => rec.decided = Some(decision.clone()),
                    }
                }
                self.decisions.push(decision.clone());
            }
            Event::ModelTrained(record) => {
                self.models.push((**record).clone());
            }
        }
        if let Some(t) = event.effective_time() {
            self.clock = Some(self.clock.map_or(t, |c| c.max(t)));
        }
        self.last_seq = Some(seq);
        Ok(())
    }

    fn apply_owner_change(
        &mut self,
        change: &OwnerChangeRecord,
        decision_id: Option<&String>,
    ) -> Result<(), ModelError> {
        let record = &change.record;
        let ix = self.asset_ix(&record.asset_id)?;
        if record.source == AttributionSource::Import {
            self.check_import(record)?;
            let list = &mut self.assets[ix].attribution;
            let pos = list.partition_point(|r| r.valid_from < record.valid_from);
            list.insert(pos, record.clone());
        } else {
            if record.valid_to.is_some() {
                return Err(ModelError::Invalid("transfer must open an interval".into()));
            }
            self.check_transfer(&record.asset_id, &record.owner_id, record.valid_from)?;
            let list = &mut self.assets[ix].attribution;
            if let Some(last) = list.last_mut() {
                if last.valid_to.is_none() {
                    last.valid_to = Some(record.valid_from);
                }
            }
            list.push(record.clone());
        }
        self.owner_changes.push(OwnerChange {
            asset_id: record.asset_id.clone(),
            owner_id: record.owner_id.clone(),
            at: record.valid_from,
            source: record.source,
            changed_by: change.changed_by.clone(),
            decision_id: decision_id.cloned(),
        });
        Ok(())
    }

    fn insert_asset(&mut self, seq: u64, asset: Asset) {
        let ix = self.assets.len();
        self.asset_index.insert(asset.asset_id.clone(), ix);
        self.path_index.entry(asset.path_or_name.clone()).or_insert(ix);
        self.assets.push(AssetState {
            asset,
            seq,
            attribution: Vec::new(),
            actors: HashMap::new(),
            modify_times: Vec::new(),
            out_edges: Vec::new(),
            in_edges: Vec::new(),
        });
    }

    fn insert_candidate(&mut self, seq: u64, reg: &CandidateRegistration) {
        let org = self
            .org
            .index_of(&reg.candidate.org_node_id)
            .expect("validated org node");
        let ix = self.candidates.len();
        self.candidate_index
            .insert(reg.candidate.candidate_id.clone(), ix);
        self.candidates.push(CandidateState {
            candidate: reg.candidate.clone(),
            seq,
            history: vec![(reg.at, org, reg.candidate.active)],
            touched: Vec::new(),
            touched_set: HashSet::new(),
        });
    }

    fn insert_touch(&mut self, ev: &InteractionEvent) {
        let aix = self.asset_index[&ev.asset_id];
        let cix = self.candidate_index[&ev.actor_id];
        let state = &mut self.assets[aix];
        let touches = state.actors.entry(cix).or_default();
        insert_sorted(&mut touches.all, ev.at);
        match ev.action {
            Action::Modify => {
                insert_sorted(&mut touches.modify, ev.at);
                insert_sorted(&mut state.modify_times, ev.at);
            }
            Action::AdminAction => insert_sorted(&mut touches.admin, ev.at),
            Action::Review | Action::Comment => {}
        }
        let cand = &mut self.candidates[cix];
        if cand.touched_set.insert(aix) {
            cand.touched.push(aix);
        }
        let id: Box<str> = ev.event_id.as_str().into();
        self.touch_ids.insert(id.clone());
        self.touches.push(Touch {
            event_id: id,
            asset: aix as u32,
            actor: cix as u32,
            action: ev.action,
            at: ev.at,
        });
    }

    /// SHA-256 over a canonical dump of the materialized state. Two stores
    /// with equal fingerprints answer every query identically.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "clock {:?} seq {:?}", self.clock, self.last_seq);
        for n in self.org.nodes() {
            let _ = writeln!(out, "node {n:?}");
        }
        for s in &self.assets {
            let _ = writeln!(out, "asset {:?} {} {:?}", s.asset, s.seq, s.attribution);
            let mut actors: Vec<_> = s.actors.iter().collect();
            actors.sort_by_key(|(k, _)| **k);
            for (k, t) in actors {
                let _ = writeln!(out, " actor {k} {:?} {:?} {:?}", t.all, t.modify, t.admin);
            }
            let _ = writeln!(out, " edges {:?} {:?}", s.out_edges, s.in_edges);
        }
        for c in &self.candidates {
            let _ = writeln!(out, "cand {:?} {} {:?} {:?}", c.candidate, c.seq, c.history, c.touched);
        }
        for e in &self.edges {
            let _ = writeln!(out, "edge {e:?}");
        }
        for t in &self.touches {
            let _ = writeln!(out, "touch {} {} {} {:?} {}", t.event_id, t.asset, t.actor, t.action, t.at);
        }
        for r in &self.recommendations {
            let _ = writeln!(out, "rec {r:?}");
        }
        for d in &self.decisions {
            let _ = writeln!(out, "decision {d:?}");
        }
        for c in &self.owner_changes {
            let _ = writeln!(out, "change {c:?}");
        }
        for m in &self.models {
            let _ = writeln!(out, "model {m:?}");
        }
        hex::encode(Sha256::digest(out.as_bytes()))
    }

    /// Checks the structural invariants of the attribution mapping, org tree,
    /// dependency graph and candidate registry. Returns the first violation.
    pub fn verify_invariants(&self) -> Result<(), String> {
        if !self.org.is_empty() {
            if self.org.root().is_none() {
                return Err("org tree has no root".into());
            }
            if self.org.parent_links() != self.org.len() - 1 {
                return Err("org tree parent links != nodes - 1".into());
            }
        }
        for s in &self.assets {
            let recs = &s.attribution;
            let open = recs.iter().filter(|r| r.valid_to.is_none()).count();
            if open > 1 {
                return Err(format!("`{}` has {open} open intervals", s.asset.asset_id));
            }
            for (i, a) in recs.iter().enumerate() {
                for b in &recs[i + 1..] {
                    if a.overlaps(b) {
                        return Err(format!("`{}` has overlapping intervals", s.asset.asset_id));
                    }
                }
            }
            if s.asset.deleted_at.is_some_and(|d| d < s.asset.created_at) {
                return Err(format!("`{}` deleted before creation", s.asset.asset_id));
            }
        }
        for e in &self.edges {
            if e.from_asset_id == e.to_asset_id {
                return Err("self-loop".into());
            }
            if !self.asset_index.contains_key(&e.from_asset_id)
                || !self.asset_index.contains_key(&e.to_asset_id)
            {
                return Err("dangling edge".into());
            }
        }
        for c in &self.candidates {
            if c.candidate.candidate_type == CandidateType::Individual {
                for &(_, org, _) in &c.history {
                    if !self.org.is_leaf_ix(org) {
                        return Err(format!(
                            "individual `{}` on a non-leaf node",
                            c.candidate.candidate_id
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn owner_in(records: &[AttributionRecord], at: Timestamp) -> Option<&CandidateId> {
    // Records are sorted and disjoint: the only candidate is the last one starting at or before `at`.
    let pos = records.partition_point(|r| r.valid_from <= at);
    if pos == 0 {
        return None;
    }
    let r = &records[pos - 1];
    r.contains(at).then_some(&r.owner_id)
}

/// Annotation recorded against `asset` naming `candidate`.
pub(crate) fn annotation_names(
    annotations: &[OwnershipAnnotation],
    candidate: &CandidateId,
    before: Timestamp,
) -> bool {
    annotations
        .iter()
        .any(|a| &a.named_candidate == candidate && a.observed_at < before)
}
