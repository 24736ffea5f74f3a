//! The single writer: validates each mutation against the store, appends it
//! to the journal and folds it in. Every public mutation is one event.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ingest::{extract_annotations, infer_asset_type, parse_log_str, LogFormat, ParseDiagnostic};
use crate::labeling::{extract_labeling_events, Dataset};
use crate::learn::{train_from_events, ModelRecord, TrainConfig};
use crate::model::{
    Asset, AssetId, AttributionRecord, AttributionSource, CandidateId, CandidateType,
    DecisionKind, DecisionRecord, DependencyEdge, InteractionEvent, ModelError, OrgKind, OrgNode,
    OrgNodeId, OwnerCandidate, OwnershipAnnotation, Store,
};
use crate::persist::{
    CandidateRegistration, Event, FileJournal, InteractionBatch, Journal, MemoryJournal,
    OwnerChangeRecord, PersistError,
};
use crate::recommend::{recommend_owner, BandThresholds, Recommendation};
use crate::time::{Timestamp, DAY};

pub const QUARANTINE_NODE: &str = "quarantine";
pub const DEFAULT_ROOT_NODE: &str = "company";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionInput {
    Accept,
    Reject,
    Delegate(CandidateId),
}

impl DecisionInput {
    pub fn kind(&self) -> DecisionKind {
        match self {
            DecisionInput::Accept => DecisionKind::Accept,
            DecisionInput::Reject => DecisionKind::Reject,
            DecisionInput::Delegate(_) => DecisionKind::Delegate,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub duplicates: usize,
    pub new_assets: Vec<AssetId>,
    /// Actors first seen in this batch, registered inactive for review.
    pub quarantined_actors: Vec<CandidateId>,
    pub diagnostics: Vec<ParseDiagnostic>,
    /// Sequence number of the appended event, if anything changed.
    pub sequence: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub accepted: usize,
    pub quarantined: Vec<ParseDiagnostic>,
    pub sequence: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportRejection {
    pub index: usize,
    pub record: AttributionRecord,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportReport {
    pub accepted: usize,
    pub rejected: Vec<ImportRejection>,
    pub sequence: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub decision: DecisionRecord,
    pub transfer: Option<AttributionRecord>,
    pub sequence: u64,
}

pub struct Engine<J: Journal> {
    store: Store,
    journal: J,
    poisoned: bool,
    pub thresholds: BandThresholds,
}

impl Engine<MemoryJournal> {
    pub fn in_memory() -> Self {
        Engine::new(Store::new(), MemoryJournal::new())
    }
}

impl Engine<FileJournal> {
    /// Opens (or creates) a store file and takes its writer lock.
    pub fn open(path: &Path) -> Result<Self, Error> {
        let (journal, store) = FileJournal::open(path)?;
        Ok(Engine::new(store, journal))
    }
}

impl<J: Journal> Engine<J> {
    /// `store` must be the replay of everything in `journal`.
    pub fn new(store: Store, journal: J) -> Self {
        Self {
            store,
            journal,
            poisoned: false,
            thresholds: BandThresholds::default(),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn journal(&self) -> &J {
        &self.journal
    }

    pub fn into_parts(self) -> (Store, J) {
        (self.store, self.journal)
    }

    /// One past the latest logical time in the store (0 when empty).
    pub fn next_time(&self) -> Timestamp {
        self.store.clock().map_or(0, |c| c + 1)
    }

    /// Validates, appends and folds one event.
    pub fn commit(&mut self, event: Event) -> Result<u64, Error> {
        if self.poisoned {
            return Err(PersistError::Poisoned.into());
        }
        let seq = self.journal.next_sequence();
        self.store.apply(seq, &event)?;
        // The store already holds the event; a failed append leaves memory
        // ahead of disk, so refuse further writes.
        match self.journal.append(&event) {
            Ok(written) => {
                debug_assert_eq!(written, seq);
                Ok(seq)
            }
            Err(e) => {
                self.poisoned = true;
                Err(e.into())
            }
        }
    }

    pub fn register_org_node(&mut self, node: OrgNode) -> Result<u64, Error> {
        self.commit(Event::OrgNodeRegistered(node))
    }

    pub fn register_asset(&mut self, asset: Asset) -> Result<u64, Error> {
        self.commit(Event::AssetRegistered(asset))
    }

    pub fn delete_asset(&mut self, asset_id: &AssetId, at: Timestamp) -> Result<u64, Error> {
        self.commit(Event::AssetDeleted {
            asset_id: asset_id.clone(),
            at,
        })
    }

    pub fn register_candidate(&mut self, candidate: OwnerCandidate, at: Timestamp) -> Result<u64, Error> {
        self.commit(Event::CandidateRegistered(CandidateRegistration { candidate, at }))
    }

    pub fn update_candidate(
        &mut self,
        candidate_id: &CandidateId,
        at: Timestamp,
        org_node_id: &OrgNodeId,
        active: bool,
    ) -> Result<u64, Error> {
        self.commit(Event::CandidateUpdated {
            candidate_id: candidate_id.clone(),
            at,
            org_node_id: org_node_id.clone(),
            active,
        })
    }

    pub fn record_dependency(&mut self, edge: DependencyEdge) -> Result<u64, Error> {
        self.commit(Event::DependencyRecorded(edge))
    }

    /// Closes the open interval at `at` and opens one for `new_owner`.
    /// Human transfers must name who made them.
    pub fn transfer_owner(
        &mut self,
        asset_id: &AssetId,
        new_owner: &CandidateId,
        at: Timestamp,
        source: AttributionSource,
        changed_by: Option<CandidateId>,
    ) -> Result<AttributionRecord, Error> {
        if source == AttributionSource::Import {
            return Err(ModelError::Invalid("use import_attribution for imported intervals".into()).into());
        }
        let record = AttributionRecord {
            asset_id: asset_id.clone(),
            owner_id: new_owner.clone(),
            valid_from: at,
            valid_to: None,
            source,
        };
        self.commit(Event::OwnerChanged(OwnerChangeRecord {
            record: record.clone(),
            changed_by,
        }))?;
        Ok(record)
    }

    /// Merges historical intervals in (valid_from, owner_id) order; each
    /// record is accepted or rejected on its own.
    pub fn import_attribution(&mut self, records: &[AttributionRecord]) -> Result<ImportReport, Error> {
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&records[a], &records[b]);
            ra.valid_from
                .cmp(&rb.valid_from)
                .then_with(|| ra.owner_id.cmp(&rb.owner_id))
                .then(a.cmp(&b))
        });
        let mut report = ImportReport::default();
        let mut keep: Vec<AttributionRecord> = Vec::new();
        for i in order {
            let record = AttributionRecord {
                source: AttributionSource::Import,
                ..records[i].clone()
            };
            let check = self.store.check_import(&record).and_then(|()| {
                match keep.iter().any(|q| q.asset_id == record.asset_id && q.overlaps(&record)) {
                    true => Err(ModelError::OverlappingAttribution(record.asset_id.clone())),
                    false => Ok(()),
                }
            });
            match check {
                Ok(()) => keep.push(record),
                Err(e) => report.rejected.push(ImportRejection {
                    index: i,
                    record,
                    reason: e.to_string(),
                }),
            }
        }
        if !keep.is_empty() {
            report.accepted = keep.len();
            report.sequence = Some(self.commit(Event::AttributionImported { records: keep })?);
        }
        Ok(report)
    }

    /// Ingests parsed interactions as one event. Paths resolve to registered
    /// assets (by path, then id) or register new assets; unknown actors are
    /// registered as inactive individuals on the quarantine team. Events
    /// already in the store are counted as duplicates and skipped.
    pub fn ingest_interactions(
        &mut self,
        source: &str,
        format: LogFormat,
        events: Vec<InteractionEvent>,
    ) -> Result<IngestReport, Error> {
        let mut report = IngestReport::default();
        let mut batch = InteractionBatch {
            source: source.to_string(),
            ..Default::default()
        };
        let mut new_assets: HashMap<String, usize> = HashMap::new();
        let mut new_actors: HashMap<CandidateId, usize> = HashMap::new();
        let mut seen: HashSet<String> = HashSet::new();
        for mut ev in events {
            if self.store.has_interaction(&ev.event_id) || !seen.insert(ev.event_id.clone()) {
                report.duplicates += 1;
                continue;
            }
            match self.store.candidate(&ev.actor_id) {
                Some(c) if c.candidate_type != CandidateType::Individual => {
                    report.diagnostics.push(ParseDiagnostic {
                        source: source.to_string(),
                        line: 0,
                        reason: format!("actor `{}` is not an individual", ev.actor_id),
                    });
                    continue;
                }
                Some(_) => {}
                None => match new_actors.get(&ev.actor_id) {
                    Some(&i) => {
                        let reg = &mut batch.candidates[i];
                        reg.at = reg.at.min(ev.at);
                    }
                    None => {
                        new_actors.insert(ev.actor_id.clone(), batch.candidates.len());
                        batch.candidates.push(CandidateRegistration {
                            candidate: OwnerCandidate {
                                candidate_id: ev.actor_id.clone(),
                                candidate_type: CandidateType::Individual,
                                display_name: ev.actor_id.to_string(),
                                org_node_id: OrgNodeId::new(QUARANTINE_NODE),
                                active: false,
                            },
                            at: ev.at,
                        });
                    }
                },
            }
            let path = ev.asset_id.to_string();
            if let Some(a) = self.store.find_asset_by_path(&path) {
                ev.asset_id = a.asset_id.clone();
            } else {
                match new_assets.get(&path) {
                    Some(&i) => {
                        let a = &mut batch.assets[i];
                        a.created_at = a.created_at.min(ev.at);
                    }
                    None => {
                        new_assets.insert(path.clone(), batch.assets.len());
                        batch.assets.push(Asset::new(
                            path.as_str(),
                            infer_asset_type(&path, format),
                            path.as_str(),
                            ev.at,
                        ));
                    }
                }
            }
            batch.interactions.push(ev);
        }
        if batch.interactions.is_empty() {
            return Ok(report);
        }
        if !batch.candidates.is_empty()
            && self.store.org().get(&OrgNodeId::new(QUARANTINE_NODE)).is_none()
        {
            let root = match self.store.org().root() {
                Some(r) => r.node_id.clone(),
                None => {
                    let root = OrgNodeId::new(DEFAULT_ROOT_NODE);
                    batch.org_nodes.push(OrgNode {
                        node_id: root.clone(),
                        parent_id: None,
                        kind: OrgKind::Company,
                    });
                    root
                }
            };
            batch.org_nodes.push(OrgNode {
                node_id: OrgNodeId::new(QUARANTINE_NODE),
                parent_id: Some(root),
                kind: OrgKind::Team,
            });
        }
        report.accepted = batch.interactions.len();
        report.new_assets = batch.assets.iter().map(|a| a.asset_id.clone()).collect();
        report.quarantined_actors = batch
            .candidates
            .iter()
            .map(|c| c.candidate.candidate_id.clone())
            .collect();
        report.sequence = Some(self.commit(Event::InteractionIngested(batch))?);
        Ok(report)
    }

    /// Parses log text and ingests it as one event; parse diagnostics are
    /// returned alongside.
    pub fn ingest_log(&mut self, source: &str, format: LogFormat, content: &str) -> Result<IngestReport, Error> {
        let parsed = parse_log_str(source, format, content);
        let mut report = self.ingest_interactions(source, format, parsed.events)?;
        let mut diagnostics = parsed.diagnostics;
        diagnostics.append(&mut report.diagnostics);
        report.diagnostics = diagnostics;
        Ok(report)
    }

    /// Records annotations naming registered candidates; others are
    /// quarantined. Annotations already on the asset are not repeated.
    pub fn record_annotations(
        &mut self,
        asset_id: &AssetId,
        annotations: Vec<OwnershipAnnotation>,
    ) -> Result<AnnotationReport, Error> {
        let asset = self
            .store
            .asset(asset_id)
            .ok_or_else(|| ModelError::UnknownAsset(asset_id.clone()))?;
        let mut report = AnnotationReport::default();
        let mut keep = Vec::new();
        for a in annotations {
            if self.store.candidate(&a.named_candidate).is_none() {
                report.quarantined.push(ParseDiagnostic {
                    source: asset_id.to_string(),
                    line: 0,
                    reason: format!(
                        "{}: unknown candidate `{}`",
                        a.source_location, a.named_candidate
                    ),
                });
                continue;
            }
            let dup = asset.annotations.iter().chain(keep.iter()).any(|b: &OwnershipAnnotation| {
                b.named_candidate == a.named_candidate && b.annotation_kind == a.annotation_kind
            });
            if !dup {
                keep.push(a);
            }
        }
        if keep.is_empty() {
            return Ok(report);
        }
        report.accepted = keep.len();
        report.sequence = Some(self.commit(Event::AnnotationRecorded {
            asset_id: asset_id.clone(),
            annotations: keep,
        })?);
        Ok(report)
    }

    /// Scans an asset's text for directives and records them.
    pub fn scan_annotations(
        &mut self,
        asset_id: &AssetId,
        payload: &str,
        observed_at: Timestamp,
    ) -> Result<AnnotationReport, Error> {
        let scan = extract_annotations(asset_id, payload, observed_at);
        let mut report = self.record_annotations(asset_id, scan.annotations)?;
        let mut quarantined = scan.quarantined;
        quarantined.append(&mut report.quarantined);
        report.quarantined = quarantined;
        Ok(report)
    }

    /// Builds a recommendation with the current model for the asset's type
    /// and records it.
    pub fn issue_recommendation(&mut self, asset_id: &AssetId, as_of: Timestamp) -> Result<Recommendation, Error> {
        let rec = self.preview_recommendation(asset_id, as_of)?;
        self.commit(Event::RecommendationIssued(Box::new(rec.clone())))?;
        Ok(rec)
    }

    /// Same as [`Self::issue_recommendation`] without recording anything.
    pub fn preview_recommendation(&self, asset_id: &AssetId, as_of: Timestamp) -> Result<Recommendation, Error> {
        let asset = self
            .store
            .asset(asset_id)
            .ok_or_else(|| ModelError::UnknownAsset(asset_id.clone()))?;
        let model = self
            .store
            .current_model(asset.asset_type)
            .ok_or(Error::NoModelForAssetType(asset.asset_type))?;
        recommend_owner(&self.store, asset_id, as_of, model, &self.thresholds)
    }

    /// A decider must be an Individual active at `at`.
    pub fn check_decider(&self, actor: &CandidateId, at: Timestamp) -> Result<(), Error> {
        let c = self
            .store
            .candidate(actor)
            .ok_or_else(|| ModelError::UnknownCandidate(actor.clone()))?;
        if c.candidate_type != CandidateType::Individual {
            return Err(ModelError::NotAnIndividual(actor.clone()).into());
        }
        match self.store.candidate_state_at(actor, at) {
            Some((_, true)) => Ok(()),
            _ => Err(ModelError::InactiveCandidate(actor.clone()).into()),
        }
    }

    /// Delegation targets are Individuals or on-call rotations active at `at`.
    pub fn check_delegate_target(&self, target: &CandidateId, at: Timestamp) -> Result<(), Error> {
        let c = self
            .store
            .candidate(target)
            .ok_or_else(|| ModelError::UnknownCandidate(target.clone()))?;
        if !matches!(c.candidate_type, CandidateType::Individual | CandidateType::OncallRotation) {
            return Err(ModelError::Invalid(format!(
                "cannot delegate to {} `{target}`",
                c.candidate_type
            ))
            .into());
        }
        match self.store.candidate_state_at(target, at) {
            Some((_, true)) => Ok(()),
            _ => Err(ModelError::InactiveCandidate(target.clone()).into()),
        }
    }

    /// Records a decision on a recommendation. Accept transfers ownership
    /// (unless the candidate already owns the asset); Reject only labels;
    /// Delegate moves the item to another queue and leaves it pending.
    pub fn apply_decision(
        &mut self,
        recommendation_id: &str,
        candidate_id: &CandidateId,
        decision: DecisionInput,
        decided_by: &CandidateId,
        at: Timestamp,
    ) -> Result<DecisionOutcome, Error> {
        let rec = self
            .store
            .recommendation(recommendation_id)
            .ok_or_else(|| ModelError::UnknownRecommendation(recommendation_id.to_string()))?;
        let asset_id = rec.recommendation.asset_id.clone();
        if let Some(prev) = &rec.decided {
            return Err(ModelError::StaleRecommendation {
                recommendation: recommendation_id.to_string(),
                decided_by: prev.decided_by.clone(),
            }
            .into());
        }
        if !rec
            .recommendation
            .entries
            .iter()
            .any(|e| &e.candidate_id == candidate_id)
        {
            return Err(ModelError::CandidateNotInRecommendation {
                recommendation: recommendation_id.to_string(),
                candidate: candidate_id.clone(),
            }
            .into());
        }
        let transfer = match decision {
            DecisionInput::Accept => self.store.accept_transfer(&asset_id, candidate_id, at)?,
            _ => None,
        };
        let record = DecisionRecord {
            decision_id: self.store.next_decision_id(),
            recommendation_id: Some(recommendation_id.to_string()),
            asset_id,
            candidate_id: candidate_id.clone(),
            decision: decision.kind(),
            delegate_to: match &decision {
                DecisionInput::Delegate(to) => Some(to.clone()),
                _ => None,
            },
            decided_by: decided_by.clone(),
            at,
        };
        let sequence = self.commit(Event::DecisionRecorded {
            decision: record.clone(),
            transfer: transfer.clone(),
        })?;
        Ok(DecisionOutcome {
            decision: record,
            transfer,
            sequence,
        })
    }

    /// Records a decision made outside any recommendation (for example a
    /// reviewer working through a queue). Accept transfers as above.
    pub fn record_decision(
        &mut self,
        asset_id: &AssetId,
        candidate_id: &CandidateId,
        decision: DecisionInput,
        decided_by: &CandidateId,
        at: Timestamp,
    ) -> Result<DecisionOutcome, Error> {
        let transfer = match decision {
            DecisionInput::Accept => self.store.accept_transfer(asset_id, candidate_id, at)?,
            _ => None,
        };
        let record = DecisionRecord {
            decision_id: self.store.next_decision_id(),
            recommendation_id: None,
            asset_id: asset_id.clone(),
            candidate_id: candidate_id.clone(),
            decision: decision.kind(),
            delegate_to: match &decision {
                DecisionInput::Delegate(to) => Some(to.clone()),
                _ => None,
            },
            decided_by: decided_by.clone(),
            at,
        };
        let sequence = self.commit(Event::DecisionRecorded {
            decision: record.clone(),
            transfer: transfer.clone(),
        })?;
        Ok(DecisionOutcome {
            decision: record,
            transfer,
            sequence,
        })
    }

    /// Trains on labeling events before `now` (within `window_days` when
    /// given) and records the model as current for its asset type.
    pub fn train(
        &mut self,
        config: &TrainConfig,
        now: Timestamp,
        window_days: Option<i64>,
    ) -> Result<(ModelRecord, Dataset), Error> {
        let since = match window_days {
            Some(w) if w > 0 => now - w * DAY,
            Some(w) => {
                return Err(crate::learn::LearnError::InvalidParameter(format!(
                    "window of {w} days"
                ))
                .into())
            }
            None => Timestamp::MIN,
        };
        let events = extract_labeling_events(&self.store, since, now);
        let (model, dataset) = train_from_events(&self.store, &events, config, now)?;
        let record = ModelRecord {
            model_id: format!("model-{:06}", self.store.models().len() + 1),
            trained_at: now,
            model,
        };
        self.commit(Event::ModelTrained(Box::new(record.clone())))?;
        Ok((record, dataset))
    }
}
