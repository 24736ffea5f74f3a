//! Small hand-built stores.

use ownership_core::engine::DEFAULT_ROOT_NODE;
use ownership_core::ingest::LogFormat;
use ownership_core::model::{
    Action, Asset, AssetId, AssetType, AttributionSource, CandidateId, CandidateType,
    DependencyEdge, EdgeKind, InteractionEvent, OrgKind, OrgNode, OrgNodeId, OwnerCandidate, Store,
};
use ownership_core::persist::MemoryJournal;
use ownership_core::Engine;

pub struct Fixture {
    pub engine: Engine<MemoryJournal>,
    next_event: usize,
}

impl Fixture {
    /// company → org → one team per entry, members active from time 0.
    pub fn new(teams: &[(&str, &[&str])]) -> Self {
        let mut engine = Engine::in_memory();
        let root = OrgNodeId::new(DEFAULT_ROOT_NODE);
        let org = OrgNodeId::new("org");
        engine
            .register_org_node(OrgNode {
                node_id: root.clone(),
                parent_id: None,
                kind: OrgKind::Company,
            })
            .unwrap();
        engine
            .register_org_node(OrgNode {
                node_id: org.clone(),
                parent_id: Some(root),
                kind: OrgKind::Org,
            })
            .unwrap();
        for (team, members) in teams {
            engine
                .register_org_node(OrgNode {
                    node_id: OrgNodeId::new(*team),
                    parent_id: Some(org.clone()),
                    kind: OrgKind::Team,
                })
                .unwrap();
            for m in *members {
                engine
                    .register_candidate(
                        OwnerCandidate {
                            candidate_id: CandidateId::new(*m),
                            candidate_type: CandidateType::Individual,
                            display_name: m.to_string(),
                            org_node_id: OrgNodeId::new(*team),
                            active: true,
                        },
                        0,
                    )
                    .unwrap();
            }
        }
        Self {
            engine,
            next_event: 0,
        }
    }

    pub fn store(&self) -> &Store {
        self.engine.store()
    }

    pub fn asset(&mut self, id: &str, t: AssetType, at: i64) -> AssetId {
        self.engine.register_asset(Asset::new(id, t, id, at)).unwrap();
        AssetId::new(id)
    }

    pub fn touch(&mut self, actor: &str, asset: &str, action: Action, at: i64) {
        self.next_event += 1;
        let ev = InteractionEvent {
            event_id: format!("ev{}", self.next_event),
            actor_id: CandidateId::new(actor),
            asset_id: AssetId::new(asset),
            action,
            at,
            attributes: Default::default(),
        };
        let r = self
            .engine
            .ingest_interactions("fixture", LogFormat::CommitLog, vec![ev])
            .unwrap();
        assert_eq!(r.accepted, 1);
    }

    pub fn own(&mut self, asset: &str, owner: &str, at: i64) {
        self.engine
            .transfer_owner(
                &AssetId::new(asset),
                &CandidateId::new(owner),
                at,
                AttributionSource::AutoApplied,
                None,
            )
            .unwrap();
    }

    pub fn edge(&mut self, from: &str, to: &str, kind: EdgeKind, at: i64) {
        self.engine
            .record_dependency(DependencyEdge {
                from_asset_id: AssetId::new(from),
                to_asset_id: AssetId::new(to),
                edge_kind: kind,
                recorded_at: at,
            })
            .unwrap();
    }
}

pub fn cid(s: &str) -> CandidateId {
    CandidateId::new(s)
}

pub fn aid(s: &str) -> AssetId {
    AssetId::new(s)
}
