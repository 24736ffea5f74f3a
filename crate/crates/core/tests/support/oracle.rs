//! Brute-force reference implementations, rebuilt from the raw event log with
//! flat lists and linear scans. Nothing here reads the store's indexes.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};

use ownership_core::model::{
    Action, Asset, AssetId, AssetType, AttributionRecord, AttributionSource, CandidateId,
    DependencyEdge, InteractionEvent, OrgNodeId, OwnerCandidate,
};
use ownership_core::persist::{Event, StoredEvent};
use ownership_core::recommend::{Band, Recommendation};
use ownership_core::time::{Timestamp, DAY};

pub struct World {
    pub parents: HashMap<OrgNodeId, Option<OrgNodeId>>,
    pub assets: Vec<Asset>,
    /// (candidate, [(from, org node, active)]) in registration order.
    pub candidates: Vec<(OwnerCandidate, Vec<(Timestamp, OrgNodeId, bool)>)>,
    pub touches: Vec<InteractionEvent>,
    pub records: Vec<AttributionRecord>,
    /// (asset, time) of every ownership change.
    pub changes: Vec<(AssetId, Timestamp)>,
    pub edges: Vec<DependencyEdge>,
    pub recommendations: Vec<Recommendation>,
}

impl World {
    pub fn from_events(events: &[StoredEvent]) -> World {
        let mut w = World {
            parents: HashMap::new(),
            assets: Vec::new(),
            candidates: Vec::new(),
            touches: Vec::new(),
            records: Vec::new(),
            changes: Vec::new(),
            edges: Vec::new(),
            recommendations: Vec::new(),
        };
        for e in events {
            match &e.event {
                Event::OrgNodeRegistered(n) => {
                    w.parents.insert(n.node_id.clone(), n.parent_id.clone());
                }
                Event::AssetRegistered(a) => w.assets.push(a.clone()),
                Event::AssetDeleted { asset_id, at } => {
                    w.asset_mut(asset_id).deleted_at = Some(*at);
                }
                Event::CandidateRegistered(r) => w.register(&r.candidate, r.at),
                Event::CandidateUpdated {
                    candidate_id,
                    at,
                    org_node_id,
                    active,
                } => {
                    let c = w
                        .candidates
                        .iter_mut()
                        .find(|c| &c.0.candidate_id == candidate_id)
                        .unwrap();
                    c.1.push((*at, org_node_id.clone(), *active));
                }
                Event::DependencyRecorded(edge) => w.edges.push(edge.clone()),
                Event::InteractionIngested(batch) => {
                    for n in &batch.org_nodes {
                        w.parents.insert(n.node_id.clone(), n.parent_id.clone());
                    }
                    for r in &batch.candidates {
                        w.register(&r.candidate, r.at);
                    }
                    w.assets.extend(batch.assets.iter().cloned());
                    w.touches.extend(batch.interactions.iter().cloned());
                }
                Event::AnnotationRecorded {
                    asset_id,
                    annotations,
                } => {
                    w.asset_mut(asset_id).annotations.extend(annotations.iter().cloned());
                }
                Event::OwnerChanged(c) => w.change(&c.record),
                Event::AttributionImported { records } => {
                    for r in records {
                        w.change(r);
                    }
                }
                Event::DecisionRecorded {
                    transfer: Some(t), ..
                } => w.change(t),
                Event::DecisionRecorded { .. } => {}
                Event::RecommendationIssued(r) => w.recommendations.push((**r).clone()),
                Event::ModelTrained(_) => {}
            }
        }
        w
    }

    fn register(&mut self, c: &OwnerCandidate, at: Timestamp) {
        self.candidates
            .push((c.clone(), vec![(at, c.org_node_id.clone(), c.active)]));
    }

    fn asset_mut(&mut self, id: &AssetId) -> &mut Asset {
        self.assets.iter_mut().find(|a| &a.asset_id == id).unwrap()
    }

    fn change(&mut self, r: &AttributionRecord) {
        self.changes.push((r.asset_id.clone(), r.valid_from));
        if r.source != AttributionSource::Import {
            for old in self.records.iter_mut() {
                if old.asset_id == r.asset_id && old.valid_to.is_none() {
                    old.valid_to = Some(r.valid_from);
                }
            }
        }
        self.records.push(r.clone());
    }

    pub fn asset(&self, id: &AssetId) -> &Asset {
        self.assets.iter().find(|a| &a.asset_id == id).unwrap()
    }

    pub fn owner_at(&self, asset: &AssetId, t: Timestamp) -> Option<CandidateId> {
        let hits: Vec<&AttributionRecord> = self
            .records
            .iter()
            .filter(|r| {
                &r.asset_id == asset && r.valid_from <= t && r.valid_to.is_none_or(|e| t < e)
            })
            .collect();
        assert!(hits.len() <= 1, "overlapping intervals for {asset}");
        hits.first().map(|r| r.owner_id.clone())
    }

    pub fn candidate_state(&self, c: &CandidateId, t: Timestamp) -> (OrgNodeId, bool) {
        let (cand, history) = self
            .candidates
            .iter()
            .find(|x| &x.0.candidate_id == c)
            .unwrap();
        let _ = cand;
        let mut state = (history[0].1.clone(), false);
        for (from, node, active) in history {
            if *from <= t {
                state = (node.clone(), *active);
            }
        }
        state
    }

    fn ancestors(&self, n: &OrgNodeId) -> Vec<OrgNodeId> {
        let mut out = vec![n.clone()];
        let mut cur = n.clone();
        while let Some(Some(p)) = self.parents.get(&cur) {
            out.push(p.clone());
            cur = p.clone();
        }
        out
    }

    pub fn org_distance(&self, a: &OrgNodeId, b: &OrgNodeId) -> u32 {
        let pa = self.ancestors(a);
        let pb = self.ancestors(b);
        for (i, x) in pa.iter().enumerate() {
            if let Some(j) = pb.iter().position(|y| y == x) {
                return (i + j) as u32;
            }
        }
        panic!("disconnected org tree");
    }

    pub fn neighbors(&self, asset: &AssetId, before: Timestamp) -> BTreeSet<AssetId> {
        let mut out = BTreeSet::new();
        for e in &self.edges {
            if e.recorded_at >= before {
                continue;
            }
            if &e.from_asset_id == asset {
                out.insert(e.to_asset_id.clone());
            }
            if &e.to_asset_id == asset {
                out.insert(e.from_asset_id.clone());
            }
        }
        out
    }

    /// Feature values in schema order.
    pub fn features(&self, asset: &AssetId, cand: &CandidateId, as_of: Timestamp) -> Vec<f64> {
        let a = self.asset(asset);
        let mine: Vec<&InteractionEvent> = self
            .touches
            .iter()
            .filter(|e| &e.asset_id == asset && &e.actor_id == cand && e.at < as_of)
            .collect();
        let recency = match mine.iter().map(|e| e.at).max() {
            None => 365.0,
            Some(last) => ((as_of - last) as f64 / DAY as f64).min(365.0),
        };
        let touch90 = mine.iter().filter(|e| e.at >= as_of - 90 * DAY).count() as f64;
        let mine_mod = mine.iter().filter(|e| e.action == Action::Modify).count();
        let all_mod = self
            .touches
            .iter()
            .filter(|e| &e.asset_id == asset && e.action == Action::Modify && e.at < as_of)
            .count();
        let share = if all_mod == 0 {
            0.0
        } else {
            mine_mod as f64 / all_mod as f64
        };
        let annotated = a
            .annotations
            .iter()
            .any(|x| &x.named_candidate == cand && x.observed_at < as_of);
        let admin = mine
            .iter()
            .filter(|e| e.action == Action::AdminAction && e.at >= as_of - 30 * DAY)
            .count() as f64;
        let distance = match self.owner_at(asset, as_of - 1) {
            None => 10.0,
            Some(o) => {
                let (cn, _) = self.candidate_state(cand, as_of - 1);
                let (on, _) = self.candidate_state(&o, as_of - 1);
                self.org_distance(&cn, &on).min(10) as f64
            }
        };
        let neighbors = self.neighbors(asset, as_of);
        let mut required: BTreeSet<AssetId> = neighbors.clone();
        required.insert(asset.clone());
        let mut per_asset: HashMap<&AssetId, f64> = HashMap::new();
        for e in self.touches.iter().filter(|e| &e.actor_id == cand && e.at < as_of) {
            *per_asset.entry(&e.asset_id).or_default() += 1.0;
        }
        let norm: f64 = per_asset.values().map(|c| c * c).sum::<f64>().sqrt();
        let experience = if norm == 0.0 {
            0.0
        } else {
            let dot: f64 = required.iter().map(|r| per_asset.get(r).copied().unwrap_or(0.0)).sum();
            (dot / (norm * (required.len() as f64).sqrt())).min(1.0)
        };
        let neighbor_share = if neighbors.is_empty() {
            0.0
        } else {
            neighbors
                .iter()
                .filter(|n| self.owner_at(n, as_of - 1).as_ref() == Some(cand))
                .count() as f64
                / neighbors.len() as f64
        };
        let mut v = vec![recency, touch90, share, if annotated { 1.0 } else { 0.0 }];
        if a.asset_type == AssetType::WarehouseTable {
            v.push(admin);
        }
        v.extend([distance, experience, neighbor_share]);
        v
    }

    /// Shortlist by the documented rules, sorted by id.
    pub fn shortlist(&self, asset: &AssetId, as_of: Timestamp) -> Vec<CandidateId> {
        let active = |c: &CandidateId| self.candidate_state(c, as_of - 1).1;
        let touches = |c: &CandidateId| {
            self.touches
                .iter()
                .filter(|e| {
                    &e.asset_id == asset
                        && &e.actor_id == c
                        && e.at < as_of
                        && e.at >= as_of - 365 * DAY
                })
                .count()
        };
        let mut pool: BTreeSet<CandidateId> = BTreeSet::new();
        for e in &self.touches {
            if &e.asset_id == asset && e.at < as_of && e.at >= as_of - 365 * DAY {
                pool.insert(e.actor_id.clone());
            }
        }
        for x in &self.asset(asset).annotations {
            if x.observed_at < as_of
                && self.candidates.iter().any(|c| c.0.candidate_id == x.named_candidate)
            {
                pool.insert(x.named_candidate.clone());
            }
        }
        for n in self.neighbors(asset, as_of) {
            if let Some(o) = self.owner_at(&n, as_of - 1) {
                pool.insert(o);
            }
        }
        let mut list: Vec<CandidateId> = pool.into_iter().filter(|c| active(c)).collect();
        if list.len() > 100 {
            list.sort_by(|a, b| touches(b).cmp(&touches(a)).then(a.cmp(b)));
            list.truncate(100);
        }
        if list.len() < 3 {
            let mut all: Vec<CandidateId> = self
                .candidates
                .iter()
                .map(|c| c.0.candidate_id.clone())
                .filter(|c| active(c))
                .collect();
            all.sort();
            if let Some(o) = self.owner_at(asset, as_of - 1) {
                let team = self.candidate_state(&o, as_of - 1).0;
                for c in &all {
                    if list.len() >= 3 {
                        break;
                    }
                    if self.candidate_state(c, as_of - 1).0 == team && !list.contains(c) {
                        list.push(c.clone());
                    }
                }
            }
            for c in &all {
                if list.len() >= 3 {
                    break;
                }
                if !list.contains(c) {
                    list.push(c.clone());
                }
            }
        }
        list.sort();
        list
    }

    /// Per day in `[from, to]`: (added, deleted, changed, owner changes).
    pub fn churn(&self, t: AssetType, from: i64, to: i64) -> Vec<[usize; 4]> {
        let of_type: HashSet<&AssetId> = self
            .assets
            .iter()
            .filter(|a| a.asset_type == t)
            .map(|a| &a.asset_id)
            .collect();
        let day = |ts: Timestamp| ts.div_euclid(DAY);
        (from..=to)
            .map(|d| {
                let added = self
                    .assets
                    .iter()
                    .filter(|a| a.asset_type == t && day(a.created_at) == d)
                    .count();
                let deleted = self
                    .assets
                    .iter()
                    .filter(|a| a.asset_type == t && a.deleted_at.is_some_and(|x| day(x) == d))
                    .count();
                let changed: HashSet<&AssetId> = self
                    .touches
                    .iter()
                    .filter(|e| {
                        e.action == Action::Modify && day(e.at) == d && of_type.contains(&e.asset_id)
                    })
                    .map(|e| &e.asset_id)
                    .collect();
                let owners: HashSet<&AssetId> = self
                    .changes
                    .iter()
                    .filter(|(a, at)| day(*at) == d && of_type.contains(a))
                    .map(|(a, _)| a)
                    .collect();
                [added, deleted, changed.len(), owners.len()]
            })
            .collect()
    }

    /// (live, unowned, stale, recommended, inconclusive), optionally for one type.
    pub fn health(&self, as_of: Timestamp, only: Option<AssetType>) -> [usize; 5] {
        let mut out = [0; 5];
        for a in &self.assets {
            if only.is_some_and(|t| t != a.asset_type) || !a.is_live_at(as_of) {
                continue;
            }
            out[0] += 1;
            match self.owner_at(&a.asset_id, as_of) {
                None => out[1] += 1,
                Some(o) => {
                    let recent = self.touches.iter().any(|e| {
                        e.asset_id == a.asset_id
                            && e.actor_id == o
                            && e.at <= as_of
                            && e.at >= as_of - 180 * DAY
                    });
                    if !recent {
                        out[2] += 1;
                    }
                }
            }
            let mut latest: Option<&Recommendation> = None;
            for r in &self.recommendations {
                if r.asset_id == a.asset_id && r.as_of <= as_of && latest.is_none_or(|l| r.as_of >= l.as_of) {
                    latest = Some(r);
                }
            }
            if let Some(r) = latest {
                out[3] += 1;
                if r.band == Band::Inconclusive {
                    out[4] += 1;
                }
            }
        }
        out
    }
}
