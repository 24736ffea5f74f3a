//! Engine-versus-oracle comparisons shared by the integration and acceptance
//! suites. Each returns (probes, mismatches).

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ownership_core::featurize::compute_features;
use ownership_core::health::{churn, health_report};
use ownership_core::learn::TrainConfig;
use ownership_core::model::{
    Action, AnnotationKind, AssetId, AssetType, CandidateId, DependencyEdge, EdgeKind,
    InteractionEvent, OwnershipAnnotation, Store,
};
use ownership_core::persist::{Event, InteractionBatch, OwnerChangeRecord};
use ownership_core::recommend::shortlist;
use ownership_core::sim::{generate, Reorg, SimConfig, SimOutput, AssetCounts};
use ownership_core::time::{day_of, Timestamp, DAY};

use super::oracle::World;

pub fn oracle_config(seed: u64) -> SimConfig {
    SimConfig {
        seed,
        teams: 4,
        individuals_per_team: 5,
        assets: AssetCounts {
            source_file: 120,
            warehouse_table: 50,
            config_file: 50,
        },
        horizon_days: 60,
        reorgs: vec![Reorg {
            day: 30,
            fraction: 0.2,
        }],
        deletion_fraction: 0.1,
        ..Default::default()
    }
}

/// A simulated store with trained models and issued recommendations.
pub fn oracle_store(seed: u64) -> SimOutput {
    let config = oracle_config(seed);
    let mut out = generate(&config).expect("generate");
    let start = config.start();
    for &t in AssetType::ALL {
        let _ = out.engine.train(&TrainConfig::tree(t), start + 40 * DAY, None);
    }
    let ids: Vec<AssetId> = out.store().assets().map(|a| a.asset_id.clone()).collect();
    for (i, id) in ids.iter().enumerate() {
        if i % 4 != 0 {
            continue;
        }
        for day in [45, 55] {
            let at = start + day * DAY + i as i64;
            if out.store().asset(id).unwrap().is_live_at(at) {
                let _ = out.engine.issue_recommendation(id, at);
            }
        }
    }
    out
}

pub fn world_of(out: &SimOutput) -> World {
    World::from_events(&out.engine.journal().events().expect("decodable log"))
}

/// Interactions plus all other logged events.
pub fn event_count(store: &Store, out: &SimOutput) -> usize {
    store.interaction_count() + out.engine.journal().len()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

pub fn check_current_owner(out: &SimOutput, world: &World, seed: u64) -> (usize, usize) {
    let store = out.store();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (start, end) = (out.config.start(), out.config.end());
    let (mut n, mut bad) = (0, 0);
    for a in store.assets() {
        for _ in 0..20 {
            let t = rng.random_range(start - DAY..end + DAY);
            n += 1;
            let got = store.current_owner(&a.asset_id, t).unwrap().cloned();
            if got != world.owner_at(&a.asset_id, t) {
                bad += 1;
            }
        }
    }
    (n, bad)
}

pub fn check_features(out: &SimOutput, world: &World, probes: usize, seed: u64) -> (usize, usize) {
    let store = out.store();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assets: Vec<&AssetId> = store.assets().map(|a| &a.asset_id).collect();
    let cands: Vec<&CandidateId> = store.candidates().map(|c| &c.candidate_id).collect();
    let (start, end) = (out.config.start(), out.config.end());
    let mut bad = 0;
    for i in 0..probes {
        let a = *assets.choose(&mut rng).unwrap();
        let as_of = rng.random_range(start..end + DAY);
        // Half the probes use candidates that actually touched the asset.
        let c = if i % 2 == 0 {
            let touched: Vec<&CandidateId> = world
                .touches
                .iter()
                .filter(|e| &e.asset_id == a)
                .map(|e| &e.actor_id)
                .collect();
            touched.choose(&mut rng).copied().unwrap_or(cands[0])
        } else {
            *cands.choose(&mut rng).unwrap()
        };
        let got = compute_features(store, a, c, as_of).unwrap().values;
        let want = world.features(a, c, as_of);
        if got.len() != want.len() || got.iter().zip(&want).any(|(x, y)| !close(*x, *y)) {
            bad += 1;
        }
    }
    (probes, bad)
}

pub fn check_shortlists(out: &SimOutput, world: &World) -> (usize, usize) {
    let store = out.store();
    let start = out.config.start();
    let (mut n, mut bad) = (0, 0);
    for day in [10, 31, 59] {
        let t = start + day * DAY + 3_600;
        for a in store.assets().filter(|a| a.is_live_at(t)) {
            n += 1;
            if shortlist(store, &a.asset_id, t).unwrap() != world.shortlist(&a.asset_id, t) {
                bad += 1;
            }
        }
    }
    (n, bad)
}

pub fn check_churn(out: &SimOutput, world: &World) -> (usize, usize) {
    let store = out.store();
    let from = day_of(out.config.start()) - 1;
    let to = day_of(out.config.end()) + 1;
    let (mut n, mut bad) = (0, 0);
    for &t in AssetType::ALL {
        let series = churn(store, t, from, to);
        let want = world.churn(t, from, to);
        for (b, w) in series.buckets.iter().zip(&want) {
            n += 1;
            if [b.added, b.deleted, b.changed, b.owner_changes] != *w {
                bad += 1;
            }
        }
        if series.buckets.len() != want.len() {
            bad += 1;
        }
    }
    (n, bad)
}

pub fn check_health(out: &SimOutput, world: &World) -> (usize, usize) {
    let store = out.store();
    let start = out.config.start();
    let (mut n, mut bad) = (0, 0);
    for day in [0, 20, 45, 50, 56, 70] {
        let t = start + day * DAY + 7;
        let r = health_report(store, t);
        let mut scopes = vec![(None, r.totals.clone())];
        scopes.extend(r.by_type.iter().map(|x| (Some(x.asset_type), x.counts.clone())));
        for (scope, c) in scopes {
            n += 1;
            let w = world.health(t, scope);
            let got = [
                c.live_assets,
                c.unowned_count,
                c.stale_owner_count,
                c.recommended_assets,
                c.inconclusive_count,
            ];
            let rate = if w[3] == 0 { 0.0 } else { w[4] as f64 / w[3] as f64 };
            if got != w || !close(c.inconclusive_rate, rate) {
                bad += 1;
            }
        }
    }
    (n, bad)
}

fn next_seq(store: &Store) -> u64 {
    store.last_sequence().map_or(0, |s| s + 1)
}

/// Computes features at `as_of`, injects events at or after a cut time no
/// earlier than `as_of`, and recomputes. Returns (probes, changed vectors).
pub fn time_travel(out: &SimOutput, probes: usize, seed: u64) -> (usize, usize) {
    let base = out.store();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assets: Vec<AssetId> = base.assets().map(|a| a.asset_id.clone()).collect();
    let cands: Vec<CandidateId> = base.candidates().map(|c| c.candidate_id.clone()).collect();
    let (start, end) = (out.config.start(), out.config.end());
    let groups = 10;
    let mut changed = 0;
    let mut done = 0;
    for g in 0..groups {
        let per = probes / groups + usize::from(g < probes % groups);
        let cut = rng.random_range(start..end);
        let picks: Vec<(AssetId, CandidateId, Timestamp)> = (0..per)
            .map(|_| {
                (
                    assets.choose(&mut rng).unwrap().clone(),
                    cands.choose(&mut rng).unwrap().clone(),
                    cut - rng.random_range(0..3 * DAY),
                )
            })
            .collect();
        let before: Vec<Vec<f64>> = picks
            .iter()
            .map(|(a, c, t)| compute_features(base, a, c, *t).unwrap().values)
            .collect();

        let mut store = base.clone();
        let mut batch = InteractionBatch {
            source: format!("future-{g}"),
            ..Default::default()
        };
        for (i, (a, c, _)) in picks.iter().enumerate() {
            for (k, action) in [Action::Modify, Action::AdminAction, Action::Review]
                .into_iter()
                .enumerate()
            {
                batch.interactions.push(InteractionEvent {
                    event_id: format!("future-{g}-{i}-{k}"),
                    actor_id: c.clone(),
                    asset_id: a.clone(),
                    action,
                    at: cut + rng.random_range(0..DAY),
                    attributes: Default::default(),
                });
            }
        }
        let seq = next_seq(&store);
        store.apply(seq, &Event::InteractionIngested(batch)).unwrap();
        for (a, c, _) in &picks {
            let ev = Event::AnnotationRecorded {
                asset_id: a.clone(),
                annotations: vec![OwnershipAnnotation {
                    asset_id: a.clone(),
                    named_candidate: c.clone(),
                    annotation_kind: AnnotationKind::OwnersDirective,
                    source_location: "line 1".into(),
                    observed_at: cut,
                }],
            };
            let seq = next_seq(&store);
            store.apply(seq, &ev).unwrap();
            let other = assets.choose(&mut rng).unwrap();
            if other != a {
                let seq = next_seq(&store);
                let _ = store.apply(
                    seq,
                    &Event::DependencyRecorded(DependencyEdge {
                        from_asset_id: a.clone(),
                        to_asset_id: other.clone(),
                        edge_kind: EdgeKind::Usage,
                        recorded_at: cut,
                    }),
                );
            }
            let last = store
                .attribution(a)
                .unwrap()
                .last()
                .map_or(cut, |r| r.valid_to.unwrap_or(r.valid_from));
            let at = last.max(cut) + 1;
            let seq = next_seq(&store);
            let _ = store.apply(
                seq,
                &Event::OwnerChanged(OwnerChangeRecord {
                    record: ownership_core::model::AttributionRecord {
                        asset_id: a.clone(),
                        owner_id: c.clone(),
                        valid_from: at,
                        valid_to: None,
                        source: ownership_core::model::AttributionSource::AutoApplied,
                    },
                    changed_by: None,
                }),
            );
        }
        for (i, (a, c, t)) in picks.iter().enumerate() {
            done += 1;
            if compute_features(&store, a, c, *t).unwrap().values != before[i] {
                changed += 1;
            }
        }
    }
    (done, changed)
}

/// Shortlist sizes outside [3, 100] for live assets whose pool (candidates
/// active just before the probe time) has at least 3 members.
pub fn shortlist_bounds(store: &Store, times: &[Timestamp]) -> (usize, usize) {
    let (mut n, mut bad) = (0, 0);
    for &t in times {
        let pool = store
            .candidates()
            .filter(|c| store.candidate_state_at(&c.candidate_id, t - 1).is_some_and(|s| s.1))
            .count();
        if pool < 3 {
            continue;
        }
        for a in store.assets().filter(|a| a.is_live_at(t)) {
            n += 1;
            let len = shortlist(store, &a.asset_id, t).unwrap().len();
            if !(3..=100).contains(&len) {
                bad += 1;
            }
        }
    }
    (n, bad)
}
