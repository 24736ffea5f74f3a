//! Event-log checks shared by the integration and acceptance suites.

use std::path::Path;

use ownership_core::engine::DEFAULT_ROOT_NODE;
use ownership_core::ingest::LogFormat;
use ownership_core::learn::TrainConfig;
use ownership_core::model::{
    AnnotationKind, Asset, AssetId, AssetType, AttributionRecord, AttributionSource, CandidateId,
    CandidateType, DependencyEdge, EdgeKind, OrgKind, OrgNode, OrgNodeId, OwnerCandidate,
    OwnershipAnnotation,
};
use ownership_core::persist::{read_log, replay, FileJournal, Journal, MemoryJournal};
use ownership_core::sim::SimOutput;
use ownership_core::time::{format_iso as iso, DAY};
use ownership_core::{DecisionInput, Engine, Error};

/// Writes the simulated log to `dir/store.log`, reopens it twice and replays
/// it from memory. True when every resulting store has the engine's fingerprint.
pub fn replay_determinism(out: &SimOutput, dir: &Path) -> bool {
    let want = out.store().fingerprint();
    let path = dir.join("store.log");
    out.engine.journal().write_to(&path).unwrap();
    let first = {
        let (_journal, store) = FileJournal::open(&path).unwrap();
        store.fingerprint()
    };
    let second = {
        let (_journal, store) = FileJournal::open(&path).unwrap();
        store.fingerprint()
    };
    let from_memory = replay(&out.engine.journal().events().unwrap(), None)
        .unwrap()
        .fingerprint();
    let bytes_equal = std::fs::read(&path).unwrap() == out.engine.journal().to_bytes();
    first == want && second == want && from_memory == want && bytes_equal
}

/// Damages the tail of the log in several ways; after reopening, the state
/// must equal the replay of the undamaged prefix and the file must accept
/// further appends. Returns (cases, failures).
pub fn torn_tail_recovery(out: &SimOutput, dir: &Path) -> (usize, usize) {
    let journal = out.engine.journal();
    let lines = journal.lines();
    let n = lines.len();
    let events = journal.events().unwrap();
    let prefix = replay(&events[..n - 1], None).unwrap().fingerprint();
    let full = out.store().fingerprint();
    let last = &lines[n - 1];
    let head: String = lines[..n - 1].iter().map(|l| format!("{l}\n")).collect();

    let mut damaged_bad_crc = last.clone();
    let crc_at = last.match_indices('\t').nth(1).unwrap().0 + 1;
    let flipped = if &last[crc_at..crc_at + 1] == "0" { "1" } else { "0" };
    damaged_bad_crc.replace_range(crc_at..crc_at + 1, flipped);

    let cases: Vec<(String, &str)> = vec![
        (format!("{head}{}", &last[..last.len() / 2]), prefix.as_str()),
        (format!("{head}{}", &last[..1]), prefix.as_str()),
        // Records are newline-terminated; without it the write is incomplete.
        (format!("{head}{last}"), prefix.as_str()),
        (format!("{head}{last}\n"), full.as_str()),
        (format!("{head}{damaged_bad_crc}\n"), prefix.as_str()),
        (format!("{head}{}", &last[..last.len() - 1]), prefix.as_str()),
    ];
    let mut failures = 0;
    for (i, (content, want)) in cases.iter().enumerate() {
        let path = dir.join(format!("torn-{i}.log"));
        std::fs::write(&path, content).unwrap();
        let ok = (|| {
            let mut engine = Engine::open(&path).ok()?;
            if engine.store().fingerprint() != *want {
                return None;
            }
            let before = engine.journal().next_sequence();
            let at = engine.next_time();
            engine
                .register_asset(Asset::new("after-recovery", AssetType::ConfigFile, "after.yaml", at))
                .ok()?;
            drop(engine);
            let events = read_log(&path).ok()?;
            (events.len() as u64 == before + 1
                && events.iter().enumerate().all(|(k, e)| e.sequence_number == k as u64))
            .then_some(())
        })();
        if ok.is_none() {
            failures += 1;
        }
    }
    // Damage before the last record is not repaired.
    let path = dir.join("torn-middle.log");
    let mut middle: Vec<String> = lines.to_vec();
    let half = middle[n / 2].len() / 2;
    middle[n / 2].truncate(half);
    std::fs::write(&path, middle.join("\n") + "\n").unwrap();
    if !matches!(
        Engine::open(&path),
        Err(Error::Persist(ownership_core::persist::PersistError::CorruptLog { .. }))
    ) {
        failures += 1;
    }
    (cases.len() + 1, failures)
}

/// replay(k) followed by the remaining events equals the full replay.
/// Returns (split points, failures).
pub fn prefix_replay(out: &SimOutput, splits: usize) -> (usize, usize) {
    let events = out.engine.journal().events().unwrap();
    let want = out.store().fingerprint();
    let mut failures = 0;
    for i in 0..splits {
        let k = (events.len() - 1) * i / splits.max(2).saturating_sub(1).max(1);
        let k = k.min(events.len() - 1);
        let mut store = replay(&events, Some(k as u64)).unwrap();
        if store.last_sequence() != Some(k as u64) {
            failures += 1;
            continue;
        }
        for e in &events[k + 1..] {
            store.apply(e.sequence_number, &e.event).unwrap();
        }
        if store.fingerprint() != want {
            failures += 1;
        }
    }
    (splits, failures)
}

/// Calls every mutating engine operation on top of a simulated store and
/// records how many events each appended. Rejected calls are included with
/// the expectation of zero. Returns (operation, expected, appended).
pub fn mutation_appends(mut out: SimOutput) -> Vec<(&'static str, u64, u64)> {
    let e = &mut out.engine;
    type Log = Vec<(&'static str, u64, u64)>;
    fn step(log: &mut Log, name: &'static str, expected: u64, e: &mut Engine<MemoryJournal>, f: &dyn Fn(&mut Engine<MemoryJournal>) -> bool) {
        let before = e.journal().next_sequence();
        let ok = f(e);
        let appended = e.journal().next_sequence() - before;
        // A call that did not behave as scripted is reported as a mismatch.
        log.push((name, if ok { expected } else { u64::MAX }, appended));
    }
    let mut log = Log::new();
    let t0 = e.next_time() + DAY;
    let team = OrgNodeId::new("team-extra");
    let person = CandidateId::new("u-extra");
    let other = CandidateId::new("u-other");
    let fresh = AssetId::new("config/extra.yaml");
    let imported = AssetId::new("config/imported.yaml");

    step(&mut log, "register_org_node", 1, e, &|e| {
        e.register_org_node(OrgNode {
            node_id: OrgNodeId::new("team-extra"),
            parent_id: Some(OrgNodeId::new(DEFAULT_ROOT_NODE)),
            kind: OrgKind::Team,
        })
        .is_ok()
    });
    for (id, name) in [(&person, "register_candidate"), (&other, "register_candidate")] {
        step(&mut log, name, 1, e, &|e| {
            e.register_candidate(
                OwnerCandidate {
                    candidate_id: id.clone(),
                    candidate_type: CandidateType::Individual,
                    display_name: id.to_string(),
                    org_node_id: team.clone(),
                    active: true,
                },
                t0,
            )
            .is_ok()
        });
    }
    step(&mut log, "update_candidate", 1, e, &|e| e.update_candidate(&other, t0 + 1, &team, true).is_ok());
    for id in [&fresh, &imported] {
        step(&mut log, "register_asset", 1, e, &|e| {
            e.register_asset(Asset::new(id.as_str(), AssetType::ConfigFile, id.as_str(), t0 + 2))
                .is_ok()
        });
    }
    step(&mut log, "record_dependency", 1, e, &|e| {
        e.record_dependency(DependencyEdge {
            from_asset_id: fresh.clone(),
            to_asset_id: imported.clone(),
            edge_kind: EdgeKind::FeatureMapping,
            recorded_at: t0 + 3,
        })
        .is_ok()
    });
    step(&mut log, "transfer_owner", 1, e, &|e| {
        e.transfer_owner(&fresh, &person, t0 + 4, AttributionSource::HumanDecision, Some(other.clone()))
            .is_ok()
    });
    step(&mut log, "import_attribution", 1, e, &|e| {
        let r = e
            .import_attribution(&[
                AttributionRecord {
                    asset_id: imported.clone(),
                    owner_id: person.clone(),
                    valid_from: t0 + 2,
                    valid_to: Some(t0 + 5),
                    source: AttributionSource::Import,
                },
                AttributionRecord {
                    asset_id: imported.clone(),
                    owner_id: other.clone(),
                    valid_from: t0 + 5,
                    valid_to: None,
                    source: AttributionSource::Import,
                },
                AttributionRecord {
                    asset_id: imported.clone(),
                    owner_id: other.clone(),
                    valid_from: t0 + 4,
                    valid_to: Some(t0 + 6),
                    source: AttributionSource::Import,
                },
            ])
            .unwrap();
        r.accepted == 2 && r.rejected.len() == 1
    });
    let log_text = format!(
        "{}\tu-extra\tconfig/extra.yaml\tdeploy\n{}\tu-new\tconfig/brand-new.yaml\tdeploy\n",
        iso(t0 + 6),
        iso(t0 + 7)
    );
    step(&mut log, "ingest_log", 1, e, &|e| {
        let r = e.ingest_log("admin-extra", LogFormat::AdminLog, &log_text).unwrap();
        r.accepted == 2 && r.quarantined_actors.len() == 1 && r.new_assets.len() == 1
    });
    step(&mut log, "record_annotations", 1, e, &|e| {
        e.record_annotations(
            &fresh,
            vec![OwnershipAnnotation {
                asset_id: fresh.clone(),
                named_candidate: person.clone(),
                annotation_kind: AnnotationKind::OwnersDirective,
                source_location: "line 1".into(),
                observed_at: t0 + 8,
            }],
        )
        .is_ok_and(|r| r.accepted == 1)
    });
    step(&mut log, "scan_annotations", 1, e, &|e| {
        e.scan_annotations(&imported, "# ONCALL: u-other\n", t0 + 8)
            .is_ok_and(|r| r.accepted == 1)
    });
    step(&mut log, "train", 1, e, &|e| e.train(&TrainConfig::tree(AssetType::ConfigFile), t0 + 9, None).is_ok());
    let rec = e.issue_recommendation(&fresh, t0 + 10);
    log.push(("issue_recommendation", 1, rec.is_ok() as u64));
    let rec = rec.unwrap();
    let top = rec.entries[0].candidate_id.clone();
    step(&mut log, "apply_decision", 1, e, &|e| {
        e.apply_decision(&rec.recommendation_id, &top, DecisionInput::Accept, &other, t0 + 11)
            .is_ok()
    });
    step(&mut log, "record_decision", 1, e, &|e| {
        e.record_decision(&imported, &person, DecisionInput::Reject, &person, t0 + 12)
            .is_ok()
    });
    step(&mut log, "delete_asset", 1, e, &|e| e.delete_asset(&imported, t0 + 13).is_ok());

    // Rejected operations append nothing.
    step(&mut log, "stale apply_decision", 0, e, &|e| {
        e.apply_decision(&rec.recommendation_id, &top, DecisionInput::Reject, &other, t0 + 14)
            .is_err()
    });
    step(&mut log, "transfer to unknown candidate", 0, e, &|e| {
        e.transfer_owner(&fresh, &CandidateId::new("nobody"), t0 + 14, AttributionSource::AutoApplied, None)
            .is_err()
    });
    step(&mut log, "empty ingest", 0, e, &|e| {
        e.ingest_log("empty", LogFormat::CommitLog, "").is_ok_and(|r| r.sequence.is_none())
    });
    step(&mut log, "duplicate ingest", 0, e, &|e| {
        e.ingest_log("admin-extra", LogFormat::AdminLog, &log_text)
            .is_ok_and(|r| r.duplicates == 2)
    });
    step(&mut log, "import with only rejections", 0, e, &|e| {
        e.import_attribution(&[AttributionRecord {
            asset_id: fresh.clone(),
            owner_id: other.clone(),
            valid_from: t0,
            valid_to: None,
            source: AttributionSource::Import,
        }])
        .is_ok_and(|r| r.accepted == 0)
    });
    step(&mut log, "train without window", 0, e, &|e| {
        e.train(&TrainConfig::tree(AssetType::ConfigFile), t0 + 15, Some(0)).is_err()
    });
    log
}

