#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ownership_core::model::{CandidateId, CandidateType};
use ownership_core::persist::read_log;
use ownership_core::sim::{generate, AssetCounts, SimConfig};
use ownership_service::{start, Capability, Clock, RunningServer, ServiceConfig, Session, SessionTable};
use reqwest::{Client, Response, StatusCode};
use serde::de::DeserializeOwned;
use serde_json::Value;

pub const ALL: [Capability; 4] = [Capability::Read, Capability::Decide, Capability::Ingest, Capability::Train];

pub fn small_sim(seed: u64) -> SimConfig {
    SimConfig {
        seed,
        teams: 4,
        individuals_per_team: 5,
        assets: AssetCounts {
            source_file: 60,
            warehouse_table: 20,
            config_file: 20,
        },
        horizon_days: 45,
        ..Default::default()
    }
}

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub server: RunningServer,
    pub client: Client,
    /// Active individual that the `admin` and `alice` tokens act as.
    pub actor: CandidateId,
    pub other: CandidateId,
}

pub fn store_path(dir: &Path) -> PathBuf {
    dir.join("store.log")
}

fn sessions(actor: &CandidateId, other: &CandidateId, inactive: Option<&CandidateId>) -> SessionTable {
    let mut s = vec![
        Session {
            token: "admin".into(),
            actor_id: actor.clone(),
            capabilities: ALL.to_vec(),
        },
        Session {
            token: "alice".into(),
            actor_id: actor.clone(),
            capabilities: vec![Capability::Read, Capability::Decide],
        },
        Session {
            token: "bob".into(),
            actor_id: other.clone(),
            capabilities: vec![Capability::Read, Capability::Decide],
        },
        Session {
            token: "reader".into(),
            actor_id: other.clone(),
            capabilities: vec![Capability::Read],
        },
    ];
    if let Some(ghost) = inactive {
        s.push(Session {
            token: "ghost".into(),
            actor_id: ghost.clone(),
            capabilities: ALL.to_vec(),
        });
    }
    SessionTable::new(s)
}

pub async fn serve_dir(dir: tempfile::TempDir, actor: CandidateId, other: CandidateId, ghost: Option<CandidateId>, static_dir: Option<PathBuf>) -> Harness {
    let config = ServiceConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        store_path: store_path(dir.path()),
        static_dir,
        sessions: sessions(&actor, &other, ghost.as_ref()),
        clock: Clock::Logical,
    };
    let server = start(config).await.expect("start");
    Harness {
        dir,
        server,
        client: Client::new(),
        actor,
        other,
    }
}

/// Server over an empty store.
pub async fn empty() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    serve_dir(dir, "alice".into(), "bob".into(), None, None).await
}

/// Server over a simulated store; tokens act as two active individuals.
pub async fn simulated(seed: u64) -> Harness {
    let out = generate(&small_sim(seed)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.engine.journal().write_to(&store_path(dir.path())).unwrap();
    let end = out.config.end();
    let mut active = out
        .store()
        .candidates()
        .filter(|c| c.candidate_type == CandidateType::Individual)
        .filter(|c| matches!(out.store().candidate_state_at(&c.candidate_id, end), Some((_, true))))
        .map(|c| c.candidate_id.clone());
    let actor = active.next().unwrap();
    let other = active.next().unwrap();
    let ghost = out
        .store()
        .candidates()
        .find(|c| matches!(out.store().candidate_state_at(&c.candidate_id, end), Some((_, false))))
        .map(|c| c.candidate_id.clone());
    serve_dir(dir, actor, other, ghost, None).await
}

impl Harness {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.server.addr, path)
    }

    pub async fn get(&self, token: &str, path: &str) -> Response {
        self.client.get(self.url(path)).bearer_auth(token).send().await.unwrap()
    }

    pub async fn post(&self, token: &str, path: &str, body: &Value) -> Response {
        self.client.post(self.url(path)).bearer_auth(token).json(body).send().await.unwrap()
    }

    pub async fn get_ok<T: DeserializeOwned>(&self, path: &str) -> T {
        let r = self.get("admin", path).await;
        assert_eq!(r.status(), StatusCode::OK, "GET {path}");
        r.json().await.unwrap()
    }

    pub async fn post_ok<T: DeserializeOwned>(&self, path: &str, body: &Value) -> T {
        let r = self.post("admin", path, body).await;
        let status = r.status();
        let text = r.text().await.unwrap();
        assert_eq!(status, StatusCode::OK, "POST {path}: {text}");
        serde_json::from_str(&text).unwrap()
    }

    /// Records currently in the store file.
    pub fn log_len(&self) -> usize {
        read_log(&store_path(self.dir.path())).unwrap().len()
    }

    pub fn log_bytes(&self) -> Vec<u8> {
        std::fs::read(store_path(self.dir.path())).unwrap()
    }

    /// Trains every asset type and issues a recommendation for `n` live,
    /// owned assets whose shortlist has someone besides the owner.
    pub async fn prepare_recommendations(&self, n: usize) -> Vec<Value> {
        for t in ["SourceFile", "WarehouseTable", "ConfigFile"] {
            let _: Value = self.post_ok("/api/train", &serde_json::json!({ "asset_type": t })).await;
        }
        let assets: Value = self.get_ok("/api/assets?limit=1000").await;
        let mut recs = Vec::new();
        for a in assets["items"].as_array().unwrap() {
            if recs.len() == n {
                break;
            }
            if !a["deleted_at"].is_null() || a["owner"].is_null() {
                continue;
            }
            let rec: Value = self
                .post_ok("/api/recommendations", &serde_json::json!({ "asset_id": a["asset_id"] }))
                .await;
            if rec["entries"].as_array().unwrap().iter().any(|e| e["candidate_id"] != a["owner"]) {
                recs.push(rec);
            }
        }
        assert_eq!(recs.len(), n);
        recs
    }
}

/// First entry in `rec` that does not already own the asset.
pub fn non_owner_entry(rec: &Value, owner: &Value) -> Value {
    rec["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| &e["candidate_id"] != owner)
        .unwrap()["candidate_id"]
        .clone()
}
