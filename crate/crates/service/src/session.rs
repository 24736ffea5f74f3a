//! Static bearer-token table. The session, not the request body, names the
//! actor that decisions are recorded under.

use std::collections::HashMap;

use ownership_core::model::CandidateId;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Capability {
    Read,
    Decide,
    Ingest,
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub actor_id: CandidateId,
    pub capabilities: Vec<Capability>,
}

impl Session {
    pub fn can(&self, cap: Capability) -> bool {
        self.capabilities.contains(&cap)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SessionTable {
    by_token: HashMap<String, Session>,
}

#[derive(Deserialize)]
struct SessionFile {
    #[serde(default)]
    session: Vec<Session>,
}

impl SessionTable {
    pub fn new(sessions: impl IntoIterator<Item = Session>) -> Self {
        Self {
            by_token: sessions.into_iter().map(|s| (s.token.clone(), s)).collect(),
        }
    }

    /// Parses `[[session]]` tables with `token`, `actor_id` and `capabilities`.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let file: SessionFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut seen = std::collections::HashSet::new();
        for s in &file.session {
            if s.token.is_empty() {
                return Err("empty session token".into());
            }
            if !seen.insert(s.token.as_str()) {
                return Err(format!("duplicate session token for `{}`", s.actor_id));
            }
        }
        Ok(Self::new(file.session))
    }

    pub fn get(&self, token: &str) -> Option<&Session> {
        self.by_token.get(token)
    }

    pub fn len(&self) -> usize {
        self.by_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }
}
