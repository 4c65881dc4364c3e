//! File-backed design sessions: one JSON document per session, updated
//! under a per-session lock with an optimistic version check.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use levelblend::corpus::TileGrid;
use levelblend::evolve::EvolutionSpec;
use levelblend::latent::LatentVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::valid_token;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error("session `{id}` is at version {current}, update was based on version {given}")]
    Conflict { id: String, current: u64, given: u64 },
    #[error("session store: {0}")]
    Storage(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentVector<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<EvolutionSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub grid: TileGrid,
    pub x: i64,
    pub y: i64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSession {
    pub id: String,
    pub name: String,
    pub placements: Vec<Placement>,
    /// Incremented by every successful update.
    pub version: u64,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub name: String,
    pub placements: usize,
    pub version: u64,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

/// Replacement state for a session, based on the version the client last saw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionUpdate {
    pub version: u64,
    #[serde(default)]
    pub name: Option<String>,
    pub placements: Vec<Placement>,
}

pub struct SessionStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| SessionError::Storage(format!("{}: {e}", dir.display())))?;
        Ok(SessionStore { dir, locks: Mutex::new(HashMap::new()) })
    }

    fn path(&self, id: &str) -> Result<PathBuf, SessionError> {
        if !valid_token(id) {
            return Err(SessionError::NotFound(id.into()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(id.into()).or_default().clone()
    }

    fn write(&self, session: &DesignSession) -> Result<(), SessionError> {
        let path = self.path(&session.id)?;
        let bytes = serde_json::to_vec_pretty(session).map_err(|e| SessionError::Storage(e.to_string()))?;
        crate::write_atomic(&path, &bytes).map_err(|e| SessionError::Storage(format!("{}: {e}", path.display())))
    }

    pub fn create(&self, name: &str) -> Result<DesignSession, SessionError> {
        let now = Utc::now();
        let session = DesignSession {
            id: uuid::Uuid::new_v4().simple().to_string(),
            name: name.into(),
            placements: Vec::new(),
            version: 1,
            created_at: now,
            updated_at: now,
        };
        self.write(&session)?;
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<DesignSession, SessionError> {
        let path = self.path(id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(SessionError::NotFound(id.into())),
            Err(e) => return Err(SessionError::Storage(format!("{}: {e}", path.display()))),
        };
        serde_json::from_slice(&bytes).map_err(|e| SessionError::Storage(format!("{}: {e}", path.display())))
    }

    /// Sessions ordered by creation time, then id.
    pub fn list(&self) -> Result<Vec<SessionSummary>, SessionError> {
        let entries = fs::read_dir(&self.dir).map_err(|e| SessionError::Storage(e.to_string()))?;
        let mut out = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| SessionError::Storage(e.to_string()))?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let s = self.get(id)?;
            out.push(SessionSummary {
                id: s.id,
                name: s.name,
                placements: s.placements.len(),
                version: s.version,
                created_at: s.created_at,
                updated_at: s.updated_at,
            });
        }
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(out)
    }

    /// Apply `update` if it was based on the current version.
    pub fn update(&self, id: &str, update: SessionUpdate) -> Result<DesignSession, SessionError> {
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap();
        let mut session = self.get(id)?;
        if session.version != update.version {
            return Err(SessionError::Conflict { id: id.into(), current: session.version, given: update.version });
        }
        if let Some(name) = update.name {
            session.name = name;
        }
        session.placements = update.placements;
        session.version += 1;
        session.updated_at = Utc::now();
        self.write(&session)?;
        Ok(session)
    }
}
