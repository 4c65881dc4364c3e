//! Registered checkpoints, indexed by a JSON file and loaded on first use.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use levelblend::models::{load_checkpoint, Manifest, Model, ModelError, ModelKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid model id `{0}` (use letters, digits, `-` and `_`)")]
    InvalidId(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {message}")]
    Index { path: PathBuf, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub epochs_completed: usize,
    pub latent_dim: usize,
    pub channels: [usize; 2],
    pub seed: u64,
    pub corpus_hash: String,
    pub created_at: DateTime<Utc>,
    pub scalar: String,
}

impl From<&Manifest> for ManifestSummary {
    fn from(m: &Manifest) -> Self {
        ManifestSummary {
            epochs_completed: m.epochs_completed,
            latent_dim: m.config.latent_dim,
            channels: m.config.channels,
            seed: m.config.seed,
            corpus_hash: m.corpus_hash.clone(),
            created_at: m.created_at,
            scalar: m.scalar.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistryEntry {
    pub model_id: String,
    pub kind: ModelKind,
    /// Relative paths are resolved against the index file's directory.
    pub checkpoint: PathBuf,
    pub manifest: ManifestSummary,
}

#[derive(Default, Serialize, Deserialize)]
struct Index {
    models: Vec<ModelRegistryEntry>,
}

pub fn valid_token(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub struct Registry {
    index_path: PathBuf,
    entries: RwLock<BTreeMap<String, ModelRegistryEntry>>,
    loaded: RwLock<HashMap<String, Arc<Model<f32>>>>,
}

impl Registry {
    /// Open the index at `index_path`; a missing file is an empty registry.
    pub fn open(index_path: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let index_path = index_path.into();
        let index: Index = match fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| RegistryError::Index { path: index_path.clone(), message: e.to_string() })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Index::default(),
            Err(e) => return Err(RegistryError::Index { path: index_path, message: e.to_string() }),
        };
        let entries = index.models.into_iter().map(|e| (e.model_id.clone(), e)).collect();
        Ok(Registry { index_path, entries: RwLock::new(entries), loaded: RwLock::new(HashMap::new()) })
    }

    pub fn index_path(&self) -> &Path {
        &self.index_path
    }

    fn resolve(&self, checkpoint: &Path) -> PathBuf {
        match self.index_path.parent() {
            Some(dir) if checkpoint.is_relative() => dir.join(checkpoint),
            _ => checkpoint.to_owned(),
        }
    }

    /// Validate that `checkpoint` loads, then add or replace `model_id`.
    pub fn register(&self, model_id: &str, checkpoint: &Path) -> Result<ModelRegistryEntry, RegistryError> {
        if !valid_token(model_id) {
            return Err(RegistryError::InvalidId(model_id.into()));
        }
        let ckpt = load_checkpoint::<f32>(&self.resolve(checkpoint))?;
        let entry = ModelRegistryEntry {
            model_id: model_id.into(),
            kind: ckpt.manifest.kind,
            checkpoint: checkpoint.to_owned(),
            manifest: ManifestSummary::from(&ckpt.manifest),
        };
        self.entries.write().unwrap().insert(model_id.into(), entry.clone());
        self.loaded.write().unwrap().insert(model_id.into(), Arc::new(ckpt.model));
        self.save()?;
        Ok(entry)
    }

    pub fn entries(&self) -> Vec<ModelRegistryEntry> {
        self.entries.read().unwrap().values().cloned().collect()
    }

    pub fn entry(&self, model_id: &str) -> Result<ModelRegistryEntry, RegistryError> {
        self.entries.read().unwrap().get(model_id).cloned().ok_or_else(|| RegistryError::UnknownModel(model_id.into()))
    }

    /// The model for `model_id`, loading its checkpoint on first use.
    pub fn model(&self, model_id: &str) -> Result<Arc<Model<f32>>, RegistryError> {
        if let Some(m) = self.loaded.read().unwrap().get(model_id) {
            return Ok(m.clone());
        }
        let entry = self.entry(model_id)?;
        let model = Arc::new(load_checkpoint::<f32>(&self.resolve(&entry.checkpoint))?.model);
        self.loaded.write().unwrap().entry(model_id.into()).or_insert(model.clone());
        Ok(model)
    }

    fn save(&self) -> Result<(), RegistryError> {
        let index = Index { models: self.entries() };
        let err = |message: String| RegistryError::Index { path: self.index_path.clone(), message };
        if let Some(dir) = self.index_path.parent() {
            fs::create_dir_all(dir).map_err(|e| err(e.to_string()))?;
        }
        let bytes = serde_json::to_vec_pretty(&index).map_err(|e| err(e.to_string()))?;
        crate::write_atomic(&self.index_path, &bytes).map_err(|e| err(e.to_string()))
    }
}
