//! Checkpoint = binary weights blob plus a JSON manifest sidecar.
//!
//! Blob layout (little endian): magic `LVBLCKPT`, format version (u32),
//! scalar name, config JSON, tensor count, then per tensor its rank, dims
//! (u64 each) and values; a trailing SHA-256 of all preceding bytes.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::net::Model;
use super::train::EpochRecord;
use super::{build_model, ModelConfig, ModelError, ModelKind};
use crate::Scalar;

const MAGIC: &[u8; 8] = b"LVBLCKPT";
const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ModelKind,
    pub epochs_completed: usize,
    pub final_losses: EpochRecord,
    pub corpus_hash: String,
    pub created_at: DateTime<Utc>,
    pub scalar: String,
    pub config: ModelConfig,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Manifest {
    pub(crate) fn new<T: Scalar>(config: &ModelConfig, epochs: usize, final_losses: EpochRecord, corpus_hash: String) -> Self {
        let mut notes = Vec::new();
        if config.kind == ModelKind::VaeGan {
            notes.push("reconstruction term is per-cell binary cross-entropy in tile space, not discriminator feature space".to_owned());
        }
        Manifest {
            kind: config.kind,
            epochs_completed: epochs,
            final_losses,
            corpus_hash,
            created_at: Utc::now(),
            scalar: T::NAME.to_owned(),
            config: config.clone(),
            notes,
        }
    }
}

/// A trained model together with its manifest.
pub struct ModelCheckpoint<T> {
    pub model: Model<T>,
    pub manifest: Manifest,
}

/// Sidecar manifest location for a blob path: `<path>.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io { path: path.display().to_string(), source }
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptCheckpoint(msg.into())
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

pub(crate) fn encode_blob<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_bytes(&mut out, T::NAME.as_bytes());
    put_bytes(&mut out, &serde_json::to_vec(model.config()).expect("config serializes"));
    let tensors = model.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.iter() {
            v.write_le(&mut out);
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes(&mut self) -> Result<&'a [u8], ModelError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

pub(crate) fn decode_blob<T: Scalar>(blob: &[u8]) -> Result<Model<T>, ModelError> {
    if blob.len() < MAGIC.len() + DIGEST_LEN || &blob[..MAGIC.len()] != MAGIC {
        return Err(corrupt("missing magic header"));
    }
    let (body, digest) = blob.split_at(blob.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let scalar = r.bytes()?;
    if scalar != T::NAME.as_bytes() {
        return Err(corrupt(format!(
            "weights stored as {}, requested {}",
            String::from_utf8_lossy(scalar),
            T::NAME
        )));
    }
    let config: ModelConfig = serde_json::from_slice(r.bytes()?).map_err(|e| corrupt(format!("config: {e}")))?;
    let mut model = build_model::<T>(&config).map_err(|e| corrupt(e.to_string()))?;
    let count = r.u32()? as usize;
    let mut targets = model.tensors_mut();
    if count != targets.len() {
        return Err(corrupt(format!("expected {} tensors, found {count}", targets.len())));
    }
    for (i, t) in targets.iter_mut().enumerate() {
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if dims != t.shape() {
            return Err(corrupt(format!("tensor {i}: shape {dims:?} != {:?}", t.shape())));
        }
        let raw = r.take(t.len() * T::BYTES)?;
        for (v, chunk) in t.iter_mut().zip(raw.chunks_exact(T::BYTES)) {
            *v = T::read_le(chunk);
        }
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(model)
}

/// Write the weights blob to `path` and the manifest to [`manifest_path`].
pub fn save_checkpoint<T: Scalar>(ckpt: &ModelCheckpoint<T>, path: &Path) -> Result<(), ModelError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, encode_blob(&ckpt.model)).map_err(io_err(path))?;
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(&ckpt.manifest).expect("manifest serializes");
    fs::write(&mpath, json).map_err(io_err(&mpath))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelCheckpoint<T>, ModelError> {
    let blob = fs::read(path).map_err(io_err(path))?;
    let model = decode_blob::<T>(&blob)?;
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| corrupt(format!("manifest {}: {e}", mpath.display())))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupt(format!("manifest: {e}")))?;
    if manifest.kind != model.kind() {
        return Err(ModelError::KindMismatch { expected: manifest.kind, found: model.kind() });
    }
    Ok(ModelCheckpoint { model, manifest })
}

/// Load and require a specific model kind.
pub fn load_checkpoint_of_kind<T: Scalar>(path: &Path, kind: ModelKind) -> Result<ModelCheckpoint<T>, ModelError> {
    let ckpt = load_checkpoint::<T>(path)?;
    if ckpt.model.kind() != kind {
        return Err(ModelError::KindMismatch { expected: kind, found: ckpt.model.kind() });
    }
    Ok(ckpt)
}
