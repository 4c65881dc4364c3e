//! The three generative models, their training loops and checkpoints.

mod checkpoint;
mod net;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array4, ArrayView4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_checkpoint_of_kind, manifest_path, save_checkpoint, Manifest, ModelCheckpoint};
pub use net::{Encoder, Model};
pub use train::{train, train_with, EpochRecord, TrainingTrace};

use crate::corpus::{argmax_decode, TileGrid, NUM_TILES, SEGMENT_SIZE};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "VAE")]
    Vae,
    #[serde(rename = "GAN")]
    Gan,
    #[serde(rename = "VAEGAN")]
    VaeGan,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Vae, ModelKind::Gan, ModelKind::VaeGan];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Vae => "VAE",
            ModelKind::Gan => "GAN",
            ModelKind::VaeGan => "VAEGAN",
        }
    }

    pub fn has_encoder(self) -> bool {
        self != ModelKind::Gan
    }

    pub fn has_discriminator(self) -> bool {
        self != ModelKind::Vae
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "VAE" => Ok(ModelKind::Vae),
            "GAN" => Ok(ModelKind::Gan),
            "VAEGAN" => Ok(ModelKind::VaeGan),
            _ => Err(ModelError::InvalidConfig(format!("unknown model kind {s:?}"))),
        }
    }
}

pub const DEFAULT_LATENT_DIM: usize = 64;
pub const DEFAULT_CHANNELS: [usize; 2] = [64, 128];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub latent_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub leaky_slope: f64,
    pub kl_weight: f64,
    pub adv_weight: f64,
    /// Feature maps after the first and second strided encoder layers.
    pub channels: [usize; 2],
    /// Standard deviation of Gaussian noise added to every discriminator input.
    pub disc_noise: f64,
    /// Discriminator target for real segments (one-sided label smoothing).
    pub real_label: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Vae,
            latent_dim: DEFAULT_LATENT_DIM,
            epochs: 10_000,
            learning_rate: 0.001,
            batch_size: 32,
            seed: 0,
            leaky_slope: 0.2,
            kl_weight: 1.0,
            adv_weight: 1.0,
            channels: DEFAULT_CHANNELS,
            disc_noise: 0.1,
            real_label: 0.9,
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_owned()));
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.channels.contains(&0) {
            return bad("channel widths must be positive");
        }
        if !(self.leaky_slope.is_finite() && self.kl_weight.is_finite() && self.adv_weight.is_finite()) {
            return bad("weights must be finite");
        }
        if !(self.disc_noise.is_finite() && self.disc_noise >= 0.0) {
            return bad("disc_noise must be non-negative");
        }
        if !(self.real_label > 0.0 && self.real_label <= 1.0) {
            return bad("real_label must lie in (0, 1]");
        }
        if self.kl_weight < 0.0 || self.adv_weight < 0.0 {
            return bad("loss weights must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, trace: TrainingTrace },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch { expected: ModelKind, found: ModelKind },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Untrained model with deterministic initial parameters for `config.seed`.
pub fn build_model<T: Scalar>(config: &ModelConfig) -> Result<Model<T>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(Model::new(config.clone(), &mut rng))
}

/// Stack one-hot encodings of `grids` into an (N, 17, 16, 16) batch.
pub fn one_hot_batch<T: Scalar>(grids: &[TileGrid]) -> Array4<T> {
    let cell = NUM_TILES * SEGMENT_SIZE * SEGMENT_SIZE;
    let mut out = Array4::<T>::zeros((grids.len(), NUM_TILES, SEGMENT_SIZE, SEGMENT_SIZE));
    let slice = out.as_slice_mut().expect("fresh array");
    for (g, chunk) in grids.iter().zip(slice.chunks_mut(cell)) {
        g.one_hot().write_into(chunk);
    }
    out
}

/// Argmax-decode each sample of an (N, 17, 16, 16) batch.
pub fn decode_batch<T: Scalar>(batch: ArrayView4<T>) -> Vec<TileGrid> {
    batch
        .outer_iter()
        .map(|t| argmax_decode(t).expect("decoder emits 17x16x16"))
        .collect()
}

/// Narrow channel widths used for the bundled reference runs on small machines.
pub const DESK_CHANNELS: [usize; 2] = [16, 32];

/// File name identifying a config: kind, seed, epochs, widths and a short
/// hash over the full config.
pub fn checkpoint_name(config: &ModelConfig) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(serde_json::to_vec(config).expect("config serializes"));
    format!(
        "{}-s{}-e{}-c{}x{}-{}.ckpt",
        config.kind.as_str().to_ascii_lowercase(),
        config.seed,
        config.epochs,
        config.channels[0],
        config.channels[1],
        &hex::encode(digest)[..8]
    )
}

/// Load the checkpoint for `config` from `dir` if one exists and was trained
/// on `grids`; otherwise train, save and return it.
pub fn load_or_train<T: Scalar>(
    dir: &std::path::Path,
    config: &ModelConfig,
    grids: &[TileGrid],
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<ModelCheckpoint<T>, ModelError> {
    let path = dir.join(checkpoint_name(config));
    if path.exists() {
        if let Ok(ckpt) = load_checkpoint::<T>(&path) {
            if ckpt.manifest.config == *config && ckpt.manifest.corpus_hash == crate::corpus::corpus_hash(grids) {
                return Ok(ckpt);
            }
        }
    }
    let (ckpt, trace) = train_with::<T>(config, grids, on_epoch)?;
    save_checkpoint(&ckpt, &path)?;
    let trace_path = path.with_extension("trace.json");
    let json = serde_json::to_vec(&trace).expect("trace serializes");
    std::fs::write(&trace_path, json).map_err(|source| ModelError::Io { path: trace_path.display().to_string(), source })?;
    Ok(ckpt)
}

/// Training trace stored next to a checkpoint by [`load_or_train`].
pub fn load_trace(checkpoint: &std::path::Path) -> Result<TrainingTrace, ModelError> {
    let path = checkpoint.with_extension("trace.json");
    let text = std::fs::read(&path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    serde_json::from_slice(&text).map_err(|e| ModelError::CorruptCheckpoint(format!("trace: {e}")))
}
