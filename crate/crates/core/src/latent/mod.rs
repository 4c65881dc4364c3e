//! Designer-facing latent space operations: sampling, encoding, decoding
//! and interpolation.

use std::fmt;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::TileGrid;
use crate::models::{decode_batch, one_hot_batch, Model, DEFAULT_LATENT_DIM};
use crate::Scalar;

/// Latent vectors decoded per forward pass.
const DECODE_CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatentError {
    #[error("model has no encoder")]
    NoEncoder,
    #[error("latent vector has a non-finite entry at index {0}")]
    NonFiniteLatent(usize),
    #[error("latent vector has {found} entries, model expects {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("interpolation needs at least 2 steps, got {0}")]
    InvalidSteps(usize),
    #[error("sample count must be at least 1")]
    InvalidCount,
}

/// A point in the learned design space. Entries are finite.
#[derive(Clone, PartialEq)]
pub struct LatentVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> LatentVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, LatentError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LatentError::NonFiniteLatent(i));
        }
        Ok(LatentVector { values })
    }

    pub fn zeros(dim: usize) -> Self {
        LatentVector { values: vec![T::zero(); dim] }
    }

    pub fn from_f64(values: &[f64]) -> Result<Self, LatentError> {
        Self::new(values.iter().map(|&v| T::of(v)).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64()).collect()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    /// `wa * a + wb * b`, entrywise.
    fn blend(a: &Self, wa: T, b: &Self, wb: T) -> Self {
        let values = a.values.iter().zip(&b.values).map(|(&x, &y)| wa * x + wb * y).collect();
        LatentVector { values }
    }
}

impl<T: Scalar> fmt::Debug for LatentVector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.values).finish()
    }
}

impl<T: Scalar> Serialize for LatentVector<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.values.serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for LatentVector<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let values = Vec::<T>::deserialize(d)?;
        LatentVector::new(values).map_err(D::Error::custom)
    }
}

/// `count` i.i.d. standard-normal vectors of the default width.
pub fn sample_latents<T: Scalar>(count: usize, seed: u64) -> Result<Vec<LatentVector<T>>, LatentError> {
    sample_latents_dim(count, seed, DEFAULT_LATENT_DIM)
}

/// Vectors are drawn in order from one stream, so a smaller count yields a
/// prefix of a larger one.
pub fn sample_latents_dim<T: Scalar>(count: usize, seed: u64, dim: usize) -> Result<Vec<LatentVector<T>>, LatentError> {
    if count == 0 {
        return Err(LatentError::InvalidCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| LatentVector { values: (0..dim).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))).collect() })
        .collect())
}

fn check<T: Scalar>(model: &Model<T>, z: &LatentVector<T>) -> Result<(), LatentError> {
    if z.len() != model.latent_dim() {
        return Err(LatentError::WrongLength { expected: model.latent_dim(), found: z.len() });
    }
    match z.values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LatentError::NonFiniteLatent(i)),
        None => Ok(()),
    }
}

/// Posterior means for a list of segments.
pub fn encode_batch<T: Scalar>(model: &Model<T>, grids: &[TileGrid]) -> Result<Vec<LatentVector<T>>, LatentError> {
    if !model.has_encoder() {
        return Err(LatentError::NoEncoder);
    }
    let mut out = Vec::with_capacity(grids.len());
    for chunk in grids.chunks(DECODE_CHUNK) {
        let mu = model.encode_mean(&one_hot_batch(chunk)).ok_or(LatentError::NoEncoder)?;
        out.extend(mu.axis_iter(Axis(0)).map(|row| LatentVector { values: row.to_vec() }));
    }
    Ok(out)
}

/// Deterministic encoding: the encoder's mean head.
pub fn encode<T: Scalar>(model: &Model<T>, grid: &TileGrid) -> Result<LatentVector<T>, LatentError> {
    Ok(encode_batch(model, std::slice::from_ref(grid))?.remove(0))
}

pub fn decode_all<T: Scalar>(model: &Model<T>, zs: &[LatentVector<T>]) -> Result<Vec<TileGrid>, LatentError> {
    for z in zs {
        check(model, z)?;
    }
    let dim = model.latent_dim();
    let mut out = Vec::with_capacity(zs.len());
    for chunk in zs.chunks(DECODE_CHUNK) {
        let flat: Vec<T> = chunk.iter().flat_map(|z| z.values.iter().copied()).collect();
        let batch = Array2::from_shape_vec((chunk.len(), dim), flat).expect("checked widths");
        out.extend(decode_batch(model.decode_probs(&batch).view()));
    }
    Ok(out)
}

/// Argmax of the decoder's per-cell probabilities.
pub fn decode<T: Scalar>(model: &Model<T>, z: &LatentVector<T>) -> Result<TileGrid, LatentError> {
    Ok(decode_all(model, std::slice::from_ref(z))?.remove(0))
}

/// Points `(1 - t) a + t b` for `t = 0, 1/(steps-1), ..., 1`. Weights are
/// formed as `(steps-1-i)/(steps-1)` and `i/(steps-1)` so that reversing the
/// endpoints reverses the path exactly.
pub fn lerp_path<T: Scalar>(a: &LatentVector<T>, b: &LatentVector<T>, steps: usize) -> Result<Vec<LatentVector<T>>, LatentError> {
    if steps < 2 {
        return Err(LatentError::InvalidSteps(steps));
    }
    if a.len() != b.len() {
        return Err(LatentError::WrongLength { expected: a.len(), found: b.len() });
    }
    let last = T::of_usize(steps - 1);
    Ok((0..steps)
        .map(|i| LatentVector::blend(a, T::of_usize(steps - 1 - i) / last, b, T::of_usize(i) / last))
        .collect())
}

/// Decode a linear path between two latent vectors. Works for every model kind.
pub fn interpolate_latent<T: Scalar>(
    model: &Model<T>,
    a: &LatentVector<T>,
    b: &LatentVector<T>,
    steps: usize,
) -> Result<Vec<TileGrid>, LatentError> {
    check(model, a)?;
    check(model, b)?;
    decode_all(model, &lerp_path(a, b, steps)?)
}

/// Encode both segments and decode the linear path between their codes.
pub fn interpolate<T: Scalar>(model: &Model<T>, a: &TileGrid, b: &TileGrid, steps: usize) -> Result<Vec<TileGrid>, LatentError> {
    if steps < 2 {
        return Err(LatentError::InvalidSteps(steps));
    }
    let codes = encode_batch(model, &[*a, *b])?;
    interpolate_latent(model, &codes[0], &codes[1], steps)
}

/// decode(encode(grid)).
pub fn reconstruct<T: Scalar>(model: &Model<T>, grids: &[TileGrid]) -> Result<Vec<TileGrid>, LatentError> {
    decode_all(model, &encode_batch(model, grids)?)
}

/// Fraction of cells reproduced by `decode(encode(g))` over `grids`.
pub fn reconstruction_accuracy<T: Scalar>(model: &Model<T>, grids: &[TileGrid]) -> Result<f64, LatentError> {
    let back = reconstruct(model, grids)?;
    let total: f64 = grids.iter().zip(&back).map(|(g, r)| g.agreement(r)).sum();
    Ok(total / grids.len().max(1) as f64)
}
