use ndarray::{s, Array2, Array4, ArrayD, Axis, Ix4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Manifest, ModelCheckpoint};
use super::net::{as2, stack_rows};
use super::{build_model, one_hot_batch, ModelConfig, ModelError, ModelKind};
use crate::corpus::{corpus_hash, TileGrid};
use crate::nn::{bce_with_logits, bce_with_logits_const, gaussian_kl, sigmoid, Adam, Layer, Param};
use crate::Scalar;

/// Mean per-segment losses over one epoch. Fields not produced by a model
/// kind are `None`. Reconstruction is binary cross-entropy summed over the
/// 17x16x16 cells of a segment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discriminator: Option<f64>,
}

impl EpochRecord {
    fn is_finite(&self) -> bool {
        [self.reconstruction, self.kl, self.generator, self.discriminator]
            .iter()
            .flatten()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Mean reconstruction loss over epochs `[from, to)`.
    pub fn mean_reconstruction(&self, from: usize, to: usize) -> Option<f64> {
        let vals: Vec<f64> = self.records.get(from..to.min(self.records.len()))?.iter().filter_map(|r| r.reconstruction).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[derive(Default)]
struct Accum {
    rec: f64,
    kl: f64,
    gen: f64,
    disc: f64,
    samples: usize,
}

/// Train a fresh model built from `config` on `grids`.
pub fn train<T: Scalar>(config: &ModelConfig, grids: &[TileGrid]) -> Result<(ModelCheckpoint<T>, TrainingTrace), ModelError> {
    train_with(config, grids, &mut |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with<T: Scalar>(
    config: &ModelConfig,
    grids: &[TileGrid],
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(ModelCheckpoint<T>, TrainingTrace), ModelError> {
    if grids.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut model = build_model::<T>(config)?;
    let data = one_hot_batch::<T>(grids);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut gen_opt = Adam::<T>::new(config.learning_rate);
    let mut disc_opt = Adam::<T>::new(config.learning_rate);
    let mut order: Vec<usize> = (0..grids.len()).collect();
    let mut trace = TrainingTrace::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut acc = Accum::default();
        for batch in order.chunks(config.batch_size) {
            let x = data.select(Axis(0), batch);
            match config.kind {
                ModelKind::Gan => gan_step(&mut model, x, config, &mut rng, &mut gen_opt, &mut disc_opt, &mut acc),
                _ => vae_step(&mut model, x, config, &mut rng, &mut gen_opt, &mut disc_opt, &mut acc),
            }
        }
        let n = acc.samples as f64;
        let has_enc = config.kind.has_encoder();
        let has_disc = config.kind.has_discriminator();
        let record = EpochRecord {
            epoch,
            reconstruction: has_enc.then_some(acc.rec / n),
            kl: has_enc.then_some(acc.kl / n),
            generator: has_disc.then_some(acc.gen / n),
            discriminator: has_disc.then_some(acc.disc / n),
        };
        let finite = record.is_finite();
        on_epoch(&record);
        trace.records.push(record);
        if !finite {
            return Err(ModelError::NonFiniteLoss { epoch, trace });
        }
    }

    let manifest = Manifest::new::<T>(config, trace.records.len(), trace.last().cloned().unwrap_or_default(), corpus_hash(grids));
    Ok((ModelCheckpoint { model, manifest }, trace))
}

fn normal<T: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.sample::<f64, _>(StandardNormal)))
}

fn sigmoid_grad<T: Scalar>(dprobs: ArrayD<T>, probs: &ArrayD<T>) -> ArrayD<T> {
    dprobs * &probs.mapv(|p| p * (T::one() - p))
}

fn zero_grads<T: Scalar>(params: Vec<&mut Param<T>>) {
    params.into_iter().for_each(Param::zero_grad);
}

/// Discriminator input perturbation (instance noise).
struct Noise<T> {
    std: T,
}

impl<T: Scalar> Noise<T> {
    fn apply<R: Rng>(&self, mut x: ArrayD<T>, rng: &mut R) -> ArrayD<T> {
        if self.std > T::zero() {
            x.mapv_inplace(|v| v + self.std * T::of(rng.sample::<f64, _>(StandardNormal)));
        }
        x
    }
}

/// Discriminator update on real vs (detached) fake batches; returns the loss.
fn discriminator_step<T: Scalar, R: Rng>(
    disc: &mut dyn Layer<T>,
    real: ArrayD<T>,
    fake: ArrayD<T>,
    c: &ModelConfig,
    rng: &mut R,
    opt: &mut Adam<T>,
) -> f64 {
    let noise = Noise { std: T::of(c.disc_noise) };
    let (nr, nf) = (T::of_usize(real.shape()[0]), T::of_usize(fake.shape()[0]));
    let out = disc.forward(noise.apply(real, rng));
    let (lr, g) = bce_with_logits_const(&out, T::of(c.real_label));
    disc.backward(g / nr);
    let out = disc.forward(noise.apply(fake, rng));
    let (lf, g) = bce_with_logits_const(&out, T::zero());
    disc.backward(g / nf);
    opt.step(disc.params_mut());
    (lr / nr + lf / nf).as_f64()
}

/// Non-saturating generator loss through `disc`; returns (loss sum, d loss / d probs).
/// Discriminator gradients from this pass are discarded.
fn adversarial_grad<T: Scalar, R: Rng>(
    disc: &mut dyn Layer<T>,
    probs: ArrayD<T>,
    scale: T,
    c: &ModelConfig,
    rng: &mut R,
) -> (T, ArrayD<T>) {
    let noise = Noise { std: T::of(c.disc_noise) };
    let out = disc.forward(noise.apply(probs, rng));
    let (loss, g) = bce_with_logits_const(&out, T::one());
    let dprobs = disc.backward(g * scale);
    zero_grads(disc.params_mut());
    (loss, dprobs)
}

fn gan_step<T: Scalar>(
    model: &mut super::Model<T>,
    x: Array4<T>,
    c: &ModelConfig,
    rng: &mut ChaCha8Rng,
    gen_opt: &mut Adam<T>,
    disc_opt: &mut Adam<T>,
    acc: &mut Accum,
) {
    let n = x.shape()[0];
    let inv_n = T::one() / T::of_usize(n);
    let z = normal::<T, _>(n, c.latent_dim, rng);
    let logits = model.decoder.forward(z.into_dyn());
    let probs = logits.mapv(sigmoid);
    let disc = model.discriminator.as_mut().expect("GAN has a discriminator");
    acc.disc += discriminator_step(disc, x.into_dyn(), probs.clone(), c, rng, disc_opt) * n as f64;
    let (gl, dprobs) = adversarial_grad(disc, probs.clone(), inv_n, c, rng);
    acc.gen += gl.as_f64();
    model.decoder.backward(sigmoid_grad(dprobs, &probs));
    gen_opt.step(model.decoder.params_mut());
    acc.samples += n;
}

fn vae_step<T: Scalar>(
    model: &mut super::Model<T>,
    x: Array4<T>,
    c: &ModelConfig,
    rng: &mut ChaCha8Rng,
    gen_opt: &mut Adam<T>,
    disc_opt: &mut Adam<T>,
    acc: &mut Accum,
) {
    let n = x.shape()[0];
    let inv_n = T::one() / T::of_usize(n);
    let kl_w = T::of(c.kl_weight);
    let enc = model.encoder.as_mut().expect("VAE has an encoder");
    let (mu, lv) = enc.forward(x.clone().into_dyn());
    let eps = normal::<T, _>(n, c.latent_dim, rng);
    let std = lv.mapv(|v| (v * T::of(0.5)).exp());
    let z = &mu + &(&std * &eps);
    let zin = if model.discriminator.is_some() { stack_rows(&z, &normal(n, c.latent_dim, rng)) } else { z };
    let logits = model.decoder.forward(zin.into_dyn()).into_dimensionality::<Ix4>().expect("4-d logits");

    let rec_logits = logits.slice(s![..n, .., .., ..]).to_owned().into_dyn();
    let (rec, drec) = bce_with_logits(&rec_logits, &x.clone().into_dyn());
    let (kl, dmu_kl, dlv_kl) = gaussian_kl(&mu, &lv);
    acc.rec += rec.as_f64();
    acc.kl += kl.as_f64();

    let mut dlogits = Array4::<T>::zeros(logits.raw_dim());
    dlogits.slice_mut(s![..n, .., .., ..]).assign(&(drec * inv_n));
    let mut dlogits = dlogits.into_dyn();
    if let Some(disc) = model.discriminator.as_mut() {
        let probs = logits.mapv(sigmoid).into_dyn();
        acc.disc += discriminator_step(disc, x.into_dyn(), probs.clone(), c, rng, disc_opt) * n as f64;
        let (gl, dprobs) = adversarial_grad(disc, probs.clone(), T::of(c.adv_weight) * inv_n, c, rng);
        acc.gen += gl.as_f64();
        dlogits = dlogits + sigmoid_grad(dprobs, &probs);
    }

    let dz = as2(model.decoder.backward(dlogits));
    let dz = dz.slice(s![..n, ..]).to_owned();
    let dmu = &dz + &(dmu_kl * (kl_w * inv_n));
    let dlv = &dz * &eps * &std * T::of(0.5) + dlv_kl * (kl_w * inv_n);
    let enc = model.encoder.as_mut().expect("VAE has an encoder");
    enc.backward(dmu, dlv);
    let mut params = enc.params_mut();
    params.extend(model.decoder.params_mut());
    gen_opt.step(params);
    acc.samples += n;
}
