use ndarray::{concatenate, Array2, Array4, ArrayD, Axis, Ix2, Ix4};
use rand::Rng;

use super::{ModelConfig, ModelKind};
use crate::corpus::{NUM_TILES, SEGMENT_SIZE};
use crate::nn::{sigmoid, BatchNorm, Conv2d, ConvTranspose2d, Flatten, Layer, LeakyRelu, Linear, Param, Sequential, Unflatten};
use crate::Scalar;

const FEATURE_SIDE: usize = SEGMENT_SIZE / 4;

/// Two stride-2 convolutions with batch norm and LeakyReLU, flattened.
fn conv_trunk<T: Scalar, R: Rng + ?Sized>(c: &ModelConfig, input_grad: bool, rng: &mut R) -> Sequential<T> {
    let [w1, w2] = c.channels;
    let first = Conv2d::new(NUM_TILES, w1, 4, 2, 1, rng);
    Sequential::new()
        .push(if input_grad { first } else { first.without_input_grad() })
        .push(BatchNorm::new(w1))
        .push(LeakyRelu::new(c.leaky_slope))
        .push(Conv2d::new(w1, w2, 4, 2, 1, rng))
        .push(BatchNorm::new(w2))
        .push(LeakyRelu::new(c.leaky_slope))
        .push(Flatten::default())
}

fn trunk_features(c: &ModelConfig) -> usize {
    c.channels[1] * FEATURE_SIDE * FEATURE_SIDE
}

/// Segment -> (mean, log-variance).
pub struct Encoder<T> {
    pub(crate) trunk: Sequential<T>,
    pub(crate) mean: Linear<T>,
    pub(crate) logvar: Linear<T>,
}

impl<T: Scalar> Encoder<T> {
    fn new<R: Rng + ?Sized>(c: &ModelConfig, rng: &mut R) -> Self {
        let trunk = conv_trunk(c, false, rng);
        let f = trunk_features(c);
        Encoder { trunk, mean: Linear::new(f, c.latent_dim, rng), logvar: Linear::new(f, c.latent_dim, rng) }
    }

    pub(crate) fn forward(&mut self, x: ArrayD<T>) -> (Array2<T>, Array2<T>) {
        let h = self.trunk.forward(x);
        let mu = self.mean.forward(h.clone());
        let lv = self.logvar.forward(h);
        (as2(mu), as2(lv))
    }

    pub(crate) fn backward(&mut self, dmu: Array2<T>, dlogvar: Array2<T>) {
        let dh = self.mean.backward(dmu.into_dyn()) + self.logvar.backward(dlogvar.into_dyn());
        self.trunk.backward(dh);
    }

    pub fn infer(&self, x: ArrayD<T>) -> (Array2<T>, Array2<T>) {
        let h = self.trunk.infer(x);
        (as2(self.mean.infer(h.clone())), as2(self.logvar.infer(h)))
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.trunk.params_mut();
        p.extend(self.mean.params_mut());
        p.extend(self.logvar.params_mut());
        p
    }
}

/// Latent -> per-cell logits of shape (N, 17, 16, 16).
fn decoder<T: Scalar, R: Rng + ?Sized>(c: &ModelConfig, rng: &mut R) -> Sequential<T> {
    let [w1, w2] = c.channels;
    Sequential::new()
        .push(Linear::new(c.latent_dim, trunk_features(c), rng))
        .push(Unflatten::new(w2, FEATURE_SIDE, FEATURE_SIDE))
        .push(BatchNorm::new(w2))
        .push(LeakyRelu::relu())
        .push(Conv2d::new(w2, w2, 3, 1, 1, rng))
        .push(BatchNorm::new(w2))
        .push(LeakyRelu::relu())
        .push(ConvTranspose2d::new(w2, w1, 4, 2, 1, rng))
        .push(BatchNorm::new(w1))
        .push(LeakyRelu::relu())
        .push(ConvTranspose2d::new(w1, NUM_TILES, 4, 2, 1, rng))
}

fn discriminator<T: Scalar, R: Rng + ?Sized>(c: &ModelConfig, rng: &mut R) -> Sequential<T> {
    let f = trunk_features(c);
    conv_trunk(c, true, rng).push(Linear::new(f, 1, rng))
}

pub(crate) fn as2<T: Scalar>(x: ArrayD<T>) -> Array2<T> {
    x.into_dimensionality::<Ix2>().expect("2-d activations")
}

/// A VAE, GAN or VAE-GAN. Immutable use (`encode_mean`, `decode_*`) runs
/// batch norm in evaluation mode and is safe to share across threads.
pub struct Model<T> {
    pub(crate) config: ModelConfig,
    pub(crate) encoder: Option<Encoder<T>>,
    pub(crate) decoder: Sequential<T>,
    pub(crate) discriminator: Option<Sequential<T>>,
}

impl<T: Scalar> Model<T> {
    pub(crate) fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        let encoder = config.kind.has_encoder().then(|| Encoder::new(&config, rng));
        let decoder = decoder(&config, rng);
        let discriminator = config.kind.has_discriminator().then(|| discriminator(&config, rng));
        Model { config, encoder, decoder, discriminator }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn has_encoder(&self) -> bool {
        self.encoder.is_some()
    }

    /// Posterior means for a batch of one-hot segments (N, 17, 16, 16).
    /// `None` when the model has no encoder.
    pub fn encode_mean(&self, x: &Array4<T>) -> Option<Array2<T>> {
        self.encoder.as_ref().map(|e| e.infer(x.clone().into_dyn()).0)
    }

    /// Posterior means and log-variances.
    pub fn encode_posterior(&self, x: &Array4<T>) -> Option<(Array2<T>, Array2<T>)> {
        self.encoder.as_ref().map(|e| e.infer(x.clone().into_dyn()))
    }

    /// Decoder logits (N, 17, 16, 16).
    pub fn decode_logits(&self, z: &Array2<T>) -> Array4<T> {
        assert_eq!(z.ncols(), self.config.latent_dim, "latent width");
        self.decoder.infer(z.clone().into_dyn()).into_dimensionality::<Ix4>().expect("4-d decoder output")
    }

    /// Per-cell tile probabilities in (0, 1).
    pub fn decode_probs(&self, z: &Array2<T>) -> Array4<T> {
        self.decode_logits(z).mapv(sigmoid)
    }

    /// Discriminator logits for a batch; `None` without a discriminator.
    pub fn discriminate(&self, x: &Array4<T>) -> Option<Array2<T>> {
        self.discriminator.as_ref().map(|d| as2(d.infer(x.clone().into_dyn())))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Every parameter and buffer in a fixed order.
    pub(crate) fn tensors(&self) -> Vec<&ArrayD<T>> {
        let mut out: Vec<&ArrayD<T>> = Vec::new();
        if let Some(e) = &self.encoder {
            out.extend(e.trunk.state());
            out.extend(e.mean.state());
            out.extend(e.logvar.state());
        }
        out.extend(self.decoder.state());
        if let Some(d) = &self.discriminator {
            out.extend(d.state());
        }
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut ArrayD<T>> {
        let mut out: Vec<&mut ArrayD<T>> = Vec::new();
        if let Some(e) = &mut self.encoder {
            out.extend(e.trunk.state_mut());
            out.extend(e.mean.state_mut());
            out.extend(e.logvar.state_mut());
        }
        out.extend(self.decoder.state_mut());
        if let Some(d) = &mut self.discriminator {
            out.extend(d.state_mut());
        }
        out
    }
}

pub(crate) fn stack_rows<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    concatenate(Axis(0), &[a.view(), b.view()]).expect("matching widths")
}
