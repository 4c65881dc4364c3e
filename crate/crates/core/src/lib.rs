//! Joint latent design space over 16x16 segments of Super Mario Bros. and
//! Kid Icarus: corpus handling, segment metrics, VAE/GAN/VAE-GAN training,
//! latent sampling and interpolation, CMA-ES evolution and analysis.

pub mod analysis;
pub mod corpus;
pub mod evolve;
pub mod latent;
pub mod metrics;
pub mod models;
pub mod nn;
mod scalar;

pub use scalar::Scalar;

pub type Model32 = models::Model<f32>;
pub type Model64 = models::Model<f64>;
pub type Checkpoint32 = models::ModelCheckpoint<f32>;
pub type Checkpoint64 = models::ModelCheckpoint<f64>;
pub type Latent32 = latent::LatentVector<f32>;
pub type Latent64 = latent::LatentVector<f64>;
pub type EvolutionResult32 = evolve::EvolutionResult<f32>;
pub type EvolutionResult64 = evolve::EvolutionResult<f64>;
