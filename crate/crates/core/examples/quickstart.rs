//! Train a small VAE for a few hundred epochs, then sample, interpolate and
//! evolve segments with it.
//!
//! ```text
//! cargo run --release -p levelblend --example quickstart
//! ```

use levelblend::corpus::{Corpus, Game};
use levelblend::evolve::{evolve_segment, EvolutionSpec, Objective};
use levelblend::latent::{decode_all, interpolate, sample_latents};
use levelblend::metrics::SegmentMetrics;
use levelblend::models::{train_with, ModelConfig, ModelKind, DESK_CHANNELS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = Corpus::bundled();
    println!("{} SMB + {} KI segments", corpus.count(Game::Smb), corpus.count(Game::Ki));

    let cfg = ModelConfig { epochs: 300, channels: DESK_CHANNELS, ..ModelConfig::new(ModelKind::Vae) };
    let (ckpt, trace) = train_with::<f32>(&cfg, &corpus.grids(), &mut |r| {
        if r.epoch % 50 == 0 {
            println!("epoch {:>4}: reconstruction {:.2}", r.epoch, r.reconstruction.unwrap_or(f64::NAN));
        }
    })?;
    let model = ckpt.model;
    println!("final reconstruction {:.2}", trace.last().and_then(|r| r.reconstruction).unwrap_or(f64::NAN));

    let zs = sample_latents::<f32>(3, 7)?;
    for (i, g) in decode_all(&model, &zs)?.iter().enumerate() {
        println!("\nsample {i}: {:?}\n{g}", SegmentMetrics::of(g).blend_class);
    }

    let smb = corpus.of_game(Game::Smb).next().unwrap().grid;
    let ki = corpus.of_game(Game::Ki).next().unwrap().grid;
    let path = interpolate(&model, &smb, &ki, 5)?;
    println!("\nmidpoint of SMB -> KI interpolation:\n{}", path[2]);

    let spec = EvolutionSpec { budget: 1600, ..EvolutionSpec::target(Objective::SmbProportion, 50.0, 1) };
    let res = evolve_segment(&model, &spec)?;
    println!("\nevolved toward 50% SMB: achieved {:?} after {} evaluations\n{}", res.achieved, res.evaluations, res.grid);
    Ok(())
}
