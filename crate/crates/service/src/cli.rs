//! Command line interface: `train`, `register`, `sample`, `evolve`,
//! `analyze` and `serve`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use levelblend::analysis::{
    emit_artifacts, evolution_accuracy_with, expressive_range, sanitize_label, AccuracyConfig, CornerData,
};
use levelblend::corpus::Corpus;
use levelblend::evolve::{evolve_segment, EvolutionSpec, Objective};
use levelblend::latent::{decode_all, sample_latents_dim};
use levelblend::metrics::SegmentMetrics;
use levelblend::models::{
    checkpoint_name, load_checkpoint, save_checkpoint, train_with, Model, ModelConfig, ModelKind,
};

use crate::api::{self, AppState};
use crate::registry::Registry;
use crate::sessions::SessionStore;
use crate::{DataDir, DATA_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "levelblend", version, about = "Blend Super Mario Bros. and Kid Icarus level segments")]
pub struct Cli {
    /// Directory holding the model registry, checkpoints, sessions and analysis output.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "levelblend-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on the bundled corpus and register it.
    Train(TrainArgs),
    /// Register an existing checkpoint under a model id.
    Register(RegisterArgs),
    /// Decode random latent vectors.
    Sample(SampleArgs),
    /// Evolve one segment toward a metric target or tile maximum.
    Evolve(EvolveArgs),
    /// Run an analysis experiment and write its artifacts.
    Analyze(AnalyzeArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: ModelKind,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path; defaults to `<data-dir>/models/<generated name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Conv widths as `W1xW2`.
    #[arg(long, value_parser = parse_channels)]
    pub channels: Option<[usize; 2]>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// JSON `ModelConfig` used as the base; other flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Registry id; defaults to the checkpoint file stem.
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Registry id or checkpoint path.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Objective,
    /// Target percentage for metric objectives.
    #[arg(long)]
    pub target: Option<f64>,
    /// Tile id for MAX_TILE.
    #[arg(long)]
    pub tile: Option<u8>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = levelblend::evolve::DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = levelblend::evolve::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Range,
    Corner,
    Accuracy,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    /// Samples for `range` and `corner`.
    #[arg(long, default_value_t = levelblend::analysis::DEFAULT_SAMPLES)]
    pub n: usize,
    /// Evolution runs per (objective, target) for `accuracy`.
    #[arg(long, default_value_t = levelblend::analysis::DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = levelblend::evolve::DEFAULT_BUDGET)]
    pub budget: usize,
    /// Output directory; defaults to `<data-dir>/analysis`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Label used in file names; defaults to the model id.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Registry index; defaults to `<data-dir>/registry.json`.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long, default_value_t = api::DEFAULT_BUDGET_CAP)]
    pub budget_cap: usize,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse::<Objective>().map_err(|e| e.to_string())
}

fn parse_channels(s: &str) -> Result<[usize; 2], String> {
    let bad = || format!("expected W1xW2, got `{s}`");
    let (a, b) = s.split_once(['x', 'X', ',']).ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let data = DataDir::new(&cli.data_dir);
    match cli.command {
        Command::Train(a) => train(&data, a, out),
        Command::Register(a) => {
            let entry = Registry::open(data.registry_path())?.register(&a.id, &a.checkpoint)?;
            writeln!(out, "registered {} ({}) -> {}", entry.model_id, entry.kind, entry.checkpoint.display())?;
            Ok(())
        }
        Command::Sample(a) => sample(&data, a, out),
        Command::Evolve(a) => evolve(&data, a, out),
        Command::Analyze(a) => analyze(&data, a, out),
        Command::Serve(a) => serve(&data, a),
    }
}

/// Load a model by registry id, or directly when `spec` names a checkpoint file.
pub fn resolve_model(data: &DataDir, spec: &str) -> Result<(String, Arc<Model<f32>>)> {
    let path = Path::new(spec);
    if path.is_file() {
        let ckpt = load_checkpoint::<f32>(path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok((sanitize_label(&stem), Arc::new(ckpt.model)));
    }
    let registry = Registry::open(data.registry_path())?;
    Ok((spec.to_string(), registry.model(spec)?))
}

fn train(data: &DataDir, a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_slice(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => ModelConfig::new(a.kind),
    };
    cfg.kind = a.kind;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.channels {
        cfg.channels = v;
    }
    if let Some(v) = a.latent_dim {
        cfg.latent_dim = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    cfg.validate()?;
    let path = a.out.unwrap_or_else(|| data.models_dir().join(checkpoint_name(&cfg)));
    let every = (cfg.epochs / 20).max(1);
    let epochs = cfg.epochs;
    let (ckpt, trace) = train_with::<f32>(&cfg, &Corpus::bundled().grids(), &mut |r| {
        if r.epoch % every == 0 || r.epoch + 1 == epochs {
            eprintln!("epoch {:>6}  {}", r.epoch, losses(r));
        }
    })?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(&ckpt, &path)?;
    std::fs::write(path.with_extension("trace.json"), serde_json::to_vec(&trace)?)?;
    let id = a.id.unwrap_or_else(|| sanitize_label(&path.file_stem().unwrap_or_default().to_string_lossy()));
    let abs = std::path::absolute(&path)?;
    Registry::open(data.registry_path())?.register(&id, &abs)?;
    writeln!(out, "trained {} for {} epochs -> {} (model id `{id}`)", cfg.kind, cfg.epochs, path.display())?;
    if let Some(last) = trace.last() {
        writeln!(out, "final losses: {}", losses(last))?;
    }
    Ok(())
}

fn losses(r: &levelblend::models::EpochRecord) -> String {
    let mut parts = Vec::new();
    for (name, v) in [("rec", r.reconstruction), ("kl", r.kl), ("gen", r.generator), ("disc", r.discriminator)] {
        if let Some(v) = v {
            parts.push(format!("{name} {v:.4}"));
        }
    }
    parts.join("  ")
}

fn metrics_line(m: &SegmentMetrics) -> String {
    let p = m.smb_proportion_pct.map_or("undefined".into(), |v| format!("{v:.2}"));
    format!(
        "density {:.2}  difficulty {:.2}  nonlinearity {:.2}  smb_proportion {p}  class {}",
        m.density_pct, m.difficulty_pct, m.nonlinearity_pct, m.blend_class
    )
}

fn sample(data: &DataDir, a: SampleArgs, out: &mut dyn Write) -> Result<()> {
    let (_, model) = resolve_model(data, &a.model)?;
    let zs = sample_latents_dim::<f32>(a.count, a.seed, model.latent_dim())?;
    let grids = decode_all(&model, &zs)?;
    if a.json {
        let segs: Vec<_> = zs
            .iter()
            .zip(&grids)
            .map(|(z, g)| serde_json::json!({"latent": z, "grid": g, "metrics": SegmentMetrics::of(g)}))
            .collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&serde_json::json!({"seed": a.seed, "segments": segs}))?)?;
        return Ok(());
    }
    for (i, g) in grids.iter().enumerate() {
        writeln!(out, "# segment {i}: {}", metrics_line(&SegmentMetrics::of(g)))?;
        write!(out, "{g}")?;
        writeln!(out)?;
    }
    Ok(())
}

fn evolve(data: &DataDir, a: EvolveArgs, out: &mut dyn Write) -> Result<()> {
    let (_, model) = resolve_model(data, &a.model)?;
    let spec = EvolutionSpec {
        objective: a.objective,
        target_pct: a.target,
        tile_id: a.tile,
        budget: a.budget,
        tolerance: a.tolerance,
        seed: a.seed,
    };
    let res = evolve_segment(&model, &spec)?;
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&res)?)?;
        return Ok(());
    }
    let achieved = res.achieved.map_or("undefined".into(), |v| format!("{v:.2}"));
    writeln!(
        out,
        "# {} achieved {achieved} (fitness {:.4}) after {} evaluations, {}",
        spec.objective,
        res.fitness,
        res.evaluations,
        res.termination.as_str()
    )?;
    writeln!(out, "# {}", metrics_line(&res.metrics))?;
    write!(out, "{}", res.grid)?;
    Ok(())
}

fn analyze(data: &DataDir, a: AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let (id, model) = resolve_model(data, &a.model)?;
    let label = a.label.unwrap_or(id);
    let dir = a.out.unwrap_or_else(|| data.analysis_dir());
    let files = match a.experiment {
        Experiment::Range => {
            let r = expressive_range(&model, a.n, a.seed)?.with_label(&label);
            let f = r.fractions;
            writeln!(
                out,
                "n {}: blended {:.4}  smb_only {:.4}  ki_only {:.4}  empty {:.4}",
                r.n, f.blended, f.smb_only, f.ki_only, f.empty
            )?;
            emit_artifacts(&r, &dir)?
        }
        Experiment::Corner => {
            let r = expressive_range(&model, a.n, a.seed)?.with_label(&label);
            let c = CornerData::from_report(&r, &Corpus::bundled());
            writeln!(
                out,
                "{} generated points ({} excluded), {} SMB and {} KI training points",
                c.generated.len(),
                c.excluded,
                c.smb_training.len(),
                c.ki_training.len()
            )?;
            emit_artifacts(&c, &dir)?
        }
        Experiment::Accuracy => {
            let cfg = AccuracyConfig { runs: a.runs, seed: a.seed, budget: a.budget, ..AccuracyConfig::default() };
            let total = cfg.objectives.len() * cfg.targets.len() * cfg.runs;
            let mut done = 0;
            let r = evolution_accuracy_with(&model, &cfg, &mut |_| {
                done += 1;
                if done % cfg.runs == 0 {
                    eprintln!("{done}/{total} runs");
                }
            })?
            .with_label(&label);
            for row in &r.rows {
                let mean = row.mean.map_or("undefined".into(), |v| format!("{v:.2}"));
                let std = row.std.map_or("-".into(), |v| format!("{v:.2}"));
                writeln!(out, "{:<15} target {:>5}: mean {mean} std {std}", row.objective.as_str(), row.target)?;
            }
            emit_artifacts(&r, &dir)?
        }
    };
    for f in files {
        writeln!(out, "wrote {}", f.display())?;
    }
    Ok(())
}

/// Build the application state for `data`, using `registry` as the index path when given.
pub fn app_state(data: &DataDir, registry: Option<PathBuf>, budget_cap: usize) -> Result<AppState> {
    Ok(AppState {
        registry: Arc::new(Registry::open(registry.unwrap_or_else(|| data.registry_path()))?),
        sessions: Arc::new(SessionStore::open(data.sessions_dir())?),
        budget_cap,
    })
}

fn serve(data: &DataDir, a: ServeArgs) -> Result<()> {
    let state = app_state(data, a.registry, a.budget_cap)?;
    if state.registry.entries().is_empty() {
        eprintln!("warning: registry {} has no models", state.registry.index_path().display());
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
