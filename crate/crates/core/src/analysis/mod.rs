//! Experiments over a trained model: expressive range, corner-plot data and
//! evolution accuracy, plus their CSV, PNG and manifest artifacts.
//!
//! Artifact names, with `<model>` the report label:
//!
//! | report | files |
//! |---|---|
//! | [`ExpressiveRangeReport`] | `range_<model>.csv`, `range_<model>_{density,difficulty,nonlinearity}.png`, `range_<model>_smb_proportion.png`, `range_<model>.manifest.json` |
//! | [`CornerData`] | `corner_<model>.csv`, `corner_<model>_histograms.csv`, `corner_<model>.png`, `corner_<model>.manifest.json` |
//! | [`AccuracyReport`] | `accuracy_<model>.csv`, `accuracy_runs_<model>.csv`, `accuracy_<model>.png`, `accuracy_<model>.manifest.json` |

pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::RealField;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Game, TileGrid};
use crate::evolve::{evolve_segment, EvolutionSpec, EvolveError, Objective, Termination, DEFAULT_BUDGET, DEFAULT_TOLERANCE};
use crate::latent::{decode_all, sample_latents_dim, LatentError};
use crate::metrics::{fmt_num, BlendClass, Metric, SegmentMetrics, CSV_HEADER};
use crate::models::{Model, ModelKind};
use crate::Scalar;

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_TARGETS: [f64; 5] = [0.0, 25.0, 50.0, 75.0, 100.0];
/// Histogram bins over [0, 100].
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("run count must be at least 1")]
    NoRuns,
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Encode { path: PathBuf, message: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlendCounts {
    pub smb_only: usize,
    pub ki_only: usize,
    pub blended: usize,
    pub empty: usize,
}

impl BlendCounts {
    pub fn tally<'a>(classes: impl IntoIterator<Item = &'a BlendClass>) -> Self {
        let mut c = BlendCounts::default();
        for class in classes {
            match class {
                BlendClass::SmbOnly => c.smb_only += 1,
                BlendClass::KiOnly => c.ki_only += 1,
                BlendClass::Blended => c.blended += 1,
                BlendClass::Empty => c.empty += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.smb_only + self.ki_only + self.blended + self.empty
    }

    pub fn fractions(&self) -> BlendFractions {
        let n = self.total().max(1) as f64;
        BlendFractions {
            smb_only: self.smb_only as f64 / n,
            ki_only: self.ki_only as f64 / n,
            blended: self.blended as f64 / n,
            empty: self.empty as f64 / n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendFractions {
    pub smb_only: f64,
    pub ki_only: f64,
    pub blended: f64,
    pub empty: f64,
}

impl BlendFractions {
    pub fn get(&self, class: BlendClass) -> f64 {
        match class {
            BlendClass::SmbOnly => self.smb_only,
            BlendClass::KiOnly => self.ki_only,
            BlendClass::Blended => self.blended,
            BlendClass::Empty => self.empty,
        }
    }
}

/// Metrics of `n` segments decoded from standard-normal latents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressiveRangeReport {
    /// Used in artifact file names; defaults to the lower-case kind.
    pub label: String,
    pub kind: ModelKind,
    pub n: usize,
    pub seed: u64,
    pub samples: Vec<SegmentMetrics>,
    pub counts: BlendCounts,
    pub fractions: BlendFractions,
}

impl ExpressiveRangeReport {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Rows whose SMB proportion is undefined (empty segments).
    pub fn excluded(&self) -> usize {
        self.samples.iter().filter(|m| m.smb_proportion_pct.is_none()).count()
    }

    /// `(smb_proportion, metric)` pairs, skipping rows with undefined proportion.
    pub fn scatter(&self, metric: Metric) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .filter_map(|m| Some((m.smb_proportion_pct?, m.value(metric)?)))
            .collect()
    }

    pub fn proportion_histogram(&self) -> Histogram {
        Histogram::of(Metric::SmbProportion, self.samples.iter().filter_map(|m| m.smb_proportion_pct))
    }
}

pub fn default_label(kind: ModelKind) -> String {
    kind.as_str().to_ascii_lowercase()
}

/// Decode `n` latents drawn with `seed` and compute their metrics.
pub fn expressive_range<T: Scalar>(model: &Model<T>, n: usize, seed: u64) -> Result<ExpressiveRangeReport, AnalysisError> {
    if n == 0 {
        return Err(AnalysisError::NoSamples);
    }
    let zs = sample_latents_dim::<T>(n, seed, model.latent_dim())?;
    let samples: Vec<SegmentMetrics> = decode_all(model, &zs)?.iter().map(SegmentMetrics::of).collect();
    let counts = BlendCounts::tally(samples.iter().map(|m| &m.blend_class));
    Ok(ExpressiveRangeReport {
        label: default_label(model.kind()),
        kind: model.kind(),
        n,
        seed,
        fractions: counts.fractions(),
        counts,
        samples,
    })
}

/// Equal-width histogram over [0, 100]; 100 falls in the last bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub metric: Metric,
    pub counts: [usize; HISTOGRAM_BINS],
}

impl Histogram {
    pub fn of(metric: Metric, values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = [0; HISTOGRAM_BINS];
        for v in values {
            counts[Self::bin(v)] += 1;
        }
        Histogram { metric, counts }
    }

    pub fn bin(v: f64) -> usize {
        ((v / 100.0 * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
    }

    pub fn edges(i: usize) -> (f64, f64) {
        let w = 100.0 / HISTOGRAM_BINS as f64;
        (i as f64 * w, (i + 1) as f64 * w)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// A metric point: density, difficulty, non-linearity and SMB proportion.
pub type MetricPoint = [f64; 4];

fn point(m: &SegmentMetrics) -> Option<MetricPoint> {
    Some([m.density_pct, m.difficulty_pct, m.nonlinearity_pct, m.smb_proportion_pct?])
}

/// Pairwise scatter and marginal histogram data for the four metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerData {
    pub label: String,
    pub kind: ModelKind,
    pub n: usize,
    pub seed: u64,
    /// Generated points with a defined SMB proportion.
    pub generated: Vec<MetricPoint>,
    /// Generated rows dropped because their SMB proportion is undefined.
    pub excluded: usize,
    pub smb_training: Vec<MetricPoint>,
    pub ki_training: Vec<MetricPoint>,
    /// Marginals of the generated points, in `Metric::ALL` order.
    pub histograms: Vec<Histogram>,
}

impl CornerData {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn from_report(report: &ExpressiveRangeReport, corpus: &Corpus) -> Self {
        let generated: Vec<MetricPoint> = report.samples.iter().filter_map(point).collect();
        let training = |game| -> Vec<MetricPoint> {
            corpus.of_game(game).filter_map(|s| point(&SegmentMetrics::of(&s.grid))).collect()
        };
        let histograms = Metric::ALL
            .iter()
            .enumerate()
            .map(|(i, &m)| Histogram::of(m, generated.iter().map(|p| p[i])))
            .collect();
        CornerData {
            label: report.label.clone(),
            kind: report.kind,
            n: report.n,
            seed: report.seed,
            excluded: report.n - generated.len(),
            generated,
            smb_training: training(Game::Smb),
            ki_training: training(Game::Ki),
            histograms,
        }
    }

    /// The six unordered metric pairs, as indices into `Metric::ALL`.
    pub fn pairs() -> Vec<(usize, usize)> {
        (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect()
    }

    /// `(x, y)` points of generated segments for a metric pair.
    pub fn scatter(points: &[MetricPoint], x: usize, y: usize) -> Vec<(f64, f64)> {
        points.iter().map(|p| (p[x], p[y])).collect()
    }
}

pub fn corner_data<T: Scalar>(model: &Model<T>, n: usize, seed: u64, corpus: &Corpus) -> Result<CornerData, AnalysisError> {
    let report = expressive_range(model, n, seed)?;
    Ok(CornerData::from_report(&report, corpus))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyConfig {
    pub objectives: Vec<Objective>,
    pub targets: Vec<f64>,
    pub runs: usize,
    /// Run `r` of every cell uses seed `seed + r`.
    pub seed: u64,
    pub budget: usize,
    pub tolerance: f64,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        AccuracyConfig {
            objectives: Objective::TARGETED.to_vec(),
            targets: DEFAULT_TARGETS.to_vec(),
            runs: DEFAULT_RUNS,
            seed: 0,
            budget: DEFAULT_BUDGET,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// One evolution run of the accuracy study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRun {
    pub objective: Objective,
    pub target: f64,
    pub run: usize,
    pub seed: u64,
    pub achieved: Option<f64>,
    pub fitness: f64,
    pub evaluations: usize,
    pub termination: Termination,
    pub grid: TileGrid,
}

/// Aggregate of one (objective, target) cell. Statistics cover runs whose
/// achieved value is defined; `std` is the population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub objective: Objective,
    pub target: f64,
    pub runs: usize,
    pub defined: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub label: String,
    pub kind: ModelKind,
    pub config: AccuracyConfig,
    pub rows: Vec<AccuracyRow>,
    pub runs: Vec<AccuracyRun>,
}

impl AccuracyReport {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn row(&self, objective: Objective, target: f64) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.objective == objective && r.target == target)
    }
}

/// Group runs by (objective, target) in first-seen order and summarize each cell.
pub fn aggregate(runs: &[AccuracyRun]) -> Vec<AccuracyRow> {
    let mut cells: Vec<(Objective, f64)> = Vec::new();
    for r in runs {
        if !cells.contains(&(r.objective, r.target)) {
            cells.push((r.objective, r.target));
        }
    }
    cells
        .into_iter()
        .map(|(objective, target)| {
            let cell: Vec<&AccuracyRun> = runs.iter().filter(|r| r.objective == objective && r.target == target).collect();
            let vals: Vec<f64> = cell.iter().filter_map(|r| r.achieved).collect();
            let (mean, std, min, max) = if vals.is_empty() {
                (None, None, None, None)
            } else {
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (Some(mean), Some(var.sqrt()), Some(min), Some(max))
            };
            AccuracyRow { objective, target, runs: cell.len(), defined: vals.len(), mean, std, min, max }
        })
        .collect()
}

pub fn evolution_accuracy<T: Scalar + RealField>(model: &Model<T>, config: &AccuracyConfig) -> Result<AccuracyReport, AnalysisError> {
    evolution_accuracy_with(model, config, &mut |_| {})
}

/// Like [`evolution_accuracy`], calling `on_run` after every evolution.
pub fn evolution_accuracy_with<T: Scalar + RealField>(
    model: &Model<T>,
    config: &AccuracyConfig,
    on_run: &mut dyn FnMut(&AccuracyRun),
) -> Result<AccuracyReport, AnalysisError> {
    if config.runs == 0 {
        return Err(AnalysisError::NoRuns);
    }
    let mut runs = Vec::with_capacity(config.objectives.len() * config.targets.len() * config.runs);
    for &objective in &config.objectives {
        for &target in &config.targets {
            for run in 0..config.runs {
                let seed = config.seed.wrapping_add(run as u64);
                let spec = EvolutionSpec {
                    budget: config.budget,
                    tolerance: config.tolerance,
                    ..EvolutionSpec::target(objective, target, seed)
                };
                let res = evolve_segment(model, &spec)?;
                let record = AccuracyRun {
                    objective,
                    target,
                    run,
                    seed,
                    achieved: res.achieved,
                    fitness: res.fitness,
                    evaluations: res.evaluations,
                    termination: res.termination,
                    grid: res.grid,
                };
                on_run(&record);
                runs.push(record);
            }
        }
    }
    Ok(AccuracyReport {
        label: default_label(model.kind()),
        kind: model.kind(),
        config: config.clone(),
        rows: aggregate(&runs),
        runs,
    })
}

/// Something that can be written to an output directory.
pub trait Artifacts {
    /// Write every artifact and return the paths in a fixed order.
    fn emit(&self, out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError>;
}

pub fn emit_artifacts(report: &dyn Artifacts, out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    fs::create_dir_all(out_dir).map_err(|source| AnalysisError::Io { path: out_dir.to_owned(), source })?;
    report.emit(out_dir)
}

/// Keeps labels safe for file names.
pub fn sanitize_label(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() { "model".into() } else { s }
}

/// Grid text with rows joined by `/`, as stored in run CSVs.
pub fn grid_field(grid: &TileGrid) -> String {
    grid.to_text_lines().join("/")
}

pub fn parse_grid_field(field: &str) -> Result<TileGrid, crate::corpus::CorpusError> {
    TileGrid::parse_text_lines(&field.split('/').collect::<Vec<_>>())
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

struct Out<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> Out<'a> {
    fn new(dir: &'a Path) -> Self {
        Out { dir, written: Vec::new() }
    }

    fn csv<R, I, S>(&mut self, name: &str, header: &[&str], rows: R) -> Result<(), AnalysisError>
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let path = self.dir.join(name);
        let enc = |e: csv::Error| AnalysisError::Encode { path: path.clone(), message: e.to_string() };
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header).map_err(enc)?;
        for row in rows {
            w.write_record(row).map_err(enc)?;
        }
        let bytes = w.into_inner().map_err(|e| AnalysisError::Encode { path: path.clone(), message: e.to_string() })?;
        self.bytes(path, &bytes)
    }

    fn json<V: Serialize>(&mut self, name: &str, value: &V) -> Result<(), AnalysisError> {
        let path = self.dir.join(name);
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| AnalysisError::Encode { path: path.clone(), message: e.to_string() })?;
        bytes.push(b'\n');
        self.bytes(path, &bytes)
    }

    fn png(&mut self, name: &str, img: &image::RgbImage) -> Result<(), AnalysisError> {
        let path = self.dir.join(name);
        img.save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| AnalysisError::Encode { path: path.clone(), message: e.to_string() })?;
        self.written.push(path);
        Ok(())
    }

    fn bytes(&mut self, path: PathBuf, bytes: &[u8]) -> Result<(), AnalysisError> {
        fs::write(&path, bytes).map_err(|source| AnalysisError::Io { path: path.clone(), source })?;
        self.written.push(path);
        Ok(())
    }
}

const FULL: (f64, f64) = (0.0, 100.0);
const MARGIN: u32 = 20;

fn scatter_png(points: &[(f64, f64)]) -> image::RgbImage {
    let size = 400;
    let mut img = plot::canvas(size + 2 * MARGIN, size + 2 * MARGIN);
    let panel = plot::Panel::new(MARGIN, MARGIN, size, size, FULL, FULL);
    panel.axes(&mut img);
    for &(x, y) in points {
        panel.point(&mut img, x, y, 1, plot::PURPLE);
    }
    img
}

fn histogram_png(hist: &Histogram) -> image::RgbImage {
    let size = 400;
    let mut img = plot::canvas(size + 2 * MARGIN, size + 2 * MARGIN);
    let top = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let panel = plot::Panel::new(MARGIN, MARGIN, size, size, FULL, (0.0, top));
    panel.axes(&mut img);
    panel.bars(&mut img, &hist.counts.map(|c| c as f64), plot::PURPLE);
    img
}

#[derive(Serialize)]
struct RangeManifest<'a> {
    experiment: &'static str,
    label: &'a str,
    kind: ModelKind,
    n: usize,
    seed: u64,
    counts: BlendCounts,
    fractions: BlendFractions,
    excluded_from_proportion: usize,
    files: Vec<String>,
}

fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect()
}

impl Artifacts for ExpressiveRangeReport {
    fn emit(&self, out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
        let label = sanitize_label(&self.label);
        let mut out = Out::new(out_dir);
        out.csv(&format!("range_{label}.csv"), &CSV_HEADER, self.samples.iter().map(|m| m.csv_fields()))?;
        for metric in [Metric::Density, Metric::Difficulty, Metric::Nonlinearity] {
            out.png(&format!("range_{label}_{metric}.png"), &scatter_png(&self.scatter(metric)))?;
        }
        out.png(&format!("range_{label}_smb_proportion.png"), &histogram_png(&self.proportion_histogram()))?;
        let manifest = RangeManifest {
            experiment: "expressive_range",
            label: &label,
            kind: self.kind,
            n: self.n,
            seed: self.seed,
            counts: self.counts,
            fractions: self.fractions,
            excluded_from_proportion: self.excluded(),
            files: file_names(&out.written),
        };
        out.json(&format!("range_{label}.manifest.json"), &manifest)?;
        Ok(out.written)
    }
}

fn corner_png(data: &CornerData) -> image::RgbImage {
    let cell = 160;
    let gap = 10;
    let side = 4 * cell + 3 * gap + 2 * MARGIN;
    let mut img = plot::canvas(side, side);
    let origin = |i: usize| MARGIN + i as u32 * (cell + gap);
    for row in 0..4 {
        for col in 0..=row {
            if row == col {
                let hist = &data.histograms[row];
                let top = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
                let panel = plot::Panel::new(origin(col), origin(row), cell, cell, FULL, (0.0, top));
                panel.axes(&mut img);
                panel.bars(&mut img, &hist.counts.map(|c| c as f64), plot::PURPLE);
                continue;
            }
            let panel = plot::Panel::new(origin(col), origin(row), cell, cell, FULL, FULL);
            panel.axes(&mut img);
            for (points, color, r) in [
                (&data.generated, plot::PURPLE, 0),
                (&data.smb_training, plot::RED, 1),
                (&data.ki_training, plot::BLUE, 1),
            ] {
                for (x, y) in CornerData::scatter(points, col, row) {
                    panel.point(&mut img, x, y, r, color);
                }
            }
        }
    }
    img
}

#[derive(Serialize)]
struct CornerManifest<'a> {
    experiment: &'static str,
    label: &'a str,
    kind: ModelKind,
    n: usize,
    seed: u64,
    generated_points: usize,
    excluded_from_proportion: usize,
    smb_training_points: usize,
    ki_training_points: usize,
    files: Vec<String>,
}

impl Artifacts for CornerData {
    fn emit(&self, out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
        let label = sanitize_label(&self.label);
        let mut out = Out::new(out_dir);
        let tagged = [("generated", &self.generated), ("SMB", &self.smb_training), ("KI", &self.ki_training)];
        let rows = tagged.iter().flat_map(|(source, points)| {
            points.iter().map(move |p| {
                let mut row = vec![source.to_string()];
                row.extend(p.iter().map(|&v| fmt_num(v)));
                row
            })
        });
        let header = ["source", "density", "difficulty", "nonlinearity", "smb_proportion"];
        out.csv(&format!("corner_{label}.csv"), &header, rows)?;
        let hist_rows = self.histograms.iter().flat_map(|h| {
            h.counts.iter().enumerate().map(move |(i, c)| {
                let (lo, hi) = Histogram::edges(i);
                vec![h.metric.to_string(), fmt_num(lo), fmt_num(hi), c.to_string()]
            })
        });
        out.csv(&format!("corner_{label}_histograms.csv"), &["metric", "bin_lo", "bin_hi", "count"], hist_rows)?;
        out.png(&format!("corner_{label}.png"), &corner_png(self))?;
        let manifest = CornerManifest {
            experiment: "corner",
            label: &label,
            kind: self.kind,
            n: self.n,
            seed: self.seed,
            generated_points: self.generated.len(),
            excluded_from_proportion: self.excluded,
            smb_training_points: self.smb_training.len(),
            ki_training_points: self.ki_training.len(),
            files: file_names(&out.written),
        };
        out.json(&format!("corner_{label}.manifest.json"), &manifest)?;
        Ok(out.written)
    }
}

fn accuracy_png(report: &AccuracyReport) -> image::RgbImage {
    let size = 400;
    let mut img = plot::canvas(size + 2 * MARGIN, size + 2 * MARGIN);
    let panel = plot::Panel::new(MARGIN, MARGIN, size, size, FULL, FULL);
    panel.axes(&mut img);
    panel.line(&mut img, (0.0, 0.0), (100.0, 100.0), plot::GREY);
    let colors = [plot::RED, plot::BLUE, plot::GREEN, plot::ORANGE, plot::PURPLE];
    for (i, objective) in report.config.objectives.iter().enumerate() {
        let pts: Vec<(f64, f64)> = report
            .rows
            .iter()
            .filter(|r| r.objective == *objective)
            .filter_map(|r| Some((r.target, r.mean?)))
            .collect();
        panel.polyline(&mut img, &pts, colors[i % colors.len()]);
    }
    img
}

#[derive(Serialize)]
struct AccuracyManifest<'a> {
    experiment: &'static str,
    label: &'a str,
    kind: ModelKind,
    config: &'a AccuracyConfig,
    rows: usize,
    files: Vec<String>,
}

pub const ACCURACY_HEADER: [&str; 8] = ["objective", "target", "runs", "defined", "mean", "std", "min", "max"];
pub const ACCURACY_RUNS_HEADER: [&str; 9] =
    ["objective", "target", "run", "seed", "achieved", "fitness", "evaluations", "termination", "grid"];

impl Artifacts for AccuracyReport {
    fn emit(&self, out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
        let label = sanitize_label(&self.label);
        let mut out = Out::new(out_dir);
        let rows = self.rows.iter().map(|r| {
            [
                r.objective.to_string(),
                fmt_num(r.target),
                r.runs.to_string(),
                r.defined.to_string(),
                opt_num(r.mean),
                opt_num(r.std),
                opt_num(r.min),
                opt_num(r.max),
            ]
        });
        out.csv(&format!("accuracy_{label}.csv"), &ACCURACY_HEADER, rows)?;
        let runs = self.runs.iter().map(|r| {
            [
                r.objective.to_string(),
                fmt_num(r.target),
                r.run.to_string(),
                r.seed.to_string(),
                opt_num(r.achieved),
                fmt_num(r.fitness),
                r.evaluations.to_string(),
                r.termination.as_str().to_string(),
                grid_field(&r.grid),
            ]
        });
        out.csv(&format!("accuracy_runs_{label}.csv"), &ACCURACY_RUNS_HEADER, runs)?;
        out.png(&format!("accuracy_{label}.png"), &accuracy_png(self))?;
        let manifest = AccuracyManifest {
            experiment: "evolution_accuracy",
            label: &label,
            kind: self.kind,
            config: &self.config,
            rows: self.rows.len(),
            files: file_names(&out.written),
        };
        out.json(&format!("accuracy_{label}.manifest.json"), &manifest)?;
        Ok(out.written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(objective: Objective, target: f64, r: usize, achieved: Option<f64>) -> AccuracyRun {
        AccuracyRun {
            objective,
            target,
            run: r,
            seed: r as u64,
            achieved,
            fitness: 0.0,
            evaluations: 16,
            termination: Termination::TargetReached,
            grid: TileGrid::filled(2),
        }
    }

    #[test]
    fn histogram_edges_and_top_bin() {
        let h = Histogram::of(Metric::Density, [0.0, 9.99, 10.0, 99.9, 100.0]);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[9], 2);
        assert_eq!(Histogram::edges(9), (90.0, 100.0));
    }

    #[test]
    fn single_run_has_zero_std() {
        let rows = aggregate(&[run(Objective::Density, 25.0, 0, Some(31.5))]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean, Some(31.5));
        assert_eq!(rows[0].std, Some(0.0));
    }

    #[test]
    fn perfect_generator_matches_targets() {
        let mut runs = Vec::new();
        for o in Objective::TARGETED {
            for t in DEFAULT_TARGETS {
                for r in 0..3 {
                    runs.push(run(o, t, r, Some(t)));
                }
            }
        }
        let rows = aggregate(&runs);
        assert_eq!(rows.len(), 20);
        for row in rows {
            assert_eq!(row.mean, Some(row.target));
            assert_eq!(row.std, Some(0.0));
            assert_eq!(row.runs, 3);
        }
    }

    #[test]
    fn undefined_runs_are_excluded_from_statistics() {
        let rows = aggregate(&[
            run(Objective::SmbProportion, 50.0, 0, None),
            run(Objective::SmbProportion, 50.0, 1, Some(40.0)),
            run(Objective::SmbProportion, 50.0, 2, Some(60.0)),
        ]);
        assert_eq!((rows[0].runs, rows[0].defined), (3, 2));
        assert_eq!(rows[0].mean, Some(50.0));
        assert_eq!(rows[0].std, Some(10.0));
        let all_none = aggregate(&[run(Objective::SmbProportion, 0.0, 0, None)]);
        assert_eq!(all_none[0].mean, None);
    }

    #[test]
    fn blend_fractions_sum_to_one() {
        let classes = [BlendClass::SmbOnly, BlendClass::Blended, BlendClass::Blended, BlendClass::Empty, BlendClass::KiOnly];
        let c = BlendCounts::tally(classes.iter());
        assert_eq!(c.total(), 5);
        let f = c.fractions();
        assert!((f.smb_only + f.ki_only + f.blended + f.empty - 1.0).abs() < 1e-12);
        assert_eq!(f.get(BlendClass::Blended), 0.4);
    }

    #[test]
    fn grid_field_round_trips() {
        let mut g = TileGrid::filled(16);
        g.set(3, 4, 5);
        g.set(15, 0, 0);
        assert_eq!(parse_grid_field(&grid_field(&g)).unwrap(), g);
    }

    #[test]
    fn six_pairs() {
        let p = CornerData::pairs();
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|(i, j)| i < j));
    }

    #[test]
    fn labels_are_file_safe() {
        assert_eq!(sanitize_label("vae s0/x"), "vae_s0_x");
        assert_eq!(sanitize_label(""), "model");
    }
}
