//! Tile-based segment metrics: density, difficulty, non-linearity, SMB
//! proportion, per-tile fractions and blend classification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{TileGrid, NUM_TILES, SEGMENT_SIZE};

const CELLS: f64 = (SEGMENT_SIZE * SEGMENT_SIZE) as f64;

/// Enemy+hazard count that maps to 100% difficulty.
pub const DIFFICULTY_CAP: u32 = 16;

/// Upper bound on the regression MSE of 16 heights in [0, 16].
pub const NONLINEARITY_NORMALIZER: f64 = 64.0;

/// Which tile ids belong to each metric class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileClassTable {
    pub solid: [bool; NUM_TILES],
    pub enemy: [bool; NUM_TILES],
    pub hazard: [bool; NUM_TILES],
    pub smb_non_background: [bool; NUM_TILES],
    pub ki_non_background: [bool; NUM_TILES],
}

const fn mask(ids: &[u8]) -> [bool; NUM_TILES] {
    let mut m = [false; NUM_TILES];
    let mut i = 0;
    while i < ids.len() {
        m[ids[i] as usize] = true;
        i += 1;
    }
    m
}

pub const TILE_CLASSES: TileClassTable = TileClassTable {
    solid: mask(&[0, 1, 3, 4, 6, 7, 8, 9, 11, 12, 14]),
    enemy: mask(&[5]),
    hazard: mask(&[15]),
    smb_non_background: mask(&[0, 1, 3, 4, 5, 6, 7, 8, 9, 10]),
    ki_non_background: mask(&[11, 12, 13, 14, 15]),
};

impl TileClassTable {
    pub fn ids(m: &[bool; NUM_TILES]) -> Vec<u8> {
        (0..NUM_TILES as u8).filter(|&i| m[i as usize]).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("invalid tile id {0} (expected 0..=16)")]
    InvalidTileId(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BlendClass {
    SmbOnly,
    KiOnly,
    Blended,
    Empty,
}

impl BlendClass {
    pub const ALL: [BlendClass; 4] = [BlendClass::SmbOnly, BlendClass::KiOnly, BlendClass::Blended, BlendClass::Empty];

    pub fn as_str(self) -> &'static str {
        match self {
            BlendClass::SmbOnly => "SMB_ONLY",
            BlendClass::KiOnly => "KI_ONLY",
            BlendClass::Blended => "BLENDED",
            BlendClass::Empty => "EMPTY",
        }
    }
}

impl fmt::Display for BlendClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlendClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BlendClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown blend class `{s}`"))
    }
}

/// The four scalar metrics that can be targeted by evolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Metric {
    Density,
    Difficulty,
    Nonlinearity,
    SmbProportion,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Density, Metric::Difficulty, Metric::Nonlinearity, Metric::SmbProportion];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Density => "density",
            Metric::Difficulty => "difficulty",
            Metric::Nonlinearity => "nonlinearity",
            Metric::SmbProportion => "smb_proportion",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub density_pct: f64,
    pub difficulty_pct: f64,
    pub nonlinearity_pct: f64,
    pub nonlinearity_mse: f64,
    /// `None` when the segment has no non-background tile of either game.
    pub smb_proportion_pct: Option<f64>,
    pub tile_counts: [u32; NUM_TILES],
    pub blend_class: BlendClass,
}

/// CSV column order for metric rows.
pub const CSV_HEADER: [&str; 6] =
    ["density", "difficulty", "nonlinearity_mse", "nonlinearity_pct", "smb_proportion", "blend_class"];

impl SegmentMetrics {
    pub fn of(grid: &TileGrid) -> Self {
        let counts = grid.counts();
        let (mse, pct) = nonlinearity(grid);
        SegmentMetrics {
            density_pct: pct_of(class_count(&counts, &TILE_CLASSES.solid)),
            difficulty_pct: difficulty_from_counts(&counts),
            nonlinearity_pct: pct,
            nonlinearity_mse: mse,
            smb_proportion_pct: smb_proportion_from_counts(&counts),
            tile_counts: counts,
            blend_class: blend_class_from_counts(&counts),
        }
    }

    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Density => Some(self.density_pct),
            Metric::Difficulty => Some(self.difficulty_pct),
            Metric::Nonlinearity => Some(self.nonlinearity_pct),
            Metric::SmbProportion => self.smb_proportion_pct,
        }
    }

    /// Fields in `CSV_HEADER` order; an undefined proportion is an empty field.
    pub fn csv_fields(&self) -> [String; 6] {
        [
            fmt_num(self.density_pct),
            fmt_num(self.difficulty_pct),
            fmt_num(self.nonlinearity_mse),
            fmt_num(self.nonlinearity_pct),
            self.smb_proportion_pct.map(fmt_num).unwrap_or_default(),
            self.blend_class.to_string(),
        ]
    }
}

/// Shortest round-trip formatting, so CSVs are byte-stable.
pub fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn class_count(counts: &[u32; NUM_TILES], class: &[bool; NUM_TILES]) -> u32 {
    counts.iter().zip(class).filter(|(_, &m)| m).map(|(c, _)| c).sum()
}

fn pct_of(count: u32) -> f64 {
    100.0 * count as f64 / CELLS
}

pub fn density(grid: &TileGrid) -> f64 {
    pct_of(class_count(&grid.counts(), &TILE_CLASSES.solid))
}

fn difficulty_from_counts(counts: &[u32; NUM_TILES]) -> f64 {
    let n = class_count(counts, &TILE_CLASSES.enemy) + class_count(counts, &TILE_CLASSES.hazard);
    100.0 * n.min(DIFFICULTY_CAP) as f64 / DIFFICULTY_CAP as f64
}

pub fn difficulty(grid: &TileGrid) -> f64 {
    difficulty_from_counts(&grid.counts())
}

/// Height of each column's topmost solid tile (16 for row 0), 0 if none.
pub fn column_heights(grid: &TileGrid) -> [u32; SEGMENT_SIZE] {
    let mut h = [0u32; SEGMENT_SIZE];
    for (c, hc) in h.iter_mut().enumerate() {
        if let Some(r) = (0..SEGMENT_SIZE).find(|&r| TILE_CLASSES.solid[grid.get(r, c) as usize]) {
            *hc = (SEGMENT_SIZE - r) as u32;
        }
    }
    h
}

/// Mean squared residual of the least-squares line through the 16 column
/// heights, and that value as a percentage of 64 (clamped to 100).
pub fn nonlinearity(grid: &TileGrid) -> (f64, f64) {
    let mse = ols_mse(&column_heights(grid));
    (mse, (100.0 * mse / NONLINEARITY_NORMALIZER).clamp(0.0, 100.0))
}

/// Regression MSE over x = 0..n from centered integer sums.
pub(crate) fn ols_mse(heights: &[u32]) -> f64 {
    let n = heights.len() as i64;
    let (mut sy, mut syy, mut sxy) = (0i64, 0i64, 0i64);
    for (x, &y) in heights.iter().enumerate() {
        let y = y as i64;
        sy += y;
        syy += y * y;
        sxy += x as i64 * y;
    }
    let sx = n * (n - 1) / 2;
    let sxx = (n - 1) * n * (2 * n - 1) / 6;
    // n-scaled centered sums keep everything integral.
    let cxx = n * sxx - sx * sx;
    let cyy = n * syy - sy * sy;
    let cxy = n * sxy - sx * sy;
    // residual sum of squares = (cyy - cxy^2 / cxx) / n
    let rss_times_n_cxx = cyy as f64 * cxx as f64 - (cxy as f64) * (cxy as f64);
    let mse = rss_times_n_cxx / (cxx as f64 * n as f64 * n as f64);
    mse.max(0.0)
}

fn smb_proportion_from_counts(counts: &[u32; NUM_TILES]) -> Option<f64> {
    let s = class_count(counts, &TILE_CLASSES.smb_non_background);
    let m = class_count(counts, &TILE_CLASSES.ki_non_background);
    (s + m > 0).then(|| 100.0 * s as f64 / (s + m) as f64)
}

pub fn smb_proportion(grid: &TileGrid) -> Option<f64> {
    smb_proportion_from_counts(&grid.counts())
}

pub fn ki_proportion(grid: &TileGrid) -> Option<f64> {
    let counts = grid.counts();
    let s = class_count(&counts, &TILE_CLASSES.smb_non_background);
    let m = class_count(&counts, &TILE_CLASSES.ki_non_background);
    (s + m > 0).then(|| 100.0 * m as f64 / (s + m) as f64)
}

fn blend_class_from_counts(counts: &[u32; NUM_TILES]) -> BlendClass {
    let s = class_count(counts, &TILE_CLASSES.smb_non_background);
    let m = class_count(counts, &TILE_CLASSES.ki_non_background);
    match (s > 0, m > 0) {
        (true, true) => BlendClass::Blended,
        (true, false) => BlendClass::SmbOnly,
        (false, true) => BlendClass::KiOnly,
        (false, false) => BlendClass::Empty,
    }
}

pub fn blend_class(grid: &TileGrid) -> BlendClass {
    blend_class_from_counts(&grid.counts())
}

pub fn tile_fraction(grid: &TileGrid, tile_id: i64) -> Result<f64, MetricsError> {
    if !(0..NUM_TILES as i64).contains(&tile_id) {
        return Err(MetricsError::InvalidTileId(tile_id));
    }
    Ok(pct_of(grid.counts()[tile_id as usize]))
}
