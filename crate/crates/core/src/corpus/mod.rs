//! Level corpus: VGLC parsing, normalization to 16-tile windows, segment
//! serialization and rendering.
//!
//! SMB levels scroll horizontally and are 14 rows tall in VGLC, so they are
//! padded with sky rows at the top before a 16x16 window slides left to
//! right. KI levels are already 16 columns wide and the window slides from
//! the bottom (the level start) upward.

mod grid;
mod render;
pub mod tiles;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use grid::{argmax_decode, argmax_decode_slice, OneHotGrid, TileGrid, SEGMENT_SIZE};
pub use render::{palette_color, render_image, PALETTE};
pub use tiles::{Game, TileType, NUM_TILES, TILE_TYPES};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown character {ch:?} at line {line}, column {col}")]
    UnknownCharacter { line: usize, col: usize, ch: char },
    #[error("line {line} has a different length than line 0")]
    RaggedLines { line: usize },
    #[error("cannot normalize {game} level with {rows} rows and {cols} columns")]
    CannotNormalize { game: Game, rows: usize, cols: usize },
    #[error("level too small for a 16-tile window ({len} along the sliding axis)")]
    TooSmall { len: usize },
    #[error("invalid tile id {id} at ({row}, {col})")]
    InvalidTile { row: usize, col: usize, id: i64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("level text is empty")]
    Empty,
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// A full level in tile ids, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Level {
    pub game: Game,
    pub rows: usize,
    pub cols: usize,
    cells: Vec<u8>,
}

impl Level {
    pub fn new(game: Game, rows: usize, cols: usize, cells: Vec<u8>) -> Result<Self, CorpusError> {
        if cells.len() != rows * cols {
            return Err(CorpusError::Shape(format!(
                "{} cells for a {rows}x{cols} level",
                cells.len()
            )));
        }
        let ids = game.tile_ids();
        if let Some(i) = cells.iter().position(|id| !ids.contains(id)) {
            return Err(CorpusError::InvalidTile { row: i / cols, col: i % cols, id: cells[i] as i64 });
        }
        Ok(Level { game, rows, cols, cells })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.cols + col]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    fn window(&self, top: usize, left: usize) -> TileGrid {
        let mut cells = [[0u8; SEGMENT_SIZE]; SEGMENT_SIZE];
        for (r, row) in cells.iter_mut().enumerate() {
            let start = (top + r) * self.cols + left;
            row.copy_from_slice(&self.cells[start..start + SEGMENT_SIZE]);
        }
        TileGrid::new(cells).expect("level cells are valid tile ids")
    }
}

/// Parse VGLC text for one game. Trailing whitespace and blank lines at the
/// end are ignored; every remaining line must have the same length.
pub fn parse_level(text: &str, game: Game) -> Result<Level, CorpusError> {
    let mut lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches(['\r', ' ', '\t'])).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(CorpusError::Empty);
    }
    let cols = lines[0].chars().count();
    let mut cells = Vec::with_capacity(lines.len() * cols);
    for (line_no, line) in lines.iter().enumerate() {
        let mut n = 0;
        for (col, ch) in line.chars().enumerate() {
            let id = tiles::from_vglc_char(game, ch)
                .ok_or(CorpusError::UnknownCharacter { line: line_no, col, ch })?;
            cells.push(id);
            n += 1;
        }
        if n != cols {
            return Err(CorpusError::RaggedLines { line: line_no });
        }
    }
    Level::new(game, lines.len(), cols, cells)
}

/// Bring a level to 16 tiles across the non-scrolling axis.
pub fn normalize_level(level: Level) -> Result<Level, CorpusError> {
    match level.game {
        Game::Smb if level.rows <= SEGMENT_SIZE => {
            let pad = SEGMENT_SIZE - level.rows;
            if pad == 0 {
                return Ok(level);
            }
            let mut cells = vec![Game::Smb.background(); pad * level.cols];
            cells.extend_from_slice(&level.cells);
            Level::new(Game::Smb, SEGMENT_SIZE, level.cols, cells)
        }
        Game::Ki if level.cols == SEGMENT_SIZE => Ok(level),
        game => Err(CorpusError::CannotNormalize { game, rows: level.rows, cols: level.cols }),
    }
}

/// Stride-1 windows: SMB left to right, KI bottom to top.
pub fn extract_windows(level: &Level) -> Result<Vec<TileGrid>, CorpusError> {
    match level.game {
        Game::Smb => {
            if level.rows != SEGMENT_SIZE {
                return Err(CorpusError::CannotNormalize {
                    game: level.game,
                    rows: level.rows,
                    cols: level.cols,
                });
            }
            if level.cols < SEGMENT_SIZE {
                return Err(CorpusError::TooSmall { len: level.cols });
            }
            Ok((0..=level.cols - SEGMENT_SIZE).map(|left| level.window(0, left)).collect())
        }
        Game::Ki => {
            if level.cols != SEGMENT_SIZE {
                return Err(CorpusError::CannotNormalize {
                    game: level.game,
                    rows: level.rows,
                    cols: level.cols,
                });
            }
            if level.rows < SEGMENT_SIZE {
                return Err(CorpusError::TooSmall { len: level.rows });
            }
            let last_top = level.rows - SEGMENT_SIZE;
            Ok((0..=last_top).map(|i| level.window(last_top - i, 0)).collect())
        }
    }
}

/// Environment variable naming a directory with the original VGLC files.
pub const VGLC_DIR_ENV: &str = "LEVELBLEND_VGLC_DIR";
pub const SMB_LEVEL_FILE: &str = "mario-1-1.txt";
pub const KI_LEVEL_FILE: &str = "kidicarus_5.txt";

const BUNDLED_SMB: &str = include_str!("../../data/mario-1-1.txt");
const BUNDLED_KI: &str = include_str!("../../data/kidicarus_5.txt");

/// Where level text comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelSource {
    /// Stand-in levels shipped with the crate (same dimensions as VGLC 1-1 / 5).
    Bundled,
    /// A directory holding `mario-1-1.txt` and `kidicarus_5.txt`.
    Directory(PathBuf),
}

impl LevelSource {
    /// `LEVELBLEND_VGLC_DIR` if set, otherwise the bundled levels.
    pub fn from_env() -> Self {
        match std::env::var_os(VGLC_DIR_ENV) {
            Some(dir) if !dir.is_empty() => LevelSource::Directory(dir.into()),
            _ => LevelSource::Bundled,
        }
    }

    pub fn texts(&self) -> Result<(String, String), CorpusError> {
        match self {
            LevelSource::Bundled => Ok((BUNDLED_SMB.to_owned(), BUNDLED_KI.to_owned())),
            LevelSource::Directory(dir) => Ok((read(&dir.join(SMB_LEVEL_FILE))?, read(&dir.join(KI_LEVEL_FILE))?)),
        }
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_owned(), source })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub game: Game,
    /// Window index within its level.
    pub index: usize,
    pub grid: TileGrid,
}

/// The joint training set: all SMB windows followed by all KI windows.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub source: LevelSource,
    pub segments: Vec<Segment>,
}

impl Corpus {
    pub fn load(source: LevelSource) -> Result<Self, CorpusError> {
        let (smb, ki) = source.texts()?;
        Self::from_texts(source, &smb, &ki)
    }

    pub fn from_texts(source: LevelSource, smb_text: &str, ki_text: &str) -> Result<Self, CorpusError> {
        let mut segments = Vec::new();
        for (text, game) in [(smb_text, Game::Smb), (ki_text, Game::Ki)] {
            let level = normalize_level(parse_level(text, game)?)?;
            segments.extend(
                extract_windows(&level)?
                    .into_iter()
                    .enumerate()
                    .map(|(index, grid)| Segment { game, index, grid }),
            );
        }
        Ok(Corpus { source, segments })
    }

    pub fn bundled() -> Self {
        Self::load(LevelSource::Bundled).expect("bundled levels parse")
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn count(&self, game: Game) -> usize {
        self.segments.iter().filter(|s| s.game == game).count()
    }

    pub fn grids(&self) -> Vec<TileGrid> {
        self.segments.iter().map(|s| s.grid).collect()
    }

    pub fn of_game(&self, game: Game) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.game == game)
    }

    /// SHA-256 over the ordered segment cells, hex encoded.
    pub fn hash(&self) -> String {
        corpus_hash(self.segments.iter().map(|s| &s.grid))
    }
}

pub fn corpus_hash<'a>(grids: impl IntoIterator<Item = &'a TileGrid>) -> String {
    let mut h = Sha256::new();
    for g in grids {
        for row in g.rows() {
            h.update(row);
        }
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smb_text(rows: usize, cols: usize) -> String {
        let mut s = String::new();
        for r in 0..rows {
            for c in 0..cols {
                s.push(if r == rows - 1 { 'X' } else if c % 7 == 0 { 'E' } else { '-' });
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn parse_ki_lookup() {
        let lvl = parse_level("T-\n-T\n", Game::Ki).unwrap();
        assert_eq!((lvl.rows, lvl.cols), (2, 2));
        assert_eq!(lvl.cells(), &[11, 16, 16, 11]);
    }

    #[test]
    fn parse_rejects_foreign_char() {
        let err = parse_level("--H-\n", Game::Smb).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownCharacter { line: 0, col: 2, ch: 'H' }));
    }

    #[test]
    fn parse_rejects_ragged() {
        let err = parse_level("----\n---\n", Game::Smb).unwrap_err();
        assert!(matches!(err, CorpusError::RaggedLines { line: 1 }));
        assert!(matches!(parse_level("\n\n", Game::Ki), Err(CorpusError::Empty)));
    }

    #[test]
    fn parse_tolerates_crlf_and_trailing_blank() {
        let lvl = parse_level("XX\r\n--\r\n\r\n", Game::Smb).unwrap();
        assert_eq!((lvl.rows, lvl.cols), (2, 2));
    }

    #[test]
    fn smb_padding_goes_on_top() {
        let lvl = parse_level(&smb_text(14, 20), Game::Smb).unwrap();
        let norm = normalize_level(lvl.clone()).unwrap();
        assert_eq!(norm.rows, 16);
        for c in 0..20 {
            assert_eq!(norm.get(0, c), 2);
            assert_eq!(norm.get(1, c), 2);
            for r in 0..14 {
                assert_eq!(norm.get(r + 2, c), lvl.get(r, c));
            }
        }
    }

    #[test]
    fn normalize_rejects() {
        let tall = parse_level(&smb_text(17, 20), Game::Smb).unwrap();
        assert!(matches!(normalize_level(tall), Err(CorpusError::CannotNormalize { .. })));
        let wide_ki = Level::new(Game::Ki, 20, 20, vec![16; 400]).unwrap();
        assert!(matches!(normalize_level(wide_ki), Err(CorpusError::CannotNormalize { .. })));
        let ki = Level::new(Game::Ki, 20, 16, vec![16; 320]).unwrap();
        assert_eq!(normalize_level(ki.clone()).unwrap(), ki);
    }

    #[test]
    fn single_window() {
        let mut cells = vec![2u8; 256];
        cells[255] = 0;
        let lvl = Level::new(Game::Smb, 16, 16, cells).unwrap();
        let w = extract_windows(&lvl).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].get(15, 15), 0);
        assert_eq!(w[0].iter().collect::<Vec<_>>(), lvl.cells());
    }

    #[test]
    fn too_small() {
        let lvl = Level::new(Game::Smb, 16, 10, vec![2; 160]).unwrap();
        assert!(matches!(extract_windows(&lvl), Err(CorpusError::TooSmall { len: 10 })));
        let lvl = Level::new(Game::Ki, 12, 16, vec![16; 192]).unwrap();
        assert!(matches!(extract_windows(&lvl), Err(CorpusError::TooSmall { len: 12 })));
    }

    #[test]
    fn ki_windows_start_at_bottom() {
        // floor on the last row, a door marker on row 1
        let rows = 18;
        let cells: Vec<u8> = (0..rows * 16)
            .map(|i| match i / 16 {
                r if r == rows - 1 => 14,
                1 => 13,
                _ => 16,
            })
            .collect();
        let lvl = Level::new(Game::Ki, rows, 16, cells).unwrap();
        let w = extract_windows(&lvl).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].get(15, 0), 14);
        assert!(w[0].iter().all(|id| id != 13));
        assert_eq!(w[1].get(0, 0), 13);
        assert_eq!(w[2].get(1, 0), 13);
        assert!(w[2].iter().all(|id| id != 14));
        // stride-1 overlap between consecutive windows
        for k in 0..2 {
            for r in 0..15 {
                assert_eq!(w[k].rows()[r], w[k + 1].rows()[r + 1]);
            }
        }
    }

    #[test]
    fn level_rejects_other_game_ids() {
        assert!(Level::new(Game::Smb, 1, 2, vec![2, 14]).is_err());
    }

    #[test]
    fn bundled_levels_dimensions() {
        let smb = parse_level(BUNDLED_SMB, Game::Smb).unwrap();
        assert_eq!((smb.rows, smb.cols), (14, 202));
        let ki = parse_level(BUNDLED_KI, Game::Ki).unwrap();
        assert_eq!((ki.rows, ki.cols), (206, 16));
    }

    #[test]
    fn hash_is_order_sensitive() {
        let a = TileGrid::filled(2);
        let b = TileGrid::filled(16);
        assert_ne!(corpus_hash([&a, &b]), corpus_hash([&b, &a]));
        assert_eq!(corpus_hash([&a, &b]).len(), 64);
    }
}
