use std::fmt;

use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use super::tiles::{self, NUM_TILES};
use super::CorpusError;
use crate::Scalar;

/// Segment side length in tiles.
pub const SEGMENT_SIZE: usize = 16;

/// A 16x16 segment of tile ids, row 0 at the top.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TileGridJson", into = "TileGridJson")]
pub struct TileGrid {
    cells: [[u8; SEGMENT_SIZE]; SEGMENT_SIZE],
}

#[derive(Serialize, Deserialize)]
struct TileGridJson {
    tiles: Vec<Vec<u8>>,
}

impl TryFrom<TileGridJson> for TileGrid {
    type Error = CorpusError;

    fn try_from(value: TileGridJson) -> Result<Self, Self::Error> {
        TileGrid::from_rows(&value.tiles)
    }
}

impl From<TileGrid> for TileGridJson {
    fn from(g: TileGrid) -> Self {
        TileGridJson { tiles: g.cells.iter().map(|r| r.to_vec()).collect() }
    }
}

impl TileGrid {
    pub fn new(cells: [[u8; SEGMENT_SIZE]; SEGMENT_SIZE]) -> Result<Self, CorpusError> {
        for (r, row) in cells.iter().enumerate() {
            for (c, &id) in row.iter().enumerate() {
                if id as usize >= NUM_TILES {
                    return Err(CorpusError::InvalidTile { row: r, col: c, id: id as i64 });
                }
            }
        }
        Ok(TileGrid { cells })
    }

    pub fn filled(id: u8) -> Self {
        assert!((id as usize) < NUM_TILES, "tile id {id} out of range");
        TileGrid { cells: [[id; SEGMENT_SIZE]; SEGMENT_SIZE] }
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, CorpusError> {
        if rows.len() != SEGMENT_SIZE {
            return Err(CorpusError::Shape(format!("expected 16 rows, got {}", rows.len())));
        }
        let mut cells = [[0u8; SEGMENT_SIZE]; SEGMENT_SIZE];
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != SEGMENT_SIZE {
                return Err(CorpusError::Shape(format!(
                    "row {r} has {} columns, expected 16",
                    row.len()
                )));
            }
            cells[r].copy_from_slice(row);
        }
        Self::new(cells)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row][col]
    }

    /// Set a cell. Panics on an out-of-range id.
    pub fn set(&mut self, row: usize, col: usize, id: u8) {
        assert!((id as usize) < NUM_TILES, "tile id {id} out of range");
        self.cells[row][col] = id;
    }

    pub fn rows(&self) -> &[[u8; SEGMENT_SIZE]; SEGMENT_SIZE] {
        &self.cells
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.cells.iter().flat_map(|r| r.iter().copied())
    }

    /// Per-tile-type counts; sums to 256.
    pub fn counts(&self) -> [u32; NUM_TILES] {
        let mut out = [0u32; NUM_TILES];
        for id in self.iter() {
            out[id as usize] += 1;
        }
        out
    }

    pub fn mirrored(&self) -> Self {
        let mut cells = self.cells;
        for row in cells.iter_mut() {
            row.reverse();
        }
        TileGrid { cells }
    }

    /// Fraction of cells equal between two grids.
    pub fn agreement(&self, other: &TileGrid) -> f64 {
        let same = self.iter().zip(other.iter()).filter(|(a, b)| a == b).count();
        same as f64 / (SEGMENT_SIZE * SEGMENT_SIZE) as f64
    }

    /// One-hot encode into the 17x16x16 model representation.
    pub fn one_hot(&self) -> OneHotGrid {
        let mut channels = Array3::<u8>::zeros((NUM_TILES, SEGMENT_SIZE, SEGMENT_SIZE));
        for r in 0..SEGMENT_SIZE {
            for c in 0..SEGMENT_SIZE {
                channels[[self.cells[r][c] as usize, r, c]] = 1;
            }
        }
        OneHotGrid { channels }
    }

    /// Blended segment text: one line per row, '~' for KI background.
    pub fn to_text_lines(&self) -> Vec<String> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|&id| tiles::segment_char(id)).collect())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.to_text_lines().join("\n");
        s.push('\n');
        s
    }

    pub fn parse_text_lines<S: AsRef<str>>(lines: &[S]) -> Result<Self, CorpusError> {
        if lines.len() != SEGMENT_SIZE {
            return Err(CorpusError::Shape(format!("expected 16 lines, got {}", lines.len())));
        }
        let mut cells = [[0u8; SEGMENT_SIZE]; SEGMENT_SIZE];
        for (r, line) in lines.iter().enumerate() {
            let line = line.as_ref();
            let mut n = 0;
            for (c, ch) in line.chars().enumerate() {
                if c >= SEGMENT_SIZE {
                    return Err(CorpusError::RaggedLines { line: r });
                }
                cells[r][c] = tiles::from_segment_char(ch)
                    .ok_or(CorpusError::UnknownCharacter { line: r, col: c, ch })?;
                n += 1;
            }
            if n != SEGMENT_SIZE {
                return Err(CorpusError::RaggedLines { line: r });
            }
        }
        Ok(TileGrid { cells })
    }

    pub fn parse_text(text: &str) -> Result<Self, CorpusError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        Self::parse_text_lines(&lines)
    }
}

impl fmt::Debug for TileGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "TileGrid")?;
        for line in self.to_text_lines() {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

impl fmt::Display for TileGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// 17x16x16 binary tensor; exactly one hot channel per cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHotGrid {
    channels: Array3<u8>,
}

impl OneHotGrid {
    pub fn channels(&self) -> &Array3<u8> {
        &self.channels
    }

    pub fn to_tensor<T: Scalar>(&self) -> Array3<T> {
        self.channels.mapv(|v| if v == 1 { T::one() } else { T::zero() })
    }

    /// Write into a flat (17*16*16) slice, channel-major.
    pub fn write_into<T: Scalar>(&self, out: &mut [T]) {
        for (dst, &v) in out.iter_mut().zip(self.channels.iter()) {
            *dst = if v == 1 { T::one() } else { T::zero() };
        }
    }

    pub fn decode(&self) -> TileGrid {
        argmax_decode(self.channels.view()).expect("one-hot grid has a valid shape")
    }
}

/// Pick the highest channel per cell; ties go to the lowest channel id.
pub fn argmax_decode<T: PartialOrd + Copy>(tensor: ArrayView3<T>) -> Result<TileGrid, CorpusError> {
    if tensor.dim() != (NUM_TILES, SEGMENT_SIZE, SEGMENT_SIZE) {
        return Err(CorpusError::Shape(format!(
            "expected a 17x16x16 tensor, got {:?}",
            tensor.dim()
        )));
    }
    let mut cells = [[0u8; SEGMENT_SIZE]; SEGMENT_SIZE];
    for r in 0..SEGMENT_SIZE {
        for c in 0..SEGMENT_SIZE {
            cells[r][c] = argmax_cell(|ch| tensor[[ch, r, c]]);
        }
    }
    Ok(TileGrid { cells })
}

/// Argmax over a flat channel-major slice of length 17*16*16.
pub fn argmax_decode_slice<T: PartialOrd + Copy>(data: &[T]) -> Result<TileGrid, CorpusError> {
    const PLANE: usize = SEGMENT_SIZE * SEGMENT_SIZE;
    if data.len() != NUM_TILES * PLANE {
        return Err(CorpusError::Shape(format!(
            "expected {} values, got {}",
            NUM_TILES * PLANE,
            data.len()
        )));
    }
    let mut cells = [[0u8; SEGMENT_SIZE]; SEGMENT_SIZE];
    for (r, row) in cells.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            let i = r * SEGMENT_SIZE + c;
            *cell = argmax_cell(|ch| data[ch * PLANE + i]);
        }
    }
    Ok(TileGrid { cells })
}

fn argmax_cell<T: PartialOrd + Copy>(value: impl Fn(usize) -> T) -> u8 {
    let mut best = 0usize;
    let mut best_v = value(0);
    for ch in 1..NUM_TILES {
        let v = value(ch);
        // NaN never wins; strict '>' keeps the lowest id on ties.
        let unordered = |x: T| x.partial_cmp(&x).is_none();
        if v > best_v || (unordered(best_v) && !unordered(v)) {
            best = ch;
            best_v = v;
        }
    }
    best as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_sets_single_channel() {
        let mut g = TileGrid::filled(2);
        g.set(0, 0, 5);
        let oh = g.one_hot();
        for ch in 0..NUM_TILES {
            assert_eq!(oh.channels()[[ch, 0, 0]], u8::from(ch == 5));
        }
        let sums = oh.channels().sum_axis(ndarray::Axis(0));
        assert!(sums.iter().all(|&s| s == 1));
    }

    #[test]
    fn argmax_tie_breaks_low() {
        let mut t = Array3::<f32>::zeros((17, 16, 16));
        t[[3, 4, 4]] = 0.9;
        t[[9, 4, 4]] = 0.9;
        let g = argmax_decode(t.view()).unwrap();
        assert_eq!(g.get(4, 4), 3);
        assert_eq!(g.get(0, 0), 0);
    }

    #[test]
    fn argmax_rejects_bad_shape() {
        let t = Array3::<f32>::zeros((16, 16, 16));
        assert!(matches!(argmax_decode(t.view()), Err(CorpusError::Shape(_))));
        assert!(argmax_decode_slice(&[0.0f32; 10]).is_err());
    }

    #[test]
    fn argmax_ignores_nan() {
        let mut t = Array3::<f64>::zeros((17, 16, 16));
        t[[0, 0, 0]] = f64::NAN;
        t[[7, 0, 0]] = 0.5;
        assert_eq!(argmax_decode(t.view()).unwrap().get(0, 0), 7);
    }

    #[test]
    fn text_background_forms() {
        let smb = TileGrid::filled(2).to_text_lines();
        assert!(smb.iter().all(|l| l == "----------------"));
        let ki = TileGrid::filled(16).to_text_lines();
        assert!(ki.iter().all(|l| l == "~~~~~~~~~~~~~~~~"));
    }

    #[test]
    fn text_errors() {
        let mut lines = vec!["----------------".to_string(); 16];
        lines[3] = "-------!--------".into();
        assert!(matches!(
            TileGrid::parse_text_lines(&lines),
            Err(CorpusError::UnknownCharacter { line: 3, col: 7, ch: '!' })
        ));
        lines[3] = "---".into();
        assert!(matches!(TileGrid::parse_text_lines(&lines), Err(CorpusError::RaggedLines { line: 3 })));
    }

    #[test]
    fn json_form() {
        let mut g = TileGrid::filled(16);
        g.set(15, 0, 0);
        let v = serde_json::to_value(g).unwrap();
        assert_eq!(v["tiles"].as_array().unwrap().len(), 16);
        assert_eq!(v["tiles"][15][0], 0);
        let back: TileGrid = serde_json::from_value(v).unwrap();
        assert_eq!(back, g);
        let bad = serde_json::json!({"tiles": vec![vec![17; 16]; 16]});
        assert!(serde_json::from_value::<TileGrid>(bad).is_err());
    }
}
