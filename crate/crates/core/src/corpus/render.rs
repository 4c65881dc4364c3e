use image::{Rgb, RgbImage};

use super::grid::{TileGrid, SEGMENT_SIZE};
use super::tiles::NUM_TILES;

/// Fixed tile colors, indexed by tile id.
pub const PALETTE: [[u8; 3]; NUM_TILES] = [
    [139, 69, 19],   // 0  SMB ground: brown
    [205, 102, 29],  // 1  SMB breakable: orange brick
    [107, 140, 255], // 2  SMB background: sky blue
    [255, 215, 0],   // 3  SMB full question: gold
    [160, 120, 60],  // 4  SMB empty question: dull tan
    [200, 30, 30],   // 5  SMB enemy: red
    [0, 170, 0],     // 6  pipe top left
    [0, 140, 0],     // 7  pipe top right
    [0, 120, 40],    // 8  pipe bottom left
    [0, 100, 30],    // 9  pipe bottom right
    [255, 255, 120], // 10 SMB coin: pale yellow
    [230, 230, 230], // 11 KI platform: light grey
    [150, 90, 200],  // 12 KI movable platform: purple
    [90, 50, 20],    // 13 KI door: dark brown
    [70, 70, 90],    // 14 KI ground: slate
    [255, 60, 160],  // 15 KI hazard: magenta
    [10, 10, 40],    // 16 KI background: night navy
];

pub fn palette_color(id: u8) -> Rgb<u8> {
    Rgb(PALETTE[id as usize])
}

/// Flat-color rendering, `tile_px` pixels per tile side. Panics if `tile_px` is 0.
pub fn render_image(grid: &TileGrid, tile_px: u32) -> RgbImage {
    assert!(tile_px >= 1, "tile_px must be at least 1");
    let side = SEGMENT_SIZE as u32 * tile_px;
    RgbImage::from_fn(side, side, |x, y| {
        palette_color(grid.get((y / tile_px) as usize, (x / tile_px) as usize))
    })
}
