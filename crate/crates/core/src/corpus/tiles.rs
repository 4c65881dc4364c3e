use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of distinct tile types across both games.
pub const NUM_TILES: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Game {
    #[serde(rename = "SMB")]
    Smb,
    #[serde(rename = "KI")]
    Ki,
}

impl Game {
    /// Background tile id for this game.
    pub fn background(self) -> u8 {
        match self {
            Game::Smb => SMB_BACKGROUND,
            Game::Ki => KI_BACKGROUND,
        }
    }

    pub fn tile_ids(self) -> std::ops::RangeInclusive<u8> {
        match self {
            Game::Smb => 0..=10,
            Game::Ki => 11..=16,
        }
    }
}

impl fmt::Display for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Game::Smb => "SMB",
            Game::Ki => "KI",
        })
    }
}

impl std::str::FromStr for Game {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SMB" => Ok(Game::Smb),
            "KI" => Ok(Game::Ki),
            other => Err(format!("unknown game `{other}` (expected SMB or KI)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileType {
    pub id: u8,
    pub vglc_char: char,
    pub game: Game,
    pub display_name: &'static str,
}

pub const SMB_GROUND: u8 = 0;
pub const SMB_BREAKABLE: u8 = 1;
pub const SMB_BACKGROUND: u8 = 2;
pub const SMB_FULL_QUESTION: u8 = 3;
pub const SMB_EMPTY_QUESTION: u8 = 4;
pub const SMB_ENEMY: u8 = 5;
pub const SMB_PIPE_TOP_LEFT: u8 = 6;
pub const SMB_PIPE_TOP_RIGHT: u8 = 7;
pub const SMB_PIPE_BOTTOM_LEFT: u8 = 8;
pub const SMB_PIPE_BOTTOM_RIGHT: u8 = 9;
pub const SMB_COIN: u8 = 10;
pub const KI_PLATFORM: u8 = 11;
pub const KI_MOVABLE_PLATFORM: u8 = 12;
pub const KI_DOOR: u8 = 13;
pub const KI_GROUND: u8 = 14;
pub const KI_HAZARD: u8 = 15;
pub const KI_BACKGROUND: u8 = 16;

/// The encoding table, indexed by tile id.
pub const TILE_TYPES: [TileType; NUM_TILES] = [
    TileType { id: 0, vglc_char: 'X', game: Game::Smb, display_name: "SMB Ground" },
    TileType { id: 1, vglc_char: 'S', game: Game::Smb, display_name: "SMB Breakable" },
    TileType { id: 2, vglc_char: '-', game: Game::Smb, display_name: "SMB Background" },
    TileType { id: 3, vglc_char: '?', game: Game::Smb, display_name: "SMB Full Question" },
    TileType { id: 4, vglc_char: 'Q', game: Game::Smb, display_name: "SMB Empty Question" },
    TileType { id: 5, vglc_char: 'E', game: Game::Smb, display_name: "SMB Enemy" },
    TileType { id: 6, vglc_char: '<', game: Game::Smb, display_name: "SMB Pipe Top Left" },
    TileType { id: 7, vglc_char: '>', game: Game::Smb, display_name: "SMB Pipe Top Right" },
    TileType { id: 8, vglc_char: '[', game: Game::Smb, display_name: "SMB Pipe Bottom Left" },
    TileType { id: 9, vglc_char: ']', game: Game::Smb, display_name: "SMB Pipe Bottom Right" },
    TileType { id: 10, vglc_char: 'o', game: Game::Smb, display_name: "SMB Coin" },
    TileType { id: 11, vglc_char: 'T', game: Game::Ki, display_name: "KI Platform" },
    TileType { id: 12, vglc_char: 'M', game: Game::Ki, display_name: "KI Movable Platform" },
    TileType { id: 13, vglc_char: 'D', game: Game::Ki, display_name: "KI Door" },
    TileType { id: 14, vglc_char: '#', game: Game::Ki, display_name: "KI Ground" },
    TileType { id: 15, vglc_char: 'H', game: Game::Ki, display_name: "KI Hazard" },
    TileType { id: 16, vglc_char: '-', game: Game::Ki, display_name: "KI Background" },
];

/// Character used for KI background in segment text, where '-' would be ambiguous.
pub const KI_BACKGROUND_SEGMENT_CHAR: char = '~';

pub fn tile(id: u8) -> Option<&'static TileType> {
    TILE_TYPES.get(id as usize)
}

/// Resolve a VGLC character within one game's vocabulary.
pub fn from_vglc_char(game: Game, ch: char) -> Option<u8> {
    TILE_TYPES
        .iter()
        .find(|t| t.game == game && t.vglc_char == ch)
        .map(|t| t.id)
}

/// Character for `id` in the blended segment text format.
pub fn segment_char(id: u8) -> char {
    if id == KI_BACKGROUND {
        KI_BACKGROUND_SEGMENT_CHAR
    } else {
        TILE_TYPES[id as usize].vglc_char
    }
}

pub fn from_segment_char(ch: char) -> Option<u8> {
    match ch {
        KI_BACKGROUND_SEGMENT_CHAR => Some(KI_BACKGROUND),
        '-' => Some(SMB_BACKGROUND),
        _ => TILE_TYPES
            .iter()
            .find(|t| t.vglc_char == ch && t.id != KI_BACKGROUND)
            .map(|t| t.id),
    }
}
