//! FrozenLake grid worlds compiled to explicit [`FiniteMdp`]s.
//!
//! States are cells in row-major order. Actions follow the usual numbering
//! `LEFT = 0, DOWN = 1, RIGHT = 2, UP = 3`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, MdpBuilder};

pub const LEFT: usize = 0;
pub const DOWN: usize = 1;
pub const RIGHT: usize = 2;
pub const UP: usize = 3;
pub const NUM_ACTIONS: usize = 4;

pub const FROZENLAKE_4X4: &str = include_str!("../maps/frozenlake4x4.txt");
pub const FROZENLAKE_8X8: &str = include_str!("../maps/frozenlake8x8.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tile {
    Start,
    Frozen,
    Hole,
    Goal,
}

impl Tile {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'S' => Some(Tile::Start),
            'F' => Some(Tile::Frozen),
            'H' => Some(Tile::Hole),
            'G' => Some(Tile::Goal),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match self {
            Tile::Start => 'S',
            Tile::Frozen => 'F',
            Tile::Hole => 'H',
            Tile::Goal => 'G',
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Tile::Hole | Tile::Goal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    tiles: Vec<Tile>,
}

impl GridMap {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_states(&self) -> usize {
        self.rows * self.cols
    }

    pub fn tile(&self, row: usize, col: usize) -> Tile {
        self.tiles[row * self.cols + col]
    }

    pub fn state(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, state: usize) -> (usize, usize) {
        (state / self.cols, state % self.cols)
    }

    pub fn start(&self) -> (usize, usize) {
        let s = self.tiles.iter().position(|&t| t == Tile::Start).unwrap();
        self.coords(s)
    }

    pub fn goals(&self) -> Vec<(usize, usize)> {
        self.cells_where(|t| t == Tile::Goal)
    }

    pub fn terminals(&self) -> Vec<(usize, usize)> {
        self.cells_where(Tile::is_terminal)
    }

    fn cells_where(&self, pred: impl Fn(Tile) -> bool) -> Vec<(usize, usize)> {
        (0..self.num_states())
            .filter(|&s| pred(self.tiles[s]))
            .map(|s| self.coords(s))
            .collect()
    }

    /// Cell reached by moving one step in `action`, clamped at the walls.
    pub fn step(&self, row: usize, col: usize, action: usize) -> (usize, usize) {
        match action {
            LEFT => (row, col.saturating_sub(1)),
            DOWN => ((row + 1).min(self.rows - 1), col),
            RIGHT => (row, (col + 1).min(self.cols - 1)),
            UP => (row.saturating_sub(1), col),
            _ => panic!("action {action} out of range"),
        }
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let line: String = (0..self.cols).map(|c| self.tile(r, c).to_char()).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Parses a grid of `S`, `F`, `H`, `G` characters, one row per line.
/// Trailing blank lines and `\r` are ignored.
pub fn parse_map(text: &str) -> Result<GridMap> {
    let mut lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(Error::MapParse {
            line: 1,
            msg: "empty map".into(),
        });
    }
    let cols = lines[0].chars().count();
    let mut tiles = Vec::with_capacity(cols * lines.len());
    let mut start = None;
    for (i, line) in lines.iter().enumerate() {
        let lineno = i + 1;
        let width = line.chars().count();
        if width == 0 {
            return Err(Error::MapParse {
                line: lineno,
                msg: "empty row".into(),
            });
        }
        if width != cols {
            return Err(Error::MapParse {
                line: lineno,
                msg: format!("ragged row: {width} tiles, expected {cols}"),
            });
        }
        for (c, ch) in line.chars().enumerate() {
            let tile = Tile::from_char(ch).ok_or_else(|| Error::MapParse {
                line: lineno,
                msg: format!("unknown tile {ch:?}"),
            })?;
            if tile == Tile::Start {
                if let Some((r0, c0)) = start {
                    return Err(Error::MapParse {
                        line: lineno,
                        msg: format!("second start tile at column {c}, first at ({r0}, {c0})"),
                    });
                }
                start = Some((i, c));
            }
            tiles.push(tile);
        }
    }
    let rows = lines.len();
    if start.is_none() {
        return Err(Error::MapParse {
            line: rows,
            msg: "missing start tile 'S'".into(),
        });
    }
    if !tiles.contains(&Tile::Goal) {
        return Err(Error::MapParse {
            line: rows,
            msg: "missing goal tile 'G'".into(),
        });
    }
    Ok(GridMap { rows, cols, tiles })
}

/// Resolves `frozenlake4x4`, `frozenlake8x8` or a path to a map file.
pub fn load_map(name_or_path: &str) -> Result<GridMap> {
    match name_or_path {
        "frozenlake4x4" => parse_map(FROZENLAKE_4X4),
        "frozenlake8x8" => parse_map(FROZENLAKE_8X8),
        path => {
            let text = std::fs::read_to_string(Path::new(path)).map_err(|source| Error::Io {
                path: path.into(),
                source,
            })?;
            parse_map(&text).map_err(|e| e.context(format!("map file {path}")))
        }
    }
}

/// Where a move actually goes: the intended direction or one of the two
/// perpendicular ones. `p_left_perp` is the action preceding the intended one
/// in the cyclic order LEFT, DOWN, RIGHT, UP, `p_right_perp` the one after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipModel {
    pub p_intended: f64,
    pub p_left_perp: f64,
    pub p_right_perp: f64,
}

impl Default for SlipModel {
    fn default() -> Self {
        Self {
            p_intended: 1.0 / 3.0,
            p_left_perp: 1.0 / 3.0,
            p_right_perp: 1.0 / 3.0,
        }
    }
}

impl SlipModel {
    pub fn deterministic() -> Self {
        Self {
            p_intended: 1.0,
            p_left_perp: 0.0,
            p_right_perp: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = [self.p_intended, self.p_left_perp, self.p_right_perp];
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "slip probabilities must be non-negative: {p:?}"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "slip probabilities sum to {sum}, not 1"
            )));
        }
        Ok(())
    }
}

/// Compiles the grid into a 4-action MDP. Holes and goals are absorbing with
/// zero reward; elsewhere the reward is the probability of arriving at a goal.
pub fn build_mdp(map: &GridMap, slip: SlipModel, gamma: f64) -> Result<FiniteMdp> {
    slip.validate()?;
    let mut builder = MdpBuilder::new(map.num_states(), NUM_ACTIONS, gamma).r_max(1.0);
    for row in 0..map.rows {
        for col in 0..map.cols {
            let x = map.state(row, col);
            for u in 0..NUM_ACTIONS {
                if map.tile(row, col).is_terminal() {
                    builder = builder.pair(x, u, 0.0, &[(x, 1.0)]);
                    continue;
                }
                let outcomes = [
                    ((u + NUM_ACTIONS - 1) % NUM_ACTIONS, slip.p_left_perp),
                    (u, slip.p_intended),
                    ((u + 1) % NUM_ACTIONS, slip.p_right_perp),
                ];
                let mut succ = Vec::with_capacity(3);
                let mut reward = 0.0;
                for (dir, p) in outcomes {
                    if p == 0.0 {
                        continue;
                    }
                    let (r, c) = map.step(row, col, dir);
                    if map.tile(r, c) == Tile::Goal {
                        reward += p;
                    }
                    succ.push((map.state(r, c), p));
                }
                builder = builder.pair(x, u, reward, &succ);
            }
        }
    }
    builder.build()
}
