//! Voxel grid data model: a bounded 3-D occupancy map with a gravity
//! constraint, the column placement rule, grid diffing, and the
//! block-level F1 metric.
//!
//! Coordinates are `(x, y, z)` with `y` vertical. A block may occupy
//! level `y > 0` only if the cell directly below it is occupied, so a
//! grid built through [`Grid::place_block`] is gravity-valid by
//! construction.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A grid cell as `(x, y, z)`. Tuple ordering gives the natural
/// lexicographic ordering used by cell sets throughout.
pub type Cell = (u32, u32, u32);

/// Block color. Exactly six values; parsing any other name is an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
    Green,
    Orange,
    Yellow,
    Purple,
}

impl Color {
    /// All colors in canonical order. Used for deterministic tie-breaks.
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Blue,
        Color::Green,
        Color::Orange,
        Color::Yellow,
        Color::Purple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Blue => "blue",
            Color::Green => "green",
            Color::Orange => "orange",
            Color::Yellow => "yellow",
            Color::Purple => "purple",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Color {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Color::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| GridError::UnknownColor {
                name: s.to_string(),
            })
    }
}

/// Grid extents: `width` along x, `height` along y (vertical), `depth` along z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub width: u32,
    pub height: u32,
    pub depth: u32,
}

impl GridDims {
    pub fn new(width: u32, height: u32, depth: u32) -> Result<Self, GridError> {
        if width == 0 || height == 0 || depth == 0 {
            return Err(GridError::EmptyDims);
        }
        Ok(GridDims {
            width,
            height,
            depth,
        })
    }

    pub fn contains_column(&self, x: u32, z: u32) -> bool {
        x < self.width && z < self.depth
    }

    pub fn contains(&self, x: u32, y: u32, z: u32) -> bool {
        x < self.width && y < self.height && z < self.depth
    }
}

impl Default for GridDims {
    fn default() -> Self {
        GridDims {
            width: 9,
            height: 5,
            depth: 9,
        }
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.depth)
    }
}

/// One placed block: cell coordinates plus color.
///
/// Ordering is lexicographic on `(x, z, y, color)`, matching the
/// serialization order of grid files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockPlacement {
    pub x: u32,
    pub y: u32,
    pub z: u32,
    pub color: Color,
}

impl BlockPlacement {
    pub fn new(x: u32, y: u32, z: u32, color: Color) -> Self {
        BlockPlacement { x, y, z, color }
    }

    fn sort_key(&self) -> (u32, u32, u32, Color) {
        (self.x, self.z, self.y, self.color)
    }
}

impl PartialOrd for BlockPlacement {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BlockPlacement {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("unknown color \"{name}\"")]
    UnknownColor { name: String },
    #[error("grid dims must be at least 1 along every axis")]
    EmptyDims,
    #[error("column ({x}, {z}) is outside the {width}x{depth} grid plane")]
    ColumnOutOfBounds {
        x: u32,
        z: u32,
        width: u32,
        depth: u32,
    },
    #[error("column ({x}, {z}) is full: all {height} levels are occupied")]
    ColumnFull { x: u32, z: u32, height: u32 },
    #[error("cell ({x}, {y}, {z}) is outside the {dims} grid")]
    CellOutOfBounds { x: u32, y: u32, z: u32, dims: GridDims },
    #[error("cell ({x}, {y}, {z}) is already occupied")]
    CellOccupied { x: u32, y: u32, z: u32 },
    #[error("block at ({x}, {y}, {z}) would float: the level below is empty")]
    FloatingBlock { x: u32, y: u32, z: u32 },
    #[error("grid dims mismatch: {a} vs {b}")]
    DimsMismatch { a: GridDims, b: GridDims },
    #[error("blocks[{index}]: {source}")]
    InvalidBlock {
        index: usize,
        #[source]
        source: Box<GridError>,
    },
    #[error("grid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// A gravity or bounds violation found by [`Grid::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GridViolation {
    /// Occupied cell at `y > 0` whose supporting cell below is empty.
    Floating { x: u32, y: u32, z: u32 },
    /// Occupied cell outside the declared dims.
    OutOfBounds { x: u32, y: u32, z: u32 },
}

/// Wire format of a grid file.
#[derive(Serialize, Deserialize)]
struct GridDoc {
    dims: GridDims,
    blocks: Vec<BlockPlacement>,
}

/// Immutable voxel grid. All mutating operations return a new grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    dims: GridDims,
    cells: BTreeMap<(u32, u32, u32), Color>,
}

impl Grid {
    pub fn new(dims: GridDims) -> Self {
        Grid {
            dims,
            cells: BTreeMap::new(),
        }
    }

    /// Builds a grid from explicit placements, enforcing bounds, uniqueness,
    /// and the gravity constraint. Errors carry the offending block's index.
    pub fn from_blocks(
        dims: GridDims,
        blocks: impl IntoIterator<Item = BlockPlacement>,
    ) -> Result<Self, GridError> {
        let mut grid = Grid::new(dims);
        let mut index_of = BTreeMap::new();
        for (index, b) in blocks.into_iter().enumerate() {
            let positional = |source: GridError| GridError::InvalidBlock {
                index,
                source: Box::new(source),
            };
            if !dims.contains(b.x, b.y, b.z) {
                return Err(positional(GridError::CellOutOfBounds {
                    x: b.x,
                    y: b.y,
                    z: b.z,
                    dims,
                }));
            }
            if grid.cells.insert((b.x, b.y, b.z), b.color).is_some() {
                return Err(positional(GridError::CellOccupied {
                    x: b.x,
                    y: b.y,
                    z: b.z,
                }));
            }
            index_of.insert((b.x, b.y, b.z), index);
        }
        // Gravity is checked after all inserts; files may list blocks in any order.
        if let Some(GridViolation::Floating { x, y, z }) = grid.validate().first().copied() {
            return Err(GridError::InvalidBlock {
                index: index_of[&(x, y, z)],
                source: Box::new(GridError::FloatingBlock { x, y, z }),
            });
        }
        Ok(grid)
    }

    /// Builds a grid without any validation. For constructing deliberately
    /// invalid grids in tests of [`Grid::validate`]; everything else should
    /// go through [`Grid::from_blocks`] or [`Grid::place_block`].
    pub fn from_cells_unchecked(
        dims: GridDims,
        cells: impl IntoIterator<Item = ((u32, u32, u32), Color)>,
    ) -> Self {
        Grid {
            dims,
            cells: cells.into_iter().collect(),
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, x: u32, y: u32, z: u32) -> Option<Color> {
        self.cells.get(&(x, y, z)).copied()
    }

    /// Iterates all placements in `(x, y, z)` key order.
    pub fn blocks(&self) -> impl Iterator<Item = BlockPlacement> + '_ {
        self.cells
            .iter()
            .map(|(&(x, y, z), &color)| BlockPlacement { x, y, z, color })
    }

    /// The full occupancy as a placement set.
    pub fn placements(&self) -> BTreeSet<BlockPlacement> {
        self.blocks().collect()
    }

    /// The lowest unoccupied level of column `(x, z)`: where the next block
    /// in that column lands. `None` means the column is full.
    pub fn y_star(&self, x: u32, z: u32) -> Result<Option<u32>, GridError> {
        if !self.dims.contains_column(x, z) {
            return Err(GridError::ColumnOutOfBounds {
                x,
                z,
                width: self.dims.width,
                depth: self.dims.depth,
            });
        }
        Ok((0..self.dims.height).find(|&y| !self.cells.contains_key(&(x, y, z))))
    }

    /// Places one block of `color` at the top of column `(x, z)` and returns
    /// the resulting grid. The input grid is unchanged.
    pub fn place_block(&self, x: u32, z: u32, color: Color) -> Result<Grid, GridError> {
        let y = self.y_star(x, z)?.ok_or(GridError::ColumnFull {
            x,
            z,
            height: self.dims.height,
        })?;
        let mut next = self.clone();
        next.cells.insert((x, y, z), color);
        Ok(next)
    }

    /// Places one block at an explicit cell, verbatim. Errors on occupied
    /// cells, out-of-bounds cells, and floating placements. This is the
    /// direct-3D execution primitive; the ground-plane path never calls it.
    pub fn place_at(&self, x: u32, y: u32, z: u32, color: Color) -> Result<Grid, GridError> {
        if !self.dims.contains(x, y, z) {
            return Err(GridError::CellOutOfBounds {
                x,
                y,
                z,
                dims: self.dims,
            });
        }
        if self.cells.contains_key(&(x, y, z)) {
            return Err(GridError::CellOccupied { x, y, z });
        }
        if y > 0 && !self.cells.contains_key(&(x, y - 1, z)) {
            return Err(GridError::FloatingBlock { x, y, z });
        }
        let mut next = self.clone();
        next.cells.insert((x, y, z), color);
        Ok(next)
    }

    /// Reports every floating block and out-of-bounds cell. An empty result
    /// means the grid satisfies the gravity constraint.
    pub fn validate(&self) -> Vec<GridViolation> {
        let mut violations = Vec::new();
        for (&(x, y, z), _) in &self.cells {
            if !self.dims.contains(x, y, z) {
                violations.push(GridViolation::OutOfBounds { x, y, z });
            } else if y > 0 && !self.cells.contains_key(&(x, y - 1, z)) {
                violations.push(GridViolation::Floating { x, y, z });
            }
        }
        violations
    }

    /// Parses the grid JSON wire format, rejecting gravity violations and
    /// out-of-bounds blocks with positional error messages.
    pub fn from_json(text: &str) -> Result<Grid, GridError> {
        let doc: GridDoc = serde_json::from_str(text)?;
        let dims = GridDims::new(doc.dims.width, doc.dims.height, doc.dims.depth)?;
        Grid::from_blocks(dims, doc.blocks)
    }

    /// Serializes to the grid JSON wire format. Blocks are ordered
    /// lexicographically by `(x, z, y)` so output is byte-stable.
    pub fn to_json(&self) -> String {
        let mut blocks: Vec<BlockPlacement> = self.blocks().collect();
        blocks.sort();
        let doc = GridDoc {
            dims: self.dims,
            blocks,
        };
        serde_json::to_string(&doc).expect("grid serialization cannot fail")
    }
}

/// Sets of placements added and removed between two grids of equal dims.
/// A color change at one cell appears in both sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GridDiff {
    pub added: BTreeSet<BlockPlacement>,
    pub removed: BTreeSet<BlockPlacement>,
}

pub fn grid_diff(before: &Grid, after: &Grid) -> Result<GridDiff, GridError> {
    if before.dims != after.dims {
        return Err(GridError::DimsMismatch {
            a: before.dims,
            b: after.dims,
        });
    }
    let b = before.placements();
    let a = after.placements();
    Ok(GridDiff {
        added: a.difference(&b).copied().collect(),
        removed: b.difference(&a).copied().collect(),
    })
}

/// Dice coefficient between placement sets, comparing full
/// `(color, x, y, z)` tuples: `2|P∩T| / (|P|+|T|)`. Both empty yields 1.0.
pub fn block_f1(predicted: &BTreeSet<BlockPlacement>, target: &BTreeSet<BlockPlacement>) -> f64 {
    if predicted.is_empty() && target.is_empty() {
        return 1.0;
    }
    let overlap = predicted.intersection(target).count();
    2.0 * overlap as f64 / (predicted.len() + target.len()) as f64
}
