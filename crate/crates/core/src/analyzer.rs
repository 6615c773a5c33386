//! Structure analysis: detects geometric primitives (rows, stacks, L-shapes,
//! T-shapes) in a grid and renders the structured description that gets
//! injected into planner prompts.
//!
//! Detection is deterministic. Ground-level maximal monochromatic segments
//! are combined into T-shapes first (the more constrained reading), then
//! L-shapes, and whatever segments remain are rows. Blocks covered by no
//! primitive are omitted.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{BlockPlacement, Cell, Color, Grid};

/// The four recognized primitive shapes, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Row,
    Stack,
    LShape,
    TShape,
}

/// Which way a primitive runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Row along the x axis.
    AlongX,
    /// Row along the z axis.
    AlongZ,
    /// Stack: a vertical column.
    Vertical,
    /// L-shape: one arm along x, one along z.
    Corner,
    /// T-shape with the base along x and the stem along z.
    BaseXStemZ,
    /// T-shape with the base along z and the stem along x.
    BaseZStemX,
}

/// The extreme cells of a primitive: what an `extend` continues from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Endpoints {
    /// Row or stack: the two ends, lexicographically smaller first.
    Pair { ends: [Cell; 2] },
    /// L-shape: the corner both arms share, plus each arm's far end
    /// (`arm_ends[0]` ends the x arm, `arm_ends[1]` the z arm).
    Corner { junction: Cell, arm_ends: [Cell; 2] },
    /// T-shape: the base cell the stem meets, the base's two ends, and the
    /// stem's far end.
    Tee {
        junction: Cell,
        base_ends: [Cell; 2],
        stem_end: Cell,
    },
}

/// One detected structure: connected, monochromatic, maximal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub color: Color,
    pub orientation: Orientation,
    pub cells: BTreeSet<Cell>,
    pub endpoints: Endpoints,
}

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("placement at ({0}, {1}, {2}) does not extend the shape collinearly", cell.0, cell.1, cell.2)]
    ShapeBroken { cell: Cell },
}

/// A maximal monochromatic ground-level segment along one horizontal axis.
/// Intermediate form only; segments become rows, L-arms, or T-parts.
#[derive(Debug, Clone)]
struct Segment {
    along_x: bool,
    color: Color,
    /// Ground cells in increasing axis order.
    cells: Vec<Cell>,
}

impl Segment {
    fn first(&self) -> Cell {
        self.cells[0]
    }

    fn last(&self) -> Cell {
        *self.cells.last().expect("segments are non-empty")
    }

    fn is_endpoint(&self, cell: Cell) -> bool {
        cell == self.first() || cell == self.last()
    }

    fn is_interior(&self, cell: Cell) -> bool {
        self.cells.contains(&cell) && !self.is_endpoint(cell)
    }

    /// The single cell two perpendicular segments could share, if both
    /// actually contain it.
    fn crossing(&self, other: &Segment) -> Option<Cell> {
        debug_assert_ne!(self.along_x, other.along_x);
        let (x_seg, z_seg) = if self.along_x {
            (self, other)
        } else {
            (other, self)
        };
        let candidate = (z_seg.first().0, 0, x_seg.first().2);
        (x_seg.cells.contains(&candidate) && z_seg.cells.contains(&candidate))
            .then_some(candidate)
    }
}

/// Detects all maximal primitives in a gravity-valid grid. Output order is
/// deterministic: by kind, then by lexicographically smallest cell.
pub fn analyze(grid: &Grid) -> Vec<Primitive> {
    let mut primitives = stacks(grid);

    let segments = ground_segments(grid);
    let mut used = vec![false; segments.len()];

    // T-shapes first: when a block set admits both a T and an L reading,
    // the more constrained shape wins.
    let mut tees = Vec::new();
    for (b, base) in segments.iter().enumerate() {
        for (s, stem) in segments.iter().enumerate() {
            if b == s || base.along_x == stem.along_x || base.color != stem.color {
                continue;
            }
            if let Some(junction) = base.crossing(stem) {
                if base.is_interior(junction) && stem.is_endpoint(junction) {
                    tees.push((min_cell_of(base, stem), b, s, junction));
                }
            }
        }
    }
    tees.sort();
    for (_, b, s, junction) in tees {
        if used[b] || used[s] {
            continue;
        }
        used[b] = true;
        used[s] = true;
        primitives.push(tee_primitive(&segments[b], &segments[s], junction));
    }

    let mut corners = Vec::new();
    for (a, first) in segments.iter().enumerate() {
        for (b, second) in segments.iter().enumerate().skip(a + 1) {
            if first.along_x == second.along_x || first.color != second.color {
                continue;
            }
            if let Some(junction) = first.crossing(second) {
                if first.is_endpoint(junction) && second.is_endpoint(junction) {
                    corners.push((min_cell_of(first, second), a, b, junction));
                }
            }
        }
    }
    corners.sort();
    for (_, a, b, junction) in corners {
        if used[a] || used[b] {
            continue;
        }
        used[a] = true;
        used[b] = true;
        primitives.push(corner_primitive(&segments[a], &segments[b], junction));
    }

    for (i, segment) in segments.iter().enumerate() {
        if !used[i] {
            primitives.push(Primitive {
                kind: PrimitiveKind::Row,
                color: segment.color,
                orientation: if segment.along_x {
                    Orientation::AlongX
                } else {
                    Orientation::AlongZ
                },
                cells: segment.cells.iter().copied().collect(),
                endpoints: Endpoints::Pair {
                    ends: [segment.first(), segment.last()],
                },
            });
        }
    }

    primitives.sort_by_key(|p| (p.kind, *p.cells.iter().next().expect("non-empty")));
    primitives
}

fn min_cell_of(a: &Segment, b: &Segment) -> Cell {
    a.first().min(b.first())
}

fn tee_primitive(base: &Segment, stem: &Segment, junction: Cell) -> Primitive {
    let stem_end = if stem.first() == junction {
        stem.last()
    } else {
        stem.first()
    };
    Primitive {
        kind: PrimitiveKind::TShape,
        color: base.color,
        orientation: if base.along_x {
            Orientation::BaseXStemZ
        } else {
            Orientation::BaseZStemX
        },
        cells: base.cells.iter().chain(&stem.cells).copied().collect(),
        endpoints: Endpoints::Tee {
            junction,
            base_ends: [base.first(), base.last()],
            stem_end,
        },
    }
}

fn corner_primitive(a: &Segment, b: &Segment, junction: Cell) -> Primitive {
    let far_end = |seg: &Segment| {
        if seg.first() == junction {
            seg.last()
        } else {
            seg.first()
        }
    };
    let (x_arm, z_arm) = if a.along_x { (a, b) } else { (b, a) };
    Primitive {
        kind: PrimitiveKind::LShape,
        color: a.color,
        orientation: Orientation::Corner,
        cells: a.cells.iter().chain(&b.cells).copied().collect(),
        endpoints: Endpoints::Corner {
            junction,
            arm_ends: [far_end(x_arm), far_end(z_arm)],
        },
    }
}

fn stacks(grid: &Grid) -> Vec<Primitive> {
    let dims = grid.dims();
    let mut found = Vec::new();
    for x in 0..dims.width {
        for z in 0..dims.depth {
            let mut y = 0;
            while y < dims.height {
                let Some(color) = grid.get(x, y, z) else {
                    break; // gravity-valid: nothing sits above an empty cell
                };
                let start = y;
                while y < dims.height && grid.get(x, y, z) == Some(color) {
                    y += 1;
                }
                if y - start >= 2 {
                    found.push(Primitive {
                        kind: PrimitiveKind::Stack,
                        color,
                        orientation: Orientation::Vertical,
                        cells: (start..y).map(|yy| (x, yy, z)).collect(),
                        endpoints: Endpoints::Pair {
                            ends: [(x, start, z), (x, y - 1, z)],
                        },
                    });
                }
            }
        }
    }
    found
}

fn ground_segments(grid: &Grid) -> Vec<Segment> {
    let dims = grid.dims();
    let mut segments = Vec::new();
    let mut scan = |along_x: bool| {
        let (outer, inner) = if along_x {
            (dims.depth, dims.width)
        } else {
            (dims.width, dims.depth)
        };
        for o in 0..outer {
            let mut run: Vec<Cell> = Vec::new();
            let mut run_color = None;
            for i in 0..=inner {
                let cell = if along_x { (i, 0, o) } else { (o, 0, i) };
                let color = if i < inner {
                    grid.get(cell.0, cell.1, cell.2)
                } else {
                    None // sentinel: flush the final run
                };
                if color != run_color {
                    if run.len() >= 2 {
                        segments.push(Segment {
                            along_x,
                            color: run_color.expect("non-empty run has a color"),
                            cells: std::mem::take(&mut run),
                        });
                    }
                    run.clear();
                    run_color = color;
                }
                if color.is_some() {
                    run.push(cell);
                }
            }
        }
    };
    scan(true);
    scan(false);
    segments
}

/// Renders one deterministic line per primitive; the planner prompt embeds
/// this text verbatim. An empty list renders as "grid is empty".
pub fn describe(primitives: &[Primitive]) -> String {
    if primitives.is_empty() {
        return "grid is empty".to_string();
    }
    let xz = |c: Cell| format!("({}, {})", c.0, c.2);
    primitives
        .iter()
        .map(|p| match (&p.endpoints, p.orientation) {
            (Endpoints::Pair { ends }, Orientation::Vertical) => format!(
                "stack: {}, height {}, at {}",
                p.color,
                p.cells.len(),
                xz(ends[0])
            ),
            (Endpoints::Pair { ends }, orientation) => format!(
                "row: {}, length {}, along {}, from {} to {}",
                p.color,
                p.cells.len(),
                if orientation == Orientation::AlongX { "x" } else { "z" },
                xz(ends[0]),
                xz(ends[1])
            ),
            (Endpoints::Corner { junction, arm_ends }, _) => format!(
                "l_shape: {}, corner at {}, arms to {} and {}",
                p.color,
                xz(*junction),
                xz(arm_ends[0]),
                xz(arm_ends[1])
            ),
            (
                Endpoints::Tee {
                    junction,
                    base_ends,
                    stem_end,
                },
                orientation,
            ) => {
                let (base_axis, stem_axis) = if orientation == Orientation::BaseXStemZ {
                    ("x", "z")
                } else {
                    ("z", "x")
                };
                format!(
                    "t_shape: {}, base along {} from {} to {}, stem along {} to {}, junction at {}",
                    p.color,
                    base_axis,
                    xz(base_ends[0]),
                    xz(base_ends[1]),
                    stem_axis,
                    xz(*stem_end),
                    xz(*junction)
                )
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Recomputes a primitive's endpoints after extension placements have been
/// applied. Placements must lie on the primitive's own line (for rows and
/// stacks) or on one of its arm lines, on the far side of the junction
/// (for L- and T-shapes); anything else breaks the shape.
pub fn endpoints_after(
    primitive: &Primitive,
    applied: &BTreeSet<BlockPlacement>,
) -> Result<Endpoints, AnalyzerError> {
    let applied_cells: Vec<Cell> = applied.iter().map(|p| (p.x, p.y, p.z)).collect();
    match primitive.endpoints {
        Endpoints::Pair { ends } => {
            let axis = match primitive.orientation {
                Orientation::AlongX => 0,
                Orientation::Vertical => 1,
                _ => 2,
            };
            let mut lo = ends[0];
            let mut hi = ends[1];
            for &cell in &applied_cells {
                if !on_line(cell, ends[0], axis) {
                    return Err(AnalyzerError::ShapeBroken { cell });
                }
                lo = lo.min(cell);
                hi = hi.max(cell);
            }
            Ok(Endpoints::Pair { ends: [lo, hi] })
        }
        Endpoints::Corner { junction, arm_ends } => {
            let mut arm_ends = arm_ends;
            for &cell in &applied_cells {
                // arm_ends[0] ends the x arm, arm_ends[1] the z arm.
                let arm = if on_line(cell, junction, 0) {
                    0
                } else if on_line(cell, junction, 2) {
                    1
                } else {
                    return Err(AnalyzerError::ShapeBroken { cell });
                };
                arm_ends[arm] = beyond(junction, arm_ends[arm], cell)
                    .ok_or(AnalyzerError::ShapeBroken { cell })?;
            }
            Ok(Endpoints::Corner { junction, arm_ends })
        }
        Endpoints::Tee {
            junction,
            base_ends,
            stem_end,
        } => {
            let base_axis = if primitive.orientation == Orientation::BaseXStemZ {
                0
            } else {
                2
            };
            let mut base_ends = base_ends;
            let mut stem_end = stem_end;
            for &cell in &applied_cells {
                if on_line(cell, base_ends[0], base_axis) {
                    base_ends[0] = base_ends[0].min(cell);
                    base_ends[1] = base_ends[1].max(cell);
                } else if on_line(cell, stem_end, 2 - base_axis) {
                    stem_end = beyond(junction, stem_end, cell)
                        .ok_or(AnalyzerError::ShapeBroken { cell })?;
                } else {
                    return Err(AnalyzerError::ShapeBroken { cell });
                }
            }
            Ok(Endpoints::Tee {
                junction,
                base_ends,
                stem_end,
            })
        }
    }
}

/// True when `cell` lies on the line through `anchor` along `axis`
/// (0 = x, 1 = y, 2 = z): the other two coordinates match.
fn on_line(cell: Cell, anchor: Cell, axis: usize) -> bool {
    let c = [cell.0, cell.1, cell.2];
    let a = [anchor.0, anchor.1, anchor.2];
    (0..3).all(|i| i == axis || c[i] == a[i])
}

/// For an arm running from `junction` out to `end`: returns the farther of
/// `end` and `cell` when `cell` is on the junction's far side, or `None`
/// when `cell` crosses back past the junction.
fn beyond(junction: Cell, end: Cell, cell: Cell) -> Option<Cell> {
    let toward_end = |c: Cell| {
        (c.0 as i64 - junction.0 as i64)
            + (c.1 as i64 - junction.1 as i64)
            + (c.2 as i64 - junction.2 as i64)
    };
    let sign = toward_end(end).signum();
    let offset = toward_end(cell) * sign;
    if offset < 0 {
        return None;
    }
    Some(if offset > toward_end(end) * sign { cell } else { end })
}
