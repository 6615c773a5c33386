//! Deterministic plan interpreter. Resolves anchors (absolute, step
//! references, color references), chains positional context between actions,
//! drops every block at its column's lowest free level, and applies the
//! same-color skip-forward rule for extends.
//!
//! No placement ever carries an explicit height: vertical position comes
//! entirely from what is already on the grid.

use serde::Serialize;
use thiserror::Error;

use crate::analyzer::{self, Endpoints, Primitive};
use crate::grid::{BlockPlacement, Color, Grid, GridError};
use crate::plan::{Action, ActionKind, Anchor, Direction, Plan, Reference};

/// Positional context threaded through execution.
#[derive(Debug, Clone, Default)]
pub struct ExecContext {
    /// `(x, z)` of the most recently placed block, if any.
    pub last_position: Option<(u32, u32)>,
    /// Final `(x, z)` of each completed action, in order.
    pub step_positions: Vec<(u32, u32)>,
}

/// A rule that fired while executing one action, recorded for the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RuleFiring {
    /// The extend's start cell held a same-color block, so the start
    /// advanced exactly one step along the extend direction.
    SkipForward { from: (u32, u32), to: (u32, u32) },
    /// A color-referenced extend anchored at the structure's far endpoint
    /// along the extend direction.
    EndpointAnchor { endpoint: (u32, u32) },
    /// An extend without an explicit color took the color of the material
    /// it continues.
    InheritedColor { color: Color },
}

/// What one action did: where it anchored, what it placed, which rules fired.
#[derive(Debug, Clone, Serialize)]
pub struct ActionTrace {
    pub action: usize,
    pub kind: ActionKind,
    /// Resolved anchor, before any skip-forward adjustment.
    pub anchor: (u32, u32),
    pub placed: Vec<BlockPlacement>,
    pub firings: Vec<RuleFiring>,
}

/// Full execution record. Concatenating `placed` across actions reproduces
/// exactly the blocks added to the grid, in placement order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ExecTrace {
    pub actions: Vec<ActionTrace>,
}

impl ExecTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serialization cannot fail")
    }

    pub fn placements(&self) -> impl Iterator<Item = BlockPlacement> + '_ {
        self.actions.iter().flat_map(|a| a.placed.iter().copied())
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("action {action} ({kind}): {source}")]
    Action {
        action: usize,
        kind: ActionKind,
        #[source]
        source: Box<ExecError>,
    },
    #[error("no {color} block on the grid to reference")]
    ColorNotFound { color: Color },
    #[error("reference to step {step}, but only {executed} steps have finished")]
    StepNotExecuted { step: usize, executed: usize },
    #[error("nothing has been placed yet, so there is no previous step")]
    NoPreviousStep,
    #[error("column ({x}, {z}) cannot hold {needed} more block(s)")]
    Overflow { x: u32, z: u32, needed: u32 },
    #[error("stepped off the grid to ({x}, {z})")]
    OffGrid { x: i64, z: i64 },
    #[error("extend starts at empty column ({x}, {z}); no color to inherit")]
    NoColorToInherit { x: u32, z: u32 },
    #[error("missing {field}")]
    MissingField { field: &'static str },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Execution switches. The skip-forward rule is on by default; turning it
/// off exists so its contribution can be measured in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    pub skip_forward: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { skip_forward: true }
    }
}

/// Executes a plan against a starting grid. Returns the resulting grid and
/// a complete trace. Any error aborts the whole execution — no partially
/// applied plan is ever returned.
pub fn execute(plan: &Plan, start: &Grid) -> Result<(Grid, ExecTrace), ExecError> {
    let (grid, trace, _) = execute_with_context(plan, start)?;
    Ok((grid, trace))
}

/// Like [`execute`], but also returns the final positional context, so a
/// caller can resume anchor resolution after a plan prefix (what-if checks
/// dry-run a prefix and then resolve the next action's anchor themselves).
pub fn execute_with_context(
    plan: &Plan,
    start: &Grid,
) -> Result<(Grid, ExecTrace, ExecContext), ExecError> {
    execute_with_options(plan, start, ExecOptions::default())
}

/// Like [`execute`], with explicit [`ExecOptions`].
pub fn execute_with_options(
    plan: &Plan,
    start: &Grid,
    options: ExecOptions,
) -> Result<(Grid, ExecTrace, ExecContext), ExecError> {
    let mut grid = start.clone();
    let mut ctx = ExecContext::default();
    let mut trace = ExecTrace::default();

    for (index, action) in plan.actions.iter().enumerate() {
        let at = |source: ExecError| ExecError::Action {
            action: index,
            kind: action.kind,
            source: Box::new(source),
        };
        let record = execute_action(action, &mut grid, &mut ctx, options).map_err(at)?;
        trace.actions.push(ActionTrace {
            action: index,
            kind: action.kind,
            anchor: record.anchor,
            placed: record.placed,
            firings: record.firings,
        });
    }
    Ok((grid, trace, ctx))
}

struct ActionRecord {
    anchor: (u32, u32),
    placed: Vec<BlockPlacement>,
    firings: Vec<RuleFiring>,
}

fn execute_action(
    action: &Action,
    grid: &mut Grid,
    ctx: &mut ExecContext,
    options: ExecOptions,
) -> Result<ActionRecord, ExecError> {
    let mut firings = Vec::new();
    let anchor = resolve_action_anchor(action, ctx, grid, &mut firings)?;
    let mut placed = Vec::new();

    let mut place_one = |grid: &mut Grid, x: u32, z: u32, color: Color| -> Result<(), ExecError> {
        let y = grid
            .y_star(x, z)?
            .ok_or(ExecError::Overflow { x, z, needed: 1 })?;
        *grid = grid.place_at(x, y, z, color)?;
        placed.push(BlockPlacement::new(x, y, z, color));
        ctx.last_position = Some((x, z));
        Ok(())
    };

    match action.kind {
        ActionKind::Place => {
            let color = action
                .color
                .ok_or(ExecError::MissingField { field: "color" })?;
            place_one(grid, anchor.0, anchor.1, color)?;
        }
        ActionKind::Stack => {
            let color = action
                .color
                .ok_or(ExecError::MissingField { field: "color" })?;
            let count = action
                .count
                .ok_or(ExecError::MissingField { field: "count" })?;
            let free = grid.dims().height
                - grid
                    .y_star(anchor.0, anchor.1)?
                    .unwrap_or(grid.dims().height);
            if count > free {
                return Err(ExecError::Overflow {
                    x: anchor.0,
                    z: anchor.1,
                    needed: count - free,
                });
            }
            for _ in 0..count {
                place_one(grid, anchor.0, anchor.1, color)?;
            }
        }
        ActionKind::Row => {
            let color = action
                .color
                .ok_or(ExecError::MissingField { field: "color" })?;
            let count = action
                .count
                .ok_or(ExecError::MissingField { field: "count" })?;
            let direction = action
                .direction
                .ok_or(ExecError::MissingField { field: "direction" })?;
            for (x, z) in line_cells(anchor, direction, count, grid)? {
                place_one(grid, x, z, color)?;
            }
        }
        ActionKind::Extend => {
            let count = action
                .count
                .ok_or(ExecError::MissingField { field: "count" })?;
            let direction = action
                .direction
                .ok_or(ExecError::MissingField { field: "direction" })?;
            let color = match (action.color, action.anchor) {
                (Some(color), _) => color,
                (
                    None,
                    Anchor::Relative {
                        reference: Reference::Color(color),
                        ..
                    },
                ) => color,
                (None, _) => {
                    // Continue whatever material sits at the start column.
                    let inherited = grid.get(anchor.0, 0, anchor.1).ok_or(
                        ExecError::NoColorToInherit {
                            x: anchor.0,
                            z: anchor.1,
                        },
                    )?;
                    firings.push(RuleFiring::InheritedColor { color: inherited });
                    inherited
                }
            };
            let start = if options.skip_forward {
                apply_skip_forward(grid, anchor, direction, color)?
            } else {
                anchor
            };
            if start != anchor {
                firings.push(RuleFiring::SkipForward {
                    from: anchor,
                    to: start,
                });
            }
            for (x, z) in line_cells(start, direction, count, grid)? {
                place_one(grid, x, z, color)?;
            }
        }
    }

    let final_position = placed.last().map(|b| (b.x, b.z)).unwrap_or(anchor);
    ctx.step_positions.push(final_position);
    Ok(ActionRecord {
        anchor,
        placed,
        firings,
    })
}

/// Resolves an action's anchor to a concrete column.
///
/// Absolute anchors pass through. Step references return that step's final
/// position. Color references return the nearest block of that color —
/// Manhattan distance from the last placed block, lexicographic `(x, z)`
/// when nothing has been placed or on ties. A direction offset, when
/// present, then displaces the result one step.
pub fn resolve_anchor(
    anchor: &Anchor,
    ctx: &ExecContext,
    grid: &Grid,
) -> Result<(u32, u32), ExecError> {
    let (base, offset) = match *anchor {
        Anchor::Absolute { x, z } => ((x, z), None),
        Anchor::Relative { reference, offset } => {
            let base = match reference {
                Reference::PreviousStep => *ctx
                    .step_positions
                    .last()
                    .ok_or(ExecError::NoPreviousStep)?,
                Reference::Step(step) => *ctx.step_positions.get(step).ok_or(
                    ExecError::StepNotExecuted {
                        step,
                        executed: ctx.step_positions.len(),
                    },
                )?,
                Reference::Color(color) => nearest_of_color(grid, color, ctx.last_position)?,
            };
            (base, offset)
        }
    };
    match offset {
        None => Ok(base),
        Some(direction) => step(base, direction, grid),
    }
}

fn resolve_action_anchor(
    action: &Action,
    ctx: &ExecContext,
    grid: &Grid,
    firings: &mut Vec<RuleFiring>,
) -> Result<(u32, u32), ExecError> {
    // A color-referenced extend without an explicit offset anchors at the
    // referenced structure's far endpoint along the extend direction, so
    // "extend the yellow L west" continues the correct arm.
    if action.kind == ActionKind::Extend {
        if let (
            Anchor::Relative {
                reference: Reference::Color(color),
                offset: None,
            },
            Some(direction),
        ) = (action.anchor, action.direction)
        {
            let endpoint = extend_endpoint(grid, color, direction, ctx)?;
            firings.push(RuleFiring::EndpointAnchor { endpoint });
            return Ok(endpoint);
        }
    }
    resolve_anchor(&action.anchor, ctx, grid)
}

/// The same-color skip-forward rule: if the ground cell at `start` already
/// holds a block of the extend's color, the start advances exactly one step
/// along `direction` — once, never iterated. Any other occupancy (different
/// color, or empty) leaves the start unchanged.
pub fn apply_skip_forward(
    grid: &Grid,
    start: (u32, u32),
    direction: Direction,
    color: Color,
) -> Result<(u32, u32), ExecError> {
    if grid.get(start.0, 0, start.1) == Some(color) {
        step(start, direction, grid)
    } else {
        Ok(start)
    }
}

/// Far endpoint of the color's structure along `direction`: the endpoint
/// maximizing the dot product with the direction's delta. Isolated blocks
/// (no primitive) anchor at the nearest block of the color itself.
fn extend_endpoint(
    grid: &Grid,
    color: Color,
    direction: Direction,
    ctx: &ExecContext,
) -> Result<(u32, u32), ExecError> {
    let nearest = nearest_of_color(grid, color, ctx.last_position)?;
    let primitives: Vec<Primitive> = analyzer::analyze(grid)
        .into_iter()
        .filter(|p| p.color == color)
        .collect();
    let containing = match primitives.len() {
        0 => return Ok(nearest),
        1 => &primitives[0],
        _ => match primitives
            .iter()
            .find(|p| p.cells.iter().any(|&(x, _, z)| (x, z) == nearest))
        {
            Some(p) => p,
            None => return Ok(nearest),
        },
    };
    // Junctions are excluded: an extension continues an arm, not the corner.
    let candidates: Vec<(u32, u32, u32)> = match containing.endpoints {
        Endpoints::Pair { ends } => ends.to_vec(),
        Endpoints::Corner { arm_ends, .. } => arm_ends.to_vec(),
        Endpoints::Tee {
            base_ends,
            stem_end,
            ..
        } => vec![base_ends[0], base_ends[1], stem_end],
    };
    let (dx, dz) = direction.delta();
    let best = candidates
        .into_iter()
        .map(|(x, _, z)| (x, z))
        .max_by_key(|&(x, z)| {
            let along = x as i64 * dx + z as i64 * dz;
            // Highest projection wins; ties go to the smaller (x, z).
            (along, std::cmp::Reverse((x, z)))
        })
        .expect("every primitive has endpoints");
    Ok(best)
}

fn nearest_of_color(
    grid: &Grid,
    color: Color,
    from: Option<(u32, u32)>,
) -> Result<(u32, u32), ExecError> {
    let mut columns: Vec<(u32, u32)> = grid
        .blocks()
        .filter(|b| b.color == color)
        .map(|b| (b.x, b.z))
        .collect();
    columns.sort();
    columns.dedup();
    match from {
        None => columns
            .first()
            .copied()
            .ok_or(ExecError::ColorNotFound { color }),
        Some((fx, fz)) => columns
            .into_iter()
            .min_by_key(|&(x, z)| (x.abs_diff(fx) + z.abs_diff(fz), (x, z)))
            .ok_or(ExecError::ColorNotFound { color }),
    }
}

fn step(from: (u32, u32), direction: Direction, grid: &Grid) -> Result<(u32, u32), ExecError> {
    let (dx, dz) = direction.delta();
    let x = from.0 as i64 + dx;
    let z = from.1 as i64 + dz;
    let dims = grid.dims();
    if x < 0 || z < 0 || x >= dims.width as i64 || z >= dims.depth as i64 {
        return Err(ExecError::OffGrid { x, z });
    }
    Ok((x as u32, z as u32))
}

fn line_cells(
    start: (u32, u32),
    direction: Direction,
    count: u32,
    grid: &Grid,
) -> Result<Vec<(u32, u32)>, ExecError> {
    let (dx, dz) = direction.delta();
    let dims = grid.dims();
    (0..count as i64)
        .map(|i| {
            let x = start.0 as i64 + i * dx;
            let z = start.1 as i64 + i * dz;
            if x < 0 || z < 0 || x >= dims.width as i64 || z >= dims.depth as i64 {
                Err(ExecError::OffGrid { x, z })
            } else {
                Ok((x as u32, z as u32))
            }
        })
        .collect()
}
