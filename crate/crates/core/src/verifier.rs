//! Peephole-style plan verification: pattern-match known-bad action
//! sequences against the instruction text and the starting grid, rewrite
//! them deterministically, and flag what cannot be rewritten for a full
//! re-plan.
//!
//! Four passes run in a fixed order — direction consistency (which also
//! pins stale chain references), endpoint cap correction, T-shape extend
//! correction, stacking plausibility — each consuming the previous pass's
//! output. A pass that can rewrite confidently emits a `corrected`
//! diagnostic alongside the rewrite; ambiguity emits `critical` and leaves
//! the plan alone, deferring to re-planning with the diagnostics as hints.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::analyzer::{self, Endpoints, Primitive, PrimitiveKind};
use crate::executor;
use crate::grid::{Color, Grid};
use crate::plan::{ActionKind, Anchor, Direction, Plan, Reference};
use crate::util::regex;

/// Which pass produced a diagnostic. Variant order is execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PassName {
    DirectionConsistency,
    EndpointCap,
    TShapeExtend,
    StackingPlausibility,
}

impl PassName {
    pub fn name(self) -> &'static str {
        match self {
            PassName::DirectionConsistency => "direction_consistency",
            PassName::EndpointCap => "endpoint_cap",
            PassName::TShapeExtend => "t_shape_extend",
            PassName::StackingPlausibility => "stacking_plausibility",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// The pass rewrote the plan; the diagnostic describes the rewrite.
    Corrected,
    /// The pass could not rewrite confidently; re-planning is required.
    Critical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub pass: PassName,
    pub severity: Severity,
    pub action_index: usize,
    pub message: String,
}

impl Diagnostic {
    fn corrected(pass: PassName, action_index: usize, message: String) -> Diagnostic {
        Diagnostic {
            pass,
            severity: Severity::Corrected,
            action_index,
            message,
        }
    }

    fn critical(pass: PassName, action_index: usize, message: String) -> Diagnostic {
        Diagnostic {
            pass,
            severity: Severity::Critical,
            action_index,
            message,
        }
    }
}

/// Machine-readable cues extracted from the instruction text; purely
/// derived, recomputable, no semantics beyond keyword and pattern hits.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InstructionFacts {
    /// Direction words in order of first appearance.
    pub directions: Vec<Direction>,
    /// The instruction says "each end".
    pub each_end: bool,
    pub mentions_l_shape: bool,
    pub mentions_t_shape: bool,
    /// Color words in order of first appearance, deduplicated.
    pub colors: Vec<Color>,
    /// Standalone numbers (digits or number words), excluding anything
    /// inside parentheses so coordinates don't count.
    pub counts: Vec<u32>,
    /// "stack", "on top", or "tower" appears.
    pub vertical_cues: bool,
    /// "row", "line", or any direction word appears.
    pub horizontal_cues: bool,
}

const NUMBER_WORDS: [(&str, u32); 10] = [
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
    ("ten", 10),
];

impl InstructionFacts {
    pub fn from_instruction(instruction: &str) -> InstructionFacts {
        let lower = instruction.to_lowercase();

        let dir_re = regex(r"\b(north|south|east|west|behind)\b|\bin\s+front\b");
        let mut directions = Vec::new();
        for m in dir_re.find_iter(&lower) {
            let d = if m.as_str().starts_with("in") {
                Direction::InFront
            } else {
                Direction::parse(m.as_str()).expect("matched direction word")
            };
            if !directions.contains(&d) {
                directions.push(d);
            }
        }

        let color_re = regex(r"\b(red|blue|green|orange|yellow|purple)\b");
        let mut colors = Vec::new();
        for m in color_re.find_iter(&lower) {
            let c: Color = m.as_str().parse().expect("matched color word");
            if !colors.contains(&c) {
                colors.push(c);
            }
        }

        // Strip parenthesized spans so "(4, 2)" contributes no counts.
        let no_parens = regex(r"\([^)]*\)").replace_all(&lower, " ");
        let count_re = regex(r"\b(\d+|one|two|three|four|five|six|seven|eight|nine|ten)\b");
        let counts = count_re
            .find_iter(&no_parens)
            .filter_map(|m| {
                let s = m.as_str();
                s.parse::<u32>().ok().or_else(|| {
                    NUMBER_WORDS
                        .iter()
                        .find(|(w, _)| *w == s)
                        .map(|&(_, v)| v)
                })
            })
            .collect();

        let shape =
            |letter: &str| regex(&format!(r"\b{letter}[\s-]?shape")).is_match(&lower);
        let vertical_re = regex(r"\b(stack\w*|tower)\b");
        let horizontal_re = regex(r"\b(rows?|lines?)\b");

        let vertical_cues = vertical_re.is_match(&lower) || lower.contains("on top");
        let horizontal_cues = horizontal_re.is_match(&lower) || !directions.is_empty();

        InstructionFacts {
            directions,
            each_end: lower.contains("each end"),
            mentions_l_shape: shape("l"),
            mentions_t_shape: shape("t"),
            colors,
            counts,
            vertical_cues,
            horizontal_cues,
        }
    }
}

/// Per-pass enable flags, all on by default. Exists so the effect of any
/// single pass can be measured in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassFlags {
    pub direction_consistency: bool,
    pub endpoint_cap: bool,
    pub t_shape_extend: bool,
    pub stacking_plausibility: bool,
}

impl Default for PassFlags {
    fn default() -> Self {
        PassFlags {
            direction_consistency: true,
            endpoint_cap: true,
            t_shape_extend: true,
            stacking_plausibility: true,
        }
    }
}

/// Runs all four passes in their fixed order, each on the previous pass's
/// output, and returns the rewritten plan plus every diagnostic raised.
pub fn verify(
    plan: &Plan,
    facts: &InstructionFacts,
    grid: &Grid,
    primitives: &[Primitive],
) -> (Plan, Vec<Diagnostic>) {
    verify_with(plan, facts, grid, primitives, &PassFlags::default())
}

/// [`verify`] with selected passes disabled.
pub fn verify_with(
    plan: &Plan,
    facts: &InstructionFacts,
    grid: &Grid,
    primitives: &[Primitive],
    flags: &PassFlags,
) -> (Plan, Vec<Diagnostic>) {
    let mut plan = plan.clone();
    let mut diagnostics = Vec::new();
    if flags.direction_consistency {
        let (next, diags) = pass_direction_consistency(&plan, facts, grid);
        plan = next;
        diagnostics.extend(diags);
    }
    if flags.endpoint_cap {
        let (next, diags) = pass_endpoint_cap(&plan, facts, grid, primitives);
        plan = next;
        diagnostics.extend(diags);
    }
    if flags.t_shape_extend {
        let (next, diags) = pass_t_shape_extend(&plan, primitives);
        plan = next;
        diagnostics.extend(diags);
    }
    if flags.stacking_plausibility {
        let (next, diags) = pass_stacking_plausibility(&plan, facts, grid);
        plan = next;
        diagnostics.extend(diags);
    }
    (plan, diagnostics)
}

/// True when any diagnostic is critical; the diagnostics themselves double
/// as the re-plan hint payload.
pub fn needs_replan(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Critical)
}

/// Pass 1: direction reversals and stale chain references.
///
/// When the instruction names exactly one movement (by delta — "south" and
/// "in front" are the same movement), any action direction or offset
/// pointing the opposite way is flipped.
///
/// A color reference in a non-extend action is pinned to the producing
/// step when an earlier action in the same plan places that color *and*
/// the starting grid already holds it: left as a color lookup it may bind
/// to the pre-existing block instead of the chain's own product, which is
/// how chained coordinates drift.
pub fn pass_direction_consistency(
    plan: &Plan,
    facts: &InstructionFacts,
    grid: &Grid,
) -> (Plan, Vec<Diagnostic>) {
    let mut plan = plan.clone();
    let mut diagnostics = Vec::new();

    let deltas: BTreeSet<(i64, i64)> = facts.directions.iter().map(|d| d.delta()).collect();
    if deltas.len() == 1 {
        let want = *deltas.iter().next().expect("len checked");
        let against = (-want.0, -want.1);
        let stated = facts.directions[0];
        for (index, action) in plan.actions.iter_mut().enumerate() {
            if let Some(direction) = action.direction {
                if direction.delta() == against {
                    action.direction = Some(direction.opposite());
                    diagnostics.push(Diagnostic::corrected(
                        PassName::DirectionConsistency,
                        index,
                        format!(
                            "direction {direction} contradicts the instruction's \
                             {stated}; flipped to {}",
                            direction.opposite()
                        ),
                    ));
                }
            }
            if let Anchor::Relative {
                reference,
                offset: Some(offset),
            } = action.anchor
            {
                if offset.delta() == against {
                    action.anchor = Anchor::Relative {
                        reference,
                        offset: Some(offset.opposite()),
                    };
                    diagnostics.push(Diagnostic::corrected(
                        PassName::DirectionConsistency,
                        index,
                        format!(
                            "offset {offset} contradicts the instruction's {stated}; \
                             flipped to {}",
                            offset.opposite()
                        ),
                    ));
                }
            }
        }
    }

    for index in 0..plan.actions.len() {
        if plan.actions[index].kind == ActionKind::Extend {
            // An extend's color reference is its targeting mechanism
            // (endpoint anchoring), not a chain link.
            continue;
        }
        let Anchor::Relative {
            reference: Reference::Color(color),
            offset,
        } = plan.actions[index].anchor
        else {
            continue;
        };
        let producer = plan.actions[..index]
            .iter()
            .rposition(|a| a.color == Some(color));
        let Some(step) = producer else { continue };
        if !grid.blocks().any(|b| b.color == color) {
            // No pre-existing block of this color: the lookup can only
            // bind to the plan's own product, so there is nothing to drift.
            continue;
        }
        plan.actions[index].anchor = Anchor::Relative {
            reference: Reference::Step(step),
            offset,
        };
        diagnostics.push(Diagnostic::corrected(
            PassName::DirectionConsistency,
            index,
            format!(
                "reference to {color} may drift to a pre-existing block; \
                 pinned to step {step}, which places {color}"
            ),
        ));
    }

    (plan, diagnostics)
}

/// Ground projections of a primitive's endpoint cells.
fn endpoint_ground_cells(primitive: &Primitive) -> Vec<(u32, u32)> {
    let ground = |c: (u32, u32, u32)| (c.0, c.2);
    match primitive.endpoints {
        Endpoints::Pair { ends } => {
            let mut cells = vec![ground(ends[0]), ground(ends[1])];
            cells.dedup(); // a stack's two ends share a column
            cells
        }
        Endpoints::Corner { arm_ends, .. } => vec![ground(arm_ends[0]), ground(arm_ends[1])],
        Endpoints::Tee {
            base_ends,
            stem_end,
            ..
        } => vec![ground(base_ends[0]), ground(base_ends[1]), ground(stem_end)],
    }
}

/// Maps a stale endpoint of `pre` to the matching endpoint of `post`:
/// paired ends correspond in sorted order, corner arms by arm, tee base
/// ends in sorted order and stem end to stem end.
fn corresponding_endpoint(
    pre: &Primitive,
    post: &Primitive,
    stale: (u32, u32),
) -> Option<(u32, u32)> {
    let ground = |c: (u32, u32, u32)| (c.0, c.2);
    match (&pre.endpoints, &post.endpoints) {
        (Endpoints::Pair { ends: a }, Endpoints::Pair { ends: b }) => {
            if stale == ground(a[0]) {
                Some(ground(b[0]))
            } else if stale == ground(a[1]) {
                Some(ground(b[1]))
            } else {
                None
            }
        }
        (
            Endpoints::Corner { arm_ends: a, .. },
            Endpoints::Corner { arm_ends: b, .. },
        ) => {
            if stale == ground(a[0]) {
                Some(ground(b[0]))
            } else if stale == ground(a[1]) {
                Some(ground(b[1]))
            } else {
                None
            }
        }
        (
            Endpoints::Tee {
                base_ends: a,
                stem_end: s,
                ..
            },
            Endpoints::Tee {
                base_ends: b,
                stem_end: t,
                ..
            },
        ) => {
            if stale == ground(*s) {
                Some(ground(*t))
            } else if stale == ground(a[0]) {
                Some(ground(b[0]))
            } else if stale == ground(a[1]) {
                Some(ground(b[1]))
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Colors the plan's extend actions operate on, for `pass_endpoint_cap` to
/// know which primitives were modified.
fn extended_colors(plan: &Plan, grid: &Grid) -> BTreeSet<Color> {
    let mut colors = BTreeSet::new();
    for action in &plan.actions {
        if action.kind != ActionKind::Extend {
            continue;
        }
        if let Some(color) = action.color {
            colors.insert(color);
        }
        match action.anchor {
            Anchor::Relative {
                reference: Reference::Color(color),
                ..
            } => {
                colors.insert(color);
            }
            Anchor::Absolute { x, z } => {
                if let Some(color) = grid.get(x, 0, z) {
                    colors.insert(color);
                }
            }
            _ => {}
        }
    }
    colors
}

/// Pass 2: endpoint cap correction. Under an "each end" instruction, a
/// placement at a coordinate that was an endpoint of an extended structure
/// *before* the extension — but no longer is — gets re-anchored to the
/// structure's recomputed endpoint on the same side. The recomputation
/// dry-runs the plan prefix, so every earlier modification is reflected.
pub fn pass_endpoint_cap(
    plan: &Plan,
    facts: &InstructionFacts,
    grid: &Grid,
    primitives: &[Primitive],
) -> (Plan, Vec<Diagnostic>) {
    let mut plan = plan.clone();
    let mut diagnostics = Vec::new();
    if !facts.each_end {
        return (plan, diagnostics);
    }
    let Some(last_extend) = plan
        .actions
        .iter()
        .rposition(|a| a.kind == ActionKind::Extend)
    else {
        return (plan, diagnostics);
    };
    let targeted = extended_colors(&plan, grid);

    for index in (last_extend + 1)..plan.actions.len() {
        if plan.actions[index].kind != ActionKind::Place {
            continue;
        }
        let Anchor::Absolute { x, z } = plan.actions[index].anchor else {
            continue;
        };
        let Some(pre) = primitives.iter().find(|p| {
            targeted.contains(&p.color) && endpoint_ground_cells(p).contains(&(x, z))
        }) else {
            continue;
        };
        let prefix = Plan {
            actions: plan.actions[..index].to_vec(),
        };
        let Ok((modified, _, _)) = executor::execute_with_context(&prefix, grid) else {
            continue;
        };
        let after = analyzer::analyze(&modified);
        let Some(post) = after.iter().find(|q| {
            q.color == pre.color
                && q.kind == pre.kind
                && q.cells.intersection(&pre.cells).next().is_some()
        }) else {
            continue;
        };
        if endpoint_ground_cells(post).contains(&(x, z)) {
            continue; // still an endpoint after the modifications
        }
        let Some((nx, nz)) = corresponding_endpoint(pre, post, (x, z)) else {
            continue;
        };
        plan.actions[index].anchor = Anchor::Absolute { x: nx, z: nz };
        diagnostics.push(Diagnostic::corrected(
            PassName::EndpointCap,
            index,
            format!(
                "cap at ({x}, {z}) targets a pre-extension endpoint; \
                 recomputed to ({nx}, {nz})"
            ),
        ));
    }
    (plan, diagnostics)
}

fn direction_from_delta(delta: (i64, i64)) -> Option<Direction> {
    match delta {
        (1, 0) => Some(Direction::East),
        (-1, 0) => Some(Direction::West),
        (0, 1) => Some(Direction::South),
        (0, -1) => Some(Direction::North),
        _ => None,
    }
}

/// Pass 3: T-shape extend correction. An extend that targets a T-shape
/// must continue the stem past its free end at ground level. Extends
/// heading along the base axis, or anchored on the junction or an interior
/// stem cell (which would stack instead of extend), are re-anchored to the
/// stem's far end with the stem's outward direction.
pub fn pass_t_shape_extend(plan: &Plan, primitives: &[Primitive]) -> (Plan, Vec<Diagnostic>) {
    let mut plan = plan.clone();
    let mut diagnostics = Vec::new();
    let tees: Vec<&Primitive> = primitives
        .iter()
        .filter(|p| p.kind == PrimitiveKind::TShape)
        .collect();
    if tees.is_empty() {
        return (plan, diagnostics);
    }

    for (index, action) in plan.actions.iter_mut().enumerate() {
        if action.kind != ActionKind::Extend {
            continue;
        }
        let Some(direction) = action.direction else {
            continue;
        };
        let referenced_color = action.color.or(match action.anchor {
            Anchor::Relative {
                reference: Reference::Color(c),
                ..
            } => Some(c),
            _ => None,
        });
        let tee = match (referenced_color, action.anchor) {
            (Some(color), _) => tees.iter().find(|t| t.color == color),
            (None, Anchor::Absolute { x, z }) => tees
                .iter()
                .find(|t| t.cells.iter().any(|&(cx, _, cz)| (cx, cz) == (x, z))),
            _ => None,
        };
        let Some(tee) = tee else { continue };
        let Endpoints::Tee {
            junction, stem_end, ..
        } = tee.endpoints
        else {
            continue;
        };
        let stem_delta = (
            (stem_end.0 as i64 - junction.0 as i64).signum(),
            (stem_end.2 as i64 - junction.2 as i64).signum(),
        );
        let stem_direction =
            direction_from_delta(stem_delta).expect("stem is axis-aligned");

        let direction_ok = direction.delta() == stem_delta;
        let beyond = (
            stem_end.0 as i64 + stem_delta.0,
            stem_end.2 as i64 + stem_delta.1,
        );
        let anchor_ok = match action.anchor {
            Anchor::Relative {
                reference: Reference::Color(c),
                offset: None,
            } => c == tee.color, // endpoint anchoring picks the stem end
            Anchor::Absolute { x, z } => {
                (x, z) == (stem_end.0, stem_end.2)
                    || (x as i64, z as i64) == beyond
            }
            _ => false,
        };
        if direction_ok && anchor_ok {
            continue;
        }
        let mut fixes = Vec::new();
        if !direction_ok {
            action.direction = Some(stem_direction);
            fixes.push(format!(
                "direction {direction} is off the stem axis, now {stem_direction}"
            ));
        }
        if !anchor_ok {
            action.anchor = Anchor::Absolute {
                x: stem_end.0,
                z: stem_end.2,
            };
            if action.color.is_none() {
                action.color = Some(tee.color);
            }
            fixes.push(format!(
                "re-anchored to the stem end ({}, {})",
                stem_end.0, stem_end.2
            ));
        }
        diagnostics.push(Diagnostic::corrected(
            PassName::TShapeExtend,
            index,
            format!(
                "extend on the {} t-shape must continue the stem: {}",
                tee.color,
                fixes.join("; ")
            ),
        ));
    }
    (plan, diagnostics)
}

/// Pass 4: stacking plausibility. A stack action under purely horizontal
/// instruction cues is critical (the action kind itself is suspect). A
/// stack whose count overflows its column — resolved against a dry-run of
/// the plan prefix — is clamped to the column's remaining capacity when
/// the instruction has vertical cues, and critical otherwise.
pub fn pass_stacking_plausibility(
    plan: &Plan,
    facts: &InstructionFacts,
    grid: &Grid,
) -> (Plan, Vec<Diagnostic>) {
    let mut plan = plan.clone();
    let mut diagnostics = Vec::new();

    for index in 0..plan.actions.len() {
        if plan.actions[index].kind != ActionKind::Stack {
            continue;
        }
        if facts.horizontal_cues && !facts.vertical_cues {
            diagnostics.push(Diagnostic::critical(
                PassName::StackingPlausibility,
                index,
                "stack action, but the instruction's cues are horizontal".to_string(),
            ));
            continue;
        }
        let Some(count) = plan.actions[index].count else {
            continue;
        };
        let prefix = Plan {
            actions: plan.actions[..index].to_vec(),
        };
        let Ok((current, _, ctx)) = executor::execute_with_context(&prefix, grid) else {
            continue;
        };
        let Ok((x, z)) = executor::resolve_anchor(&plan.actions[index].anchor, &ctx, &current)
        else {
            continue;
        };
        let Ok(level) = current.y_star(x, z) else {
            continue;
        };
        let capacity = current.dims().height - level.unwrap_or(current.dims().height);
        if count <= capacity {
            continue;
        }
        if capacity > 0 && facts.vertical_cues {
            plan.actions[index].count = Some(capacity);
            diagnostics.push(Diagnostic::corrected(
                PassName::StackingPlausibility,
                index,
                format!(
                    "stack of {count} exceeds the capacity of column ({x}, {z}); \
                     clamped to {capacity}"
                ),
            ));
        } else {
            diagnostics.push(Diagnostic::critical(
                PassName::StackingPlausibility,
                index,
                format!(
                    "stack of {count} cannot fit column ({x}, {z}) \
                     (capacity {capacity})"
                ),
            ));
        }
    }
    (plan, diagnostics)
}
