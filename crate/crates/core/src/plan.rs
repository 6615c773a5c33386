//! Plan intermediate representation: an ordered list of typed 2-D actions.
//!
//! Plans deliberately have no vertical axis. Every action addresses a grid
//! column by `(x, z)` (directly or through a reference to earlier work) and
//! vertical position is implied entirely by action order and the gravity
//! rule. The parser enforces this at the boundary: any `"y"` key anywhere
//! inside an action is rejected as a dimension violation, so a vertical
//! coordinate cannot even be represented.

use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::grid::{Color, GridDims};

/// Horizontal movement direction on the `(x, z)` plane.
///
/// `z` grows toward the viewer, so "in front" is `z + 1` and `north`
/// (away from the viewer) is `z - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    North,
    South,
    East,
    West,
    InFront,
    Behind,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
        Direction::InFront,
        Direction::Behind,
    ];

    /// Unit step `(dx, dz)`.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::North => (0, -1),
            Direction::South => (0, 1),
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::InFront => (0, 1),
            Direction::Behind => (0, -1),
        }
    }

    /// The direction with the negated delta, preserving naming style:
    /// compass names map to compass names, viewer-relative to viewer-relative.
    pub fn opposite(self) -> Direction {
        match self {
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
            Direction::InFront => Direction::Behind,
            Direction::Behind => Direction::InFront,
        }
    }

    /// True when two directions denote the same movement, e.g. `south` and
    /// `in_front` both step `z + 1`.
    pub fn same_delta(self, other: Direction) -> bool {
        self.delta() == other.delta()
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::North => "north",
            Direction::South => "south",
            Direction::East => "east",
            Direction::West => "west",
            Direction::InFront => "in_front",
            Direction::Behind => "behind",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        Direction::ALL.iter().copied().find(|d| d.name() == s)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a relative anchor points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// The block most recently placed by the previous action.
    PreviousStep,
    /// The block most recently placed by a specific earlier action
    /// (0-based index into the plan).
    Step(usize),
    /// Existing material of a given color; the executor resolves which cell.
    Color(Color),
}

/// Where an action starts: an absolute column or a reference to earlier
/// work, optionally displaced one step in a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Absolute {
        x: u32,
        z: u32,
    },
    Relative {
        reference: Reference,
        offset: Option<Direction>,
    },
}

/// The four action kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    /// One block at the anchor column.
    Place,
    /// `count` blocks in the anchor column, bottom-up.
    Stack,
    /// `count` columns in a line from the anchor, one block each.
    Row,
    /// Continue an existing structure `count` steps in a direction.
    Extend,
}

impl ActionKind {
    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Place => "place",
            ActionKind::Stack => "stack",
            ActionKind::Row => "row",
            ActionKind::Extend => "extend",
        }
    }

    pub fn parse(s: &str) -> Option<ActionKind> {
        [
            ActionKind::Place,
            ActionKind::Stack,
            ActionKind::Row,
            ActionKind::Extend,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One plan step. A uniform record rather than per-kind variants so
/// verification passes can rewrite individual fields in place; which
/// fields are required depends on `kind` and is checked by
/// [`Plan::validate`] and again at execution time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub kind: ActionKind,
    pub anchor: Anchor,
    /// Block color. Required for place/stack/row; an extend without a color
    /// inherits the color of the structure it continues.
    pub color: Option<Color>,
    /// Block or step count. Meaningful for stack/row/extend; a place is
    /// always a single block.
    pub count: Option<u32>,
    /// Movement direction. Required for row/extend.
    pub direction: Option<Direction>,
}

/// An ordered plan. Later actions build on the state left by earlier ones,
/// which is how a flat 2-D action list expresses vertical structure.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub actions: Vec<Action>,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: plan actions are two-dimensional and may not carry a \"y\" coordinate")]
    DimensionViolation { path: String },
    #[error("{path}: expected {expected}")]
    InvalidValue { path: String, expected: String },
    #[error("{path}: missing required field \"{field}\"")]
    MissingField { path: String, field: String },
    #[error("{path}: unknown field \"{field}\"")]
    UnknownField { path: String, field: String },
    #[error("{path}: exactly one of \"at\" or \"ref\" is required")]
    AnchorConflict { path: String },
    #[error("{path}: \"offset\" is only meaningful alongside \"ref\"")]
    OffsetWithoutReference { path: String },
}

/// A semantic problem found by [`Plan::validate`]. Issues are diagnostics,
/// not errors: a plan with issues still parses, but it will not execute
/// cleanly (or will not do what was meant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanIssue {
    /// Index of the offending action.
    pub action: usize,
    pub kind: PlanIssueKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanIssueKind {
    AnchorOutOfBounds,
    ForwardReference,
    MissingColor,
    MissingCount,
    MissingDirection,
    PlaceCountNotOne,
    SuperfluousDirection,
}

impl Plan {
    pub fn from_json(text: &str) -> Result<Plan, PlanError> {
        let value: Value = serde_json::from_str(text)?;
        Plan::from_value(&value)
    }

    /// Parses the plan wire format from an already-decoded JSON value.
    pub fn from_value(value: &Value) -> Result<Plan, PlanError> {
        let root = value
            .as_object()
            .ok_or_else(|| invalid("$", "an object with an \"actions\" array"))?;
        for key in root.keys() {
            if key != "actions" {
                return Err(PlanError::UnknownField {
                    path: "$".into(),
                    field: key.clone(),
                });
            }
        }
        let actions = root
            .get("actions")
            .ok_or_else(|| PlanError::MissingField {
                path: "$".into(),
                field: "actions".into(),
            })?
            .as_array()
            .ok_or_else(|| invalid("$.actions", "an array"))?;

        let parsed = actions
            .iter()
            .enumerate()
            .map(|(i, raw)| parse_action(raw, &format!("actions[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Plan { actions: parsed })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_value()).expect("plan serialization cannot fail")
    }

    /// Canonical JSON form. Object keys serialize in alphabetical order, so
    /// equal plans always produce identical bytes.
    pub fn to_value(&self) -> Value {
        let actions: Vec<Value> = self.actions.iter().map(action_to_value).collect();
        let mut root = Map::new();
        root.insert("actions".into(), Value::Array(actions));
        Value::Object(root)
    }

    /// Checks actions against the grid bounds and per-kind field rules.
    /// Returns every issue found, in action order.
    pub fn validate(&self, dims: GridDims) -> Vec<PlanIssue> {
        let mut issues = Vec::new();
        for (i, action) in self.actions.iter().enumerate() {
            let mut push = |kind: PlanIssueKind, message: String| {
                issues.push(PlanIssue {
                    action: i,
                    kind,
                    message,
                });
            };
            match action.anchor {
                Anchor::Absolute { x, z } => {
                    if !dims.contains_column(x, z) {
                        push(
                            PlanIssueKind::AnchorOutOfBounds,
                            format!(
                                "anchor ({x}, {z}) is outside the {}x{} grid plane",
                                dims.width, dims.depth
                            ),
                        );
                    }
                }
                Anchor::Relative { reference, .. } => match reference {
                    Reference::PreviousStep if i == 0 => {
                        push(
                            PlanIssueKind::ForwardReference,
                            "the first action cannot reference the previous step".into(),
                        );
                    }
                    Reference::Step(k) if k >= i => {
                        push(
                            PlanIssueKind::ForwardReference,
                            format!("reference to step {k} from action {i} is not backward"),
                        );
                    }
                    _ => {}
                },
            }
            match action.kind {
                ActionKind::Place => {
                    if action.color.is_none() {
                        push(PlanIssueKind::MissingColor, "place needs a color".into());
                    }
                    if let Some(n) = action.count {
                        if n != 1 {
                            push(
                                PlanIssueKind::PlaceCountNotOne,
                                format!("place puts exactly one block, not {n}"),
                            );
                        }
                    }
                    if action.direction.is_some() {
                        push(
                            PlanIssueKind::SuperfluousDirection,
                            "place has no direction; use an anchor offset instead".into(),
                        );
                    }
                }
                ActionKind::Stack => {
                    if action.color.is_none() {
                        push(PlanIssueKind::MissingColor, "stack needs a color".into());
                    }
                    if action.count.is_none() {
                        push(PlanIssueKind::MissingCount, "stack needs a count".into());
                    }
                    if action.direction.is_some() {
                        push(
                            PlanIssueKind::SuperfluousDirection,
                            "stack is vertical and takes no direction".into(),
                        );
                    }
                }
                ActionKind::Row => {
                    if action.color.is_none() {
                        push(PlanIssueKind::MissingColor, "row needs a color".into());
                    }
                    if action.count.is_none() {
                        push(PlanIssueKind::MissingCount, "row needs a count".into());
                    }
                    if action.direction.is_none() {
                        push(PlanIssueKind::MissingDirection, "row needs a direction".into());
                    }
                }
                ActionKind::Extend => {
                    if action.count.is_none() {
                        push(PlanIssueKind::MissingCount, "extend needs a count".into());
                    }
                    if action.direction.is_none() {
                        push(
                            PlanIssueKind::MissingDirection,
                            "extend needs a direction".into(),
                        );
                    }
                }
            }
        }
        issues
    }
}

fn invalid(path: &str, expected: &str) -> PlanError {
    PlanError::InvalidValue {
        path: path.to_string(),
        expected: expected.to_string(),
    }
}

/// Rejects any `"y"` key nested anywhere inside an action, reporting the
/// JSON path of the first one found. Runs before structural parsing so a
/// vertical coordinate is always reported as what it is, not as an unknown
/// field.
fn reject_vertical_keys(value: &Value, path: &str) -> Result<(), PlanError> {
    match value {
        Value::Object(map) => {
            for (key, inner) in map {
                let child = format!("{path}.{key}");
                if key == "y" {
                    return Err(PlanError::DimensionViolation { path: child });
                }
                reject_vertical_keys(inner, &child)?;
            }
            Ok(())
        }
        Value::Array(items) => {
            for (i, inner) in items.iter().enumerate() {
                reject_vertical_keys(inner, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn parse_action(raw: &Value, path: &str) -> Result<Action, PlanError> {
    reject_vertical_keys(raw, path)?;
    let obj = raw
        .as_object()
        .ok_or_else(|| invalid(path, "an action object"))?;

    const KNOWN: [&str; 7] = ["action", "at", "ref", "offset", "color", "count", "direction"];
    for key in obj.keys() {
        if !KNOWN.contains(&key.as_str()) {
            return Err(PlanError::UnknownField {
                path: path.to_string(),
                field: key.clone(),
            });
        }
    }

    let kind_name = obj
        .get("action")
        .ok_or_else(|| PlanError::MissingField {
            path: path.to_string(),
            field: "action".into(),
        })?
        .as_str()
        .ok_or_else(|| invalid(&format!("{path}.action"), "a string"))?;
    let kind = ActionKind::parse(kind_name).ok_or_else(|| {
        invalid(
            &format!("{path}.action"),
            "one of \"place\", \"stack\", \"row\", \"extend\"",
        )
    })?;

    let anchor = match (obj.get("at"), obj.get("ref")) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(PlanError::AnchorConflict {
                path: path.to_string(),
            })
        }
        (Some(at), None) => {
            if obj.contains_key("offset") {
                return Err(PlanError::OffsetWithoutReference {
                    path: path.to_string(),
                });
            }
            parse_absolute_anchor(at, &format!("{path}.at"))?
        }
        (None, Some(r)) => {
            let reference = parse_reference(r, &format!("{path}.ref"))?;
            let offset = match obj.get("offset") {
                None => None,
                Some(o) => Some(parse_direction(o, &format!("{path}.offset"))?),
            };
            Anchor::Relative { reference, offset }
        }
    };

    let color = match obj.get("color") {
        None => None,
        Some(c) => Some(parse_color(c, &format!("{path}.color"))?),
    };
    let count = match obj.get("count") {
        None => None,
        Some(n) => {
            let child = format!("{path}.count");
            let n = n
                .as_u64()
                .filter(|&n| n >= 1 && n <= u32::MAX as u64)
                .ok_or_else(|| invalid(&child, "a positive integer"))?;
            Some(n as u32)
        }
    };
    let direction = match obj.get("direction") {
        None => None,
        Some(d) => Some(parse_direction(d, &format!("{path}.direction"))?),
    };

    Ok(Action {
        kind,
        anchor,
        color,
        count,
        direction,
    })
}

fn parse_absolute_anchor(value: &Value, path: &str) -> Result<Anchor, PlanError> {
    let obj = value
        .as_object()
        .ok_or_else(|| invalid(path, "an object with \"x\" and \"z\""))?;
    for key in obj.keys() {
        // "y" was already rejected by the dimension scan; anything else
        // unexpected is a plain unknown field.
        if key != "x" && key != "z" {
            return Err(PlanError::UnknownField {
                path: path.to_string(),
                field: key.clone(),
            });
        }
    }
    let coord = |name: &str| -> Result<u32, PlanError> {
        obj.get(name)
            .ok_or_else(|| PlanError::MissingField {
                path: path.to_string(),
                field: name.to_string(),
            })?
            .as_u64()
            .filter(|&v| v <= u32::MAX as u64)
            .map(|v| v as u32)
            .ok_or_else(|| invalid(&format!("{path}.{name}"), "a non-negative integer"))
    };
    Ok(Anchor::Absolute {
        x: coord("x")?,
        z: coord("z")?,
    })
}

fn parse_reference(value: &Value, path: &str) -> Result<Reference, PlanError> {
    match value {
        Value::String(s) if s == "previous" => Ok(Reference::PreviousStep),
        Value::Object(map) if map.len() == 1 => {
            if let Some(step) = map.get("step") {
                let k = step
                    .as_u64()
                    .ok_or_else(|| invalid(&format!("{path}.step"), "an action index"))?;
                Ok(Reference::Step(k as usize))
            } else if let Some(color) = map.get("color") {
                Ok(Reference::Color(parse_color(
                    color,
                    &format!("{path}.color"),
                )?))
            } else {
                Err(invalid(path, "{\"step\": n} or {\"color\": name}"))
            }
        }
        _ => Err(invalid(
            path,
            "\"previous\", {\"step\": n}, or {\"color\": name}",
        )),
    }
}

fn parse_color(value: &Value, path: &str) -> Result<Color, PlanError> {
    value
        .as_str()
        .and_then(|s| s.parse::<Color>().ok())
        .ok_or_else(|| invalid(path, "a color name"))
}

fn parse_direction(value: &Value, path: &str) -> Result<Direction, PlanError> {
    value
        .as_str()
        .and_then(Direction::parse)
        .ok_or_else(|| {
            invalid(
                path,
                "one of \"north\", \"south\", \"east\", \"west\", \"in_front\", \"behind\"",
            )
        })
}

fn action_to_value(action: &Action) -> Value {
    let mut obj = Map::new();
    obj.insert("action".into(), Value::String(action.kind.name().into()));
    match action.anchor {
        Anchor::Absolute { x, z } => {
            let mut at = Map::new();
            at.insert("x".into(), Value::from(x));
            at.insert("z".into(), Value::from(z));
            obj.insert("at".into(), Value::Object(at));
        }
        Anchor::Relative { reference, offset } => {
            let r = match reference {
                Reference::PreviousStep => Value::String("previous".into()),
                Reference::Step(k) => {
                    let mut m = Map::new();
                    m.insert("step".into(), Value::from(k as u64));
                    Value::Object(m)
                }
                Reference::Color(c) => {
                    let mut m = Map::new();
                    m.insert("color".into(), Value::String(c.name().into()));
                    Value::Object(m)
                }
            };
            obj.insert("ref".into(), r);
            if let Some(offset) = offset {
                obj.insert("offset".into(), Value::String(offset.name().into()));
            }
        }
    }
    if let Some(color) = action.color {
        obj.insert("color".into(), Value::String(color.name().into()));
    }
    if let Some(count) = action.count {
        obj.insert("count".into(), Value::from(count));
    }
    if let Some(direction) = action.direction {
        obj.insert("direction".into(), Value::String(direction.name().into()));
    }
    Value::Object(obj)
}

/// Convenience constructors used heavily by tests and fixtures.
impl Action {
    pub fn place(x: u32, z: u32, color: Color) -> Action {
        Action {
            kind: ActionKind::Place,
            anchor: Anchor::Absolute { x, z },
            color: Some(color),
            count: None,
            direction: None,
        }
    }

    pub fn stack(x: u32, z: u32, color: Color, count: u32) -> Action {
        Action {
            kind: ActionKind::Stack,
            anchor: Anchor::Absolute { x, z },
            color: Some(color),
            count: Some(count),
            direction: None,
        }
    }

    pub fn row(x: u32, z: u32, color: Color, count: u32, direction: Direction) -> Action {
        Action {
            kind: ActionKind::Row,
            anchor: Anchor::Absolute { x, z },
            color: Some(color),
            count: Some(count),
            direction: Some(direction),
        }
    }

    pub fn extend_color(color: Color, count: u32, direction: Direction) -> Action {
        Action {
            kind: ActionKind::Extend,
            anchor: Anchor::Relative {
                reference: Reference::Color(color),
                offset: None,
            },
            color: None,
            count: Some(count),
            direction: Some(direction),
        }
    }

    pub fn with_anchor(mut self, anchor: Anchor) -> Action {
        self.anchor = anchor;
        self
    }
}
