//! Text renderings of an environment for prompts, and a parser for the
//! structured rendering.
//!
//! All three styles list objects in reading order (row by row, then column)
//! and share the same numeric facts. The structured style is the one stored
//! in datasets; [`parse_structured`] inverts it.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Color, Coord, Direction, DoorState, GridError, ObjKind, Pose, WorldObject, WorldState};
use crate::levels::EnvInstance;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("inconsistent description: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("unknown format style `{0}`")]
    UnknownStyle(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatStyle {
    Narrative,
    #[default]
    Structured,
    Json,
}

impl FormatStyle {
    pub const ALL: [FormatStyle; 3] = [FormatStyle::Narrative, FormatStyle::Structured, FormatStyle::Json];

    pub fn name(self) -> &'static str {
        match self {
            FormatStyle::Narrative => "narrative",
            FormatStyle::Structured => "structured",
            FormatStyle::Json => "json",
        }
    }
}

impl FromStr for FormatStyle {
    type Err = FormatError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FormatStyle::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| FormatError::UnknownStyle(s.to_string()))
    }
}

/// Rendering switches. The default output is the byte-stable dataset format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FormatOptions {
    /// Also report whether each door is open.
    pub door_open_flag: bool,
}

const INTRO: &str = "An agent is in a grid world consisting of one or more rooms. All rooms in the same grid world are squares of identical size and are organized in a square grid layout. ";

const WORLD_RULES: &str = "Rooms are separated by walls and might contain objects such as keys, balls, and boxes of different colors. Some walls, connecting two adjacent rooms, have doors. Some doors are unlocked, whereas others need to be unlocked with keys of the same color. The agent can perform 6 actions";

const ACTIONS: [&str; 6] = [
    "left (turn left)",
    "right (turn right)",
    "forward (move forward)",
    "pickup (pickup an object)",
    "drop (drop an object)",
    "toggle (open/close a door or a box)",
];

const MOVE_RULES: &str = "Only the forward action changes the agent's position in the grid world. Turning left or right changes the agent's orientation only but not the position. The agent cannot move into a cell that is already occupied by an object, even if the object is one it is trying to interact with. Using a coordinate system where the (0, 0) position is the top-left corner of the grid world, necessarily corresponding to a wall, the coordinates follow the format (x, y), with x denoting the horizontal position in the grid and y denoting the vertical position in the grid";

const SPECIFICS: &str = "These are the specifics regarding this environment:";

fn py_bool(b: bool) -> &'static str {
    if b { "True" } else { "False" }
}

fn pair(c: Coord) -> String {
    format!("({}, {})", c.x, c.y)
}

pub fn format(state: &WorldState, mission: &str, style: FormatStyle) -> String {
    format_with(state, mission, style, FormatOptions::default())
}

pub fn format_instance(instance: &EnvInstance, style: FormatStyle) -> String {
    format(&instance.state, &instance.mission.render(), style)
}

pub fn format_with(state: &WorldState, mission: &str, style: FormatStyle, opts: FormatOptions) -> String {
    match style {
        FormatStyle::Narrative => narrative(state, mission, opts),
        FormatStyle::Structured => structured(state, mission, opts),
        FormatStyle::Json => json(state, mission, opts),
    }
}

fn object_fields(o: &WorldObject) -> String {
    format!("{}, color={}", o.kind, o.color)
}

fn door_flags(o: &WorldObject, opts: FormatOptions) -> String {
    let mut s = String::new();
    if let Some(d) = o.door {
        let _ = write!(s, ", locked={}", py_bool(d == DoorState::Locked));
        if opts.door_open_flag {
            let _ = write!(s, ", open={}", py_bool(d == DoorState::Open));
        }
    }
    s
}

fn structured(state: &WorldState, mission: &str, opts: FormatOptions) -> String {
    let rooms = state.rooms_per_side();
    let size = state.room_size();
    let pose = state.agent.pose();
    let mut s = String::new();
    s.push_str(INTRO);
    s.push_str(WORLD_RULES);
    s.push_str(":\n");
    for (i, a) in ACTIONS.iter().enumerate() {
        let end = if i + 1 == ACTIONS.len() { '.' } else { ',' };
        let _ = writeln!(s, "- {a}{end}");
    }
    s.push_str(MOVE_RULES);
    s.push_str(".\n\n");
    s.push_str(SPECIFICS);
    s.push('\n');
    let _ = writeln!(s, "- Number of rooms: {rooms}x{rooms}");
    let _ = writeln!(s, "- Size of each room (including walls): {size}x{size}");
    let _ = writeln!(s, "- Effective room size (excluding walls): {0}x{0}", size - 2);
    let _ = writeln!(s, "- Total grid size: {}x{}", state.width(), state.height());
    let _ = writeln!(s, "- Agent initial position: {}", pair(pose.position));
    let _ = writeln!(
        s,
        "- Agent facing direction: {} (toward {})",
        pose.direction.name(),
        pair(pose.front())
    );
    if let Some(c) = &state.agent.carrying {
        let _ = writeln!(s, "- Agent carrying: {}", object_fields(c));
    }
    s.push_str("- Objects in environment:\n");
    for (p, o) in state.objects() {
        let _ = writeln!(
            s,
            "  - {}, position={}{}",
            object_fields(&o),
            pair(p),
            door_flags(&o, opts)
        );
    }
    let _ = writeln!(s, "- Mission: '{mission}.'");
    s
}

fn narrative_object(o: &WorldObject, opts: FormatOptions) -> String {
    match o.door {
        Some(DoorState::Locked) => format!("a locked {} door", o.color),
        Some(d) if opts.door_open_flag => {
            let state = if d == DoorState::Open { "an open" } else { "a closed" };
            format!("{state} unlocked {} door", o.color)
        }
        Some(_) => format!("an unlocked {} door", o.color),
        None => format!("a {} {}", o.color, o.kind),
    }
}

fn narrative(state: &WorldState, mission: &str, opts: FormatOptions) -> String {
    let rooms = state.rooms_per_side();
    let size = state.room_size();
    let pose = state.agent.pose();
    let mut s = format!(
        "An agent in a grid world made of {rooms}x{rooms} rooms, each of size {size}x{size}, including the surrounding walls, meaning that effectively, each room is of size {0}x{0}. The total grid size is thus {1}x{2}. ",
        size - 2,
        state.width(),
        state.height()
    );
    s.push_str(WORLD_RULES);
    s.push_str(": ");
    let n = ACTIONS.len();
    s.push_str(&ACTIONS[..n - 1].join(", "));
    let _ = write!(s, ", and {}. ", ACTIONS[n - 1]);
    s.push_str(MOVE_RULES);
    let _ = write!(
        s,
        ", and the agent is initially placed at {}, facing {}, toward the {} position.",
        pair(pose.position),
        pose.direction.name(),
        pair(pose.front())
    );
    if let Some(c) = &state.agent.carrying {
        let _ = write!(s, " The agent is carrying a {} {}.", c.color, c.kind);
    }
    let items: Vec<String> = state
        .objects()
        .map(|(p, o)| format!("{} at position {}", narrative_object(&o, opts), pair(p)))
        .collect();
    match items.len() {
        0 => s.push_str(" There are no objects in the environment."),
        1 => {
            let _ = write!(s, " There is {}.", items[0]);
        }
        k => {
            let _ = write!(s, " There is {}, and {}.", items[..k - 1].join(", "), items[k - 1]);
        }
    }
    let _ = write!(s, " The agent's mission is '{mission}.'");
    s
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn json(state: &WorldState, mission: &str, opts: FormatOptions) -> String {
    let rooms = state.rooms_per_side();
    let size = state.room_size();
    let pose = state.agent.pose();
    let context = format!("{INTRO}{WORLD_RULES}: {}. {MOVE_RULES},\n\n{SPECIFICS} \n\n", {
        let n = ACTIONS.len();
        format!("{}, and {}", ACTIONS[..n - 1].join(", "), ACTIONS[n - 1])
    });
    let xy = |c: Coord| format!("[{}, {}]", c.x, c.y);
    let object = |o: &WorldObject, p: Option<Coord>| {
        let mut s = format!("{{\"type\": \"{}\", \"color\": \"{}\"", o.kind, o.color);
        if let Some(p) = p {
            let _ = write!(s, ", \"position\": {}", xy(p));
        }
        if let Some(d) = o.door {
            let _ = write!(s, ", \"locked\": {}", d == DoorState::Locked);
            if opts.door_open_flag {
                let _ = write!(s, ", \"open\": {}", d == DoorState::Open);
            }
        }
        s.push('}');
        s
    };
    let mut s = String::from("{\n");
    let _ = writeln!(s, "  \"context\": {},", json_str(&context));
    s.push_str("  \"config\": {\n");
    let _ = writeln!(s, "    \"num_rooms\": [{rooms}, {rooms}],");
    let _ = writeln!(s, "    \"room_size_incl_walls\": [{size}, {size}],");
    let _ = writeln!(s, "    \"room_size_excl_walls\": [{0}, {0}],", size - 2);
    let _ = writeln!(s, "    \"grid_size\": [{}, {}],", state.width(), state.height());
    let _ = writeln!(s, "    \"agent_initial_pos\": {},", xy(pose.position));
    let _ = writeln!(s, "    \"agent_front_pos\": {},", xy(pose.front()));
    s.push_str("    \"agent_direction\": {\n");
    let _ = writeln!(s, "      \"index\": {},", pose.direction.index());
    let _ = writeln!(s, "      \"name\": \"{}\"", pose.direction.name());
    s.push_str("    },\n");
    if let Some(c) = &state.agent.carrying {
        let _ = writeln!(s, "    \"agent_carrying\": {},", object(c, None));
    }
    let objects: Vec<String> = state
        .objects()
        .map(|(p, o)| format!("      {}", object(&o, Some(p))))
        .collect();
    if objects.is_empty() {
        s.push_str("    \"objects\": [],\n");
    } else {
        let _ = writeln!(s, "    \"objects\": [\n{}\n    ],", objects.join(",\n"));
    }
    let _ = writeln!(s, "    \"mission\": {}", json_str(mission));
    s.push_str("  }\n}");
    s
}

/// Facts recovered from a structured description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedEnv {
    pub rooms_per_side: i32,
    pub room_size: i32,
    pub agent: Pose,
    pub carrying: Option<WorldObject>,
    pub objects: Vec<(Coord, WorldObject)>,
    pub mission: String,
}

impl ParsedEnv {
    /// What [`parse_structured`] should recover from `format(state, mission, ..)`
    /// without the open flag: doors read back as either locked or closed.
    pub fn expected(state: &WorldState, mission: &str, opts: FormatOptions) -> ParsedEnv {
        let fold = |o: WorldObject| match o.door {
            Some(DoorState::Open) if !opts.door_open_flag => WorldObject::door(o.color, DoorState::Closed),
            _ => o,
        };
        ParsedEnv {
            rooms_per_side: state.rooms_per_side(),
            room_size: state.room_size(),
            agent: state.agent.pose(),
            carrying: state.agent.carrying,
            objects: state.objects().map(|(p, o)| (p, fold(o))).collect(),
            mission: mission.to_string(),
        }
    }

    /// Rebuilds the world. Only valid for descriptions of reachable states.
    pub fn to_state(&self) -> Result<WorldState, FormatError> {
        let mut w = WorldState::with_rooms(self.rooms_per_side, self.room_size)?;
        // Doors first so the agent can stand in an open doorway; the agent
        // before other objects so its parking cell is free for them.
        for &(p, o) in &self.objects {
            if let Some(d) = o.door {
                w.add_door(p, o.color, d)?;
            }
        }
        w.set_agent(self.agent.position, self.agent.direction)?;
        for &(p, o) in self.objects.iter().filter(|(_, o)| o.door.is_none()) {
            w.place(p, o)?;
        }
        w.agent.carrying = self.carrying;
        Ok(w)
    }
}

static OBJECT_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(key|ball|box|door), color=([a-z]+), position=\((-?\d+), (-?\d+)\)(?:, locked=(True|False))?(?:, open=(True|False))?$",
    )
    .expect("valid regex")
});
static CARRY_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(key|ball|box), color=([a-z]+)$").expect("valid regex"));
static PAIR_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\((-?\d+), (-?\d+)\)$").expect("valid regex"));
static SQUARE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d+)x(\d+)$").expect("valid regex"));
static FACING_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([a-z]+) \(toward \((-?\d+), (-?\d+)\)\)$").expect("valid regex"));

fn int(s: &str, line: usize) -> Result<i32, FormatError> {
    s.parse().map_err(|_| FormatError::Line {
        line,
        msg: format!("`{s}` is not an integer"),
    })
}

fn bad(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Line { line, msg: msg.into() }
}

fn square(v: &str, line: usize) -> Result<(i32, i32), FormatError> {
    let c = SQUARE_RE
        .captures(v)
        .ok_or_else(|| bad(line, format!("expected `NxM`, got `{v}`")))?;
    Ok((int(&c[1], line)?, int(&c[2], line)?))
}

fn coord(v: &str, line: usize) -> Result<Coord, FormatError> {
    let c = PAIR_RE
        .captures(v)
        .ok_or_else(|| bad(line, format!("expected `(x, y)`, got `{v}`")))?;
    Ok(Coord::new(int(&c[1], line)?, int(&c[2], line)?))
}

fn parse_object(v: &str, line: usize) -> Result<(Coord, WorldObject), FormatError> {
    let c = OBJECT_RE
        .captures(v)
        .ok_or_else(|| bad(line, format!("malformed object `{v}`")))?;
    let kind: ObjKind = c[1].parse()?;
    let color: Color = c[2].parse().map_err(|e: GridError| bad(line, e.to_string()))?;
    let pos = Coord::new(int(&c[3], line)?, int(&c[4], line)?);
    let locked = c.get(5).map(|m| m.as_str() == "True");
    let open = c.get(6).map(|m| m.as_str() == "True");
    let obj = match (kind, locked) {
        (ObjKind::Door, Some(true)) => WorldObject::door(color, DoorState::Locked),
        (ObjKind::Door, Some(false)) if open == Some(true) => WorldObject::door(color, DoorState::Open),
        (ObjKind::Door, Some(false)) => WorldObject::door(color, DoorState::Closed),
        (ObjKind::Door, None) => return Err(bad(line, "door without a locked flag")),
        (_, Some(_)) => return Err(bad(line, "only doors carry a locked flag")),
        (k, None) => WorldObject::new(k, color),
    };
    Ok((pos, obj))
}

/// Parses text produced by the structured style. Errors carry 1-based line numbers.
pub fn parse_structured(text: &str) -> Result<ParsedEnv, FormatError> {
    let mut rooms = None;
    let mut size = None;
    let mut inner = None;
    let mut grid = None;
    let mut position = None;
    let mut facing = None;
    let mut carrying = None;
    let mut objects = Vec::new();
    let mut mission = None;
    let mut in_objects = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if let Some(v) = raw.strip_prefix("  - ") {
            if !in_objects {
                return Err(bad(line, "object entry outside the object list"));
            }
            objects.push(parse_object(v, line)?);
            continue;
        }
        let Some(item) = raw.strip_prefix("- ") else {
            continue;
        };
        let Some((key, value)) = item.split_once(':') else {
            continue;
        };
        let value = value.trim_start();
        in_objects = false;
        match key {
            "Number of rooms" => rooms = Some(square(value, line)?),
            "Size of each room (including walls)" => size = Some(square(value, line)?),
            "Effective room size (excluding walls)" => inner = Some(square(value, line)?),
            "Total grid size" => grid = Some(square(value, line)?),
            "Agent initial position" => position = Some(coord(value, line)?),
            "Agent facing direction" => {
                let c = FACING_RE
                    .captures(value)
                    .ok_or_else(|| bad(line, format!("malformed direction `{value}`")))?;
                let d = Direction::from_name(&c[1]).ok_or_else(|| bad(line, format!("unknown direction `{}`", &c[1])))?;
                let toward = Coord::new(int(&c[2], line)?, int(&c[3], line)?);
                facing = Some((d, toward, line));
            }
            "Agent carrying" => {
                let c = CARRY_RE
                    .captures(value)
                    .ok_or_else(|| bad(line, format!("malformed carried object `{value}`")))?;
                let kind: ObjKind = c[1].parse()?;
                let color: Color = c[2].parse().map_err(|e: GridError| bad(line, e.to_string()))?;
                carrying = Some(WorldObject::new(kind, color));
            }
            "Objects in environment" => {
                if !value.is_empty() {
                    return Err(bad(line, "unexpected text after the object list header"));
                }
                in_objects = true;
            }
            "Mission" => {
                let m = value
                    .strip_prefix('\'')
                    .and_then(|v| v.strip_suffix(".'"))
                    .ok_or_else(|| bad(line, "mission must be quoted and end with a period"))?;
                mission = Some(m.to_string());
            }
            _ => {}
        }
    }

    let (rooms, rooms_y) = rooms.ok_or(FormatError::Missing("Number of rooms"))?;
    let (size, size_y) = size.ok_or(FormatError::Missing("Size of each room (including walls)"))?;
    let inner = inner.ok_or(FormatError::Missing("Effective room size (excluding walls)"))?;
    let grid = grid.ok_or(FormatError::Missing("Total grid size"))?;
    let position = position.ok_or(FormatError::Missing("Agent initial position"))?;
    let (direction, toward, facing_line) = facing.ok_or(FormatError::Missing("Agent facing direction"))?;
    let mission = mission.ok_or(FormatError::Missing("Mission"))?;

    if rooms != rooms_y || size != size_y {
        return Err(FormatError::Inconsistent("rooms must be square".into()));
    }
    if inner != (size - 2, size - 2) {
        return Err(FormatError::Inconsistent(format!(
            "effective size {}x{} does not match room size {size}",
            inner.0, inner.1
        )));
    }
    let side = rooms * (size - 1) + 1;
    if grid != (side, side) {
        return Err(FormatError::Inconsistent(format!(
            "grid {}x{} does not match {rooms}x{rooms} rooms of size {size}",
            grid.0, grid.1
        )));
    }
    let agent = Pose::new(position, direction);
    if agent.front() != toward {
        return Err(bad(facing_line, format!("{} is not in front of the agent", pair(toward))));
    }
    Ok(ParsedEnv {
        rooms_per_side: rooms,
        room_size: size,
        agent,
        carrying,
        objects,
        mission,
    })
}
