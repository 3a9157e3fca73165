//! World model: cells, objects, agent pose and the transition function.
//!
//! Coordinates are `(x, y)` with `(0, 0)` the top-left corner; `x` grows to the
//! right and `y` grows downwards. The grid is laid out as a square arrangement
//! of square rooms that share their boundary walls.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("position {0} is outside the {1}x{2} grid")]
    OutOfBounds(Coord, i32, i32),
    #[error("cell {0} is already occupied")]
    Occupied(Coord),
    #[error("doors must sit on an interior wall segment, got {0}")]
    DoorOffWall(Coord),
    #[error("agent cannot stand on {0}")]
    BadAgentCell(Coord),
    #[error("invalid room layout: {0}")]
    Layout(String),
    #[error("unknown {kind} `{value}`")]
    Unknown { kind: &'static str, value: String },
}

/// A grid position serialized as a two-element `[x, y]` array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct Coord {
    pub x: i32,
    pub y: i32,
}

impl Coord {
    pub const fn new(x: i32, y: i32) -> Self {
        Coord { x, y }
    }

    pub fn offset(self, (dx, dy): (i32, i32)) -> Coord {
        Coord::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Coord) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    /// Sort key for row-major reading order.
    pub fn reading_key(self) -> (i32, i32) {
        (self.y, self.x)
    }

    pub fn neighbors(self) -> [Coord; 4] {
        Direction::ALL.map(|d| self.offset(d.delta()))
    }
}

impl From<(i32, i32)> for Coord {
    fn from((x, y): (i32, i32)) -> Self {
        Coord { x, y }
    }
}

impl From<Coord> for (i32, i32) {
    fn from(c: Coord) -> Self {
        (c.x, c.y)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// True iff the two cells share an edge.
pub fn is_adjacent(a: Coord, b: Coord) -> bool {
    a.manhattan(b) == 1
}

/// Agent heading. The integer index is the wire representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Direction {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Direction {
    /// Expansion order used wherever a deterministic neighbor order is needed.
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::South,
        Direction::West,
        Direction::North,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Direction> {
        Direction::ALL.get(i as usize).copied()
    }

    pub fn right(self) -> Direction {
        Direction::ALL[(self.index() as usize + 1) % 4]
    }

    pub fn left(self) -> Direction {
        Direction::ALL[(self.index() as usize + 3) % 4]
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
            Direction::North => (0, -1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::East => "east",
            Direction::South => "south",
            Direction::West => "west",
            Direction::North => "north",
        }
    }

    pub fn from_name(s: &str) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.name() == s)
    }
}

impl TryFrom<u8> for Direction {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Direction::from_index(v).ok_or_else(|| format!("direction index {v} not in 0..=3"))
    }
}

impl From<Direction> for u8 {
    fn from(d: Direction) -> u8 {
        d.index()
    }
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident, $label:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = GridError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(GridError::Unknown { kind: $label, value: s.to_string() }),
                }
            }
        }
    };
}

named_enum!(Color, "color" {
    Red => "red",
    Green => "green",
    Blue => "blue",
    Purple => "purple",
    Yellow => "yellow",
    Grey => "grey",
});

named_enum!(ObjKind, "object kind" {
    Key => "key",
    Ball => "ball",
    Box => "box",
    Door => "door",
});

impl ObjKind {
    /// Kinds the agent can carry.
    pub const PORTABLE: [ObjKind; 3] = [ObjKind::Key, ObjKind::Ball, ObjKind::Box];

    pub fn is_portable(self) -> bool {
        self != ObjKind::Door
    }
}

named_enum!(
    /// State of a door. Doors closed by the agent become [`DoorState::Closed`].
    DoorState, "door state" {
    Open => "open",
    Closed => "closed",
    Locked => "locked",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WorldObject {
    pub kind: ObjKind,
    pub color: Color,
    /// `Some` exactly for doors.
    pub door: Option<DoorState>,
}

impl WorldObject {
    pub fn new(kind: ObjKind, color: Color) -> Self {
        let door = (kind == ObjKind::Door).then_some(DoorState::Closed);
        WorldObject { kind, color, door }
    }

    pub fn door(color: Color, state: DoorState) -> Self {
        WorldObject {
            kind: ObjKind::Door,
            color,
            door: Some(state),
        }
    }

    pub fn is_open_door(&self) -> bool {
        self.door == Some(DoorState::Open)
    }

    pub fn is_locked(&self) -> bool {
        self.door == Some(DoorState::Locked)
    }
}

impl fmt::Display for WorldObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.color, self.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Cell {
    #[default]
    Floor,
    Wall,
    Object(WorldObject),
}

impl Cell {
    /// Whether the agent may stand on this cell.
    pub fn is_traversable(&self) -> bool {
        match self {
            Cell::Floor => true,
            Cell::Wall => false,
            Cell::Object(o) => o.is_open_door(),
        }
    }

    pub fn object(&self) -> Option<&WorldObject> {
        match self {
            Cell::Object(o) => Some(o),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Left,
    Right,
    Forward,
    Pickup,
    Drop,
    Toggle,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::Left,
        Action::Right,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Toggle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::Left => "left",
            Action::Right => "right",
            Action::Forward => "forward",
            Action::Pickup => "pickup",
            Action::Drop => "drop",
            Action::Toggle => "toggle",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = GridError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| GridError::Unknown {
                kind: "action",
                value: s.to_string(),
            })
    }
}

/// Position plus heading, the `{position, direction}` record used in datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub position: Coord,
    pub direction: Direction,
}

impl Pose {
    pub fn new(position: Coord, direction: Direction) -> Self {
        Pose { position, direction }
    }

    pub fn front(&self) -> Coord {
        self.position.offset(self.direction.delta())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentState {
    pub position: Coord,
    pub direction: Direction,
    pub carrying: Option<WorldObject>,
}

impl AgentState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.direction)
    }
}

/// Outcome of [`step`]: the successor state plus whether the action had any
/// effect besides advancing the step counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: WorldState,
    pub effective: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldState {
    width: i32,
    height: i32,
    rooms_per_side: i32,
    room_size: i32,
    cells: Vec<Cell>,
    pub agent: AgentState,
    pub step_count: u32,
}

impl WorldState {
    /// Empty layout of `rooms_per_side`² rooms, each `room_size` cells wide
    /// including its walls. Neighboring rooms share a wall, so the grid is
    /// `rooms_per_side * (room_size - 1) + 1` cells per side. The agent is
    /// parked at `(1, 1)` facing east until [`WorldState::set_agent`].
    pub fn with_rooms(rooms_per_side: i32, room_size: i32) -> Result<Self, GridError> {
        if rooms_per_side < 1 || room_size < 3 {
            return Err(GridError::Layout(format!(
                "{rooms_per_side} rooms per side of size {room_size}"
            )));
        }
        let size = rooms_per_side * (room_size - 1) + 1;
        let step = room_size - 1;
        let mut cells = vec![Cell::Floor; (size * size) as usize];
        for y in 0..size {
            for x in 0..size {
                if x % step == 0 || y % step == 0 {
                    cells[(y * size + x) as usize] = Cell::Wall;
                }
            }
        }
        Ok(WorldState {
            width: size,
            height: size,
            rooms_per_side,
            room_size,
            cells,
            agent: AgentState {
                position: Coord::new(1, 1),
                direction: Direction::East,
                carrying: None,
            },
            step_count: 0,
        })
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn rooms_per_side(&self) -> i32 {
        self.rooms_per_side
    }

    /// Room side length including walls.
    pub fn room_size(&self) -> i32 {
        self.room_size
    }

    pub fn in_bounds(&self, c: Coord) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    fn idx(&self, c: Coord) -> usize {
        (c.y * self.width + c.x) as usize
    }

    /// Cell contents; out-of-grid positions read as walls.
    pub fn cell(&self, c: Coord) -> Cell {
        if self.in_bounds(c) {
            self.cells[self.idx(c)]
        } else {
            Cell::Wall
        }
    }

    pub fn object_at(&self, c: Coord) -> Option<WorldObject> {
        self.cell(c).object().copied()
    }

    pub fn is_wall_segment(&self, c: Coord) -> bool {
        let step = self.room_size - 1;
        self.in_bounds(c) && (c.x % step == 0 || c.y % step == 0)
    }

    /// Interior wall cell that can host a door: on a shared wall, not on the
    /// outer boundary and not at a wall junction.
    pub fn is_door_slot(&self, c: Coord) -> bool {
        let step = self.room_size - 1;
        if !self.in_bounds(c) || c.x == 0 || c.y == 0 || c.x == self.width - 1 || c.y == self.height - 1 {
            return false;
        }
        (c.x % step == 0) != (c.y % step == 0)
    }

    /// Room `(column, row)` containing an interior cell, or `None` for walls.
    pub fn room_of(&self, c: Coord) -> Option<(i32, i32)> {
        let step = self.room_size - 1;
        if !self.in_bounds(c) || c.x % step == 0 || c.y % step == 0 {
            return None;
        }
        Some((c.x / step, c.y / step))
    }

    /// Top-left corner (on the wall) of room `(column, row)`.
    pub fn room_origin(&self, room: (i32, i32)) -> Coord {
        let step = self.room_size - 1;
        Coord::new(room.0 * step, room.1 * step)
    }

    /// Interior cells of a room in reading order.
    pub fn room_interior(&self, room: (i32, i32)) -> impl Iterator<Item = Coord> {
        let o = self.room_origin(room);
        let inner = self.room_size - 2;
        (0..inner).flat_map(move |dy| (0..inner).map(move |dx| Coord::new(o.x + 1 + dx, o.y + 1 + dy)))
    }

    /// Place an object on a free floor cell (doors go through [`WorldState::add_door`]).
    pub fn place(&mut self, c: Coord, obj: WorldObject) -> Result<(), GridError> {
        if obj.kind == ObjKind::Door {
            return self.add_door(c, obj.color, obj.door.unwrap_or(DoorState::Closed));
        }
        if !self.in_bounds(c) {
            return Err(GridError::OutOfBounds(c, self.width, self.height));
        }
        if self.cell(c) != Cell::Floor || self.agent.position == c {
            return Err(GridError::Occupied(c));
        }
        let i = self.idx(c);
        self.cells[i] = Cell::Object(obj);
        Ok(())
    }

    pub fn add_door(&mut self, c: Coord, color: Color, state: DoorState) -> Result<(), GridError> {
        if !self.is_door_slot(c) {
            return Err(GridError::DoorOffWall(c));
        }
        if self.cell(c) != Cell::Wall {
            return Err(GridError::Occupied(c));
        }
        let i = self.idx(c);
        self.cells[i] = Cell::Object(WorldObject::door(color, state));
        Ok(())
    }

    /// Overwrite a cell, bypassing placement checks. Used by the engine and
    /// planners that manipulate hypothetical states.
    pub(crate) fn set_cell(&mut self, c: Coord, cell: Cell) {
        let i = self.idx(c);
        self.cells[i] = cell;
    }

    pub fn set_agent(&mut self, position: Coord, direction: Direction) -> Result<(), GridError> {
        match self.cell(position) {
            Cell::Floor => {}
            Cell::Object(o) if o.is_open_door() => {}
            _ => return Err(GridError::BadAgentCell(position)),
        }
        self.agent.position = position;
        self.agent.direction = direction;
        Ok(())
    }

    /// All objects on the grid in reading order.
    pub fn objects(&self) -> impl Iterator<Item = (Coord, WorldObject)> + '_ {
        let w = self.width;
        self.cells.iter().enumerate().filter_map(move |(i, cell)| {
            cell.object()
                .map(|o| (Coord::new(i as i32 % w, i as i32 / w), *o))
        })
    }

    /// Cell the agent faces, or `None` when that lies outside the grid.
    pub fn front_cell(&self) -> Option<Coord> {
        let c = self.agent.pose().front();
        self.in_bounds(c).then_some(c)
    }

    /// Checks the structural invariants that every reachable state satisfies.
    pub fn validate(&self) -> Result<(), GridError> {
        let expected = self.rooms_per_side * (self.room_size - 1) + 1;
        if self.width != expected || self.height != expected {
            return Err(GridError::Layout(format!(
                "grid {}x{} does not match {} rooms of size {}",
                self.width, self.height, self.rooms_per_side, self.room_size
            )));
        }
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Coord::new(x, y);
                let on_wall = self.is_wall_segment(c);
                match self.cell(c) {
                    Cell::Wall if !on_wall => {
                        return Err(GridError::Layout(format!("stray wall at {c}")))
                    }
                    Cell::Floor if on_wall => {
                        return Err(GridError::Layout(format!("hole in wall at {c}")))
                    }
                    Cell::Object(o) if o.kind == ObjKind::Door && !self.is_door_slot(c) => {
                        return Err(GridError::DoorOffWall(c))
                    }
                    Cell::Object(o) if o.kind != ObjKind::Door && on_wall => {
                        return Err(GridError::Layout(format!("{o} embedded in wall at {c}")))
                    }
                    _ => {}
                }
            }
        }
        if !self.cell(self.agent.position).is_traversable() {
            return Err(GridError::BadAgentCell(self.agent.position));
        }
        Ok(())
    }

    /// Apply an action in place. Returns whether it had an effect; the step
    /// counter advances either way.
    pub fn apply(&mut self, action: Action) -> bool {
        self.step_count += 1;
        let front = self.agent.pose().front();
        match action {
            Action::Left => {
                self.agent.direction = self.agent.direction.left();
                true
            }
            Action::Right => {
                self.agent.direction = self.agent.direction.right();
                true
            }
            Action::Forward => {
                if self.in_bounds(front) && self.cell(front).is_traversable() {
                    self.agent.position = front;
                    true
                } else {
                    false
                }
            }
            Action::Pickup => match (self.agent.carrying, self.cell(front)) {
                (None, Cell::Object(o)) if o.kind.is_portable() => {
                    self.agent.carrying = Some(o);
                    self.set_cell(front, Cell::Floor);
                    true
                }
                _ => false,
            },
            Action::Drop => match (self.agent.carrying, self.cell(front)) {
                (Some(o), Cell::Floor) if self.in_bounds(front) => {
                    self.set_cell(front, Cell::Object(o));
                    self.agent.carrying = None;
                    true
                }
                _ => false,
            },
            Action::Toggle => match self.cell(front) {
                Cell::Object(o) if o.kind == ObjKind::Door => {
                    let next = match o.door {
                        Some(DoorState::Open) => DoorState::Closed,
                        Some(DoorState::Closed) => DoorState::Open,
                        Some(DoorState::Locked) => {
                            let has_key = self
                                .agent
                                .carrying
                                .is_some_and(|k| k.kind == ObjKind::Key && k.color == o.color);
                            if !has_key {
                                return false;
                            }
                            DoorState::Open
                        }
                        None => return false,
                    };
                    self.set_cell(front, Cell::Object(WorldObject::door(o.color, next)));
                    true
                }
                Cell::Object(o) if o.kind == ObjKind::Box => {
                    self.set_cell(front, Cell::Floor);
                    true
                }
                _ => false,
            },
        }
    }

    /// Two characters per cell: `##` wall, `..` floor, kind + color initial
    /// for objects (`K` key, `A` ball, `B` box, `D`/`L`/`_` closed/locked/open
    /// door), and an arrow pair for the agent.
    pub fn ascii(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Coord::new(x, y);
                if c == self.agent.position {
                    let a = [">>", "vv", "<<", "^^"][self.agent.direction.index() as usize];
                    out.push_str(a);
                    continue;
                }
                match self.cell(c) {
                    Cell::Wall => out.push_str("##"),
                    Cell::Floor => out.push_str(".."),
                    Cell::Object(o) => {
                        out.push(match (o.kind, o.door) {
                            (ObjKind::Key, _) => 'K',
                            (ObjKind::Ball, _) => 'A',
                            (ObjKind::Box, _) => 'B',
                            (_, Some(DoorState::Open)) => '_',
                            (_, Some(DoorState::Locked)) => 'L',
                            _ => 'D',
                        });
                        out.push(o.color.name().chars().next().unwrap());
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Multiset of `(kind, color)` over grid and hand, sorted.
    pub fn inventory(&self) -> Vec<(ObjKind, Color)> {
        let mut v: Vec<_> = self
            .objects()
            .map(|(_, o)| (o.kind, o.color))
            .chain(self.agent.carrying.map(|o| (o.kind, o.color)))
            .collect();
        v.sort();
        v
    }
}

/// Pure transition function.
pub fn step(state: &WorldState, action: Action) -> StepOutcome {
    let mut next = state.clone();
    let effective = next.apply(action);
    StepOutcome {
        state: next,
        effective,
    }
}

/// Re-execute `actions` from `state`, returning every intermediate state
/// (initial state first).
pub fn replay(state: &WorldState, actions: &[Action]) -> Vec<WorldState> {
    let mut out = Vec::with_capacity(actions.len() + 1);
    let mut cur = state.clone();
    out.push(cur.clone());
    for &a in actions {
        cur.apply(a);
        out.push(cur.clone());
    }
    out
}

/// Final state after `actions`, without keeping the intermediate states.
pub fn run_actions(state: &WorldState, actions: &[Action]) -> WorldState {
    let mut cur = state.clone();
    for &a in actions {
        cur.apply(a);
    }
    cur
}

mod json {
    use super::*;

    #[derive(Serialize, Deserialize)]
    pub(super) struct ObjectJson {
        #[serde(rename = "type")]
        pub kind: ObjKind,
        pub color: Color,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub position: Option<Coord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub state: Option<DoorState>,
    }

    #[derive(Serialize, Deserialize)]
    pub(super) struct AgentJson {
        pub position: Coord,
        pub direction: Direction,
        pub carrying: Option<ObjectJson>,
    }

    #[derive(Serialize, Deserialize)]
    pub(super) struct WorldJson {
        pub width: i32,
        pub height: i32,
        pub rooms_per_side: i32,
        pub room_size: i32,
        /// One string per row, `#` for wall and `.` for anything else.
        pub walls: Vec<String>,
        pub objects: Vec<ObjectJson>,
        pub agent: AgentJson,
        pub step_count: u32,
    }

    pub(super) fn object_json(o: &WorldObject, position: Option<Coord>) -> ObjectJson {
        ObjectJson {
            kind: o.kind,
            color: o.color,
            position,
            state: o.door,
        }
    }

    pub(super) fn object_from(j: &ObjectJson) -> WorldObject {
        match j.kind {
            ObjKind::Door => WorldObject::door(j.color, j.state.unwrap_or(DoorState::Closed)),
            k => WorldObject::new(k, j.color),
        }
    }
}

impl Serialize for WorldState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let walls = (0..self.height)
            .map(|y| {
                (0..self.width)
                    .map(|x| if self.cell(Coord::new(x, y)) == Cell::Wall { '#' } else { '.' })
                    .collect()
            })
            .collect();
        json::WorldJson {
            width: self.width,
            height: self.height,
            rooms_per_side: self.rooms_per_side,
            room_size: self.room_size,
            walls,
            objects: self
                .objects()
                .map(|(c, o)| json::object_json(&o, Some(c)))
                .collect(),
            agent: json::AgentJson {
                position: self.agent.position,
                direction: self.agent.direction,
                carrying: self.agent.carrying.as_ref().map(|o| json::object_json(o, None)),
            },
            step_count: self.step_count,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WorldState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let j = json::WorldJson::deserialize(d)?;
        let mut w = WorldState::with_rooms(j.rooms_per_side, j.room_size).map_err(D::Error::custom)?;
        if w.width != j.width || w.height != j.height || j.walls.len() != j.height as usize {
            return Err(D::Error::custom("grid dimensions disagree with room layout"));
        }
        for (y, row) in j.walls.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let c = Coord::new(x as i32, y as i32);
                let cell = if ch == '#' { Cell::Wall } else { Cell::Floor };
                if w.in_bounds(c) {
                    w.set_cell(c, cell);
                }
            }
        }
        for o in &j.objects {
            let pos = o.position.ok_or_else(|| D::Error::custom("object without position"))?;
            if !w.in_bounds(pos) {
                return Err(D::Error::custom(GridError::OutOfBounds(pos, w.width, w.height)));
            }
            w.set_cell(pos, Cell::Object(json::object_from(o)));
        }
        w.agent = AgentState {
            position: j.agent.position,
            direction: j.agent.direction,
            carrying: j.agent.carrying.as_ref().map(json::object_from),
        };
        w.step_count = j.step_count;
        w.validate().map_err(D::Error::custom)?;
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> WorldState {
        let mut w = WorldState::with_rooms(3, 8).unwrap();
        w.set_agent(Coord::new(3, 6), Direction::East).unwrap();
        w
    }

    #[test]
    fn layout_dimensions() {
        let w = WorldState::with_rooms(3, 8).unwrap();
        assert_eq!((w.width(), w.height()), (22, 22));
        assert_eq!(WorldState::with_rooms(1, 8).unwrap().width(), 8);
        assert_eq!(WorldState::with_rooms(1, 32).unwrap().width(), 32);
        assert!(w.validate().is_ok());
    }

    #[test]
    fn forward_moves_east() {
        let w = room();
        let next = step(&w, Action::Forward);
        assert!(next.effective);
        assert_eq!(next.state.agent.pose(), Pose::new(Coord::new(4, 6), Direction::East));
    }

    #[test]
    fn left_from_east_faces_north() {
        let next = step(&room(), Action::Left).state;
        assert_eq!(next.agent.direction, Direction::North);
        assert_eq!(next.agent.position, Coord::new(3, 6));
    }

    #[test]
    fn blocked_forward_only_counts_step() {
        let mut w = room();
        w.set_agent(Coord::new(6, 6), Direction::East).unwrap();
        let next = step(&w, Action::Forward);
        assert!(!next.effective);
        assert_eq!(next.state.agent.position, Coord::new(6, 6));
        assert_eq!(next.state.step_count, 1);
    }

    #[test]
    fn toggle_opens_door_then_walk_through() {
        let mut w = room();
        w.add_door(Coord::new(7, 6), Color::Blue, DoorState::Closed).unwrap();
        w.set_agent(Coord::new(6, 6), Direction::East).unwrap();
        let blocked = step(&w, Action::Forward);
        assert!(!blocked.effective);
        let opened = step(&w, Action::Toggle).state;
        assert_eq!(opened.object_at(Coord::new(7, 6)).unwrap().door, Some(DoorState::Open));
        let through = step(&opened, Action::Forward).state;
        assert_eq!(through.agent.position, Coord::new(7, 6));
        let closed = step(&opened, Action::Toggle).state;
        assert_eq!(closed.object_at(Coord::new(7, 6)).unwrap().door, Some(DoorState::Closed));
    }

    #[test]
    fn locked_door_needs_matching_key_which_is_kept() {
        let mut w = room();
        w.add_door(Coord::new(7, 6), Color::Green, DoorState::Locked).unwrap();
        w.set_agent(Coord::new(6, 6), Direction::East).unwrap();
        assert!(!step(&w, Action::Toggle).effective);
        w.agent.carrying = Some(WorldObject::new(ObjKind::Key, Color::Red));
        assert!(!step(&w, Action::Toggle).effective);
        w.agent.carrying = Some(WorldObject::new(ObjKind::Key, Color::Green));
        let out = step(&w, Action::Toggle);
        assert!(out.effective);
        assert!(out.state.object_at(Coord::new(7, 6)).unwrap().is_open_door());
        assert_eq!(out.state.agent.carrying, w.agent.carrying);
    }

    #[test]
    fn pickup_drop_and_box_toggle() {
        let mut w = room();
        w.place(Coord::new(4, 6), WorldObject::new(ObjKind::Ball, Color::Red)).unwrap();
        let picked = step(&w, Action::Pickup).state;
        assert_eq!(picked.agent.carrying.unwrap().kind, ObjKind::Ball);
        assert_eq!(picked.cell(Coord::new(4, 6)), Cell::Floor);
        // second pickup with a full hand does nothing
        assert!(!step(&picked, Action::Pickup).effective);
        let dropped = step(&picked, Action::Drop).state;
        assert_eq!(dropped.inventory(), w.inventory());
        assert!(!step(&dropped, Action::Drop).effective);

        let mut b = room();
        b.place(Coord::new(4, 6), WorldObject::new(ObjKind::Box, Color::Grey)).unwrap();
        let gone = step(&b, Action::Toggle).state;
        assert!(gone.objects().next().is_none());
    }

    #[test]
    fn front_cell_and_sentinel() {
        let mut w = WorldState::with_rooms(3, 8).unwrap();
        w.set_agent(Coord::new(4, 12), Direction::North).unwrap();
        assert_eq!(w.front_cell(), Some(Coord::new(4, 11)));
        w.agent.direction = Direction::East;
        assert_eq!(w.front_cell(), Some(Coord::new(5, 12)));
        // (0, 0) is a wall cell so the agent cannot legally stand there; poke it directly.
        w.agent.position = Coord::new(0, 0);
        w.agent.direction = Direction::West;
        assert_eq!(w.front_cell(), None);
    }

    #[test]
    fn adjacency() {
        assert!(is_adjacent(Coord::new(19, 18), Coord::new(20, 18)));
        assert!(!is_adjacent(Coord::new(3, 3), Coord::new(3, 3)));
        assert!(!is_adjacent(Coord::new(0, 0), Coord::new(1, 1)));
    }

    #[test]
    fn doors_only_on_interior_walls() {
        let mut w = WorldState::with_rooms(3, 8).unwrap();
        assert!(w.add_door(Coord::new(0, 3), Color::Red, DoorState::Closed).is_err());
        assert!(w.add_door(Coord::new(7, 7), Color::Red, DoorState::Closed).is_err());
        assert!(w.add_door(Coord::new(3, 3), Color::Red, DoorState::Closed).is_err());
        assert!(w.add_door(Coord::new(7, 3), Color::Red, DoorState::Closed).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let mut w = room();
        w.add_door(Coord::new(7, 6), Color::Green, DoorState::Locked).unwrap();
        w.place(Coord::new(2, 2), WorldObject::new(ObjKind::Key, Color::Green)).unwrap();
        w.agent.carrying = Some(WorldObject::new(ObjKind::Ball, Color::Purple));
        let text = serde_json::to_string(&w).unwrap();
        assert!(text.contains("\"position\":[7,6]"));
        assert!(text.contains("\"direction\":0"));
        let back: WorldState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
    }
}
