//! Seeded procedural generation of the benchmark levels and of the
//! single-room navigation environments used for the Plan task.
//!
//! Recipes follow the original platform's level definitions; the parameters
//! are listed in `docs/level-catalog.md`.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bot::{solve, Init, SolveOptions};
use crate::grid::{Cell, Color, Coord, Direction, DoorState, ObjKind, WorldObject, WorldState};
use crate::mission::{Connector, Instr, Location, Mission, MissionTracker, ObjectDesc};
use crate::rng::{self, Rng};

pub const ROOM_SIZE: i32 = 8;
/// Attempts (each with a freshly derived stream) before giving up on a seed.
pub const MAX_ATTEMPTS: u32 = 64;
/// Rejection-sampling rounds within one attempt.
const MAX_REJECTIONS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LevelError {
    #[error("unknown level `{0}`")]
    Unknown(String),
    #[error("{level} seed {seed}: no solvable instance after {attempts} attempts")]
    Exhausted { level: String, seed: u64, attempts: u32 },
    #[error("{requested} distractors exceed the cap of {cap} for size {size}")]
    TooManyDistractors { size: PlanSize, requested: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    VeryHard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard, Difficulty::VeryHard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "Easy",
            Difficulty::Medium => "Medium",
            Difficulty::Hard => "Hard",
            Difficulty::VeryHard => "Very Hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skill {
    NavigateRoom,
    IgnoreGreyDistractors,
    IgnoreAllDistractors,
    NavigateMaze,
    Unblock,
    UnlockExplicit,
    UnlockImplicit,
    GoToInstr,
    OpenInstr,
    PickupInstr,
    PutInstr,
    RelativeLocation,
    Sequences,
}

impl Skill {
    pub const ALL: [Skill; 13] = [
        Skill::NavigateRoom,
        Skill::IgnoreGreyDistractors,
        Skill::IgnoreAllDistractors,
        Skill::NavigateMaze,
        Skill::Unblock,
        Skill::UnlockExplicit,
        Skill::UnlockImplicit,
        Skill::GoToInstr,
        Skill::OpenInstr,
        Skill::PickupInstr,
        Skill::PutInstr,
        Skill::RelativeLocation,
        Skill::Sequences,
    ];

    pub fn description(self) -> &'static str {
        match self {
            Skill::NavigateRoom => "Navigate a 6x6 room",
            Skill::IgnoreGreyDistractors => "Ignore grey box distractors",
            Skill::IgnoreAllDistractors => "Ignore all distractors",
            Skill::NavigateMaze => "Navigate a 3x3 maze of 6x6 rooms",
            Skill::Unblock => "Move objects out of the way to navigate",
            Skill::UnlockExplicit => "Unlock doors when explicitly instructed",
            Skill::UnlockImplicit => "Unlock doors when not explicitly stated",
            Skill::GoToInstr => "Understand \"go to\" instructions",
            Skill::OpenInstr => "Understand \"open\" instructions",
            Skill::PickupInstr => "Understand \"pick up\" instructions",
            Skill::PutInstr => "Understand \"put\" instructions",
            Skill::RelativeLocation => "Understand relative location",
            Skill::Sequences => "Understand sequences of instructions",
        }
    }
}

macro_rules! levels {
    ($($v:ident),+ $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum LevelId { $($v),+ }
        impl LevelId {
            pub const ALL: [LevelId; 16] = [$(LevelId::$v),+];
            pub fn short_name(self) -> &'static str {
                match self { $(LevelId::$v => stringify!($v)),+ }
            }
        }
    };
}

levels!(
    GoToObj,
    GoToRedBallGrey,
    GoToRedBall,
    GoToLocal,
    PutNextLocal,
    PickupLoc,
    GoToObjMaze,
    GoTo,
    Pickup,
    UnblockPickup,
    Open,
    Synth,
    SynthLoc,
    GoToSeq,
    SynthSeq,
    BossLevel,
);

impl LevelId {
    /// Environment name used in dataset rows, e.g. `BabyAI-GoToObj-v0`.
    pub fn env_name(self) -> String {
        format!("BabyAI-{}-v0", self.short_name())
    }

    pub fn difficulty(self) -> Difficulty {
        use LevelId::*;
        match self {
            GoToObj | GoToRedBallGrey => Difficulty::Easy,
            GoToRedBall | GoToLocal | PutNextLocal | PickupLoc | GoToObjMaze | GoTo | Pickup => Difficulty::Medium,
            UnblockPickup | Open | Synth => Difficulty::Hard,
            SynthLoc | GoToSeq | SynthSeq | BossLevel => Difficulty::VeryHard,
        }
    }

    pub fn skills(self) -> Vec<Skill> {
        use LevelId::*;
        use Skill::*;
        let mut s = vec![NavigateRoom];
        if !matches!(self, GoToObj | GoToObjMaze) {
            s.push(IgnoreGreyDistractors);
        }
        if !matches!(self, GoToObj | GoToRedBallGrey | GoToObjMaze) {
            s.push(IgnoreAllDistractors);
        }
        if !matches!(self, GoToObj | GoToRedBallGrey | GoToRedBall | GoToLocal | PutNextLocal | PickupLoc) {
            s.push(NavigateMaze);
        }
        if matches!(self, UnblockPickup | Synth | SynthLoc | SynthSeq | BossLevel) {
            s.push(Unblock);
        }
        if matches!(self, Synth | SynthLoc | SynthSeq | BossLevel) {
            s.push(UnlockExplicit);
        }
        if self == BossLevel {
            s.push(UnlockImplicit);
        }
        if matches!(self, GoToLocal | GoTo | Synth | SynthLoc | GoToSeq | SynthSeq | BossLevel) {
            s.push(GoToInstr);
        }
        if matches!(self, Open | Synth | SynthLoc | SynthSeq | BossLevel) {
            s.push(OpenInstr);
        }
        if matches!(self, PickupLoc | Pickup | UnblockPickup | Synth | SynthLoc | SynthSeq | BossLevel) {
            s.push(PickupInstr);
        }
        if matches!(self, PutNextLocal | Synth | SynthLoc | SynthSeq | BossLevel) {
            s.push(PutInstr);
        }
        if matches!(self, PickupLoc | SynthLoc | SynthSeq | BossLevel) {
            s.push(RelativeLocation);
        }
        if matches!(self, GoToSeq | SynthSeq | BossLevel) {
            s.push(Sequences);
        }
        s
    }

    pub fn rooms_per_side(self) -> i32 {
        use LevelId::*;
        match self {
            GoToObj | GoToRedBallGrey | GoToRedBall | GoToLocal | PutNextLocal | PickupLoc => 1,
            _ => 3,
        }
    }
}

impl fmt::Display for LevelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for LevelId {
    type Err = LevelError;

    /// Accepts `GoTo` as well as `BabyAI-GoTo-v0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let short = s
            .strip_prefix("BabyAI-")
            .and_then(|r| r.strip_suffix("-v0"))
            .unwrap_or(s);
        LevelId::ALL
            .into_iter()
            .find(|l| l.short_name() == short)
            .ok_or_else(|| LevelError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlanSize {
    Small,
    Medium,
    Large,
    Ultra,
}

impl PlanSize {
    pub const ALL: [PlanSize; 4] = [PlanSize::Small, PlanSize::Medium, PlanSize::Large, PlanSize::Ultra];

    pub fn room_size(self) -> i32 {
        match self {
            PlanSize::Small => 8,
            PlanSize::Medium => 16,
            PlanSize::Large => 24,
            PlanSize::Ultra => 32,
        }
    }

    pub fn max_distractors(self) -> usize {
        match self {
            PlanSize::Small => 7,
            PlanSize::Medium => 60,
            PlanSize::Large => 120,
            PlanSize::Ultra => 180,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlanSize::Small => "Small",
            PlanSize::Medium => "Medium",
            PlanSize::Large => "Large",
            PlanSize::Ultra => "Ultra",
        }
    }
}

impl fmt::Display for PlanSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlanSize {
    type Err = LevelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlanSize::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| LevelError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlanEnvSpec {
    pub size: PlanSize,
    pub n_distractors: usize,
}

impl PlanEnvSpec {
    pub fn new(size: PlanSize, n_distractors: usize) -> Result<Self, LevelError> {
        if n_distractors > size.max_distractors() {
            return Err(LevelError::TooManyDistractors {
                size,
                requested: n_distractors,
                cap: size.max_distractors(),
            });
        }
        Ok(PlanEnvSpec { size, n_distractors })
    }

    pub fn env_name(&self) -> String {
        format!("CustomBabyAI-GoToRedBall-{}-{}Dists-v0", self.size, self.n_distractors)
    }

    pub fn parse_name(s: &str) -> Option<PlanEnvSpec> {
        let rest = s.strip_prefix("CustomBabyAI-GoToRedBall-")?.strip_suffix("Dists-v0")?;
        let (size, n) = rest.split_once('-')?;
        PlanEnvSpec::new(size.parse().ok()?, n.parse().ok()?).ok()
    }
}

/// Either a benchmark level or a Plan environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelRef {
    Bench(LevelId),
    Plan(PlanEnvSpec),
}

impl LevelRef {
    pub fn env_name(&self) -> String {
        match self {
            LevelRef::Bench(l) => l.env_name(),
            LevelRef::Plan(p) => p.env_name(),
        }
    }

    pub fn parse(s: &str) -> Result<LevelRef, LevelError> {
        if let Some(p) = PlanEnvSpec::parse_name(s) {
            return Ok(LevelRef::Plan(p));
        }
        s.parse().map(LevelRef::Bench)
    }

    pub fn bench(&self) -> Option<LevelId> {
        match self {
            LevelRef::Bench(l) => Some(*l),
            LevelRef::Plan(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvInstance {
    pub level: LevelRef,
    pub seed: u64,
    /// Which derived stream produced the instance (0 unless earlier ones were rejected).
    pub attempt: u32,
    pub state: WorldState,
    pub mission: Mission,
}

impl EnvInstance {
    pub fn level_name(&self) -> String {
        self.level.env_name()
    }
}

/// True iff the expert, with its default stack and unlimited insertions,
/// completes the mission within the step budget.
pub fn solvability_check(instance: &EnvInstance) -> bool {
    solve(&instance.state, &instance.mission, Init::Default, &SolveOptions::default()).success
}

pub fn generate(level: LevelId, seed: u64) -> Result<EnvInstance, LevelError> {
    generate_ref(LevelRef::Bench(level), seed)
}

pub fn generate_plan_env(spec: PlanEnvSpec, seed: u64) -> Result<EnvInstance, LevelError> {
    PlanEnvSpec::new(spec.size, spec.n_distractors)?;
    generate_ref(LevelRef::Plan(spec), seed)
}

pub fn generate_ref(level: LevelRef, seed: u64) -> Result<EnvInstance, LevelError> {
    let name = level.env_name();
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng::stream(&format!("level/{name}"), &[seed, attempt as u64]);
        let built = (0..MAX_REJECTIONS).find_map(|_| {
            let r = match level {
                LevelRef::Bench(l) => build_level(l, &mut rng),
                LevelRef::Plan(p) => build_plan_env(p, &mut rng),
            };
            r.ok().filter(|(s, m)| !satisfied_at_start(s, m))
        });
        let Some((state, mission)) = built else {
            continue;
        };
        let inst = EnvInstance {
            level,
            seed,
            attempt,
            state,
            mission,
        };
        if solvability_check(&inst) {
            return Ok(inst);
        }
    }
    Err(LevelError::Exhausted {
        level: name,
        seed,
        attempts: MAX_ATTEMPTS,
    })
}

fn satisfied_at_start(state: &WorldState, mission: &Mission) -> bool {
    mission.check_well_posed(state).is_err() || MissionTracker::new(mission).observe(state)
}

/// Rejection signal for one sampling round.
struct Reject;

type Built = Result<(WorldState, Mission), Reject>;

#[derive(Clone, Copy, PartialEq, Eq)]
enum ActionKind {
    GoTo,
    Pickup,
    Open,
    PutNext,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum InstrKind {
    Action,
    And,
    Seq,
}

const ALL_ACTIONS: [ActionKind; 4] = [ActionKind::GoTo, ActionKind::Pickup, ActionKind::Open, ActionKind::PutNext];
const ALL_INSTRS: [InstrKind; 3] = [InstrKind::Action, InstrKind::And, InstrKind::Seq];

/// Parameters of the generic random-instruction recipe.
struct GenParams {
    num_dists: usize,
    locked_room_prob: f64,
    locations: bool,
    unblocking: bool,
    implicit_unlock: bool,
    actions: &'static [ActionKind],
    instrs: &'static [InstrKind],
}

impl GenParams {
    fn maze() -> Self {
        GenParams {
            num_dists: 18,
            locked_room_prob: 0.5,
            locations: true,
            unblocking: true,
            implicit_unlock: true,
            actions: &ALL_ACTIONS,
            instrs: &ALL_INSTRS,
        }
    }
}

struct Gen<'r> {
    rng: &'r mut Rng,
    w: WorldState,
    locked_room: Option<(i32, i32)>,
    agent_placed: bool,
    locations: bool,
    implicit_unlock: bool,
}

impl<'r> Gen<'r> {
    fn new(rng: &'r mut Rng, rooms: i32, room_size: i32) -> Self {
        Gen {
            rng,
            w: WorldState::with_rooms(rooms, room_size).expect("valid layout"),
            locked_room: None,
            agent_placed: false,
            locations: false,
            implicit_unlock: true,
        }
    }

    fn rooms(&self) -> i32 {
        self.w.rooms_per_side()
    }

    fn rand_room(&mut self) -> (i32, i32) {
        let n = self.rooms();
        (self.rng.random_range(0..n), self.rng.random_range(0..n))
    }

    fn rand_color(&mut self) -> Color {
        *Color::ALL.choose(self.rng).unwrap()
    }

    fn neighbor(&self, room: (i32, i32), k: usize) -> Option<(i32, i32)> {
        let (dx, dy) = Direction::ALL[k].delta();
        let n = (room.0 + dx, room.1 + dy);
        (n.0 >= 0 && n.1 >= 0 && n.0 < self.rooms() && n.1 < self.rooms()).then_some(n)
    }

    /// Door-capable cells of the wall on side `k` of `room`.
    fn wall_cells(&self, room: (i32, i32), k: usize) -> Vec<Coord> {
        let o = self.w.room_origin(room);
        let s = self.w.room_size();
        (1..s - 1)
            .map(|t| match Direction::ALL[k] {
                Direction::East => Coord::new(o.x + s - 1, o.y + t),
                Direction::South => Coord::new(o.x + t, o.y + s - 1),
                Direction::West => Coord::new(o.x, o.y + t),
                Direction::North => Coord::new(o.x + t, o.y),
            })
            .collect()
    }

    fn door_on(&self, room: (i32, i32), k: usize) -> Option<Coord> {
        self.wall_cells(room, k)
            .into_iter()
            .find(|c| matches!(self.w.cell(*c), Cell::Object(o) if o.kind == ObjKind::Door))
    }

    fn add_door(&mut self, room: (i32, i32), k: usize, color: Color, state: DoorState) -> Coord {
        let cells = self.wall_cells(room, k);
        let c = *cells.choose(self.rng).unwrap();
        self.w.add_door(c, color, state).expect("door slot on a shared wall");
        c
    }

    fn in_locked_room(&self, c: Coord) -> bool {
        self.locked_room.is_some_and(|r| {
            let o = self.w.room_origin(r);
            let s = self.w.room_size();
            c.x >= o.x && c.x < o.x + s && c.y >= o.y && c.y < o.y + s
        })
    }

    fn add_locked_room(&mut self) {
        let door = loop {
            let room = self.rand_room();
            let k = self.rng.random_range(0..4usize);
            if self.neighbor(room, k).is_none() {
                continue;
            }
            self.locked_room = Some(room);
            let color = self.rand_color();
            self.add_door(room, k, color, DoorState::Locked);
            break color;
        };
        loop {
            let room = self.rand_room();
            if Some(room) == self.locked_room {
                continue;
            }
            if self.add_object(room, ObjKind::Key, door).is_ok() {
                break;
            }
        }
    }

    /// Add closed doors between random neighboring rooms until every room
    /// is reachable from room (0, 0). The locked room keeps its single door.
    fn connect_all(&mut self) -> Result<(), Reject> {
        for _ in 0..5000 {
            if self.reachable_rooms() == (self.rooms() * self.rooms()) as usize {
                return Ok(());
            }
            let room = self.rand_room();
            let k = self.rng.random_range(0..4usize);
            let Some(nb) = self.neighbor(room, k) else {
                continue;
            };
            if self.door_on(room, k).is_some() || self.locked_room == Some(room) || self.locked_room == Some(nb) {
                continue;
            }
            let color = self.rand_color();
            self.add_door(room, k, color, DoorState::Closed);
        }
        Err(Reject)
    }

    fn reachable_rooms(&self) -> usize {
        let mut seen = vec![(0, 0)];
        let mut i = 0;
        while i < seen.len() {
            let r = seen[i];
            for k in 0..4 {
                if let Some(nb) = self.neighbor(r, k) {
                    if self.door_on(r, k).is_some() && !seen.contains(&nb) {
                        seen.push(nb);
                    }
                }
            }
            i += 1;
        }
        seen.len()
    }

    fn add_object(&mut self, room: (i32, i32), kind: ObjKind, color: Color) -> Result<Coord, Reject> {
        let agent = self.agent_placed.then_some(self.w.agent.position);
        let free: Vec<Coord> = self
            .w
            .room_interior(room)
            .filter(|&c| self.w.cell(c) == Cell::Floor && agent.is_none_or(|a| a.manhattan(c) >= 2))
            .collect();
        let c = *free.choose(self.rng).ok_or(Reject)?;
        self.w.place(c, WorldObject::new(kind, color)).map_err(|_| Reject)?;
        Ok(c)
    }

    /// Random portable objects in random rooms (or the given one).
    fn add_distractors(
        &mut self,
        room: Option<(i32, i32)>,
        n: usize,
        all_unique: bool,
        accept: impl Fn(ObjKind, Color) -> bool,
    ) -> Result<Vec<(ObjKind, Color)>, Reject> {
        let mut existing: Vec<(ObjKind, Color)> = self.w.objects().map(|(_, o)| (o.kind, o.color)).collect();
        let mut added = Vec::new();
        let mut tries = 0;
        while added.len() < n {
            tries += 1;
            if tries > 10_000 {
                return Err(Reject);
            }
            let color = self.rand_color();
            let kind = *ObjKind::PORTABLE.choose(self.rng).unwrap();
            if (all_unique && existing.contains(&(kind, color))) || !accept(kind, color) {
                continue;
            }
            let r = match room {
                Some(r) => r,
                None => self.rand_room(),
            };
            self.add_object(r, kind, color)?;
            existing.push((kind, color));
            added.push((kind, color));
        }
        Ok(added)
    }

    /// Agent in a random room (never the locked one), facing a free cell or a wall.
    fn place_agent(&mut self, room: Option<(i32, i32)>) -> Result<(), Reject> {
        for _ in 0..1000 {
            let r = match room {
                Some(r) => r,
                None => self.rand_room(),
            };
            if Some(r) == self.locked_room {
                continue;
            }
            let free: Vec<Coord> = self.w.room_interior(r).filter(|&c| self.w.cell(c) == Cell::Floor).collect();
            let Some(&pos) = free.choose(self.rng) else {
                continue;
            };
            let dir = *Direction::ALL.choose(self.rng).unwrap();
            let front = pos.offset(dir.delta());
            if matches!(self.w.cell(front), Cell::Floor | Cell::Wall) {
                self.w.set_agent(pos, dir).map_err(|_| Reject)?;
                self.agent_placed = true;
                return Ok(());
            }
        }
        Err(Reject)
    }

    /// Every object can be reached without moving anything (doors count as passable).
    fn objs_reachable(&self) -> bool {
        let start = self.w.agent.position;
        let mut seen = std::collections::HashSet::from([start]);
        let mut stack = vec![start];
        while let Some(c) = stack.pop() {
            let passes = c == start
                || match self.w.cell(c) {
                    Cell::Floor => true,
                    Cell::Object(o) => o.kind == ObjKind::Door,
                    Cell::Wall => false,
                };
            if !passes {
                continue;
            }
            for n in c.neighbors() {
                if self.w.in_bounds(n) && self.w.cell(n) != Cell::Wall && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        self.w.objects().all(|(p, _)| seen.contains(&p))
    }

    fn rand_obj(&mut self, kinds: &[ObjKind]) -> Result<ObjectDesc, Reject> {
        let origin = self.w.agent.pose();
        for _ in 0..100 {
            let color = if self.rng.random_range(0..=Color::ALL.len()) == 0 {
                None
            } else {
                Some(self.rand_color())
            };
            let kind = *kinds.choose(self.rng).unwrap();
            let mut desc = ObjectDesc::new(kind, color);
            if self.locations && self.rng.random_bool(0.5) {
                desc.location = Some(*Location::ALL.choose(self.rng).unwrap());
            }
            let matches = desc.find_matches(&self.w, origin);
            if matches.is_empty() {
                continue;
            }
            if !self.implicit_unlock && self.locked_room.is_some() && matches.iter().all(|&p| self.in_locked_room(p)) {
                continue;
            }
            return Ok(desc);
        }
        Err(Reject)
    }

    fn rand_action(&mut self, actions: &[ActionKind]) -> Result<Instr, Reject> {
        const NOT_DOOR: [ObjKind; 3] = ObjKind::PORTABLE;
        const ANY: [ObjKind; 4] = [ObjKind::Key, ObjKind::Ball, ObjKind::Box, ObjKind::Door];
        Ok(match *actions.choose(self.rng).unwrap() {
            ActionKind::GoTo => Instr::GoTo { target: self.rand_obj(&ANY)? },
            ActionKind::Pickup => Instr::Pickup { target: self.rand_obj(&NOT_DOOR)? },
            ActionKind::Open => Instr::Open { target: self.rand_obj(&[ObjKind::Door])? },
            ActionKind::PutNext => Instr::PutNext {
                moved: self.rand_obj(&NOT_DOOR)?,
                fixed: self.rand_obj(&ANY)?,
            },
        })
    }

    /// Random instruction as flat clauses and connectors.
    fn rand_instr(&mut self, actions: &[ActionKind], kinds: &[InstrKind]) -> Result<(Vec<Instr>, Vec<Connector>), Reject> {
        match *kinds.choose(self.rng).unwrap() {
            InstrKind::Action => Ok((vec![self.rand_action(actions)?], vec![])),
            InstrKind::And => {
                let a = self.rand_action(actions)?;
                let b = self.rand_action(actions)?;
                Ok((vec![a, b], vec![Connector::And]))
            }
            InstrKind::Seq => {
                let (mut ca, mut ka) = self.rand_instr(actions, &[InstrKind::Action, InstrKind::And])?;
                let (cb, kb) = self.rand_instr(actions, &[InstrKind::Action, InstrKind::And])?;
                let conn = if self.rng.random_bool(0.5) {
                    Connector::Then
                } else {
                    Connector::AfterYou
                };
                ca.extend(cb);
                ka.push(conn);
                ka.extend(kb);
                Ok((ca, ka))
            }
        }
    }

    /// Reject put-next clauses whose two sides overlap or already touch.
    fn validate(&self, mission: &Mission) -> Result<(), Reject> {
        let origin = self.w.agent.pose();
        for clause in &mission.clauses {
            if let Instr::PutNext { moved, fixed } = clause {
                let m = moved.find_matches(&self.w, origin);
                let f = fixed.find_matches(&self.w, origin);
                if m.iter().any(|p| f.contains(p)) {
                    return Err(Reject);
                }
                if m.iter().any(|a| f.iter().any(|b| a.manhattan(*b) == 1)) {
                    return Err(Reject);
                }
            }
        }
        Ok(())
    }

    /// Use "the" for descriptions matching a single object, "a" otherwise.
    fn finish(self, mut mission: Mission) -> Built {
        self.validate(&mission)?;
        let origin = self.w.agent.pose();
        let w = &self.w;
        let fix = |d: &mut ObjectDesc| d.definite = d.find_matches(w, origin).len() == 1;
        for c in &mut mission.clauses {
            match c {
                Instr::GoTo { target } | Instr::Open { target } | Instr::Pickup { target } => fix(target),
                Instr::PutNext { moved, fixed } => {
                    fix(moved);
                    fix(fixed);
                }
            }
        }
        Ok((self.w, mission))
    }

    fn level_gen(mut self, p: GenParams) -> Built {
        self.locations = p.locations;
        self.implicit_unlock = p.implicit_unlock;
        if p.locked_room_prob > 0.0 && self.rng.random_bool(p.locked_room_prob) {
            self.add_locked_room();
        }
        self.connect_all()?;
        self.add_distractors(None, p.num_dists, false, |_, _| true)?;
        self.place_agent(None)?;
        if !p.unblocking && !self.objs_reachable() {
            return Err(Reject);
        }
        let (clauses, connectors) = self.rand_instr(p.actions, p.instrs)?;
        let mission = Mission::new(clauses, connectors).map_err(|_| Reject)?;
        self.finish(mission)
    }
}

fn pick_target(g: &mut Gen, objs: &[(ObjKind, Color)]) -> ObjectDesc {
    let &(k, c) = objs.choose(g.rng).unwrap();
    ObjectDesc::new(k, Some(c))
}

fn build_level(level: LevelId, rng: &mut Rng) -> Built {
    use LevelId::*;
    let mut g = Gen::new(rng, level.rooms_per_side(), ROOM_SIZE);
    let room = Some((0, 0));
    match level {
        GoToObj => {
            let objs = g.add_distractors(room, 1, false, |_, _| true)?;
            g.place_agent(room)?;
            let target = pick_target(&mut g, &objs);
            g.finish(Mission::single(Instr::GoTo { target }))
        }
        GoToRedBallGrey | GoToRedBall => {
            g.add_object((0, 0), ObjKind::Ball, Color::Red)?;
            if level == GoToRedBallGrey {
                for _ in 0..7 {
                    let kind = *ObjKind::PORTABLE.choose(g.rng).unwrap();
                    g.add_object((0, 0), kind, Color::Grey)?;
                }
            } else {
                g.add_distractors(room, 7, false, |k, c| !(k == ObjKind::Ball && c == Color::Red))?;
            }
            g.place_agent(room)?;
            if level == GoToRedBall && !g.objs_reachable() {
                return Err(Reject);
            }
            let target = ObjectDesc::new(ObjKind::Ball, Some(Color::Red));
            g.finish(Mission::single(Instr::GoTo { target }))
        }
        GoToLocal => {
            let objs = g.add_distractors(room, 8, false, |_, _| true)?;
            g.place_agent(room)?;
            if !g.objs_reachable() {
                return Err(Reject);
            }
            let target = pick_target(&mut g, &objs);
            g.finish(Mission::single(Instr::GoTo { target }))
        }
        PutNextLocal => {
            let objs = g.add_distractors(room, 8, true, |_, _| true)?;
            g.place_agent(room)?;
            let pair: Vec<_> = objs.choose_multiple(g.rng, 2).copied().collect();
            let moved = ObjectDesc::new(pair[0].0, Some(pair[0].1));
            let fixed = ObjectDesc::new(pair[1].0, Some(pair[1].1));
            g.finish(Mission::single(Instr::PutNext { moved, fixed }))
        }
        PickupLoc => g.level_gen(GenParams {
            num_dists: 8,
            locked_room_prob: 0.0,
            locations: true,
            unblocking: false,
            implicit_unlock: true,
            actions: &[ActionKind::Pickup],
            instrs: &[InstrKind::Action],
        }),
        GoToObjMaze | GoTo | Pickup | UnblockPickup | Open => {
            g.place_agent(None)?;
            g.connect_all()?;
            let n = if level == GoToObjMaze { 1 } else { 18 };
            let objs = g.add_distractors(None, n, false, |_, _| true)?;
            let reachable = g.objs_reachable();
            if reachable == (level == UnblockPickup) {
                return Err(Reject);
            }
            let instr = match level {
                Pickup | UnblockPickup => Instr::Pickup {
                    target: pick_target(&mut g, &objs),
                },
                Open => {
                    let doors: Vec<Color> = g
                        .w
                        .objects()
                        .filter(|(_, o)| o.kind == ObjKind::Door)
                        .map(|(_, o)| o.color)
                        .collect();
                    let c = *doors.choose(g.rng).ok_or(Reject)?;
                    Instr::Open {
                        target: ObjectDesc::new(ObjKind::Door, Some(c)),
                    }
                }
                _ => Instr::GoTo {
                    target: pick_target(&mut g, &objs),
                },
            };
            g.finish(Mission::single(instr))
        }
        Synth => g.level_gen(GenParams {
            locations: false,
            implicit_unlock: false,
            instrs: &[InstrKind::Action],
            ..GenParams::maze()
        }),
        SynthLoc => g.level_gen(GenParams {
            implicit_unlock: false,
            instrs: &[InstrKind::Action],
            ..GenParams::maze()
        }),
        SynthSeq => g.level_gen(GenParams {
            implicit_unlock: false,
            ..GenParams::maze()
        }),
        GoToSeq => g.level_gen(GenParams {
            locked_room_prob: 0.0,
            locations: false,
            unblocking: false,
            actions: &[ActionKind::GoTo],
            ..GenParams::maze()
        }),
        BossLevel => g.level_gen(GenParams::maze()),
    }
}

/// One room, a red ball, and grey distractors that never cut the agent off
/// from the ball.
fn build_plan_env(spec: PlanEnvSpec, rng: &mut Rng) -> Built {
    let mut g = Gen::new(rng, 1, spec.size.room_size());
    let ball = g.add_object((0, 0), ObjKind::Ball, Color::Red)?;
    let cells: Vec<Coord> = g.w.room_interior((0, 0)).collect();
    let spots: Vec<Coord> = cells
        .iter()
        .copied()
        .filter(|c| g.w.cell(*c) == Cell::Floor && c.manhattan(ball) >= 2)
        .collect();
    let pos = *spots.choose(g.rng).ok_or(Reject)?;
    let dir = *Direction::ALL.choose(g.rng).unwrap();
    g.w.set_agent(pos, dir).map_err(|_| Reject)?;
    for _ in 0..spec.n_distractors {
        let mut placed = false;
        for _ in 0..1000 {
            let free: Vec<Coord> = cells
                .iter()
                .copied()
                .filter(|&c| g.w.cell(c) == Cell::Floor && c != pos)
                .collect();
            let c = *free.choose(g.rng).ok_or(Reject)?;
            let kind = *ObjKind::PORTABLE.choose(g.rng).unwrap();
            g.w.place(c, WorldObject::new(kind, Color::Grey)).map_err(|_| Reject)?;
            if ball_approachable(&g.w, ball) {
                placed = true;
                break;
            }
            g.w.set_cell(c, Cell::Floor);
        }
        if !placed {
            return Err(Reject);
        }
    }
    let target = ObjectDesc::new(ObjKind::Ball, Some(Color::Red));
    Ok((g.w, Mission::single(Instr::GoTo { target })))
}

/// Some cell next to `ball` is reachable from the agent over free floor.
fn ball_approachable(w: &WorldState, ball: Coord) -> bool {
    let start = w.agent.position;
    let mut seen = std::collections::HashSet::from([start]);
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        if c.manhattan(ball) == 1 {
            return true;
        }
        for n in c.neighbors() {
            if w.cell(n) == Cell::Floor && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for l in LevelId::ALL {
            assert_eq!(l.env_name().parse::<LevelId>().unwrap(), l);
            assert_eq!(l.short_name().parse::<LevelId>().unwrap(), l);
        }
        assert!("BabyAI-Unlock-v0".parse::<LevelId>().is_err());
        let spec = PlanEnvSpec::new(PlanSize::Ultra, 180).unwrap();
        assert_eq!(spec.env_name(), "CustomBabyAI-GoToRedBall-Ultra-180Dists-v0");
        assert_eq!(LevelRef::parse(&spec.env_name()).unwrap(), LevelRef::Plan(spec));
        assert!(PlanEnvSpec::new(PlanSize::Small, 8).is_err());
    }

    #[test]
    fn difficulty_groups() {
        let count = |d| LevelId::ALL.iter().filter(|l| l.difficulty() == d).count();
        assert_eq!(count(Difficulty::Easy), 2);
        assert_eq!(count(Difficulty::Medium), 7);
        assert_eq!(count(Difficulty::Hard), 3);
        assert_eq!(count(Difficulty::VeryHard), 4);
        assert!(LevelId::BossLevel.skills().contains(&Skill::UnlockImplicit));
        assert_eq!(LevelId::BossLevel.skills().len(), 13);
        assert_eq!(LevelId::GoToObj.skills(), vec![Skill::NavigateRoom]);
    }

    #[test]
    fn generation_is_deterministic() {
        for l in [LevelId::GoToObj, LevelId::BossLevel, LevelId::UnblockPickup] {
            let a = generate(l, 7).unwrap();
            let b = generate(l, 7).unwrap();
            assert_eq!(a, b);
            assert!(a.state.validate().is_ok());
        }
    }

    #[test]
    fn boss_level_layout() {
        let inst = generate(LevelId::BossLevel, 3).unwrap();
        assert_eq!(inst.state.width(), 22);
        assert_eq!(inst.level_name(), "BabyAI-BossLevel-v0");
    }

    #[test]
    fn plan_env_counts() {
        let spec = PlanEnvSpec::new(PlanSize::Small, 7).unwrap();
        let inst = generate_plan_env(spec, 1).unwrap();
        assert_eq!(inst.state.width(), 8);
        assert_eq!(inst.state.objects().count(), 8);
        let empty = generate_plan_env(PlanEnvSpec::new(PlanSize::Small, 0).unwrap(), 1).unwrap();
        assert_eq!(empty.state.objects().count(), 1);
    }
}
