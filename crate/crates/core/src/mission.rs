//! Instruction language: mission structure, surface rendering and parsing,
//! and the trace-based success checker.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Color, Coord, ObjKind, Pose, WorldObject, WorldState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MissionError {
    #[error("descriptor `{0}` matches no object")]
    IllPosed(String),
    #[error("mission has {0} sequencing connectors, at most one is allowed")]
    TooManySequences(usize),
    #[error("mission has {clauses} clauses but {connectors} connectors")]
    ConnectorCount { clauses: usize, connectors: usize },
    #[error("cannot parse mission `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

/// Location qualifier, evaluated against the agent's pose at the start of the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    InFrontOfYou,
    BehindYou,
    OnYourLeft,
    OnYourRight,
}

impl Location {
    pub const ALL: [Location; 4] = [
        Location::InFrontOfYou,
        Location::BehindYou,
        Location::OnYourLeft,
        Location::OnYourRight,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            Location::InFrontOfYou => "in front of you",
            Location::BehindYou => "behind you",
            Location::OnYourLeft => "on your left",
            Location::OnYourRight => "on your right",
        }
    }

    /// Half-plane test for `pos` relative to `origin`.
    pub fn contains(self, origin: Pose, pos: Coord) -> bool {
        let v = (pos.x - origin.position.x, pos.y - origin.position.y);
        let fwd = origin.direction.delta();
        // (fwd, side) is an oriented basis; with y pointing down `side` is the agent's right.
        let side = (-fwd.1, fwd.0);
        let dot = |a: (i32, i32)| v.0 * a.0 + v.1 * a.1;
        match self {
            Location::InFrontOfYou => dot(fwd) > 0,
            Location::BehindYou => dot(fwd) < 0,
            Location::OnYourLeft => dot(side) < 0,
            Location::OnYourRight => dot(side) > 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectDesc {
    pub kind: ObjKind,
    pub color: Option<Color>,
    pub location: Option<Location>,
    /// Rendered with "the" when set, "a" otherwise. Does not affect matching.
    #[serde(default)]
    pub definite: bool,
}

impl ObjectDesc {
    pub fn new(kind: ObjKind, color: Option<Color>) -> Self {
        ObjectDesc {
            kind,
            color,
            location: None,
            definite: true,
        }
    }

    pub fn with_location(mut self, location: Location) -> Self {
        self.location = Some(location);
        self
    }

    pub fn indefinite(mut self) -> Self {
        self.definite = false;
        self
    }

    /// Kind and color match, ignoring location.
    pub fn matches_object(&self, obj: &WorldObject) -> bool {
        obj.kind == self.kind && self.color.is_none_or(|c| c == obj.color)
    }

    pub fn matches(&self, obj: &WorldObject, pos: Coord, origin: Pose) -> bool {
        self.matches_object(obj) && self.location.is_none_or(|l| l.contains(origin, pos))
    }

    /// Positions of matching objects on the grid, in reading order.
    pub fn find_matches(&self, state: &WorldState, origin: Pose) -> Vec<Coord> {
        state
            .objects()
            .filter(|(p, o)| self.matches(o, *p, origin))
            .map(|(p, _)| p)
            .collect()
    }

    /// Noun phrase without the article, e.g. `grey ball in front of you`.
    pub fn phrase(&self) -> String {
        let mut s = String::new();
        if let Some(c) = self.color {
            s.push_str(c.name());
            s.push(' ');
        }
        s.push_str(self.kind.name());
        if let Some(l) = self.location {
            s.push(' ');
            s.push_str(l.phrase());
        }
        s
    }
}

impl fmt::Display for ObjectDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let article = if self.definite { "the" } else { "a" };
        write!(f, "{article} {}", self.phrase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum Instr {
    GoTo { target: ObjectDesc },
    Open { target: ObjectDesc },
    Pickup { target: ObjectDesc },
    PutNext { moved: ObjectDesc, fixed: ObjectDesc },
}

impl Instr {
    pub fn descs(&self) -> Vec<&ObjectDesc> {
        match self {
            Instr::GoTo { target } | Instr::Open { target } | Instr::Pickup { target } => vec![target],
            Instr::PutNext { moved, fixed } => vec![moved, fixed],
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::GoTo { target } => write!(f, "go to {target}"),
            Instr::Open { target } => write!(f, "open {target}"),
            Instr::Pickup { target } => write!(f, "pick up {target}"),
            Instr::PutNext { moved, fixed } => write!(f, "put {moved} next to {fixed}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connector {
    /// `A, then B`: A's group completes before B's group.
    Then,
    /// `A after you B`: B's group completes before A's group.
    AfterYou,
    /// No ordering.
    And,
}

impl Connector {
    fn text(self) -> &'static str {
        match self {
            Connector::Then => ", then ",
            Connector::AfterYou => " after you ",
            Connector::And => " and ",
        }
    }
}

/// A structured instruction: clauses joined by connectors. `connectors[i]`
/// joins `clauses[i]` and `clauses[i + 1]`; "and" binds tighter than the
/// sequencing connectors, of which there is at most one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mission {
    pub clauses: Vec<Instr>,
    pub connectors: Vec<Connector>,
}

impl Mission {
    pub fn new(clauses: Vec<Instr>, connectors: Vec<Connector>) -> Result<Self, MissionError> {
        let m = Mission { clauses, connectors };
        m.validate()?;
        Ok(m)
    }

    pub fn single(instr: Instr) -> Self {
        Mission {
            clauses: vec![instr],
            connectors: vec![],
        }
    }

    pub fn validate(&self) -> Result<(), MissionError> {
        let expected = self.clauses.len().saturating_sub(1);
        if self.connectors.len() != expected {
            return Err(MissionError::ConnectorCount {
                clauses: self.clauses.len(),
                connectors: self.connectors.len(),
            });
        }
        let seqs = self.connectors.iter().filter(|c| **c != Connector::And).count();
        if seqs > 1 {
            return Err(MissionError::TooManySequences(seqs));
        }
        Ok(())
    }

    /// Clause indices grouped in the order the groups must be completed.
    pub fn ordered_groups(&self) -> Vec<Vec<usize>> {
        if self.clauses.is_empty() {
            return vec![];
        }
        let mut groups = vec![vec![0]];
        let mut after = false;
        for (i, c) in self.connectors.iter().enumerate() {
            match c {
                Connector::And => groups.last_mut().unwrap().push(i + 1),
                Connector::Then => groups.push(vec![i + 1]),
                Connector::AfterYou => {
                    after = true;
                    groups.push(vec![i + 1]);
                }
            }
        }
        if after {
            groups.reverse();
        }
        groups
    }

    /// Clause indices in the order an agent should carry them out.
    pub fn execution_order(&self) -> Vec<usize> {
        self.ordered_groups().into_iter().flatten().collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (i, clause) in self.clauses.iter().enumerate() {
            if i > 0 {
                s.push_str(self.connectors[i - 1].text());
            }
            s.push_str(&clause.to_string());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Mission, MissionError> {
        parse::mission(text)
    }

    /// Every descriptor must match at least one object in the initial state.
    pub fn check_well_posed(&self, initial: &WorldState) -> Result<(), MissionError> {
        let origin = initial.agent.pose();
        for clause in &self.clauses {
            for d in clause.descs() {
                if d.find_matches(initial, origin).is_empty() {
                    return Err(MissionError::IllPosed(d.to_string()));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Mission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Incremental success checker. Feed the episode's states in order; clause
/// satisfaction is latched, and a group only starts counting once every
/// clause of the previous group has been satisfied.
#[derive(Debug, Clone)]
pub struct MissionTracker {
    mission: Mission,
    groups: Vec<Vec<usize>>,
    origin: Option<Pose>,
    phase: usize,
    done: Vec<bool>,
    prev_front: Option<Coord>,
    prev_carrying: bool,
    /// Where the currently carried object was picked up from.
    pickup_pos: Option<Coord>,
}

impl MissionTracker {
    pub fn new(mission: &Mission) -> Self {
        MissionTracker {
            groups: mission.ordered_groups(),
            done: vec![false; mission.clauses.len()],
            mission: mission.clone(),
            origin: None,
            phase: 0,
            prev_front: None,
            prev_carrying: false,
            pickup_pos: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.phase >= self.groups.len()
    }

    /// Observe the next state of the episode. Returns whether the mission is complete.
    pub fn observe(&mut self, state: &WorldState) -> bool {
        let origin = *self.origin.get_or_insert(state.agent.pose());
        let carrying = state.agent.carrying.is_some();
        if carrying && !self.prev_carrying {
            self.pickup_pos = Some(self.prev_front.unwrap_or(state.agent.position));
        } else if !carrying {
            self.pickup_pos = None;
        }
        self.prev_carrying = carrying;
        self.prev_front = Some(state.agent.pose().front());

        while !self.is_complete() {
            let group = &self.groups[self.phase];
            for &ci in group {
                if !self.done[ci] && self.clause_holds(&self.mission.clauses[ci], state, origin) {
                    self.done[ci] = true;
                }
            }
            if group.iter().all(|&ci| self.done[ci]) {
                self.phase += 1;
            } else {
                break;
            }
        }
        self.is_complete()
    }

    fn clause_holds(&self, clause: &Instr, state: &WorldState, origin: Pose) -> bool {
        match clause {
            Instr::GoTo { target } => target
                .find_matches(state, origin)
                .into_iter()
                .any(|p| p.manhattan(state.agent.position) <= 1),
            Instr::Open { target } => state
                .objects()
                .any(|(p, o)| o.is_open_door() && target.matches(&o, p, origin)),
            Instr::Pickup { target } => match (state.agent.carrying, self.pickup_pos) {
                (Some(o), Some(from)) => target.matches(&o, from, origin),
                _ => false,
            },
            Instr::PutNext { moved, fixed } => {
                let movers = moved.find_matches(state, origin);
                let anchors = fixed.find_matches(state, origin);
                movers
                    .iter()
                    .any(|m| anchors.iter().any(|f| m.manhattan(*f) == 1))
            }
        }
    }
}

/// True iff the mission is accomplished somewhere along `trace` with all
/// ordering constraints respected.
pub fn check_success(mission: &Mission, trace: &[WorldState]) -> Result<bool, MissionError> {
    let Some(first) = trace.first() else {
        return Ok(mission.clauses.is_empty());
    };
    mission.check_well_posed(first)?;
    let mut tracker = MissionTracker::new(mission);
    if tracker.is_complete() {
        return Ok(true);
    }
    Ok(trace.iter().any(|s| tracker.observe(s)))
}

mod parse {
    use super::*;

    fn err(text: &str, reason: impl Into<String>) -> MissionError {
        MissionError::Parse {
            text: text.to_string(),
            reason: reason.into(),
        }
    }

    pub(super) fn mission(text: &str) -> Result<Mission, MissionError> {
        let text_trim = text.trim().trim_end_matches('.');
        if text_trim.is_empty() {
            return Ok(Mission::single_empty());
        }
        let (parts, seq) = if let Some((a, b)) = text_trim.split_once(", then ") {
            (vec![a, b], Some(Connector::Then))
        } else if let Some((a, b)) = text_trim.split_once(" after you ") {
            (vec![a, b], Some(Connector::AfterYou))
        } else {
            (vec![text_trim], None)
        };
        let mut clauses = Vec::new();
        let mut connectors = Vec::new();
        for (gi, part) in parts.iter().enumerate() {
            if gi > 0 {
                connectors.push(seq.unwrap());
            }
            for (ci, piece) in part.split(" and ").enumerate() {
                if ci > 0 {
                    connectors.push(Connector::And);
                }
                clauses.push(instr(text, piece)?);
            }
        }
        Mission::new(clauses, connectors)
    }

    fn instr(full: &str, s: &str) -> Result<Instr, MissionError> {
        if let Some(rest) = s.strip_prefix("go to ") {
            Ok(Instr::GoTo { target: desc(full, rest)? })
        } else if let Some(rest) = s.strip_prefix("pick up ") {
            Ok(Instr::Pickup { target: desc(full, rest)? })
        } else if let Some(rest) = s.strip_prefix("open ") {
            Ok(Instr::Open { target: desc(full, rest)? })
        } else if let Some(rest) = s.strip_prefix("put ") {
            let (m, f) = rest
                .split_once(" next to ")
                .ok_or_else(|| err(full, format!("`put` clause without `next to`: {s}")))?;
            Ok(Instr::PutNext {
                moved: desc(full, m)?,
                fixed: desc(full, f)?,
            })
        } else {
            Err(err(full, format!("unknown clause `{s}`")))
        }
    }

    fn desc(full: &str, s: &str) -> Result<ObjectDesc, MissionError> {
        let (definite, rest) = if let Some(r) = s.strip_prefix("the ") {
            (true, r)
        } else if let Some(r) = s.strip_prefix("a ") {
            (false, r)
        } else if let Some(r) = s.strip_prefix("an ") {
            (false, r)
        } else {
            return Err(err(full, format!("missing article in `{s}`")));
        };
        let mut location = None;
        let mut rest = rest;
        for l in Location::ALL {
            if let Some(r) = rest.strip_suffix(l.phrase()) {
                location = Some(l);
                rest = r.trim_end();
                break;
            }
        }
        let words: Vec<&str> = rest.split_whitespace().collect();
        let (color, kind) = match words.as_slice() {
            [k] => (None, *k),
            [c, k] => (Some(c.parse::<Color>().map_err(|e| err(full, e.to_string()))?), *k),
            _ => return Err(err(full, format!("bad object description `{s}`"))),
        };
        let kind = kind.parse::<ObjKind>().map_err(|e| err(full, e.to_string()))?;
        Ok(ObjectDesc {
            kind,
            color,
            location,
            definite,
        })
    }
}

impl Mission {
    fn single_empty() -> Mission {
        Mission {
            clauses: vec![],
            connectors: vec![],
        }
    }
}
