//! Shortest action sequences over (position, direction) states.
//!
//! Turns and forward moves cost one each, plus a large penalty for stepping
//! into a movable object. Planning runs a backward Dijkstra search from the
//! goal poses, then walks greedily from the
//! agent taking the first of `forward`, `left`, `right` that decreases the
//! distance, which yields the lexicographically smallest shortest sequence.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::grid::{Action, Cell, Coord, Direction, DoorState, Pose, WorldState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("no path to {0}, even through doors and movable objects")]
    Unreachable(Coord),
    #[error("goal {0} lies outside the grid")]
    OutOfGrid(Coord),
    #[error("no goal cells given")]
    NoGoal,
}

/// Which obstructions a path may pass through. The expert tries each tier in
/// order and keeps the first that yields a path; stepping into a soft obstacle
/// is what triggers its subgoal insertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    /// Floor and open doors only.
    Free,
    /// Also closed, unlocked doors.
    Doors,
    /// Also keys, balls and boxes.
    Movables,
    /// Also locked doors.
    Locked,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Free, Tier::Doors, Tier::Movables, Tier::Locked];

    pub fn allows(self, cell: &Cell) -> bool {
        match cell {
            Cell::Floor => true,
            Cell::Wall => false,
            Cell::Object(o) => match o.door {
                Some(DoorState::Open) => true,
                Some(DoorState::Closed) => self >= Tier::Doors,
                Some(DoorState::Locked) => self >= Tier::Locked,
                None => self >= Tier::Movables,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanMode {
    /// End on a cell cardinally adjacent to the goal, any heading.
    AdjacentTo,
    /// End on the goal cell.
    Onto,
    /// End adjacent to the goal and facing it.
    Facing,
}

impl PlanMode {
    pub fn satisfied(self, pose: Pose, goal: Coord) -> bool {
        match self {
            PlanMode::AdjacentTo => pose.position.manhattan(goal) == 1,
            PlanMode::Onto => pose.position == goal,
            PlanMode::Facing => pose.front() == goal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub actions: Vec<Action>,
    pub tier: Tier,
    /// Cells the agent occupies along the way, starting cell included.
    pub cells: Vec<Coord>,
    pub end: Pose,
    /// The goal that was reached (the first listed one when several are satisfied).
    pub goal: Coord,
}

/// Shortest action sequence to `goal`, trying each [`Tier`] in turn.
pub fn plan_path(state: &WorldState, goal: Coord, mode: PlanMode) -> Result<Vec<Action>, PathError> {
    if !state.in_bounds(goal) {
        return Err(PathError::OutOfGrid(goal));
    }
    plan(state, &[goal], mode).map(|p| p.actions)
}

/// Tiered multi-goal planning: the nearest goal in the lowest workable tier.
pub fn plan(state: &WorldState, goals: &[Coord], mode: PlanMode) -> Result<Path, PathError> {
    let Some(&first) = goals.first() else {
        return Err(PathError::NoGoal);
    };
    Tier::ALL
        .into_iter()
        .find_map(|t| plan_in_tier(state, goals, mode, t))
        .ok_or(PathError::Unreachable(first))
}

struct Index {
    w: i32,
    h: i32,
}

impl Index {
    fn of(&self, p: Coord, d: Direction) -> usize {
        ((p.y * self.w + p.x) * 4 + d.index() as i32) as usize
    }

    fn pose(&self, i: usize) -> Pose {
        let cell = (i / 4) as i32;
        Pose::new(
            Coord::new(cell % self.w, cell / self.w),
            Direction::from_index((i % 4) as u8).expect("index below four"),
        )
    }

    fn inside(&self, p: Coord) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.w && p.y < self.h
    }
}

/// Extra cost of stepping into a cell held by a movable object. It exceeds any
/// obstruction-free route, so relaxed paths cross as few objects as possible;
/// moving one object off such a path then strictly reduces the count.
const MOVABLE_PENALTY: u32 = 1 << 16;

pub fn plan_in_tier(state: &WorldState, goals: &[Coord], mode: PlanMode, tier: Tier) -> Option<Path> {
    let ix = Index {
        w: state.width(),
        h: state.height(),
    };
    let start = state.agent.pose();
    let passable = |p: Coord| p == start.position || (ix.inside(p) && tier.allows(&state.cell(p)));
    let enter_cost = |p: Coord| match state.cell(p) {
        Cell::Object(o) if o.door.is_none() && p != start.position => 1 + MOVABLE_PENALTY,
        _ => 1,
    };
    let is_goal = |pose: Pose| goals.iter().any(|&g| mode.satisfied(pose, g));

    let mut dist = vec![u32::MAX; (ix.w * ix.h * 4) as usize];
    let mut done = vec![false; dist.len()];
    let mut heap = BinaryHeap::new();
    for y in 0..ix.h {
        for x in 0..ix.w {
            let p = Coord::new(x, y);
            if !passable(p) {
                continue;
            }
            for d in Direction::ALL {
                if is_goal(Pose::new(p, d)) {
                    dist[ix.of(p, d)] = 0;
                    heap.push(Reverse((0, ix.of(p, d))));
                }
            }
        }
    }
    let start_ix = ix.of(start.position, start.direction);
    while !done[start_ix] {
        let Reverse((d0, ci)) = heap.pop()?;
        if done[ci] {
            continue;
        }
        done[ci] = true;
        let cur = ix.pose(ci);
        let back = cur.position.offset({
            let (dx, dy) = cur.direction.delta();
            (-dx, -dy)
        });
        let mut preds = vec![
            (Pose::new(cur.position, cur.direction.right()), 1),
            (Pose::new(cur.position, cur.direction.left()), 1),
        ];
        if passable(back) {
            preds.push((Pose::new(back, cur.direction), enter_cost(cur.position)));
        }
        for (p, c) in preds {
            let i = ix.of(p.position, p.direction);
            if d0 + c < dist[i] {
                dist[i] = d0 + c;
                heap.push(Reverse((d0 + c, i)));
            }
        }
    }

    let mut pose = start;
    let mut actions = Vec::new();
    let mut cells = vec![pose.position];
    let mut remaining = dist[start_ix];
    while remaining > 0 {
        let step = [Action::Forward, Action::Left, Action::Right]
            .into_iter()
            .find_map(|a| {
                let np = match a {
                    Action::Forward if passable(pose.front()) => Pose::new(pose.front(), pose.direction),
                    Action::Left => Pose::new(pose.position, pose.direction.left()),
                    Action::Right => Pose::new(pose.position, pose.direction.right()),
                    _ => return None,
                };
                let cost = if a == Action::Forward { enter_cost(np.position) } else { 1 };
                (Some(dist[ix.of(np.position, np.direction)]) == remaining.checked_sub(cost)).then_some((a, np))
            })
            .expect("a distance-decreasing successor always exists");
        actions.push(step.0);
        if step.0 == Action::Forward {
            cells.push(step.1.position);
        }
        remaining -= if step.0 == Action::Forward { enter_cost(step.1.position) } else { 1 };
        pose = step.1;
    }
    let goal = *goals.iter().find(|&&g| mode.satisfied(pose, g))?;
    Some(Path {
        actions,
        tier,
        cells,
        end: pose,
        goal,
    })
}
