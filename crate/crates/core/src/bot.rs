//! The omniscient expert: a subgoal stack machine over the fully observed
//! grid. It replans at every tick and inserts prerequisite subgoals when the
//! planned path runs into a closed door, a locked door or a movable object.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::{Action, Cell, Coord, DoorState, ObjKind, Pose, WorldState};
use crate::mission::{Instr, Mission, MissionTracker, ObjectDesc};
use crate::path::{plan, PlanMode};

/// What a GoNextTo subgoal approaches. Completion means facing the target cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Pos(Coord),
    /// Nearest object matching the description, resolved at every tick.
    Obj(ObjectDesc),
    /// An empty floor cell next to an object matching `fixed`, where the
    /// carried object would still match `moved`.
    Beside { fixed: ObjectDesc, moved: ObjectDesc },
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Pos(p) => write!(f, "{p}"),
            Target::Obj(d) => f.write_str(&d.phrase()),
            Target::Beside { fixed, .. } => f.write_str(&fixed.phrase()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subgoal {
    GoNextTo(Target),
    Open,
    Pickup,
    Drop,
}

impl Subgoal {
    pub fn go_to(p: Coord) -> Self {
        Subgoal::GoNextTo(Target::Pos(p))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Subgoal::GoNextTo(_) => "GoNextToSubgoal",
            Subgoal::Open => "OpenSubgoal",
            Subgoal::Pickup => "PickupSubgoal",
            Subgoal::Drop => "DropSubgoal",
        }
    }
}

/// Stack-listing style: `(GoNextToSubgoal: green ball)`, `(OpenSubgoal)`.
impl fmt::Display for Subgoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subgoal::GoNextTo(t) => write!(f, "({}: {t})", self.name()),
            _ => write!(f, "({})", self.name()),
        }
    }
}

pub fn format_stack(stack: &[Subgoal]) -> String {
    let items: Vec<String> = stack.iter().map(|s| s.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// Default initialization: each clause becomes its primitive subgoals, in
/// execution order, with a safety Drop after every pickup. Returned as a
/// stack (top = last element).
pub fn translate_mission(mission: &Mission) -> Vec<Subgoal> {
    let mut exec = Vec::new();
    for ci in mission.execution_order() {
        match mission.clauses[ci] {
            Instr::GoTo { target } => exec.push(Subgoal::GoNextTo(Target::Obj(target))),
            Instr::Open { target } => {
                exec.extend([Subgoal::GoNextTo(Target::Obj(target)), Subgoal::Open]);
            }
            Instr::Pickup { target } => exec.extend([
                Subgoal::GoNextTo(Target::Obj(target)),
                Subgoal::Pickup,
                Subgoal::Drop,
            ]),
            Instr::PutNext { moved, fixed } => exec.extend([
                Subgoal::GoNextTo(Target::Obj(moved)),
                Subgoal::Pickup,
                Subgoal::GoNextTo(Target::Beside { fixed, moved }),
                Subgoal::Drop,
            ]),
        }
    }
    exec.reverse();
    exec
}

/// Number of safety Drops `translate_mission` adds for pickup clauses.
pub fn safety_drop_count(mission: &Mission) -> usize {
    mission
        .clauses
        .iter()
        .filter(|c| matches!(c, Instr::Pickup { .. }))
        .count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Init {
    /// The translated mission stack.
    Default,
    /// A caller-provided stack, top = last element.
    Stack(Vec<Subgoal>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveOptions {
    /// Maximum number of inserted subgoals; `None` is unlimited.
    pub addition_budget: Option<usize>,
    /// Action budget; `None` means `8 * width * height`.
    pub max_steps: Option<u32>,
    /// Count the translated safety Drops as added subgoals (default init only).
    pub count_safety_drops: bool,
}

impl SolveOptions {
    pub fn no_additions() -> Self {
        SolveOptions {
            addition_budget: Some(0),
            ..Default::default()
        }
    }

    pub fn with_budget(k: usize) -> Self {
        SolveOptions {
            addition_budget: Some(k),
            ..Default::default()
        }
    }
}

pub fn default_step_budget(state: &WorldState) -> u32 {
    8 * state.width() as u32 * state.height() as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Halt {
    Success,
    StackEmpty,
    StepBudget,
    AdditionBudget,
    TickCap,
    Stuck(String),
}

impl fmt::Display for Halt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Halt::Success => f.write_str("success"),
            Halt::StackEmpty => f.write_str("stack emptied before the mission was complete"),
            Halt::StepBudget => f.write_str("step budget exhausted"),
            Halt::AdditionBudget => f.write_str("subgoal addition budget exhausted"),
            Halt::TickCap => f.write_str("planner iteration cap reached"),
            Halt::Stuck(why) => write!(f, "stuck: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackSnapshot {
    pub step: u32,
    pub stack: Vec<Subgoal>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeTrace {
    pub actions: Vec<Action>,
    #[serde(skip)]
    pub states: Vec<WorldState>,
    pub added_subgoals: usize,
    pub success: bool,
    pub steps: u32,
    pub step_budget: u32,
    pub halt: Halt,
    /// Stack contents each time they changed, with the step count at that moment.
    pub stacks: Vec<StackSnapshot>,
    /// Subgoals in the order they were carried out, GoNextTo targets resolved
    /// to the faced cell. Interrupted GoNextTos are included at the point of
    /// interruption.
    pub executed: Vec<Subgoal>,
}

impl EpisodeTrace {
    pub fn final_state(&self) -> &WorldState {
        self.states.last().expect("trace holds the initial state")
    }
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    goal: Subgoal,
    /// Set on an Open whose key the bot fetched itself; the key is dropped after use.
    fetched_key: bool,
}

impl Frame {
    fn new(goal: Subgoal) -> Self {
        Frame {
            goal,
            fetched_key: false,
        }
    }
}

enum Tick {
    Act(Action),
    Continue,
}

struct Solver {
    stack: Vec<Frame>,
    origin: Pose,
    added: usize,
    budget: Option<usize>,
    executed: Vec<Subgoal>,
    dirty: bool,
    /// Goal cell of the GoNextTo that produced the latest action.
    heading_to: Option<Coord>,
}

pub fn solve(state: &WorldState, mission: &Mission, init: Init, opts: &SolveOptions) -> EpisodeTrace {
    let (stack, mut added) = match init {
        Init::Default => {
            let base = if opts.count_safety_drops {
                safety_drop_count(mission)
            } else {
                0
            };
            (translate_mission(mission), base)
        }
        Init::Stack(s) => (s, 0),
    };
    let step_budget = opts.max_steps.unwrap_or_else(|| default_step_budget(state));
    let tick_cap = 4 * step_budget as usize + 256;

    let mut solver = Solver {
        stack: stack.into_iter().map(Frame::new).collect(),
        origin: state.agent.pose(),
        added: 0,
        budget: opts.addition_budget,
        executed: Vec::new(),
        dirty: false,
        heading_to: None,
    };
    let mut cur = state.clone();
    let start_steps = cur.step_count;
    let mut tracker = MissionTracker::new(mission);
    let mut actions = Vec::new();
    let mut states = vec![cur.clone()];
    let mut stacks = vec![StackSnapshot {
        step: 0,
        stack: solver.snapshot(),
    }];
    let mut ticks = 0usize;

    let halt = if tracker.observe(&cur) {
        Halt::Success
    } else {
        loop {
            if solver.stack.is_empty() {
                break Halt::StackEmpty;
            }
            if actions.len() as u32 >= step_budget {
                break Halt::StepBudget;
            }
            ticks += 1;
            if ticks > tick_cap {
                break Halt::TickCap;
            }
            let outcome = solver.tick(&cur);
            if std::mem::take(&mut solver.dirty) {
                stacks.push(StackSnapshot {
                    step: actions.len() as u32,
                    stack: solver.snapshot(),
                });
            }
            match outcome {
                Err(h) => break h,
                Ok(Tick::Continue) => {}
                Ok(Tick::Act(a)) => {
                    cur.apply(a);
                    actions.push(a);
                    states.push(cur.clone());
                    if tracker.observe(&cur) {
                        break Halt::Success;
                    }
                }
            }
        }
    };
    added += solver.added;
    if halt == Halt::Success {
        // a GoTo clause can succeed on adjacency before its GoNextTo completes
        if let Some(goal) = solver.heading_to {
            solver.executed.push(Subgoal::go_to(goal));
        }
    }
    EpisodeTrace {
        steps: cur.step_count - start_steps,
        success: halt == Halt::Success,
        actions,
        states,
        added_subgoals: added,
        step_budget,
        halt,
        stacks,
        executed: solver.executed,
    }
}

impl Solver {
    fn snapshot(&self) -> Vec<Subgoal> {
        self.stack.iter().map(|f| f.goal).collect()
    }

    fn pop(&mut self) {
        self.stack.pop();
        self.dirty = true;
    }

    /// Push subgoals (bottom first), charging each against the budget.
    fn insert(&mut self, goals: &[Subgoal]) -> Result<(), Halt> {
        self.insert_frames(goals.iter().map(|g| Frame::new(*g)).collect(), goals.len())
    }

    fn insert_frames(&mut self, frames: Vec<Frame>, cost: usize) -> Result<(), Halt> {
        if self.budget.is_some_and(|b| self.added + cost > b) {
            return Err(Halt::AdditionBudget);
        }
        self.added += cost;
        self.stack.extend(frames);
        self.dirty = true;
        Ok(())
    }

    fn tick(&mut self, state: &WorldState) -> Result<Tick, Halt> {
        let top = *self.stack.last().expect("tick on empty stack");
        let out = match top.goal {
            Subgoal::GoNextTo(target) => return self.go_next_to(state, target),
            Subgoal::Open => self.open(state, top),
            Subgoal::Pickup => self.pickup(state),
            Subgoal::Drop => self.drop(state),
        };
        if matches!(out, Ok(Tick::Act(_))) {
            self.heading_to = None;
        }
        out
    }

    /// Goal cells for a GoNextTo target in the current state.
    fn goal_cells(&self, state: &WorldState, target: Target) -> Vec<Coord> {
        match target {
            Target::Pos(p) => vec![p],
            Target::Obj(d) => d.find_matches(state, self.origin),
            Target::Beside { fixed, moved } => {
                let mut cells: Vec<Coord> = fixed
                    .find_matches(state, self.origin)
                    .into_iter()
                    .flat_map(|a| a.neighbors())
                    .filter(|&c| {
                        state.in_bounds(c)
                            && state.cell(c) == Cell::Floor
                            && c != state.agent.position
                            && moved.location.is_none_or(|l| l.contains(self.origin, c))
                    })
                    .collect();
                cells.sort_by_key(|c| c.reading_key());
                cells.dedup();
                cells
            }
        }
    }

    fn go_next_to(&mut self, state: &WorldState, target: Target) -> Result<Tick, Halt> {
        let pose = state.agent.pose();
        let front = pose.front();
        if let Target::Pos(p) = target {
            if p == pose.position {
                self.executed.push(Subgoal::go_to(p));
                self.pop();
                return Ok(Tick::Continue);
            }
        }
        let goals = self.goal_cells(state, target);
        if goals.contains(&front) {
            self.executed.push(Subgoal::go_to(front));
            self.pop();
            return Ok(Tick::Continue);
        }
        if goals.is_empty() {
            return Err(Halt::Stuck(format!("nothing matches GoNextTo target {target}")));
        }
        let path = plan(state, &goals, PlanMode::Facing).map_err(|e| Halt::Stuck(e.to_string()))?;
        let action = path.actions[0];
        if action == Action::Forward {
            if let Cell::Object(o) = state.cell(front) {
                match o.door {
                    Some(DoorState::Closed | DoorState::Locked) => {
                        self.executed.push(Subgoal::go_to(front));
                        self.insert(&[Subgoal::Open])?;
                        return Ok(Tick::Continue);
                    }
                    Some(DoorState::Open) => {}
                    None => {
                        self.executed.push(Subgoal::go_to(front));
                        let mut protect = path.cells.clone();
                        protect.extend(&goals);
                        return self.move_blocker(state, front, &protect);
                    }
                }
            }
        }
        self.heading_to = Some(path.goal);
        Ok(Tick::Act(action))
    }

    /// Relocate the object at `blocker`, which the agent faces.
    fn move_blocker(&mut self, state: &WorldState, blocker: Coord, protect: &[Coord]) -> Result<Tick, Halt> {
        if state.agent.carrying.is_none() {
            let d = find_drop_pos(state, protect, &[blocker], &[])
                .ok_or_else(|| Halt::Stuck("no free cell to move a blocking object to".into()))?;
            self.insert(&[Subgoal::Drop, Subgoal::go_to(d), Subgoal::Pickup])?;
            return Ok(Tick::Continue);
        }
        // Put the carried object down, move the blocker, then fetch the object again.
        let d1 = find_drop_pos(state, protect, &[blocker], &[])
            .ok_or_else(|| Halt::Stuck("no free cell for the carried object".into()))?;
        let mut protect2 = protect.to_vec();
        protect2.push(d1);
        let d2 = find_drop_pos(state, &protect2, &[blocker], &[d1])
            .ok_or_else(|| Halt::Stuck("no free cell to move a blocking object to".into()))?;
        self.insert(&[
            Subgoal::Pickup,
            Subgoal::go_to(d1),
            Subgoal::Drop,
            Subgoal::go_to(d2),
            Subgoal::Pickup,
            Subgoal::go_to(blocker),
            Subgoal::Drop,
            Subgoal::go_to(d1),
        ])?;
        Ok(Tick::Continue)
    }

    fn open(&mut self, state: &WorldState, top: Frame) -> Result<Tick, Halt> {
        let front = state.agent.pose().front();
        let door = match state.cell(front) {
            Cell::Object(o) if o.kind == ObjKind::Door => o,
            _ => {
                self.pop();
                return Ok(Tick::Continue);
            }
        };
        match door.door {
            Some(DoorState::Closed) => {
                self.pop();
                self.executed.push(Subgoal::Open);
                Ok(Tick::Act(Action::Toggle))
            }
            Some(DoorState::Locked) => {
                let has_key = state
                    .agent
                    .carrying
                    .is_some_and(|k| k.kind == ObjKind::Key && k.color == door.color);
                if has_key {
                    self.pop();
                    self.executed.push(Subgoal::Open);
                    if top.fetched_key {
                        self.insert(&[Subgoal::Drop])?;
                    }
                    return Ok(Tick::Act(Action::Toggle));
                }
                self.fetch_key(state, front, door.color)
            }
            _ => {
                self.pop();
                Ok(Tick::Continue)
            }
        }
    }

    fn fetch_key(&mut self, state: &WorldState, door: Coord, color: crate::grid::Color) -> Result<Tick, Halt> {
        let keys: Vec<Coord> = state
            .objects()
            .filter(|(_, o)| o.kind == ObjKind::Key && o.color == color)
            .map(|(p, _)| p)
            .collect();
        if keys.is_empty() {
            return Err(Halt::Stuck(format!("no {color} key for the locked door at {door}")));
        }
        // The key must be reachable without going through the door it opens.
        let mut sealed = state.clone();
        sealed.set_cell(door, Cell::Wall);
        let key_path = plan(&sealed, &keys, PlanMode::Facing)
            .map_err(|_| Halt::Stuck(format!("the {color} key is only reachable through its own door")))?;
        let key = key_path.goal;
        if state.agent.carrying.is_none() {
            self.stack.last_mut().unwrap().fetched_key = true;
            self.insert(&[Subgoal::go_to(door), Subgoal::Pickup, Subgoal::go_to(key)])?;
            return Ok(Tick::Continue);
        }
        // Hands full: set the object down, fetch the key, open, then come back for it.
        let mut protect = key_path.cells.clone();
        protect.push(key);
        let spot = find_drop_pos(state, &protect, &[], &[])
            .ok_or_else(|| Halt::Stuck("no free cell for the carried object".into()))?;
        let frames = vec![
            Frame::new(Subgoal::Pickup),
            Frame::new(Subgoal::go_to(spot)),
            Frame {
                goal: Subgoal::Open,
                fetched_key: true,
            },
            Frame::new(Subgoal::go_to(door)),
            Frame::new(Subgoal::Pickup),
            Frame::new(Subgoal::go_to(key)),
            Frame::new(Subgoal::Drop),
            Frame::new(Subgoal::go_to(spot)),
        ];
        // the original Open is replaced by the re-pushed one, which is not charged
        if self.budget.is_some_and(|b| self.added + 7 > b) {
            return Err(Halt::AdditionBudget);
        }
        self.stack.pop();
        self.insert_frames(frames, 7)?;
        Ok(Tick::Continue)
    }

    fn pickup(&mut self, state: &WorldState) -> Result<Tick, Halt> {
        let front = state.agent.pose().front();
        let portable = matches!(state.cell(front), Cell::Object(o) if o.kind.is_portable());
        if !portable {
            self.pop();
            return Ok(Tick::Continue);
        }
        if state.agent.carrying.is_none() {
            self.pop();
            self.executed.push(Subgoal::Pickup);
            return Ok(Tick::Act(Action::Pickup));
        }
        let protect = self.upcoming_path_cells(state);
        let d = find_drop_pos(state, &protect, &[], &[front])
            .ok_or_else(|| Halt::Stuck("no free cell to put the carried object".into()))?;
        self.insert(&[Subgoal::go_to(front), Subgoal::Drop, Subgoal::go_to(d)])?;
        Ok(Tick::Continue)
    }

    fn drop(&mut self, state: &WorldState) -> Result<Tick, Halt> {
        if state.agent.carrying.is_none() {
            self.pop();
            return Ok(Tick::Continue);
        }
        if state.front_cell().is_some_and(|c| state.cell(c) == Cell::Floor) {
            self.pop();
            self.executed.push(Subgoal::Drop);
            return Ok(Tick::Act(Action::Drop));
        }
        let protect = self.upcoming_path_cells(state);
        let d = find_drop_pos(state, &protect, &[], &[])
            .ok_or_else(|| Halt::Stuck("no free cell to drop the carried object".into()))?;
        self.insert(&[Subgoal::go_to(d)])?;
        Ok(Tick::Continue)
    }

    /// Cells on the route to the next navigation target below the top.
    fn upcoming_path_cells(&self, state: &WorldState) -> Vec<Coord> {
        let Some(target) = self.stack.iter().rev().find_map(|f| match f.goal {
            Subgoal::GoNextTo(t) => Some(t),
            _ => None,
        }) else {
            return vec![];
        };
        let goals = self.goal_cells(state, target);
        let mut cells = goals.clone();
        if let Ok(p) = plan(state, &goals, PlanMode::Facing) {
            cells.extend(p.cells);
        }
        cells
    }
}

/// Nearest empty floor cell the agent can face where an object may be set
/// down without cutting the free space in two. `vacated` cells count as free
/// (their object is about to be picked up), `occupied` ones as blocked.
/// Preference is relaxed step by step when nothing qualifies.
pub fn find_drop_pos(state: &WorldState, protect: &[Coord], vacated: &[Coord], occupied: &[Coord]) -> Option<Coord> {
    let start = state.agent.pose();
    let w = state.width();
    let idx = |p: Pose| ((p.position.y * w + p.position.x) * 4 + p.direction.index() as i32) as usize;
    let walkable = |c: Coord| {
        c == start.position
            || (state.in_bounds(c)
                && !occupied.contains(&c)
                && match state.cell(c) {
                    Cell::Floor => true,
                    Cell::Object(o) => o.is_open_door(),
                    Cell::Wall => false,
                })
    };
    // forward BFS over poses; collect faced cells in order of first reach
    let mut seen = vec![false; (w * state.height() * 4) as usize];
    let mut queue = VecDeque::from([start]);
    seen[idx(start)] = true;
    let mut candidates = Vec::new();
    let mut listed = HashSet::new();
    let mut layer_end = 1usize;
    let mut layer = Vec::new();
    let mut popped = 0usize;
    while let Some(p) = queue.pop_front() {
        popped += 1;
        let f = p.front();
        if state.in_bounds(f)
            && f != start.position
            && state.cell(f) == Cell::Floor
            && !occupied.contains(&f)
            && !vacated.contains(&f)
            && listed.insert(f)
        {
            layer.push(f);
        }
        for np in [
            Pose::new(f, p.direction),
            Pose::new(p.position, p.direction.left()),
            Pose::new(p.position, p.direction.right()),
        ] {
            if (np.position == p.position || walkable(np.position)) && !seen[idx(np)] {
                seen[idx(np)] = true;
                queue.push_back(np);
            }
        }
        if popped == layer_end {
            layer.sort_by_key(|c| c.reading_key());
            candidates.append(&mut layer);
            layer_end = popped + queue.len();
        }
    }
    candidates.append(&mut layer);

    let near_door = |c: Coord| {
        c.neighbors()
            .iter()
            .any(|n| matches!(state.cell(*n), Cell::Object(o) if o.kind == ObjKind::Door))
    };
    let baseline = free_region(state, vacated, occupied, None);
    let splits = |c: Coord| free_region(state, vacated, occupied, Some(c)) + 1 < baseline;
    let strict = |c: &&Coord| !protect.contains(c) && !near_door(**c) && !splits(**c);
    let relaxed = |c: &&Coord| !protect.contains(c) && !splits(**c);
    let loose = |c: &&Coord| !protect.contains(c);
    candidates
        .iter()
        .find(strict)
        .or_else(|| candidates.iter().find(relaxed))
        .or_else(|| candidates.iter().find(loose))
        .or_else(|| candidates.first())
        .copied()
}

/// Size of the 4-connected region around the agent over floor and door
/// cells (doors of any state), optionally with one extra cell blocked.
fn free_region(state: &WorldState, vacated: &[Coord], occupied: &[Coord], blocked: Option<Coord>) -> usize {
    let start = state.agent.position;
    let open = |c: Coord| {
        c == start
            || (state.in_bounds(c)
                && Some(c) != blocked
                && !occupied.contains(&c)
                && (vacated.contains(&c)
                    || match state.cell(c) {
                        Cell::Floor => true,
                        Cell::Object(o) => o.kind == ObjKind::Door,
                        Cell::Wall => false,
                    }))
    };
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for n in c.neighbors() {
            if open(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.len()
}

/// A fully explicit stack for the instance: the default run's executed
/// subgoals, re-run and re-flattened until the bot needs no insertions.
pub fn anticipatory_stack(state: &WorldState, mission: &Mission) -> Option<Vec<Subgoal>> {
    let unlimited = SolveOptions::default();
    let mut trace = solve(state, mission, Init::Default, &unlimited);
    for _ in 0..8 {
        if !trace.success {
            return None;
        }
        let mut stack = trace.executed.clone();
        stack.reverse();
        trace = solve(state, mission, Init::Stack(stack.clone()), &unlimited);
        if trace.success && trace.added_subgoals == 0 {
            return Some(stack);
        }
    }
    None
}
