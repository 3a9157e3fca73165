//! Prompt construction for the three tasks under four prompting strategies.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{gen_row, GenOptions, Row, Task};
use crate::grid::{Direction, Pose};
use crate::levels::LevelRef;

use super::answer::{oracle_answer, END, START};
use super::HarnessError;

/// Few-shot exemplars come from seeds at or above this value, far from any
/// seed range a dataset would use.
pub const EXEMPLAR_SEED_BASE: u64 = 1 << 40;
pub const FEW_SHOT_EXAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    #[default]
    ZeroShot,
    FewShot,
    Cot,
    Tot,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 4] = [
        PromptStrategy::ZeroShot,
        PromptStrategy::FewShot,
        PromptStrategy::Cot,
        PromptStrategy::Tot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptStrategy::ZeroShot => "zero_shot",
            PromptStrategy::FewShot => "few_shot",
            PromptStrategy::Cot => "cot",
            PromptStrategy::Tot => "tot",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptStrategy {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        PromptStrategy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or(HarnessError::UnknownStrategy(s))
    }
}

/// A solved row shown to the model before the real question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub row: Row,
    pub answer: String,
}

fn pose_text(p: Pose) -> String {
    format!(
        "position ({}, {}), facing {} (direction {})",
        p.position.x,
        p.position.y,
        p.direction.name(),
        p.direction.index()
    )
}

fn direction_legend() -> String {
    let parts: Vec<String> = Direction::ALL
        .iter()
        .map(|d| format!("{} = {}", d.index(), d.name()))
        .collect();
    format!("Directions are encoded as integers: {}.", parts.join(", "))
}

/// Task statement without the environment text or strategy scaffolding.
fn question(row: &Row) -> String {
    let mut s = String::new();
    match row {
        Row::Predict(r) => {
            let _ = writeln!(s, "The agent starts at {}.", pose_text(r.initial_state));
            let actions: Vec<&str> = r.action_sequence.iter().map(|a| a.name()).collect();
            let _ = writeln!(
                s,
                "It performs the following {} actions, in order: {}.",
                actions.len(),
                if actions.is_empty() { "(none)".to_string() } else { actions.join(", ") }
            );
            s.push_str("An action that cannot be carried out (for example moving forward into a wall, a closed door or an object) leaves the agent where it is.\n");
            s.push_str("What is the agent's final position and direction?");
        }
        Row::Plan(r) => {
            let _ = writeln!(s, "The agent starts at {}.", pose_text(r.initial_state));
            let _ = write!(
                s,
                "Give a sequence of actions after which the agent stands on a cell directly next to (horizontally or vertically adjacent to) position ({}, {}). Shorter sequences are better.",
                r.target_subgoal.x, r.target_subgoal.y
            );
        }
        Row::Decompose(r) => {
            let _ = writeln!(s, "The agent starts at {}.", pose_text(r.initial_state));
            let _ = writeln!(s, "Mission: '{}'.", r.mission);
            s.push_str("Decompose the mission into subgoals for a low-level controller that executes them one after another. The available subgoals are:\n");
            s.push_str("(GoNextToSubgoal, (x, y)): walk to a cell next to position (x, y) and face it.\n");
            s.push_str("(OpenSubgoal): open the door in front of the agent, unlocking it first if the agent holds the matching key.\n");
            s.push_str("(PickupSubgoal): pick up the object in front of the agent.\n");
            s.push_str("(DropSubgoal): drop the carried object on the empty cell in front of the agent.\n");
            s.push_str("The agent can carry one object at a time. Include every subgoal needed to get past closed or locked doors and objects in the way.");
        }
    }
    s
}

fn protocol(task: Task) -> String {
    match task {
        Task::Predict => format!(
            "{}\nEnd your answer with a line of the form: The agent's final state is: ((x, y), d)",
            direction_legend()
        ),
        Task::Plan => format!(
            "Valid actions: left, right, forward, pickup, drop, toggle.\nWrite the final plan between a line {START} and a line {END}, one action per line."
        ),
        Task::Decompose => format!(
            "Write the final subgoals between a line {START} and a line {END}, one subgoal per line, in the order they should be executed, for example:\n{START}\n(GoNextToSubgoal, (3, 4))\n(OpenSubgoal)\n{END}"
        ),
    }
}

fn scaffold(task: Task, strategy: PromptStrategy) -> Option<String> {
    match (strategy, task) {
        (PromptStrategy::ZeroShot | PromptStrategy::FewShot, _) => None,
        (PromptStrategy::Cot, Task::Predict) => Some(
            "Think step by step: apply the actions one at a time and write down the agent's position and direction after each of them before giving the final answer.".into(),
        ),
        (PromptStrategy::Cot, Task::Plan) => Some(
            "Think step by step: locate the target, trace a route around walls and objects through open or openable doors, then translate the route into turns and forward moves before giving the final answer.".into(),
        ),
        (PromptStrategy::Cot, Task::Decompose) => Some(
            "Think step by step: identify the objects the mission refers to, find what blocks the way to each of them, then list the subgoals in order before giving the final answer.".into(),
        ),
        (PromptStrategy::Tot, Task::Predict) => Some(
            "Reason as follows.\nStep 1: Restate the initial position and direction.\nStep 2: Process the actions in small groups; for each forward move, check whether the cell ahead is free.\nStep 3: When a move is uncertain, consider each possible outcome, check it against the environment description and keep the consistent one.\nStep 4: Verify the final state by replaying the actions briefly.\nStep 5: Give the final answer.".into(),
        ),
        (PromptStrategy::Tot, Task::Plan) => Some(
            "Reason as follows.\nStep 1: Identify the target cell and the cells next to it that the agent can stand on.\nStep 2: Propose at least two different routes to those cells.\nStep 3: For each route, check walls, doors and objects along the way and count the actions it needs.\nStep 4: Choose the shortest valid route.\nStep 5: Convert it into actions and give the final answer.".into(),
        ),
        (PromptStrategy::Tot, Task::Decompose) => Some(
            "Reason as follows.\nStep 1: Identify the mission goal.\nStep 2: Identify the relevant objects and the obstacles between them and the agent.\nStep 3: Determine the interactions needed (doors to open, keys to fetch, objects to move).\nStep 4: Plan at least two options.\nStep 5: Choose the best option.\nStep 6: Convert it into subgoals.\nStep 7: Order the subgoals and give the final answer.".into(),
        ),
    }
}

/// Assembles a prompt. `exemplars` is only used by the few-shot strategy.
pub fn build_prompt(row: &Row, strategy: PromptStrategy, exemplars: &[Exemplar]) -> String {
    let task = row.task();
    let mut s = String::new();
    if strategy == PromptStrategy::FewShot && !exemplars.is_empty() {
        let _ = writeln!(s, "Here are {} solved examples.\n", exemplars.len());
        for (i, ex) in exemplars.iter().enumerate() {
            let _ = writeln!(s, "### Example {}\n", i + 1);
            let _ = writeln!(s, "{}\n", ex.row.env_description().trim_end());
            let _ = writeln!(s, "{}\n", question(&ex.row));
            let _ = writeln!(s, "Answer:\n{}\n", ex.answer);
        }
        s.push_str("### Your turn\n\n");
    }
    let _ = writeln!(s, "{}\n", row.env_description().trim_end());
    let _ = writeln!(s, "{}\n", question(row));
    if let Some(sc) = scaffold(task, strategy) {
        let _ = writeln!(s, "{sc}\n");
    }
    s.push_str(&protocol(task));
    s.push('\n');
    s
}

/// Exemplars for `(task, level)`: expert-solved rows from seeds
/// `EXEMPLAR_SEED_BASE..`, which no evaluated row shares.
pub fn make_exemplars(task: Task, level: LevelRef, opts: &GenOptions, n: usize) -> Result<Vec<Exemplar>, HarnessError> {
    (0..n as u64)
        .map(|i| {
            let row = gen_row(task, level, EXEMPLAR_SEED_BASE + i, opts)?;
            let answer = oracle_answer(&row)?;
            Ok(Exemplar { row, answer })
        })
        .collect()
}

/// Builds prompts for a dataset, generating few-shot exemplars once per level.
pub struct Prompter {
    pub strategy: PromptStrategy,
    pub gen: GenOptions,
    cache: Mutex<HashMap<(Task, String), Vec<Exemplar>>>,
}

impl Prompter {
    pub fn new(strategy: PromptStrategy, gen: GenOptions) -> Self {
        Prompter {
            strategy,
            gen,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn prompt(&self, row: &Row) -> Result<String, HarnessError> {
        if self.strategy != PromptStrategy::FewShot {
            return Ok(build_prompt(row, self.strategy, &[]));
        }
        let key = (row.task(), row.level_name().to_string());
        let cached = self.cache.lock().expect("cache lock").get(&key).cloned();
        let exemplars = match cached {
            Some(e) => e,
            None => {
                let level = LevelRef::parse(row.level_name())?;
                let e = make_exemplars(row.task(), level, &self.gen, FEW_SHOT_EXAMPLES)?;
                self.cache.lock().expect("cache lock").insert(key, e.clone());
                e
            }
        };
        Ok(build_prompt(row, self.strategy, &exemplars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::LevelId;

    fn row(task: Task) -> Row {
        gen_row(task, LevelRef::Bench(LevelId::GoTo), 4, &GenOptions::default()).unwrap()
    }

    #[test]
    fn zero_shot_embeds_the_description() {
        let r = row(Task::Predict);
        let p = build_prompt(&r, PromptStrategy::ZeroShot, &[]);
        assert!(p.contains(r.env_description().trim_end()));
        assert!(p.contains("The agent's final state is: ((x, y), d)"));
    }

    #[test]
    fn few_shot_has_three_solved_examples() {
        let r = row(Task::Decompose);
        let p = Prompter::new(PromptStrategy::FewShot, GenOptions::default()).prompt(&r).unwrap();
        assert_eq!(p.matches("### Example").count(), 3);
        assert_eq!(p.matches("Answer:\n<START>").count(), 3);
        assert!(p.contains("(GoNextToSubgoal, (x, y))"));
    }

    #[test]
    fn strategies_parse() {
        for s in PromptStrategy::ALL {
            assert_eq!(s.name().parse::<PromptStrategy>().unwrap(), s);
        }
        assert_eq!("few-shot".parse::<PromptStrategy>().unwrap(), PromptStrategy::FewShot);
        assert!("magic".parse::<PromptStrategy>().is_err());
    }
}
