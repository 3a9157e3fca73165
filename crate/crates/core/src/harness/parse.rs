//! Model-response parsing. A response that does not follow the output
//! protocol yields a [`ParseError`], which scoring records as a parse failure.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bot::Subgoal;
use crate::dataset::Task;
use crate::grid::{Action, Coord, Direction, Pose};

use super::answer::{END, START};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum ParseError {
    #[error("empty response")]
    Empty,
    #[error("no final state of the form ((x, y), d)")]
    NoFinalState,
    #[error("direction {0} is not in 0..=3")]
    BadDirection(u64),
    #[error("no action sequence found")]
    NoActions,
    #[error("unknown action `{0}` in the answer block")]
    UnknownAction(String),
    #[error("no {START} ... {END} block")]
    NoBlock,
    #[error("unrecognized subgoal `{0}`")]
    UnknownSubgoal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedResponse {
    Predict(Pose),
    Plan(Vec<Action>),
    /// Subgoal stack, top = last element.
    Decompose(Vec<Subgoal>),
}

pub fn parse_response(task: Task, text: &str) -> Result<ParsedResponse, ParseError> {
    match task {
        Task::Predict => parse_predict(text).map(ParsedResponse::Predict),
        Task::Plan => parse_plan(text).map(ParsedResponse::Plan),
        Task::Decompose => parse_decompose(text).map(ParsedResponse::Decompose),
    }
}

static FINAL_STATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*,\s*(\d+)\s*\)").expect("valid regex"));

/// The last `((x, y), d)` in the text.
pub fn parse_predict(text: &str) -> Result<Pose, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let c = FINAL_STATE.captures_iter(text).last().ok_or(ParseError::NoFinalState)?;
    let num = |i: usize| c[i].parse::<u64>().map_err(|_| ParseError::NoFinalState);
    let (x, y, d) = (num(1)?, num(2)?, num(3)?);
    let direction = u8::try_from(d)
        .ok()
        .and_then(Direction::from_index)
        .ok_or(ParseError::BadDirection(d))?;
    let coord = |v: u64| i32::try_from(v).map_err(|_| ParseError::NoFinalState);
    Ok(Pose::new(Coord::new(coord(x)?, coord(y)?), direction))
}

/// Text between the last `<START>` and the `<END>` that follows it.
fn final_block(text: &str) -> Option<&str> {
    let start = text.rfind(START)?;
    let rest = &text[start + START.len()..];
    rest.find(END).map(|end| &rest[..end])
}

static MULTIWORD: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    [
        (r"pick[\s_-]+up", "pickup"),
        (r"turn[\s_-]+left", "left"),
        (r"turn[\s_-]+right", "right"),
        (r"(?:move|go|step)[\s_-]+forward", "forward"),
    ]
    .into_iter()
    .map(|(p, r)| (Regex::new(p).expect("valid regex"), r))
    .collect()
});

fn normalize(text: &str) -> String {
    let mut s = text.to_lowercase();
    for (re, rep) in MULTIWORD.iter() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s
}

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty())
}

/// Actions from the final answer block if there is one, otherwise the
/// longest run of action words at the end of the text. Action words are
/// case-insensitive and "pick up" / "pick-up" read as `pickup`.
pub fn parse_plan(text: &str) -> Result<Vec<Action>, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    if let Some(block) = final_block(text) {
        let norm = normalize(block);
        return words(&norm)
            .filter(|w| !w.chars().all(|c| c.is_ascii_digit()))
            .map(|w| w.parse::<Action>().map_err(|_| ParseError::UnknownAction(w.to_string())))
            .collect();
    }
    let norm = normalize(text);
    let all: Vec<&str> = words(&norm).collect();
    let mut actions: Vec<Action> = all
        .iter()
        .rev()
        .map_while(|w| w.parse::<Action>().ok())
        .collect();
    if actions.is_empty() {
        return Err(ParseError::NoActions);
    }
    actions.reverse();
    Ok(actions)
}

static GO_NEXT_TO: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\(\s*GoNextToSubgoal\s*,\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*\)$").expect("valid regex")
});
static SIMPLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\(\s*(OpenSubgoal|PickupSubgoal|DropSubgoal)\s*\)$").expect("valid regex"));
static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:[-*]\s+|\d+[.)]\s+)").expect("valid regex"));

fn parse_subgoal(line: &str) -> Result<Subgoal, ParseError> {
    let line = LIST_MARKER.replace(line, "");
    let line = line.trim().trim_end_matches([',', ';']).trim();
    if let Some(c) = GO_NEXT_TO.captures(line) {
        let n = |i: usize| c[i].parse::<i32>().map_err(|_| ParseError::UnknownSubgoal(line.to_string()));
        return Ok(Subgoal::go_to(Coord::new(n(1)?, n(2)?)));
    }
    match SIMPLE.captures(line).as_ref().map(|c| &c[1]) {
        Some("OpenSubgoal") => Ok(Subgoal::Open),
        Some("PickupSubgoal") => Ok(Subgoal::Pickup),
        Some("DropSubgoal") => Ok(Subgoal::Drop),
        _ => Err(ParseError::UnknownSubgoal(line.to_string())),
    }
}

/// Subgoal lines of the final answer block, listed in execution order,
/// returned as a stack (top = last element).
pub fn parse_decompose(text: &str) -> Result<Vec<Subgoal>, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let block = final_block(text).ok_or(ParseError::NoBlock)?;
    let mut stack = block
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(parse_subgoal)
        .collect::<Result<Vec<_>, _>>()?;
    stack.reverse();
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_takes_the_last_state() {
        let text = "First ((1, 2), 3) then...\nThe agent's final state is: ((19, 18), 0)";
        assert_eq!(parse_predict(text).unwrap(), Pose::new(Coord::new(19, 18), Direction::East));
        assert_eq!(parse_predict("((1,1),7)"), Err(ParseError::BadDirection(7)));
        assert_eq!(parse_predict(""), Err(ParseError::Empty));
        assert_eq!(parse_predict("no idea"), Err(ParseError::NoFinalState));
    }

    #[test]
    fn plan_block_and_trailing_words() {
        use Action::*;
        assert_eq!(parse_plan("<START>\nleft\nForward\npick up\n<END>").unwrap(), vec![Left, Forward, Pickup]);
        assert_eq!(parse_plan("So the plan is: forward, forward, turn left, pick-up").unwrap(), vec![
            Forward, Forward, Left, Pickup
        ]);
        assert_eq!(parse_plan("<START>\n1. forward\n2. jump\n<END>"), Err(ParseError::UnknownAction("jump".into())));
        assert_eq!(parse_plan("I cannot help."), Err(ParseError::NoActions));
    }

    #[test]
    fn decompose_reads_the_final_block() {
        let text = "<START>\n(OpenSubgoal)\n<END>\nrevised:\n<START>\n(GoNextToSubgoal, (9, 7))\n(GoNextToSubgoal, (7, 11))\n(OpenSubgoal)\n(GoNextToSubgoal, (5, 16))\n<END>";
        let stack = parse_decompose(text).unwrap();
        assert_eq!(stack.len(), 4);
        assert_eq!(stack[3], Subgoal::go_to(Coord::new(9, 7)));
        assert_eq!(stack[0], Subgoal::go_to(Coord::new(5, 16)));
        assert_eq!(
            parse_decompose("<START>\n(JumpSubgoal)\n<END>"),
            Err(ParseError::UnknownSubgoal("(JumpSubgoal)".into()))
        );
        assert_eq!(parse_decompose("(OpenSubgoal)"), Err(ParseError::NoBlock));
        assert_eq!(parse_decompose("<START>\n- (GoNextToSubgoal,(1,2))\n<END>").unwrap(), vec![Subgoal::go_to(
            Coord::new(1, 2)
        )]);
    }
}
