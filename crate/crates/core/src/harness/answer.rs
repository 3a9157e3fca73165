//! Canonical answer texts in the output protocols the prompts ask for. Used
//! for few-shot exemplars and for the scripted oracle model.

use crate::bot::{anticipatory_stack, Subgoal, Target};
use crate::dataset::Row;
use crate::grid::{Action, Pose};

use super::{instance_for, HarnessError};

pub const START: &str = "<START>";
pub const END: &str = "<END>";

pub fn predict_answer(pose: Pose) -> String {
    format!(
        "The agent's final state is: (({}, {}), {})",
        pose.position.x,
        pose.position.y,
        pose.direction.index()
    )
}

pub fn plan_answer(actions: &[Action]) -> String {
    let mut s = String::from(START);
    for a in actions {
        s.push('\n');
        s.push_str(a.name());
    }
    s.push('\n');
    s.push_str(END);
    s
}

/// One protocol line, e.g. `(GoNextToSubgoal, (9, 7))` or `(OpenSubgoal)`.
/// GoNextTo targets must already be resolved to coordinates.
pub fn subgoal_line(s: &Subgoal) -> Option<String> {
    match s {
        Subgoal::GoNextTo(Target::Pos(p)) => Some(format!("({}, ({}, {}))", s.name(), p.x, p.y)),
        Subgoal::GoNextTo(_) => None,
        _ => Some(format!("({})", s.name())),
    }
}

/// Lists a stack (top = last) in execution order between the protocol markers.
pub fn decompose_answer(stack: &[Subgoal]) -> Option<String> {
    let mut s = String::from(START);
    for sg in stack.iter().rev() {
        s.push('\n');
        s.push_str(&subgoal_line(sg)?);
    }
    s.push('\n');
    s.push_str(END);
    Some(s)
}

/// The expert's answer for a row: the stored target state, the stored expert
/// plan, or a decomposition that needs no insertions.
pub fn oracle_answer(row: &Row) -> Result<String, HarnessError> {
    Ok(match row {
        Row::Predict(r) => predict_answer(r.target_state),
        Row::Plan(r) => plan_answer(&r.expert_action_sequence),
        Row::Decompose(_) => {
            let inst = instance_for(row)?;
            anticipatory_stack(&inst.state, &inst.mission)
                .and_then(|stack| decompose_answer(&stack))
                .ok_or_else(|| HarnessError::NoAnticipatoryStack { id: row.id() })?
        }
    })
}
