//! Per-episode scoring against the environment and metric aggregation.

use serde::{Deserialize, Serialize};

use crate::bot::{default_step_budget, solve, Init, SolveOptions, Subgoal};
use crate::dataset::{DecomposeRow, PlanRow, PredictRow, Row, Task};
use crate::grid::{run_actions, Action, Pose};

use super::parse::{parse_response, ParseError, ParsedResponse};
use super::{instance_for, HarnessError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Outcome {
    Success,
    Failure,
    ParseFailure(ParseError),
    /// The model call itself failed; scored as a failure.
    ProviderError(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "task")]
pub enum Detail {
    Predict {
        target: Pose,
        predicted: Option<Pose>,
        position_match: bool,
        manhattan: Option<i32>,
    },
    Plan {
        expert_len: usize,
        plan_len: Option<usize>,
        final_pose: Option<Pose>,
        /// Expert length over plan length, successes only.
        efficiency: Option<f64>,
    },
    Decompose {
        /// help_count of the row: the assistance-curve limit.
        limit: usize,
        stack_len: Option<usize>,
        /// Subgoals the expert inserted on top of the model's stack.
        added: Option<usize>,
        halt: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub level_name: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub detail: Detail,
}

impl EpisodeRecord {
    pub fn success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    /// Decompose only: success with at most `k` insertions.
    pub fn success_within(&self, k: usize) -> bool {
        match &self.detail {
            Detail::Decompose { added: Some(a), .. } => self.success() && *a <= k,
            _ => false,
        }
    }

    pub fn limit(&self) -> Option<usize> {
        match &self.detail {
            Detail::Decompose { limit, .. } => Some(*limit),
            _ => None,
        }
    }

    /// Normalized area under this record's success-vs-allowance step curve
    /// over `k = 0..limit`; with a zero limit it is the zero-insertion success.
    pub fn aci(&self) -> Option<f64> {
        let limit = self.limit()?;
        if limit == 0 {
            return Some(f64::from(u8::from(self.success_within(0))));
        }
        let hits = (0..limit).filter(|&k| self.success_within(k)).count();
        Some(hits as f64 / limit as f64)
    }
}

fn failure_detail(row: &Row) -> Detail {
    match row {
        Row::Predict(r) => Detail::Predict {
            target: r.target_state,
            predicted: None,
            position_match: false,
            manhattan: None,
        },
        Row::Plan(r) => Detail::Plan {
            expert_len: r.expert_action_sequence.len(),
            plan_len: None,
            final_pose: None,
            efficiency: None,
        },
        Row::Decompose(r) => Detail::Decompose {
            limit: r.help_count,
            stack_len: None,
            added: None,
            halt: None,
        },
    }
}

fn record(row: &Row, outcome: Outcome, detail: Detail) -> EpisodeRecord {
    EpisodeRecord {
        id: row.id(),
        level_name: row.level_name().to_string(),
        seed: row.seed(),
        outcome,
        detail,
    }
}

/// Record for a row whose model call failed.
pub fn provider_error(row: &Row, msg: &str) -> EpisodeRecord {
    record(row, Outcome::ProviderError(msg.to_string()), failure_detail(row))
}

pub fn eval_predict(row: &PredictRow, predicted: Pose) -> (Outcome, Detail) {
    let t = row.target_state;
    let position_match = predicted.position == t.position;
    let ok = position_match && predicted.direction == t.direction;
    (
        if ok { Outcome::Success } else { Outcome::Failure },
        Detail::Predict {
            target: t,
            predicted: Some(predicted),
            position_match,
            manhattan: Some(predicted.position.manhattan(t.position)),
        },
    )
}

/// Replays the plan from the row's environment. Success iff the agent ends
/// next to the target within the step budget.
pub fn eval_plan(row: &PlanRow, actions: &[Action]) -> Result<(Outcome, Detail), HarnessError> {
    let inst = instance_for(&Row::Plan(row.clone()))?;
    let budget = default_step_budget(&inst.state) as usize;
    let end = run_actions(&inst.state, &actions[..actions.len().min(budget)]).agent.pose();
    let ok = actions.len() <= budget && end.position.manhattan(row.target_subgoal) == 1;
    let expert_len = row.expert_action_sequence.len();
    let efficiency = ok.then(|| {
        if actions.is_empty() {
            1.0
        } else {
            expert_len as f64 / actions.len() as f64
        }
    });
    Ok((
        if ok { Outcome::Success } else { Outcome::Failure },
        Detail::Plan {
            expert_len,
            plan_len: Some(actions.len()),
            final_pose: Some(end),
            efficiency,
        },
    ))
}

/// Runs the expert from the model's stack with unlimited insertions.
pub fn eval_decompose(row: &DecomposeRow, stack: &[Subgoal]) -> Result<(Outcome, Detail), HarnessError> {
    let inst = instance_for(&Row::Decompose(row.clone()))?;
    let trace = solve(&inst.state, &inst.mission, Init::Stack(stack.to_vec()), &SolveOptions::default());
    Ok((
        if trace.success { Outcome::Success } else { Outcome::Failure },
        Detail::Decompose {
            limit: row.help_count,
            stack_len: Some(stack.len()),
            added: Some(trace.added_subgoals),
            halt: Some(trace.halt.to_string()),
        },
    ))
}

/// Parses and scores one response.
pub fn score(row: &Row, response: &str) -> Result<EpisodeRecord, HarnessError> {
    let parsed = match parse_response(row.task(), response) {
        Ok(p) => p,
        Err(e) => return Ok(record(row, Outcome::ParseFailure(e), failure_detail(row))),
    };
    let (outcome, detail) = match (row, parsed) {
        (Row::Predict(r), ParsedResponse::Predict(p)) => eval_predict(r, p),
        (Row::Plan(r), ParsedResponse::Plan(a)) => eval_plan(r, &a)?,
        (Row::Decompose(r), ParsedResponse::Decompose(s)) => eval_decompose(r, &s)?,
        _ => unreachable!("responses are parsed for the row's own task"),
    };
    Ok(record(row, outcome, detail))
}

/// Bucket lower bounds for grouping Decompose rows by help_count.
pub const DEFAULT_SA_BUCKETS: [usize; 4] = [0, 3, 7, 10];

pub fn bucket_label(bounds: &[usize], v: usize) -> String {
    let i = bounds.iter().rposition(|&b| b <= v).unwrap_or(0);
    match bounds.get(i + 1) {
        Some(&next) => format!("{}-{}", bounds[i], next - 1),
        None => format!("{}+", bounds[i]),
    }
}

/// Scoring conventions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Distance charged to Predict parse failures in the Manhattan means;
    /// `None` leaves them out of the means.
    pub parse_failure_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub parse_failures: usize,
    pub provider_errors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_success_rate: Option<f64>,
    /// Mean over all scored episodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_manhattan: Option<f64>,
    /// Mean over scored episodes with a wrong position or direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_manhattan_incorrect: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aci: Option<f64>,
    /// Success rate with at most `k` insertions, for `k = 0..=max limit`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sr: Vec<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn aggregate(records: &[EpisodeRecord], cfg: &EvalConfig) -> Aggregate {
    let n = records.len();
    let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let successes = records.iter().filter(|r| r.success()).count();
    let mut agg = Aggregate {
        n,
        successes,
        success_rate: rate(successes),
        parse_failures: records
            .iter()
            .filter(|r| matches!(r.outcome, Outcome::ParseFailure(_)))
            .count(),
        provider_errors: records
            .iter()
            .filter(|r| matches!(r.outcome, Outcome::ProviderError(_)))
            .count(),
        ..Default::default()
    };
    let Some(first) = records.first() else {
        return agg;
    };
    match first.detail {
        Detail::Predict { .. } => {
            let mut all = Vec::new();
            let mut wrong = Vec::new();
            let mut pos = 0;
            for r in records {
                let Detail::Predict {
                    manhattan,
                    position_match,
                    ..
                } = r.detail
                else {
                    continue;
                };
                pos += usize::from(position_match);
                let d = match (manhattan, &r.outcome) {
                    (Some(d), _) => Some(f64::from(d)),
                    (None, Outcome::ParseFailure(_)) => cfg.parse_failure_distance,
                    (None, _) => None,
                };
                if let Some(d) = d {
                    all.push(d);
                    if !r.success() {
                        wrong.push(d);
                    }
                }
            }
            agg.position_success_rate = Some(rate(pos));
            agg.mean_manhattan = mean(&all);
            agg.mean_manhattan_incorrect = mean(&wrong);
        }
        Detail::Plan { .. } => {
            let eff: Vec<f64> = records
                .iter()
                .filter_map(|r| match r.detail {
                    Detail::Plan { efficiency, .. } => efficiency,
                    _ => None,
                })
                .collect();
            agg.mean_efficiency = mean(&eff);
        }
        Detail::Decompose { .. } => {
            let max_limit = records.iter().filter_map(EpisodeRecord::limit).max().unwrap_or(0);
            agg.cr = Some(rate(successes));
            agg.pr = Some(rate(records.iter().filter(|r| r.success_within(0)).count()));
            agg.sr = (0..=max_limit)
                .map(|k| rate(records.iter().filter(|r| r.success_within(k)).count()))
                .collect();
            let acis: Vec<f64> = records.iter().filter_map(EpisodeRecord::aci).collect();
            agg.aci = mean(&acis);
        }
    }
    agg
}

pub fn task_of(records: &[EpisodeRecord]) -> Option<Task> {
    records.first().map(|r| match r.detail {
        Detail::Predict { .. } => Task::Predict,
        Detail::Plan { .. } => Task::Plan,
        Detail::Decompose { .. } => Task::Decompose,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn dec(success: bool, added: usize, limit: usize) -> EpisodeRecord {
        EpisodeRecord {
            id: "x/0".into(),
            level_name: "x".into(),
            seed: 0,
            outcome: if success { Outcome::Success } else { Outcome::Failure },
            detail: Detail::Decompose {
                limit,
                stack_len: Some(1),
                added: Some(added),
                halt: None,
            },
        }
    }

    #[test]
    fn aci_step_integral() {
        let r = dec(true, 2, 4);
        assert_eq!(r.aci(), Some(0.5));
        let agg = aggregate(&[r], &EvalConfig::default());
        assert_eq!((agg.cr, agg.pr, agg.aci), (Some(1.0), Some(0.0), Some(0.5)));
        assert_eq!(agg.sr, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(dec(true, 0, 0).aci(), Some(1.0));
        assert_eq!(dec(true, 1, 0).aci(), Some(0.0));
        assert_eq!(dec(false, 0, 5).aci(), Some(0.0));
    }

    #[test]
    fn buckets() {
        let b = DEFAULT_SA_BUCKETS;
        assert_eq!(bucket_label(&b, 0), "0-2");
        assert_eq!(bucket_label(&b, 2), "0-2");
        assert_eq!(bucket_label(&b, 6), "3-6");
        assert_eq!(bucket_label(&b, 9), "7-9");
        assert_eq!(bucket_label(&b, 31), "10+");
    }

    #[test]
    fn predict_distance_and_direction() {
        use crate::grid::{Coord, Direction};
        let row = PredictRow {
            level_name: "x".into(),
            seed: 0,
            env_description: String::new(),
            initial_state: Pose::new(Coord::new(1, 1), Direction::East),
            action_sequence: vec![],
            target_state: Pose::new(Coord::new(19, 18), Direction::East),
        };
        let (o, d) = eval_predict(&row, Pose::new(Coord::new(20, 18), Direction::South));
        assert_eq!(o, Outcome::Failure);
        assert!(matches!(d, Detail::Predict { manhattan: Some(1), position_match: false, .. }));
        let (o, _) = eval_predict(&row, Pose::new(Coord::new(19, 18), Direction::South));
        assert_eq!(o, Outcome::Failure);
        let (o, _) = eval_predict(&row, row.target_state);
        assert_eq!(o, Outcome::Success);
    }
}
