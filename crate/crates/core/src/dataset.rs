//! Dataset rows for the three tasks, built from expert episodes, and their
//! JSON-lines serialization.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bot::{solve, Init, SolveOptions};
use crate::format::{format_instance, FormatStyle};
use crate::grid::{run_actions, Action, Coord, Pose};
use crate::levels::{generate_ref, EnvInstance, LevelError, LevelRef};
use crate::mission::Instr;
use crate::rng::{self, PRNG_NAME};

pub const GENERATOR_VERSION: &str = concat!("gridbench ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {msg}")]
    Schema { path: PathBuf, row: usize, msg: String },
    #[error("{level} seed {seed}: the expert failed ({halt})")]
    ExpertFailed { level: String, seed: u64, halt: String },
    #[error("{0} is not a navigation level; plan rows need a red-ball target")]
    NotPlanLevel(String),
    #[error("unknown task `{0}` (expected predict, plan or decompose)")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Predict,
    Plan,
    Decompose,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Predict, Task::Plan, Task::Decompose];

    pub fn name(self) -> &'static str {
        match self {
            Task::Predict => "predict",
            Task::Plan => "plan",
            Task::Decompose => "decompose",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s.to_ascii_lowercase())
            .ok_or_else(|| DatasetError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRow {
    pub level_name: String,
    pub seed: u64,
    pub env_description: String,
    pub initial_state: Pose,
    pub action_sequence: Vec<Action>,
    pub target_state: Pose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRow {
    pub level_name: String,
    pub seed: u64,
    pub env_description: String,
    pub initial_state: Pose,
    /// Cell the plan must end next to.
    pub target_subgoal: Coord,
    /// Reference solution; any plan ending next to the target counts.
    pub expert_action_sequence: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeRow {
    pub level_name: String,
    pub seed: u64,
    pub env_description: String,
    pub initial_state: Pose,
    pub mission: String,
    /// Subgoals the expert inserts on top of its own translation of the mission.
    pub help_count: usize,
}

/// A row of any task. Serialized without a tag; each task lives in its own file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Row {
    Predict(PredictRow),
    Plan(PlanRow),
    Decompose(DecomposeRow),
}

impl Row {
    pub fn task(&self) -> Task {
        match self {
            Row::Predict(_) => Task::Predict,
            Row::Plan(_) => Task::Plan,
            Row::Decompose(_) => Task::Decompose,
        }
    }

    pub fn level_name(&self) -> &str {
        match self {
            Row::Predict(r) => &r.level_name,
            Row::Plan(r) => &r.level_name,
            Row::Decompose(r) => &r.level_name,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Row::Predict(r) => r.seed,
            Row::Plan(r) => r.seed,
            Row::Decompose(r) => r.seed,
        }
    }

    pub fn env_description(&self) -> &str {
        match self {
            Row::Predict(r) => &r.env_description,
            Row::Plan(r) => &r.env_description,
            Row::Decompose(r) => &r.env_description,
        }
    }

    /// Stable identifier within a dataset.
    pub fn id(&self) -> String {
        format!("{}/{}", self.level_name(), self.seed())
    }
}

/// How much of the expert trace a Predict row asks about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixPolicy {
    /// The whole trace with probability `full_prob`, otherwise a length drawn
    /// uniformly from `1..=len`.
    Mixed { full_prob: f64 },
    Full,
    /// A fixed length, capped at the trace length.
    Length(usize),
}

impl Default for PrefixPolicy {
    fn default() -> Self {
        PrefixPolicy::Mixed { full_prob: 0.2 }
    }
}

impl PrefixPolicy {
    /// Prefix length for a trace of `len` actions, drawn from the stream
    /// `prefix/<level>` keyed by the seed.
    pub fn length(self, level_name: &str, seed: u64, len: usize) -> usize {
        match self {
            PrefixPolicy::Full => len,
            PrefixPolicy::Length(n) => n.min(len),
            PrefixPolicy::Mixed { .. } if len == 0 => 0,
            PrefixPolicy::Mixed { full_prob } => {
                let mut r = rng::stream(&format!("prefix/{level_name}"), &[seed]);
                if r.random_bool(full_prob.clamp(0.0, 1.0)) {
                    len
                } else {
                    r.random_range(1..=len)
                }
            }
        }
    }
}

/// Parameters shared by every row of a generation run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenOptions {
    pub prefix: PrefixPolicy,
    pub style: FormatStyle,
}

fn expert(instance: &EnvInstance) -> Result<crate::bot::EpisodeTrace, DatasetError> {
    let trace = solve(&instance.state, &instance.mission, Init::Default, &SolveOptions::default());
    if trace.success {
        Ok(trace)
    } else {
        Err(DatasetError::ExpertFailed {
            level: instance.level_name(),
            seed: instance.seed,
            halt: trace.halt.to_string(),
        })
    }
}

pub fn predict_row(instance: &EnvInstance, opts: &GenOptions) -> Result<PredictRow, DatasetError> {
    let trace = expert(instance)?;
    let level_name = instance.level_name();
    let n = opts.prefix.length(&level_name, instance.seed, trace.actions.len());
    let actions = trace.actions[..n].to_vec();
    let target = run_actions(&instance.state, &actions).agent.pose();
    Ok(PredictRow {
        env_description: format_instance(instance, opts.style),
        level_name,
        seed: instance.seed,
        initial_state: instance.state.agent.pose(),
        action_sequence: actions,
        target_state: target,
    })
}

pub fn plan_row(instance: &EnvInstance, opts: &GenOptions) -> Result<PlanRow, DatasetError> {
    let target = match (&instance.level, instance.mission.clauses.as_slice()) {
        (LevelRef::Plan(_), [Instr::GoTo { target: desc }]) => {
            let matches = desc.find_matches(&instance.state, instance.state.agent.pose());
            match matches.as_slice() {
                [only] => *only,
                _ => return Err(DatasetError::NotPlanLevel(instance.level_name())),
            }
        }
        _ => return Err(DatasetError::NotPlanLevel(instance.level_name())),
    };
    let trace = expert(instance)?;
    Ok(PlanRow {
        env_description: format_instance(instance, opts.style),
        level_name: instance.level_name(),
        seed: instance.seed,
        initial_state: instance.state.agent.pose(),
        target_subgoal: target,
        expert_action_sequence: trace.actions,
    })
}

pub fn decompose_row(instance: &EnvInstance, opts: &GenOptions) -> Result<DecomposeRow, DatasetError> {
    let trace = expert(instance)?;
    Ok(DecomposeRow {
        env_description: format_instance(instance, opts.style),
        level_name: instance.level_name(),
        seed: instance.seed,
        initial_state: instance.state.agent.pose(),
        mission: instance.mission.render(),
        help_count: trace.added_subgoals,
    })
}

pub fn gen_row(task: Task, level: LevelRef, seed: u64, opts: &GenOptions) -> Result<Row, DatasetError> {
    let instance = generate_ref(level, seed)?;
    Ok(match task {
        Task::Predict => Row::Predict(predict_row(&instance, opts)?),
        Task::Plan => Row::Plan(plan_row(&instance, opts)?),
        Task::Decompose => Row::Decompose(decompose_row(&instance, opts)?),
    })
}

/// Rows for one level over a seed range, generated in parallel and returned in seed order.
pub fn gen_rows(task: Task, level: LevelRef, seeds: Range<u64>, opts: &GenOptions) -> Result<Vec<Row>, DatasetError> {
    if task == Task::Plan && !matches!(level, LevelRef::Plan(_)) {
        return Err(DatasetError::NotPlanLevel(level.env_name()));
    }
    seeds
        .into_par_iter()
        .map(|s| gen_row(task, level, s, opts))
        .collect()
}

pub fn file_name(task: Task, level: &LevelRef) -> String {
    format!("{}_{}.jsonl", task.name(), level.env_name())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one JSON object per line. An empty slice produces an empty file.
pub fn write_dataset<T: Serialize>(rows: &[T], path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for (i, row) in rows.iter().enumerate() {
        let line = serde_json::to_string(row).map_err(|e| DatasetError::Schema {
            path: path.to_path_buf(),
            row: i,
            msg: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads a JSON-lines file. Blank lines are skipped; row indices in errors
/// count from zero over non-blank lines.
pub fn read_dataset<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
            path: path.to_path_buf(),
            row: rows.len(),
            msg: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads rows of a known task.
pub fn read_rows(task: Task, path: &Path) -> Result<Vec<Row>, DatasetError> {
    Ok(match task {
        Task::Predict => read_dataset::<PredictRow>(path)?.into_iter().map(Row::Predict).collect(),
        Task::Plan => read_dataset::<PlanRow>(path)?.into_iter().map(Row::Plan).collect(),
        Task::Decompose => read_dataset::<DecomposeRow>(path)?.into_iter().map(Row::Decompose).collect(),
    })
}

/// Guesses the task of a dataset file from its first row's fields.
pub fn detect_task(path: &Path) -> Result<Task, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let first = BufReader::new(file)
        .lines()
        .map(|l| l.map_err(io_err(path)))
        .find(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .transpose()?;
    let Some(first) = first else {
        return Err(DatasetError::Schema {
            path: path.to_path_buf(),
            row: 0,
            msg: "empty dataset".into(),
        });
    };
    let v: serde_json::Value = serde_json::from_str(&first).map_err(|e| DatasetError::Schema {
        path: path.to_path_buf(),
        row: 0,
        msg: e.to_string(),
    })?;
    let has = |k: &str| v.get(k).is_some();
    if has("action_sequence") {
        Ok(Task::Predict)
    } else if has("expert_action_sequence") {
        Ok(Task::Plan)
    } else if has("help_count") {
        Ok(Task::Decompose)
    } else {
        Err(DatasetError::Schema {
            path: path.to_path_buf(),
            row: 0,
            msg: "cannot tell which task this row belongs to".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator_version: String,
    pub prng: String,
    pub task: Task,
    pub seeds: Range<u64>,
    pub options: GenOptions,
    /// Rows per file name.
    pub counts: BTreeMap<String, usize>,
    /// Decompose only: rows per help_count value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub help_count_histogram: BTreeMap<usize, usize>,
}

/// Generates and writes one file per level plus `manifest.json` into `dir`.
pub fn generate_dataset(
    task: Task,
    levels: &[LevelRef],
    seeds: Range<u64>,
    opts: &GenOptions,
    dir: &Path,
) -> Result<Manifest, DatasetError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = Manifest {
        generator_version: GENERATOR_VERSION.to_string(),
        prng: PRNG_NAME.to_string(),
        task,
        seeds: seeds.clone(),
        options: *opts,
        counts: BTreeMap::new(),
        help_count_histogram: BTreeMap::new(),
    };
    for &level in levels {
        let rows = gen_rows(task, level, seeds.clone(), opts)?;
        for row in &rows {
            if let Row::Decompose(r) = row {
                *manifest.help_count_histogram.entry(r.help_count).or_default() += 1;
            }
        }
        let name = file_name(task, &level);
        write_dataset(&rows, &dir.join(&name))?;
        manifest.counts.insert(name, rows.len());
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Direction;
    use crate::levels::{LevelId, PlanEnvSpec, PlanSize};

    #[test]
    fn prefix_lengths_stay_in_range() {
        let p = PrefixPolicy::default();
        let mut full = 0;
        for seed in 0..500 {
            let n = p.length("lvl", seed, 10);
            assert!((1..=10).contains(&n));
            full += usize::from(n == 10);
        }
        // 0.2 + 0.8 / 10 of the draws land on the full trace
        assert!((100..180).contains(&full), "{full}");
        assert_eq!(p.length("lvl", 0, 0), 0);
        assert_eq!(PrefixPolicy::Length(3).length("lvl", 0, 2), 2);
    }

    #[test]
    fn predict_rows_replay() {
        let opts = GenOptions::default();
        for seed in 0..5 {
            let inst = generate_ref(LevelRef::Bench(LevelId::GoTo), seed).unwrap();
            let row = predict_row(&inst, &opts).unwrap();
            let end = run_actions(&inst.state, &row.action_sequence).agent.pose();
            assert_eq!(end, row.target_state);
        }
        let inst = generate_ref(LevelRef::Bench(LevelId::GoToObj), 1).unwrap();
        let empty = predict_row(&inst, &GenOptions { prefix: PrefixPolicy::Length(0), ..opts }).unwrap();
        assert_eq!(empty.target_state, empty.initial_state);
    }

    #[test]
    fn plan_rows_need_navigation_levels() {
        let opts = GenOptions::default();
        assert!(matches!(
            gen_row(Task::Plan, LevelRef::Bench(LevelId::GoTo), 0, &opts),
            Err(DatasetError::NotPlanLevel(_))
        ));
        let spec = PlanEnvSpec::new(PlanSize::Medium, 10).unwrap();
        let Row::Plan(row) = gen_row(Task::Plan, LevelRef::Plan(spec), 3, &opts).unwrap() else {
            panic!("expected a plan row");
        };
        assert!(!row.expert_action_sequence.is_empty());
    }

    #[test]
    fn row_json_shape() {
        let row = PredictRow {
            level_name: "BabyAI-GoTo-v0".into(),
            seed: 7,
            env_description: "x".into(),
            initial_state: Pose::new(Coord::new(1, 2), Direction::North),
            action_sequence: vec![Action::Left, Action::Forward],
            target_state: Pose::new(Coord::new(0, 2), Direction::West),
        };
        let s = serde_json::to_string(&row).unwrap();
        assert_eq!(
            s,
            r#"{"level_name":"BabyAI-GoTo-v0","seed":7,"env_description":"x","initial_state":{"position":[1,2],"direction":3},"action_sequence":["left","forward"],"target_state":{"position":[0,2],"direction":2}}"#
        );
    }
}
