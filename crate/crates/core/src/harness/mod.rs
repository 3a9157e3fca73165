//! Evaluation harness: prompt construction, response parsing, environment
//! backed scoring and metric aggregation.

pub mod answer;
pub mod eval;
pub mod parse;
pub mod prompt;
pub mod report;

use thiserror::Error;

use crate::dataset::{DatasetError, Row};
use crate::levels::{generate_ref, EnvInstance, LevelError, LevelRef};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("row {id}: regenerated environment differs from the stored one")]
    Mismatch { id: String },
    #[error("row {id}: the expert found no decomposition that needs no insertions")]
    NoAnticipatoryStack { id: String },
    #[error("unknown prompt strategy `{0}` (expected zero_shot, few_shot, cot or tot)")]
    UnknownStrategy(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Rebuilds the environment a row was generated from and checks that the
/// agent starts where the row says.
pub fn instance_for(row: &Row) -> Result<EnvInstance, HarnessError> {
    let level = LevelRef::parse(row.level_name())?;
    let instance = generate_ref(level, row.seed())?;
    let initial = match row {
        Row::Predict(r) => r.initial_state,
        Row::Plan(r) => r.initial_state,
        Row::Decompose(r) => r.initial_state,
    };
    if instance.state.agent.pose() != initial {
        return Err(HarnessError::Mismatch { id: row.id() });
    }
    Ok(instance)
}
