//! Model clients: a uniform completion interface over remote providers and
//! local stand-ins, with retries, bounded concurrency and an audit log.
//!
//! API keys are read from the environment variable named in the config and
//! are never written to disk or to logs.

pub mod audit;
pub mod batch;
pub mod config;
pub mod http;

use thiserror::Error;

pub use audit::AuditLog;
pub use batch::complete_all;
pub use config::{ModelConfig, Provider, RetryPolicy};
pub use http::HttpModel;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("config: {0}")]
    Config(String),
    #[error("environment variable `{0}` is not set")]
    MissingKey(String),
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("request timed out after {0}s")]
    Timeout(u64),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("the oracle needs a reference answer for request `{0}`")]
    NoReference(String),
    #[error("audit log: {0}")]
    Audit(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub id: String,
    pub prompt: String,
    /// Reference answer, used only by the oracle stand-in.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub latency_ms: u64,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

pub trait Model: Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &Request) -> Result<Completion, ClientError>;
}

/// Answers with the reference attached to each request.
#[derive(Debug, Default)]
pub struct OracleModel;

impl Model for OracleModel {
    fn name(&self) -> &str {
        "oracle"
    }
    fn complete(&self, req: &Request) -> Result<Completion, ClientError> {
        let text = req.reference.clone().ok_or_else(|| ClientError::NoReference(req.id.clone()))?;
        Ok(Completion {
            text,
            attempts: 1,
            ..Default::default()
        })
    }
}

/// Answers every request with empty text.
#[derive(Debug, Default)]
pub struct SilentModel;

impl Model for SilentModel {
    fn name(&self) -> &str {
        "silent"
    }
    fn complete(&self, _req: &Request) -> Result<Completion, ClientError> {
        Ok(Completion {
            attempts: 1,
            ..Default::default()
        })
    }
}

pub fn build_model(cfg: &ModelConfig) -> Result<Box<dyn Model>, ClientError> {
    cfg.validate()?;
    Ok(match cfg.provider {
        Provider::Oracle => Box::new(OracleModel),
        Provider::Silent => Box::new(SilentModel),
        Provider::OpenAi | Provider::Anthropic => Box::new(HttpModel::new(cfg.clone())?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_models() {
        let req = Request {
            id: "a".into(),
            prompt: "p".into(),
            reference: Some("r".into()),
        };
        let oracle = build_model(&ModelConfig::local(Provider::Oracle)).unwrap();
        assert_eq!(oracle.complete(&req).unwrap().text, "r");
        let silent = build_model(&ModelConfig::local(Provider::Silent)).unwrap();
        assert_eq!(silent.complete(&req).unwrap().text, "");
        let bare = Request { reference: None, ..req };
        assert!(matches!(oracle.complete(&bare), Err(ClientError::NoReference(_))));
    }

    #[test]
    fn missing_key_is_reported_by_name() {
        let cfg = ModelConfig {
            provider: Provider::OpenAi,
            endpoint: "http://127.0.0.1:9/v1".into(),
            model: "m".into(),
            api_key_env: Some("GRIDBENCH_TEST_UNSET_KEY_VAR".into()),
            ..Default::default()
        };
        let err = build_model(&cfg).err().unwrap();
        assert_eq!(
            err.to_string(),
            "environment variable `GRIDBENCH_TEST_UNSET_KEY_VAR` is not set"
        );
    }
}
