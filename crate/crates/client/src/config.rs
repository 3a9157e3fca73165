//! Provider configuration, loaded from TOML. API keys are never stored here:
//! the config names the environment variable that holds the key.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    /// Chat-completions wire shape (`choices[0].message.content`), used by
    /// OpenAI and compatible hosts.
    OpenAi,
    /// Messages wire shape (`content[0].text`).
    Anthropic,
    /// Local stand-in that returns the reference answer attached to the request.
    Oracle,
    /// Local stand-in that returns empty text.
    Silent,
}

impl Provider {
    pub fn is_local(self) -> bool {
        matches!(self, Provider::Oracle | Provider::Silent)
    }
}

impl FromStr for Provider {
    type Err = ClientError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "openai" => Ok(Provider::OpenAi),
            "anthropic" => Ok(Provider::Anthropic),
            "oracle" => Ok(Provider::Oracle),
            "silent" => Ok(Provider::Silent),
            _ => Err(ClientError::Config(format!("unknown provider `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each further failure.
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            backoff_base_ms: 1000,
            backoff_max_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// Delay after failed attempt number `attempt` (1-based).
    pub fn backoff_ms(&self, attempt: u32) -> u64 {
        let factor = 1u64 << attempt.saturating_sub(1).min(30);
        self.backoff_base_ms.saturating_mul(factor).min(self.backoff_max_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub provider: Provider,
    /// Full URL of the completion endpoint. Unused by local providers.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    /// Maximum requests in flight at once.
    pub concurrency: usize,
    pub system_prompt: Option<String>,
    pub retry: RetryPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            provider: Provider::Oracle,
            endpoint: String::new(),
            model: "oracle".into(),
            api_key_env: None,
            temperature: 0.0,
            max_tokens: 4096,
            timeout_secs: 300,
            concurrency: 4,
            system_prompt: None,
            retry: RetryPolicy::default(),
        }
    }
}

impl ModelConfig {
    /// Config for one of the local stand-ins.
    pub fn local(provider: Provider) -> Self {
        let model = match provider {
            Provider::Silent => "silent",
            _ => "oracle",
        };
        ModelConfig {
            provider,
            model: model.into(),
            ..Default::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ClientError> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| ClientError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.concurrency == 0 {
            return Err(ClientError::Config("concurrency must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(ClientError::Config("retry.max_attempts must be at least 1".into()));
        }
        if !self.provider.is_local() && self.endpoint.is_empty() {
            return Err(ClientError::Config("remote providers need an endpoint".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let text = r#"
provider = "openai"
endpoint = "https://example.invalid/v1/chat/completions"
model = "some-model"
api_key_env = "EXAMPLE_API_KEY"
concurrency = 2

[retry]
max_attempts = 3
backoff_base_ms = 10
"#;
        let cfg = ModelConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.provider, Provider::OpenAi);
        assert_eq!(cfg.retry.max_attempts, 3);
        assert_eq!(cfg.retry.backoff_max_ms, 60_000);
        assert_eq!(cfg.timeout_secs, 300);
        assert!(ModelConfig::from_toml_str("provider = \"openai\"").is_err());
        assert!(ModelConfig::from_toml_str("api_key = \"sk-...\"").is_err());
    }

    #[test]
    fn backoff_doubles_up_to_the_cap() {
        let r = RetryPolicy {
            max_attempts: 9,
            backoff_base_ms: 100,
            backoff_max_ms: 1000,
        };
        let delays: Vec<u64> = (1..=6).map(|a| r.backoff_ms(a)).collect();
        assert_eq!(delays, [100, 200, 400, 800, 1000, 1000]);
    }
}
