//! Remote providers over a blocking HTTP agent, with retries.

use std::time::{Duration, Instant};

use serde_json::{json, Value};
use ureq::Agent;

use crate::config::{ModelConfig, Provider};
use crate::{ClientError, Completion, Model, Request};

const ANTHROPIC_VERSION: &str = "2023-06-01";
const MAX_ERROR_BODY: usize = 300;

pub struct HttpModel {
    cfg: ModelConfig,
    agent: Agent,
    /// Read from the environment once, held only in memory.
    key: Option<String>,
}

/// Why one attempt failed.
enum AttemptError {
    Retry { err: ClientError, retry_after: Option<u64> },
    Fatal(ClientError),
}

impl std::fmt::Debug for HttpModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpModel")
            .field("provider", &self.cfg.provider)
            .field("model", &self.cfg.model)
            .field("endpoint", &self.cfg.endpoint)
            .finish_non_exhaustive()
    }
}

impl HttpModel {
    pub fn new(cfg: ModelConfig) -> Result<Self, ClientError> {
        cfg.validate()?;
        let key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::MissingKey(var.clone()))?),
            None => None,
        };
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpModel { cfg, agent, key })
    }

    fn body(&self, prompt: &str) -> Value {
        let mut messages = Vec::new();
        let system = self.cfg.system_prompt.as_deref();
        match self.cfg.provider {
            Provider::Anthropic => {
                messages.push(json!({"role": "user", "content": prompt}));
                let mut b = json!({
                    "model": self.cfg.model,
                    "max_tokens": self.cfg.max_tokens,
                    "temperature": self.cfg.temperature,
                    "messages": messages,
                });
                if let Some(s) = system {
                    b["system"] = json!(s);
                }
                b
            }
            _ => {
                if let Some(s) = system {
                    messages.push(json!({"role": "system", "content": s}));
                }
                messages.push(json!({"role": "user", "content": prompt}));
                json!({
                    "model": self.cfg.model,
                    "max_tokens": self.cfg.max_tokens,
                    "temperature": self.cfg.temperature,
                    "messages": messages,
                })
            }
        }
    }

    fn extract(&self, v: &Value) -> Result<Completion, ClientError> {
        let (text, input, output) = match self.cfg.provider {
            Provider::Anthropic => (
                v["content"]
                    .as_array()
                    .map(|parts| {
                        parts
                            .iter()
                            .filter_map(|p| p["text"].as_str())
                            .collect::<Vec<_>>()
                            .join("")
                    }),
                v["usage"]["input_tokens"].as_u64(),
                v["usage"]["output_tokens"].as_u64(),
            ),
            _ => (
                v["choices"][0]["message"]["content"].as_str().map(str::to_string),
                v["usage"]["prompt_tokens"].as_u64(),
                v["usage"]["completion_tokens"].as_u64(),
            ),
        };
        let text = text.ok_or_else(|| ClientError::BadResponse("no completion text in the response".into()))?;
        Ok(Completion {
            text,
            input_tokens: input,
            output_tokens: output,
            ..Default::default()
        })
    }

    fn attempt(&self, prompt: &str) -> Result<Completion, AttemptError> {
        let mut req = self.agent.post(&self.cfg.endpoint).header("content-type", "application/json");
        if let Some(key) = &self.key {
            req = match self.cfg.provider {
                Provider::Anthropic => req
                    .header("x-api-key", key)
                    .header("anthropic-version", ANTHROPIC_VERSION),
                _ => req.header("authorization", &format!("Bearer {key}")),
            };
        }
        let mut resp = match req.send_json(self.body(prompt)) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Err(AttemptError::Retry {
                    err: ClientError::Timeout(self.cfg.timeout_secs),
                    retry_after: None,
                })
            }
            Err(e) => {
                return Err(AttemptError::Retry {
                    err: ClientError::Transport(e.to_string()),
                    retry_after: None,
                })
            }
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|h| h.to_str().ok())
            .and_then(|s| s.trim().parse::<u64>().ok());
        let body = match resp.body_mut().read_to_string() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(_)) => {
                return Err(AttemptError::Retry {
                    err: ClientError::Timeout(self.cfg.timeout_secs),
                    retry_after: None,
                })
            }
            Err(e) => {
                return Err(AttemptError::Retry {
                    err: ClientError::Transport(e.to_string()),
                    retry_after: None,
                })
            }
        };
        let snippet: String = body.chars().take(MAX_ERROR_BODY).collect();
        match status {
            200..=299 => {
                let v: Value =
                    serde_json::from_str(&body).map_err(|e| AttemptError::Fatal(ClientError::BadResponse(e.to_string())))?;
                self.extract(&v).map_err(AttemptError::Fatal)
            }
            401 | 403 => Err(AttemptError::Fatal(ClientError::Auth { status, body: snippet })),
            408 | 409 | 429 | 500..=599 => Err(AttemptError::Retry {
                err: ClientError::Http { status, body: snippet },
                retry_after,
            }),
            _ => Err(AttemptError::Fatal(ClientError::Http { status, body: snippet })),
        }
    }
}

impl Model for HttpModel {
    fn name(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, req: &Request) -> Result<Completion, ClientError> {
        let policy = &self.cfg.retry;
        let start = Instant::now();
        let mut errors = Vec::new();
        for attempt in 1..=policy.max_attempts {
            match self.attempt(&req.prompt) {
                Ok(mut c) => {
                    c.attempts = attempt;
                    c.latency_ms = start.elapsed().as_millis() as u64;
                    return Ok(c);
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retry { err, retry_after }) => {
                    log::warn!("{} attempt {attempt} for {}: {err}", self.cfg.model, req.id);
                    errors.push(err);
                    if attempt < policy.max_attempts {
                        let wait = retry_after
                            .map(|s| (s * 1000).min(policy.backoff_max_ms))
                            .unwrap_or_else(|| policy.backoff_ms(attempt));
                        std::thread::sleep(Duration::from_millis(wait));
                    }
                }
            }
        }
        if errors.iter().all(|e| matches!(e, ClientError::Timeout(_))) {
            return Err(ClientError::Timeout(self.cfg.timeout_secs));
        }
        Err(ClientError::RetriesExhausted {
            attempts: policy.max_attempts,
            last: errors.last().map(|e| e.to_string()).unwrap_or_default(),
        })
    }
}
