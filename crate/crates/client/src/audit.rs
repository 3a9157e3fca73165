//! Append-only JSONL record of every model call. Prompts and responses are
//! stored as digests and lengths; credentials never appear.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{ClientError, Completion, Request};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: String,
    pub model: String,
    pub prompt_sha256: String,
    pub prompt_chars: usize,
    pub status: String,
    pub attempts: u32,
    pub latency_ms: u64,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
    pub response_chars: Option<usize>,
    pub response_sha256: Option<String>,
    pub error: Option<String>,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl AuditEntry {
    pub fn new(model: &str, req: &Request, result: &Result<Completion, ClientError>) -> Self {
        let mut e = AuditEntry {
            id: req.id.clone(),
            model: model.to_string(),
            prompt_sha256: sha256_hex(&req.prompt),
            prompt_chars: req.prompt.chars().count(),
            status: "ok".into(),
            attempts: 0,
            latency_ms: 0,
            input_tokens: None,
            output_tokens: None,
            response_chars: None,
            response_sha256: None,
            error: None,
        };
        match result {
            Ok(c) => {
                e.attempts = c.attempts;
                e.latency_ms = c.latency_ms;
                e.input_tokens = c.input_tokens;
                e.output_tokens = c.output_tokens;
                e.response_chars = Some(c.text.chars().count());
                e.response_sha256 = Some(sha256_hex(&c.text));
            }
            Err(err) => {
                e.status = "error".into();
                e.error = Some(err.to_string());
            }
        }
        e
    }
}

pub struct AuditLog {
    out: Mutex<BufWriter<File>>,
}

impl AuditLog {
    pub fn open(path: &Path) -> Result<Self, ClientError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn record(&self, entry: &AuditEntry) -> Result<(), ClientError> {
        let line = serde_json::to_string(entry).expect("audit entries serialize");
        let mut out = self.out.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(out, "{line}")?;
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_hold_digests_not_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let log = AuditLog::open(&path).unwrap();
        let req = Request {
            id: "x/1".into(),
            prompt: "secret prompt body".into(),
            reference: None,
        };
        let ok = Ok(Completion {
            text: "answer text".into(),
            attempts: 2,
            ..Default::default()
        });
        log.record(&AuditEntry::new("m", &req, &ok)).unwrap();
        log.record(&AuditEntry::new("m", &req, &Err(ClientError::Timeout(5)))).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(!text.contains("secret prompt body"));
        assert!(!text.contains("answer text"));
        let first: AuditEntry = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.attempts, 2);
        assert_eq!(first.prompt_sha256, sha256_hex("secret prompt body"));
    }
}
