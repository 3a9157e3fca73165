//! Clients against a local HTTP server scripted with fixed responses.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use gridbench_client::audit::AuditEntry;
use gridbench_client::{build_model, complete_all, AuditLog, ClientError, Model, ModelConfig, Provider, Request, RetryPolicy};

struct Seen {
    headers: Vec<String>,
    body: String,
}

/// Serves `script` responses in order, one per connection, recording requests.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let req = read_request(&stream);
            log.lock().unwrap().push(req);
            respond(stream, status, &body);
        }
    });
    (format!("http://{addr}/v1/chat"), seen)
}

fn read_request(stream: &TcpStream) -> Seen {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut headers = Vec::new();
    let mut len = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end().to_string();
        if line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        headers.push(line);
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    Seen {
        headers,
        body: String::from_utf8(body).unwrap(),
    }
}

fn respond(mut stream: TcpStream, status: u16, body: &str) {
    let text = format!(
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(text.as_bytes()).unwrap();
}

fn openai_ok(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 3}
    })
    .to_string()
}

fn config(provider: Provider, endpoint: String, key_var: &str) -> ModelConfig {
    ModelConfig {
        provider,
        endpoint,
        model: "mock-model".into(),
        api_key_env: Some(key_var.into()),
        timeout_secs: 5,
        retry: RetryPolicy {
            max_attempts: 4,
            backoff_base_ms: 50,
            backoff_max_ms: 1000,
        },
        ..Default::default()
    }
}

fn request(prompt: &str) -> Request {
    Request {
        id: "GoTo/1".into(),
        prompt: prompt.into(),
        reference: None,
    }
}

#[test]
fn rate_limits_are_retried_with_backoff() {
    let script = vec![
        (429, "{\"error\":\"slow down\"}".to_string()),
        (429, "{\"error\":\"slow down\"}".to_string()),
        (200, openai_ok("The agent's final state is: ((1, 2), 0)")),
    ];
    let (url, seen) = serve(script);
    std::env::set_var("GRIDBENCH_MOCK_KEY_A", "test-key-a");
    let model = build_model(&config(Provider::OpenAi, url, "GRIDBENCH_MOCK_KEY_A")).unwrap();

    let start = Instant::now();
    let c = model.complete(&request("hello")).unwrap();
    assert_eq!(c.text, "The agent's final state is: ((1, 2), 0)");
    assert_eq!(c.attempts, 3);
    assert_eq!((c.input_tokens, c.output_tokens), (Some(11), Some(3)));
    // Two backoffs: 50ms then 100ms.
    assert!(start.elapsed() >= Duration::from_millis(150));

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen[0]
        .headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case("authorization: Bearer test-key-a")));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["messages"][0]["content"], "hello");
    assert_eq!(body["model"], "mock-model");
}

#[test]
fn auth_failures_are_not_retried() {
    let (url, seen) = serve(vec![(401, "{\"error\":\"bad key\"}".into()), (200, openai_ok("x"))]);
    std::env::set_var("GRIDBENCH_MOCK_KEY_B", "test-key-b");
    let model = build_model(&config(Provider::OpenAi, url, "GRIDBENCH_MOCK_KEY_B")).unwrap();
    let err = model.complete(&request("hi")).unwrap_err();
    assert!(matches!(err, ClientError::Auth { status: 401, .. }));
    assert!(!err.to_string().contains("test-key-b"));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let script = (0..4).map(|_| (503, "{}".to_string())).collect();
    let (url, _) = serve(script);
    std::env::set_var("GRIDBENCH_MOCK_KEY_C", "test-key-c");
    let model = build_model(&config(Provider::OpenAi, url, "GRIDBENCH_MOCK_KEY_C")).unwrap();
    let err = model.complete(&request("hi")).unwrap_err();
    assert!(matches!(err, ClientError::RetriesExhausted { attempts: 4, .. }));
}

#[test]
fn messages_wire_shape() {
    let body = serde_json::json!({
        "content": [{"type": "text", "text": "<START>\n(OpenSubgoal)\n<END>"}],
        "usage": {"input_tokens": 7, "output_tokens": 5}
    })
    .to_string();
    let (url, seen) = serve(vec![(200, body)]);
    std::env::set_var("GRIDBENCH_MOCK_KEY_D", "test-key-d");
    let mut cfg = config(Provider::Anthropic, url, "GRIDBENCH_MOCK_KEY_D");
    cfg.system_prompt = Some("be brief".into());
    let model = build_model(&cfg).unwrap();
    let c = model.complete(&request("hi")).unwrap();
    assert_eq!(c.text, "<START>\n(OpenSubgoal)\n<END>");
    assert_eq!(c.output_tokens, Some(5));
    let seen = seen.lock().unwrap();
    assert!(seen[0].headers.iter().any(|h| h.eq_ignore_ascii_case("x-api-key: test-key-d")));
    let sent: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(sent["system"], "be brief");
}

#[test]
fn audit_log_never_contains_the_key() {
    let (url, _) = serve(vec![(200, openai_ok("ok"))]);
    std::env::set_var("GRIDBENCH_MOCK_KEY_E", "test-key-e-should-not-leak");
    let model = build_model(&config(Provider::OpenAi, url, "GRIDBENCH_MOCK_KEY_E")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.jsonl");
    let log = AuditLog::open(&path).unwrap();
    let reqs = vec![request("prompt")];
    let out = complete_all(model.as_ref(), &reqs, 1, Some(&log), |_, _| {});
    assert!(out[0].is_ok());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(!text.contains("test-key-e-should-not-leak"));
    let entry: AuditEntry = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(entry.status, "ok");
}

/// Counts the peak number of concurrent calls.
struct Gauge {
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl Model for Gauge {
    fn name(&self) -> &str {
        "gauge"
    }
    fn complete(&self, req: &Request) -> Result<gridbench_client::Completion, ClientError> {
        let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(5));
        self.live.fetch_sub(1, Ordering::SeqCst);
        Ok(gridbench_client::Completion {
            text: req.id.clone(),
            attempts: 1,
            ..Default::default()
        })
    }
}

#[test]
fn concurrency_is_bounded_and_order_kept() {
    let gauge = Gauge {
        live: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
    };
    let reqs: Vec<Request> = (0..40)
        .map(|i| Request {
            id: i.to_string(),
            prompt: String::new(),
            reference: None,
        })
        .collect();
    let done = AtomicUsize::new(0);
    let out = complete_all(&gauge, &reqs, 3, None, |_, _| {
        done.fetch_add(1, Ordering::SeqCst);
    });
    assert_eq!(done.load(Ordering::SeqCst), 40);
    assert!(gauge.peak.load(Ordering::SeqCst) <= 3);
    let ids: Vec<String> = out.into_iter().map(|r| r.unwrap().text).collect();
    assert_eq!(ids, (0..40).map(|i| i.to_string()).collect::<Vec<_>>());
}
