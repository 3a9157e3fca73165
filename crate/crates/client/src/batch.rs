//! Runs many requests against one model with a bound on requests in flight.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::audit::{AuditEntry, AuditLog};
use crate::{ClientError, Completion, Model, Request};

/// Completes every request using at most `concurrency` worker threads.
/// Results come back in request order. `on_done` is called from worker
/// threads as each request finishes, so callers can persist progress.
pub fn complete_all<F>(
    model: &dyn Model,
    requests: &[Request],
    concurrency: usize,
    audit: Option<&AuditLog>,
    on_done: F,
) -> Vec<Result<Completion, ClientError>>
where
    F: Fn(&Request, &Result<Completion, ClientError>) + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Completion, ClientError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();
    let workers = concurrency.max(1).min(requests.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let result = model.complete(req);
                if let Some(log) = audit {
                    if let Err(e) = log.record(&AuditEntry::new(model.name(), req, &result)) {
                        log::error!("audit log write failed: {e}");
                    }
                }
                on_done(req, &result);
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|p| p.into_inner())
                .expect("every request is completed")
        })
        .collect()
}
