//! JSON-over-HTTP POST with a retry budget, shared by the remote embedding
//! provider and the remote translator.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub timeout: Duration,
    /// Wait before the second attempt; doubles after each further failure.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            timeout: Duration::from_secs(60),
            backoff: Duration::from_millis(200),
        }
    }
}

pub fn agent(policy: &RetryPolicy) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(policy.timeout))
        .build()
        .into()
}

pub fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    body: &Req,
    policy: &RetryPolicy,
) -> Result<Resp> {
    let attempts = policy.attempts.max(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(policy.backoff * (1u32 << (attempt - 1).min(6)));
        }
        match agent
            .post(url)
            .send_json(body)
            .and_then(|mut r| r.body_mut().read_json::<Resp>())
        {
            Ok(r) => return Ok(r),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Transport {
        attempts,
        message: format!("{url}: {last}"),
    })
}

/// Run `f` over `items` with at most `max_in_flight` concurrent calls; results keep input order.
pub fn bounded_map<T: Sync, R: Send>(items: &[T], max_in_flight: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..max_in_flight.max(1).min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_map_keeps_order() {
        let items: Vec<u32> = (0..50).collect();
        assert_eq!(bounded_map(&items, 4, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(bounded_map(&Vec::<u32>::new(), 4, |x| *x).is_empty());
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let policy = RetryPolicy {
            attempts: 2,
            timeout: Duration::from_secs(2),
            backoff: Duration::from_millis(1),
        };
        // Bind then release a port so nothing listens on it.
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let url = format!("http://127.0.0.1:{port}/x");
        let r: Result<serde_json::Value> = post_json(&agent(&policy), &url, &serde_json::json!({}), &policy);
        assert!(matches!(r, Err(Error::Transport { attempts: 2, .. })));
    }
}
