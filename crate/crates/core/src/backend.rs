//! Error type, retry loop and in-flight cap shared by the OCR and
//! vision-language adapters.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("{backend} unavailable after {attempts} attempt(s): {message}")]
    Unavailable {
        backend: String,
        attempts: u32,
        message: String,
    },
    #[error("{backend} protocol error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Protocol {
        backend: String,
        status: Option<u16>,
        message: String,
    },
}

impl BackendError {
    pub fn unavailable(backend: &str, message: impl Into<String>) -> Self {
        Self::Unavailable {
            backend: backend.to_string(),
            attempts: 1,
            message: message.into(),
        }
    }

    pub fn protocol(backend: &str, status: Option<u16>, message: impl Into<String>) -> Self {
        Self::Protocol {
            backend: backend.to_string(),
            status,
            message: message.into(),
        }
    }

    pub fn is_unavailable(&self) -> bool {
        matches!(self, Self::Unavailable { .. })
    }
}

/// Counting semaphore bounding concurrent requests to one backend.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightPermit<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut n = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InFlightPermit { limit: self }
    }
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut n = self.limit.current.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limit.freed.notify_one();
    }
}

/// Outcome of one request attempt.
pub enum Attempt<T> {
    Done(T),
    /// Transport failure (connect, timeout); worth retrying.
    Retry(String),
    Fail(BackendError),
}

/// Runs `attempt` up to `retries + 1` times with a short linear backoff.
pub fn with_retries<T>(
    backend: &str,
    retries: u32,
    backoff: Duration,
    mut attempt: impl FnMut() -> Attempt<T>,
) -> Result<T, BackendError> {
    let attempts = retries + 1;
    let mut last = String::new();
    for n in 1..=attempts {
        match attempt() {
            Attempt::Done(v) => return Ok(v),
            Attempt::Fail(e) => return Err(e),
            Attempt::Retry(msg) => {
                tracing::debug!(backend, attempt = n, error = %msg, "backend attempt failed");
                last = msg;
                if n < attempts {
                    std::thread::sleep(backoff * n);
                }
            }
        }
    }
    Err(BackendError::Unavailable {
        backend: backend.to_string(),
        attempts,
        message: last,
    })
}

/// POSTs via `send` with retries on transport errors. Non-2xx replies are
/// protocol errors carrying the status; the body is returned on success.
pub(crate) fn post_with_retries(
    backend: &str,
    retries: u32,
    send: impl Fn() -> reqwest::Result<reqwest::blocking::Response>,
) -> Result<Vec<u8>, BackendError> {
    with_retries(backend, retries, Duration::from_millis(50), || match send() {
        Err(e) => Attempt::Retry(e.to_string()),
        Ok(resp) => {
            let status = resp.status();
            match resp.bytes() {
                Err(e) => Attempt::Retry(e.to_string()),
                Ok(body) if status.is_success() => Attempt::Done(body.to_vec()),
                Ok(body) => Attempt::Fail(BackendError::protocol(
                    backend,
                    Some(status.as_u16()),
                    String::from_utf8_lossy(&body[..body.len().min(200)]).into_owned(),
                )),
            }
        }
    })
}

#[cfg(test)]
pub(crate) mod testserver {
    //! Minimal one-thread HTTP/1.1 server answering every request with a
    //! canned status and body.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    pub struct Canned {
        pub url: String,
        pub requests: Arc<Mutex<Vec<(String, Vec<u8>)>>>,
    }

    pub fn serve(status: u16, body: &'static str) -> Canned {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.lock().unwrap().push((request_line.trim().to_string(), buf));
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        Canned { url, requests }
    }

    /// A local address nothing listens on.
    pub fn dead_url() -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        format!("http://{addr}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn retries_then_reports_attempt_count() {
        let calls = AtomicUsize::new(0);
        let err = with_retries::<()>("ocr", 2, Duration::ZERO, || {
            calls.fetch_add(1, Ordering::SeqCst);
            Attempt::Retry("refused".into())
        })
        .unwrap_err();
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert!(matches!(err, BackendError::Unavailable { attempts: 3, .. }));
    }

    #[test]
    fn fatal_errors_are_not_retried() {
        let calls = AtomicUsize::new(0);
        let err = with_retries::<()>("vlm", 5, Duration::ZERO, || {
            calls.fetch_add(1, Ordering::SeqCst);
            Attempt::Fail(BackendError::protocol("vlm", Some(500), "boom"))
        })
        .unwrap_err();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(err.to_string(), "vlm protocol error (status 500): boom");
    }

    #[test]
    fn limit_caps_concurrency() {
        let limit = Arc::new(InFlightLimit::new(2));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (limit, peak) = (limit.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = limit.acquire();
                    peak.fetch_max(limit.in_flight(), Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(limit.in_flight(), 0);
    }
}
