//! Clients for external scorers speaking the [`wire`](super::wire) protocol.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::wire::{ScoreRequest, ScoreResponse};
use super::{ModelError, ScoreFn};
use crate::image::Image;

/// Environment variable that overrides the configured endpoint.
pub const ENDPOINT_ENV: &str = "WCAM_MODEL_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    /// Child process; requests on its stdin, responses on its stdout.
    Stdio,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub transport: Transport,
    /// Shell command line (stdio) or base URL (http).
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_batch: usize,
    /// Extra attempts after a timeout or transport failure.
    pub retries: usize,
    #[serde(default)]
    pub model_id: Option<String>,
}

impl AdapterConfig {
    pub fn new(transport: Transport, endpoint: impl Into<String>) -> Self {
        Self {
            transport,
            endpoint: endpoint.into(),
            timeout_ms: 30_000,
            max_batch: 64,
            retries: 2,
            model_id: None,
        }
    }

    /// Replaces the endpoint with `$WCAM_MODEL_ENDPOINT` when it is set.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.trim().is_empty() {
                self.endpoint = endpoint;
            }
        }
        self
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.timeout_ms == 0 || self.max_batch == 0 {
            return Err(ModelError::Input("timeout and max batch must be positive".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(ModelError::Input("empty endpoint".into()));
        }
        Ok(())
    }

    fn resolved_model_id(&self) -> String {
        self.model_id.clone().unwrap_or_else(|| match self.transport {
            Transport::Stdio => format!("stdio:{}", self.endpoint),
            Transport::Http => format!("http:{}", self.endpoint),
        })
    }
}

pub fn connect(config: &AdapterConfig) -> Result<Box<dyn ScoreFn>, ModelError> {
    Ok(match config.transport {
        Transport::Stdio => Box::new(StdioScorer::spawn(config.clone())?),
        Transport::Http => Box::new(HttpScorer::new(config.clone())?),
    })
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    /// Ids of requests given up on; late answers to them are dropped.
    abandoned: HashSet<String>,
}

/// Scorer running as a child process. One request is outstanding at a time;
/// concurrent callers queue on the pipe.
pub struct StdioScorer {
    config: AdapterConfig,
    io: Mutex<ChildIo>,
}

impl StdioScorer {
    pub fn spawn(config: AdapterConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&config.endpoint)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::Transport(format!("cannot start {:?}: {e}", config.endpoint)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            config,
            io: Mutex::new(ChildIo {
                child,
                stdin,
                lines: rx,
                next_id: 0,
                abandoned: HashSet::new(),
            }),
        })
    }

    fn attempt(&self, io: &mut ChildIo, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        let id = io.next_id.to_string();
        io.next_id += 1;
        let mut line = serde_json::to_string(&ScoreRequest::new(id.clone(), images))
            .map_err(|e| ModelError::Protocol(e.to_string()))?;
        line.push('\n');
        io.stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.flush())
            .map_err(|e| ModelError::Transport(format!("write to scorer: {e}")))?;

        let deadline = Instant::now() + Duration::from_millis(self.config.timeout_ms);
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match io.lines.recv_timeout(remaining) {
                Ok(Ok(text)) => {
                    if text.trim().is_empty() {
                        continue;
                    }
                    let resp = ScoreResponse::parse_any(&text)?;
                    if io.abandoned.remove(&resp.id) {
                        continue;
                    }
                    if resp.id != id {
                        return Err(ModelError::Protocol(format!(
                            "response id {:?} does not match request {id:?}",
                            resp.id
                        )));
                    }
                    return resp.into_scores();
                }
                Ok(Err(e)) => return Err(ModelError::Transport(format!("read from scorer: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    io.abandoned.insert(id);
                    return Err(ModelError::Timeout(self.config.timeout_ms));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ModelError::Transport("scorer closed its output".into()))
                }
            }
        }
    }
}

impl ScoreFn for StdioScorer {
    fn model_id(&self) -> String {
        self.config.resolved_model_id()
    }

    fn max_batch(&self) -> usize {
        self.config.max_batch
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        let mut io = self.io.lock().map_err(|_| ModelError::Transport("scorer lock poisoned".into()))?;
        with_retries(self.config.retries, || self.attempt(&mut io, images))
    }
}

impl Drop for StdioScorer {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

/// Scorer behind `POST {endpoint}/score`. Requests are independent, so
/// concurrent calls run in parallel.
pub struct HttpScorer {
    config: AdapterConfig,
    url: String,
    agent: ureq::Agent,
    next_id: AtomicU64,
}

impl HttpScorer {
    pub fn new(config: AdapterConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let base = config.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/score") {
            base.to_string()
        } else {
            format!("{base}/score")
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(Self {
            config,
            url,
            agent,
            next_id: AtomicU64::new(0),
        })
    }

    fn attempt(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst).to_string();
        let body = serde_json::to_string(&ScoreRequest::new(id.clone(), images))
            .map_err(|e| ModelError::Protocol(e.to_string()))?;
        let response = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(&body);
        let text = match response {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| ModelError::Transport(format!("read body: {e}")))?,
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                // error responses still follow the protocol when the server can manage it
                if let Ok(parsed) = ScoreResponse::parse_any(&text) {
                    if let Some(err) = parsed.error {
                        return Err(ModelError::Remote(format!("HTTP {code}: {err}")));
                    }
                }
                return Err(if code >= 500 {
                    ModelError::Transport(format!("HTTP {code}"))
                } else {
                    ModelError::Remote(format!("HTTP {code}: {text}"))
                });
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                return Err(if msg.contains("timed out") || msg.contains("WouldBlock") {
                    ModelError::Timeout(self.config.timeout_ms)
                } else {
                    ModelError::Transport(msg)
                });
            }
        };
        ScoreResponse::parse(&text, &id)
    }
}

impl ScoreFn for HttpScorer {
    fn model_id(&self) -> String {
        self.config.resolved_model_id()
    }

    fn max_batch(&self) -> usize {
        self.config.max_batch
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        with_retries(self.config.retries, || self.attempt(images))
    }
}

fn with_retries(retries: usize, mut f: impl FnMut() -> Result<Vec<f64>, ModelError>) -> Result<Vec<f64>, ModelError> {
    let mut attempt = 0;
    loop {
        match f() {
            Err(e) if e.is_transient() && attempt < retries => {
                log::warn!("scorer attempt {} failed: {e}; retrying", attempt + 1);
                attempt += 1;
            }
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn http_url_gets_score_path() {
        let s = HttpScorer::new(AdapterConfig::new(Transport::Http, "http://127.0.0.1:1/")).unwrap();
        assert_eq!(s.url, "http://127.0.0.1:1/score");
        let s = HttpScorer::new(AdapterConfig::new(Transport::Http, "http://h/score")).unwrap();
        assert_eq!(s.url, "http://h/score");
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = AdapterConfig::new(Transport::Stdio, "cat");
        assert_eq!((c.timeout_ms, c.max_batch, c.retries), (30_000, 64, 2));
        let bad = AdapterConfig {
            timeout_ms: 0,
            ..c.clone()
        };
        assert!(bad.validate().is_err());
        assert_eq!(c.resolved_model_id(), "stdio:cat");
    }

    #[test]
    fn retries_only_transient_failures() {
        let mut calls = 0;
        let r = with_retries(2, || {
            calls += 1;
            Err(ModelError::Timeout(1))
        });
        assert_eq!(r.unwrap_err(), ModelError::Timeout(1));
        assert_eq!(calls, 3);
        let mut calls = 0;
        let _ = with_retries(2, || {
            calls += 1;
            Err(ModelError::Protocol("x".into()))
        });
        assert_eq!(calls, 1);
    }

    #[test]
    fn unreachable_http_is_a_transport_error() {
        let cfg = AdapterConfig {
            retries: 0,
            timeout_ms: 2000,
            ..AdapterConfig::new(Transport::Http, "http://127.0.0.1:9")
        };
        let s = HttpScorer::new(cfg).unwrap();
        let err = s.score_batch(&[Image::filled(2, 2, 1, 0.0).unwrap()]).unwrap_err();
        assert!(err.is_transient(), "{err}");
    }
}
