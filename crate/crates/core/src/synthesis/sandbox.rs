//! Client for the script sandbox: a pool of worker processes spawned as
//! `<program> [args..] --timeout-ms N`, each speaking JSONL over
//! stdin/stdout.
//!
//! Requests are one line each:
//!
//! ```text
//! {"op": "check", "source": "...", "entrypoint": "get_x_field"}
//! {"op": "run", "source": "...", "entrypoint": "get_x_field", "docs": [{"doc_id": "a", "text": "..."}]}
//! ```
//!
//! A check is answered by one `{"ok": bool, "reason": ...}` line; a run by
//! one `{"doc_id", "values": [...]}` or `{"doc_id", "error": "..."}` line per
//! document, in request order.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::slots::Slots;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxDoc {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum SandboxRequest {
    Check {
        source: String,
        entrypoint: String,
    },
    Run {
        source: String,
        entrypoint: String,
        docs: Vec<SandboxDoc>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResponse {
    pub ok: bool,
    #[serde(default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResponse {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    Unavailable(String),
    #[error("sandbox worker failed: {0}")]
    Crashed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxConfig {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_timeout_ms() -> u64 {
    1000
}

fn default_workers() -> usize {
    2
}

/// Slack on top of the worker's own per-document timeout before the client
/// gives up on a worker.
const GRACE: Duration = Duration::from_millis(500);

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(config: &SandboxConfig) -> Result<Self, SandboxError> {
        let mut child = Command::new(&config.program)
            .args(&config.args)
            .arg("--timeout-ms")
            .arg(config.timeout_ms.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| SandboxError::Unavailable(format!("{}: {e}", config.program.display())))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    fn send(&mut self, request: &SandboxRequest) -> Result<(), SandboxError> {
        let mut line = serde_json::to_string(request).expect("plain enum");
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| SandboxError::Crashed(format!("write: {e}")))
    }

    fn recv<T: for<'de> Deserialize<'de>>(&self, wait: Duration) -> Result<T, SandboxError> {
        let line = match self.lines.recv_timeout(wait) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(SandboxError::Crashed(format!("read: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(SandboxError::Crashed("no response before deadline".into())),
            Err(RecvTimeoutError::Disconnected) => return Err(SandboxError::Crashed("worker exited".into())),
        };
        serde_json::from_str(&line).map_err(|e| SandboxError::Crashed(format!("malformed response {line:?}: {e}")))
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Worker pool with one request in flight per worker. A worker that fails
/// mid-request is killed and replaced on next use.
pub struct SandboxPool {
    config: SandboxConfig,
    idle: Mutex<Vec<Worker>>,
    slots: Slots,
}

impl std::fmt::Debug for SandboxPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SandboxPool").field("config", &self.config).finish_non_exhaustive()
    }
}

impl SandboxPool {
    pub fn new(config: SandboxConfig) -> Self {
        let slots = Slots::new(config.workers);
        SandboxPool {
            config,
            idle: Mutex::new(Vec::new()),
            slots,
        }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    fn with_worker<T>(&self, f: impl FnOnce(&mut Worker) -> Result<T, SandboxError>) -> Result<T, SandboxError> {
        let _slot = self.slots.acquire();
        let pooled = self.idle.lock().expect("pool lock").pop();
        let mut worker = match pooled {
            Some(w) => w,
            None => Worker::spawn(&self.config)?,
        };
        match f(&mut worker) {
            Ok(v) => {
                self.idle.lock().expect("pool lock").push(worker);
                Ok(v)
            }
            Err(e) => {
                log::warn!("{e}; respawning worker");
                worker.kill();
                Err(e)
            }
        }
    }

    fn deadline(&self, docs: usize) -> Duration {
        Duration::from_millis(self.config.timeout_ms) * (docs.max(1) as u32) + GRACE
    }

    pub fn check(&self, source: &str, entrypoint: &str) -> Result<CheckResponse, SandboxError> {
        let request = SandboxRequest::Check {
            source: source.to_string(),
            entrypoint: entrypoint.to_string(),
        };
        let wait = self.deadline(1);
        self.with_worker(|w| {
            w.send(&request)?;
            w.recv(wait)
        })
    }

    /// Run an extractor over documents. Each element is the document's
    /// values or its error message.
    pub fn run(
        &self,
        source: &str,
        entrypoint: &str,
        docs: &[SandboxDoc],
    ) -> Result<Vec<Result<Vec<String>, String>>, SandboxError> {
        let request = SandboxRequest::Run {
            source: source.to_string(),
            entrypoint: entrypoint.to_string(),
            docs: docs.to_vec(),
        };
        let per_doc = self.deadline(1);
        self.with_worker(|w| {
            w.send(&request)?;
            docs.iter()
                .map(|doc| {
                    let r: RunResponse = w.recv(per_doc)?;
                    if r.doc_id != doc.doc_id {
                        return Err(SandboxError::Crashed(format!(
                            "response for {:?} while expecting {:?}",
                            r.doc_id, doc.doc_id
                        )));
                    }
                    Ok(match (r.values, r.error) {
                        (_, Some(err)) => Err(err),
                        (Some(values), None) => Ok(values),
                        (None, None) => Ok(Vec::new()),
                    })
                })
                .collect()
        })
    }
}

impl Drop for SandboxPool {
    fn drop(&mut self) {
        if let Ok(mut idle) = self.idle.lock() {
            for w in idle.drain(..) {
                w.kill();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format() {
        let r = SandboxRequest::Run {
            source: "s".into(),
            entrypoint: "get_x_field".into(),
            docs: vec![SandboxDoc {
                doc_id: "a".into(),
                text: "t".into(),
            }],
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"op":"run","source":"s","entrypoint":"get_x_field","docs":[{"doc_id":"a","text":"t"}]}"#
        );
        let c: CheckResponse = serde_json::from_str(r#"{"ok": false, "reason": "syntax"}"#).unwrap();
        assert_eq!(c.reason.as_deref(), Some("syntax"));
        let e: RunResponse = serde_json::from_str(r#"{"doc_id": "a", "error": "KeyError"}"#).unwrap();
        assert_eq!(e.values, None);
    }

    #[test]
    fn missing_program_is_unavailable() {
        let pool = SandboxPool::new(SandboxConfig {
            program: "/nonexistent/worker".into(),
            args: Vec::new(),
            timeout_ms: 100,
            workers: 1,
        });
        assert!(matches!(pool.check("x", "y"), Err(SandboxError::Unavailable(_))));
    }
}
