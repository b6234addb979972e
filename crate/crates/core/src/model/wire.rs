//! Client side of the `isaac-score/1` protocol.
//!
//! Newline-delimited JSON over a child process's stdin/stdout. Both sides
//! first send `{"protocol":"isaac-score/1"}`. Each batch is a run of request
//! lines `{"id":..,"drug":..,"target":..}` terminated by a blank line; the
//! scorer answers with one `{"id":..,"score":..}` (or `{"id":..,"error":..}`)
//! line per request, in any order, and flushes.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::Value;

use super::{EndpointKind, ScoreItem, Scorer, ScoringEndpoint, DEFAULT_RETRIES, DEFAULT_TIMEOUT};
use crate::error::{Error, Result};

pub const PROTOCOL: &str = "isaac-score/1";
pub const HANDSHAKE: &str = r#"{"protocol":"isaac-score/1"}"#;

#[derive(Serialize)]
struct Request<'a> {
    id: &'a str,
    drug: &'a str,
    target: &'a str,
}

/// Failures worth a respawn-and-retry, as opposed to protocol violations.
enum Failure {
    Transport(String),
    Fatal(Error),
}

struct Running {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
}

impl Running {
    fn recv(&self, deadline: Instant) -> std::result::Result<String, Failure> {
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.lines.recv_timeout(wait) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Failure::Transport(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Failure::Transport("timed out".into())),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Failure::Transport("scorer closed its output".into()))
            }
        }
    }

    fn shutdown(&mut self) {
        drop(self.stdin.take());
        let until = Instant::now() + Duration::from_secs(2);
        while Instant::now() < until {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// External scorer process speaking `isaac-score/1`.
pub struct ProcessScorer {
    model: String,
    argv: Vec<String>,
    timeout: Duration,
    retries: usize,
    running: Option<Running>,
}

impl ProcessScorer {
    pub fn new(model: impl Into<String>, argv: Vec<String>) -> Result<Self> {
        if argv.is_empty() {
            return Err(Error::InvalidConfig("empty scorer command".into()));
        }
        Ok(Self {
            model: model.into(),
            argv,
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
            running: None,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn into_endpoint(self, batch_size: usize) -> Result<ScoringEndpoint> {
        let identity = self.model.clone();
        ScoringEndpoint::new(EndpointKind::ExternalProcess, identity, batch_size, Box::new(self))
    }

    fn fatal(&self, message: impl Into<String>) -> Failure {
        Failure::Fatal(Error::Protocol {
            model: self.model.clone(),
            message: message.into(),
        })
    }

    fn spawn(&self) -> std::result::Result<Running, Failure> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Failure::Transport(format!("cannot start `{}`: {e}", self.argv[0])))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut running = Running {
            child,
            stdin,
            lines: rx,
        };
        let deadline = Instant::now() + self.timeout;
        let sent = running
            .stdin
            .as_mut()
            .map(|w| writeln!(w, "{HANDSHAKE}").and_then(|_| w.flush()));
        if let Some(Err(e)) = sent {
            running.shutdown();
            return Err(Failure::Transport(format!("handshake write failed: {e}")));
        }
        let reply = loop {
            match running.recv(deadline) {
                Ok(line) if line.trim().is_empty() => continue,
                Ok(line) => break line,
                Err(f) => {
                    running.shutdown();
                    return Err(f);
                }
            }
        };
        let protocol = serde_json::from_str::<Value>(&reply)
            .ok()
            .and_then(|v| v.get("protocol").and_then(Value::as_str).map(str::to_owned));
        if protocol.as_deref() != Some(PROTOCOL) {
            running.shutdown();
            return Err(self.fatal(format!("bad handshake `{}`", reply.trim())));
        }
        Ok(running)
    }

    fn parse_response(&self, line: &str) -> std::result::Result<(String, f64), Failure> {
        let value = match serde_json::from_str::<Value>(line) {
            Ok(v) => v,
            // Non-JSON tokens such as NaN or Infinity: recover the id so the
            // error can name it.
            Err(_) => {
                let patched = line
                    .replace("-Infinity", "null")
                    .replace("Infinity", "null")
                    .replace("NaN", "null");
                match serde_json::from_str::<Value>(&patched) {
                    Ok(v) if v.get("id").is_some() => v,
                    _ => return Err(self.fatal(format!("malformed response line `{line}`"))),
                }
            }
        };
        let id = value
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| self.fatal(format!("response without string id: `{line}`")))?
            .to_string();
        if let Some(err) = value.get("error") {
            let message = err.as_str().map_or_else(|| err.to_string(), str::to_owned);
            return Err(Failure::Fatal(Error::ScorerReported {
                model: self.model.clone(),
                id,
                message,
            }));
        }
        match value.get("score") {
            Some(Value::Number(n)) => match n.as_f64() {
                Some(s) if s.is_finite() => Ok((id, s)),
                _ => Err(Failure::Fatal(Error::NonFiniteScore {
                    model: self.model.clone(),
                    id,
                })),
            },
            Some(Value::Null) => Err(Failure::Fatal(Error::NonFiniteScore {
                model: self.model.clone(),
                id,
            })),
            _ => Err(self.fatal(format!("response for `{id}` has no numeric score"))),
        }
    }

    fn attempt(&mut self, batch: &[ScoreItem]) -> std::result::Result<Vec<(String, f64)>, Failure> {
        if self.running.is_none() {
            self.running = Some(self.spawn()?);
        }
        let deadline = Instant::now() + self.timeout;
        let mut payload = String::new();
        for item in batch {
            let req = Request {
                id: &item.id,
                drug: &item.drug,
                target: &item.target,
            };
            payload.push_str(&serde_json::to_string(&req).expect("serializable"));
            payload.push('\n');
        }
        payload.push('\n');
        let running = self.running.as_mut().expect("spawned");
        let written = match running.stdin.as_mut() {
            Some(w) => w.write_all(payload.as_bytes()).and_then(|_| w.flush()),
            None => Err(std::io::Error::other("stdin closed")),
        };
        written.map_err(|e| Failure::Transport(format!("write failed: {e}")))?;

        let wanted: HashSet<&str> = batch.iter().map(|i| i.id.as_str()).collect();
        let mut out = Vec::with_capacity(batch.len());
        while out.len() < batch.len() {
            let line = self.running.as_ref().expect("spawned").recv(deadline)?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, score) = self.parse_response(&line)?;
            if !wanted.contains(id.as_str()) {
                return Err(self.fatal(format!("response for unknown id `{id}`")));
            }
            out.push((id, score));
        }
        Ok(out)
    }
}

impl Scorer for ProcessScorer {
    fn score(&mut self, batch: &[ScoreItem]) -> Result<Vec<(String, f64)>> {
        let mut last = String::new();
        for _ in 0..=self.retries {
            match self.attempt(batch) {
                Ok(scores) => return Ok(scores),
                Err(Failure::Fatal(e)) => {
                    if let Some(mut r) = self.running.take() {
                        r.shutdown();
                    }
                    return Err(e);
                }
                Err(Failure::Transport(message)) => {
                    if let Some(mut r) = self.running.take() {
                        r.shutdown();
                    }
                    last = message;
                }
            }
        }
        Err(Error::Transport {
            model: self.model.clone(),
            attempts: self.retries + 1,
            message: last,
        })
    }
}

impl Drop for ProcessScorer {
    fn drop(&mut self) {
        if let Some(mut r) = self.running.take() {
            r.shutdown();
        }
    }
}
