//! Logits bridge: newline-delimited JSON between the decoder and an
//! out-of-process policy.
//!
//! ```text
//! → {"id": 7, "conditioning": "cloud.ply", "prefix": [12, 1, 40]}
//! ← {"id": 7, "scores": [0.1, -3.2, null, ...]}
//! ```
//!
//! One response per request, in order. A `null` score stands for `-inf`,
//! since JSON has no infinities. Masks never cross the bridge.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Policy, PolicyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeRequest {
    pub id: u64,
    pub conditioning: String,
    pub prefix: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeResponse {
    pub id: u64,
    pub scores: Vec<Option<f64>>,
}

impl BridgeRequest {
    pub fn parse(line: &str) -> Result<Self, PolicyError> {
        serde_json::from_str(line).map_err(|e| PolicyError::Protocol(format!("bad request: {e}")))
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes") + "\n"
    }
}

impl BridgeResponse {
    pub fn from_scores(id: u64, scores: &[f64]) -> Result<Self, PolicyError> {
        let scores = scores
            .iter()
            .map(|&s| match s {
                f64::NEG_INFINITY => Ok(None),
                s if s.is_finite() => Ok(Some(s)),
                s => Err(PolicyError::Protocol(format!("score {s} cannot cross the bridge"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(BridgeResponse { id, scores })
    }

    /// Parses one response line and checks its id and width.
    pub fn parse(line: &str, id: u64, vocab_size: usize) -> Result<Vec<f64>, PolicyError> {
        let r: BridgeResponse = serde_json::from_str(line).map_err(|e| PolicyError::Protocol(format!("bad response: {e}")))?;
        if r.id != id {
            return Err(PolicyError::Protocol(format!("response id {} answers request {id}", r.id)));
        }
        if r.scores.len() != vocab_size {
            return Err(PolicyError::Protocol(format!("{} scores for a vocabulary of {vocab_size}", r.scores.len())));
        }
        Ok(r.scores.into_iter().map(|s| s.unwrap_or(f64::NEG_INFINITY)).collect())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes") + "\n"
    }
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

/// A policy served by a child process over the bridge. Calls are serialized.
pub struct BridgePolicy {
    vocab_size: usize,
    channel: Mutex<Channel>,
}

impl BridgePolicy {
    pub fn spawn(command: &[String], vocab_size: usize) -> Result<Self, PolicyError> {
        let (program, args) = command.split_first().ok_or_else(|| PolicyError::Protocol("empty bridge command".into()))?;
        let mut child = Command::new(program).args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        Ok(BridgePolicy { vocab_size, channel: Mutex::new(Channel { child, stdin, stdout, next_id: 0 }) })
    }
}

impl Policy for BridgePolicy {
    fn scores(&self, conditioning: &str, prefix: &[u32]) -> Result<Vec<f64>, PolicyError> {
        let mut ch = self.channel.lock().map_err(|_| PolicyError::Protocol("bridge poisoned".into()))?;
        let id = ch.next_id;
        ch.next_id += 1;
        let req = BridgeRequest { id, conditioning: conditioning.to_string(), prefix: prefix.to_vec() };
        ch.stdin.write_all(req.to_line().as_bytes())?;
        ch.stdin.flush()?;
        let mut line = String::new();
        if ch.stdout.read_line(&mut line)? == 0 {
            return Err(PolicyError::Closed);
        }
        BridgeResponse::parse(&line, id, self.vocab_size)
    }
}

impl Drop for BridgePolicy {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

/// Answers bridge requests from `input` with `policy` until end of input.
pub fn serve(policy: &dyn Policy, input: impl BufRead, mut output: impl Write) -> Result<u64, PolicyError> {
    let mut served = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req = BridgeRequest::parse(&line)?;
        let scores = policy.scores(&req.conditioning, &req.prefix)?;
        output.write_all(BridgeResponse::from_scores(req.id, &scores)?.to_line().as_bytes())?;
        output.flush()?;
        served += 1;
    }
    Ok(served)
}
