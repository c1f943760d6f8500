//! Line-delimited JSON framing: one request object per line on the child's
//! stdin, one response object per line on its stdout.
//!
//! ```text
//! -> {"id":1,"method":"fill","params":{"context":"…","num_masks":2,…}}
//! <- {"id":1,"result":{"positions":[…],"truncated":false}}
//! <- {"id":2,"error":{"kind":"protocol","message":"…"}}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::{
    dispatch, ScoreRequest, ScoreResponse, Scorer, ScorerInfo, TokenizeMode, TokenizeRequest,
    TokenizeResponse, WireError,
};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    id: u64,
    method: String,
    #[serde(default)]
    params: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct Reply {
    id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    result: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<WireError>,
}

/// Answers framed requests from `input` until EOF.
pub fn serve_stdio(scorer: &dyn Scorer, input: impl BufRead, mut output: impl Write) -> Result<()> {
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Envelope>(&line) {
            Ok(env) => match dispatch(scorer, &env.method, env.params) {
                Ok(v) => Reply { id: env.id, result: Some(v), error: None },
                Err(e) => Reply { id: env.id, result: None, error: Some(WireError::from(&e)) },
            },
            Err(e) => Reply {
                id: 0,
                result: None,
                error: Some(WireError::from(&Error::protocol(format!("bad frame: {e}")))),
            },
        };
        serde_json::to_writer(&mut output, &reply)?;
        output.write_all(b"\n").map_err(|e| Error::io("<stdout>", e))?;
        output.flush().map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Client for a scorer running as a child process on the stdio framing.
/// Requests are serialized over the single pipe.
pub struct StdioScorer {
    child: Mutex<Child>,
    pipe: Mutex<Pipe>,
    next_id: AtomicU64,
    info: OnceLock<ScorerInfo>,
}

impl StdioScorer {
    /// Launches `command` (whitespace-separated program and arguments).
    pub fn spawn(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::invalid("empty stdio scorer command"))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Connection(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child: Mutex::new(child),
            pipe: Mutex::new(Pipe { stdin, stdout }),
            next_id: AtomicU64::new(1),
            info: OnceLock::new(),
        })
    }

    fn call(&self, method: &str, params: serde_json::Value) -> Result<serde_json::Value> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let mut frame = serde_json::to_string(&Envelope {
            id,
            method: method.to_string(),
            params,
        })?;
        frame.push('\n');
        let mut pipe = self.pipe.lock().unwrap();
        let lost = |e: std::io::Error| Error::Connection(format!("stdio scorer: {e}"));
        pipe.stdin.write_all(frame.as_bytes()).map_err(lost)?;
        pipe.stdin.flush().map_err(lost)?;
        let mut line = String::new();
        if pipe.stdout.read_line(&mut line).map_err(lost)? == 0 {
            return Err(Error::Connection("stdio scorer closed its output".into()));
        }
        drop(pipe);
        let reply: Reply = serde_json::from_str(&line)
            .map_err(|e| Error::protocol(format!("bad reply frame: {e}")))?;
        if reply.id != id {
            return Err(Error::protocol(format!("reply id {} for request {id}", reply.id)));
        }
        match (reply.result, reply.error) {
            (_, Some(err)) => Err(err.into()),
            (Some(v), None) => Ok(v),
            (None, None) => Err(Error::protocol("reply carries neither result nor error")),
        }
    }
}

impl Drop for StdioScorer {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Scorer for StdioScorer {
    fn info(&self) -> Result<ScorerInfo> {
        if let Some(info) = self.info.get() {
            return Ok(info.clone());
        }
        let info: ScorerInfo = serde_json::from_value(self.call("info", serde_json::Value::Null)?)?;
        info.validate()?;
        Ok(self.info.get_or_init(|| info).clone())
    }

    fn tokenize(&self, text: &str, mode: TokenizeMode) -> Result<TokenizeResponse> {
        if text.is_empty() {
            return Err(Error::invalid("cannot tokenize empty text"));
        }
        let req = TokenizeRequest { text: text.to_string(), mode };
        let resp: TokenizeResponse = serde_json::from_value(self.call("tokenize", serde_json::to_value(req)?)?)?;
        if resp.token_ids.len() != resp.token_strings.len() {
            return Err(Error::protocol("token_ids and token_strings differ in length"));
        }
        Ok(resp)
    }

    fn fill(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        request.validate(Some(self.info()?.vocab_size))?;
        let resp: ScoreResponse = serde_json::from_value(self.call("fill", serde_json::to_value(request)?)?)?;
        resp.check(request)?;
        Ok(resp)
    }
}
