use std::net::SocketAddr;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{
    dispatch, ScoreRequest, ScoreResponse, Scorer, ScorerInfo, TokenizeMode, TokenizeRequest,
    TokenizeResponse, WireError,
};
use crate::error::{Error, Result};

pub const DEFAULT_IN_FLIGHT: usize = 8;
const DEFAULT_ATTEMPTS: u32 = 3;
const DEFAULT_BACKOFF: Duration = Duration::from_millis(200);

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Deserialize)]
struct ErrorBody {
    error: WireError,
}

/// Client for a scorer served over HTTP+JSON.
///
/// Safe to share across threads; at most `in_flight` requests are open at
/// once. Transport failures are retried with exponential backoff; `/info` is
/// fetched once and cached.
pub struct HttpScorer {
    base: String,
    agent: ureq::Agent,
    info: OnceLock<ScorerInfo>,
    gate: Gate,
    attempts: u32,
    backoff: Duration,
}

impl HttpScorer {
    pub fn new(base: &str) -> Self {
        Self {
            base: base.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(10))
                .timeout(Duration::from_secs(300))
                .build(),
            info: OnceLock::new(),
            gate: Gate::new(DEFAULT_IN_FLIGHT),
            attempts: DEFAULT_ATTEMPTS,
            backoff: DEFAULT_BACKOFF,
        }
    }

    pub fn with_in_flight(mut self, n: usize) -> Self {
        self.gate = Gate::new(n);
        self
    }

    pub fn with_retry(mut self, attempts: u32, initial_backoff: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff = initial_backoff;
        self
    }

    fn call<T: DeserializeOwned>(
        &self,
        path: &str,
        body: Option<serde_json::Value>,
    ) -> Result<T> {
        let url = format!("{}{}", self.base, path);
        let _permit = self.gate.enter();
        let mut delay = self.backoff;
        let mut attempt = 1;
        loop {
            let outcome = match &body {
                Some(b) => self.agent.post(&url).send_json(b.clone()),
                None => self.agent.get(&url).call(),
            };
            match outcome {
                Ok(resp) => {
                    return resp
                        .into_json()
                        .map_err(|e| Error::protocol(format!("{url}: undecodable response: {e}")))
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    return Err(match serde_json::from_str::<ErrorBody>(&text) {
                        Ok(body) => body.error.into(),
                        Err(_) => Error::protocol(format!("{url}: HTTP {code}: {text}")),
                    });
                }
                Err(ureq::Error::Transport(t)) if attempt < self.attempts => {
                    log::warn!("{url}: {t}; retrying in {delay:?} (attempt {attempt})");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(ureq::Error::Transport(t)) => {
                    return Err(Error::Connection(format!("{url}: {t} (after {attempt} attempts)")))
                }
            }
        }
    }
}

impl Scorer for HttpScorer {
    fn info(&self) -> Result<ScorerInfo> {
        if let Some(info) = self.info.get() {
            return Ok(info.clone());
        }
        let info: ScorerInfo = self.call("/info", None)?;
        info.validate()?;
        Ok(self.info.get_or_init(|| info).clone())
    }

    fn tokenize(&self, text: &str, mode: TokenizeMode) -> Result<TokenizeResponse> {
        if text.is_empty() {
            return Err(Error::invalid("cannot tokenize empty text"));
        }
        let req = TokenizeRequest {
            text: text.to_string(),
            mode,
        };
        let resp: TokenizeResponse = self.call("/tokenize", Some(serde_json::to_value(req)?))?;
        if resp.token_ids.len() != resp.token_strings.len() {
            return Err(Error::protocol("token_ids and token_strings differ in length"));
        }
        Ok(resp)
    }

    fn fill(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        let vocab = self.info()?.vocab_size;
        request.validate(Some(vocab))?;
        let resp: ScoreResponse = self.call("/fill", Some(serde_json::to_value(request)?))?;
        resp.check(request)?;
        Ok(resp)
    }
}

/// Running HTTP front end for an in-process scorer.
pub struct HttpServer {
    server: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
    addr: SocketAddr,
}

/// Serves `/info`, `/tokenize` and `/fill` for `scorer` on `addr`
/// (use port 0 for an ephemeral port).
pub fn serve_http(scorer: Arc<dyn Scorer>, addr: &str, threads: usize) -> Result<HttpServer> {
    let server = tiny_http::Server::http(addr)
        .map_err(|e| Error::Connection(format!("cannot bind {addr}: {e}")))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Connection("server has no IP address".into()))?;
    let server = Arc::new(server);
    let workers = (0..threads.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let scorer = Arc::clone(&scorer);
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    handle(scorer.as_ref(), request);
                }
            })
        })
        .collect();
    Ok(HttpServer {
        server,
        workers,
        addr,
    })
}

impl HttpServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn join(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }

    pub fn shutdown(self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        self.join();
    }
}

fn handle(scorer: &dyn Scorer, mut request: tiny_http::Request) {
    let mut body = String::new();
    let read = request.as_reader().read_to_string(&mut body);
    let method = match (request.method().as_str(), request.url()) {
        ("GET", "/info") => Some("info"),
        ("POST", "/tokenize") => Some("tokenize"),
        ("POST", "/fill") => Some("fill"),
        _ => None,
    };
    let (status, payload) = match (method, read) {
        (None, _) => (
            404,
            serde_json::json!({ "error": WireError {
                kind: "not_found".into(),
                message: format!("no route for {} {}", request.method(), request.url()),
                tokens: None,
                max_input_tokens: None,
            }}),
        ),
        (Some(_), Err(e)) => error_payload(&Error::protocol(format!("unreadable body: {e}"))),
        (Some(method), Ok(_)) => {
            let params = if body.trim().is_empty() {
                Ok(serde_json::Value::Null)
            } else {
                serde_json::from_str(&body).map_err(|e| Error::protocol(e.to_string()))
            };
            match params.and_then(|p| dispatch(scorer, method, p)) {
                Ok(v) => (200, v),
                Err(e) => error_payload(&e),
            }
        }
    };
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
    let response = tiny_http::Response::from_string(payload.to_string())
        .with_status_code(status)
        .with_header(header);
    if let Err(e) = request.respond(response) {
        log::warn!("failed to send response: {e}");
    }
}

fn error_payload(e: &Error) -> (u16, serde_json::Value) {
    let wire = WireError::from(e);
    let status = match wire.kind.as_str() {
        "too_long" => 413,
        "internal" => 500,
        _ => 400,
    };
    (status, serde_json::json!({ "error": wire }))
}
