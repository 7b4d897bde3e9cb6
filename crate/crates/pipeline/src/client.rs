//! Clients for the external services: JSON over HTTP POST, a content-addressed response
//! cache, bounded retries, and a replay mode over recorded transcripts.
//!
//! A transcript is a JSON-lines file `{role}.jsonl` whose lines are
//! `{"request": ..., "response": ...}`. Requests are matched by content, so key order
//! inside a request does not matter.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ClientConfig, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    DepthEstimator,
    Grounder,
    Captioner,
    Judge,
    LlmGenerator,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::DepthEstimator, Role::Grounder, Role::Captioner, Role::Judge, Role::LlmGenerator];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::DepthEstimator => "depth-estimator",
            Role::Grounder => "grounder",
            Role::Captioner => "captioner",
            Role::Judge => "judge",
            Role::LlmGenerator => "llm-generator",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("network: {0}")]
    Network(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Network(_) => true,
            TransportError::Status(s) => *s == 429 || *s >= 500,
        }
    }
}

/// Sends one request body and returns the response body.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, body: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError>;
}

/// Plain HTTP transport.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, body: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let resp = agent
            .post(url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => TransportError::Timeout,
                other => TransportError::Network(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError::Status(status));
        }
        resp.into_body().read_to_vec().map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Network(other.to_string()),
        })
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("stage disabled: no endpoint or fixtures configured for the {role} client")]
    Disabled { role: Role },
    #[error("{role} fixtures have no recorded response for request {key}")]
    FixtureMiss { role: Role, key: String },
    #[error("{role} request failed after {attempts} attempt(s): {last}")]
    Failed { role: Role, attempts: u32, last: TransportError },
    #[error("{role} returned an unusable response: {detail}")]
    BadResponse { role: Role, detail: String },
    #[error("{role} fixtures {path}: {detail}")]
    BadFixture { role: Role, path: String, detail: String },
}

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: Value,
    pub response: Value,
}

/// Cache and transcript key: SHA-256 over the role name and the request's canonical JSON
/// (object keys sorted).
pub fn request_key(role: Role, request: &Value) -> String {
    let mut h = Sha256::new();
    h.update(role.as_str().as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_vec(request).expect("JSON values serialize"));
    hex::encode(h.finalize())
}

/// Writes `bytes` to `path` through a temporary sibling and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

type FixtureIndex = Result<HashMap<String, Value>, ClientError>;

enum Mode {
    Disabled,
    Fixture { path: PathBuf, index: OnceLock<FixtureIndex> },
    Live { url: String, transport: Arc<dyn Transport> },
}

pub struct Client {
    role: Role,
    mode: Mode,
    cache_dir: Option<PathBuf>,
    cfg: ClientConfig,
    upstream_calls: AtomicU64,
}

fn load_transcript(role: Role, path: &Path) -> FixtureIndex {
    let bad = |detail: String| ClientError::BadFixture { role, path: path.display().to_string(), detail };
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(bad(e.to_string())),
    };
    let mut index = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Exchange = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        index.insert(request_key(role, &ex.request), ex.response);
    }
    Ok(index)
}

impl Client {
    pub fn new(role: Role, cfg: ClientConfig, cache_dir: Option<PathBuf>, transport: Arc<dyn Transport>) -> Self {
        let mode = match (&cfg.fixtures, &cfg.endpoint) {
            (Some(dir), _) => Mode::Fixture { path: dir.join(format!("{role}.jsonl")), index: OnceLock::new() },
            (None, Some(url)) => Mode::Live { url: url.clone(), transport },
            (None, None) => Mode::Disabled,
        };
        Client { role, mode, cache_dir, cfg, upstream_calls: AtomicU64::new(0) }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn is_enabled(&self) -> bool {
        !matches!(self.mode, Mode::Disabled)
    }

    /// Requests sent upstream (every attempt counts; cache and fixture hits do not).
    pub fn upstream_calls(&self) -> u64 {
        self.upstream_calls.load(Ordering::Relaxed)
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(self.role.as_str()).join(format!("{key}.json")))
    }

    pub fn call(&self, request: &Value) -> Result<Value, ClientError> {
        let key = request_key(self.role, request);
        match &self.mode {
            Mode::Disabled => Err(ClientError::Disabled { role: self.role }),
            Mode::Fixture { path, index } => {
                let index = index.get_or_init(|| load_transcript(self.role, path));
                match index {
                    Ok(map) => map.get(&key).cloned().ok_or(ClientError::FixtureMiss { role: self.role, key }),
                    Err(e) => Err(ClientError::BadFixture {
                        role: self.role,
                        path: path.display().to_string(),
                        detail: e.to_string(),
                    }),
                }
            }
            Mode::Live { url, transport } => {
                let cache = self.cache_path(&key);
                if let Some(p) = &cache {
                    if let Ok(bytes) = std::fs::read(p) {
                        if let Ok(ex) = serde_json::from_slice::<Exchange>(&bytes) {
                            return Ok(ex.response);
                        }
                    }
                }
                let response = self.send(url, transport.as_ref(), request)?;
                if let Some(p) = &cache {
                    let ex = Exchange { request: request.clone(), response: response.clone() };
                    // A failed cache write only costs a repeated call later.
                    let _ = write_atomic(p, &serde_json::to_vec(&ex).expect("JSON values serialize"));
                }
                Ok(response)
            }
        }
    }

    fn send(&self, url: &str, transport: &dyn Transport, request: &Value) -> Result<Value, ClientError> {
        let body = serde_json::to_vec(request).expect("JSON values serialize");
        let timeout = Duration::from_millis(self.cfg.timeout_ms);
        let mut delay = self.cfg.backoff_ms;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.upstream_calls.fetch_add(1, Ordering::Relaxed);
            match transport.post_json(url, &body, timeout) {
                Ok(bytes) => {
                    return serde_json::from_slice(&bytes).map_err(|e| ClientError::BadResponse {
                        role: self.role,
                        detail: e.to_string(),
                    })
                }
                Err(e) if e.retryable() && attempt < self.cfg.max_attempts => {
                    std::thread::sleep(Duration::from_millis(delay));
                    delay = (delay.saturating_mul(2)).min(self.cfg.max_backoff_ms);
                }
                Err(last) => return Err(ClientError::Failed { role: self.role, attempts: attempt, last }),
            }
        }
    }

    /// Typed call: serializes `request` and decodes the response.
    pub fn call_as<Req: Serialize, Resp: DeserializeOwned>(&self, request: &Req) -> Result<Resp, ClientError> {
        let req = serde_json::to_value(request).map_err(|e| ClientError::BadResponse {
            role: self.role,
            detail: format!("request does not serialize: {e}"),
        })?;
        let resp = self.call(&req)?;
        serde_json::from_value(resp).map_err(|e| ClientError::BadResponse { role: self.role, detail: e.to_string() })
    }

    /// Cached exchanges as a transcript, ordered by key.
    pub fn cached_exchanges(&self) -> Vec<Exchange> {
        let Some(dir) = self.cache_dir.as_ref().map(|d| d.join(self.role.as_str())) else {
            return Vec::new();
        };
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map(|rd| {
                rd.flatten()
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect()
            })
            .unwrap_or_default();
        files.sort();
        files
            .iter()
            .filter_map(|p| std::fs::read(p).ok())
            .filter_map(|b| serde_json::from_slice(&b).ok())
            .collect()
    }
}

/// Writes exchanges as a transcript file.
pub fn write_transcript(path: &Path, exchanges: &[Exchange]) -> std::io::Result<()> {
    let mut out = Vec::new();
    for ex in exchanges {
        serde_json::to_writer(&mut out, ex).expect("JSON values serialize");
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

/// One client per role.
pub struct Clients {
    clients: Vec<Client>,
}

impl Clients {
    /// `base` anchors a relative cache directory.
    pub fn from_config(cfg: &PipelineConfig, base: &Path) -> Self {
        Self::with_transport(cfg, base, Arc::new(HttpTransport))
    }

    pub fn with_transport(cfg: &PipelineConfig, base: &Path, transport: Arc<dyn Transport>) -> Self {
        let cache = if cfg.cache_dir.is_absolute() { cfg.cache_dir.clone() } else { base.join(&cfg.cache_dir) };
        let clients = Role::ALL
            .iter()
            .map(|r| Client::new(*r, cfg.client(*r), Some(cache.clone()), transport.clone()))
            .collect();
        Clients { clients }
    }

    pub fn get(&self, role: Role) -> &Client {
        &self.clients[Role::ALL.iter().position(|r| *r == role).expect("every role has a client")]
    }

    pub fn upstream_calls(&self) -> u64 {
        self.clients.iter().map(|c| c.upstream_calls()).sum()
    }
}
