//! The "reason & act" step: a remote chat-completion client plus
//! deterministic local stand-ins.
//!
//! Every backend receives a [`PolicyRequest`]. The remote backend only sends
//! the rendered `system`/`user` prompts over the wire; the stubs work from the
//! structured `offered` list, which carries exactly what the context mode
//! reveals, and from the evaluation-only `target` hint.

use std::collections::BTreeSet;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::presentation::OfferedAction;
use crate::seeding::{fnv1a, mix64};

pub const ENDPOINT_ENV: &str = "SEMCTX_LLM_ENDPOINT";
pub const TOKEN_ENV: &str = "SEMCTX_LLM_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseFormat {
    /// Free text ending in `Chosen Action: <label>`.
    ChosenAction,
    /// `{"tool_calls": [{"name": ..., "arguments": {...}}]}`
    ToolCalls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRequest {
    pub system: String,
    pub user: String,
    pub query: String,
    pub offered: Vec<OfferedAction>,
    pub format: ResponseFormat,
    /// Index into `offered` of the action an oracle would pick. Never sent remotely.
    pub target: Option<usize>,
    /// Extra entropy for the random stub (e.g. the trial seed).
    pub salt: u64,
}

/// Failure of a single wire exchange.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportFailure {
    /// Connection, timeout or non-success status; worth retrying.
    Network(String),
    /// The peer answered but the body was not JSON.
    Malformed { message: String, raw: String },
}

pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        token: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<Value, TransportFailure>;
}

/// Blocking HTTP transport.
#[derive(Debug, Clone, Default)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        token: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<Value, TransportFailure> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| TransportFailure::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportFailure::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportFailure::Network(format!("HTTP {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| TransportFailure::Malformed {
            message: e.to_string(),
            raw: text,
        })
    }
}

/// Refuses every exchange. Used to prove that a code path stays offline.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenyTransport;

impl Transport for DenyTransport {
    fn post_json(
        &self,
        url: &str,
        _token: Option<&str>,
        _body: &Value,
        _timeout: Duration,
    ) -> std::result::Result<Value, TransportFailure> {
        Err(TransportFailure::Network(format!("network disabled: refused connection to {url}")))
    }
}

/// POSTs `body`, retrying network failures up to `retries` extra times.
pub fn post_with_retries(
    transport: &dyn Transport,
    url: &str,
    token: Option<&str>,
    body: &Value,
    timeout: Duration,
    retries: u32,
) -> Result<Value> {
    let mut last = String::new();
    for attempt in 1..=retries + 1 {
        match transport.post_json(url, token, body, timeout) {
            Ok(v) => return Ok(v),
            Err(TransportFailure::Malformed { message, raw }) => return Err(Error::Parse { message, raw }),
            Err(TransportFailure::Network(msg)) => {
                last = msg;
                if attempt <= retries {
                    std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
                }
            }
        }
    }
    Err(Error::Transport {
        attempts: retries + 1,
        message: last,
    })
}

/// Counting semaphore bounding concurrent remote calls.
#[derive(Debug)]
struct InFlight {
    cap: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut used = self.used.lock().expect("in-flight lock");
        while *used >= self.cap {
            used = self.freed.wait(used).expect("in-flight lock");
        }
        *used += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().expect("in-flight lock");
        *used -= 1;
        self.0.freed.notify_one();
    }
}

fn default_temperature() -> f64 {
    0.5
}
fn default_max_tokens() -> u32 {
    500
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    3
}
fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteChatConfig {
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing)]
    pub token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

impl Default for RemoteChatConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            temperature: default_temperature(),
            max_output_tokens: default_max_tokens(),
            token: None,
            timeout_secs: default_timeout(),
            retries: default_retries(),
            max_in_flight: default_in_flight(),
        }
    }
}

impl RemoteChatConfig {
    /// Fills endpoint and token from the environment when not set explicitly.
    pub fn with_env(mut self) -> Self {
        if self.endpoint.is_empty() {
            if let Ok(v) = std::env::var(ENDPOINT_ENV) {
                self.endpoint = v;
            }
        }
        if self.token.is_none() {
            self.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err(Error::Configuration(format!(
                "remote backend needs an endpoint (config or {ENDPOINT_ENV}) and a model name"
            )));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct RemoteChat {
    config: RemoteChatConfig,
    transport: Arc<dyn Transport>,
    gate: Arc<InFlight>,
}

impl std::fmt::Debug for RemoteChat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteChat")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl RemoteChat {
    pub fn new(config: RemoteChatConfig) -> Result<Self> {
        Self::with_transport(config, Arc::new(HttpTransport::new()))
    }

    pub fn with_transport(config: RemoteChatConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            gate: Arc::new(InFlight::new(config.max_in_flight)),
            config,
            transport,
        })
    }

    pub fn config(&self) -> &RemoteChatConfig {
        &self.config
    }

    fn complete(&self, req: &PolicyRequest, transport: &dyn Transport) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "system": req.system,
            "user": req.user,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        });
        let _slot = self.gate.acquire();
        let resp = post_with_retries(
            transport,
            &self.config.endpoint,
            self.config.token.as_deref(),
            &body,
            Duration::from_secs(self.config.timeout_secs),
            self.config.retries,
        )?;
        resp.get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Parse {
                message: "response has no string field \"text\"".into(),
                raw: resp.to_string(),
            })
    }
}

#[derive(Debug, Clone)]
pub enum PolicyBackend {
    Remote(RemoteChat),
    /// Names the `target` action whenever it is offered.
    OracleStub,
    /// Uniform over the offered labels; a pure function of seed and request.
    RandomStub { seed: u64 },
    /// Largest content-word overlap between the query and each action's
    /// visible name and description; first offered wins ties.
    SemanticMatchStub,
}

impl PolicyBackend {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyBackend::Remote(_) => "remote",
            PolicyBackend::OracleStub => "oracle",
            PolicyBackend::RandomStub { .. } => "random",
            PolicyBackend::SemanticMatchStub => "match",
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, PolicyBackend::Remote(_))
    }

    pub fn complete(&self, req: &PolicyRequest) -> Result<String> {
        match self {
            PolicyBackend::Remote(remote) => remote.complete(req, remote.transport.as_ref()),
            _ => self.complete_with(req, &DenyTransport),
        }
    }

    /// Like [`complete`](Self::complete) but routes any wire traffic through `transport`.
    pub fn complete_with(&self, req: &PolicyRequest, transport: &dyn Transport) -> Result<String> {
        let pick = match self {
            PolicyBackend::Remote(remote) => return remote.complete(req, transport),
            PolicyBackend::OracleStub => req.target.filter(|i| *i < req.offered.len()),
            PolicyBackend::RandomStub { seed } => {
                if req.offered.is_empty() {
                    None
                } else {
                    let key = mix64(*seed ^ mix64(req.salt))
                        ^ mix64(fnv1a(req.system.as_bytes()))
                        ^ fnv1a(req.user.as_bytes()).rotate_left(17);
                    let mut rng = ChaCha8Rng::seed_from_u64(key);
                    Some(rng.random_range(0..req.offered.len()))
                }
            }
            PolicyBackend::SemanticMatchStub => best_overlap(&req.query, &req.offered),
        };
        Ok(render_response(req, pick, self.name()))
    }
}

fn render_response(req: &PolicyRequest, pick: Option<usize>, who: &str) -> String {
    let label = pick.map(|i| req.offered[i].label.as_str());
    match req.format {
        ResponseFormat::ChosenAction => match label {
            Some(l) => format!("Reasoning: {who} stub selection.\nChosen Action: {l}"),
            None => format!("Reasoning: {who} stub found nothing suitable.\nChosen Action: None"),
        },
        ResponseFormat::ToolCalls => {
            let calls: Vec<Value> = label
                .map(|l| json!({"name": l, "arguments": {}}))
                .into_iter()
                .collect();
            json!({ "tool_calls": calls }).to_string()
        }
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "can", "do", "does", "for", "from", "have", "has",
    "help", "how", "i", "in", "into", "is", "it", "its", "me", "my", "of", "on", "or", "our", "please",
    "s", "so", "that", "the", "their", "this", "to", "us", "was", "we", "what", "with", "you", "your",
];

/// Lower-cased alphanumeric words minus a small stopword list.
pub fn content_words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

pub fn overlap_score(query: &str, action: &OfferedAction) -> usize {
    let q = content_words(query);
    let mut visible = String::new();
    for part in [&action.name, &action.description].into_iter().flatten() {
        visible.push(' ');
        visible.push_str(part);
    }
    content_words(&visible).intersection(&q).count()
}

fn best_overlap(query: &str, offered: &[OfferedAction]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, action) in offered.iter().enumerate() {
        let s = overlap_score(query, action);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}
