//! Few-shot chat-model judge.
//!
//! The judge asks a chat-completion endpoint to rate a marked word on a
//! `1..m` scale. Replies are parsed for the first in-range integer after a
//! `score` marker; a reply without one triggers a single re-ask, and a
//! second failure is an abstention scored at the scale midpoint.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Label;
use crate::detectors::{Detector, RawScore};
use crate::error::{DetectorError, JudgeError};
use crate::providers::Context;
use crate::text::{Document, WordSpan};

/// Bumped whenever the prompt template changes.
pub const PROMPT_VERSION: &str = "judge-prompt/1";
pub const REASK_SUFFIX: &str = "Reply with only the integer score";
pub const ENV_ENDPOINT: &str = "JUDGE_ENDPOINT";
pub const ENV_API_KEY: &str = "JUDGE_API_KEY";

/// A worked example shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub context: String,
    pub target: String,
    pub label: Label,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub m: u32,
    pub exemplars: Vec<Exemplar>,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: u64,
    /// Words of context on each side of the target.
    pub window: usize,
    pub concurrency: usize,
    pub backoff_base_ms: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            m: 5,
            exemplars: Vec::new(),
            endpoint: None,
            model: "gpt-4".into(),
            temperature: 1.0,
            max_retries: 3,
            timeout_secs: 60,
            window: 50,
            concurrency: 4,
            backoff_base_ms: 500,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.m < 2 {
            return Err(JudgeError::Config(format!("scale top m must be at least 2, got {}", self.m)));
        }
        if self.exemplars.is_empty() {
            return Err(JudgeError::Config("at least one exemplar is required".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(JudgeError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.concurrency == 0 {
            return Err(JudgeError::Config("concurrency must be at least 1".into()));
        }
        Ok(())
    }

    fn exemplar_score(&self, label: Label) -> u32 {
        match label {
            Label::Error => self.m,
            Label::NonError => 1,
            Label::Plausible => self.m - 1,
            Label::Uncertain => self.m.div_ceil(2),
        }
    }
}

/// `left [[target]] right` with up to `window` words on each side.
pub fn context_window(words: &[String], index: usize, window: usize) -> String {
    let lo = index.saturating_sub(window);
    let hi = (index + 1 + window).min(words.len());
    let mut parts: Vec<String> = words[lo..index].to_vec();
    parts.push(format!("[[{}]]", words[index]));
    parts.extend_from_slice(&words[index + 1..hi]);
    parts.join(" ")
}

pub fn build_prompt(config: &JudgeConfig, span: &WordSpan, ctx: &Context) -> String {
    let m = config.m;
    let mut p = String::new();
    p.push_str("You are helping a philologist find copying errors in a transmitted premodern text.\n");
    p.push_str(&format!(
        "Rate how likely the word marked [[like this]] is to be an error introduced in transmission, \
on a scale from 1 to {m}: 1 means certainly correct and {m} means certainly an error.\n"
    ));
    p.push_str("Answer with a first line of the form `Score: <integer>`, then a short rationale.\n");
    for (k, ex) in config.exemplars.iter().enumerate() {
        p.push_str(&format!(
            "\nExample {}:\nContext: {}\nWord: {}\nScore: {}\nExpert note: {}\n",
            k + 1,
            ex.context,
            ex.target,
            config.exemplar_score(ex.label),
            ex.note
        ));
    }
    p.push_str(&format!(
        "\nNow assess this word.\nContext: {}\nWord: {}\n",
        context_window(&ctx.words, span.word_index, config.window),
        span.surface
    ));
    p
}

fn score_marker() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)score").expect("static regex"))
}

fn integers() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").expect("static regex"))
}

/// First integer in `1..=m` after the first `score` marker.
pub fn parse_score(reply: &str, m: u32) -> Option<u32> {
    let marker = score_marker().find(reply)?;
    integers()
        .find_iter(&reply[marker.end()..])
        .filter_map(|d| d.as_str().parse::<u32>().ok())
        .find(|v| (1..=m).contains(v))
}

/// A reply consisting of nothing but an in-range integer.
pub fn parse_bare(reply: &str, m: u32) -> Option<u32> {
    let t = reply.trim().trim_end_matches('.');
    t.parse::<u32>().ok().filter(|v| (1..=m).contains(v))
}

/// Maps `1..=m` onto `[0, 1]`.
pub fn rescale(score: u32, m: u32) -> f64 {
    (score - 1) as f64 / (m - 1) as f64
}

pub const ABSTAIN_SCORE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub raw_reply: String,
    pub score: Option<u32>,
    pub rationale: String,
    pub abstained: bool,
}

impl JudgeVerdict {
    pub fn rescaled(&self, m: u32) -> f64 {
        self.score.map_or(ABSTAIN_SCORE, |s| rescale(s, m))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub correlation_id: String,
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    /// Cache key: hash of everything except the correlation id.
    pub fn key(&self) -> String {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": self.messages,
        });
        hex::encode(Sha256::digest(body.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportFailure {
    Network(String),
    Status {
        status: u16,
        retry_after: Option<Duration>,
        body: String,
    },
    CacheMiss(String),
}

impl TransportFailure {
    fn retryable(&self) -> bool {
        match self {
            TransportFailure::Network(_) => true,
            TransportFailure::Status { status, .. } => *status == 429 || *status >= 500,
            TransportFailure::CacheMiss(_) => false,
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportFailure>;
}

/// OpenAI-compatible `chat/completions` endpoint.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
}

impl HttpTransport {
    /// Reads the endpoint (environment first, then config) and the API key
    /// from the environment. Fails before any network activity when either
    /// is missing.
    pub fn from_env(config: &JudgeConfig) -> Result<Self, JudgeError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .ok()
            .filter(|e| !e.is_empty())
            .or_else(|| config.endpoint.clone())
            .ok_or_else(|| JudgeError::Config(format!("no endpoint: set {ENV_ENDPOINT} or judge.endpoint")))?;
        let api_key = std::env::var(ENV_API_KEY)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| JudgeError::Config(format!("{ENV_API_KEY} is not set")))?;
        Self::new(&endpoint, &api_key, Duration::from_secs(config.timeout_secs))
    }

    pub fn new(endpoint: &str, api_key: &str, timeout: Duration) -> Result<Self, JudgeError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| JudgeError::Config(format!("building HTTP client: {e}")))?;
        Ok(HttpTransport {
            client,
            endpoint: endpoint.to_string(),
            api_key: api_key.to_string(),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportFailure> {
        let body = serde_json::json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .header("X-Correlation-Id", &request.correlation_id)
            .json(&body)
            .send()
            .map_err(|e| TransportFailure::Network(e.to_string()))?;
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp.text().map_err(|e| TransportFailure::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportFailure::Status {
                status: status.as_u16(),
                retry_after,
                body: text,
            });
        }
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| TransportFailure::Network(format!("malformed reply: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| TransportFailure::Network("reply has no choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AuditRecord {
    key: String,
    correlation_id: String,
    request: ChatRequest,
    reply: String,
}

/// Answers from a previously written audit log instead of the network.
pub struct ReplayTransport {
    replies: HashMap<String, String>,
}

impl ReplayTransport {
    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        let audit = |message: String| JudgeError::Audit {
            path: path.display().to_string(),
            message,
        };
        let f = File::open(path).map_err(|e| audit(e.to_string()))?;
        let mut replies = HashMap::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| audit(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AuditRecord =
                serde_json::from_str(&line).map_err(|e| audit(format!("line {}: {e}", n + 1)))?;
            replies.entry(rec.key).or_insert(rec.reply);
        }
        Ok(ReplayTransport { replies })
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportFailure> {
        let key = request.key();
        self.replies
            .get(&key)
            .cloned()
            .ok_or(TransportFailure::CacheMiss(key))
    }
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().expect("limiter poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter poisoned");
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter poisoned") += 1;
        self.0.cv.notify_one();
    }
}

pub struct Judge {
    config: JudgeConfig,
    transport: Arc<dyn Transport>,
    limiter: Limiter,
    audit: Option<(PathBuf, Mutex<File>)>,
}

impl Judge {
    pub fn new(config: JudgeConfig, transport: Arc<dyn Transport>) -> Result<Self, JudgeError> {
        config.validate()?;
        let limiter = Limiter::new(config.concurrency);
        Ok(Judge {
            config,
            transport,
            limiter,
            audit: None,
        })
    }

    /// Appends every exchange to a JSON-lines file usable by
    /// [`ReplayTransport`].
    pub fn with_audit_log(mut self, path: &Path) -> Result<Self, JudgeError> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| JudgeError::Audit {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        self.audit = Some((path.to_path_buf(), Mutex::new(f)));
        Ok(self)
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    fn exchange(&self, request: &ChatRequest) -> Result<String, JudgeError> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            let outcome = {
                let _slot = self.limiter.acquire();
                self.transport.send(request)
            };
            match outcome {
                Ok(reply) => {
                    self.record(request, &reply)?;
                    return Ok(reply);
                }
                Err(TransportFailure::CacheMiss(key)) => return Err(JudgeError::CacheMiss(key)),
                Err(f) if f.retryable() => {
                    let wait = match &f {
                        TransportFailure::Status {
                            retry_after: Some(d), ..
                        } => *d,
                        _ => Duration::from_millis(self.config.backoff_base_ms.saturating_mul(1 << attempt.min(16))),
                    };
                    last = format!("{f:?}");
                    tracing::warn!(id = %request.correlation_id, attempt, ?wait, "judge request failed; retrying");
                    if attempt + 1 < attempts && !wait.is_zero() {
                        std::thread::sleep(wait);
                    }
                }
                Err(TransportFailure::Status { status, body, .. }) => {
                    let excerpt: String = body.chars().take(200).collect();
                    return Err(JudgeError::Status { status, body: excerpt });
                }
                Err(other) => unreachable!("non-retryable failure {other:?}"),
            }
        }
        Err(JudgeError::Transport { attempts, message: last })
    }

    fn record(&self, request: &ChatRequest, reply: &str) -> Result<(), JudgeError> {
        let Some((path, file)) = &self.audit else {
            return Ok(());
        };
        let rec = AuditRecord {
            key: request.key(),
            correlation_id: request.correlation_id.clone(),
            request: request.clone(),
            reply: reply.to_string(),
        };
        let line = serde_json::to_string(&rec).expect("audit record serializes");
        let mut f = file.lock().expect("audit log poisoned");
        writeln!(f, "{line}")
            .and_then(|_| f.flush())
            .map_err(|e| JudgeError::Audit {
                path: path.display().to_string(),
                message: e.to_string(),
            })
    }

    pub fn judge(&self, span: &WordSpan, ctx: &Context) -> Result<JudgeVerdict, JudgeError> {
        let prompt = build_prompt(&self.config, span, ctx);
        let id = format!("{}:{}", ctx.doc_id, span.word_index);
        let mut request = ChatRequest {
            correlation_id: format!("{id}:0"),
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
        };
        let reply = self.exchange(&request)?;
        if let Some(s) = parse_score(&reply, self.config.m) {
            return Ok(verdict(reply, Some(s)));
        }
        request.correlation_id = format!("{id}:1");
        request.messages.push(ChatMessage {
            role: "assistant".into(),
            content: reply,
        });
        request.messages.push(ChatMessage {
            role: "user".into(),
            content: REASK_SUFFIX.into(),
        });
        let reply = self.exchange(&request)?;
        let m = self.config.m;
        let score = parse_score(&reply, m).or_else(|| parse_bare(&reply, m));
        Ok(verdict(reply, score))
    }
}

fn verdict(reply: String, score: Option<u32>) -> JudgeVerdict {
    let rationale = match score_marker().find(&reply) {
        Some(m) => {
            let line_end = reply[m.end()..].find('\n').map_or(reply.len(), |i| m.end() + i);
            format!("{} {}", reply[..m.start()].trim(), reply[line_end..].trim())
                .trim()
                .to_string()
        }
        None => reply.trim().to_string(),
    };
    JudgeVerdict {
        abstained: score.is_none(),
        raw_reply: reply,
        score,
        rationale,
    }
}

/// The judge as a word scorer.
pub struct LlmDetector {
    judge: Judge,
}

impl LlmDetector {
    pub fn new(judge: Judge) -> Self {
        LlmDetector { judge }
    }
}

impl Detector for LlmDetector {
    fn fingerprint(&self) -> String {
        let c = self.judge.config();
        format!(
            "llm[m={};model={};temperature={};window={};exemplars={};prompt={PROMPT_VERSION}]",
            c.m,
            c.model,
            c.temperature,
            c.window,
            c.exemplars.len()
        )
    }

    fn score_word(&self, _doc: &Document, ctx: &Context, span: &WordSpan) -> Result<RawScore, DetectorError> {
        let v = self.judge.judge(span, ctx)?;
        if v.abstained {
            tracing::warn!(doc = %ctx.doc_id, index = span.word_index, "judge abstained; scored at midpoint");
        }
        Ok(RawScore {
            score: v.rescaled(self.judge.config().m),
            best_alternative: None,
            abstained: v.abstained,
        })
    }
}
