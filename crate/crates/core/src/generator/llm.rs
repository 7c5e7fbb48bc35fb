//! Language-model transports and the retrying client built on them.
//!
//! Transports are interchangeable: [`HttpTransport`] talks to an
//! OpenAI-compatible chat endpoint, [`MockTransport`] answers
//! deterministically from a hash of the prompt, [`ReplayTransport`] serves
//! recorded transcripts, and [`RecordingTransport`] / [`RateLimited`] wrap any
//! other transport.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompts;
use super::{GeneratorError, PreferenceClause, PreferencePrompt, ReflectStyle};
use crate::dsl::RewardExpression;
use crate::par::stable_hash;
use crate::rmab::{FeatureSchema, UtilityFeatureDistribution};

/// Environment variable holding the API key for [`HttpTransport`].
pub const API_KEY_ENV: &str = "SCLM_API_KEY";

/// Attempts per request before giving up.
pub const DEFAULT_ATTEMPTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("http: {0}")]
    Http(String),
    #[error("no recorded transcript for prompt (hash {0})")]
    MissingTranscript(String),
    #[error("malformed response: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

/// One request/response pair as persisted in transcript files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub prompt_sha256: String,
    pub request: ChatRequest,
    pub response: String,
}

impl TranscriptRecord {
    pub fn new(request: ChatRequest, response: String) -> Self {
        Self { prompt_sha256: crate::datagen::sha256_hex(request.prompt.as_bytes()), request, response }
    }
}

pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// OpenAI-compatible chat-completions client.
pub struct HttpTransport {
    endpoint: String,
    #[cfg_attr(not(feature = "http"), allow(dead_code))]
    api_key: Option<String>,
    #[cfg(feature = "http")]
    agent: ureq::Agent,
}

impl HttpTransport {
    /// Reads the API key from [`API_KEY_ENV`] if set.
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        #[cfg(not(feature = "http"))]
        let _ = timeout;
        Self {
            endpoint: endpoint.to_string(),
            api_key,
            #[cfg(feature = "http")]
            agent: ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Transport for HttpTransport {
    #[cfg(feature = "http")]
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut body = serde_json::json!({
            "messages": [{"role": "user", "content": request.prompt}],
        });
        if let Some(m) = &request.model {
            body["model"] = m.clone().into();
        }
        if let Some(t) = request.temperature {
            body["temperature"] = t.into();
        }
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| TransportError::Http(e.to_string()))?;
        let value: serde_json::Value =
            resp.body_mut().read_json().map_err(|e| TransportError::Format(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::Format("missing choices[0].message.content".into()))
    }

    #[cfg(not(feature = "http"))]
    fn complete(&self, _request: &ChatRequest) -> Result<String, TransportError> {
        Err(TransportError::Unavailable("built without the `http` feature".into()))
    }
}

/// Offline stand-in that answers every prompt deterministically.
///
/// Reflection prompts get a function number, rating prompts a 1-5 rating and
/// anything else a small reward expression, each chosen by hashing the prompt.
#[derive(Debug, Clone, Default)]
pub struct MockTransport {
    salt: u64,
}

impl MockTransport {
    pub fn new(salt: u64) -> Self {
        Self { salt }
    }
}

fn number_after(text: &str, marker: &str) -> Option<usize> {
    let start = text.find(marker)? + marker.len();
    let digits: String = text[start..].trim_start().chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

impl Transport for MockTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let h = stable_hash(request.prompt.as_bytes()) ^ self.salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let text = &request.prompt;
        if text.contains(prompts::CHOICE_MARKER) {
            let n = text.matches("Function Number ").count().max(1) as u64;
            return Ok(format!("{} {}", prompts::CHOICE_MARKER, h % n));
        }
        if text.contains(prompts::RATING_MARKER) {
            return Ok(format!("rating: {}", 1 + h % 5));
        }
        let n = number_after(text, "(length ").unwrap_or(0) as u64;
        if n == 0 {
            return Ok("$$$ state $$$".into());
        }
        Ok(format!("$$$ state + state * agent_feats[{}] $$$", h % n))
    }
}

/// Serves responses from recorded transcripts, matched on the exact prompt.
/// Repeated requests walk through the recorded responses for that prompt and
/// then keep returning the last one.
#[derive(Debug, Default)]
pub struct ReplayTransport {
    by_prompt: Mutex<HashMap<String, (Vec<String>, usize)>>,
}

impl ReplayTransport {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        let mut map: HashMap<String, (Vec<String>, usize)> = HashMap::new();
        for r in records {
            map.entry(r.request.prompt).or_default().0.push(r.response);
        }
        Self { by_prompt: Mutex::new(map) }
    }

    pub fn load(path: &Path) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path).map_err(|e| TransportError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::from_records(parse_transcripts(&text)?))
    }

    pub fn len(&self) -> usize {
        self.by_prompt.lock().expect("replay lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn parse_transcripts(text: &str) -> Result<Vec<TranscriptRecord>, TransportError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| TransportError::Format(format!("transcript line {}: {e}", i + 1))))
        .collect()
}

impl Transport for ReplayTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut map = self.by_prompt.lock().expect("replay lock");
        let Some((responses, next)) = map.get_mut(&request.prompt) else {
            return Err(TransportError::MissingTranscript(crate::datagen::sha256_hex(request.prompt.as_bytes())));
        };
        let i = (*next).min(responses.len() - 1);
        *next += 1;
        Ok(responses[i].clone())
    }
}

/// Persists every exchange of the wrapped transport, in memory and
/// optionally appended to a JSON-lines file.
pub struct RecordingTransport<T> {
    inner: T,
    records: Mutex<Vec<TranscriptRecord>>,
    path: Option<PathBuf>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, path: Option<PathBuf>) -> Self {
        Self { inner, records: Mutex::new(Vec::new()), path }
    }

    pub fn records(&self) -> Vec<TranscriptRecord> {
        self.records.lock().expect("recording lock").clone()
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let response = self.inner.complete(request)?;
        let record = TranscriptRecord::new(request.clone(), response.clone());
        let mut records = self.records.lock().expect("recording lock");
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&record).map_err(|e| TransportError::Format(e.to_string()))?;
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| TransportError::Io(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| TransportError::Io(e.to_string()))?;
        }
        records.push(record);
        Ok(response)
    }
}

/// Enforces a minimum spacing between requests to the wrapped transport.
pub struct RateLimited<T> {
    inner: T,
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl<T: Transport> RateLimited<T> {
    pub fn per_minute(inner: T, requests_per_minute: f64) -> Self {
        let min_interval = if requests_per_minute > 0.0 {
            Duration::from_secs_f64(60.0 / requests_per_minute)
        } else {
            Duration::ZERO
        };
        Self { inner, min_interval, last: Mutex::new(None) }
    }
}

impl<T: Transport> Transport for RateLimited<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        {
            let mut last = self.last.lock().expect("rate lock");
            if let Some(prev) = *last {
                let wait = self.min_interval.saturating_sub(prev.elapsed());
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
            *last = Some(Instant::now());
        }
        self.inner.complete(request)
    }
}

impl Transport for Arc<dyn Transport> {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        (**self).complete(request)
    }
}

/// Text between the first pair of `$$$` delimiters, trimmed.
pub fn extract_code(text: &str) -> Option<&str> {
    let start = text.find("$$$")? + 3;
    let len = text[start..].find("$$$")?;
    let code = text[start..start + len].trim().trim_matches(|c| c == '\'' || c == '`').trim();
    (!code.is_empty()).then_some(code)
}

/// Function number from `The best reward function is at number: k`
/// (brackets around `k` allowed); must be `< n`.
pub fn parse_choice(text: &str, n: usize) -> Option<usize> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find("number:")? + "number:".len();
    let rest = lower[start..].trim_start().trim_start_matches('[');
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok().filter(|&k| k < n)
}

/// Rating in `1..=5` from `rating: k`, or from a bare integer reply.
pub fn parse_rating(text: &str) -> Option<u8> {
    let lower = text.to_ascii_lowercase();
    let rest = match lower.find("rating:") {
        Some(i) => &lower[i + "rating:".len()..],
        None => lower.as_str(),
    };
    let rest = rest.trim_start().trim_start_matches('[');
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    let tail = rest[digits.len()..].trim_start_matches(']').trim();
    if lower.find("rating:").is_none() && !tail.is_empty() {
        return None;
    }
    digits.parse::<u8>().ok().filter(|r| (1..=5).contains(r))
}

/// A transport plus retry policy and request parameters.
#[derive(Clone)]
pub struct LlmClient {
    transport: Arc<dyn Transport>,
    pub attempts: usize,
    pub model: Option<String>,
    pub temperature: Option<f64>,
}

impl LlmClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport, attempts: DEFAULT_ATTEMPTS, model: None, temperature: None }
    }

    pub fn mock(salt: u64) -> Self {
        Self::new(Arc::new(MockTransport::new(salt)))
    }

    fn request(&self, prompt: String) -> ChatRequest {
        ChatRequest { prompt, model: self.model.clone(), temperature: self.temperature }
    }

    /// Sends `prompt` until `parse` accepts a reply. `Ok(None)` when every
    /// attempt was answered but unparseable; `Err` when the transport failed
    /// on every attempt.
    pub fn ask<R>(&self, prompt: String, parse: impl Fn(&str) -> Option<R>) -> Result<Option<R>, TransportError> {
        let req = self.request(prompt);
        let mut last_err = None;
        let mut answered = false;
        for attempt in 0..self.attempts.max(1) {
            match self.transport.complete(&req) {
                Ok(text) => {
                    answered = true;
                    if let Some(v) = parse(&text) {
                        return Ok(Some(v));
                    }
                    log::debug!("attempt {}: unparseable reply {text:?}", attempt + 1);
                }
                Err(e) => {
                    log::debug!("attempt {}: transport error {e}", attempt + 1);
                    last_err = Some(e);
                }
            }
        }
        match (answered, last_err) {
            (false, Some(e)) => Err(e),
            _ => Ok(None),
        }
    }

    /// Generation request; `Ok(None)` when no reply parsed as an expression.
    pub fn propose(
        &self,
        prompt: &PreferencePrompt,
        schema: &FeatureSchema,
        seed: Option<&RewardExpression>,
    ) -> Result<Option<RewardExpression>, GeneratorError> {
        let text = prompts::generation(prompt, schema, seed);
        let n = schema.len();
        self.ask(text, |reply| extract_code(reply).and_then(|code| RewardExpression::parse(code, n).ok()))
            .map_err(|e| GeneratorError::BackendUnavailable(e.to_string()))
    }

    /// Reflection request over one round of candidates.
    pub fn choose(
        &self,
        prompt: &PreferencePrompt,
        candidates: &[(&str, &UtilityFeatureDistribution)],
        default: Option<&UtilityFeatureDistribution>,
        style: ReflectStyle,
    ) -> Result<Option<usize>, TransportError> {
        let text = prompts::reflection(prompt, candidates, default, style);
        let n = candidates.len();
        self.ask(text, |reply| parse_choice(reply, n))
    }

    pub fn rate(
        &self,
        clause: &PreferenceClause,
        source: &str,
        distribution: &UtilityFeatureDistribution,
    ) -> Result<Option<u8>, TransportError> {
        self.ask(prompts::rating(clause, source, distribution), parse_rating)
    }
}
