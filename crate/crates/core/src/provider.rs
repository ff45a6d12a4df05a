//! Text-generation and embedding provider interfaces.
//!
//! Both are single blocking calls so the same code path drives a remote
//! service, an offline mock, or a recorded transcript. Remote clients speak a
//! minimal JSON-over-HTTP protocol:
//!
//! * generation: `POST {endpoint}` with `{"model", "prompt", "temperature",
//!   "max_output_chars"}`, answered by `{"text": "..."}`.
//! * embedding: `POST {endpoint}` with `{"model", "inputs": [..]}`, answered by
//!   `{"vectors": [[..], ..]}` in input order.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedding::mock_embed;
use crate::informalize::INFORMALIZE_DIRECTIVE_MARKER;
use crate::query::AUGMENT_DIRECTIVE_MARKER;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl ProviderError {
    /// Whether repeating the same request may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Transport(_) | ProviderError::Timeout(_) => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_chars: usize,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_chars: 4096,
        }
    }
}

pub trait TextGenerator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    /// Raw (not necessarily normalized) vectors, one per input, in order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

/// Connection settings for a remote provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_timeout_secs() -> f64 {
    20.0
}

fn http_client(timeout: Duration) -> Result<reqwest::blocking::Client, ProviderError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ProviderError::Transport(e.to_string()))
}

fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
    client: &reqwest::blocking::Client,
    config: &RemoteConfig,
    body: &B,
) -> Result<R, ProviderError> {
    let timeout = Duration::from_secs_f64(config.timeout_secs);
    let mut req = client.post(&config.endpoint).json(body);
    if let Some(key) = &config.api_key {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| {
        if e.is_timeout() {
            ProviderError::Timeout(timeout)
        } else {
            ProviderError::Transport(e.to_string())
        }
    })?;
    let status = resp.status();
    if !status.is_success() {
        let body = resp.text().unwrap_or_default();
        return Err(ProviderError::Status {
            status: status.as_u16(),
            body,
        });
    }
    resp.json::<R>()
        .map_err(|e| ProviderError::Malformed(e.to_string()))
}

pub struct RemoteGenerator {
    id: String,
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteGenerator {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        let client = http_client(Duration::from_secs_f64(config.timeout_secs))?;
        Ok(RemoteGenerator {
            id: format!("remote:{}", config.model),
            config,
            client,
        })
    }
}

#[derive(Serialize)]
struct GenerateBody<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_output_chars: usize,
}

#[derive(Deserialize)]
struct GenerateReply {
    text: String,
}

impl TextGenerator for RemoteGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        let body = GenerateBody {
            model: &self.config.model,
            prompt: &request.prompt,
            temperature: request.temperature,
            max_output_chars: request.max_output_chars,
        };
        let reply: GenerateReply = post_json(&self.client, &self.config, &body)?;
        Ok(reply.text)
    }
}

pub struct RemoteEmbedder {
    id: String,
    dim: usize,
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig, dim: usize) -> Result<Self, ProviderError> {
        let client = http_client(Duration::from_secs_f64(config.timeout_secs))?;
        Ok(RemoteEmbedder {
            id: format!("remote:{}", config.model),
            dim,
            config,
            client,
        })
    }
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    model: &'a str,
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct EmbedReply {
    vectors: Vec<Vec<f32>>,
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let body = EmbedBody {
            model: &self.config.model,
            inputs: texts,
        };
        let reply: EmbedReply = post_json(&self.client, &self.config, &body)?;
        if reply.vectors.len() != texts.len() {
            return Err(ProviderError::Malformed(format!(
                "expected {} vectors, got {}",
                texts.len(),
                reply.vectors.len()
            )));
        }
        Ok(reply.vectors)
    }
}

/// Deterministic embedder backed by [`mock_embed`].
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    id: String,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 8, "mock embedding dimension must be at least 8");
        MockEmbedder {
            dim,
            id: format!("mock-trigram-{dim}"),
        }
    }
}

impl Embedder for MockEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts
            .iter()
            .map(|t| mock_embed(t, self.dim).values)
            .collect())
    }
}

/// Offline stand-in for a text-generation model.
///
/// Answers informalization prompts with the theorem's docstring (or its
/// formal statement when there is none) and augmentation prompts by echoing
/// the query into the three labeled fields.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator;

impl MockGenerator {
    const ID: &'static str = "mock-generator";

    fn informalize(prompt: &str) -> String {
        let name = section(prompt, "Theorem name:")
            .map(|n| n.replace(['_', '.'], " "))
            .unwrap_or_else(|| "Unnamed theorem".to_string());
        let statement = section(prompt, "Documentation:")
            .or_else(|| section(prompt, "Formal statement:"))
            .unwrap_or_default();
        format!("INFORMAL NAME: {name}\nINFORMAL STATEMENT: {statement}")
    }

    fn augment(prompt: &str) -> String {
        let query = prompt
            .rsplit("Query: ")
            .next()
            .and_then(|rest| rest.lines().next())
            .unwrap_or_default()
            .trim();
        format!("FORMAL: {query}\nNAME: {query}\nSTATEMENT: {query}")
    }
}

/// Text of the first line after `header`, or the fenced block following it.
fn section(prompt: &str, header: &str) -> Option<String> {
    let start = prompt.find(header)? + header.len();
    let rest = prompt[start..].trim_start_matches([' ', '\n']);
    if let Some(body) = rest.strip_prefix("```\n") {
        let end = body.find("\n```")?;
        Some(body[..end].trim().to_string())
    } else {
        Some(rest.lines().next()?.trim().to_string())
    }
}

impl TextGenerator for MockGenerator {
    fn id(&self) -> &str {
        Self::ID
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        if request.prompt.contains(INFORMALIZE_DIRECTIVE_MARKER) {
            Ok(Self::informalize(&request.prompt))
        } else if request.prompt.contains(AUGMENT_DIRECTIVE_MARKER) {
            Ok(Self::augment(&request.prompt))
        } else {
            Err(ProviderError::Malformed(
                "mock generator does not recognise this prompt".into(),
            ))
        }
    }
}

/// Provider replaying canned responses in order; used to script tests.
pub struct ScriptedGenerator {
    responses: parking_lot::Mutex<std::collections::VecDeque<Result<String, ProviderError>>>,
    calls: std::sync::atomic::AtomicUsize,
}

impl ScriptedGenerator {
    pub fn new(responses: Vec<Result<String, ProviderError>>) -> Self {
        ScriptedGenerator {
            responses: parking_lot::Mutex::new(responses.into()),
            calls: Default::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl TextGenerator for ScriptedGenerator {
    fn id(&self) -> &str {
        "scripted"
    }

    fn generate(&self, _request: &GenerationRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.responses
            .lock()
            .pop_front()
            .unwrap_or_else(|| Err(ProviderError::Transport("script exhausted".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transient_classification() {
        assert!(ProviderError::Transport("x".into()).is_transient());
        assert!(ProviderError::Status { status: 503, body: String::new() }.is_transient());
        assert!(!ProviderError::Status { status: 400, body: String::new() }.is_transient());
        assert!(!ProviderError::DimensionMismatch { expected: 1, got: 2 }.is_transient());
    }

    #[test]
    fn generation_request_defaults_to_zero_temperature() {
        assert_eq!(GenerationRequest::new("p").temperature, 0.0);
    }

    #[test]
    fn scripted_generator_replays_in_order() {
        let g = ScriptedGenerator::new(vec![Ok("a".into()), Ok("b".into())]);
        let req = GenerationRequest::new("p");
        assert_eq!(g.generate(&req).unwrap(), "a");
        assert_eq!(g.generate(&req).unwrap(), "b");
        assert!(g.generate(&req).is_err());
        assert_eq!(g.calls(), 3);
    }
}
