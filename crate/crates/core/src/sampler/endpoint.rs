use std::time::Duration;

use serde_json::{json, Value};

use super::PromptMode;
use crate::corpus::Context;

/// Environment variable holding the bearer token for HTTP endpoints.
pub const API_KEY_ENV: &str = "VARCAL_API_KEY";

const SINGLE_WORD_PROMPT: &str = "You are ChatGPT, a large language model trained by OpenAI. \
I want you to answer which word is a plausible continuation to the context <CONTEXT>. \
I have no specific intent, I just want your guess. Return only the word and nothing else.";

const WORD_LIST_PROMPT: &str = "You are ChatGPT, a large language model trained by OpenAI. \
I want you to answer which <N> words are plausible continuations to the context <CONTEXT>. \
I have no specific intent, I just want your guess. Return only the words and nothing else.";

/// Builds the chat prompt for `mode`. `n` is the list length requested in
/// diverse mode (40 in the reference protocol).
pub fn chat_prompt(mode: PromptMode, context_text: &str, n: usize) -> String {
    match mode {
        PromptMode::ChatDiverse => WORD_LIST_PROMPT
            .replace("<N>", &n.to_string())
            .replace("<CONTEXT>", context_text),
        _ => SINGLE_WORD_PROMPT.replace("<CONTEXT>", context_text),
    }
}

/// Splits a returned word list on newlines and commas, dropping bullets and
/// enumeration markers. Returns the raw items.
pub fn parse_word_list(text: &str) -> Vec<String> {
    text.split(['\n', ','])
        .map(|item| {
            item.trim()
                .trim_start_matches(|c: char| c.is_ascii_digit())
                .trim_start_matches(['.', ')', '-', '*', '•'])
                .trim()
                .to_string()
        })
        .filter(|item| !item.is_empty())
        .collect()
}

#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub context: &'a Context,
    pub n: usize,
    pub temperature: f64,
    pub prompt_mode: PromptMode,
    pub top_p: Option<f64>,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EndpointError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    Transient(String),
    /// Not worth retrying: bad credentials, malformed requests.
    Fatal(String),
}

impl std::fmt::Display for EndpointError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EndpointError::Transient(m) => write!(f, "transient: {m}"),
            EndpointError::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

/// A source of raw continuations. In completion and independent chat mode
/// each returned string is one sample; in diverse mode a single string holds
/// the whole word list.
pub trait GenerationEndpoint: Sync {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<String>, EndpointError>;
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            timeout: Duration::from_secs(60),
        }
    }
}

/// OpenAI-compatible HTTP endpoint.
pub struct HttpEndpoint {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpEndpoint {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpEndpoint { config, agent }
    }

    pub(crate) fn post(&self, path: &str, body: &Value) -> Result<Value, EndpointError> {
        post_json(&self.agent, &self.config, path, body)
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }
}

pub(crate) fn post_json(
    agent: &ureq::Agent,
    config: &EndpointConfig,
    path: &str,
    body: &Value,
) -> Result<Value, EndpointError> {
    let url = format!("{}/{}", config.base_url, path);
    let mut req = agent.post(&url).header("Content-Type", "application/json");
    if let Some(key) = &config.api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(|e| match e {
        ureq::Error::BadUri(m) => EndpointError::Fatal(format!("bad url {url}: {m}")),
        other => EndpointError::Transient(other.to_string()),
    })?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| EndpointError::Transient(e.to_string()))?;
    match status {
        200..=299 => serde_json::from_str(&text)
            .map_err(|e| EndpointError::Fatal(format!("invalid JSON from {url}: {e}"))),
        429 | 500..=599 => Err(EndpointError::Transient(format!("HTTP {status}: {text}"))),
        _ => Err(EndpointError::Fatal(format!("HTTP {status}: {text}"))),
    }
}

fn choice_texts(v: &Value, chat: bool) -> Result<Vec<String>, EndpointError> {
    let choices = v
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| EndpointError::Fatal("response has no `choices`".into()))?;
    choices
        .iter()
        .map(|c| {
            let text = if chat {
                c.pointer("/message/content")
            } else {
                c.get("text")
            };
            text.and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| EndpointError::Fatal("choice without text".into()))
        })
        .collect()
}

impl GenerationEndpoint for HttpEndpoint {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<String>, EndpointError> {
        match request.prompt_mode {
            PromptMode::Completion => {
                let mut body = json!({
                    "model": self.config.model,
                    "prompt": request.context.context_text,
                    "max_tokens": request.max_tokens,
                    "temperature": request.temperature,
                    "n": request.n,
                    "logprobs": Value::Null,
                });
                if let Some(p) = request.top_p {
                    body["top_p"] = json!(p);
                }
                choice_texts(&self.post("completions", &body)?, false)
            }
            PromptMode::ChatIndependent => {
                let prompt = chat_prompt(request.prompt_mode, &request.context.context_text, 1);
                let body = json!({
                    "model": self.config.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": request.temperature,
                });
                let mut out = Vec::with_capacity(request.n);
                for _ in 0..request.n {
                    out.extend(choice_texts(&self.post("chat/completions", &body)?, true)?);
                }
                Ok(out)
            }
            PromptMode::ChatDiverse => {
                let prompt =
                    chat_prompt(request.prompt_mode, &request.context.context_text, request.n);
                let body = json!({
                    "model": self.config.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": request.temperature,
                });
                choice_texts(&self.post("chat/completions", &body)?, true)
            }
        }
    }
}
