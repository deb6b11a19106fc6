//! Chat-completion clients.
//!
//! HTTP contract (OpenAI-compatible): `POST <endpoint>/v1/chat/completions`
//! with `{"model", "messages": [{"role": "system"|"user", "content"}],
//! "temperature", "max_tokens"}`; the reply text is read from
//! `choices[0].message.content`. A bearer token is sent when the API key
//! environment variable is set.

use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::templates::Prompt;

pub const API_KEY_ENV: &str = "SPECGATE_CHAT_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChatError {
    #[error("chat endpoint unavailable: {0}")]
    Unavailable(String),
    #[error("chat endpoint rejected the request with status {0}")]
    Rejected(u16),
    #[error("malformed chat response: {0}")]
    Malformed(String),
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String, ChatError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatConfig {
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Seconds per request.
    pub timeout: f64,
    pub retries: u32,
    /// Delay before the first retry in milliseconds; doubles on each retry.
    pub backoff_ms: u64,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig {
            endpoint: "http://127.0.0.1:8000".into(),
            model_name: "default".into(),
            temperature: 0.0,
            max_tokens: 4096,
            timeout: 300.0,
            retries: 3,
            backoff_ms: 1000,
        }
    }
}

impl ChatConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be finite and >= 0, got {}", self.temperature));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(format!("timeout must be positive, got {}", self.timeout));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

pub struct HttpChatClient {
    cfg: ChatConfig,
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(cfg: ChatConfig) -> Result<Self, String> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout)))
            .build()
            .into();
        Ok(HttpChatClient {
            url: format!("{}/v1/chat/completions", cfg.endpoint.trim_end_matches('/')),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            agent,
            cfg,
        })
    }

    fn attempt(&self, prompt: &Prompt) -> Result<String, (ChatError, bool)> {
        let body = ChatRequest {
            model: &self.cfg.model_name,
            messages: [
                Message { role: "system", content: &prompt.system },
                Message { role: "user", content: &prompt.user },
            ],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
        };
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) => {
                let transient = code == 429 || code >= 500;
                let err = if transient {
                    ChatError::Unavailable(format!("status {code}"))
                } else {
                    ChatError::Rejected(code)
                };
                return Err((err, transient));
            }
            Err(e) => return Err((ChatError::Unavailable(e.to_string()), true)),
        };
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (ChatError::Malformed(e.to_string()), false))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| (ChatError::Malformed("no choices[0].message.content".into()), false))
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &Prompt) -> Result<String, ChatError> {
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut tries = 0;
        loop {
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err((err, true)) if tries < self.cfg.retries => {
                    tracing::warn!(%err, retry = tries + 1, "chat request failed; backing off");
                    thread::sleep(delay);
                    delay *= 2;
                    tries += 1;
                }
                Err((err, _)) => return Err(err),
            }
        }
    }
}

/// Replays fixed responses in order; errors once the script runs out.
pub struct ScriptedClient {
    responses: Mutex<std::collections::VecDeque<String>>,
    prompts: Mutex<Vec<Prompt>>,
}

impl ScriptedClient {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        ScriptedClient {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Every prompt received so far.
    pub fn prompts(&self) -> Vec<Prompt> {
        self.prompts.lock().unwrap().clone()
    }

    pub fn calls(&self) -> usize {
        self.prompts.lock().unwrap().len()
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, prompt: &Prompt) -> Result<String, ChatError> {
        self.prompts.lock().unwrap().push(prompt.clone());
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| ChatError::Unavailable("script exhausted".into()))
    }
}

/// Answers every prompt with the same text.
pub struct FixedClient(pub String);

impl ChatClient for FixedClient {
    fn complete(&self, _prompt: &Prompt) -> Result<String, ChatError> {
        Ok(self.0.clone())
    }
}
