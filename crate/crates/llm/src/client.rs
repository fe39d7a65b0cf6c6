use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use crate::{LlmConfig, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn single_turn(config: &LlmConfig, prompt: &str) -> Self {
        Self {
            model: config.model_name.clone(),
            temperature: config.temperature,
            messages: vec![ChatMessage { role: "user".into(), content: prompt.to_string() }],
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// Completion text plus the number of retries spent getting it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub retries: u32,
}

/// Stateless chat-completion client.
#[derive(Debug, Clone)]
pub struct ChatClient {
    config: LlmConfig,
    agent: Agent,
}

impl ChatClient {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Single-turn completion with retries on 429 and transport errors.
    pub fn call_chat(&self, prompt: &str) -> Result<ChatReply, LlmError> {
        let key = std::env::var(&self.config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::MissingKey(self.config.api_key_env.clone()))?;
        let body = ChatRequest::single_turn(&self.config, prompt);
        let mut retries = 0;
        loop {
            let retryable = match self.post(&key, &body) {
                Ok(text) => return Ok(ChatReply { text, retries }),
                Err(e @ (LlmError::RateLimited | LlmError::Transport { .. })) => e,
                Err(e) => return Err(e),
            };
            if retries >= self.config.max_retries {
                return Err(match retryable {
                    LlmError::Transport { message, .. } => LlmError::Transport { attempts: retries + 1, message },
                    other => LlmError::Transport { attempts: retries + 1, message: other.to_string() },
                });
            }
            let delay = self.config.backoff_ms.saturating_mul(1u64 << retries.min(16));
            thread::sleep(Duration::from_millis(delay));
            retries += 1;
        }
    }

    fn post(&self, key: &str, body: &ChatRequest) -> Result<String, LlmError> {
        let mut response = self
            .agent
            .post(&self.config.endpoint_url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(|e| LlmError::Transport { attempts: 1, message: e.to_string() })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport { attempts: 1, message: e.to_string() })?;
        if status == 429 {
            return Err(LlmError::RateLimited);
        }
        if !(200..300).contains(&status) {
            return Err(LlmError::Http { status, body: text });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::MalformedResponse("no choices".into()))
    }
}

/// Fenced code block body, first block wins.
pub fn parse_candidate(completion: &str) -> Result<String, LlmError> {
    let mut lines = completion.lines();
    while let Some(line) = lines.next() {
        if line.trim_start().starts_with("```") {
            let mut body = Vec::new();
            for inner in lines.by_ref() {
                if inner.trim_start().starts_with("```") {
                    return Ok(body.join("\n"));
                }
                body.push(inner);
            }
            return Err(LlmError::NoCodeBlock);
        }
    }
    Err(LlmError::NoCodeBlock)
}
