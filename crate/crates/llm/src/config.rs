use serde::{Deserialize, Serialize};

use crate::LlmError;

/// Chat endpoint settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Full URL of an OpenAI-compatible chat completions endpoint.
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://generativelanguage.googleapis.com/v1beta/openai/chat/completions".into(),
            model_name: "gemini-2.0-flash".into(),
            temperature: 0.75,
            api_key_env: "CCTS_API_KEY".into(),
            timeout_s: 120.0,
            max_retries: 3,
            backoff_ms: 1000,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidConfig("temperature must be a finite value >= 0"));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(LlmError::InvalidConfig("timeout_s must be positive"));
        }
        if self.endpoint_url.trim().is_empty() {
            return Err(LlmError::InvalidConfig("endpoint_url is empty"));
        }
        Ok(())
    }
}

/// Limits for running one candidate program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionLimits {
    pub wall_time_s: f64,
    pub memory_mb: u64,
    pub stdout_cap_bytes: usize,
    /// Interpreter argv; the program text is written to its stdin.
    pub interpreter: Vec<String>,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            wall_time_s: 10.0,
            memory_mb: 512,
            stdout_cap_bytes: 1 << 20,
            interpreter: vec!["python3".into(), "-".into()],
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.wall_time_s > 0.0 && self.wall_time_s.is_finite()) {
            return Err(LlmError::InvalidConfig("wall_time_s must be positive"));
        }
        if self.memory_mb == 0 || self.stdout_cap_bytes == 0 {
            return Err(LlmError::InvalidConfig("memory_mb and stdout_cap_bytes must be positive"));
        }
        if self.interpreter.is_empty() {
            return Err(LlmError::InvalidConfig("interpreter command is empty"));
        }
        Ok(())
    }
}
