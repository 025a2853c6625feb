//! Completion providers.

use std::time::Duration;

use serde_json::json;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderError {
    pub message: String,
    /// Whether another attempt may succeed.
    pub retryable: bool,
}

impl ProviderError {
    pub fn transient(message: impl Into<String>) -> Self {
        ProviderError {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        ProviderError {
            message: message.into(),
            retryable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub max_tokens: u32,
    /// Index of a repeated request for the same prompt.
    pub sample: u32,
}

/// A text-completion backend. Calls are made with temperature 0.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ProviderError>;
}

impl<F> CompletionProvider for F
where
    F: Fn(&CompletionRequest<'_>) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ProviderError> {
        self(request)
    }
}

pub const ENV_API_KEY: &str = "LAKEVIEW_API_KEY";
pub const ENV_BASE_URL: &str = "LAKEVIEW_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Adapter for HTTP endpoints that speak the `/completions` JSON shape
/// (`{"model", "prompt", "max_tokens", "temperature"}` in,
/// `{"choices": [{"text"}]}` out).
pub struct HttpCompletions {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpCompletions {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build();
        HttpCompletions {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            agent: config.into(),
        }
    }

    /// Configure from `LAKEVIEW_BASE_URL` and `LAKEVIEW_API_KEY`.
    pub fn from_env() -> Self {
        let base = std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        HttpCompletions::new(base, std::env::var(ENV_API_KEY).ok())
    }
}

impl CompletionProvider for HttpCompletions {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ProviderError> {
        let body = json!({
            "model": request.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": 0,
        });
        let mut req = self.agent.post(format!("{}/completions", self.base_url));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| ProviderError::transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::transient(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(ProviderError::transient(format!("HTTP {status}: {text}")));
        }
        if status >= 400 {
            return Err(ProviderError::fatal(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::fatal(e.to_string()))?;
        value["choices"][0]["text"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::fatal(format!("no choices[0].text in response: {text}")))
    }
}
