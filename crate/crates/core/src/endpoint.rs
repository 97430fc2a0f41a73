//! Chat-completions wire format, the endpoint trait, and an HTTP client.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};

pub const DEFAULT_API_KEY_ENV: &str = "OCULOBENCH_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageContent {
    Text(String),
    Parts(Vec<ContentPart>),
}

impl MessageContent {
    /// Concatenated text parts; images are skipped.
    pub fn text(&self) -> String {
        match self {
            MessageContent::Text(t) => t.clone(),
            MessageContent::Parts(parts) => parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::Text { text } => Some(text.as_str()),
                    ContentPart::ImageUrl { .. } => None,
                })
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }

    pub fn has_image(&self) -> bool {
        matches!(self, MessageContent::Parts(p) if p.iter().any(|x| matches!(x, ContentPart::ImageUrl { .. })))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: MessageContent,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: MessageContent::Text(text.into()) }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: MessageContent::Text(text.into()) }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: MessageContent::Text(text.into()) }
    }

    /// User message carrying an image followed by text.
    pub fn user_with_image(image: ContentPart, text: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: MessageContent::Parts(vec![image, ContentPart::Text { text: text.into() }]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl DecodingParams {
    pub const CLOSED: DecodingParams = DecodingParams { temperature: 0.0, max_tokens: 512 };
    pub const OPEN: DecodingParams = DecodingParams { temperature: 0.0, max_tokens: 1024 };
    pub const GENERATION: DecodingParams = DecodingParams { temperature: 0.5, max_tokens: 1024 };
}

/// Request body sent to `{base_url}/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<MessageContent>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl EndpointError {
    /// Whether another attempt could succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            EndpointError::Transport(_) => true,
            EndpointError::Status { status, .. } => *status == 429 || *status >= 500,
            EndpointError::Auth(_) | EndpointError::Malformed(_) => false,
        }
    }
}

#[async_trait]
pub trait ChatEndpoint: Send + Sync {
    async fn complete(&self, messages: &[ChatMessage], params: &DecodingParams) -> Result<String, EndpointError>;
}

/// Retry schedule for transient endpoint failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 3, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    pub fn immediate(retries: u32) -> Self {
        RetryPolicy { retries, base_delay_ms: 0, max_delay_ms: 0 }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(20)).min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

/// Calls `endpoint` until success, a non-retryable error, or the retry budget
/// is spent. Returns the outcome and the number of calls made.
pub async fn complete_with_retry(
    endpoint: &dyn ChatEndpoint,
    messages: &[ChatMessage],
    params: &DecodingParams,
    policy: &RetryPolicy,
) -> (Result<String, EndpointError>, u32) {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match endpoint.complete(messages, params).await {
            Ok(text) => return (Ok(text), attempt),
            Err(e) if e.is_retryable() && attempt <= policy.retries => {
                tracing::debug!(attempt, error = %e, "retrying endpoint call");
                tokio::time::sleep(policy.delay(attempt - 1)).await;
            }
            Err(e) => return (Err(e), attempt),
        }
    }
}

/// MIME type guessed from the file extension.
pub fn mime_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("tif" | "tiff") => "image/tiff",
        Some("bmp") => "image/bmp",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

/// Base64 data-URL content part for raw image bytes.
pub fn image_part_from_bytes(bytes: &[u8], mime: &str) -> ContentPart {
    let data = base64::engine::general_purpose::STANDARD.encode(bytes);
    ContentPart::ImageUrl { image_url: ImageUrl { url: format!("data:{mime};base64,{data}") } }
}

pub fn image_part(path: &Path) -> std::io::Result<ContentPart> {
    let bytes = std::fs::read(path)?;
    Ok(image_part_from_bytes(&bytes, mime_for(path)))
}

/// One configured model endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
}

fn default_auth_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

/// model_id → endpoint. Loaded from the `[endpoints]` table of a TOML file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointRegistry {
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("reading endpoint registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("endpoint registry: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("no endpoint configured for model `{0}`")]
    UnknownModel(String),
    #[error("http client: {0}")]
    Client(String),
}

impl EndpointRegistry {
    pub fn from_toml_str(s: &str) -> Result<Self, RegistryError> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, model_id: &str) -> Result<&EndpointSpec, RegistryError> {
        self.endpoints.get(model_id).ok_or_else(|| RegistryError::UnknownModel(model_id.to_string()))
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.endpoints.keys().map(String::as_str)
    }

    /// HTTP client for `model_id`, reading its token from the configured env var.
    pub fn http_endpoint(&self, model_id: &str) -> Result<HttpEndpoint, RegistryError> {
        let spec = self.get(model_id)?;
        let key = std::env::var(&spec.auth_env).ok();
        HttpEndpoint::new(spec, key).map_err(|e| RegistryError::Client(e.to_string()))
    }
}

/// Chat-completions client over HTTP.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    client: reqwest::Client,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpEndpoint {
    pub fn new(spec: &EndpointSpec, api_key: Option<String>) -> Result<Self, reqwest::Error> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(spec.timeout_secs.unwrap_or(120)))
            .build()?;
        let url = format!("{}/chat/completions", spec.base_url.trim_end_matches('/'));
        Ok(HttpEndpoint { client, url, model: spec.model.clone(), api_key })
    }
}

#[async_trait]
impl ChatEndpoint for HttpEndpoint {
    async fn complete(&self, messages: &[ChatMessage], params: &DecodingParams) -> Result<String, EndpointError> {
        let body = ChatRequest {
            model: self.model.clone(),
            messages: messages.to_vec(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| EndpointError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| EndpointError::Transport(e.to_string()))?;
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(EndpointError::Auth(format!("status {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(EndpointError::Status { status: status.as_u16(), body: text.chars().take(500).collect() });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| EndpointError::Malformed(e.to_string()))?;
        let choice = parsed.choices.into_iter().next().ok_or_else(|| EndpointError::Malformed("no choices".into()))?;
        Ok(choice.message.content.map(|c| c.text()).unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn wire_format() {
        let msg = ChatMessage::user_with_image(image_part_from_bytes(b"abc", "image/png"), "hi");
        let json = serde_json::to_value(&msg).unwrap();
        assert_eq!(json["content"][0]["type"], "image_url");
        assert_eq!(json["content"][0]["image_url"]["url"], "data:image/png;base64,YWJj");
        assert_eq!(json["content"][1], serde_json::json!({"type": "text", "text": "hi"}));
        let plain = serde_json::to_value(ChatMessage::system("s")).unwrap();
        assert_eq!(plain, serde_json::json!({"role": "system", "content": "s"}));
    }

    #[test]
    fn registry_from_toml() {
        let reg = EndpointRegistry::from_toml_str(
            "[endpoints.qwen]\nbase_url = \"http://localhost:9000/v1\"\nmodel = \"qwen2.5-vl\"\n",
        )
        .unwrap();
        let spec = reg.get("qwen").unwrap();
        assert_eq!(spec.auth_env, DEFAULT_API_KEY_ENV);
        assert!(reg.get("other").is_err());
    }

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
        error: EndpointError,
    }

    #[async_trait]
    impl ChatEndpoint for Flaky {
        async fn complete(&self, _: &[ChatMessage], _: &DecodingParams) -> Result<String, EndpointError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(self.error.clone())
            } else {
                Ok("ok".into())
            }
        }
    }

    #[tokio::test]
    async fn retries_transient_errors() {
        let ep = Flaky { calls: AtomicU32::new(0), fail_first: 2, error: EndpointError::Transport("x".into()) };
        let (res, attempts) = complete_with_retry(&ep, &[], &DecodingParams::CLOSED, &RetryPolicy::immediate(3)).await;
        assert_eq!(res.unwrap(), "ok");
        assert_eq!(attempts, 3);
    }

    #[tokio::test]
    async fn auth_is_not_retried() {
        let ep = Flaky { calls: AtomicU32::new(0), fail_first: 9, error: EndpointError::Auth("401".into()) };
        let (res, attempts) = complete_with_retry(&ep, &[], &DecodingParams::CLOSED, &RetryPolicy::immediate(3)).await;
        assert!(matches!(res, Err(EndpointError::Auth(_))));
        assert_eq!(attempts, 1);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { retries: 5, base_delay_ms: 100, max_delay_ms: 350 };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(350));
    }
}
