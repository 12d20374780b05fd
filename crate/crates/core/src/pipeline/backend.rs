//! Vision-language backends: an OpenAI-style chat-completions client and a replaying mock.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::OCR_SECTION_START;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adapter {
    /// `POST {messages: [{role: user, content: [text, image_url]}]}`, reply in `choices[0].message.content`.
    #[default]
    ChatCompletions,
    /// Replays canned responses from `mock_dir`.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub name: String,
    pub adapter: Adapter,
    pub endpoint_url: String,
    /// Model identifier sent in the request body.
    pub model: String,
    /// Environment variable holding the API key; read at call time.
    pub api_key_env: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub request_timeout_secs: u64,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry, jittered by ±50%.
    pub retry_base_delay_ms: u64,
    pub max_concurrent: usize,
    pub requests_per_minute: Option<u32>,
    pub mock_dir: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            name: "mock".into(),
            adapter: Adapter::Mock,
            endpoint_url: String::new(),
            model: String::new(),
            api_key_env: String::new(),
            max_output_tokens: 4096,
            temperature: 0.0,
            request_timeout_secs: 120,
            max_retries: 3,
            retry_base_delay_ms: 500,
            max_concurrent: 4,
            requests_per_minute: None,
            mock_dir: None,
        }
    }
}

impl BackendConfig {
    pub fn chat_completions(name: &str, endpoint_url: &str, model: &str, api_key_env: &str) -> Self {
        BackendConfig {
            name: name.into(),
            adapter: Adapter::ChatCompletions,
            endpoint_url: endpoint_url.into(),
            model: model.into(),
            api_key_env: api_key_env.into(),
            ..BackendConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("backend name is empty".into());
        }
        if self.max_output_tokens == 0 {
            return Err(format!("backend '{}': max_output_tokens must be positive", self.name));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("backend '{}': temperature must be non-negative", self.name));
        }
        if self.max_concurrent == 0 {
            return Err(format!("backend '{}': max_concurrent must be positive", self.name));
        }
        if self.adapter == Adapter::ChatCompletions {
            let url = reqwest::Url::parse(&self.endpoint_url)
                .map_err(|e| format!("backend '{}': endpoint_url is not an absolute URL: {e}", self.name))?;
            if !matches!(url.scheme(), "http" | "https") {
                return Err(format!("backend '{}': endpoint_url must be http(s)", self.name));
            }
            if self.api_key_env.trim().is_empty() {
                return Err(format!("backend '{}': api_key_env is empty", self.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("API key variable '{0}' is not set")]
    AuthMissing(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend refused the request with HTTP {status}: {body}")]
    BackendRefusal { status: u16, body: String },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("malformed backend reply: {0}")]
    MalformedReply(String),
    #[error("no canned response: {0}")]
    MockMissing(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

/// One request to a backend. `diagram_id` and `candidate` are metadata for replaying backends.
#[derive(Debug, Clone, Copy)]
pub struct BackendRequest<'a> {
    pub diagram_id: &'a str,
    pub prompt: &'a str,
    pub image_base64: &'a str,
    pub candidate: usize,
}

pub trait VisionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &BackendRequest<'_>) -> Result<String, BackendError>;
}

pub struct ChatCompletionsBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
}

impl ChatCompletionsBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate().map_err(BackendError::Config)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(ChatCompletionsBackend { config, client })
    }

    pub fn request_body(&self, prompt: &str, image_base64: &str) -> Value {
        json!({
            "model": self.config.model,
            "max_tokens": self.config.max_output_tokens,
            "temperature": self.config.temperature,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{image_base64}")}}
                ]
            }]
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.config.retry_base_delay_ms as f64 * 2f64.powi(attempt as i32);
        let jitter = rand::rng().random_range(0.5..1.5);
        Duration::from_millis((base * jitter) as u64)
    }
}

/// Text of `choices[0].message.content`, whether a string or a list of text parts.
fn reply_text(reply: &Value) -> Result<String, BackendError> {
    let content = &reply["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("")),
        _ => Err(BackendError::MalformedReply(format!("no message content in {}", truncate(&reply.to_string())))),
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

impl VisionBackend for ChatCompletionsBackend {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn complete(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        let key = std::env::var(&self.config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| BackendError::AuthMissing(self.config.api_key_env.clone()))?;
        let body = self.request_body(request.prompt, request.image_base64);
        let attempts = self.config.max_retries + 1;
        let mut last_error = BackendError::Transport { attempts: 0, message: "no attempt made".into() };
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            let sent = self.client.post(&self.config.endpoint_url).bearer_auth(&key).json(&body).send();
            match sent {
                Ok(response) => {
                    let status = response.status();
                    let text = response.text().unwrap_or_default();
                    if status.is_success() {
                        let reply: Value = serde_json::from_str(&text)
                            .map_err(|e| BackendError::MalformedReply(format!("{e}: {}", truncate(&text))))?;
                        return reply_text(&reply);
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_error = BackendError::Transport {
                            attempts: attempt + 1,
                            message: format!("HTTP {status}: {}", truncate(&text)),
                        };
                        continue;
                    }
                    return Err(BackendError::BackendRefusal { status: status.as_u16(), body: truncate(&text) });
                }
                Err(e) if e.is_timeout() => last_error = BackendError::Timeout { attempts: attempt + 1 },
                Err(e) => last_error = BackendError::Transport { attempts: attempt + 1, message: e.to_string() },
            }
        }
        Err(last_error)
    }
}

/// Sends one prompt and image to a chat-completions endpoint and returns the reply text.
pub fn invoke_backend(config: &BackendConfig, prompt: &str, encoded_image: &str) -> Result<String, BackendError> {
    // Fail on a missing key before building a client or touching the network.
    if std::env::var(&config.api_key_env).map(|k| k.is_empty()).unwrap_or(true) {
        return Err(BackendError::AuthMissing(config.api_key_env.clone()));
    }
    let backend = ChatCompletionsBackend::new(config.clone())?;
    backend.complete(&BackendRequest { diagram_id: "", prompt, image_base64: encoded_image, candidate: 0 })
}

enum MockSource {
    Fixed(String),
    Script(Vec<String>),
    Directory(PathBuf),
}

/// Offline backend. Counts every call.
///
/// A directory source looks up, in order, `<id>.ocr.<k>.txt` and `<id>.ocr.txt` (only when the
/// prompt carries an OCR section), then `<id>.<k>.txt` and `<id>.txt`, where `k` is the
/// candidate index.
pub struct MockBackend {
    name: String,
    source: MockSource,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn fixed(name: &str, response: impl Into<String>) -> Self {
        MockBackend { name: name.into(), source: MockSource::Fixed(response.into()), calls: AtomicUsize::new(0) }
    }

    /// Returns the scripted responses in call order, cycling when exhausted.
    pub fn scripted(name: &str, responses: Vec<String>) -> Self {
        assert!(!responses.is_empty(), "a scripted mock needs at least one response");
        MockBackend { name: name.into(), source: MockSource::Script(responses), calls: AtomicUsize::new(0) }
    }

    pub fn from_dir(name: &str, dir: impl Into<PathBuf>) -> Self {
        MockBackend { name: name.into(), source: MockSource::Directory(dir.into()), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl VisionBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.source {
            MockSource::Fixed(text) => Ok(text.clone()),
            MockSource::Script(texts) => Ok(texts[call % texts.len()].clone()),
            MockSource::Directory(dir) => {
                let id = request.diagram_id;
                let k = request.candidate;
                let mut names = Vec::new();
                if request.prompt.contains(OCR_SECTION_START) {
                    names.push(format!("{id}.ocr.{k}.txt"));
                    names.push(format!("{id}.ocr.txt"));
                }
                names.push(format!("{id}.{k}.txt"));
                names.push(format!("{id}.txt"));
                names
                    .iter()
                    .map(|n| dir.join(n))
                    .find(|p| p.is_file())
                    .map(|p| std::fs::read_to_string(&p).map_err(|e| BackendError::MockMissing(format!("{}: {e}", p.display()))))
                    .unwrap_or_else(|| Err(BackendError::MockMissing(format!("{} has no response for '{id}'", dir.display()))))
            }
        }
    }
}

/// Builds the backend a configuration describes.
pub fn backend_from_config(config: &BackendConfig) -> Result<Box<dyn VisionBackend>, BackendError> {
    match config.adapter {
        Adapter::ChatCompletions => Ok(Box::new(ChatCompletionsBackend::new(config.clone())?)),
        Adapter::Mock => {
            let dir = config
                .mock_dir
                .clone()
                .ok_or_else(|| BackendError::Config(format!("mock backend '{}' needs mock_dir", config.name)))?;
            Ok(Box::new(MockBackend::from_dir(&config.name, dir)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req<'a>(id: &'a str, prompt: &'a str, k: usize) -> BackendRequest<'a> {
        BackendRequest { diagram_id: id, prompt, image_base64: "", candidate: k }
    }

    #[test]
    fn fixed_mock_echoes() {
        let m = MockBackend::fixed("mock", "{\"elements\":[],\"flows\":[]}");
        assert_eq!(m.complete(&req("a", "p", 0)).unwrap(), "{\"elements\":[],\"flows\":[]}");
        assert_eq!(m.calls(), 1);
    }

    #[test]
    fn directory_mock_lookup_order() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d1.txt"), "plain").unwrap();
        std::fs::write(dir.path().join("d1.1.txt"), "second").unwrap();
        std::fs::write(dir.path().join("d1.ocr.txt"), "with ocr").unwrap();
        let m = MockBackend::from_dir("mock", dir.path());
        assert_eq!(m.complete(&req("d1", "p", 0)).unwrap(), "plain");
        assert_eq!(m.complete(&req("d1", "p", 1)).unwrap(), "second");
        let ocr_prompt = format!("p\n{OCR_SECTION_START}\n- x\n");
        assert_eq!(m.complete(&req("d1", &ocr_prompt, 0)).unwrap(), "with ocr");
        assert!(matches!(m.complete(&req("d2", "p", 0)), Err(BackendError::MockMissing(_))));
    }

    #[test]
    fn missing_key_fails_before_io() {
        // Port 9 (discard) would hang or refuse; the key check must come first.
        let config = BackendConfig::chat_completions("x", "http://127.0.0.1:9/v1", "m", "BPMNX_TEST_UNSET_KEY_1");
        std::env::remove_var("BPMNX_TEST_UNSET_KEY_1");
        assert!(matches!(invoke_backend(&config, "p", "aGk="), Err(BackendError::AuthMissing(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::chat_completions("x", "relative/path", "m", "K");
        assert!(c.validate().is_err());
        c.endpoint_url = "https://api.example.com/v1/chat/completions".into();
        assert!(c.validate().is_ok());
        c.max_output_tokens = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn reply_content_forms() {
        assert_eq!(reply_text(&json!({"choices":[{"message":{"content":"hi"}}]})).unwrap(), "hi");
        let parts = json!({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]});
        assert_eq!(reply_text(&parts).unwrap(), "ab");
        assert!(reply_text(&json!({"error":"x"})).is_err());
    }
}
