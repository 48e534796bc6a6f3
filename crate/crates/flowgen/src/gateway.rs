//! Chat-completion providers: the live HTTP client and the retry wrapper.

use std::sync::Mutex;
use std::time::Duration;

use flowgen_core::{ChatModel, CompletionRequest, GatewayError};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

pub const API_KEY_VAR: &str = "FLOWGEN_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Bounded exponential backoff with symmetric jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub initial: Duration,
    pub factor: f64,
    /// Relative jitter; 0.2 spreads each delay over ±20%.
    pub jitter: f64,
    pub cap: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            initial: Duration::from_secs(1),
            factor: 2.0,
            jitter: 0.2,
            cap: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based). `unit` in [-1, 1] picks
    /// the point inside the jitter band.
    pub fn delay(&self, retry: u32, unit: f64) -> Duration {
        let base = self.initial.as_secs_f64() * self.factor.powi(retry as i32);
        let capped = base.min(self.cap.as_secs_f64());
        let jittered = capped * (1.0 + self.jitter * unit.clamp(-1.0, 1.0));
        Duration::from_secs_f64(jittered.max(0.0))
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Retries transient failures of the wrapped provider.
pub struct Retrying<P, S = ThreadSleeper> {
    inner: P,
    policy: RetryPolicy,
    sleeper: S,
    rng: Mutex<StdRng>,
}

impl<P: ChatModel> Retrying<P, ThreadSleeper> {
    pub fn new(inner: P, policy: RetryPolicy) -> Self {
        Retrying::with_sleeper(inner, policy, ThreadSleeper)
    }
}

impl<P: ChatModel, S: Sleeper> Retrying<P, S> {
    pub fn with_sleeper(inner: P, policy: RetryPolicy, sleeper: S) -> Self {
        Retrying {
            inner,
            policy,
            sleeper,
            rng: Mutex::new(StdRng::from_entropy()),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: ChatModel, S: Sleeper> ChatModel for Retrying<P, S> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let max = self.policy.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.inner.complete(request) {
                Err(GatewayError::Transient(message)) => {
                    if attempt >= max {
                        return Err(GatewayError::Network {
                            attempts: attempt,
                            message,
                        });
                    }
                    let unit = self.rng.lock().expect("rng poisoned").gen_range(-1.0..=1.0);
                    let delay = self.policy.delay(attempt - 1, unit);
                    tracing::warn!(attempt, ?delay, %message, "transient provider failure");
                    self.sleeper.sleep(delay);
                }
                other => return other,
            }
        }
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct LiveProvider {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl LiveProvider {
    pub fn new(base_url: &str, api_key: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(180)))
            .http_status_as_error(false)
            .build()
            .into();
        LiveProvider {
            agent,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: api_key.into(),
        }
    }

    /// Reads the key from `FLOWGEN_API_KEY`.
    pub fn from_env(base_url: &str) -> Result<Self, GatewayError> {
        match std::env::var(API_KEY_VAR) {
            Ok(key) if !key.trim().is_empty() => Ok(LiveProvider::new(base_url, key)),
            _ => Err(GatewayError::ProviderRejection(format!("{API_KEY_VAR} is not set"))),
        }
    }
}

pub fn wire_body(request: &CompletionRequest) -> Value {
    let messages: Vec<Value> = request
        .turns
        .iter()
        .map(|t| json!({"role": t.speaker.wire_name(), "content": t.text}))
        .collect();
    json!({
        "model": request.model_version,
        "temperature": request.temperature,
        "messages": messages,
    })
}

pub fn parse_reply(body: &Value) -> Result<String, GatewayError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GatewayError::Transient("response lacks choices[0].message.content".into()))
}

fn classify_status(status: u16, body: &str) -> GatewayError {
    let detail: String = body.chars().take(300).collect();
    if status == 429 || status >= 500 {
        GatewayError::Transient(format!("HTTP {status}: {detail}"))
    } else {
        GatewayError::ProviderRejection(format!("HTTP {status}: {detail}"))
    }
}

impl ChatModel for LiveProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(wire_body(request));
        let mut response = response.map_err(|e| GatewayError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(classify_status(status, &body));
        }
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| GatewayError::Transient(format!("unreadable response: {e}")))?;
        parse_reply(&body)
    }
}
