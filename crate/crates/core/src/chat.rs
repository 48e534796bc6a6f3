//! Chat-completion request types, request fingerprinting and the model trait
//! every provider implements.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    System,
    User,
    Assistant,
}

impl Speaker {
    pub fn wire_name(self) -> &'static str {
        match self {
            Speaker::System => "system",
            Speaker::User => "user",
            Speaker::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub speaker: Speaker,
    pub text: String,
}

impl ChatTurn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        ChatTurn {
            speaker,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub turns: Vec<ChatTurn>,
    pub temperature: f64,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(&'static str),
    /// A single failed attempt that may succeed on retry.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("network error after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },
    #[error("provider rejected the request: {0}")]
    ProviderRejection(String),
    #[error("no cassette entry for request {fingerprint}")]
    CassetteMiss { fingerprint: String },
}

impl GatewayError {
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transient(_))
    }
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.turns.last() {
            None => return Err(GatewayError::InvalidRequest("no turns")),
            Some(last) if last.speaker != Speaker::User => {
                return Err(GatewayError::InvalidRequest("last turn must come from the user"))
            }
            _ => {}
        }
        if self.turns.iter().any(|t| t.text.is_empty()) {
            return Err(GatewayError::InvalidRequest("empty turn text"));
        }
        Ok(())
    }
}

/// A chat-completion backend: live HTTP client, cassette, or test stub.
pub trait ChatModel {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError>;
}

impl<M: ChatModel + ?Sized> ChatModel for &M {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

impl<M: ChatModel + ?Sized> ChatModel for alloc::boxed::Box<M> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

impl<M: ChatModel + ?Sized> ChatModel for alloc::sync::Arc<M> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

/// Strips trailing whitespace from every line. Nothing else is normalized.
pub fn canonicalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(line.trim_end());
    }
    out
}

/// Stable SHA-256 digest (64 lowercase hex chars) of the canonicalized turns,
/// temperature and model version.
pub fn fingerprint(request: &CompletionRequest) -> String {
    let mut hasher = Sha256::new();
    let mut header = String::new();
    let _ = write!(
        header,
        "model_version:{}:{}\ntemperature:{:?}\nturns:{}\n",
        request.model_version.len(),
        request.model_version,
        request.temperature,
        request.turns.len()
    );
    hasher.update(header.as_bytes());
    for turn in &request.turns {
        let text = canonicalize_text(&turn.text);
        let mut prefix = String::new();
        let _ = writeln!(prefix, "{}:{}", turn.speaker.wire_name(), text.len());
        hasher.update(prefix.as_bytes());
        hasher.update(text.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest.iter() {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSettings {
    pub temperature: f64,
    pub model_version: String,
    pub history_window: Option<usize>,
}

/// Conversation memory shared by all agents of one pipeline run.
#[derive(Debug, Clone, Default)]
pub struct Conversation {
    turns: Vec<ChatTurn>,
}

impl Conversation {
    pub fn new() -> Self {
        Conversation::default()
    }

    pub fn turns(&self) -> &[ChatTurn] {
        &self.turns
    }

    /// Builds the request for a new user message: prior history (optionally
    /// truncated to system turns plus the last `history_window` turns) followed
    /// by the message itself.
    pub fn request(&self, user_text: &str, settings: &SamplingSettings) -> CompletionRequest {
        let mut turns: Vec<ChatTurn> = match settings.history_window {
            None => self.turns.clone(),
            Some(window) => {
                let non_system = self
                    .turns
                    .iter()
                    .filter(|t| t.speaker != Speaker::System)
                    .count();
                let skip = non_system.saturating_sub(window);
                let mut seen = 0usize;
                self.turns
                    .iter()
                    .filter(|t| {
                        if t.speaker == Speaker::System {
                            return true;
                        }
                        seen += 1;
                        seen > skip
                    })
                    .cloned()
                    .collect()
            }
        };
        turns.push(ChatTurn::new(Speaker::User, user_text));
        CompletionRequest {
            turns,
            temperature: settings.temperature,
            model_version: settings.model_version.clone(),
        }
    }

    pub fn record(&mut self, user_text: &str, assistant_text: &str) {
        self.turns.push(ChatTurn::new(Speaker::User, user_text));
        self.turns
            .push(ChatTurn::new(Speaker::Assistant, assistant_text));
    }
}
