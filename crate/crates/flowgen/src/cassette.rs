//! Record/replay of chat completions keyed by request fingerprint.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use flowgen_core::{fingerprint, ChatModel, CompletionRequest, GatewayError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    /// Serve recorded answers; ask the backend and store the answer on a miss.
    Record,
    /// Serve recorded answers only.
    Replay,
    /// Always ask the backend; nothing is stored.
    Passthrough,
}

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette {path} not found")]
    Missing { path: PathBuf },
    #[error("cannot read cassette {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed cassette {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0:?} mode needs a backend provider")]
    NoBackend(CassetteMode),
}

/// On-disk form: one JSON object mapping fingerprint to response text.
pub type Entries = BTreeMap<String, String>;

pub fn load_entries(path: &Path) -> Result<Entries, CassetteError> {
    let text = fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            CassetteError::Missing { path: path.into() }
        } else {
            CassetteError::Io {
                path: path.into(),
                source,
            }
        }
    })?;
    serde_json::from_str(&text).map_err(|source| CassetteError::Format {
        path: path.into(),
        source,
    })
}

/// Atomic, so readers never see a partial cassette.
pub fn save_entries(path: &Path, entries: &Entries) -> Result<(), CassetteError> {
    let mut text = serde_json::to_string_pretty(entries).expect("string map serializes");
    text.push('\n');
    crate::store::atomic_write(path, text.as_bytes()).map_err(|source| CassetteError::Io {
        path: path.into(),
        source,
    })
}

/// A [`ChatModel`] that answers from a cassette and, depending on the mode,
/// falls through to a backend.
pub struct Cassette<'a> {
    mode: CassetteMode,
    backend: Option<&'a (dyn ChatModel + Sync)>,
    entries: RwLock<Entries>,
    record_lock: Mutex<()>,
    backend_calls: AtomicUsize,
    recorded: AtomicUsize,
}

impl<'a> Cassette<'a> {
    pub fn new(
        mode: CassetteMode,
        entries: Entries,
        backend: Option<&'a (dyn ChatModel + Sync)>,
    ) -> Result<Self, CassetteError> {
        if mode != CassetteMode::Replay && backend.is_none() {
            return Err(CassetteError::NoBackend(mode));
        }
        Ok(Cassette {
            mode,
            backend,
            entries: RwLock::new(entries),
            record_lock: Mutex::new(()),
            backend_calls: AtomicUsize::new(0),
            recorded: AtomicUsize::new(0),
        })
    }

    pub fn replay(entries: Entries) -> Self {
        Cassette::new(CassetteMode::Replay, entries, None).expect("replay needs no backend")
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    /// Entries added since construction.
    pub fn recorded(&self) -> usize {
        self.recorded.load(Ordering::SeqCst)
    }

    pub fn entries(&self) -> Entries {
        self.entries.read().expect("cassette poisoned").clone()
    }

    fn lookup(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cassette poisoned").get(key).cloned()
    }

    fn ask_backend(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let backend = self.backend.expect("checked at construction");
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        backend.complete(request)
    }
}

impl ChatModel for Cassette<'_> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.validate()?;
        match self.mode {
            CassetteMode::Passthrough => self.ask_backend(request),
            CassetteMode::Replay => {
                let key = fingerprint(request);
                self.lookup(&key)
                    .ok_or(GatewayError::CassetteMiss { fingerprint: key })
            }
            CassetteMode::Record => {
                let key = fingerprint(request);
                if let Some(hit) = self.lookup(&key) {
                    return Ok(hit);
                }
                let answer = self.ask_backend(request)?;
                let _guard = self.record_lock.lock().expect("cassette poisoned");
                let mut entries = self.entries.write().expect("cassette poisoned");
                // A concurrent identical request may have recorded first; keep
                // its answer so every caller sees the same text.
                let stored = entries.entry(key).or_insert_with(|| {
                    self.recorded.fetch_add(1, Ordering::SeqCst);
                    answer
                });
                Ok(stored.clone())
            }
        }
    }
}
