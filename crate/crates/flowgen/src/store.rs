//! On-disk layout of a batch:
//!
//! ```text
//! <out>/metadata.json                      wall-clock data only
//! <out>/<hash>/manifest.json               benchmark + pipeline config
//! <out>/<hash>/<problem>/repeat-<k>.json   RunRecord
//! <out>/<hash>/outcomes/<bench>-repeat-<k>.json
//! <out>/<hash>/quality/repeat-<k>.json
//! <out>/<hash>/report.md, report.csv
//! ```
//!
//! Every path is a function of (config hash, problem id, repeat index), and
//! every file except `metadata.json` is byte-reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use flowgen_core::domain::RunTimings;
use flowgen_core::stats::RunOutcomeSet;
use flowgen_core::{BenchmarkKind, PipelineConfig, RunRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unreadable run data {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.into(),
        source,
    }
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), StoreError> {
    atomic_write(path, text.as_bytes()).map_err(io_err(path))
}

/// Writes through a temporary file in the same directory so readers never
/// see a partial file. The result is world-readable like a plain write.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Format {
        path: path.into(),
        source,
    })
}

/// Directory name for a problem id such as `HumanEval/12`.
pub fn problem_dir_name(id: &str) -> String {
    let name: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    // `.`, `..` and the empty id would not name a child directory.
    if name.chars().all(|c| c == '.') {
        format!("_{name}")
    } else {
        name
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredManifest {
    pub config_hash: String,
    pub benchmark: BenchmarkKind,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, hash: &str) -> RunDir {
        RunDir {
            dir: self.root.join(hash),
        }
    }

    pub fn metadata_path(&self) -> PathBuf {
        self.root.join("metadata.json")
    }

    /// Run directories (those holding a manifest), sorted by hash.
    pub fn run_dirs(&self) -> Result<Vec<RunDir>, StoreError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.root)(e)),
        };
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.join("manifest.json").is_file())
            .collect();
        dirs.sort();
        Ok(dirs.into_iter().map(|dir| RunDir { dir }).collect())
    }

    /// Merges timings into `metadata.json`.
    pub fn add_metadata(&self, hash: &str, stamp: CommandStamp, timings: BTreeMap<String, RunTimings>) -> Result<(), StoreError> {
        let path = self.metadata_path();
        let mut meta: Metadata = if path.is_file() { read_json(&path)? } else { Metadata::default() };
        meta.commands.push(stamp);
        meta.timings.entry(hash.to_string()).or_default().extend(timings);
        write_json(&path, &meta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandStamp {
    pub command: String,
    pub config_hash: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub commands: Vec<CommandStamp>,
    /// config hash -> "<problem>/repeat-<k>" -> timings
    pub timings: BTreeMap<String, BTreeMap<String, RunTimings>>,
}

pub fn timing_key(problem_id: &str, repeat: u32) -> String {
    format!("{}/repeat-{repeat}", problem_dir_name(problem_id))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    dir: PathBuf,
}

impl RunDir {
    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> String {
        self.dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    pub fn write_manifest(&self, m: &StoredManifest) -> Result<(), StoreError> {
        write_json(&self.manifest_path(), m)
    }

    pub fn read_manifest(&self) -> Result<StoredManifest, StoreError> {
        read_json(&self.manifest_path())
    }

    pub fn record_path(&self, problem_id: &str, repeat: u32) -> PathBuf {
        self.dir
            .join(problem_dir_name(problem_id))
            .join(format!("repeat-{repeat}.json"))
    }

    pub fn has_record(&self, problem_id: &str, repeat: u32) -> bool {
        self.record_path(problem_id, repeat).is_file()
    }

    /// Stores a record whose timings have already been taken out.
    pub fn write_record(&self, record: &RunRecord, repeat: u32) -> Result<(), StoreError> {
        write_json(&self.record_path(&record.problem_id, repeat), record)
    }

    pub fn read_record(&self, problem_id: &str, repeat: u32) -> Result<RunRecord, StoreError> {
        read_json(&self.record_path(problem_id, repeat))
    }

    pub fn outcomes_path(&self, benchmark: BenchmarkKind, repeat: u32) -> PathBuf {
        self.dir
            .join("outcomes")
            .join(format!("{}-repeat-{repeat}.json", benchmark.name()))
    }

    pub fn write_outcomes(&self, set: &RunOutcomeSet) -> Result<(), StoreError> {
        write_json(&self.outcomes_path(set.benchmark, set.run_index), set)
    }

    /// All stored outcome sets of one benchmark, by repeat index.
    pub fn read_outcomes(&self, benchmark: BenchmarkKind) -> Result<Vec<RunOutcomeSet>, StoreError> {
        let mut out = Vec::new();
        for repeat in 0.. {
            let path = self.outcomes_path(benchmark, repeat);
            if !path.is_file() {
                break;
            }
            out.push(read_json(&path)?);
        }
        Ok(out)
    }

    pub fn quality_path(&self, repeat: u32) -> PathBuf {
        self.dir.join("quality").join(format!("repeat-{repeat}.json"))
    }

    pub fn write_report(&self, markdown: &str, csv: &str) -> Result<(), StoreError> {
        write_text(&self.dir.join("report.md"), markdown)?;
        write_text(&self.dir.join("report.csv"), csv)
    }

    /// Repeat indices 0..n for which every problem has a stored record.
    pub fn complete_repeats<'a>(&self, ids: impl Iterator<Item = &'a str> + Clone) -> u32 {
        let mut n = 0;
        while ids.clone().all(|id| self.has_record(id, n)) {
            n += 1;
        }
        n
    }
}
