//! Run manifests: a TOML config file merged with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use flowgen_core::domain::{AblationParseError, ConfigError as PipelineConfigError};
use flowgen_core::{Ablation, BenchmarkKind, PipelineConfig, ProcessModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::DEFAULT_BASE_URL;
use crate::lint::{Pylint, PINNED_VERSION};
use crate::sandbox::ShimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineConfigError),
    #[error(transparent)]
    Ablation(#[from] AblationParseError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub kind: Option<String>,
    pub path: Option<PathBuf>,
    /// Extended-test variant evaluated against the base run's final code.
    pub et_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub mode: Option<String>,
    pub backend: Option<String>,
    pub base_url: Option<String>,
    pub cassette_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxSection {
    pub timeout_s: Option<f64>,
    pub python: Option<PathBuf>,
    pub shim: Option<PathBuf>,
    pub max_parallel: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinterSection {
    pub version: Option<String>,
    pub enabled: Option<bool>,
    pub python: Option<PathBuf>,
}

/// Every key is optional so the same shape carries file values and
/// command-line overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub model_version: Option<String>,
    pub refinement_limit_t: Option<u32>,
    pub max_full_restarts: Option<u32>,
    pub ablation: Option<Vec<String>>,
    pub repeats: Option<u32>,
    pub parallelism: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub codet_versions_n: Option<u32>,
    pub codet_assertions_m: Option<u32>,
    pub meeting_shuffle_seed: Option<u64>,
    pub history_window: Option<usize>,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub sandbox: SandboxSection,
    #[serde(default)]
    pub linter: LinterSection,
}

impl ConfigFile {
    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<ConfigFile, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        let mut cfg: ConfigFile = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.output_dir,
            &mut cfg.benchmark.path,
            &mut cfg.benchmark.et_path,
            &mut cfg.provider.cassette_dir,
            &mut cfg.sandbox.shim,
        ] {
            if let Some(rel) = p.as_mut().filter(|p| p.is_relative()) {
                *rel = base.join(&*rel);
            }
        }
        Ok(cfg)
    }

    /// `self` with every key set in `over` replaced.
    pub fn merged(self, over: ConfigFile) -> ConfigFile {
        ConfigFile {
            model: over.model.or(self.model),
            temperature: over.temperature.or(self.temperature),
            model_version: over.model_version.or(self.model_version),
            refinement_limit_t: over.refinement_limit_t.or(self.refinement_limit_t),
            max_full_restarts: over.max_full_restarts.or(self.max_full_restarts),
            ablation: over.ablation.or(self.ablation),
            repeats: over.repeats.or(self.repeats),
            parallelism: over.parallelism.or(self.parallelism),
            output_dir: over.output_dir.or(self.output_dir),
            codet_versions_n: over.codet_versions_n.or(self.codet_versions_n),
            codet_assertions_m: over.codet_assertions_m.or(self.codet_assertions_m),
            meeting_shuffle_seed: over.meeting_shuffle_seed.or(self.meeting_shuffle_seed),
            history_window: over.history_window.or(self.history_window),
            benchmark: BenchmarkSection {
                kind: over.benchmark.kind.or(self.benchmark.kind),
                path: over.benchmark.path.or(self.benchmark.path),
                et_path: over.benchmark.et_path.or(self.benchmark.et_path),
            },
            provider: ProviderSection {
                mode: over.provider.mode.or(self.provider.mode),
                backend: over.provider.backend.or(self.provider.backend),
                base_url: over.provider.base_url.or(self.provider.base_url),
                cassette_dir: over.provider.cassette_dir.or(self.provider.cassette_dir),
            },
            sandbox: SandboxSection {
                timeout_s: over.sandbox.timeout_s.or(self.sandbox.timeout_s),
                python: over.sandbox.python.or(self.sandbox.python),
                shim: over.sandbox.shim.or(self.sandbox.shim),
                max_parallel: over.sandbox.max_parallel.or(self.sandbox.max_parallel),
            },
            linter: LinterSection {
                version: over.linter.version.or(self.linter.version),
                enabled: over.linter.enabled.or(self.linter.enabled),
                python: over.linter.python.or(self.linter.python),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Record,
    Replay,
}

impl ProviderMode {
    pub fn parse(s: &str) -> Option<ProviderMode> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Some(ProviderMode::Live),
            "record" => Some(ProviderMode::Record),
            "replay" => Some(ProviderMode::Replay),
            _ => None,
        }
    }
}

/// What answers requests that the cassette cannot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// OpenAI-compatible HTTP endpoint.
    OpenAi,
    /// Offline deterministic model, for dry runs and fixture recording.
    Scripted,
}

impl Backend {
    pub fn parse(s: &str) -> Option<Backend> {
        match s.to_ascii_lowercase().as_str() {
            "openai" => Some(Backend::OpenAi),
            "scripted" => Some(Backend::Scripted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderSpec {
    pub mode: ProviderMode,
    pub backend: Backend,
    pub base_url: String,
    pub cassette_dir: PathBuf,
}

impl ProviderSpec {
    pub fn cassette_path(&self, repeat: u32) -> PathBuf {
        self.cassette_dir.join(format!("repeat-{repeat}.json"))
    }
}

#[derive(Debug, Clone)]
pub struct LinterSpec {
    pub enabled: bool,
    pub pylint: Pylint,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub benchmark: BenchmarkKind,
    pub benchmark_path: PathBuf,
    pub et_path: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub repeats: u32,
    pub parallelism: usize,
    pub provider: ProviderSpec,
    pub sandbox: ShimConfig,
    pub linter: LinterSpec,
    pub output_dir: PathBuf,
}

#[derive(Serialize)]
struct HashInput<'a> {
    benchmark: BenchmarkKind,
    pipeline: &'a PipelineConfig,
}

impl Manifest {
    pub fn resolve(cfg: ConfigFile) -> Result<Manifest, ConfigError> {
        let model = match cfg.model.as_deref() {
            None => ProcessModel::Waterfall,
            Some(m) => ProcessModel::parse(m).ok_or_else(|| invalid(format!("unknown model {m:?}")))?,
        };
        let mut pipeline = PipelineConfig::for_model(model);
        if let Some(v) = cfg.temperature {
            pipeline.temperature = v;
        }
        if let Some(v) = cfg.model_version {
            pipeline.model_version = v;
        }
        if let Some(v) = cfg.refinement_limit_t {
            pipeline.refinement_limit_t = v;
        }
        if let Some(v) = cfg.max_full_restarts {
            pipeline.max_full_restarts = v;
        }
        if let Some(v) = cfg.codet_versions_n {
            pipeline.codet_versions_n = v;
        }
        if let Some(v) = cfg.codet_assertions_m {
            pipeline.codet_assertions_m = v;
        }
        pipeline.meeting_shuffle_seed = cfg.meeting_shuffle_seed;
        pipeline.history_window = cfg.history_window;
        for flag in cfg.ablation.unwrap_or_default() {
            pipeline.ablation.insert(Ablation::parse(&flag)?);
        }
        if let Some(t) = cfg.sandbox.timeout_s {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid(format!("sandbox.timeout_s must be positive, got {t}")));
            }
            pipeline.sandbox_timeout = Duration::from_secs_f64(t);
        }
        pipeline.validate()?;

        let kind_name = cfg.benchmark.kind.as_deref().unwrap_or("HumanEval");
        let benchmark = BenchmarkKind::parse(kind_name)
            .ok_or_else(|| invalid(format!("unknown benchmark {kind_name:?}")))?;
        let benchmark_path = cfg
            .benchmark
            .path
            .ok_or_else(|| invalid("benchmark.path is required"))?;

        let repeats = cfg.repeats.unwrap_or(5);
        if repeats < 1 {
            return Err(invalid("repeats must be at least 1"));
        }
        let parallelism = cfg
            .parallelism
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(4, |n| n.get()))
            .max(1);
        let output_dir = cfg.output_dir.unwrap_or_else(|| PathBuf::from("runs"));

        let mode_name = cfg.provider.mode.as_deref().unwrap_or("replay");
        let mode = ProviderMode::parse(mode_name)
            .ok_or_else(|| invalid(format!("unknown provider.mode {mode_name:?}")))?;
        let backend_name = cfg.provider.backend.as_deref().unwrap_or("openai");
        let backend = Backend::parse(backend_name)
            .ok_or_else(|| invalid(format!("unknown provider.backend {backend_name:?}")))?;
        let provider = ProviderSpec {
            mode,
            backend,
            base_url: cfg.provider.base_url.unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
            cassette_dir: cfg
                .provider
                .cassette_dir
                .unwrap_or_else(|| output_dir.join("cassettes")),
        };

        let mut sandbox = ShimConfig::default();
        if let Some(p) = cfg.sandbox.python {
            sandbox.python = p;
        }
        if let Some(s) = cfg.sandbox.shim {
            sandbox.shim = s;
        }
        if let Some(n) = cfg.sandbox.max_parallel {
            sandbox.max_parallel = n.max(1);
        }

        let linter = LinterSpec {
            enabled: cfg.linter.enabled.unwrap_or(true),
            pylint: Pylint {
                python: cfg.linter.python.unwrap_or_else(|| PathBuf::from("python3")),
                version: cfg.linter.version.unwrap_or_else(|| PINNED_VERSION.to_string()),
            },
        };

        Ok(Manifest {
            benchmark,
            benchmark_path,
            et_path: cfg.benchmark.et_path,
            pipeline,
            repeats,
            parallelism,
            provider,
            sandbox,
            linter,
            output_dir,
        })
    }

    /// Short digest of the settings that shape results. Credentials, paths,
    /// provider mode, repeat count and parallelism are excluded so a run can
    /// be resumed elsewhere or extended with more repeats.
    pub fn config_hash(&self) -> String {
        config_hash(self.benchmark, &self.pipeline)
    }

    pub fn with_ablation(&self, flags: impl IntoIterator<Item = Ablation>) -> Manifest {
        let mut m = self.clone();
        m.pipeline.ablation = flags.into_iter().collect();
        m
    }
}

pub fn config_hash(benchmark: BenchmarkKind, pipeline: &PipelineConfig) -> String {
    let input = HashInput { benchmark, pipeline };
    let bytes = serde_json::to_vec(&input).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
