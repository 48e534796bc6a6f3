#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use flowgen::config::{ConfigFile, Manifest, ProviderSection};
use flowgen_core::{ChatModel, CompletionRequest, GatewayError, ScriptedModel};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn shim_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("shim")
}

/// A fixture config (`humaneval` or `mbpp`) writing under `out`.
pub fn manifest(config: &str, out: &Path, over: ConfigFile) -> Manifest {
    let file = ConfigFile::load(&fixtures().join(format!("{config}.toml"))).unwrap();
    let over = ConfigFile {
        output_dir: Some(out.to_path_buf()),
        ..over
    };
    Manifest::resolve(file.merged(over)).unwrap()
}

pub fn with_model(model: &str) -> ConfigFile {
    ConfigFile {
        model: Some(model.into()),
        ..ConfigFile::default()
    }
}

pub fn with_cassettes(model: &str, dir: &Path, mode: &str) -> ConfigFile {
    ConfigFile {
        model: Some(model.into()),
        provider: ProviderSection {
            mode: Some(mode.into()),
            cassette_dir: Some(dir.to_path_buf()),
            ..ProviderSection::default()
        },
        ..ConfigFile::default()
    }
}

/// Counts calls and answers like the scripted backend.
#[derive(Default)]
pub struct CountingModel {
    pub inner: ScriptedModel,
    pub calls: AtomicUsize,
}

impl CountingModel {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatModel for CountingModel {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

/// Every file under `root` except `metadata.json`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.file_name().is_some_and(|n| n != "metadata.json") {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Runs the stub shim directly on a job document; returns exit code and
/// result.json when one was written.
pub fn run_shim(job: &str) -> (i32, Option<serde_json::Value>) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("job.json"), job).unwrap();
    let status = Command::new("python3")
        .arg(shim_dir().join("stub_shim.py"))
        .arg(dir.path())
        .current_dir(dir.path())
        .output()
        .unwrap()
        .status;
    let result = fs::read_to_string(dir.path().join("result.json"))
        .ok()
        .map(|t| serde_json::from_str(&t).unwrap());
    (status.code().unwrap_or(-1), result)
}

pub fn job(code: &str, tests: &str, timeout_s: f64) -> String {
    serde_json::json!({
        "code": code,
        "test_source": tests,
        "entry_point": "f",
        "timeout_s": timeout_s,
    })
    .to_string()
}

pub fn result_schema() -> jsonschema::Validator {
    let text = fs::read_to_string(shim_dir().join("result.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

pub struct ProtocolCase {
    pub name: &'static str,
    pub job: String,
    pub status: &'static str,
}

/// Passing, assertion-failing, syntax-error and timeout jobs.
pub fn protocol_cases() -> Vec<ProtocolCase> {
    let tests = "assert f(2) == 4\n";
    vec![
        ProtocolCase {
            name: "passing",
            job: job("def f(x):\n    return x * 2\n", tests, 5.0),
            status: "AllPassed",
        },
        ProtocolCase {
            name: "assertion",
            job: job("def f(x):\n    return x\n", tests, 5.0),
            status: "TestFailures",
        },
        ProtocolCase {
            name: "syntax",
            job: job("def f(x:\n    return x\n", tests, 5.0),
            status: "Crash",
        },
        ProtocolCase {
            name: "timeout",
            job: job("def f(x):\n    while True:\n        pass\n", tests, 1.0),
            status: "Timeout",
        },
    ]
}

/// Checks one protocol case; `Err` names what went wrong.
pub fn check_protocol_case(case: &ProtocolCase, schema: &jsonschema::Validator) -> Result<(), String> {
    let (code, result) = run_shim(&case.job);
    if code != 0 {
        return Err(format!("{}: exit {code}", case.name));
    }
    let result = result.ok_or_else(|| format!("{}: no result.json", case.name))?;
    if let Some(e) = schema.iter_errors(&result).next() {
        return Err(format!("{}: schema: {e}", case.name));
    }
    if result["status"] != case.status {
        return Err(format!("{}: status {}", case.name, result["status"]));
    }
    Ok(())
}

pub fn malformed_jobs() -> Vec<&'static str> {
    vec![
        "not json",
        "[]",
        r#"{"code": "x = 1", "test_source": "", "entry_point": "f"}"#,
        r#"{"code": 1, "test_source": "", "entry_point": "f", "timeout_s": 1}"#,
        r#"{"code": "", "test_source": "", "entry_point": "f", "timeout_s": 0}"#,
    ]
}
