//! Pylint invoked as an external process with JSON output.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use flowgen_core::quality::{parse_pylint_json, LintParseError, LintReport};
use thiserror::Error;

pub const PINNED_VERSION: &str = "3.0.4";

#[derive(Debug, Error)]
pub enum LintError {
    #[error("linter unavailable: {0}")]
    ToolUnavailable(String),
    #[error("linter version {found} does not match the pinned {expected}")]
    VersionMismatch { expected: String, found: String },
    #[error(transparent)]
    Parse(#[from] LintParseError),
    #[error("linter I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Something that lints one program.
pub trait Linter {
    fn lint(&self, code: &str) -> Result<LintReport, LintError>;
}

#[derive(Debug, Clone)]
pub struct Pylint {
    pub python: PathBuf,
    pub version: String,
}

impl Default for Pylint {
    fn default() -> Self {
        Pylint {
            python: PathBuf::from("python3"),
            version: PINNED_VERSION.to_string(),
        }
    }
}

/// Version number from the first line of `pylint --version`.
pub fn parse_version(output: &str) -> Option<&str> {
    output
        .lines()
        .find_map(|l| l.trim().strip_prefix("pylint "))
        .map(str::trim)
}

impl Pylint {
    fn command(&self) -> Command {
        let mut cmd = Command::new(&self.python);
        cmd.args(["-m", "pylint"]).stdin(Stdio::null());
        cmd
    }

    pub fn installed_version(&self) -> Result<String, LintError> {
        let out = self
            .command()
            .arg("--version")
            .output()
            .map_err(|e| LintError::ToolUnavailable(e.to_string()))?;
        let text = String::from_utf8_lossy(&out.stdout);
        match parse_version(&text) {
            Some(v) if out.status.success() => Ok(v.to_string()),
            _ => Err(LintError::ToolUnavailable(
                String::from_utf8_lossy(&out.stderr).trim().to_string(),
            )),
        }
    }

    pub fn check_version(&self) -> Result<(), LintError> {
        let found = self.installed_version()?;
        if found != self.version {
            return Err(LintError::VersionMismatch {
                expected: self.version.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Lints `code` as a standalone module.
    pub fn run(&self, code: &str) -> Result<LintReport, LintError> {
        let dir = tempfile::tempdir()?;
        let file = dir.path().join("candidate.py");
        fs::write(&file, code)?;
        let out = self
            .command()
            .args(["--output-format=json", "--persistent=n", "--score=n", "--rcfile="])
            .arg(&file)
            .current_dir(dir.path())
            .output()
            .map_err(|e| LintError::ToolUnavailable(e.to_string()))?;
        // Pylint's exit status is a bit mask of message categories; 32 flags
        // a usage error and a missing status means it was killed.
        match out.status.code() {
            Some(code) if code & 32 == 0 => {}
            _ => {
                return Err(LintError::ToolUnavailable(format!(
                    "pylint failed ({}): {}",
                    out.status,
                    String::from_utf8_lossy(&out.stderr).trim()
                )))
            }
        }
        Ok(parse_pylint_json(&String::from_utf8_lossy(&out.stdout))?)
    }
}

impl Linter for Pylint {
    fn lint(&self, code: &str) -> Result<LintReport, LintError> {
        self.run(code)
    }
}
