//! Runs candidate code against a test script in a child interpreter through
//! the job.json / result.json shim protocol.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use flowgen_core::{
    ExecStatus, ExecutionJob, ExecutionReport, HarnessError, ProblemOutcome, ProgrammingProblem,
    TestRunner,
};
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

/// Extra wall-clock time the shim gets beyond the job timeout before it is killed.
pub const KILL_GRACE: Duration = Duration::from_secs(2);

/// The runner shipped with this crate.
pub fn bundled_shim() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("shim/stub_shim.py")
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct JobFile {
    pub code: String,
    pub test_source: String,
    pub entry_point: String,
    pub timeout_s: f64,
}

impl JobFile {
    pub fn from_job(job: &ExecutionJob) -> Self {
        JobFile {
            code: job.code.clone(),
            test_source: job.test_source.clone(),
            entry_point: job.entry_point.clone(),
            timeout_s: job.timeout.as_secs_f64(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ResultFile {
    pub status: String,
    pub tests_run: u32,
    pub tests_passed: u32,
    pub primary_exception: Option<String>,
    pub traceback_excerpt: String,
    pub duration_s: f64,
}

impl ResultFile {
    /// Converts and checks the protocol invariants.
    pub fn into_report(self, timeout: Duration) -> Result<ExecutionReport, HarnessError> {
        let status = ExecStatus::parse(&self.status)
            .ok_or_else(|| HarnessError::Protocol(format!("unknown status {:?}", self.status)))?;
        if status == ExecStatus::HarnessError {
            return Err(HarnessError::Protocol(format!(
                "shim reported an internal error: {}",
                self.traceback_excerpt
            )));
        }
        if !self.duration_s.is_finite() || self.duration_s < 0.0 {
            return Err(HarnessError::Protocol(format!("bad duration_s {}", self.duration_s)));
        }
        let mut duration = Duration::from_secs_f64(self.duration_s);
        if status == ExecStatus::Timeout {
            duration = duration.max(timeout);
        }
        let report = ExecutionReport {
            status,
            tests_run: self.tests_run,
            tests_passed: self.tests_passed,
            primary_exception: self.primary_exception,
            traceback_excerpt: self.traceback_excerpt,
            duration,
        };
        report.check().map_err(|e| HarnessError::Protocol(e.to_string()))?;
        Ok(report)
    }
}

/// Counting semaphore bounding concurrent child processes.
struct Slots {
    free: Mutex<usize>,
    available: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slots poisoned");
        while *free == 0 {
            free = self.available.wait(free).expect("slots poisoned");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slots poisoned") += 1;
        self.0.available.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimConfig {
    pub python: PathBuf,
    pub shim: PathBuf,
    pub max_parallel: usize,
}

impl Default for ShimConfig {
    fn default() -> Self {
        ShimConfig {
            python: PathBuf::from("python3"),
            shim: bundled_shim(),
            max_parallel: std::thread::available_parallelism().map_or(4, |n| n.get()),
        }
    }
}

/// Process-per-job test runner.
pub struct ShimRunner {
    config: ShimConfig,
    slots: Slots,
}

impl ShimRunner {
    pub fn new(config: ShimConfig) -> Self {
        let slots = Slots::new(config.max_parallel);
        ShimRunner { config, slots }
    }

    pub fn config(&self) -> &ShimConfig {
        &self.config
    }

    /// Fails fast when the interpreter or shim script is missing.
    pub fn check_available(&self) -> Result<(), HarnessError> {
        if !self.config.shim.is_file() {
            return Err(HarnessError::Unavailable(format!(
                "shim {} not found",
                self.config.shim.display()
            )));
        }
        let status = Command::new(&self.config.python)
            .arg("-c")
            .arg("pass")
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map_err(|e| {
                HarnessError::Unavailable(format!("{}: {e}", self.config.python.display()))
            })?;
        if !status.success() {
            return Err(HarnessError::Unavailable(format!(
                "{} exited with {status}",
                self.config.python.display()
            )));
        }
        Ok(())
    }

    fn run_in(&self, dir: &Path, job: &ExecutionJob) -> Result<ExecutionReport, HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(e.to_string());
        let job_text = serde_json::to_vec(&JobFile::from_job(job)).expect("job serializes");
        fs::write(dir.join("job.json"), job_text).map_err(io)?;
        let stderr = File::create(dir.join("shim.stderr")).map_err(io)?;
        let started = Instant::now();
        let mut child = Command::new(&self.config.python)
            .arg(&self.config.shim)
            .arg(dir)
            .current_dir(dir)
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONHASHSEED", "0")
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(stderr)
            .spawn()
            .map_err(|e| HarnessError::Unavailable(format!("cannot start shim: {e}")))?;
        let waited = child.wait_timeout(job.timeout + KILL_GRACE).map_err(io)?;
        let Some(status) = waited else {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(ExecutionReport {
                status: ExecStatus::Timeout,
                tests_run: 0,
                tests_passed: 0,
                primary_exception: None,
                traceback_excerpt: format!(
                    "killed after {:.1}s",
                    (job.timeout + KILL_GRACE).as_secs_f64()
                ),
                duration: started.elapsed().max(job.timeout),
            });
        };
        if !status.success() {
            let err = fs::read_to_string(dir.join("shim.stderr")).unwrap_or_default();
            let tail: String = err.chars().rev().take(500).collect::<Vec<_>>().into_iter().rev().collect();
            return Err(HarnessError::Protocol(format!("shim exited with {status}: {tail}")));
        }
        let text = fs::read_to_string(dir.join("result.json"))
            .map_err(|e| HarnessError::Protocol(format!("no result.json: {e}")))?;
        let result: ResultFile = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Protocol(format!("malformed result.json: {e}")))?;
        result.into_report(job.timeout)
    }
}

impl TestRunner for ShimRunner {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionReport, HarnessError> {
        if job.timeout.is_zero() {
            return Err(HarnessError::Protocol("timeout must be positive".into()));
        }
        let _slot = self.slots.acquire();
        let dir = tempfile::Builder::new()
            .prefix("flowgen-job-")
            .tempdir()
            .map_err(|e| HarnessError::Io(e.to_string()))?;
        let report = self.run_in(dir.path(), job);
        tracing::debug!(status = ?report.as_ref().map(|r| r.status), "job finished");
        report
    }
}

/// Runs `code` against the problem's held-out tests. This is the only
/// consumer of `oracle_tests` after loading.
pub fn evaluate_against_oracle(
    code: &str,
    problem: &ProgrammingProblem,
    runner: &dyn TestRunner,
    timeout: Duration,
) -> Result<ProblemOutcome, HarnessError> {
    let job = ExecutionJob {
        code: code.to_string(),
        test_source: problem.oracle_tests.clone(),
        timeout,
        entry_point: problem.entry_point.clone(),
    };
    Ok(ProblemOutcome::from_report(&runner.execute(&job)?))
}
