//! Test-execution results and the interpreter failure taxonomy.

use alloc::string::String;
use core::fmt;
use core::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Candidate code plus a test script to run against it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionJob {
    pub code: String,
    pub test_source: String,
    pub timeout: Duration,
    pub entry_point: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecStatus {
    AllPassed,
    TestFailures,
    Crash,
    Timeout,
    HarnessError,
}

impl ExecStatus {
    pub fn name(self) -> &'static str {
        match self {
            ExecStatus::AllPassed => "AllPassed",
            ExecStatus::TestFailures => "TestFailures",
            ExecStatus::Crash => "Crash",
            ExecStatus::Timeout => "Timeout",
            ExecStatus::HarnessError => "HarnessError",
        }
    }

    pub fn parse(s: &str) -> Option<ExecStatus> {
        Some(match s {
            "AllPassed" => ExecStatus::AllPassed,
            "TestFailures" => ExecStatus::TestFailures,
            "Crash" => ExecStatus::Crash,
            "Timeout" => ExecStatus::Timeout,
            "HarnessError" => ExecStatus::HarnessError,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub status: ExecStatus,
    pub tests_run: u32,
    pub tests_passed: u32,
    pub primary_exception: Option<String>,
    pub traceback_excerpt: String,
    pub duration: Duration,
}

impl ExecutionReport {
    pub fn passed(&self) -> bool {
        self.status == ExecStatus::AllPassed
    }

    /// Checks the report invariants: `AllPassed` implies every test of a
    /// nonempty run passed, and passes never exceed runs.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.tests_passed > self.tests_run {
            return Err("tests_passed exceeds tests_run");
        }
        if self.status == ExecStatus::AllPassed
            && (self.tests_run == 0 || self.tests_passed != self.tests_run)
        {
            return Err("AllPassed requires tests_passed == tests_run > 0");
        }
        Ok(())
    }

    /// Plain-text rendering placed in the tester's failure-report prompt.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        use core::fmt::Write;
        let _ = write!(
            out,
            "Status: {}\nTests run: {}\nTests passed: {}\n",
            self.status.name(),
            self.tests_run,
            self.tests_passed
        );
        if let Some(exc) = &self.primary_exception {
            let _ = writeln!(out, "First failure: {exc}");
        }
        if !self.traceback_excerpt.is_empty() {
            let _ = write!(out, "Output:\n{}", self.traceback_excerpt);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureCategory {
    Assertion,
    Syntax,
    Name,
    Type,
    Index,
    Value,
    Recursion,
    Attribute,
    Other,
    Timeout,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 10] = [
        FailureCategory::Assertion,
        FailureCategory::Syntax,
        FailureCategory::Name,
        FailureCategory::Type,
        FailureCategory::Index,
        FailureCategory::Value,
        FailureCategory::Recursion,
        FailureCategory::Attribute,
        FailureCategory::Other,
        FailureCategory::Timeout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureCategory::Assertion => "Assertion",
            FailureCategory::Syntax => "Syntax",
            FailureCategory::Name => "Name",
            FailureCategory::Type => "Type",
            FailureCategory::Index => "Index",
            FailureCategory::Value => "Value",
            FailureCategory::Recursion => "Recursion",
            FailureCategory::Attribute => "Attribute",
            FailureCategory::Other => "Other",
            FailureCategory::Timeout => "Timeout",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("cannot classify a passing report")]
    AllPassed,
}

const EXCEPTION_TABLE: &[(&str, FailureCategory)] = &[
    ("AssertionError", FailureCategory::Assertion),
    ("SyntaxError", FailureCategory::Syntax),
    ("IndentationError", FailureCategory::Syntax),
    ("TabError", FailureCategory::Syntax),
    ("NameError", FailureCategory::Name),
    ("UnboundLocalError", FailureCategory::Name),
    ("TypeError", FailureCategory::Type),
    ("IndexError", FailureCategory::Index),
    ("ValueError", FailureCategory::Value),
    ("RecursionError", FailureCategory::Recursion),
    ("AttributeError", FailureCategory::Attribute),
];

/// Category for an exception type name such as `"ValueError"`,
/// `"builtins.ValueError"` or `"ValueError: bad input"`.
pub fn category_for_exception(name: &str) -> FailureCategory {
    let head = name.split(':').next().unwrap_or("").trim();
    let bare = head.rsplit('.').next().unwrap_or(head);
    EXCEPTION_TABLE
        .iter()
        .find(|(prefix, _)| bare.starts_with(prefix))
        .map(|(_, cat)| *cat)
        .unwrap_or(FailureCategory::Other)
}

/// Maps a non-passing report to exactly one failure category.
pub fn classify_failure(report: &ExecutionReport) -> Result<FailureCategory, ClassifyError> {
    match report.status {
        ExecStatus::AllPassed => Err(ClassifyError::AllPassed),
        ExecStatus::Timeout => Ok(FailureCategory::Timeout),
        _ => Ok(report
            .primary_exception
            .as_deref()
            .map(category_for_exception)
            .unwrap_or(FailureCategory::Other)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("test runner unavailable: {0}")]
    Unavailable(String),
    #[error("runner protocol violation: {0}")]
    Protocol(String),
    #[error("runner I/O failure: {0}")]
    Io(String),
}

/// Something that can run a test script against candidate code.
pub trait TestRunner {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionReport, HarnessError>;
}

impl<R: TestRunner + ?Sized> TestRunner for &R {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionReport, HarnessError> {
        (**self).execute(job)
    }
}

impl<R: TestRunner + ?Sized> TestRunner for alloc::sync::Arc<R> {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionReport, HarnessError> {
        (**self).execute(job)
    }
}

/// Verdict of running one problem's final code against its oracle tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemOutcome {
    Pass,
    Fail(FailureCategory),
}

impl ProblemOutcome {
    pub fn from_report(report: &ExecutionReport) -> ProblemOutcome {
        match classify_failure(report) {
            Err(ClassifyError::AllPassed) => ProblemOutcome::Pass,
            Ok(cat) => ProblemOutcome::Fail(cat),
        }
    }

    pub fn is_pass(self) -> bool {
        self == ProblemOutcome::Pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(status: ExecStatus, exc: Option<&str>) -> ExecutionReport {
        ExecutionReport {
            status,
            tests_run: 1,
            tests_passed: 0,
            primary_exception: exc.map(String::from),
            traceback_excerpt: String::new(),
            duration: Duration::from_millis(5),
        }
    }

    #[test]
    fn taxonomy_examples() {
        let cases = [
            ("AssertionError", FailureCategory::Assertion),
            ("RecursionError", FailureCategory::Recursion),
            ("KeyError", FailureCategory::Other),
            ("IndentationError", FailureCategory::Syntax),
            ("builtins.TypeError", FailureCategory::Type),
            ("ValueError: invalid literal", FailureCategory::Value),
            ("ZeroDivisionError", FailureCategory::Other),
        ];
        for (name, expected) in cases {
            let r = report(ExecStatus::TestFailures, Some(name));
            assert_eq!(classify_failure(&r), Ok(expected), "{name}");
        }
    }

    #[test]
    fn timeout_status_wins_over_exception() {
        let r = report(ExecStatus::Timeout, Some("KeyboardInterrupt"));
        assert_eq!(classify_failure(&r), Ok(FailureCategory::Timeout));
    }

    #[test]
    fn passing_report_is_rejected() {
        let mut r = report(ExecStatus::AllPassed, None);
        r.tests_passed = 1;
        assert_eq!(classify_failure(&r), Err(ClassifyError::AllPassed));
        assert_eq!(ProblemOutcome::from_report(&r), ProblemOutcome::Pass);
    }

    #[test]
    fn missing_exception_is_other() {
        let r = report(ExecStatus::Crash, None);
        assert_eq!(classify_failure(&r), Ok(FailureCategory::Other));
    }

    #[test]
    fn report_invariants() {
        let mut r = report(ExecStatus::AllPassed, None);
        assert!(r.check().is_err());
        r.tests_passed = 1;
        assert!(r.check().is_ok());
        r.tests_run = 0;
        assert!(r.check().is_err());
    }
}
