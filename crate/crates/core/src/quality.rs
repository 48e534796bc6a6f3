//! Code-quality metrics: lines of code, linter smell densities and
//! handled-exception density, all expressed per 10 lines of code.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Non-blank lines that are not comment-only.
pub fn count_loc(code: &str) -> usize {
    code.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .count()
}

/// Findings per 10 lines of code; zero when there is no code.
pub fn density(count: usize, loc: usize) -> f64 {
    if loc == 0 {
        0.0
    } else {
        10.0 * count as f64 / loc as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LintCategory {
    Error,
    Warning,
    Convention,
    Refactor,
}

impl LintCategory {
    pub const ALL: [LintCategory; 4] = [
        LintCategory::Error,
        LintCategory::Warning,
        LintCategory::Convention,
        LintCategory::Refactor,
    ];

    /// Category from a message id such as `"W0612"`; `None` for ids outside
    /// the four tracked categories (fatal, informational, unknown).
    pub fn from_message_id(id: &str) -> Option<LintCategory> {
        match id.trim().chars().next()?.to_ascii_uppercase() {
            'E' => Some(LintCategory::Error),
            'W' => Some(LintCategory::Warning),
            'C' => Some(LintCategory::Convention),
            'R' => Some(LintCategory::Refactor),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LintCategory::Error => "Error",
            LintCategory::Warning => "Warning",
            LintCategory::Convention => "Convention",
            LintCategory::Refactor => "Refactor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub category: LintCategory,
    pub message_id: String,
    pub line: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintReport {
    pub findings: Vec<LintFinding>,
    /// Findings whose id fell outside E/W/C/R.
    pub dropped: u32,
}

impl LintReport {
    /// Adds a finding, dropping ids outside the tracked categories.
    pub fn push(&mut self, message_id: &str, line: u32) {
        match LintCategory::from_message_id(message_id) {
            Some(category) => self.findings.push(LintFinding {
                category,
                message_id: message_id.to_string(),
                line,
            }),
            None => self.dropped += 1,
        }
    }

    pub fn count(&self, category: LintCategory) -> usize {
        self.findings
            .iter()
            .filter(|f| f.category == category)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LintParseError {
    #[error("linter output is not valid JSON: {0}")]
    Json(String),
    #[error("linter message {index} has no message id")]
    MissingId { index: usize },
}

#[derive(Deserialize)]
struct PylintMessage {
    #[serde(rename = "message-id", default)]
    message_id: Option<String>,
    #[serde(default)]
    line: Option<u32>,
}

/// Parses pylint's `--output-format=json` message list.
pub fn parse_pylint_json(text: &str) -> Result<LintReport, LintParseError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(LintReport::default());
    }
    let messages: Vec<PylintMessage> =
        serde_json::from_str(trimmed).map_err(|e| LintParseError::Json(alloc::format!("{e}")))?;
    let mut report = LintReport::default();
    for (index, msg) in messages.into_iter().enumerate() {
        let id = msg.message_id.ok_or(LintParseError::MissingId { index })?;
        report.push(&id, msg.line.unwrap_or(0));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SmellDensities {
    pub error: f64,
    pub warning: f64,
    pub convention: f64,
    pub refactor: f64,
}

impl SmellDensities {
    pub fn get(&self, category: LintCategory) -> f64 {
        match category {
            LintCategory::Error => self.error,
            LintCategory::Warning => self.warning,
            LintCategory::Convention => self.convention,
            LintCategory::Refactor => self.refactor,
        }
    }
}

pub fn smell_densities(report: &LintReport, loc: usize) -> SmellDensities {
    SmellDensities {
        error: density(report.count(LintCategory::Error), loc),
        warning: density(report.count(LintCategory::Warning), loc),
        convention: density(report.count(LintCategory::Convention), loc),
        refactor: density(report.count(LintCategory::Refactor), loc),
    }
}

/// Number of `except` clauses; `approximate` is set when the source could not
/// be tokenized and a line scan was used instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlerCount {
    pub count: usize,
    pub approximate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScanError {
    UnterminatedString,
    UnbalancedBracket,
}

fn is_ident_char(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// Length of a string prefix plus opening quote at `chars[i..]`, if a string
/// literal starts there.
fn string_start(chars: &[char], i: usize) -> Option<(usize, char, bool)> {
    let mut j = i;
    while j < chars.len() && j - i < 2 && "rRbBuUfF".contains(chars[j]) {
        j += 1;
    }
    let quote = *chars.get(j)?;
    if quote != '"' && quote != '\'' {
        return None;
    }
    if j > i && i > 0 && is_ident_char(chars[i - 1]) {
        return None;
    }
    let triple = chars.get(j + 1) == Some(&quote) && chars.get(j + 2) == Some(&quote);
    Some((j - i, quote, triple))
}

/// Counts `except` keywords that start a logical line, skipping strings,
/// comments and bracketed continuations.
fn scan_handlers(code: &str) -> Result<usize, ScanError> {
    let chars: Vec<char> = code.chars().collect();
    let mut count = 0;
    let mut depth: usize = 0;
    let mut line_start = true;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            if depth == 0 {
                line_start = true;
            }
            i += 1;
            continue;
        }
        if c == ' ' || c == '\t' || c == '\r' || c == '\x0c' {
            i += 1;
            continue;
        }
        if c == '\\' && chars.get(i + 1) == Some(&'\n') {
            i += 2;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if let Some((prefix, quote, triple)) = string_start(&chars, i) {
            i += prefix;
            i = skip_string(&chars, i, quote, triple)?;
            line_start = false;
            continue;
        }
        if is_ident_char(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            if line_start && depth == 0 {
                let word: String = chars[start..i].iter().collect();
                if word == "except" {
                    count += 1;
                }
            }
            line_start = false;
            continue;
        }
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth = depth.checked_sub(1).ok_or(ScanError::UnbalancedBracket)?;
            }
            // A compound statement on one line: `try: x()` is followed by the
            // handler on its own line, so nothing to do here.
            _ => {}
        }
        line_start = false;
        i += 1;
    }
    if depth != 0 {
        return Err(ScanError::UnbalancedBracket);
    }
    Ok(count)
}

/// Index just past the closing quote of the string whose opening quote is at `i`.
fn skip_string(chars: &[char], mut i: usize, quote: char, triple: bool) -> Result<usize, ScanError> {
    i += if triple { 3 } else { 1 };
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' {
            i += 2;
            continue;
        }
        if c == quote {
            if !triple {
                return Ok(i + 1);
            }
            if chars.get(i + 1) == Some(&quote) && chars.get(i + 2) == Some(&quote) {
                return Ok(i + 3);
            }
        } else if c == '\n' && !triple {
            return Err(ScanError::UnterminatedString);
        }
        i += 1;
    }
    Err(ScanError::UnterminatedString)
}

fn line_scan_handlers(code: &str) -> usize {
    code.lines()
        .filter(|line| {
            let rest = line.trim_start();
            rest.strip_prefix("except")
                .map(|tail| !tail.starts_with(is_ident_char))
                .unwrap_or(false)
        })
        .count()
}

/// Counts exception-handler clauses; every `except` clause of a `try`
/// counts once.
pub fn count_handlers(code: &str) -> HandlerCount {
    match scan_handlers(code) {
        Ok(count) => HandlerCount {
            count,
            approximate: false,
        },
        Err(_) => HandlerCount {
            count: line_scan_handlers(code),
            approximate: true,
        },
    }
}

pub fn handled_exception_density(code: &str, loc: usize) -> (f64, bool) {
    let handlers = count_handlers(code);
    (density(handlers.count, loc), handlers.approximate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub loc: usize,
    pub density_error: f64,
    pub density_warning: f64,
    pub density_convention: f64,
    pub density_refactor: f64,
    pub density_handled_exception: f64,
    pub handlers_approximate: bool,
}

impl QualityMetrics {
    pub fn compute(code: &str, lint: &LintReport) -> Self {
        let loc = count_loc(code);
        let smells = smell_densities(lint, loc);
        let (handled, approximate) = handled_exception_density(code, loc);
        QualityMetrics {
            loc,
            density_error: smells.error,
            density_warning: smells.warning,
            density_convention: smells.convention,
            density_refactor: smells.refactor,
            density_handled_exception: handled,
            handlers_approximate: approximate,
        }
    }

    pub fn smell(&self, category: LintCategory) -> f64 {
        match category {
            LintCategory::Error => self.density_error,
            LintCategory::Warning => self.density_warning,
            LintCategory::Convention => self.density_convention,
            LintCategory::Refactor => self.density_refactor,
        }
    }
}
