//! Benchmark loaders for HumanEval (JSON lines) and sanitized MBPP (JSON
//! array), plus their ET variants.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flowgen_core::{validate_problem, BenchmarkKind, ProgrammingProblem, Violation};
use serde::de::{self, DeserializeSeed, SeqAccess, Visitor};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {index}: {message}")]
    Format { index: usize, message: String },
}

fn format_err(index: usize, message: impl Into<String>) -> BenchError {
    BenchError::Format {
        index,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadWarning {
    CountMismatch { expected: usize, found: usize },
    OracleInPrompt { id: String },
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadWarning::CountMismatch { expected, found } => {
                write!(f, "expected {expected} problems, found {found}")
            }
            LoadWarning::OracleInPrompt { id } => write!(f, "{id}: oracle text appears in the prompt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub kind: BenchmarkKind,
    pub problems: Vec<ProgrammingProblem>,
    pub warnings: Vec<LoadWarning>,
}

impl Benchmark {
    pub fn get(&self, id: &str) -> Option<&ProgrammingProblem> {
        self.problems.iter().find(|p| p.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + Clone {
        self.problems.iter().map(|p| p.id.as_str())
    }
}

pub fn load_benchmark(path: &Path, kind: BenchmarkKind) -> Result<Benchmark, BenchError> {
    let io_err = |source| BenchError::Io {
        path: path.into(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut text = String::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_string(&mut text).map_err(io_err)?;
    } else {
        let mut file = file;
        file.read_to_string(&mut text).map_err(io_err)?;
    }
    let bench = parse_benchmark(&text, kind)?;
    for w in &bench.warnings {
        tracing::warn!(benchmark = %kind, "{w}");
    }
    Ok(bench)
}

pub fn parse_benchmark(text: &str, kind: BenchmarkKind) -> Result<Benchmark, BenchError> {
    let records = parse_records(text)?;
    let mut problems = Vec::with_capacity(records.len());
    let mut warnings = Vec::new();
    for (index, record) in records.iter().enumerate() {
        let obj = record
            .as_object()
            .ok_or_else(|| format_err(index, "record is not an object"))?;
        let problem = match kind.base() {
            BenchmarkKind::HumanEval => humaneval_problem(obj, kind),
            _ => mbpp_problem(obj, kind),
        }
        .map_err(|m| format_err(index, m))?;
        for violation in validate_problem(&problem).violations {
            match violation {
                Violation::OracleLeakedIntoPrompt => warnings.push(LoadWarning::OracleInPrompt {
                    id: problem.id.clone(),
                }),
                other => return Err(format_err(index, other.to_string())),
            }
        }
        problems.push(problem);
    }
    if problems.len() != kind.expected_count() {
        warnings.push(LoadWarning::CountMismatch {
            expected: kind.expected_count(),
            found: problems.len(),
        });
    }
    Ok(Benchmark {
        kind,
        problems,
        warnings,
    })
}

/// Accepts a JSON array or one JSON value per nonblank line; a parse error
/// names the first record that could not be read.
fn parse_records(text: &str) -> Result<Vec<Value>, BenchError> {
    if text.trim_start().starts_with('[') {
        let mut de = serde_json::Deserializer::from_str(text);
        let records = de.deserialize_seq_indexed().map_err(|e| {
            let msg = e.to_string();
            match msg.split_once("@@") {
                Some((index, rest)) => format_err(index.parse().unwrap_or(0), rest),
                None => format_err(0, msg),
            }
        })?;
        de.end().map_err(|e| format_err(records.len(), e.to_string()))?;
        return Ok(records);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| serde_json::from_str(line).map_err(|e| format_err(i, e.to_string())))
        .collect()
}

trait IndexedSeq {
    fn deserialize_seq_indexed(&mut self) -> Result<Vec<Value>, serde_json::Error>;
}

impl<'de, R: serde_json::de::Read<'de>> IndexedSeq for serde_json::Deserializer<R> {
    fn deserialize_seq_indexed(&mut self) -> Result<Vec<Value>, serde_json::Error> {
        IndexedArray.deserialize(self)
    }
}

/// Array visitor that tags element errors with `index@@`.
struct IndexedArray;

impl<'de> DeserializeSeed<'de> for IndexedArray {
    type Value = Vec<Value>;

    fn deserialize<D: de::Deserializer<'de>>(self, d: D) -> Result<Vec<Value>, D::Error> {
        d.deserialize_seq(self)
    }
}

impl<'de> Visitor<'de> for IndexedArray {
    type Value = Vec<Value>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an array of records")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<Value>, A::Error> {
        let mut out = Vec::new();
        loop {
            match seq.next_element::<Value>() {
                Ok(Some(v)) => out.push(v),
                Ok(None) => return Ok(out),
                Err(e) => return Err(de::Error::custom(format!("{}@@{e}", out.len()))),
            }
        }
    }
}

fn text_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, String> {
    obj.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("missing text field {key}"))
}

fn id_field(obj: &Map<String, Value>, prefix: &str) -> Result<String, String> {
    match obj.get("task_id") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(format!("{prefix}/{n}")),
        _ => Err("missing task_id".into()),
    }
}

fn string_list(obj: &Map<String, Value>, key: &str) -> Result<Option<Vec<String>>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| format!("{key} holds a non-string")))
            .collect::<Result<Vec<_>, _>>()
            .map(Some),
        Some(_) => Err(format!("{key} is not a list")),
    }
}

fn humaneval_problem(
    obj: &Map<String, Value>,
    kind: BenchmarkKind,
) -> Result<ProgrammingProblem, String> {
    let id = id_field(obj, "HumanEval")?;
    let prompt = text_field(obj, "prompt")?;
    let entry_point = text_field(obj, "entry_point")?;
    let oracle_tests = match string_list(obj, "test_case_list")?.filter(|_| kind == BenchmarkKind::HumanEvalEt) {
        Some(cases) => format!("candidate = {entry_point}\n{}\n", cases.join("\n")),
        None => format!("{}\n\ncheck({entry_point})\n", text_field(obj, "test")?.trim_end()),
    };
    let reference_solution = obj
        .get("canonical_solution")
        .and_then(Value::as_str)
        .map(|body| format!("{prompt}{body}"));
    Ok(ProgrammingProblem {
        id,
        prompt: prompt.to_string(),
        entry_point: entry_point.to_string(),
        oracle_tests,
        benchmark: kind,
        reference_solution,
    })
}

/// Names of functions defined at the top level of `code`, in order.
fn defined_functions(code: &str) -> Vec<&str> {
    code.lines()
        .filter_map(|l| l.strip_prefix("def "))
        .filter_map(|rest| rest.split('(').next())
        .map(str::trim)
        .collect()
}

/// Identifiers directly followed by `(`, in order of appearance.
fn called_names(test: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in test.char_indices() {
        let ident = c == '_' || c.is_alphanumeric();
        match (start, ident) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                if c == '(' {
                    out.push(&test[s..i]);
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// The function the tests exercise: a reference-defined function the tests
/// call, otherwise the first non-keyword call in the first test.
fn mbpp_entry_point(reference: Option<&str>, tests: &[String]) -> Option<String> {
    let joined = tests.join("\n");
    if let Some(code) = reference {
        if let Some(name) = defined_functions(code)
            .into_iter()
            .find(|n| joined.contains(&format!("{n}(")))
        {
            return Some(name.to_string());
        }
    }
    const SKIP: &[&str] = &[
        "assert", "set", "sorted", "list", "tuple", "abs", "math", "isclose", "round", "str", "int",
        "float", "len", "dict", "frozenset", "not",
    ];
    let first = tests.first()?;
    called_names(first)
        .into_iter()
        .find(|w| !SKIP.contains(w) && !w.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .map(str::to_string)
}

fn signature_line<'a>(reference: &'a str, entry_point: &str) -> Option<&'a str> {
    reference
        .lines()
        .find(|l| l.starts_with(&format!("def {entry_point}(")))
        .map(str::trim_end)
}

fn mbpp_problem(obj: &Map<String, Value>, kind: BenchmarkKind) -> Result<ProgrammingProblem, String> {
    let id = id_field(obj, "MBPP")?;
    let description = obj
        .get("prompt")
        .or_else(|| obj.get("text"))
        .and_then(Value::as_str)
        .ok_or("missing text field prompt/text")?;
    let reference = obj.get("code").and_then(Value::as_str);
    let tests = string_list(obj, "test_list")?.ok_or("missing test_list")?;
    let oracle_asserts = match string_list(obj, "test_case_list")? {
        Some(cases) if kind == BenchmarkKind::MbppEt => cases,
        _ => tests.clone(),
    };
    if oracle_asserts.is_empty() {
        return Err("no tests".into());
    }
    let entry_point = match obj.get("entry_point").and_then(Value::as_str) {
        Some(e) => e.to_string(),
        None => mbpp_entry_point(reference, &tests).ok_or("cannot infer entry point")?,
    };
    let mut oracle_tests = String::new();
    for key in ["test_imports"] {
        for line in string_list(obj, key)?.unwrap_or_default() {
            oracle_tests.push_str(&line);
            oracle_tests.push('\n');
        }
    }
    if let Some(setup) = obj.get("test_setup_code").and_then(Value::as_str) {
        if !setup.trim().is_empty() {
            oracle_tests.push_str(setup.trim_end());
            oracle_tests.push('\n');
        }
    }
    for line in &oracle_asserts {
        oracle_tests.push_str(line);
        oracle_tests.push('\n');
    }
    let hint = match reference.and_then(|r| signature_line(r, &entry_point)) {
        Some(sig) => format!("{}\n\n{sig}\n", description.trim_end()),
        None => format!("{}\nThe function must be named {entry_point}.\n", description.trim_end()),
    };
    Ok(ProgrammingProblem {
        id,
        prompt: hint,
        entry_point,
        oracle_tests,
        benchmark: kind,
        reference_solution: reference.map(str::to_string),
    })
}
