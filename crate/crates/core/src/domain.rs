//! Shared domain types: problems, roles, activities, artifacts, prompt
//! envelopes, pipeline configuration and run transcripts.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::execution::ExecutionReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BenchmarkKind {
    HumanEval,
    #[serde(rename = "HumanEvalET")]
    HumanEvalEt,
    #[serde(rename = "MBPP")]
    Mbpp,
    #[serde(rename = "MBPPET")]
    MbppEt,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::HumanEval,
        BenchmarkKind::HumanEvalEt,
        BenchmarkKind::Mbpp,
        BenchmarkKind::MbppEt,
    ];

    /// Number of problems in the published dataset.
    pub fn expected_count(self) -> usize {
        match self {
            BenchmarkKind::HumanEval | BenchmarkKind::HumanEvalEt => 164,
            BenchmarkKind::Mbpp | BenchmarkKind::MbppEt => 427,
        }
    }

    /// The base benchmark an ET variant shares its problem ids with.
    pub fn base(self) -> BenchmarkKind {
        match self {
            BenchmarkKind::HumanEval | BenchmarkKind::HumanEvalEt => BenchmarkKind::HumanEval,
            BenchmarkKind::Mbpp | BenchmarkKind::MbppEt => BenchmarkKind::Mbpp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::HumanEval => "HumanEval",
            BenchmarkKind::HumanEvalEt => "HumanEval-ET",
            BenchmarkKind::Mbpp => "MBPP",
            BenchmarkKind::MbppEt => "MBPP-ET",
        }
    }

    pub fn parse(s: &str) -> Option<BenchmarkKind> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "humaneval" => Some(BenchmarkKind::HumanEval),
            "humanevalet" => Some(BenchmarkKind::HumanEvalEt),
            "mbpp" => Some(BenchmarkKind::Mbpp),
            "mbppet" => Some(BenchmarkKind::MbppEt),
            _ => None,
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One benchmark task. `oracle_tests` is the held-out evaluation script and
/// must never reach a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgrammingProblem {
    pub id: String,
    pub prompt: String,
    pub entry_point: String,
    pub oracle_tests: String,
    pub benchmark: BenchmarkKind,
    /// Reference solution shipped with the dataset, kept for loader sanity checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<String>,
}

impl ProgrammingProblem {
    /// Substrings of the oracle that must not appear in any prompt: the whole
    /// oracle text plus every individual assertion line.
    pub fn oracle_fragments(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let whole = self.oracle_tests.trim();
        if !whole.is_empty() {
            out.push(whole);
        }
        for line in self.oracle_tests.lines() {
            let line = line.trim();
            if line.starts_with("assert") && line.len() > "assert".len() && line != whole {
                out.push(line);
            }
        }
        out
    }

    /// First oracle fragment found in `text`, if any.
    pub fn leaked_fragment<'a>(&'a self, text: &str) -> Option<&'a str> {
        self.oracle_fragments()
            .into_iter()
            .find(|fragment| text.contains(fragment))
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_alphanumeric())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    EntryPointEmpty,
    EntryPointNotIdentifier(String),
    OracleLeakedIntoPrompt,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EntryPointEmpty => f.write_str("entry_point empty"),
            Violation::EntryPointNotIdentifier(name) => {
                write!(f, "entry_point {name:?} is not an identifier")
            }
            Violation::OracleLeakedIntoPrompt => f.write_str("oracle leaked into prompt"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every problem invariant and reports all violations at once.
pub fn validate_problem(p: &ProgrammingProblem) -> ValidationResult {
    let mut violations = Vec::new();
    if p.entry_point.trim().is_empty() {
        violations.push(Violation::EntryPointEmpty);
    } else if !is_identifier(&p.entry_point) {
        violations.push(Violation::EntryPointNotIdentifier(p.entry_point.clone()));
    }
    if p.leaked_fragment(&p.prompt).is_some() {
        violations.push(Violation::OracleLeakedIntoPrompt);
    }
    ValidationResult { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    RequirementEngineer,
    Architect,
    Developer,
    Tester,
    ScrumMaster,
}

impl Role {
    /// The four development roles, in canonical meeting order.
    pub const DEVELOPMENT: [Role; 4] = [
        Role::RequirementEngineer,
        Role::Architect,
        Role::Developer,
        Role::Tester,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Role::RequirementEngineer => "Requirement Engineer",
            Role::Architect => "Architect",
            Role::Developer => "Developer",
            Role::Tester => "Tester",
            Role::ScrumMaster => "Scrum Master",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Activity {
    Requirement,
    Design,
    Implementation,
    Testing,
    CodeReview,
    SprintPlanning,
    SprintReview,
}

impl Activity {
    /// Role that owns the activity's main artifact.
    pub fn owner(self) -> Role {
        match self {
            Activity::Requirement => Role::RequirementEngineer,
            Activity::Design => Role::Architect,
            Activity::Implementation | Activity::CodeReview => Role::Developer,
            Activity::Testing => Role::Tester,
            Activity::SprintPlanning | Activity::SprintReview => Role::ScrumMaster,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArtifactKind {
    RequirementDoc,
    DesignDoc,
    Code,
    TestDesign,
    TestScript,
    FailureReport,
    TaskList,
    Suggestions,
}

impl ArtifactKind {
    /// Heading used when the artifact is placed in a prompt context.
    pub fn label(self, agile: bool) -> &'static str {
        match (self, agile) {
            (ArtifactKind::RequirementDoc, false) => "Requirement document",
            (ArtifactKind::RequirementDoc, true) => "User stories",
            (ArtifactKind::DesignDoc, _) => "Design document",
            (ArtifactKind::Code, _) => "Code",
            (ArtifactKind::TestDesign, _) => "Test case design",
            (ArtifactKind::TestScript, _) => "Test script",
            (ArtifactKind::FailureReport, _) => "Test failure report",
            (ArtifactKind::TaskList, _) => "Task list",
            (ArtifactKind::Suggestions, _) => "Suggestions",
        }
    }

    /// Kinds whose content is extracted source code rather than prose.
    pub fn is_source(self) -> bool {
        matches!(self, ArtifactKind::Code | ArtifactKind::TestScript)
    }
}

/// An immutable document produced by an agent. Refinement creates a new value
/// with `revision + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: ArtifactKind,
    pub content: String,
    pub producer: Role,
    pub activity: Activity,
    pub revision: u32,
}

/// The three-field prompt sent to an agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEnvelope {
    #[serde(rename = "Role")]
    pub role_statement: String,
    #[serde(rename = "Instruction")]
    pub instruction_steps: Vec<String>,
    #[serde(rename = "Context")]
    pub context: Vec<String>,
}

impl PromptEnvelope {
    /// JSON text sent as the user turn.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.role_statement.contains(needle)
            || self.instruction_steps.iter().any(|s| s.contains(needle))
            || self.context.iter().any(|c| c.contains(needle))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProcessModel {
    Waterfall,
    #[serde(rename = "TDD")]
    Tdd,
    Scrum,
    ScrumPlusCodeT,
}

impl ProcessModel {
    pub fn is_scrum(self) -> bool {
        matches!(self, ProcessModel::Scrum | ProcessModel::ScrumPlusCodeT)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProcessModel::Waterfall => "Waterfall",
            ProcessModel::Tdd => "TDD",
            ProcessModel::Scrum => "Scrum",
            ProcessModel::ScrumPlusCodeT => "ScrumPlusCodeT",
        }
    }

    pub fn parse(s: &str) -> Option<ProcessModel> {
        match s.to_ascii_lowercase().as_str() {
            "waterfall" => Some(ProcessModel::Waterfall),
            "tdd" => Some(ProcessModel::Tdd),
            "scrum" => Some(ProcessModel::Scrum),
            "scrumpluscodet" | "scrum+codet" | "scrum-codet" => {
                Some(ProcessModel::ScrumPlusCodeT)
            }
            _ => None,
        }
    }
}

impl fmt::Display for ProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ablation {
    SkipRequirement,
    SkipDesign,
    SkipCodeReview,
    SkipTest,
    SkipSprintMeeting,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AblationParseError {
    #[error("the implementation activity cannot be removed")]
    Implementation,
    #[error("unknown ablation flag {0:?}")]
    Unknown(String),
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::SkipRequirement,
        Ablation::SkipDesign,
        Ablation::SkipCodeReview,
        Ablation::SkipTest,
        Ablation::SkipSprintMeeting,
    ];

    /// Short label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Ablation::SkipRequirement => "rm-requirement",
            Ablation::SkipDesign => "rm-design",
            Ablation::SkipCodeReview => "rm-codeReview",
            Ablation::SkipTest => "rm-test",
            Ablation::SkipSprintMeeting => "rm-sprintMeeting",
        }
    }

    /// Accepts either the flag name (`SkipDesign`) or the table label (`rm-design`).
    pub fn parse(s: &str) -> Result<Ablation, AblationParseError> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let stem = norm
            .strip_prefix("skip")
            .or_else(|| norm.strip_prefix("rm"))
            .unwrap_or(&norm);
        match stem {
            "requirement" | "requirements" => Ok(Ablation::SkipRequirement),
            "design" => Ok(Ablation::SkipDesign),
            "codereview" | "review" => Ok(Ablation::SkipCodeReview),
            "test" | "tests" | "testing" => Ok(Ablation::SkipTest),
            "sprintmeeting" | "sprintmeetings" | "meeting" => Ok(Ablation::SkipSprintMeeting),
            "implementation" | "coding" | "code" => Err(AblationParseError::Implementation),
            _ => Err(AblationParseError::Unknown(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("refinement_limit_t must be at least 1")]
    RefinementLimit,
    #[error("temperature {0} is outside [0, 2]")]
    Temperature(f64),
    #[error("codet_versions_n and codet_assertions_m must be at least 1")]
    CodeTCounts,
    #[error("SkipSprintMeeting only applies to Scrum pipelines")]
    SprintMeetingWithoutScrum,
    #[error("sandbox timeout must be positive")]
    Timeout,
    #[error("model_version is empty")]
    ModelVersion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub model: ProcessModel,
    pub refinement_limit_t: u32,
    pub max_full_restarts: u32,
    pub temperature: f64,
    pub model_version: String,
    pub ablation: BTreeSet<Ablation>,
    pub codet_versions_n: u32,
    pub codet_assertions_m: u32,
    pub sandbox_timeout: Duration,
    /// Seed for shuffling the meeting speaking order; `None` keeps canonical order.
    #[serde(default)]
    pub meeting_shuffle_seed: Option<u64>,
    /// Keep only the last N history turns per request; `None` sends everything.
    #[serde(default)]
    pub history_window: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: ProcessModel::Waterfall,
            refinement_limit_t: 3,
            max_full_restarts: 1,
            temperature: 0.8,
            model_version: String::from("gpt-3.5-turbo-1106"),
            ablation: BTreeSet::new(),
            codet_versions_n: 3,
            codet_assertions_m: 5,
            sandbox_timeout: Duration::from_secs(10),
            meeting_shuffle_seed: None,
            history_window: None,
        }
    }
}

impl PipelineConfig {
    pub fn for_model(model: ProcessModel) -> Self {
        PipelineConfig {
            model,
            ..PipelineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.refinement_limit_t < 1 {
            return Err(ConfigError::RefinementLimit);
        }
        if !(0.0..=2.0).contains(&self.temperature) || self.temperature.is_nan() {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if self.model == ProcessModel::ScrumPlusCodeT
            && (self.codet_versions_n < 1 || self.codet_assertions_m < 1)
        {
            return Err(ConfigError::CodeTCounts);
        }
        if self.ablation.contains(&Ablation::SkipSprintMeeting) && !self.model.is_scrum() {
            return Err(ConfigError::SprintMeetingWithoutScrum);
        }
        if self.sandbox_timeout.is_zero() {
            return Err(ConfigError::Timeout);
        }
        if self.model_version.trim().is_empty() {
            return Err(ConfigError::ModelVersion);
        }
        Ok(())
    }
}

/// What a transcript step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepAction {
    Write,
    Review,
    Refine,
    Fix,
    Comment,
    Summarize,
    WriteAssertions,
    ExecuteTests,
    ExecuteAssertions,
    SelectVersion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub index: u32,
    pub activity: Activity,
    pub role: Role,
    pub action: StepAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PromptEnvelope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<Artifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution: Option<ExecutionReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Released,
    GaveUp,
}

/// Full transcript and result of one pipeline execution on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem_id: String,
    pub config: PipelineConfig,
    pub steps: Vec<Step>,
    pub final_code: String,
    pub restarts_used: u32,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time: Duration,
}

/// Timing data pulled out of a [`RunRecord`] so the record itself is
/// reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub wall_time: Duration,
    pub executions: Vec<(u32, Duration)>,
}

impl RunRecord {
    pub fn code_artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.artifacts().filter(|a| a.kind == ArtifactKind::Code)
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.steps.iter().filter_map(|s| s.artifact.as_ref())
    }

    pub fn prompts(&self) -> impl Iterator<Item = &PromptEnvelope> {
        self.steps.iter().filter_map(|s| s.prompt.as_ref())
    }

    pub fn count_steps(&self, role: Role, action: StepAction) -> usize {
        self.steps
            .iter()
            .filter(|s| s.role == role && s.action == action)
            .count()
    }

    /// Activity tags with consecutive duplicates collapsed.
    pub fn activity_flow(&self) -> Vec<Activity> {
        let mut flow: Vec<Activity> = Vec::new();
        for step in &self.steps {
            if flow.last() != Some(&step.activity) {
                flow.push(step.activity);
            }
        }
        flow
    }

    /// Zeroes every wall-clock measurement and returns them.
    pub fn take_timings(&mut self) -> RunTimings {
        let wall_time = core::mem::take(&mut self.wall_time);
        let mut executions = Vec::new();
        for step in &mut self.steps {
            if let Some(exec) = step.execution.as_mut() {
                executions.push((step.index, core::mem::take(&mut exec.duration)));
            }
        }
        RunTimings {
            wall_time,
            executions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem() -> ProgrammingProblem {
        ProgrammingProblem {
            id: "HumanEval/0".into(),
            prompt: "def add(a, b):\n    \"\"\"Return a + b.\n    >>> add(1, 2)\n    3\n    \"\"\"\n"
                .into(),
            entry_point: "add".into(),
            oracle_tests: "def check(candidate):\n    assert candidate(2, 3) == 5\n\ncheck(add)\n"
                .into(),
            benchmark: BenchmarkKind::HumanEval,
            reference_solution: None,
        }
    }

    #[test]
    fn well_formed_problem_is_ok() {
        assert!(validate_problem(&problem()).is_ok());
    }

    #[test]
    fn empty_entry_point_is_reported() {
        let mut p = problem();
        p.entry_point = String::new();
        let result = validate_problem(&p);
        assert_eq!(result.violations, [Violation::EntryPointEmpty]);
        assert_eq!(result.violations[0].to_string(), "entry_point empty");
    }

    #[test]
    fn non_identifier_entry_point() {
        let mut p = problem();
        p.entry_point = "add two".into();
        assert!(matches!(
            validate_problem(&p).violations[..],
            [Violation::EntryPointNotIdentifier(_)]
        ));
    }

    #[test]
    fn leaked_oracle_is_reported_with_other_violations() {
        let mut p = problem();
        p.prompt.push_str(&p.oracle_tests.clone());
        p.entry_point = String::new();
        let result = validate_problem(&p);
        assert_eq!(result.violations.len(), 2);
        assert_eq!(
            result.violations[1].to_string(),
            "oracle leaked into prompt"
        );
    }

    #[test]
    fn a_single_leaked_assertion_counts_as_leak() {
        let mut p = problem();
        p.prompt.push_str("\nassert candidate(2, 3) == 5\n");
        assert!(!validate_problem(&p).is_ok());
    }

    #[test]
    fn ablation_parsing() {
        assert_eq!(Ablation::parse("rm-test"), Ok(Ablation::SkipTest));
        assert_eq!(Ablation::parse("SkipCodeReview"), Ok(Ablation::SkipCodeReview));
        assert_eq!(
            Ablation::parse("rm-implementation"),
            Err(AblationParseError::Implementation)
        );
        assert!(matches!(
            Ablation::parse("rm-lunch"),
            Err(AblationParseError::Unknown(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.refinement_limit_t = 0;
        assert_eq!(cfg.validate(), Err(ConfigError::RefinementLimit));
        cfg.refinement_limit_t = 3;
        cfg.temperature = 2.5;
        assert!(matches!(cfg.validate(), Err(ConfigError::Temperature(_))));
        cfg.temperature = 0.8;
        cfg.ablation.insert(Ablation::SkipSprintMeeting);
        assert_eq!(cfg.validate(), Err(ConfigError::SprintMeetingWithoutScrum));
        cfg.model = ProcessModel::Scrum;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn envelope_serializes_three_fields() {
        let env = PromptEnvelope {
            role_statement: "You are a Tester responsible for testing".into(),
            instruction_steps: alloc::vec!["Read".into(), "Write".into()],
            context: alloc::vec!["ctx".into()],
        };
        let value: serde_json::Value = serde_json::from_str(&env.to_json()).unwrap();
        let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["Context", "Instruction", "Role"]);
    }
}
