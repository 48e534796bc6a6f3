//! Prompt catalogue: one task specification per (role, task, dialect).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ArtifactKind, Role};

/// Default catalogue shipped with the crate.
pub const DEFAULT_CATALOGUE_JSON: &str = include_str!("prompts.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dialect {
    Plain,
    /// Scrum terminology: user stories instead of requirement documents.
    Agile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskName {
    WriteRequirement,
    WriteDesign,
    WriteCode,
    FixCode,
    WriteAssertions,
    DesignTests,
    WriteTestScript,
    WriteFailureReport,
    Review,
    Revise,
    Discuss,
    SummarizePlanning,
    SummarizeReview,
}

impl TaskName {
    /// Artifact kind produced by the task. `Revise` keeps the kind of the
    /// revised artifact and `Discuss` produces a meeting comment, so both
    /// return `None`.
    pub fn output_kind(self) -> Option<ArtifactKind> {
        Some(match self {
            TaskName::WriteRequirement => ArtifactKind::RequirementDoc,
            TaskName::WriteDesign => ArtifactKind::DesignDoc,
            TaskName::WriteCode | TaskName::FixCode => ArtifactKind::Code,
            TaskName::WriteAssertions | TaskName::WriteTestScript => ArtifactKind::TestScript,
            TaskName::DesignTests => ArtifactKind::TestDesign,
            TaskName::WriteFailureReport => ArtifactKind::FailureReport,
            TaskName::Review | TaskName::SummarizeReview => ArtifactKind::Suggestions,
            TaskName::SummarizePlanning => ArtifactKind::TaskList,
            TaskName::Revise | TaskName::Discuss => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub role: Role,
    pub task_name: TaskName,
    pub dialect: Dialect,
    /// Duty text substituted into "You are a [role] responsible for [task]".
    pub task: String,
    pub instruction_steps: Vec<String>,
    /// Artifact kinds the task may receive as context.
    pub context_kinds: Vec<ArtifactKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogueError {
    #[error("catalogue document is malformed: {0}")]
    Parse(String),
    #[error("duplicate catalogue record for {0:?}/{1:?}/{2:?}")]
    Duplicate(Role, TaskName, Dialect),
    #[error("catalogue is missing {0:?}/{1:?}/{2:?}")]
    Missing(Role, TaskName, Dialect),
    #[error("record {0:?}/{1:?}/{2:?} has no instruction steps")]
    NoSteps(Role, TaskName, Dialect),
}

#[derive(Deserialize, Serialize)]
struct CatalogueDocument {
    records: Vec<TaskSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptCatalogue {
    specs: BTreeMap<(Role, TaskName, Dialect), TaskSpec>,
}

/// Every (role, task) pair a pipeline can request, with the dialects it is
/// needed in.
const REQUIRED: &[(Role, TaskName, &[Dialect])] = &[
    (Role::RequirementEngineer, TaskName::WriteRequirement, BOTH),
    (Role::Architect, TaskName::WriteDesign, BOTH),
    (Role::Developer, TaskName::WriteCode, BOTH),
    (Role::Developer, TaskName::FixCode, BOTH),
    (Role::Developer, TaskName::WriteAssertions, AGILE),
    (Role::Tester, TaskName::DesignTests, BOTH),
    (Role::Tester, TaskName::WriteTestScript, BOTH),
    (Role::Tester, TaskName::WriteFailureReport, BOTH),
    (Role::RequirementEngineer, TaskName::Review, BOTH),
    (Role::Architect, TaskName::Review, BOTH),
    (Role::Developer, TaskName::Review, BOTH),
    (Role::Tester, TaskName::Review, BOTH),
    (Role::RequirementEngineer, TaskName::Revise, BOTH),
    (Role::Architect, TaskName::Revise, BOTH),
    (Role::Tester, TaskName::Revise, BOTH),
    (Role::RequirementEngineer, TaskName::Discuss, AGILE),
    (Role::Architect, TaskName::Discuss, AGILE),
    (Role::Developer, TaskName::Discuss, AGILE),
    (Role::Tester, TaskName::Discuss, AGILE),
    (Role::ScrumMaster, TaskName::SummarizePlanning, AGILE),
    (Role::ScrumMaster, TaskName::SummarizeReview, AGILE),
];
const BOTH: &[Dialect] = &[Dialect::Plain, Dialect::Agile];
const AGILE: &[Dialect] = &[Dialect::Agile];

impl PromptCatalogue {
    pub fn from_specs(specs: impl IntoIterator<Item = TaskSpec>) -> Result<Self, CatalogueError> {
        let mut map = BTreeMap::new();
        for spec in specs {
            let key = (spec.role, spec.task_name, spec.dialect);
            if spec.instruction_steps.is_empty() {
                return Err(CatalogueError::NoSteps(key.0, key.1, key.2));
            }
            if map.insert(key, spec).is_some() {
                return Err(CatalogueError::Duplicate(key.0, key.1, key.2));
            }
        }
        let catalogue = PromptCatalogue { specs: map };
        catalogue.check_complete()?;
        Ok(catalogue)
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogueError> {
        let doc: CatalogueDocument = serde_json::from_str(text)
            .map_err(|e| CatalogueError::Parse(alloc::format!("{e}")))?;
        PromptCatalogue::from_specs(doc.records)
    }

    pub fn to_json(&self) -> String {
        let doc = CatalogueDocument {
            records: self.specs.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).unwrap_or_default()
    }

    fn check_complete(&self) -> Result<(), CatalogueError> {
        for (role, task, dialects) in REQUIRED {
            for dialect in *dialects {
                if !self.specs.contains_key(&(*role, *task, *dialect)) {
                    return Err(CatalogueError::Missing(*role, *task, *dialect));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, role: Role, task: TaskName, dialect: Dialect) -> Option<&TaskSpec> {
        self.specs.get(&(role, task, dialect))
    }

    /// Like [`get`](Self::get) but for pairs that `check_complete` guarantees.
    pub(crate) fn spec(&self, role: Role, task: TaskName, dialect: Dialect) -> &TaskSpec {
        self.get(role, task, dialect)
            .or_else(|| self.get(role, task, Dialect::Agile))
            .expect("catalogue completeness is checked at construction")
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskSpec> {
        self.specs.values()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

impl Default for PromptCatalogue {
    fn default() -> Self {
        PromptCatalogue::from_json(DEFAULT_CATALOGUE_JSON)
            .expect("bundled prompt catalogue is valid")
    }
}
