//! A deterministic offline [`ChatModel`] that answers each prompt according
//! to the catalogue task it recognizes. Used for dry runs, for recording
//! fixture cassettes and in tests.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::catalogue::{PromptCatalogue, TaskName};
use crate::chat::{ChatModel, CompletionRequest, GatewayError, Speaker};
use crate::domain::{PromptEnvelope, Role};

/// Answers are a pure function of the request, so the model is `Sync` and
/// replays identically.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    catalogue: PromptCatalogue,
    /// Bodies returned by successive first drafts and failure fixes of one
    /// conversation; the last one repeats. Refinements after review return
    /// the reviewed code unchanged.
    pub code_versions: Vec<String>,
    /// Returned for test-script prompts.
    pub test_script: String,
    /// Returned for assertion prompts.
    pub assertions: String,
}

impl Default for ScriptedModel {
    fn default() -> Self {
        ScriptedModel::new(
            &["def solution(*args):\n    return None"],
            "import unittest\n\n\nclass T(unittest.TestCase):\n    def test_smoke(self):\n        self.assertTrue(True)\n",
            "assert True",
        )
    }
}

impl ScriptedModel {
    pub fn new(code_versions: &[&str], test_script: &str, assertions: &str) -> Self {
        ScriptedModel {
            catalogue: PromptCatalogue::default(),
            code_versions: code_versions.iter().map(|s| String::from(*s)).collect(),
            test_script: String::from(test_script),
            assertions: String::from(assertions),
        }
    }

    /// Catalogue task and role behind a rendered prompt.
    pub fn classify(&self, user_text: &str) -> Option<(Role, TaskName)> {
        let envelope: PromptEnvelope = serde_json::from_str(user_text).ok()?;
        self.catalogue
            .iter()
            .find(|spec| {
                spec.instruction_steps == envelope.instruction_steps
                    && envelope.role_statement.starts_with("You are a")
                    && envelope.role_statement.contains(spec.role.title())
            })
            .map(|spec| (spec.role, spec.task_name))
    }

    /// First drafts and fixes after failing tests advance the code version.
    fn is_new_draft(&self, user_text: &str) -> bool {
        match self.classify(user_text) {
            Some((_, TaskName::WriteCode)) => true,
            Some((_, TaskName::FixCode)) => is_failure_fix(user_text),
            _ => false,
        }
    }

    fn code(&self, index: usize) -> &str {
        match self.code_versions.get(index) {
            Some(code) => code,
            None => self.code_versions.last().map(String::as_str).unwrap_or("pass"),
        }
    }
}

fn prompt_context(user_text: &str) -> Vec<String> {
    serde_json::from_str::<PromptEnvelope>(user_text)
        .map(|e| e.context)
        .unwrap_or_default()
}

fn is_failure_fix(user_text: &str) -> bool {
    prompt_context(user_text)
        .iter()
        .any(|c| c.starts_with("Test failure report:"))
}

impl ChatModel for ScriptedModel {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let (last, earlier) = request.turns.split_last().expect("validated nonempty");
        let Some((role, task)) = self.classify(&last.text) else {
            return Ok(String::from("Acknowledged."));
        };
        let reply = match task {
            TaskName::FixCode if !is_failure_fix(&last.text) => {
                // Refinement after review keeps the reviewed code.
                let reviewed = prompt_context(&last.text)
                    .into_iter()
                    .find_map(|c| c.strip_prefix("Code:\n").map(String::from))
                    .unwrap_or_default();
                format!("```python\n{reviewed}\n```")
            }
            TaskName::WriteCode | TaskName::FixCode => {
                let prior = earlier
                    .iter()
                    .filter(|t| t.speaker == Speaker::User)
                    .filter(|t| self.is_new_draft(&t.text))
                    .count();
                format!("```python\n{}\n```", self.code(prior))
            }
            TaskName::WriteTestScript => format!("```python\n{}\n```", self.test_script),
            TaskName::WriteAssertions => format!("```python\n{}\n```", self.assertions),
            TaskName::Revise if role == Role::Tester => {
                format!("```python\n{}\n```", self.test_script)
            }
            TaskName::Revise => String::from("Revised document addressing every suggestion."),
            TaskName::Review => format!("{} suggests clarifying edge cases.", role.title()),
            TaskName::Discuss => format!("{} will focus on its own activity.", role.title()),
            TaskName::SummarizePlanning => String::from(
                "1. Requirement Engineer: write user stories\n2. Architect: design\n3. Developer: implement\n4. Tester: test",
            ),
            TaskName::SummarizeReview => String::from("Decision recorded."),
            TaskName::WriteRequirement => String::from("Requirement: implement the described function."),
            TaskName::WriteDesign => String::from("Design: a single function with input validation."),
            TaskName::DesignTests => String::from("Test cases: typical input, empty input, boundary values."),
            TaskName::WriteFailureReport => String::from("Failure report: the generated tests did not pass."),
        };
        Ok(reply)
    }
}
