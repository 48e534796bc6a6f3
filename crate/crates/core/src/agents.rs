//! Role agents: prompt rendering, task execution, review and refinement.
//!
//! A [`Session`] carries everything one pipeline run shares between agents:
//! the model handle, the prompt catalogue, the conversation history and the
//! transcript of steps. Agent operations are free functions over a session so
//! the pipelines read as a sequence of role actions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::catalogue::{Dialect, PromptCatalogue, TaskName, TaskSpec};
use crate::chat::{ChatModel, Conversation, GatewayError, SamplingSettings};
use crate::domain::{
    Activity, Artifact, ArtifactKind, PromptEnvelope, Role, Step, StepAction,
};
use crate::execution::ExecutionReport;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("{role} task {task:?} does not accept {kind:?} context")]
    ContextKindMismatch {
        role: Role,
        task: TaskName,
        kind: ArtifactKind,
    },
    #[error("model returned an empty response")]
    EmptyResponse,
    #[error("review needs at least one reviewer")]
    NoReviewers,
    #[error("the tester must review every non-test artifact")]
    TesterMissing,
    #[error("refinement input is {0:?}, expected Suggestions")]
    NotSuggestions(ArtifactKind),
    #[error("sprint discussion is missing a comment from the {0}")]
    IncompleteDiscussion(Role),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One entry of a prompt's context.
#[derive(Debug, Clone, Copy)]
pub enum ContextItem<'a> {
    Artifact(&'a Artifact),
    /// Non-artifact text such as the problem statement, a test execution
    /// result or meeting discussion.
    Excerpt { label: &'a str, text: &'a str },
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some(c) if "AEIOUaeiou".contains(c) => "an",
        _ => "a",
    }
}

fn lower_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Fills the Role / Instruction / Context template for `spec`.
pub fn render_prompt(
    spec: &TaskSpec,
    context: &[ContextItem<'_>],
) -> Result<PromptEnvelope, AgentError> {
    let agile = spec.dialect == Dialect::Agile;
    let mut rendered = Vec::with_capacity(context.len());
    for item in context {
        match item {
            ContextItem::Artifact(artifact) => {
                if !spec.context_kinds.contains(&artifact.kind) {
                    return Err(AgentError::ContextKindMismatch {
                        role: spec.role,
                        task: spec.task_name,
                        kind: artifact.kind,
                    });
                }
                rendered.push(format!(
                    "{}:\n{}",
                    artifact.kind.label(agile),
                    artifact.content
                ));
            }
            ContextItem::Excerpt { label, text } => rendered.push(format!("{label}:\n{text}")),
        }
    }
    let title = spec.role.title();
    Ok(PromptEnvelope {
        role_statement: format!(
            "You are {} {title} responsible for {}",
            article(title),
            lower_first(&spec.task)
        ),
        instruction_steps: spec.instruction_steps.clone(),
        context: rendered,
    })
}

/// Body of the first fenced code block, or the whole trimmed response when
/// there is no fence.
pub fn extract_code(raw: &str) -> Result<String, AgentError> {
    let mut lines = raw.lines();
    let mut body: Option<Vec<&str>> = None;
    for line in lines.by_ref() {
        if line.trim_start().starts_with("```") {
            body = Some(Vec::new());
            break;
        }
    }
    let text = match body {
        None => raw.trim().to_string(),
        Some(mut collected) => {
            for line in lines {
                if line.trim_start().starts_with("```") {
                    break;
                }
                collected.push(line);
            }
            collected.join("\n").trim().to_string()
        }
    };
    if text.is_empty() {
        Err(AgentError::EmptyResponse)
    } else {
        Ok(text)
    }
}

/// Activity a freshly produced artifact belongs to.
fn artifact_activity(kind: ArtifactKind, step_activity: Activity) -> Activity {
    match kind {
        ArtifactKind::RequirementDoc => Activity::Requirement,
        ArtifactKind::DesignDoc => Activity::Design,
        ArtifactKind::Code => Activity::Implementation,
        ArtifactKind::TaskList => Activity::SprintPlanning,
        ArtifactKind::TestDesign | ArtifactKind::FailureReport => Activity::Testing,
        ArtifactKind::TestScript if step_activity == Activity::Implementation => {
            Activity::Implementation
        }
        ArtifactKind::TestScript => Activity::Testing,
        ArtifactKind::Suggestions => step_activity,
    }
}

fn action_for(task: TaskName) -> StepAction {
    match task {
        TaskName::FixCode => StepAction::Fix,
        TaskName::Review => StepAction::Review,
        TaskName::Revise => StepAction::Refine,
        TaskName::Discuss => StepAction::Comment,
        TaskName::SummarizePlanning | TaskName::SummarizeReview => StepAction::Summarize,
        TaskName::WriteAssertions => StepAction::WriteAssertions,
        _ => StepAction::Write,
    }
}

/// Shared state of one pipeline run.
pub struct Session<'a> {
    model: &'a dyn ChatModel,
    catalogue: &'a PromptCatalogue,
    settings: SamplingSettings,
    dialect: Dialect,
    conversation: Conversation,
    steps: Vec<Step>,
    next_revision: BTreeMap<(ArtifactKind, Activity), u32>,
    activity: Activity,
}

impl<'a> Session<'a> {
    pub fn new(
        model: &'a dyn ChatModel,
        catalogue: &'a PromptCatalogue,
        settings: SamplingSettings,
        dialect: Dialect,
    ) -> Self {
        Session {
            model,
            catalogue,
            settings,
            dialect,
            conversation: Conversation::new(),
            steps: Vec::new(),
            next_revision: BTreeMap::new(),
            activity: Activity::Requirement,
        }
    }

    pub fn dialect(&self) -> Dialect {
        self.dialect
    }

    /// Sets the activity tag for subsequent steps.
    pub fn enter(&mut self, activity: Activity) {
        self.activity = activity;
    }

    pub fn activity(&self) -> Activity {
        self.activity
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn into_steps(self) -> Vec<Step> {
        self.steps
    }

    pub fn spec(&self, role: Role, task: TaskName) -> &'a TaskSpec {
        self.catalogue.spec(role, task, self.dialect)
    }

    fn ask(&mut self, envelope: &PromptEnvelope) -> Result<String, AgentError> {
        let text = envelope.to_json();
        let request = self.conversation.request(&text, &self.settings);
        let response = self.model.complete(&request)?;
        self.conversation.record(&text, &response);
        Ok(response)
    }

    fn issue(
        &mut self,
        kind: ArtifactKind,
        producer: Role,
        content: String,
        revision: Option<u32>,
    ) -> Artifact {
        let activity = artifact_activity(kind, self.activity);
        let counter = self.next_revision.entry((kind, activity)).or_insert(0);
        let revision = revision.unwrap_or(*counter);
        *counter = (*counter).max(revision + 1);
        Artifact {
            kind,
            content,
            producer,
            activity,
            revision,
        }
    }

    fn push_step(
        &mut self,
        role: Role,
        action: StepAction,
        prompt: Option<PromptEnvelope>,
        response: Option<String>,
        artifact: Option<Artifact>,
        execution: Option<ExecutionReport>,
    ) {
        let index = self.steps.len() as u32;
        self.steps.push(Step {
            index,
            activity: self.activity,
            role,
            action,
            prompt,
            response,
            artifact,
            execution,
        });
    }

    /// Records a test execution performed by `role`.
    pub fn record_execution(&mut self, role: Role, action: StepAction, report: ExecutionReport) {
        self.push_step(role, action, None, None, None, Some(report));
    }

    /// Records an artifact that was derived without a model call (for
    /// example the version chosen by CodeT selection).
    pub fn record_derived(
        &mut self,
        role: Role,
        action: StepAction,
        kind: ArtifactKind,
        content: String,
    ) -> Artifact {
        let artifact = self.issue(kind, role, content, None);
        self.push_step(role, action, None, None, Some(artifact.clone()), None);
        artifact
    }

    /// Renders, sends and records a prompt whose answer is plain text
    /// (meeting comments, review comments).
    fn converse(
        &mut self,
        role: Role,
        task: TaskName,
        context: &[ContextItem<'_>],
    ) -> Result<(PromptEnvelope, String), AgentError> {
        let spec = self.spec(role, task);
        let envelope = render_prompt(spec, context)?;
        let response = self.ask(&envelope)?;
        Ok((envelope, response))
    }
}

fn content_for(kind: ArtifactKind, raw: &str) -> Result<String, AgentError> {
    if kind.is_source() {
        extract_code(raw)
    } else {
        let text = raw.trim();
        if text.is_empty() {
            Err(AgentError::EmptyResponse)
        } else {
            Ok(text.to_string())
        }
    }
}

/// Runs one catalogue task and returns the artifact it produced.
pub fn perform_task(
    session: &mut Session<'_>,
    role: Role,
    task: TaskName,
    context: &[ContextItem<'_>],
) -> Result<Artifact, AgentError> {
    let kind = task
        .output_kind()
        .expect("perform_task is only used with artifact-producing tasks");
    let (envelope, response) = session.converse(role, task, context)?;
    let content = content_for(kind, &response)?;
    let artifact = session.issue(kind, role, content, None);
    session.push_step(
        role,
        action_for(task),
        Some(envelope),
        Some(response),
        Some(artifact.clone()),
        None,
    );
    Ok(artifact)
}

/// Collects one labelled comment per reviewer into a Suggestions artifact.
/// The tester must be among the reviewers unless the artifact is a test script.
pub fn review_artifact(
    session: &mut Session<'_>,
    artifact: &Artifact,
    reviewers: &[Role],
) -> Result<Artifact, AgentError> {
    if reviewers.is_empty() {
        return Err(AgentError::NoReviewers);
    }
    if artifact.kind != ArtifactKind::TestScript && !reviewers.contains(&Role::Tester) {
        return Err(AgentError::TesterMissing);
    }
    let mut sections = Vec::with_capacity(reviewers.len());
    let mut pending = Vec::with_capacity(reviewers.len());
    for &reviewer in reviewers {
        let (envelope, response) =
            session.converse(reviewer, TaskName::Review, &[ContextItem::Artifact(artifact)])?;
        let comment = response.trim();
        if comment.is_empty() {
            return Err(AgentError::EmptyResponse);
        }
        sections.push(format!("## {}\n{}", reviewer.title(), comment));
        pending.push((reviewer, envelope, response));
    }
    let last = *reviewers.last().expect("checked nonempty");
    let suggestions = session.issue(ArtifactKind::Suggestions, last, sections.join("\n\n"), None);
    let count = pending.len();
    for (i, (reviewer, envelope, response)) in pending.into_iter().enumerate() {
        let attached = (i + 1 == count).then(|| suggestions.clone());
        session.push_step(
            reviewer,
            StepAction::Review,
            Some(envelope),
            Some(response),
            attached,
            None,
        );
    }
    Ok(suggestions)
}

fn regenerate(
    session: &mut Session<'_>,
    original: &Artifact,
    task: TaskName,
    action: StepAction,
    context: &[ContextItem<'_>],
) -> Result<Artifact, AgentError> {
    let role = original.producer;
    let (envelope, response) = session.converse(role, task, context)?;
    let content = content_for(original.kind, &response)?;
    let revised = Artifact {
        kind: original.kind,
        content,
        producer: role,
        activity: original.activity,
        revision: original.revision + 1,
    };
    let counter = session
        .next_revision
        .entry((revised.kind, revised.activity))
        .or_insert(0);
    *counter = (*counter).max(revised.revision + 1);
    session.push_step(
        role,
        action,
        Some(envelope),
        Some(response),
        Some(revised.clone()),
        None,
    );
    Ok(revised)
}

/// Regenerates `original` from itself plus reviewer suggestions; the result
/// has the same kind and `revision + 1`.
pub fn refine_artifact(
    session: &mut Session<'_>,
    original: &Artifact,
    suggestions: &Artifact,
    extra_context: &[ContextItem<'_>],
) -> Result<Artifact, AgentError> {
    if suggestions.kind != ArtifactKind::Suggestions {
        return Err(AgentError::NotSuggestions(suggestions.kind));
    }
    let task = if original.producer == Role::Developer {
        TaskName::FixCode
    } else {
        TaskName::Revise
    };
    let mut context = Vec::with_capacity(extra_context.len() + 2);
    context.push(ContextItem::Artifact(original));
    context.extend_from_slice(extra_context);
    context.push(ContextItem::Artifact(suggestions));
    regenerate(session, original, task, StepAction::Refine, &context)
}

/// Developer fix after a failing test run.
pub fn fix_code(
    session: &mut Session<'_>,
    code: &Artifact,
    failure_report: &Artifact,
    suggestions: Option<&Artifact>,
) -> Result<Artifact, AgentError> {
    let mut context = Vec::with_capacity(3);
    context.push(ContextItem::Artifact(code));
    context.push(ContextItem::Artifact(failure_report));
    if let Some(s) = suggestions {
        context.push(ContextItem::Artifact(s));
    }
    regenerate(session, code, TaskName::FixCode, StepAction::Fix, &context)
}

/// One meeting comment from `role`, given the shared buffer so far.
pub fn discuss(
    session: &mut Session<'_>,
    role: Role,
    context: &[ContextItem<'_>],
    buffer: &[(Role, String)],
) -> Result<String, AgentError> {
    let history = render_discussion(buffer);
    let mut items: Vec<ContextItem<'_>> = context.to_vec();
    if !buffer.is_empty() {
        items.push(ContextItem::Excerpt {
            label: "Discussion history",
            text: &history,
        });
    }
    let (envelope, response) = session.converse(role, TaskName::Discuss, &items)?;
    let comment = response.trim().to_string();
    if comment.is_empty() {
        return Err(AgentError::EmptyResponse);
    }
    session.push_step(
        role,
        StepAction::Comment,
        Some(envelope),
        Some(response),
        None,
        None,
    );
    Ok(comment)
}

pub fn render_discussion(buffer: &[(Role, String)]) -> String {
    buffer
        .iter()
        .map(|(role, text)| format!("{}: {}", role.title(), text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn check_discussion(discussion: &[(Role, String)]) -> Result<(), AgentError> {
    for role in Role::DEVELOPMENT {
        let count = discussion.iter().filter(|(r, _)| *r == role).count();
        if count != 1 {
            return Err(AgentError::IncompleteDiscussion(role));
        }
    }
    if discussion.len() != Role::DEVELOPMENT.len() {
        return Err(AgentError::IncompleteDiscussion(Role::ScrumMaster));
    }
    Ok(())
}

/// Scrum Master turns the planning discussion into a task list.
pub fn scrum_summarize(
    session: &mut Session<'_>,
    discussion: &[(Role, String)],
) -> Result<Artifact, AgentError> {
    check_discussion(discussion)?;
    let text = render_discussion(discussion);
    perform_task(
        session,
        Role::ScrumMaster,
        TaskName::SummarizePlanning,
        &[ContextItem::Excerpt {
            label: "Meeting discussion",
            text: &text,
        }],
    )
}

/// Scrum Master summarizes the sprint review discussion into suggestions.
pub fn scrum_review_summary(
    session: &mut Session<'_>,
    discussion: &[(Role, String)],
    failure_report: Option<&Artifact>,
) -> Result<Artifact, AgentError> {
    check_discussion(discussion)?;
    let text = render_discussion(discussion);
    let mut context = Vec::with_capacity(2);
    if let Some(report) = failure_report {
        context.push(ContextItem::Artifact(report));
    }
    context.push(ContextItem::Excerpt {
        label: "Meeting discussion",
        text: &text,
    });
    perform_task(session, Role::ScrumMaster, TaskName::SummarizeReview, &context)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::CompletionRequest;
    use alloc::vec;
    use core::cell::RefCell;

    /// Answers from a fixed queue and remembers every request.
    struct Scripted {
        replies: RefCell<Vec<String>>,
        seen: RefCell<Vec<CompletionRequest>>,
    }

    impl Scripted {
        fn new(replies: &[&str]) -> Self {
            Scripted {
                replies: RefCell::new(replies.iter().rev().map(|s| s.to_string()).collect()),
                seen: RefCell::new(Vec::new()),
            }
        }
    }

    impl ChatModel for Scripted {
        fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
            self.seen.borrow_mut().push(request.clone());
            Ok(self.replies.borrow_mut().pop().unwrap_or_else(|| "ok".into()))
        }
    }

    fn settings() -> SamplingSettings {
        SamplingSettings {
            temperature: 0.8,
            model_version: "m".into(),
            history_window: None,
        }
    }

    fn doc(kind: ArtifactKind, producer: Role, activity: Activity, revision: u32) -> Artifact {
        Artifact {
            kind,
            content: "content".into(),
            producer,
            activity,
            revision,
        }
    }

    #[test]
    fn requirement_prompt_matches_role_table() {
        let cat = PromptCatalogue::default();
        let spec = cat
            .get(Role::RequirementEngineer, TaskName::WriteRequirement, Dialect::Plain)
            .unwrap();
        let env = render_prompt(
            spec,
            &[ContextItem::Excerpt {
                label: "Programming problem",
                text: "def f(): ...",
            }],
        )
        .unwrap();
        assert_eq!(
            env.instruction_steps,
            ["Analyze the requirement", "Write a requirement document"]
        );
        assert_eq!(
            env.role_statement,
            "You are a Requirement Engineer responsible for analyze and generate requirement documentation from the context."
        );
        assert_eq!(env.context, ["Programming problem:\ndef f(): ..."]);
    }

    #[test]
    fn architect_rejects_test_script_context() {
        let cat = PromptCatalogue::default();
        let spec = cat
            .get(Role::Architect, TaskName::WriteDesign, Dialect::Plain)
            .unwrap();
        let script = doc(ArtifactKind::TestScript, Role::Tester, Activity::Testing, 0);
        assert_eq!(
            render_prompt(spec, &[ContextItem::Artifact(&script)]),
            Err(AgentError::ContextKindMismatch {
                role: Role::Architect,
                task: TaskName::WriteDesign,
                kind: ArtifactKind::TestScript
            })
        );
    }

    #[test]
    fn agile_requirement_prompt_mentions_user_stories() {
        let cat = PromptCatalogue::default();
        let plain = cat
            .get(Role::RequirementEngineer, TaskName::WriteRequirement, Dialect::Plain)
            .unwrap();
        let agile = cat
            .get(Role::RequirementEngineer, TaskName::WriteRequirement, Dialect::Agile)
            .unwrap();
        let p = render_prompt(plain, &[]).unwrap();
        let a = render_prompt(agile, &[]).unwrap();
        assert!(a.role_statement.contains("user stories"));
        assert!(!p.role_statement.contains("user stories"));
        assert_eq!(p.instruction_steps.len(), a.instruction_steps.len());
    }

    #[test]
    fn extract_code_rules() {
        assert_eq!(
            extract_code("Here is code:\n```python\nx=1\n```\nHope it helps").unwrap(),
            "x=1"
        );
        assert_eq!(extract_code("x=1").unwrap(), "x=1");
        assert_eq!(
            extract_code("```\na=1\n```\ntext\n```python\nb=2\n```").unwrap(),
            "a=1"
        );
        assert_eq!(extract_code("```python\nx=1\n").unwrap(), "x=1");
        assert_eq!(extract_code("  \n"), Err(AgentError::EmptyResponse));
        assert_eq!(extract_code("prose\n```\n\n```"), Err(AgentError::EmptyResponse));
    }

    #[test]
    fn perform_task_kinds_and_revisions() {
        let model = Scripted::new(&["```python\ndef f():\n    return 1\n```", "   "]);
        let cat = PromptCatalogue::default();
        let mut session = Session::new(&model, &cat, settings(), Dialect::Plain);
        session.enter(Activity::Implementation);
        let req = doc(ArtifactKind::RequirementDoc, Role::RequirementEngineer, Activity::Requirement, 1);
        let design = doc(ArtifactKind::DesignDoc, Role::Architect, Activity::Design, 1);
        let code = perform_task(
            &mut session,
            Role::Developer,
            TaskName::WriteCode,
            &[ContextItem::Artifact(&req), ContextItem::Artifact(&design)],
        )
        .unwrap();
        assert_eq!(code.kind, ArtifactKind::Code);
        assert_eq!(code.revision, 0);
        assert_eq!(code.content, "def f():\n    return 1");
        assert_eq!(session.steps()[0].role, Role::Developer);
        assert!(session.steps()[0].response.as_deref().unwrap().contains("```"));

        let err = perform_task(
            &mut session,
            Role::Developer,
            TaskName::WriteCode,
            &[ContextItem::Artifact(&req)],
        );
        assert_eq!(err, Err(AgentError::EmptyResponse));
    }

    #[test]
    fn tester_tasks_produce_script_and_report() {
        let model = Scripted::new(&["```python\nimport unittest\n```", "The test failed."]);
        let cat = PromptCatalogue::default();
        let mut session = Session::new(&model, &cat, settings(), Dialect::Plain);
        session.enter(Activity::Testing);
        let design = doc(ArtifactKind::TestDesign, Role::Tester, Activity::Testing, 0);
        let script = perform_task(
            &mut session,
            Role::Tester,
            TaskName::WriteTestScript,
            &[ContextItem::Artifact(&design)],
        )
        .unwrap();
        assert_eq!(script.kind, ArtifactKind::TestScript);
        assert!(session.steps()[0]
            .prompt
            .as_ref()
            .unwrap()
            .role_statement
            .contains("unittest"));
        let report = perform_task(
            &mut session,
            Role::Tester,
            TaskName::WriteFailureReport,
            &[ContextItem::Excerpt {
                label: "Test execution result",
                text: "Status: TestFailures",
            }],
        )
        .unwrap();
        assert_eq!(report.kind, ArtifactKind::FailureReport);
    }

    #[test]
    fn review_sections_and_preconditions() {
        let model = Scripted::new(&["clarify inputs", "add edge cases", "rename test"]);
        let cat = PromptCatalogue::default();
        let mut session = Session::new(&model, &cat, settings(), Dialect::Plain);
        let req = doc(ArtifactKind::RequirementDoc, Role::RequirementEngineer, Activity::Requirement, 0);
        let s = review_artifact(&mut session, &req, &[Role::Architect, Role::Tester]).unwrap();
        assert_eq!(s.kind, ArtifactKind::Suggestions);
        assert_eq!(s.content, "## Architect\nclarify inputs\n\n## Tester\nadd edge cases");
        assert_eq!(s.producer, Role::Tester);
        assert_eq!(session.steps().len(), 2);
        assert!(session.steps()[0].artifact.is_none());

        let script = doc(ArtifactKind::TestScript, Role::Tester, Activity::Testing, 0);
        let s = review_artifact(&mut session, &script, &[Role::Developer]).unwrap();
        assert_eq!(s.content.matches("## ").count(), 1);

        assert_eq!(
            review_artifact(&mut session, &script, &[]),
            Err(AgentError::NoReviewers)
        );
        assert_eq!(
            review_artifact(&mut session, &req, &[Role::Architect]),
            Err(AgentError::TesterMissing)
        );
    }

    #[test]
    fn refine_increments_revision() {
        let model = Scripted::new(&["better requirements", "```\nx = 2\n```"]);
        let cat = PromptCatalogue::default();
        let mut session = Session::new(&model, &cat, settings(), Dialect::Plain);
        let req = doc(ArtifactKind::RequirementDoc, Role::RequirementEngineer, Activity::Requirement, 0);
        let sugg = doc(ArtifactKind::Suggestions, Role::Tester, Activity::Requirement, 0);
        let r1 = refine_artifact(&mut session, &req, &sugg, &[]).unwrap();
        assert_eq!((r1.kind, r1.revision), (ArtifactKind::RequirementDoc, 1));
        assert_ne!(r1.content, req.content);

        let code = doc(ArtifactKind::Code, Role::Developer, Activity::Implementation, 2);
        let c3 = refine_artifact(&mut session, &code, &sugg, &[]).unwrap();
        assert_eq!((c3.kind, c3.revision, c3.content.as_str()), (ArtifactKind::Code, 3, "x = 2"));

        assert_eq!(
            refine_artifact(&mut session, &req, &code, &[]),
            Err(AgentError::NotSuggestions(ArtifactKind::Code))
        );
    }

    #[test]
    fn summarize_requires_all_four_roles() {
        let model = Scripted::new(&["1. RE: write stories\n2. Dev: code"]);
        let cat = PromptCatalogue::default();
        let mut session = Session::new(&model, &cat, settings(), Dialect::Agile);
        let mut discussion: Vec<(Role, String)> = Role::DEVELOPMENT
            .iter()
            .map(|r| (*r, format!("{r} thinks")))
            .collect();
        let tasks = scrum_summarize(&mut session, &discussion).unwrap();
        assert_eq!(tasks.kind, ArtifactKind::TaskList);
        assert_eq!(tasks.content, "1. RE: write stories\n2. Dev: code");
        assert_eq!(tasks.producer, Role::ScrumMaster);

        discussion.pop();
        assert_eq!(
            scrum_summarize(&mut session, &discussion),
            Err(AgentError::IncompleteDiscussion(Role::Tester))
        );
    }

    #[test]
    fn history_is_sent_with_each_request() {
        let model = Scripted::new(&["a", "b"]);
        let cat = PromptCatalogue::default();
        let mut session = Session::new(&model, &cat, settings(), Dialect::Agile);
        let ctx = [ContextItem::Excerpt {
            label: "User requirement",
            text: "p",
        }];
        discuss(&mut session, Role::RequirementEngineer, &ctx, &[]).unwrap();
        let buffer = vec![(Role::RequirementEngineer, "a".to_string())];
        discuss(&mut session, Role::Architect, &ctx, &buffer).unwrap();
        let seen = model.seen.borrow();
        assert_eq!(seen[0].turns.len(), 1);
        assert_eq!(seen[1].turns.len(), 3);
        assert!(seen[1].turns[2].text.contains("Requirement Engineer: a"));
    }
}
