//! Waterfall, TDD and Scrum pipelines, the CodeT implementation variant,
//! ablation and the self-refinement budget.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agents::{
    discuss, fix_code, perform_task, refine_artifact, review_artifact, scrum_review_summary,
    scrum_summarize, AgentError, ContextItem, Session,
};
use crate::catalogue::{Dialect, PromptCatalogue, TaskName};
use crate::chat::{ChatModel, SamplingSettings};
use crate::domain::{
    Ablation, Activity, Artifact, ArtifactKind, ConfigError, Outcome, PipelineConfig,
    ProcessModel, ProgrammingProblem, Role, RunRecord, StepAction,
};
use crate::execution::{ExecutionJob, ExecutionReport, HarnessError, TestRunner};
use crate::stats::codet_select;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid ablation: {0}")]
    InvalidAblation(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Activity sequence of a process model before ablation.
pub fn plan_for(model: ProcessModel) -> Vec<Activity> {
    use Activity::*;
    match model {
        ProcessModel::Waterfall => alloc::vec![Requirement, Design, Implementation, CodeReview, Testing],
        ProcessModel::Tdd => alloc::vec![Requirement, Design, Testing, Implementation, CodeReview],
        ProcessModel::Scrum | ProcessModel::ScrumPlusCodeT => alloc::vec![
            SprintPlanning,
            Requirement,
            Design,
            Implementation,
            CodeReview,
            Testing,
            SprintReview
        ],
    }
}

/// Removes the activities named by `flags`. Removing testing also removes the
/// sprint review, which only exists to act on test results.
pub fn apply_ablation(
    plan: &[Activity],
    flags: &BTreeSet<Ablation>,
) -> Result<Vec<Activity>, PipelineError> {
    let scrum = plan.contains(&Activity::SprintPlanning);
    if flags.contains(&Ablation::SkipSprintMeeting) && !scrum {
        return Err(PipelineError::InvalidAblation(
            "SkipSprintMeeting applies only to Scrum pipelines",
        ));
    }
    let removed = |activity: Activity| -> bool {
        flags.iter().any(|flag| match flag {
            Ablation::SkipRequirement => activity == Activity::Requirement,
            Ablation::SkipDesign => activity == Activity::Design,
            Ablation::SkipCodeReview => activity == Activity::CodeReview,
            Ablation::SkipTest => {
                matches!(activity, Activity::Testing | Activity::SprintReview)
            }
            Ablation::SkipSprintMeeting => {
                matches!(activity, Activity::SprintPlanning | Activity::SprintReview)
            }
        })
    };
    let out: Vec<Activity> = plan.iter().copied().filter(|a| !removed(*a)).collect();
    if !out.contains(&Activity::Implementation) {
        return Err(PipelineError::InvalidAblation(
            "the implementation activity cannot be removed",
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
enum StepError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Latest artifact of each kind in the current pass.
#[derive(Default, Clone)]
struct Docs {
    requirement: Option<Artifact>,
    design: Option<Artifact>,
    test_design: Option<Artifact>,
    test_script: Option<Artifact>,
    task_list: Option<Artifact>,
    code: Option<Artifact>,
    failure_report: Option<Artifact>,
    review_suggestions: Option<Artifact>,
}

enum AttemptEnd {
    Released,
    BudgetSpent,
}

struct Pipeline<'a, 'r> {
    problem: &'a ProgrammingProblem,
    cfg: &'a PipelineConfig,
    plan: Vec<Activity>,
    session: Session<'a>,
    runner: &'r dyn TestRunner,
    rng: Option<ChaCha8Rng>,
    docs: Docs,
}

/// Label for the raw problem statement in prompt contexts.
fn problem_label(dialect: Dialect) -> &'static str {
    match dialect {
        Dialect::Plain => "Programming problem",
        Dialect::Agile => "User requirement",
    }
}

/// Keeps the first `m` assertion lines of a generated assertion script.
pub fn take_assertions(script: &str, m: usize) -> Vec<String> {
    script
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("assert ") || l.starts_with("assert("))
        .take(m)
        .map(String::from)
        .collect()
}

/// Wraps bare assertions as one unittest method each so the runner reports a
/// pass count per assertion.
pub fn assertion_suite(assertions: &[String]) -> String {
    let mut out = String::from("import unittest\n\n\nclass GeneratedAssertions(unittest.TestCase):\n");
    if assertions.is_empty() {
        out.push_str("    pass\n");
    }
    for (i, a) in assertions.iter().enumerate() {
        out.push_str(&format!("    def test_{i}(self):\n        {a}\n"));
    }
    out
}

impl<'a, 'r> Pipeline<'a, 'r> {
    fn problem_item(&self) -> ContextItem<'a> {
        ContextItem::Excerpt {
            label: problem_label(self.session.dialect()),
            text: &self.problem.prompt,
        }
    }

    /// Upstream artifacts present in this pass, falling back to the problem
    /// statement when every upstream activity was removed, plus the sprint
    /// task list where the task accepts it.
    fn context<'d>(
        docs: &'d Docs,
        session: &Session<'_>,
        problem: ContextItem<'d>,
        role: Role,
        task: TaskName,
        upstream: &[&'d Option<Artifact>],
    ) -> Vec<ContextItem<'d>> {
        let mut items: Vec<ContextItem<'d>> = upstream
            .iter()
            .filter_map(|a| a.as_ref().map(ContextItem::Artifact))
            .collect();
        if items.is_empty() {
            items.push(problem);
        }
        if let Some(tasks) = &docs.task_list {
            if session
                .spec(role, task)
                .context_kinds
                .contains(&ArtifactKind::TaskList)
            {
                items.push(ContextItem::Artifact(tasks));
            }
        }
        items
    }

    /// Roles that review an artifact produced in `activity`: the owner of the
    /// next development activity, then the tester.
    fn reviewers(&self, activity: Activity) -> Vec<Role> {
        let mut out = Vec::new();
        let next = self
            .plan
            .iter()
            .skip_while(|a| **a != activity)
            .skip(1)
            .find(|a| {
                matches!(
                    a,
                    Activity::Design | Activity::Implementation | Activity::Testing
                )
            });
        if let Some(next) = next {
            out.push(next.owner());
        }
        if !out.contains(&Role::Tester) {
            out.push(Role::Tester);
        }
        out
    }

    fn review_and_refine(
        &mut self,
        artifact: Artifact,
        reviewers: &[Role],
        extra: Option<Artifact>,
    ) -> Result<Artifact, StepError> {
        let suggestions = review_artifact(&mut self.session, &artifact, reviewers)?;
        let extra_items: Vec<ContextItem<'_>> = extra.iter().map(ContextItem::Artifact).collect();
        Ok(refine_artifact(
            &mut self.session,
            &artifact,
            &suggestions,
            &extra_items,
        )?)
    }

    fn requirement(&mut self) -> Result<(), StepError> {
        let mut ctx = alloc::vec![self.problem_item()];
        if let Some(tasks) = &self.docs.task_list {
            ctx.push(ContextItem::Artifact(tasks));
        }
        let doc = perform_task(
            &mut self.session,
            Role::RequirementEngineer,
            TaskName::WriteRequirement,
            &ctx,
        )?;
        let reviewers = self.reviewers(Activity::Requirement);
        self.docs.requirement = Some(self.review_and_refine(doc, &reviewers, None)?);
        Ok(())
    }

    fn design(&mut self) -> Result<(), StepError> {
        let ctx = Self::context(
            &self.docs,
            &self.session,
            self.problem_item(),
            Role::Architect,
            TaskName::WriteDesign,
            &[&self.docs.requirement],
        );
        let doc = perform_task(&mut self.session, Role::Architect, TaskName::WriteDesign, &ctx)?;
        let reviewers = self.reviewers(Activity::Design);
        self.docs.design = Some(self.review_and_refine(doc, &reviewers, None)?);
        Ok(())
    }

    fn write_code(&mut self) -> Result<Artifact, StepError> {
        let ctx = Self::context(
            &self.docs,
            &self.session,
            self.problem_item(),
            Role::Developer,
            TaskName::WriteCode,
            &[
                &self.docs.requirement,
                &self.docs.design,
                &self.docs.test_design,
                &self.docs.test_script,
            ],
        );
        Ok(perform_task(&mut self.session, Role::Developer, TaskName::WriteCode, &ctx)?)
    }

    fn implementation(&mut self) -> Result<(), StepError> {
        let code = if self.cfg.model == ProcessModel::ScrumPlusCodeT {
            self.codet()?
        } else {
            self.write_code()?
        };
        self.docs.code = Some(code);
        Ok(())
    }

    fn codet(&mut self) -> Result<Artifact, StepError> {
        let n = self.cfg.codet_versions_n.max(1);
        let mut versions = Vec::with_capacity(n as usize);
        for _ in 0..n {
            versions.push(self.write_code()?);
        }
        let ctx = Self::context(
            &self.docs,
            &self.session,
            self.problem_item(),
            Role::Developer,
            TaskName::WriteAssertions,
            &[&self.docs.requirement, &self.docs.design],
        );
        let script = perform_task(
            &mut self.session,
            Role::Developer,
            TaskName::WriteAssertions,
            &ctx,
        )?;
        let assertions = take_assertions(&script.content, self.cfg.codet_assertions_m as usize);
        let suite = assertion_suite(&assertions);
        let mut counts = Vec::with_capacity(versions.len());
        for version in &versions {
            let report = self.execute(&version.content, &suite)?;
            counts.push(report.tests_passed);
            self.session
                .record_execution(Role::Developer, StepAction::ExecuteAssertions, report);
        }
        let best = codet_select(&counts).unwrap_or(0);
        Ok(self.session.record_derived(
            Role::Developer,
            StepAction::SelectVersion,
            ArtifactKind::Code,
            versions[best].content.clone(),
        ))
    }

    fn code_review(&mut self) -> Result<(), StepError> {
        let Some(code) = self.docs.code.clone() else {
            return Ok(());
        };
        let reviewers = self.reviewers(Activity::Implementation);
        let reviewers: Vec<Role> = reviewers
            .into_iter()
            .filter(|r| *r != Role::Developer)
            .collect();
        self.docs.code = Some(self.review_and_refine(code, &reviewers, None)?);
        Ok(())
    }

    fn testing(&mut self) -> Result<(), StepError> {
        let ctx = Self::context(
            &self.docs,
            &self.session,
            self.problem_item(),
            Role::Tester,
            TaskName::DesignTests,
            &[&self.docs.requirement, &self.docs.design],
        );
        let design = perform_task(&mut self.session, Role::Tester, TaskName::DesignTests, &ctx)?;
        self.docs.test_design = Some(design);
        let ctx = Self::context(
            &self.docs,
            &self.session,
            self.problem_item(),
            Role::Tester,
            TaskName::WriteTestScript,
            &[&self.docs.test_design, &self.docs.requirement],
        );
        let script = perform_task(&mut self.session, Role::Tester, TaskName::WriteTestScript, &ctx)?;
        let design = self.docs.test_design.clone();
        self.docs.test_script = Some(self.review_and_refine(script, &[Role::Developer], design)?);
        Ok(())
    }

    fn execute(&self, code: &str, tests: &str) -> Result<ExecutionReport, StepError> {
        let job = ExecutionJob {
            code: code.to_string(),
            test_source: tests.to_string(),
            timeout: self.cfg.sandbox_timeout,
            entry_point: self.problem.entry_point.clone(),
        };
        Ok(self.runner.execute(&job)?)
    }

    fn meeting_order(&mut self) -> Vec<Role> {
        let mut order = Role::DEVELOPMENT.to_vec();
        if let Some(rng) = self.rng.as_mut() {
            order.shuffle(rng);
        }
        order
    }

    fn sprint_planning(&mut self) -> Result<(), StepError> {
        let order = self.meeting_order();
        let problem = self.problem_item();
        let mut buffer: Vec<(Role, String)> = Vec::with_capacity(order.len());
        for role in order {
            let comment = discuss(&mut self.session, role, &[problem], &buffer)?;
            buffer.push((role, comment));
        }
        self.docs.task_list = Some(scrum_summarize(&mut self.session, &buffer)?);
        Ok(())
    }

    fn sprint_review(&mut self, report: &ExecutionReport) -> Result<(), StepError> {
        self.session.enter(Activity::SprintReview);
        let order = self.meeting_order();
        let summary = report.summary();
        let failure = self.docs.failure_report.clone();
        let mut ctx = alloc::vec![ContextItem::Excerpt {
            label: "Test execution result",
            text: &summary,
        }];
        if let Some(f) = &failure {
            ctx.push(ContextItem::Artifact(f));
        }
        let mut buffer: Vec<(Role, String)> = Vec::with_capacity(order.len());
        for role in order {
            let comment = discuss(&mut self.session, role, &ctx, &buffer)?;
            buffer.push((role, comment));
        }
        self.docs.review_suggestions = Some(scrum_review_summary(
            &mut self.session,
            &buffer,
            failure.as_ref(),
        )?);
        Ok(())
    }

    /// Runs the generated tests, feeding failures back to the developer at
    /// most `refinement_limit_t` times.
    fn test_and_fix(&mut self) -> Result<AttemptEnd, StepError> {
        let has_review = self.plan.contains(&Activity::SprintReview);
        let mut fixes = 0;
        loop {
            self.session.enter(Activity::Testing);
            let code = self.docs.code.clone().expect("implementation ran");
            let tests = self
                .docs
                .test_script
                .clone()
                .expect("testing activity ran");
            let report = self.execute(&code.content, &tests.content)?;
            let passed = report.passed();
            self.session
                .record_execution(Role::Tester, StepAction::ExecuteTests, report.clone());
            self.docs.failure_report = None;
            if !passed {
                let summary = report.summary();
                let ctx = [ContextItem::Excerpt {
                    label: "Test execution result",
                    text: &summary,
                }];
                self.docs.failure_report = Some(perform_task(
                    &mut self.session,
                    Role::Tester,
                    TaskName::WriteFailureReport,
                    &ctx,
                )?);
            }
            if has_review {
                self.sprint_review(&report)?;
            }
            if passed {
                return Ok(AttemptEnd::Released);
            }
            if fixes >= self.cfg.refinement_limit_t {
                return Ok(AttemptEnd::BudgetSpent);
            }
            fixes += 1;
            self.session.enter(Activity::Implementation);
            let failure = self.docs.failure_report.clone().expect("set on failure");
            let suggestions = self.docs.review_suggestions.clone();
            self.docs.code = Some(fix_code(
                &mut self.session,
                &code,
                &failure,
                suggestions.as_ref(),
            )?);
        }
    }

    fn attempt(&mut self) -> Result<AttemptEnd, StepError> {
        let plan = self.plan.clone();
        for activity in plan.iter().copied() {
            self.session.enter(activity);
            match activity {
                Activity::SprintPlanning => self.sprint_planning()?,
                Activity::Requirement => self.requirement()?,
                Activity::Design => self.design()?,
                Activity::Implementation => self.implementation()?,
                Activity::CodeReview => self.code_review()?,
                Activity::Testing => self.testing()?,
                Activity::SprintReview => {}
            }
        }
        if plan.contains(&Activity::Testing) {
            self.test_and_fix()
        } else {
            Ok(AttemptEnd::Released)
        }
    }
}

/// Runs the configured process model on one problem. Step failures end the
/// run with [`Outcome::GaveUp`] and the error recorded; only invalid
/// configurations are returned as errors. `wall_time` is left at zero for
/// the caller to fill in.
pub fn run_pipeline(
    problem: &ProgrammingProblem,
    cfg: &PipelineConfig,
    model: &dyn ChatModel,
    runner: &dyn TestRunner,
    catalogue: &PromptCatalogue,
) -> Result<RunRecord, PipelineError> {
    cfg.validate()?;
    let plan = apply_ablation(&plan_for(cfg.model), &cfg.ablation)?;
    let dialect = if cfg.model.is_scrum() {
        Dialect::Agile
    } else {
        Dialect::Plain
    };
    let settings = SamplingSettings {
        temperature: cfg.temperature,
        model_version: cfg.model_version.clone(),
        history_window: cfg.history_window,
    };
    let mut pipeline = Pipeline {
        problem,
        cfg,
        plan,
        session: Session::new(model, catalogue, settings, dialect),
        runner,
        rng: cfg.meeting_shuffle_seed.map(ChaCha8Rng::seed_from_u64),
        docs: Docs::default(),
    };
    let mut restarts = 0;
    let (outcome, error) = loop {
        match pipeline.attempt() {
            Ok(AttemptEnd::Released) => break (Outcome::Released, None),
            Ok(AttemptEnd::BudgetSpent) if restarts < cfg.max_full_restarts => {
                restarts += 1;
                pipeline.docs = Docs::default();
            }
            Ok(AttemptEnd::BudgetSpent) => break (Outcome::GaveUp, None),
            Err(e) => break (Outcome::GaveUp, Some(e.to_string())),
        }
    };
    let steps = pipeline.session.into_steps();
    let final_code = steps
        .iter()
        .rev()
        .filter_map(|s| s.artifact.as_ref())
        .find(|a| a.kind == ArtifactKind::Code)
        .map(|a| a.content.clone())
        .unwrap_or_default();
    Ok(RunRecord {
        problem_id: problem.id.clone(),
        config: cfg.clone(),
        steps,
        final_code,
        restarts_used: restarts,
        outcome,
        error,
        wall_time: Duration::ZERO,
    })
}
