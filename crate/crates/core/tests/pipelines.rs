use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use flowgen_core::chat::{ChatModel, CompletionRequest, GatewayError};
use flowgen_core::domain::RunRecord;
use flowgen_core::{
    run_pipeline, Ablation, Activity, ArtifactKind, BenchmarkKind, ExecStatus, ExecutionJob,
    ExecutionReport, HarnessError, Outcome, PipelineConfig, ProcessModel, ProgrammingProblem,
    PromptCatalogue, Role, ScriptedModel, StepAction, TestRunner,
};
use proptest::prelude::*;

/// Passes generated tests when the code carries `# ok`; for assertion suites
/// it passes as many assertions as the code's `# score N` marker says.
#[derive(Default)]
struct MarkerRunner {
    calls: AtomicUsize,
}

fn score(code: &str) -> u32 {
    code.lines()
        .find_map(|l| l.trim().strip_prefix("# score "))
        .and_then(|n| n.trim().parse().ok())
        .unwrap_or(0)
}

impl TestRunner for MarkerRunner {
    fn execute(&self, job: &ExecutionJob) -> Result<ExecutionReport, HarnessError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let (run, passed) = if job.test_source.contains("GeneratedAssertions") {
            let run = job.test_source.matches("def test_").count() as u32;
            (run, score(&job.code).min(run))
        } else if job.code.contains("# ok") {
            (1, 1)
        } else {
            (1, 0)
        };
        let ok = run > 0 && run == passed;
        Ok(ExecutionReport {
            status: if ok { ExecStatus::AllPassed } else { ExecStatus::TestFailures },
            tests_run: run,
            tests_passed: passed,
            primary_exception: (!ok).then(|| "AssertionError".to_string()),
            traceback_excerpt: if ok { String::new() } else { "AssertionError".into() },
            duration: Duration::from_millis(3),
        })
    }
}

const ORACLE: &str = "def check(candidate):\n    assert candidate(2, 3) == 5\n    assert candidate(-1, 1) == 0\n\ncheck(add)\n";

fn problem() -> ProgrammingProblem {
    ProgrammingProblem {
        id: "HumanEval/0".into(),
        prompt: "def add(a, b):\n    \"\"\"Return the sum of a and b.\"\"\"\n".into(),
        entry_point: "add".into(),
        oracle_tests: ORACLE.into(),
        benchmark: BenchmarkKind::HumanEval,
        reference_solution: None,
    }
}

const PASSING: &str = "def add(a, b):\n    return a + b  # ok";
const FAILING: &str = "def add(a, b):\n    return a - b";

fn run(model: ProcessModel, ablation: &[Ablation], chat: &dyn ChatModel) -> RunRecord {
    let mut cfg = PipelineConfig::for_model(model);
    cfg.ablation = ablation.iter().copied().collect();
    run_pipeline(
        &problem(),
        &cfg,
        chat,
        &MarkerRunner::default(),
        &PromptCatalogue::default(),
    )
    .unwrap()
}

fn passing() -> ScriptedModel {
    ScriptedModel::new(&[PASSING], "import unittest", "assert add(1, 1) == 2")
}

fn fix_steps(record: &RunRecord) -> usize {
    record.count_steps(Role::Developer, StepAction::Fix)
}

#[test]
fn waterfall_flow() {
    use Activity::*;
    let r = run(ProcessModel::Waterfall, &[], &passing());
    assert_eq!(r.activity_flow(), [Requirement, Design, Implementation, CodeReview, Testing]);
    assert_eq!(fix_steps(&r), 0);
    assert_eq!(r.outcome, Outcome::Released);
    assert_eq!(r.final_code, PASSING);
    let req_reviewers: Vec<Role> = r
        .steps
        .iter()
        .filter(|s| s.activity == Requirement && s.action == StepAction::Review)
        .map(|s| s.role)
        .collect();
    assert_eq!(req_reviewers, [Role::Architect, Role::Tester]);
    let code_reviewers: Vec<Role> = r
        .steps
        .iter()
        .filter(|s| s.activity == CodeReview && s.action == StepAction::Review)
        .map(|s| s.role)
        .collect();
    assert_eq!(code_reviewers, [Role::Tester]);
}

#[test]
fn tdd_developer_sees_test_design() {
    use Activity::*;
    let r = run(ProcessModel::Tdd, &[], &passing());
    assert_eq!(
        r.activity_flow(),
        [Requirement, Design, Testing, Implementation, CodeReview, Testing]
    );
    let write_code = r
        .steps
        .iter()
        .find(|s| s.role == Role::Developer && s.activity == Implementation)
        .unwrap();
    let prompt = write_code.prompt.as_ref().unwrap();
    assert!(prompt.context.iter().any(|c| c.starts_with("Test case design:\nTest cases:")));
    assert!(prompt.context.iter().any(|c| c.starts_with("Test script:")));
}

#[test]
fn scrum_planning_precedes_development() {
    use Activity::*;
    let r = run(ProcessModel::Scrum, &[], &passing());
    assert_eq!(
        r.activity_flow(),
        [SprintPlanning, Requirement, Design, Implementation, CodeReview, Testing, SprintReview]
    );
    let planning: Vec<_> = r.steps.iter().take_while(|s| s.activity == SprintPlanning).collect();
    assert_eq!(planning.len(), 5);
    let comments: Vec<Role> = planning
        .iter()
        .filter(|s| s.action == StepAction::Comment)
        .map(|s| s.role)
        .collect();
    assert_eq!(comments, Role::DEVELOPMENT);
    let summary = planning[4];
    assert_eq!(summary.role, Role::ScrumMaster);
    assert_eq!(summary.artifact.as_ref().unwrap().kind, ArtifactKind::TaskList);
    let first_req = r
        .steps
        .iter()
        .find(|s| s.role == Role::RequirementEngineer && s.activity == Requirement)
        .unwrap();
    assert!(first_req.prompt.as_ref().unwrap().mentions("user stories"));
    assert!(first_req.prompt.as_ref().unwrap().context.iter().any(|c| c.starts_with("Task list:")));
    assert_eq!(r.outcome, Outcome::Released);
}

#[test]
fn refinement_budget_then_give_up() {
    let chat = ScriptedModel::new(&[FAILING], "import unittest", "assert True");
    for model in [ProcessModel::Waterfall, ProcessModel::Tdd, ProcessModel::Scrum] {
        let r = run(model, &[], &chat);
        assert_eq!(r.outcome, Outcome::GaveUp, "{model}");
        assert_eq!(r.restarts_used, 1);
        assert_eq!(fix_steps(&r), 6, "t fixes in each of the two passes");
        assert_eq!(r.count_steps(Role::Tester, StepAction::ExecuteTests), 8);
        assert_eq!(r.final_code, FAILING);
        assert!(r.error.is_none());
    }
}

#[test]
fn restart_then_pass() {
    // Initial code plus three fixes fail; the restarted pass writes passing code.
    let chat = ScriptedModel::new(
        &[FAILING, FAILING, FAILING, FAILING, PASSING],
        "import unittest",
        "assert True",
    );
    let r = run(ProcessModel::Waterfall, &[], &chat);
    assert_eq!(r.outcome, Outcome::Released);
    assert_eq!(r.restarts_used, 1);
    assert_eq!(fix_steps(&r), 3);
    assert_eq!(r.final_code, PASSING);
}

#[test]
fn fix_after_failure_sees_report() {
    let chat = ScriptedModel::new(&[FAILING, PASSING], "import unittest", "assert True");
    let r = run(ProcessModel::Tdd, &[], &chat);
    assert_eq!(r.outcome, Outcome::Released);
    assert_eq!(fix_steps(&r), 1);
    let fix = r.steps.iter().find(|s| s.action == StepAction::Fix).unwrap();
    let ctx = &fix.prompt.as_ref().unwrap().context;
    assert!(ctx.iter().any(|c| c.starts_with("Test failure report:")));
    assert!(ctx.iter().any(|c| c.starts_with("Code:\n") && c.contains(FAILING)));
}

#[test]
fn scrum_review_precedes_fix() {
    let chat = ScriptedModel::new(&[FAILING, PASSING], "import unittest", "assert True");
    let r = run(ProcessModel::Scrum, &[], &chat);
    let fix_at = r.steps.iter().position(|s| s.action == StepAction::Fix).unwrap();
    let review_summary = r
        .steps
        .iter()
        .position(|s| s.activity == Activity::SprintReview && s.role == Role::ScrumMaster)
        .unwrap();
    assert!(review_summary < fix_at);
    let ctx = &r.steps[fix_at].prompt.as_ref().unwrap().context;
    assert!(ctx.iter().any(|c| c.starts_with("Suggestions:")));
    let review_comments = r
        .steps
        .iter()
        .filter(|s| s.activity == Activity::SprintReview && s.action == StepAction::Comment)
        .count();
    assert_eq!(review_comments, 8, "one review meeting per execution");
}

#[test]
fn skip_test_releases_reviewed_code() {
    let chat = ScriptedModel::new(&[FAILING, PASSING], "import unittest", "assert True");
    let r = run(ProcessModel::Waterfall, &[Ablation::SkipTest], &chat);
    assert!(r.steps.iter().all(|s| s.activity != Activity::Testing));
    assert_eq!(r.outcome, Outcome::Released);
    let last_code = r.code_artifacts().last().unwrap();
    assert_eq!(last_code.revision, 1);
    assert_eq!(last_code.content, r.final_code);
    assert_eq!(r.final_code, FAILING, "released without testing");

    let tdd = run(ProcessModel::Tdd, &[Ablation::SkipTest, Ablation::SkipCodeReview], &chat);
    use Activity::*;
    assert_eq!(tdd.activity_flow(), [Requirement, Design, Implementation]);
}

#[test]
fn skipped_requirement_leaves_problem_only() {
    let r = run(ProcessModel::Waterfall, &[Ablation::SkipRequirement], &passing());
    let design = r
        .steps
        .iter()
        .find(|s| s.role == Role::Architect && s.activity == Activity::Design)
        .unwrap();
    assert_eq!(
        design.prompt.as_ref().unwrap().context,
        [format!("Programming problem:\n{}", problem().prompt)]
    );
    assert!(r.artifacts().all(|a| a.kind != ArtifactKind::RequirementDoc));
}

#[test]
fn tdd_without_design_tests_from_requirements() {
    let r = run(ProcessModel::Tdd, &[Ablation::SkipDesign], &passing());
    let design_tests = r
        .steps
        .iter()
        .find(|s| s.role == Role::Tester && s.activity == Activity::Testing)
        .unwrap();
    let ctx = &design_tests.prompt.as_ref().unwrap().context;
    assert_eq!(ctx.len(), 1);
    assert!(ctx[0].starts_with("Requirement document:"));
}

#[test]
fn scrum_without_meetings_matches_waterfall_flow() {
    let scrum = run(ProcessModel::Scrum, &[Ablation::SkipSprintMeeting], &passing());
    let waterfall = run(ProcessModel::Waterfall, &[], &passing());
    assert!(scrum.steps.iter().all(|s| s.role != Role::ScrumMaster));
    assert_eq!(scrum.activity_flow(), waterfall.activity_flow());
    assert!(scrum.prompts().any(|p| p.mentions("user stories")));
}

#[test]
fn invalid_ablation_is_rejected_before_running() {
    let runner = MarkerRunner::default();
    let mut cfg = PipelineConfig::for_model(ProcessModel::Tdd);
    cfg.ablation = BTreeSet::from([Ablation::SkipSprintMeeting]);
    assert!(run_pipeline(&problem(), &cfg, &passing(), &runner, &PromptCatalogue::default()).is_err());
    assert_eq!(runner.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn codet_selects_best_version() {
    let chat = ScriptedModel::new(
        &[
            "def add(a, b):\n    # score 2\n    return 0",
            "def add(a, b):\n    # score 5\n    return a + b  # ok",
            "def add(a, b):\n    # score 3\n    return 1",
        ],
        "import unittest",
        "assert add(1, 1) == 2\nassert add(0, 0) == 0\nassert add(2, 2) == 4\nassert add(3, 3) == 6\nassert add(4, 4) == 8\nassert add(5, 5) == 10",
    );
    let r = run(ProcessModel::ScrumPlusCodeT, &[], &chat);
    assert_eq!(r.count_steps(Role::Developer, StepAction::ExecuteAssertions), 3);
    let passed: Vec<u32> = r
        .steps
        .iter()
        .filter(|s| s.action == StepAction::ExecuteAssertions)
        .map(|s| s.execution.as_ref().unwrap().tests_passed)
        .collect();
    assert_eq!(passed, [2, 5, 3]);
    let selected = r
        .steps
        .iter()
        .find(|s| s.action == StepAction::SelectVersion)
        .and_then(|s| s.artifact.as_ref())
        .unwrap();
    assert_eq!(selected.revision, 3);
    assert!(selected.content.contains("# score 5"));
    assert_eq!(r.outcome, Outcome::Released);
}

#[test]
fn codet_single_version_is_identity() {
    let chat = ScriptedModel::new(&[PASSING], "import unittest", "assert add(1, 1) == 2");
    let mut cfg = PipelineConfig::for_model(ProcessModel::ScrumPlusCodeT);
    cfg.codet_versions_n = 1;
    let codet = run_pipeline(&problem(), &cfg, &chat, &MarkerRunner::default(), &PromptCatalogue::default()).unwrap();
    let scrum = run(ProcessModel::Scrum, &[], &chat);
    assert_eq!(codet.final_code, scrum.final_code);
    assert_eq!(codet.count_steps(Role::Developer, StepAction::ExecuteAssertions), 1);
    // Assertion writing, one execution and the selection record are the only additions.
    assert_eq!(codet.steps.len(), scrum.steps.len() + 3);
}

#[test]
fn oracle_never_reaches_a_prompt() {
    let chat = ScriptedModel::new(&[FAILING, PASSING], "import unittest", "assert True");
    let p = problem();
    for model in [
        ProcessModel::Waterfall,
        ProcessModel::Tdd,
        ProcessModel::Scrum,
        ProcessModel::ScrumPlusCodeT,
    ] {
        let r = run(model, &[], &chat);
        let mut prompts = 0;
        for prompt in r.prompts() {
            prompts += 1;
            assert_eq!(p.leaked_fragment(&prompt.to_json()), None);
        }
        assert!(prompts > 10);
        assert!(r.prompts().any(|pr| pr.mentions("def add(a, b):")));
    }
}

#[test]
fn shuffled_meetings_are_seeded() {
    let chat = passing();
    let order = |seed: Option<u64>| -> Vec<Role> {
        let mut cfg = PipelineConfig::for_model(ProcessModel::Scrum);
        cfg.meeting_shuffle_seed = seed;
        let r = run_pipeline(&problem(), &cfg, &chat, &MarkerRunner::default(), &PromptCatalogue::default()).unwrap();
        r.steps
            .iter()
            .filter(|s| s.activity == Activity::SprintPlanning && s.action == StepAction::Comment)
            .map(|s| s.role)
            .collect()
    };
    assert_eq!(order(None), Role::DEVELOPMENT);
    for seed in 0..8 {
        let a = order(Some(seed));
        assert_eq!(a, order(Some(seed)));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, Role::DEVELOPMENT);
    }
    assert!((0..8).any(|seed| order(Some(seed)) != Role::DEVELOPMENT));
}

struct FailsAfter {
    inner: ScriptedModel,
    budget: usize,
    calls: AtomicUsize,
}

impl ChatModel for FailsAfter {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.budget {
            return Err(GatewayError::Network {
                attempts: 5,
                message: "connection reset".into(),
            });
        }
        self.inner.complete(request)
    }
}

#[test]
fn step_error_gives_up_with_error_recorded() {
    let chat = FailsAfter {
        inner: ScriptedModel::new(&[FAILING], "import unittest", "assert True"),
        budget: 12,
        calls: AtomicUsize::new(0),
    };
    let r = run(ProcessModel::Waterfall, &[], &chat);
    assert_eq!(r.outcome, Outcome::GaveUp);
    assert!(r.error.as_deref().unwrap().contains("connection reset"));
    assert_eq!(r.final_code, FAILING);
}

#[test]
fn records_are_byte_identical_across_repeats() {
    let chat = ScriptedModel::new(&[FAILING], "import unittest", "assert True");
    let first = serde_json::to_string(&run(ProcessModel::Scrum, &[], &chat)).unwrap();
    for _ in 0..9 {
        assert_eq!(serde_json::to_string(&run(ProcessModel::Scrum, &[], &chat)).unwrap(), first);
    }
}

fn revisions_are_dense(r: &RunRecord) -> bool {
    use std::collections::BTreeMap;
    let mut seen: BTreeMap<(ArtifactKind, Activity), BTreeSet<u32>> = BTreeMap::new();
    for a in r.artifacts() {
        seen.entry((a.kind, a.activity)).or_default().insert(a.revision);
    }
    seen.values()
        .all(|revs| revs.iter().copied().eq(0..revs.len() as u32))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn budgets_are_never_exceeded(
        t in 1u32..4,
        restarts in 0u32..3,
        pass_at in 0usize..12,
        model in prop_oneof![Just(ProcessModel::Waterfall), Just(ProcessModel::Tdd), Just(ProcessModel::Scrum)],
    ) {
        let mut versions = vec![FAILING; pass_at];
        versions.push(PASSING);
        let chat = ScriptedModel::new(&versions, "import unittest", "assert True");
        let mut cfg = PipelineConfig::for_model(model);
        cfg.refinement_limit_t = t;
        cfg.max_full_restarts = restarts;
        let r = run_pipeline(&problem(), &cfg, &chat, &MarkerRunner::default(), &PromptCatalogue::default()).unwrap();
        prop_assert!(r.restarts_used <= restarts);
        // Fixes between consecutive first-draft code writes never exceed t.
        let mut fixes = 0;
        for s in &r.steps {
            match (s.role, s.action, s.activity) {
                (Role::Developer, StepAction::Write, Activity::Implementation) => fixes = 0,
                (Role::Developer, StepAction::Fix, _) => {
                    fixes += 1;
                    prop_assert!(fixes <= t);
                }
                _ => {}
            }
        }
        prop_assert!(revisions_are_dense(&r));
        let total = (t as usize + 1) * (restarts as usize + 1);
        prop_assert_eq!(r.outcome == Outcome::Released, pass_at < total);
    }
}
