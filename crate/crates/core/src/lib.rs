//! Core of the process-model code generation harness.
//!
//! Everything in this crate is pure computation over in-memory values: domain
//! types, prompt rendering, the Waterfall / TDD / Scrum pipelines (driven
//! through the [`chat::ChatModel`] and [`execution::TestRunner`] traits),
//! failure classification, code-quality arithmetic, statistics and report
//! rendering. Process spawning, HTTP, file formats and the CLI live in the
//! `flowgen` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod agents;
pub mod catalogue;
pub mod chat;
pub mod domain;
pub mod execution;
pub mod process;
pub mod quality;
pub mod report;
pub mod scripted;
pub mod stats;

pub use agents::{extract_code, render_prompt, AgentError, ContextItem, Session};
pub use catalogue::{Dialect, PromptCatalogue, TaskName, TaskSpec};
pub use chat::{
    fingerprint, ChatModel, ChatTurn, CompletionRequest, GatewayError, SamplingSettings, Speaker,
};
pub use domain::{
    validate_problem, Ablation, Activity, Artifact, ArtifactKind, BenchmarkKind, Outcome,
    PipelineConfig, ProcessModel, ProgrammingProblem, PromptEnvelope, Role, RunRecord, Step,
    StepAction, ValidationResult, Violation,
};
pub use execution::{
    classify_failure, ExecStatus, ExecutionJob, ExecutionReport, FailureCategory, HarnessError,
    ProblemOutcome, TestRunner,
};
pub use process::{apply_ablation, plan_for, run_pipeline, PipelineError};
pub use scripted::ScriptedModel;
