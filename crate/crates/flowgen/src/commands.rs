//! The `run`, `ablate`, `evaluate` and `report` commands.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use flowgen_core::domain::RunTimings;
use flowgen_core::report::{ablation_table, render_report, ReportFormat};
use flowgen_core::stats::RunOutcomeSet;
use flowgen_core::{
    apply_ablation, plan_for, run_pipeline, Ablation, BenchmarkKind, ChatModel, HarnessError,
    PipelineError, ProcessModel, PromptCatalogue, ScriptedModel, TestRunner,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::bench::{load_benchmark, BenchError, Benchmark};
use crate::cassette::{load_entries, save_entries, Cassette, CassetteError, CassetteMode, Entries};
use crate::config::{Backend, ConfigError, Manifest, ProviderMode, ProviderSpec};
use crate::evaluate::{
    pool, render_both, run_tables, variant_label, variant_metrics, EvaluatedRun, PooledQuality,
    ProblemQuality, QualitySet,
};
use crate::gateway::{LiveProvider, Retrying, RetryPolicy};
use crate::lint::{LintError, Linter};
use crate::sandbox::{evaluate_against_oracle, ShimRunner};
use crate::store::{
    read_json, timing_key, write_json, CommandStamp, RunDir, Store, StoreError, StoredManifest,
};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Fatal(String),
}

impl CommandError {
    /// 2 for configuration errors, 1 for fatal harness errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Fatal(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CommandError::Config(_) => "config",
            CommandError::Fatal(_) => "fatal",
        }
    }

    /// Machine-readable one-line summary.
    pub fn to_json(&self) -> String {
        serde_json::json!({"error": self.kind(), "message": self.to_string()}).to_string()
    }
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e.to_string())
    }
}

impl From<PipelineError> for CommandError {
    fn from(e: PipelineError) -> Self {
        CommandError::Config(e.to_string())
    }
}

impl From<BenchError> for CommandError {
    fn from(e: BenchError) -> Self {
        CommandError::Config(format!("benchmark: {e}"))
    }
}

impl From<StoreError> for CommandError {
    fn from(e: StoreError) -> Self {
        CommandError::Fatal(e.to_string())
    }
}

impl From<HarnessError> for CommandError {
    fn from(e: HarnessError) -> Self {
        CommandError::Fatal(e.to_string())
    }
}

impl From<CassetteError> for CommandError {
    fn from(e: CassetteError) -> Self {
        match e {
            CassetteError::Missing { .. } | CassetteError::NoBackend(_) => {
                CommandError::Config(e.to_string())
            }
            _ => CommandError::Fatal(e.to_string()),
        }
    }
}

impl From<LintError> for CommandError {
    fn from(e: LintError) -> Self {
        match e {
            LintError::VersionMismatch { .. } => CommandError::Config(e.to_string()),
            _ => CommandError::Fatal(e.to_string()),
        }
    }
}

/// Injectable collaborators; anything left `None` is built from the manifest.
#[derive(Clone, Copy, Default)]
pub struct Services<'a> {
    /// Answers cassette misses in Live and Record mode.
    pub backend: Option<&'a (dyn ChatModel + Sync)>,
    pub runner: Option<&'a (dyn TestRunner + Sync)>,
    pub linter: Option<&'a (dyn Linter + Sync)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub config_hash: String,
    pub records_written: usize,
    pub records_skipped: usize,
    pub backend_calls: usize,
    pub pass_at_1: Vec<f64>,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn thread_pool(n: usize) -> Result<rayon::ThreadPool, CommandError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(|e| CommandError::Fatal(e.to_string()))
}

fn build_backend(spec: &ProviderSpec) -> Result<Box<dyn ChatModel + Sync>, CommandError> {
    Ok(match spec.backend {
        Backend::Scripted => Box::new(ScriptedModel::default()),
        Backend::OpenAi => {
            let live = LiveProvider::from_env(&spec.base_url)
                .map_err(|e| CommandError::Config(e.to_string()))?;
            Box::new(Retrying::new(live, RetryPolicy::default()))
        }
    })
}

fn shim_runner(m: &Manifest) -> Result<ShimRunner, CommandError> {
    let runner = ShimRunner::new(m.sandbox.clone());
    runner.check_available()?;
    Ok(runner)
}

fn load_optional_et(m: &Manifest) -> Result<Option<Benchmark>, CommandError> {
    let Some(path) = &m.et_path else {
        return Ok(None);
    };
    let et_kind = match m.benchmark {
        BenchmarkKind::HumanEval => BenchmarkKind::HumanEvalEt,
        BenchmarkKind::Mbpp => BenchmarkKind::MbppEt,
        other => {
            return Err(CommandError::Config(format!(
                "benchmark.et_path needs a base benchmark, not {other}"
            )))
        }
    };
    Ok(Some(load_benchmark(path, et_kind)?))
}

fn check_plan(m: &Manifest) -> Result<(), CommandError> {
    m.pipeline.validate().map_err(ConfigError::from)?;
    apply_ablation(&plan_for(m.pipeline.model), &m.pipeline.ablation)?;
    Ok(())
}

/// Oracle verdicts for one repeat. ET variants reuse the final code stored
/// for the base problem with the same id.
fn oracle_outcomes(
    run: &RunDir,
    bench: &Benchmark,
    repeat: u32,
    hash: &str,
    runner: &(dyn TestRunner + Sync),
    m: &Manifest,
    pool: &rayon::ThreadPool,
) -> Result<RunOutcomeSet, CommandError> {
    let timeout = m.pipeline.sandbox_timeout;
    let verdicts: Result<Vec<_>, CommandError> = pool.install(|| {
        bench
            .problems
            .par_iter()
            .map(|p| {
                let record = run.read_record(&p.id, repeat)?;
                let outcome = evaluate_against_oracle(&record.final_code, p, runner, timeout)?;
                Ok((p.id.clone(), outcome))
            })
            .collect()
    });
    Ok(RunOutcomeSet {
        benchmark: bench.kind,
        run_index: repeat,
        config_hash: hash.to_string(),
        outcomes: verdicts?.into_iter().collect(),
    })
}

fn measure_quality(
    run: &RunDir,
    bench: &Benchmark,
    repeat: u32,
    linter: &(dyn Linter + Sync),
    pool: &rayon::ThreadPool,
) -> Result<QualitySet, CommandError> {
    let rows: Result<Vec<_>, CommandError> = pool.install(|| {
        bench
            .problems
            .par_iter()
            .map(|p| {
                let record = run.read_record(&p.id, repeat)?;
                let lint = linter.lint(&record.final_code)?;
                Ok((p.id.clone(), ProblemQuality::measure(&record.final_code, &lint)))
            })
            .collect()
    });
    Ok(rows?.into_iter().collect())
}

fn read_quality(run: &RunDir) -> Result<Option<PooledQuality>, CommandError> {
    let mut sets: Vec<QualitySet> = Vec::new();
    for repeat in 0.. {
        let path = run.quality_path(repeat);
        if !path.is_file() {
            break;
        }
        sets.push(read_json(&path)?);
    }
    if sets.is_empty() {
        return Ok(None);
    }
    Ok(Some(pool(sets.iter().flat_map(|s| s.values()))))
}

fn row_label(stored: &StoredManifest) -> String {
    let defaults = flowgen_core::PipelineConfig::default();
    let mut label = variant_label(&stored.pipeline);
    if stored.pipeline.model_version != defaults.model_version
        || stored.pipeline.temperature != defaults.temperature
    {
        label.push_str(&format!(
            " [{}, T={}]",
            stored.pipeline.model_version, stored.pipeline.temperature
        ));
    }
    label
}

fn evaluated(run: &RunDir) -> Result<EvaluatedRun, CommandError> {
    let stored = run.read_manifest()?;
    let mut outcomes = BTreeMap::new();
    for kind in BenchmarkKind::ALL {
        let sets = run.read_outcomes(kind)?;
        if !sets.is_empty() {
            outcomes.insert(kind, sets);
        }
    }
    Ok(EvaluatedRun {
        label: row_label(&stored),
        outcomes,
        quality: read_quality(run)?,
    })
}

/// Rewrites `report.md` and `report.csv` of one run directory.
pub fn report_run_dir(run: &RunDir) -> Result<(), CommandError> {
    let tables = run_tables(&[evaluated(run)?], None);
    let (md, csv) = render_both(&tables);
    run.write_report(&md, &csv)?;
    Ok(())
}

/// Runs every (problem, repeat) pair not yet on disk, then scores the final
/// code against the oracle tests and writes the report.
pub fn cmd_run(m: &Manifest, services: Services<'_>) -> Result<RunSummary, CommandError> {
    let started = now_ms();
    check_plan(m)?;
    let bench = load_benchmark(&m.benchmark_path, m.benchmark)?;
    let et = load_optional_et(m)?;
    let mode = m.provider.mode;
    if mode == ProviderMode::Replay {
        for repeat in 0..m.repeats {
            let path = m.provider.cassette_path(repeat);
            if !path.is_file() {
                return Err(CommandError::Config(format!(
                    "replay mode needs cassette {}",
                    path.display()
                )));
            }
        }
    }
    let owned_backend = match (mode, services.backend) {
        (ProviderMode::Replay, _) | (_, Some(_)) => None,
        (_, None) => Some(build_backend(&m.provider)?),
    };
    let backend: Option<&(dyn ChatModel + Sync)> = match mode {
        ProviderMode::Replay => None,
        _ => services.backend.or(owned_backend.as_deref()),
    };
    let owned_runner = match services.runner {
        Some(_) => None,
        None => Some(shim_runner(m)?),
    };
    let runner: &(dyn TestRunner + Sync) = match (services.runner, owned_runner.as_ref()) {
        (Some(r), _) => r,
        (None, Some(r)) => r,
        (None, None) => unreachable!("runner built above"),
    };

    let hash = m.config_hash();
    let store = Store::new(&m.output_dir);
    let run = store.run_dir(&hash);
    run.write_manifest(&StoredManifest {
        config_hash: hash.clone(),
        benchmark: m.benchmark,
        pipeline: m.pipeline.clone(),
    })?;
    let catalogue = PromptCatalogue::default();
    let pool = thread_pool(m.parallelism)?;
    let mut summary = RunSummary {
        config_hash: hash.clone(),
        records_written: 0,
        records_skipped: 0,
        backend_calls: 0,
        pass_at_1: Vec::new(),
    };
    let mut timings: BTreeMap<String, RunTimings> = BTreeMap::new();

    for repeat in 0..m.repeats {
        let pending: Vec<_> = bench
            .problems
            .iter()
            .filter(|p| !run.has_record(&p.id, repeat))
            .collect();
        summary.records_skipped += bench.problems.len() - pending.len();
        if !pending.is_empty() {
            let path = m.provider.cassette_path(repeat);
            let (cassette_mode, entries) = match mode {
                ProviderMode::Live => (CassetteMode::Passthrough, Entries::new()),
                ProviderMode::Record if path.is_file() => (CassetteMode::Record, load_entries(&path)?),
                ProviderMode::Record => (CassetteMode::Record, Entries::new()),
                ProviderMode::Replay => (CassetteMode::Replay, load_entries(&path)?),
            };
            let cassette = Cassette::new(cassette_mode, entries, backend)?;
            tracing::info!(repeat, problems = pending.len(), "running pipelines");
            let results: Vec<Result<(String, RunTimings), CommandError>> = pool.install(|| {
                pending
                    .par_iter()
                    .map(|p| {
                        let t0 = Instant::now();
                        let mut record =
                            run_pipeline(p, &m.pipeline, &cassette, runner, &catalogue)?;
                        record.wall_time = t0.elapsed();
                        if let Some(err) = &record.error {
                            tracing::warn!(problem = %p.id, repeat, %err, "pipeline gave up");
                        }
                        let t = record.take_timings();
                        run.write_record(&record, repeat)?;
                        Ok((timing_key(&p.id, repeat), t))
                    })
                    .collect()
            });
            summary.backend_calls += cassette.backend_calls();
            if cassette_mode == CassetteMode::Record && cassette.recorded() > 0 {
                save_entries(&path, &cassette.entries())?;
            }
            for r in results {
                let (key, t) = r?;
                timings.insert(key, t);
                summary.records_written += 1;
            }
        }
        for b in std::iter::once(&bench).chain(et.as_ref()) {
            let path = run.outcomes_path(b.kind, repeat);
            let set = if pending.is_empty() && path.is_file() {
                read_json(&path)?
            } else {
                let set = oracle_outcomes(&run, b, repeat, &hash, runner, m, &pool)?;
                run.write_outcomes(&set)?;
                set
            };
            if b.kind == bench.kind {
                summary.pass_at_1.push(flowgen_core::stats::pass_at_1(&set));
            }
        }
    }
    report_run_dir(&run)?;
    store.add_metadata(
        &hash,
        CommandStamp {
            command: "run".into(),
            config_hash: hash.clone(),
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
        },
        timings,
    )?;
    Ok(summary)
}

/// Re-scores every stored run of the manifest's benchmark: oracle verdicts
/// and, when the linter is enabled, quality metrics. No provider is built.
pub fn cmd_evaluate(m: &Manifest, services: Services<'_>) -> Result<Vec<String>, CommandError> {
    let started = now_ms();
    let bench = load_benchmark(&m.benchmark_path, m.benchmark)?;
    let et = load_optional_et(m)?;
    let store = Store::new(&m.output_dir);
    let mut runs = Vec::new();
    for dir in store.run_dirs()? {
        if dir.read_manifest()?.benchmark == m.benchmark {
            runs.push(dir);
        }
    }
    if runs.is_empty() {
        return Err(CommandError::Fatal(format!(
            "no {} runs under {}",
            m.benchmark,
            m.output_dir.display()
        )));
    }
    let owned_runner = match services.runner {
        Some(_) => None,
        None => Some(shim_runner(m)?),
    };
    let runner: &(dyn TestRunner + Sync) = match services.runner {
        Some(r) => r,
        None => owned_runner.as_ref().expect("runner built above"),
    };
    let owned_linter = match (m.linter.enabled, services.linter) {
        (true, None) => {
            m.linter.pylint.check_version()?;
            Some(m.linter.pylint.clone())
        }
        _ => None,
    };
    let linter: Option<&(dyn Linter + Sync)> = match (m.linter.enabled, services.linter) {
        (false, _) => None,
        (true, Some(l)) => Some(l),
        (true, None) => owned_linter.as_ref().map(|l| l as &(dyn Linter + Sync)),
    };
    let pool = thread_pool(m.parallelism)?;
    let mut hashes = Vec::new();
    for run in &runs {
        let hash = run.hash();
        let repeats = run.complete_repeats(bench.ids());
        if repeats == 0 {
            return Err(CommandError::Fatal(format!(
                "run {hash} has no complete repeat for {}",
                bench.kind
            )));
        }
        tracing::info!(%hash, repeats, "evaluating");
        for repeat in 0..repeats {
            for b in std::iter::once(&bench).chain(et.as_ref()) {
                let set = oracle_outcomes(run, b, repeat, &hash, runner, m, &pool)?;
                run.write_outcomes(&set)?;
            }
            if let Some(linter) = linter {
                let q = measure_quality(run, &bench, repeat, linter, &pool)?;
                write_json(&run.quality_path(repeat), &q)?;
            }
        }
        report_run_dir(run)?;
        hashes.push(hash);
    }
    store.add_metadata(
        &m.config_hash(),
        CommandStamp {
            command: "evaluate".into(),
            config_hash: m.config_hash(),
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
        },
        BTreeMap::new(),
    )?;
    Ok(hashes)
}

/// Single-activity removals for a process model.
pub fn default_ablations(model: ProcessModel) -> Vec<BTreeSet<Ablation>> {
    let mut flags = vec![
        Ablation::SkipRequirement,
        Ablation::SkipDesign,
        Ablation::SkipCodeReview,
        Ablation::SkipTest,
    ];
    if model.is_scrum() {
        flags.push(Ablation::SkipSprintMeeting);
    }
    flags.into_iter().map(|f| BTreeSet::from([f])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSummary {
    /// Full pipeline first, then one hash per flag set.
    pub config_hashes: Vec<String>,
    pub markdown: String,
}

/// Runs the full pipeline plus one sub-run per flag set and writes the
/// comparison next to the full run.
pub fn cmd_ablate(
    m: &Manifest,
    flag_sets: Option<Vec<BTreeSet<Ablation>>>,
    services: Services<'_>,
) -> Result<AblationSummary, CommandError> {
    let sets = flag_sets.unwrap_or_else(|| default_ablations(m.pipeline.model));
    let mut variants = vec![m.with_ablation([])];
    for set in &sets {
        if set.is_empty() {
            return Err(CommandError::Config("empty ablation set".into()));
        }
        variants.push(m.with_ablation(set.iter().copied()));
    }
    // Every flag set is checked before anything runs.
    for v in &variants {
        check_plan(v)?;
    }
    let mut hashes = Vec::new();
    for v in &variants {
        cmd_run(v, services)?;
        hashes.push(v.config_hash());
    }
    if m.linter.enabled {
        cmd_evaluate(m, services)?;
    }
    let store = Store::new(&m.output_dir);
    let mut metrics = Vec::new();
    for (v, hash) in variants.iter().zip(&hashes) {
        let run = store.run_dir(hash);
        let outcomes = run.read_outcomes(m.benchmark)?;
        let quality = read_quality(&run)?.unwrap_or_default();
        metrics.push(variant_metrics(&variant_label(&v.pipeline), &outcomes, &quality));
    }
    let title = format!("Ablation ({}, {})", m.pipeline.model, m.benchmark);
    let table = ablation_table(&title, &metrics);
    let markdown = render_report(std::slice::from_ref(&table), ReportFormat::Markdown);
    let csv = render_report(std::slice::from_ref(&table), ReportFormat::Csv);
    let full = store.run_dir(&hashes[0]);
    crate::store::write_text(&full.path().join("ablation.md"), &markdown)?;
    crate::store::write_text(&full.path().join("ablation.csv"), &csv)?;
    Ok(AblationSummary {
        config_hashes: hashes,
        markdown,
    })
}

/// Combined report over every run directory under `output_dir`.
/// `baseline` names the row label used for relative changes.
pub fn cmd_report(output_dir: &Path, baseline: Option<&str>) -> Result<String, CommandError> {
    let store = Store::new(output_dir);
    let mut runs = Vec::new();
    for dir in store.run_dirs()? {
        let e = evaluated(&dir)?;
        if !e.outcomes.is_empty() {
            runs.push(e);
        }
    }
    if runs.is_empty() {
        return Err(CommandError::Fatal(format!(
            "no evaluated runs under {}",
            output_dir.display()
        )));
    }
    runs.sort_by(|a, b| a.label.cmp(&b.label));
    let baseline = match baseline {
        None => None,
        Some(label) => Some(runs.iter().position(|r| r.label == label).ok_or_else(|| {
            CommandError::Config(format!("no run labelled {label:?}"))
        })?),
    };
    let tables = run_tables(&runs, baseline);
    let (md, csv) = render_both(&tables);
    crate::store::write_text(&output_dir.join("report.md"), &md)?;
    crate::store::write_text(&output_dir.join("report.csv"), &csv)?;
    Ok(md)
}
