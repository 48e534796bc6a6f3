//! Oracle verdicts, quality aggregation and report tables for stored runs.

use std::collections::BTreeMap;

use flowgen_core::quality::{count_handlers, count_loc, density, LintCategory, LintReport};
use flowgen_core::report::{
    ablation_table, failure_rows, pass_table, render_report, ReportFormat, Table, VariantMetrics,
};
use flowgen_core::stats::{aggregate_runs, failure_table, pass_at_1, RunOutcomeSet, StatSummary};
use flowgen_core::{BenchmarkKind, PipelineConfig};
use serde::{Deserialize, Serialize};

/// Raw counts behind one program's quality densities.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemQuality {
    pub loc: usize,
    pub error: usize,
    pub warning: usize,
    pub convention: usize,
    pub refactor: usize,
    /// Linter findings outside E/W/C/R.
    pub dropped: u32,
    pub handlers: usize,
    pub handlers_approximate: bool,
}

impl ProblemQuality {
    pub fn measure(code: &str, lint: &LintReport) -> Self {
        let handlers = count_handlers(code);
        ProblemQuality {
            loc: count_loc(code),
            error: lint.count(LintCategory::Error),
            warning: lint.count(LintCategory::Warning),
            convention: lint.count(LintCategory::Convention),
            refactor: lint.count(LintCategory::Refactor),
            dropped: lint.dropped,
            handlers: handlers.count,
            handlers_approximate: handlers.approximate,
        }
    }
}

pub type QualitySet = BTreeMap<String, ProblemQuality>;

/// Densities over a corpus: category totals divided by total LOC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PooledQuality {
    pub loc: usize,
    pub error: f64,
    pub warning: f64,
    pub convention: f64,
    pub refactor: f64,
    pub handled_exception: f64,
    pub approximate_programs: usize,
}

pub fn pool<'a>(items: impl IntoIterator<Item = &'a ProblemQuality>) -> PooledQuality {
    let mut total = ProblemQuality::default();
    let mut approximate = 0;
    for q in items {
        total.loc += q.loc;
        total.error += q.error;
        total.warning += q.warning;
        total.convention += q.convention;
        total.refactor += q.refactor;
        total.handlers += q.handlers;
        approximate += usize::from(q.handlers_approximate);
    }
    PooledQuality {
        loc: total.loc,
        error: density(total.error, total.loc),
        warning: density(total.warning, total.loc),
        convention: density(total.convention, total.loc),
        refactor: density(total.refactor, total.loc),
        handled_exception: density(total.handlers, total.loc),
        approximate_programs: approximate,
    }
}

/// Row label such as `Scrum` or `Waterfall rm-design`.
pub fn variant_label(pipeline: &PipelineConfig) -> String {
    let mut label = pipeline.model.name().to_string();
    for flag in &pipeline.ablation {
        label.push(' ');
        label.push_str(flag.label());
    }
    label
}

pub fn pass_summary(sets: &[RunOutcomeSet]) -> Option<StatSummary> {
    let values: Vec<f64> = sets.iter().map(pass_at_1).collect();
    aggregate_runs(&values).ok()
}

pub fn variant_metrics(label: &str, outcomes: &[RunOutcomeSet], quality: &PooledQuality) -> VariantMetrics {
    VariantMetrics {
        label: label.to_string(),
        pass_at_1: pass_summary(outcomes).map_or(0.0, |s| s.mean),
        error: quality.error,
        warning: quality.warning,
        convention: quality.convention,
        refactor: quality.refactor,
        handled_exception: quality.handled_exception,
    }
}

pub const HANDLER_NOTE: &str =
    "Handled exceptions count every except clause of a try statement, not try statements.";

pub fn notes_table(notes: &[String]) -> Table {
    Table {
        title: "Notes".into(),
        header: vec!["Note".into()],
        rows: notes.iter().map(|n| vec![n.clone()]).collect(),
    }
}

/// One evaluated configuration, as the report sees it.
#[derive(Debug, Clone)]
pub struct EvaluatedRun {
    pub label: String,
    pub outcomes: BTreeMap<BenchmarkKind, Vec<RunOutcomeSet>>,
    pub quality: Option<PooledQuality>,
}

/// Pass@1, failure taxonomy and (when measured) quality tables.
pub fn run_tables(runs: &[EvaluatedRun], baseline: Option<usize>) -> Vec<Table> {
    let mut benchmarks: Vec<BenchmarkKind> = runs
        .iter()
        .flat_map(|r| r.outcomes.keys().copied())
        .collect();
    benchmarks.sort();
    benchmarks.dedup();
    let rows: Vec<(String, Vec<Option<StatSummary>>)> = runs
        .iter()
        .map(|r| {
            let cells = benchmarks
                .iter()
                .map(|b| r.outcomes.get(b).and_then(|sets| pass_summary(sets)))
                .collect();
            (r.label.clone(), cells)
        })
        .collect();
    let mut tables = vec![pass_table(&benchmarks, &rows, baseline)];
    for b in &benchmarks {
        let per_model: Vec<(String, Vec<RunOutcomeSet>)> = runs
            .iter()
            .filter_map(|r| r.outcomes.get(b).map(|s| (r.label.clone(), s.clone())))
            .collect();
        tables.push(failure_rows(*b, &failure_table(&per_model)));
    }
    let measured: Vec<VariantMetrics> = runs
        .iter()
        .filter_map(|r| {
            let q = r.quality.as_ref()?;
            let base = r.outcomes.keys().next().and_then(|b| r.outcomes.get(b))?;
            Some(variant_metrics(&r.label, base, q))
        })
        .collect();
    for m in measured {
        tables.push(ablation_table(&format!("Quality ({})", m.label), &[m]));
    }
    let mut notes = vec![HANDLER_NOTE.to_string()];
    let approx: usize = runs.iter().filter_map(|r| r.quality).map(|q| q.approximate_programs).sum();
    if approx > 0 {
        notes.push(format!("{approx} programs had handlers counted by line scan."));
    }
    tables.push(notes_table(&notes));
    tables
}

pub fn render_both(tables: &[Table]) -> (String, String) {
    (
        render_report(tables, ReportFormat::Markdown),
        render_report(tables, ReportFormat::Csv),
    )
}
