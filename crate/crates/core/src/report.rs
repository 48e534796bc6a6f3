//! Report tables: Pass@1 comparison, failure taxonomy and ablation deltas,
//! rendered as markdown or CSV. Rounding is half-up and happens only here.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::BenchmarkKind;
use crate::execution::FailureCategory;
use crate::stats::{t_test, FailureTable, StatSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

/// `x` scaled by 10^decimals and rounded half away from zero.
fn scaled(x: f64, decimals: u32) -> i64 {
    let s = x * libm::pow(10.0, decimals as f64);
    // Nudge values sitting a hair below .5 because of binary representation.
    let nudge = 1e-9 * s.abs().max(1.0);
    libm::round(if s >= 0.0 { s + nudge } else { s - nudge }) as i64
}

/// Fixed-point rendering with exactly `decimals` digits after the point.
pub fn fixed(x: f64, decimals: u32) -> String {
    digits(scaled(x, decimals), decimals, false)
}

fn digits(k: i64, decimals: u32, trim: bool) -> String {
    let sign = if k < 0 { "-" } else { "" };
    let k = k.unsigned_abs();
    if decimals == 0 {
        return format!("{sign}{k}");
    }
    let p = 10u64.pow(decimals);
    let mut frac = format!("{:0width$}", k % p, width = decimals as usize);
    if trim {
        while frac.len() > 1 && frac.ends_with('0') {
            frac.pop();
        }
    }
    format!("{sign}{}.{frac}", k / p)
}

/// Signed rounded value with trailing zeros trimmed (at least one decimal
/// kept): `+0.1`, `-39.0`, `0.0`.
pub fn signed_trimmed(x: f64, decimals: u32) -> String {
    let k = scaled(x, decimals);
    let body = digits(k, decimals, true);
    if k > 0 {
        format!("+{body}")
    } else {
        body
    }
}

fn signed_fixed(x: f64, decimals: u32) -> String {
    let k = scaled(x, decimals);
    let body = digits(k, decimals, false);
    if k > 0 {
        format!("+{body}")
    } else {
        body
    }
}

/// `mean±std` with one decimal, e.g. `75.2±1.1`.
pub fn mean_std_cell(summary: &StatSummary) -> String {
    format!("{}±{}", fixed(summary.mean, 1), fixed(summary.sample_std, 1))
}

/// Delta against a base value with the relative change in parentheses,
/// e.g. `-39.0 (56.1%)`. A zero base has no relative change.
pub fn delta_cell(value: f64, base: f64, decimals: u32) -> String {
    let delta = value - base;
    let relative = if base == 0.0 {
        if scaled(delta, decimals) == 0 {
            fixed(0.0, 1) + "%"
        } else {
            "n/a".to_string()
        }
    } else {
        format!("{}%", fixed((delta / base).abs() * 100.0, 1))
    };
    format!("{} ({relative})", signed_trimmed(delta, decimals))
}

/// Significance level for the `*` marker.
pub const SIGNIFICANCE: f64 = 0.05;

/// Pass@1 cell relative to a baseline: `69.5±2.3 (+7.9%)*`, the star marking
/// p ≤ 0.05 under Student's t-test.
pub fn pass_cell(summary: &StatSummary, baseline: Option<&StatSummary>) -> String {
    let mut cell = mean_std_cell(summary);
    if let Some(base) = baseline {
        if base.mean != 0.0 {
            let change = (summary.mean - base.mean) / base.mean * 100.0;
            cell.push_str(&format!(" ({}%)", signed_fixed(change, 1)));
        }
        if let Ok(r) = t_test(&summary.values, &base.values) {
            if r.p_value <= SIGNIFICANCE {
                cell.push('*');
            }
        }
    }
    cell
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Pass@1 per model and benchmark. `rows` holds one summary per benchmark
/// (or `None` when not evaluated); the row at `baseline` is the reference
/// for relative changes and significance.
pub fn pass_table(
    benchmarks: &[BenchmarkKind],
    rows: &[(String, Vec<Option<StatSummary>>)],
    baseline: Option<usize>,
) -> Table {
    let mut header = Vec::with_capacity(benchmarks.len() + 1);
    header.push("Model".to_string());
    header.extend(benchmarks.iter().map(|b| b.name().to_string()));
    let body = rows
        .iter()
        .enumerate()
        .map(|(i, (label, cells))| {
            let mut row = Vec::with_capacity(cells.len() + 1);
            row.push(label.clone());
            for (col, cell) in cells.iter().enumerate() {
                let base = baseline
                    .filter(|b| *b != i)
                    .and_then(|b| rows.get(b))
                    .and_then(|(_, base_cells)| base_cells.get(col))
                    .and_then(|c| c.as_ref());
                row.push(match cell {
                    Some(s) => pass_cell(s, base),
                    None => "--".to_string(),
                });
            }
            row
        })
        .collect();
    Table {
        title: "Pass@1".to_string(),
        header,
        rows: body,
    }
}

/// Failure counts per category with each category's share of the model's
/// failures; `Total` is the failure count and the share of problems failed.
pub fn failure_rows(benchmark: BenchmarkKind, table: &FailureTable) -> Table {
    let mut header = Vec::with_capacity(FailureCategory::ALL.len() + 2);
    header.push("Model".to_string());
    header.extend(FailureCategory::ALL.iter().map(|c| c.name().to_string()));
    header.push("Total".to_string());
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let mut cells = Vec::with_capacity(header.len());
            cells.push(row.model.clone());
            for cat in FailureCategory::ALL {
                cells.push(format!("{} ({}%)", row.count(cat), fixed(row.percent(cat), 1)));
            }
            cells.push(format!(
                "{} ({}%)",
                row.total_failures,
                fixed(row.failed_percent(), 1)
            ));
            cells
        })
        .collect();
    Table {
        title: format!("Failure categories ({})", benchmark.name()),
        header,
        rows,
    }
}

/// Pass@1 and quality densities of one pipeline variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub label: String,
    pub pass_at_1: f64,
    pub error: f64,
    pub warning: f64,
    pub convention: f64,
    pub refactor: f64,
    pub handled_exception: f64,
}

impl VariantMetrics {
    fn values(&self) -> [(f64, u32); 6] {
        [
            (self.pass_at_1, 1),
            (self.error, 2),
            (self.warning, 2),
            (self.convention, 2),
            (self.refactor, 2),
            (self.handled_exception, 2),
        ]
    }
}

/// Ablation comparison: the first variant is shown in absolute terms, every
/// other variant as deltas against it.
pub fn ablation_table(title: &str, variants: &[VariantMetrics]) -> Table {
    let header = [
        "Variant",
        "Pass@1",
        "Error",
        "Warning",
        "Convention",
        "Refactor",
        "Handled Exception",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::with_capacity(variants.len());
    if let Some((full, rest)) = variants.split_first() {
        let mut row = Vec::with_capacity(7);
        row.push(full.label.clone());
        row.extend(full.values().iter().map(|(v, d)| fixed(*v, *d)));
        rows.push(row);
        for variant in rest {
            let mut row = Vec::with_capacity(7);
            row.push(variant.label.clone());
            for ((v, d), (base, _)) in variant.values().iter().zip(full.values()) {
                row.push(delta_cell(*v, base, *d));
            }
            rows.push(row);
        }
    }
    Table {
        title: title.to_string(),
        header,
        rows,
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_markdown(table: &Table, out: &mut String) {
    out.push_str(&format!("## {}\n\n", table.title));
    out.push_str(&format!("| {} |\n", table.header.join(" | ")));
    let rule: Vec<&str> = table.header.iter().map(|_| "---").collect();
    out.push_str(&format!("|{}|\n", rule.join("|")));
    for row in &table.rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
}

fn render_csv(table: &Table, out: &mut String) {
    out.push_str(&csv_field(&table.title));
    out.push('\n');
    for row in core::iter::once(&table.header).chain(&table.rows) {
        let fields: Vec<String> = row.iter().map(|c| csv_field(c)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
}

/// Renders tables in order, separated by blank lines.
pub fn render_report(tables: &[Table], format: ReportFormat) -> String {
    let mut out = String::new();
    for (i, table) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match format {
            ReportFormat::Markdown => render_markdown(table, &mut out),
            ReportFormat::Csv => render_csv(table, &mut out),
        }
    }
    out
}
