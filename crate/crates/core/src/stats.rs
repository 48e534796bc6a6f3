//! Pass@1, run aggregation, Student's t-test, failure tables and CodeT
//! version selection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::BenchmarkKind;
use crate::execution::{FailureCategory, ProblemOutcome};

/// Per-problem verdicts of one repeat of one configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcomeSet {
    pub benchmark: BenchmarkKind,
    pub run_index: u32,
    pub config_hash: String,
    pub outcomes: BTreeMap<String, ProblemOutcome>,
}

impl RunOutcomeSet {
    /// True when the set holds exactly the given problem ids.
    pub fn covers<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> bool {
        let mut n = 0;
        for id in ids {
            if !self.outcomes.contains_key(id) {
                return false;
            }
            n += 1;
        }
        n == self.outcomes.len()
    }

    pub fn passes(&self) -> usize {
        self.outcomes.values().filter(|o| o.is_pass()).count()
    }
}

/// Percentage of problems whose final code passes the oracle.
pub fn pass_at_1(outcomes: &RunOutcomeSet) -> f64 {
    pass_rate(outcomes.passes(), outcomes.outcomes.len())
}

pub fn pass_rate(passes: usize, problems: usize) -> f64 {
    if problems == 0 {
        0.0
    } else {
        100.0 * passes as f64 / problems as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no values to aggregate")]
    Empty,
    #[error("each sample needs at least two values")]
    TooFewSamples,
    #[error("both samples are constant and equal")]
    DegenerateSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when `n_runs == 1`.
    pub sample_std: f64,
    pub n_runs: usize,
    pub values: Vec<f64>,
    /// False when there was a single run and the deviation is undefined.
    pub std_defined: bool,
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn mean_and_var(values: &[f64]) -> (f64, f64) {
    // Summing in sorted order makes the result independent of input order.
    let v = sorted(values);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        sq.sort_by(f64::total_cmp);
        sq.iter().sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

pub fn aggregate_runs(values: &[f64]) -> Result<StatSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let (mean, var) = mean_and_var(values);
    Ok(StatSummary {
        mean,
        sample_std: libm::sqrt(var),
        n_runs: values.len(),
        values: values.to_vec(),
        std_defined: values.len() > 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TTestKind {
    /// Student's test with pooled variance.
    Pooled,
    /// Welch's unequal-variance test.
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sample two-tailed t-test.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    t_test_with(a, b, TTestKind::Pooled)
}

pub fn t_test_with(a: &[f64], b: &[f64], kind: TTestKind) -> Result<TTestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFewSamples);
    }
    let (ma, va) = mean_and_var(a);
    let (mb, vb) = mean_and_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if va == 0.0 && vb == 0.0 {
        if ma == mb {
            return Err(StatsError::DegenerateSamples);
        }
        let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
        return Ok(TTestResult {
            t,
            df: na + nb - 2.0,
            p_value: 0.0,
        });
    }
    let (se, df) = match kind {
        TTestKind::Pooled => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (libm::sqrt(pooled * (1.0 / na + 1.0 / nb)), df)
        }
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb) * (qa + qb)
                / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            (libm::sqrt(qa + qb), df)
        }
    };
    let t = (ma - mb) / se;
    Ok(TTestResult {
        t,
        df,
        p_value: student_two_tailed(t, df),
    })
}

/// P(|T| ≥ |t|) for Student's t with `df` degrees of freedom.
pub fn student_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// I_x(a, b) via the Lentz continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log(1.0 - x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// One model's failure counts, aggregated over every outcome set given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub model: String,
    pub counts: BTreeMap<FailureCategory, usize>,
    pub total_failures: usize,
    pub total_outcomes: usize,
}

impl FailureRow {
    pub fn count(&self, category: FailureCategory) -> usize {
        self.counts.get(&category).copied().unwrap_or(0)
    }

    /// Share of this model's failures that fall in `category`.
    pub fn percent(&self, category: FailureCategory) -> f64 {
        pass_rate(self.count(category), self.total_failures)
    }

    /// Failed problems as a share of all evaluated problems.
    pub fn failed_percent(&self) -> f64 {
        pass_rate(self.total_failures, self.total_outcomes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureTable {
    pub rows: Vec<FailureRow>,
}

impl FailureTable {
    /// Share of all models' failures in `category` that belong to `model`.
    pub fn share_across_models(&self, model: &str, category: FailureCategory) -> f64 {
        let total: usize = self.rows.iter().map(|r| r.count(category)).sum();
        let mine = self
            .rows
            .iter()
            .find(|r| r.model == model)
            .map(|r| r.count(category))
            .unwrap_or(0);
        pass_rate(mine, total)
    }
}

pub fn failure_table(per_model: &[(String, Vec<RunOutcomeSet>)]) -> FailureTable {
    let rows = per_model
        .iter()
        .map(|(model, sets)| {
            let mut counts = BTreeMap::new();
            let mut total_failures = 0;
            let mut total_outcomes = 0;
            for set in sets {
                for outcome in set.outcomes.values() {
                    total_outcomes += 1;
                    if let ProblemOutcome::Fail(cat) = outcome {
                        *counts.entry(*cat).or_insert(0) += 1;
                        total_failures += 1;
                    }
                }
            }
            FailureRow {
                model: model.clone(),
                counts,
                total_failures,
                total_outcomes,
            }
        })
        .collect();
    FailureTable { rows }
}

/// Index of the largest pass count; ties go to the lowest index.
pub fn codet_select(pass_counts: &[u32]) -> Option<usize> {
    let mut best: Option<(usize, u32)> = None;
    for (i, &c) in pass_counts.iter().enumerate() {
        match best {
            Some((_, b)) if c <= b => {}
            _ => best = Some((i, c)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn set(results: &[(&str, ProblemOutcome)]) -> RunOutcomeSet {
        RunOutcomeSet {
            benchmark: BenchmarkKind::HumanEval,
            run_index: 0,
            config_hash: "h".into(),
            outcomes: results.iter().map(|(id, o)| (String::from(*id), *o)).collect(),
        }
    }

    fn synthetic(passes: usize, total: usize) -> RunOutcomeSet {
        let mut s = set(&[]);
        for i in 0..total {
            let outcome = if i < passes {
                ProblemOutcome::Pass
            } else {
                ProblemOutcome::Fail(FailureCategory::Assertion)
            };
            s.outcomes.insert(format!("p{i}"), outcome);
        }
        s
    }

    /// Independent pooled t-test using statrs' Student t CDF.
    fn statrs_pooled(a: &[f64], b: &[f64]) -> f64 {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
        };
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let df = na + nb - 2.0;
        let sp = ((na - 1.0) * var(a) + (nb - 1.0) * var(b)) / df;
        let t = (mean(a) - mean(b)) / (sp * (1.0 / na + 1.0 / nb)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        2.0 * (1.0 - dist.cdf(t.abs()))
    }

    #[test]
    fn pass_at_1_examples() {
        assert_eq!(pass_at_1(&synthetic(123, 164)), 100.0 * 123.0 / 164.0);
        assert_eq!(pass_at_1(&synthetic(0, 164)), 0.0);
        assert_eq!(pass_at_1(&synthetic(164, 164)), 100.0);
        let s = synthetic(3, 4);
        assert!(s.covers(["p0", "p1", "p2", "p3"]));
        assert!(!s.covers(["p0", "p1", "p2"]));
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate_runs(&[70.0, 70.0, 70.0]).unwrap();
        assert_eq!((s.mean, s.sample_std), (70.0, 0.0));
        let s = aggregate_runs(&[74.0, 76.0]).unwrap();
        assert_eq!(s.mean, 75.0);
        assert!((s.sample_std - 2f64.sqrt()).abs() < 1e-12);
        let s = aggregate_runs(&[66.0]).unwrap();
        assert!(!s.std_defined);
        assert_eq!(s.sample_std, 0.0);
        assert_eq!(aggregate_runs(&[]), Err(StatsError::Empty));
    }

    #[test]
    fn five_run_fixture() {
        // Reference values from Python's statistics.mean / statistics.stdev.
        let s = aggregate_runs(&[76.0, 73.6, 75.0, 76.4, 74.8]).unwrap();
        assert!((s.mean - 75.16).abs() < 1e-9);
        assert!((s.sample_std - 1.099_090_533_122_730_8).abs() < 1e-9);
    }

    #[test]
    fn t_test_examples() {
        let same = [70.0, 71.0, 72.0];
        let r = t_test(&same, &same).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = t_test(&[1.0, 2.0, 3.0], &[101.0, 102.0, 103.0]).unwrap();
        assert!(r.p_value < 0.001);
        assert_eq!(
            t_test(&[70.0, 70.0], &[70.0, 70.0]),
            Err(StatsError::DegenerateSamples)
        );
        assert_eq!(t_test(&[1.0, 1.0], &[2.0, 2.0]).unwrap().p_value, 0.0);
        assert_eq!(t_test(&[1.0], &[2.0, 3.0]), Err(StatsError::TooFewSamples));
    }

    #[test]
    fn t_test_matches_frozen_reference_values() {
        // Reference p-values computed with scipy.stats.ttest_ind before the build.
        let a = [69.5, 67.1, 72.0, 70.7, 68.3];
        let b = [64.4, 60.9, 68.2, 62.5, 65.8];
        let pooled = t_test(&a, &b).unwrap();
        assert!((pooled.p_value - 0.009_916_902_712_284_922).abs() < 1e-6, "{}", pooled.p_value);
        let welch = t_test_with(&a, &b, TTestKind::Welch).unwrap();
        assert!((welch.p_value - 0.011_955_240_325_770_793).abs() < 1e-6, "{}", welch.p_value);
    }

    #[test]
    fn incomplete_beta_edges() {
        assert_eq!(regularized_incomplete_beta(0.0, 2.0, 0.5), 0.0);
        assert_eq!(regularized_incomplete_beta(1.0, 2.0, 0.5), 1.0);
        // I_x(1, 1) = x
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn failure_table_examples() {
        let mut outcomes = vec![];
        for i in 0..4 {
            outcomes.push((format!("a{i}"), ProblemOutcome::Fail(FailureCategory::Assertion)));
        }
        for i in 0..6 {
            outcomes.push((format!("n{i}"), ProblemOutcome::Fail(FailureCategory::Name)));
        }
        for i in 0..10 {
            outcomes.push((format!("p{i}"), ProblemOutcome::Pass));
        }
        let refs: Vec<(&str, ProblemOutcome)> =
            outcomes.iter().map(|(id, o)| (id.as_str(), *o)).collect();
        let table = failure_table(&[
            ("Scrum".into(), vec![set(&refs)]),
            ("Waterfall".into(), vec![synthetic(5, 5)]),
        ]);
        let row = &table.rows[0];
        assert_eq!(row.total_failures, 10);
        assert_eq!((row.count(FailureCategory::Assertion), row.percent(FailureCategory::Assertion)), (4, 40.0));
        assert_eq!(row.failed_percent(), 50.0);
        let sum: f64 = FailureCategory::ALL.iter().map(|c| row.percent(*c)).sum();
        assert!((sum - 100.0).abs() < 0.1);
        let empty = &table.rows[1];
        assert_eq!(empty.total_failures, 0);
        assert!(FailureCategory::ALL.iter().all(|c| empty.percent(*c) == 0.0));
        assert_eq!(table.share_across_models("Scrum", FailureCategory::Name), 100.0);
    }

    #[test]
    fn codet_examples() {
        assert_eq!(codet_select(&[2, 5, 3]), Some(1));
        assert_eq!(codet_select(&[4, 4]), Some(0));
        assert_eq!(codet_select(&[0, 0, 0]), Some(0));
        assert_eq!(codet_select(&[]), None);
    }

    proptest! {
        #[test]
        fn pass_at_1_bounded_and_monotone(passes in proptest::collection::vec(any::<bool>(), 1..200), flip in any::<prop::sample::Index>()) {
            let mut s = set(&[]);
            for (i, p) in passes.iter().enumerate() {
                let o = if *p { ProblemOutcome::Pass } else { ProblemOutcome::Fail(FailureCategory::Other) };
                s.outcomes.insert(format!("p{i}"), o);
            }
            let before = pass_at_1(&s);
            prop_assert!((0.0..=100.0).contains(&before));
            let key = format!("p{}", flip.index(passes.len()));
            s.outcomes.insert(key, ProblemOutcome::Pass);
            prop_assert!(pass_at_1(&s) >= before);
        }

        #[test]
        fn aggregate_is_permutation_invariant(values in proptest::collection::vec(0.0f64..100.0, 1..12), seed in any::<u64>()) {
            let mut shuffled = values.clone();
            let len = shuffled.len();
            let mut state = seed;
            for i in (1..len).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            let a = aggregate_runs(&values).unwrap();
            let b = aggregate_runs(&shuffled).unwrap();
            prop_assert_eq!(a.mean, b.mean);
            prop_assert_eq!(a.sample_std, b.sample_std);
        }

        #[test]
        fn t_test_is_symmetric_and_matches_statrs(
            a in proptest::collection::vec(0.0f64..100.0, 2..8),
            b in proptest::collection::vec(0.0f64..100.0, 2..8),
        ) {
            let ab = t_test(&a, &b);
            let ba = t_test(&b, &a);
            prop_assert_eq!(ab.clone().map(|r| r.p_value), ba.map(|r| r.p_value));
            if let Ok(r) = ab {
                prop_assert!((0.0..=1.0).contains(&r.p_value));
                let oracle = statrs_pooled(&a, &b);
                prop_assert!((r.p_value - oracle).abs() < 1e-6, "{} vs {}", r.p_value, oracle);
            }
        }

        #[test]
        fn failure_percentages_sum_to_100(cats in proptest::collection::vec(0usize..11, 1..300)) {
            let mut s = set(&[]);
            for (i, c) in cats.iter().enumerate() {
                let o = if *c == 10 { ProblemOutcome::Pass } else { ProblemOutcome::Fail(FailureCategory::ALL[*c]) };
                s.outcomes.insert(format!("p{i}"), o);
            }
            let table = failure_table(&[("m".into(), vec![s])]);
            let row = &table.rows[0];
            if row.total_failures > 0 {
                let sum: f64 = FailureCategory::ALL.iter().map(|c| row.percent(*c)).sum();
                prop_assert!((sum - 100.0).abs() < 0.1);
            }
        }

        #[test]
        fn codet_matches_linear_scan(counts in proptest::collection::vec(0u32..10, 1..20)) {
            let max = *counts.iter().max().unwrap();
            let first = counts.iter().position(|c| *c == max).unwrap();
            prop_assert_eq!(codet_select(&counts), Some(first));
        }
    }
}
