//! Aggregation of trial records: coverage, set sizes, Jaccard distances,
//! trade-off curves and exceed-reference frequencies.

use std::collections::BTreeMap;

use crate::design::{Method, TrialRecord};
use crate::error::{FcsError, Result};
use crate::fcs::GridConfidenceSet;

/// Fraction of records whose set covers the true label.
pub fn empirical_coverage(records: &[TrialRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(FcsError::input("coverage of an empty record list"));
    }
    Ok(records.iter().filter(|r| r.covered).count() as f64 / records.len() as f64)
}

/// `1 - |a ∩ b| / |a ∪ b|` over included grid values; `0` when both are empty.
pub fn jaccard_distance(a: &GridConfidenceSet, b: &GridConfidenceSet) -> Result<f64> {
    if a.grid != b.grid || a.included.len() != b.included.len() {
        return Err(FcsError::input(format!(
            "cannot compare sets on grids {} and {}",
            a.grid, b.grid
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.included.iter().zip(&b.included) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    })
}

/// Fraction of records whose set minimum exceeds `reference`; empty sets never do.
pub fn exceed_reference_frequency(records: &[TrialRecord], reference: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|r| r.set.min().is_some_and(|m| m > reference))
        .count();
    hits as f64 / records.len() as f64
}

/// Statistics for one `(n, λ, method)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepSummary {
    pub n: usize,
    pub lambda: f64,
    pub method: Method,
    pub trials: usize,
    pub coverage: f64,
    /// Width statistics over sets of finite size.
    pub mean_width: f64,
    pub median_width: f64,
    pub min_width: f64,
    pub max_width: f64,
    /// `mean_width` divided by the range of true fitness values.
    pub mean_width_fraction: f64,
    pub fraction_infinite: f64,
    pub mean_predicted: f64,
    pub exceed_reference: Option<f64>,
}

/// Summarizes records grouped by `(n, λ, method)`, sorted by that key.
pub fn summarize(
    records: &[TrialRecord],
    fitness_range: f64,
    reference: Option<f64>,
) -> Result<Vec<SweepSummary>> {
    let mut groups: BTreeMap<(usize, u64, Method), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.n, order_key(r.lambda), r.method))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|group| {
            let owned: Vec<TrialRecord> = group.iter().map(|r| (*r).clone()).collect();
            summarize_cell(&owned, fitness_range, reference)
        })
        .collect()
}

/// Total order on finite and infinite floats that sorts like the values.
pub(crate) fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | 1 << 63
    }
}

fn summarize_cell(
    records: &[TrialRecord],
    fitness_range: f64,
    reference: Option<f64>,
) -> Result<SweepSummary> {
    let coverage = empirical_coverage(records)?;
    let first = &records[0];
    let mut finite: Vec<f64> = records
        .iter()
        .map(|r| r.size)
        .filter(|s| s.is_finite())
        .collect();
    finite.sort_by(f64::total_cmp);
    let t = records.len() as f64;
    let (mean, median, min, max) = if finite.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let k = finite.len();
        let median = if k % 2 == 1 {
            finite[k / 2]
        } else {
            0.5 * (finite[k / 2 - 1] + finite[k / 2])
        };
        (
            finite.iter().sum::<f64>() / k as f64,
            median,
            finite[0],
            finite[k - 1],
        )
    };
    Ok(SweepSummary {
        n: first.n,
        lambda: first.lambda,
        method: first.method,
        trials: records.len(),
        coverage,
        mean_width: mean,
        median_width: median,
        min_width: min,
        max_width: max,
        mean_width_fraction: mean / fitness_range,
        fraction_infinite: (records.len() - finite.len()) as f64 / t,
        mean_predicted: sorted_sum(records.iter().map(|r| r.predicted)) / t,
        exceed_reference: reference.map(|f| exceed_reference_frequency(records, f)),
    })
}

/// Sum in ascending order, so the result does not depend on record order.
fn sorted_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// One row of a trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TradeoffPoint {
    pub lambda: f64,
    pub mean_predicted: f64,
    pub mean_width: f64,
    pub fraction_infinite: f64,
}

/// Mean predicted fitness against mean width, sorted by λ.
pub fn tradeoff_curve(summaries: &[SweepSummary]) -> Vec<TradeoffPoint> {
    let mut rows: Vec<TradeoffPoint> = summaries
        .iter()
        .map(|s| TradeoffPoint {
            lambda: s.lambda,
            mean_predicted: s.mean_predicted,
            mean_width: s.mean_width,
            fraction_infinite: s.fraction_infinite,
        })
        .collect();
    rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    rows
}
