//! False convergence and time to optimize, both read off realized per-batch
//! traffic allocation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bandit::strict_argmax;
use crate::error::{Error, Result};
use crate::sim::{ArticleResult, BatchRecord};
use crate::trace::ArticleSpec;

/// One hour of 5-minute batches.
pub const DEFAULT_STABLE_WINDOW: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub article_id: String,
    pub converged_correctly: bool,
    /// Index of the first batch in the stable window.
    pub stable_window_start: Option<u32>,
    /// Arm with strictly the most impressions over the window.
    pub plurality_arm: Option<usize>,
    pub optimal_arm: usize,
}

fn strict_plurality(batch: &BatchRecord) -> Option<usize> {
    strict_argmax(&batch.impressions)
}

/// Allocation over the final `window` batches that carried traffic. Empty
/// batches say nothing about allocation and are passed over.
pub fn convergence_verdict(result: &ArticleResult, spec: &ArticleSpec, window: usize) -> ConvergenceVerdict {
    let optimal_arm = spec.optimal_arm();
    let tail: Vec<&BatchRecord> = result
        .batches
        .iter()
        .rev()
        .filter(|b| b.size > 0)
        .take(window.max(1))
        .collect();
    let mut totals = vec![0u64; result.arm_count()];
    for b in &tail {
        for (t, n) in totals.iter_mut().zip(&b.impressions) {
            *t += n;
        }
    }
    let plurality_arm = if tail.is_empty() { None } else { strict_argmax(&totals) };
    ConvergenceVerdict {
        article_id: result.article_id.clone(),
        converged_correctly: plurality_arm == Some(optimal_arm),
        stable_window_start: tail.last().map(|b| b.index),
        plurality_arm,
        optimal_arm,
    }
}

pub(crate) fn index_specs(specs: &[ArticleSpec]) -> HashMap<&str, &ArticleSpec> {
    specs.iter().map(|s| (s.article_id.as_str(), s)).collect()
}

pub(crate) fn spec_for<'a>(
    index: &HashMap<&str, &'a ArticleSpec>,
    article_id: &str,
) -> Result<&'a ArticleSpec> {
    index
        .get(article_id)
        .copied()
        .ok_or_else(|| Error::input(format!("no article spec for result `{article_id}`")))
}

pub fn convergence_verdicts(
    results: &[ArticleResult],
    specs: &[ArticleSpec],
    window: usize,
) -> Result<Vec<ConvergenceVerdict>> {
    if results.is_empty() {
        return Err(Error::input("no simulation results to evaluate"));
    }
    let index = index_specs(specs);
    results
        .iter()
        .map(|r| Ok(convergence_verdict(r, spec_for(&index, &r.article_id)?, window)))
        .collect()
}

/// Share of articles whose stable-window plurality arm is not the optimal arm.
pub fn false_convergence_rate(results: &[ArticleResult], specs: &[ArticleSpec], window: usize) -> Result<f64> {
    let verdicts = convergence_verdicts(results, specs, window)?;
    let wrong = verdicts.iter().filter(|v| !v.converged_correctly).count();
    Ok(wrong as f64 / verdicts.len() as f64)
}

/// Minutes until the optimal arm holds the strict traffic plurality in every
/// later batch; `None` if that never settles.
pub fn time_to_optimize(result: &ArticleResult, spec: &ArticleSpec) -> Option<u32> {
    time_to_optimize_until(result, spec, u32::MAX)
}

/// [`time_to_optimize`] requiring the plurality only for batches starting
/// before `until_minute`. The answer is the end of the first batch with
/// traffic after the last violating one.
pub fn time_to_optimize_until(result: &ArticleResult, spec: &ArticleSpec, until_minute: u32) -> Option<u32> {
    let optimal = spec.optimal_arm();
    let mut candidate: Option<u32> = None;
    for b in result
        .batches
        .iter()
        .filter(|b| b.size > 0 && b.start_minute < until_minute)
    {
        if strict_plurality(b) == Some(optimal) {
            candidate.get_or_insert(b.end_minute);
        } else {
            candidate = None;
        }
    }
    candidate
}
