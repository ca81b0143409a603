//! Paired comparisons of bandit runs against the test-rollout baseline: click
//! gain split at the end of the testing period, and exposure of sub-optimal
//! headlines.

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineResult;
use crate::error::{Error, Result};
use crate::eval::convergence::{index_specs, spec_for};
use crate::eval::stats::bootstrap_interval;
use crate::sim::ArticleResult;
use crate::trace::ArticleSpec;

/// Clicks of one article before and after the testing-period boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickSplit {
    pub article_id: String,
    pub first_hour: u64,
    pub remaining: u64,
}

impl ClickSplit {
    pub fn total(&self) -> u64 {
        self.first_hour + self.remaining
    }
}

impl From<&ArticleResult> for ClickSplit {
    fn from(r: &ArticleResult) -> Self {
        let first_hour = r.early_click_total();
        ClickSplit {
            article_id: r.article_id.clone(),
            first_hour,
            remaining: r.total_clicks() - first_hour,
        }
    }
}

impl From<&BaselineResult> for ClickSplit {
    fn from(r: &BaselineResult) -> Self {
        ClickSplit {
            article_id: r.article_id.clone(),
            first_hour: r.testing_click_total(),
            remaining: r.post_clicks,
        }
    }
}

pub fn click_splits<'a, T>(results: &'a [T]) -> Vec<ClickSplit>
where
    &'a T: Into<ClickSplit>,
{
    results.iter().map(Into::into).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    FirstHour,
    Remaining,
    Total,
}

impl Period {
    fn clicks(self, split: &ClickSplit) -> u64 {
        match self {
            Period::FirstHour => split.first_hour,
            Period::Remaining => split.remaining,
            Period::Total => split.total(),
        }
    }
}

/// Relative click increase of the treatment over the reference, as fractions.
/// `None` where the reference has no clicks in that period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub first_hour: Option<f64>,
    pub remaining: Option<f64>,
    pub total: Option<f64>,
}

fn ratio_gain(treatment: u64, reference: u64) -> Option<f64> {
    (reference > 0).then(|| treatment as f64 / reference as f64 - 1.0)
}

fn check_paired(treatment: &[ClickSplit], reference: &[ClickSplit]) -> Result<()> {
    if treatment.is_empty() {
        return Err(Error::input("click gain needs at least one article"));
    }
    if treatment.len() != reference.len() {
        return Err(Error::input(format!(
            "corpus mismatch: {} treatment articles vs {} reference articles",
            treatment.len(),
            reference.len()
        )));
    }
    if let Some((a, b)) = treatment
        .iter()
        .zip(reference)
        .find(|(a, b)| a.article_id != b.article_id)
    {
        return Err(Error::input(format!(
            "corpus mismatch: article `{}` paired with `{}`",
            a.article_id, b.article_id
        )));
    }
    Ok(())
}

/// Corpus-level gain: summed treatment clicks over summed reference clicks, minus one.
pub fn click_gain(treatment: &[ClickSplit], reference: &[ClickSplit]) -> Result<GainReport> {
    check_paired(treatment, reference)?;
    let sum = |xs: &[ClickSplit], p: Period| xs.iter().map(|s| p.clicks(s)).sum::<u64>();
    let gain = |p| ratio_gain(sum(treatment, p), sum(reference, p));
    Ok(GainReport {
        first_hour: gain(Period::FirstHour),
        remaining: gain(Period::Remaining),
        total: gain(Period::Total),
    })
}

/// Percentile bootstrap interval of the gain in `period`, resampling articles.
pub fn bootstrap_gain(
    treatment: &[ClickSplit],
    reference: &[ClickSplit],
    period: Period,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Option<(f64, f64)>> {
    check_paired(treatment, reference)?;
    Ok(bootstrap_interval(treatment.len(), resamples, level, seed, |idx| {
        let t: u64 = idx.iter().map(|&i| period.clicks(&treatment[i])).sum();
        let r: u64 = idx.iter().map(|&i| period.clicks(&reference[i])).sum();
        ratio_gain(t, r)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuboptimalReport {
    pub bandit_impressions: u64,
    /// Testing-period impressions on non-optimal arms; the post period is
    /// assumed to show only the optimal arm.
    pub baseline_impressions: u64,
    /// 1 - bandit / baseline.
    pub decrease: f64,
}

/// Decrease in impressions on non-optimal arms, bandit versus best-case baseline.
pub fn suboptimal_impressions(
    bandit: &[ArticleResult],
    baseline: &[BaselineResult],
    specs: &[ArticleSpec],
) -> Result<SuboptimalReport> {
    if bandit.len() != baseline.len() {
        return Err(Error::input(format!(
            "corpus mismatch: {} bandit results vs {} baseline results",
            bandit.len(),
            baseline.len()
        )));
    }
    let index = index_specs(specs);
    let mut bandit_impressions = 0u64;
    let mut baseline_impressions = 0u64;
    for (b, base) in bandit.iter().zip(baseline) {
        if b.article_id != base.article_id {
            return Err(Error::input(format!(
                "corpus mismatch: article `{}` paired with `{}`",
                b.article_id, base.article_id
            )));
        }
        let optimal = spec_for(&index, &b.article_id)?.optimal_arm();
        bandit_impressions += b.total_impressions() - b.impressions[optimal];
        baseline_impressions += base.testing_total - base.testing_impressions[optimal];
    }
    if baseline_impressions == 0 {
        return Err(Error::UndefinedRatio(
            "baseline shows no sub-optimal impressions".into(),
        ));
    }
    Ok(SuboptimalReport {
        bandit_impressions,
        baseline_impressions,
        decrease: 1.0 - bandit_impressions as f64 / baseline_impressions as f64,
    })
}
