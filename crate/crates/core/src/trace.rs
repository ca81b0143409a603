//! Minute-level impression traces and the per-article simulation input.

use serde::{Deserialize, Serialize};

use crate::bandit::argmax;
use crate::error::{Error, Result};

/// Impressions per minute since publish, sparse and strictly increasing in minute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u32, u64)>", into = "Vec<(u32, u64)>")]
pub struct ImpressionTrace {
    entries: Vec<(u32, u64)>,
}

impl ImpressionTrace {
    pub fn new(entries: Vec<(u32, u64)>) -> Result<Self> {
        for (i, pair) in entries.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::input(format!(
                    "trace[{}]: minute {} does not follow minute {}",
                    i + 1,
                    pair[1].0,
                    pair[0].0
                )));
            }
        }
        if entries.iter().all(|&(_, n)| n == 0) {
            return Err(Error::input("trace has no impressions"));
        }
        Ok(ImpressionTrace { entries })
    }

    /// Dense trace: `counts[m]` impressions at minute `m`. Zero minutes are dropped.
    pub fn from_dense(counts: &[u64]) -> Result<Self> {
        let entries = counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(m, &n)| (m as u32, n))
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(u32, u64)] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, n)| n).sum()
    }

    /// Impressions at minutes in `[start, end)`.
    pub fn impressions_between(&self, start: u32, end: u32) -> u64 {
        self.entries
            .iter()
            .filter(|&&(m, _)| m >= start && m < end)
            .map(|&(_, n)| n)
            .sum()
    }

    /// Smallest minute by which 95% of all impressions have arrived.
    pub fn active_lifespan(&self) -> u32 {
        let total = u128::from(self.total());
        let mut cumulative = 0u128;
        for &(minute, n) in &self.entries {
            cumulative += u128::from(n);
            if cumulative * 100 >= total * 95 {
                return minute;
            }
        }
        // A validated trace always reaches 100% at its last entry.
        self.entries.last().map_or(0, |&(m, _)| m)
    }
}

impl TryFrom<Vec<(u32, u64)>> for ImpressionTrace {
    type Error = Error;

    fn try_from(entries: Vec<(u32, u64)>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<ImpressionTrace> for Vec<(u32, u64)> {
    fn from(trace: ImpressionTrace) -> Self {
        trace.entries
    }
}

/// Time for an article to accumulate 95% of its total impressions.
pub fn active_lifespan(trace: &ImpressionTrace) -> u32 {
    trace.active_lifespan()
}

/// One article: K headline variants with their click probabilities, plus traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleSpec {
    pub article_id: String,
    pub theta_hat: Vec<f64>,
    pub trace: ImpressionTrace,
}

impl ArticleSpec {
    pub fn new(
        article_id: impl Into<String>,
        theta_hat: Vec<f64>,
        trace: ImpressionTrace,
    ) -> Result<Self> {
        let spec = ArticleSpec {
            article_id: article_id.into(),
            theta_hat,
            trace,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_hat.len() < 2 {
            return Err(Error::input(format!(
                "article {}: theta_hat needs at least 2 arms, got {}",
                self.article_id,
                self.theta_hat.len()
            )));
        }
        if let Some((i, t)) = self
            .theta_hat
            .iter()
            .enumerate()
            .find(|(_, t)| !(0.0..=1.0).contains(*t))
        {
            return Err(Error::input(format!(
                "article {}: theta_hat[{i}] = {t} is outside [0, 1]",
                self.article_id
            )));
        }
        Ok(())
    }

    pub fn arm_count(&self) -> usize {
        self.theta_hat.len()
    }

    /// Arm with the highest click probability, lowest index on ties.
    pub fn optimal_arm(&self) -> usize {
        argmax(&self.theta_hat).unwrap_or(0)
    }

    /// Arm with the lowest click probability, highest index on ties.
    pub fn worst_arm(&self) -> usize {
        let mut worst = self.theta_hat.len() - 1;
        for (i, &t) in self.theta_hat.iter().enumerate().rev() {
            if t < self.theta_hat[worst] {
                worst = i;
            }
        }
        worst
    }
}
