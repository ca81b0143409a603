//! Beta-Bernoulli arm posteriors, per-event Thompson selection and the two
//! batch update rules.
//!
//! Posteriors are frozen for the duration of a batch. Events inside the batch
//! are only tallied in [`BatchCounters`]; the posterior moves once, at the
//! batch boundary, through [`summation_update`] or [`normalization_update`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Beta(alpha, beta) belief over one arm's click probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl ArmPosterior {
    /// The Beta(1,1) prior.
    pub const UNIFORM: ArmPosterior = ArmPosterior {
        alpha: 1.0,
        beta: 1.0,
    };

    /// Parameters must be finite and at least 1.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) || alpha < 1.0 || beta < 1.0 {
            return Err(Error::input(format!(
                "posterior parameters must be finite and >= 1, got Beta({alpha}, {beta})"
            )));
        }
        Ok(ArmPosterior { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

impl Default for ArmPosterior {
    fn default() -> Self {
        Self::UNIFORM
    }
}

/// Posterior mean alpha / (alpha + beta).
pub fn posterior_mean(arm: &ArmPosterior) -> f64 {
    arm.mean()
}

/// How a batch's tallies are folded into the posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMethod {
    /// Add raw click / non-click counts.
    Summation,
    /// Add M/K pseudo-counts per arm, split by the arm's in-batch CTR.
    Normalization,
}

impl UpdateMethod {
    pub const ALL: [UpdateMethod; 2] = [UpdateMethod::Summation, UpdateMethod::Normalization];

    pub fn as_str(&self) -> &'static str {
        match self {
            UpdateMethod::Summation => "summation",
            UpdateMethod::Normalization => "normalization",
        }
    }
}

impl fmt::Display for UpdateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UpdateMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sum" | "summation" => Ok(UpdateMethod::Summation),
            "norm" | "normalization" => Ok(UpdateMethod::Normalization),
            other => Err(Error::config(format!(
                "unknown update method `{other}` (expected sum|norm)"
            ))),
        }
    }
}

/// Posteriors for all K arms of one article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    arms: Vec<ArmPosterior>,
}

/// K arms, each at the Beta(1,1) prior. K must be at least 2.
pub fn init_arms(arm_count: usize) -> Result<BanditState> {
    BanditState::new(arm_count)
}

impl BanditState {
    pub fn new(arm_count: usize) -> Result<Self> {
        Self::from_arms(vec![ArmPosterior::UNIFORM; arm_count])
    }

    /// Start from arbitrary posteriors, e.g. an adversarial prior.
    pub fn from_arms(arms: Vec<ArmPosterior>) -> Result<Self> {
        if arms.len() < 2 {
            return Err(Error::config(format!(
                "a bandit needs at least 2 arms, got {}",
                arms.len()
            )));
        }
        for arm in &arms {
            ArmPosterior::new(arm.alpha, arm.beta)?;
        }
        Ok(BanditState { arms })
    }

    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    pub fn arms(&self) -> &[ArmPosterior] {
        &self.arms
    }

    pub fn arm(&self, index: usize) -> Result<&ArmPosterior> {
        self.arms.get(index).ok_or(Error::ArmOutOfRange {
            index,
            arm_count: self.arms.len(),
        })
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(ArmPosterior::mean).collect()
    }

    /// Index of the largest posterior mean; `None` unless strictly largest.
    pub fn leader(&self) -> Option<usize> {
        strict_argmax(&self.means())
    }

    /// Freeze the current posteriors into a sampler for one batch.
    pub fn sampler(&self) -> ThompsonSampler {
        ThompsonSampler::new(self)
    }

    /// Fold a finished batch into the posteriors using `method`.
    pub fn apply(&mut self, method: UpdateMethod, counters: &BatchCounters) -> Result<()> {
        match method {
            UpdateMethod::Summation => summation_update(self, counters),
            UpdateMethod::Normalization => normalization_update(self, counters, counters.total()),
        }
    }
}

/// Draws from Beta(alpha, beta) as X / (X + Y) with X ~ Gamma(alpha), Y ~ Gamma(beta).
#[derive(Debug, Clone, Copy)]
pub struct BetaSampler {
    success: Gamma<f64>,
    failure: Gamma<f64>,
}

impl BetaSampler {
    pub fn new(arm: &ArmPosterior) -> Self {
        // Parameters are validated >= 1 on construction of every ArmPosterior.
        BetaSampler {
            success: Gamma::new(arm.alpha, 1.0).expect("alpha validated"),
            failure: Gamma::new(arm.beta, 1.0).expect("beta validated"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = self.success.sample(rng);
        let y = self.failure.sample(rng);
        x / (x + y)
    }
}

/// Per-event arm selection against posteriors frozen at construction.
#[derive(Debug, Clone)]
pub struct ThompsonSampler {
    arms: Vec<BetaSampler>,
}

impl ThompsonSampler {
    pub fn new(state: &BanditState) -> Self {
        ThompsonSampler {
            arms: state.arms.iter().map(BetaSampler::new).collect(),
        }
    }

    /// One Beta draw per arm, in arm order; the largest draw wins and ties go
    /// to the lowest index.
    pub fn sample_arm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut best = 0;
        let mut best_draw = f64::NEG_INFINITY;
        for (index, arm) in self.arms.iter().enumerate() {
            let draw = arm.sample(rng);
            if draw > best_draw {
                best = index;
                best_draw = draw;
            }
        }
        best
    }
}

/// Select an arm for a single event. Prefer [`BanditState::sampler`] inside a
/// batch, which builds the Gamma samplers once.
pub fn sample_arm<R: Rng + ?Sized>(state: &BanditState, rng: &mut R) -> usize {
    state.sampler().sample_arm(rng)
}

/// Per-arm click (S) and non-click (F) tallies for the batch in progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCounters {
    pub successes: Vec<u64>,
    pub failures: Vec<u64>,
}

impl BatchCounters {
    pub fn new(arm_count: usize) -> Self {
        BatchCounters {
            successes: vec![0; arm_count],
            failures: vec![0; arm_count],
        }
    }

    pub fn arm_count(&self) -> usize {
        self.successes.len()
    }

    pub fn record(&mut self, arm: usize, reward: bool) -> Result<()> {
        let arm_count = self.arm_count();
        let slot = if reward {
            self.successes.get_mut(arm)
        } else {
            self.failures.get_mut(arm)
        };
        match slot {
            Some(count) => {
                *count += 1;
                Ok(())
            }
            None => Err(Error::ArmOutOfRange {
                index: arm,
                arm_count,
            }),
        }
    }

    pub fn impressions(&self, arm: usize) -> u64 {
        self.successes[arm] + self.failures[arm]
    }

    /// Events processed so far in this batch (M).
    pub fn total(&self) -> u64 {
        self.successes.iter().chain(&self.failures).sum()
    }

    pub fn reset(&mut self) {
        self.successes.iter_mut().for_each(|s| *s = 0);
        self.failures.iter_mut().for_each(|f| *f = 0);
    }

    fn check_dims(&self, state: &BanditState) -> Result<()> {
        if self.successes.len() != state.arm_count() || self.failures.len() != state.arm_count() {
            return Err(Error::input(format!(
                "counters sized {}/{} for a {}-arm bandit",
                self.successes.len(),
                self.failures.len(),
                state.arm_count()
            )));
        }
        Ok(())
    }
}

/// Tally one event's outcome.
pub fn record_response(counters: &mut BatchCounters, arm: usize, reward: bool) -> Result<()> {
    counters.record(arm, reward)
}

/// alpha += S, beta += F for every arm.
pub fn summation_update(state: &mut BanditState, counters: &BatchCounters) -> Result<()> {
    counters.check_dims(state)?;
    for (k, arm) in state.arms.iter_mut().enumerate() {
        arm.alpha += counters.successes[k] as f64;
        arm.beta += counters.failures[k] as f64;
    }
    Ok(())
}

/// Each arm that saw traffic gains M/K pseudo-counts split by its in-batch CTR.
///
/// The increment is 0/0 for an arm with no traffic in the batch; such arms are
/// left unchanged.
pub fn normalization_update(
    state: &mut BanditState,
    counters: &BatchCounters,
    batch_size: u64,
) -> Result<()> {
    counters.check_dims(state)?;
    if counters.total() != batch_size {
        return Err(Error::input(format!(
            "batch size {batch_size} does not match {} tallied events",
            counters.total()
        )));
    }
    let batch = batch_size as f64;
    let arm_count = state.arm_count() as f64;
    for (k, arm) in state.arms.iter_mut().enumerate() {
        let shown = counters.impressions(k);
        if shown == 0 {
            continue;
        }
        // (M/K) * S/(S+F), written as one division of integer-valued products.
        let denom = arm_count * shown as f64;
        arm.alpha += batch * counters.successes[k] as f64 / denom;
        arm.beta += batch * counters.failures[k] as f64 / denom;
    }
    Ok(())
}

/// Index of the strictly largest value, `None` on a tie for the top spot.
pub fn strict_argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    let mut tied = false;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if v > values[b] => {
                best = Some(i);
                tied = false;
            }
            Some(b) if v == values[b] => tied = true,
            _ => {}
        }
    }
    if tied {
        None
    } else {
        best
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}
