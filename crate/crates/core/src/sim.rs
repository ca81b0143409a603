//! Trace-driven replay of batched Thompson Sampling for one article.
//!
//! Minute-level impressions are grouped into fixed update intervals. Every
//! impression in a batch is one event: an arm is drawn from the frozen
//! posteriors, a click is drawn from that arm's estimated CTR, and the outcome
//! is tallied. The posteriors only move at the batch boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::{ArmPosterior, BanditState, BatchCounters, UpdateMethod};
use crate::error::{Error, Result};
use crate::trace::{ArticleSpec, ImpressionTrace};

/// Minutes in the default 48-hour run.
pub const DEFAULT_HORIZON: u32 = 48 * 60;
pub const DEFAULT_INTERVAL: u32 = 5;
/// Length of the test-rollout testing period, also the "first hour" split.
pub const DEFAULT_TESTING_PERIOD: u32 = 60;

/// The RNG used for every simulation stream.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Minutes between posterior updates.
    pub update_interval: u32,
    /// Minutes after publish at which the run stops.
    pub horizon: u32,
    pub update_method: UpdateMethod,
    pub master_seed: u64,
    /// Minutes of equal-split testing for the baseline; also where click gain
    /// is split into first-hour and remaining-hours.
    pub testing_period: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            update_interval: DEFAULT_INTERVAL,
            horizon: DEFAULT_HORIZON,
            update_method: UpdateMethod::Summation,
            master_seed: 0,
            testing_period: DEFAULT_TESTING_PERIOD,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.update_interval < 1 {
            return Err(Error::config("update_interval must be at least 1 minute"));
        }
        if self.horizon < self.update_interval {
            return Err(Error::config(format!(
                "horizon ({} min) is shorter than update_interval ({} min)",
                self.horizon, self.update_interval
            )));
        }
        // A testing period past the horizon just means no post period.
        if self.testing_period < 1 {
            return Err(Error::config("testing_period must be at least 1 minute"));
        }
        Ok(())
    }

    pub fn with_interval(&self, update_interval: u32) -> Self {
        SimConfig {
            update_interval,
            ..self.clone()
        }
    }

    pub fn with_method(&self, update_method: UpdateMethod) -> Self {
        SimConfig {
            update_method,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        SimConfig {
            master_seed,
            ..self.clone()
        }
    }

    pub fn batch_count(&self) -> u32 {
        self.horizon.div_ceil(self.update_interval)
    }
}

/// Independent randomness for each use of an article within one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Bandit,
    Baseline,
    Stress,
}

impl Stream {
    fn tag(self) -> &'static [u8] {
        match self {
            Stream::Bandit => b"bandit",
            Stream::Baseline => b"baseline",
            Stream::Stress => b"stress",
        }
    }
}

/// Seed for an article's stream, a pure function of (master seed, article id, stream).
pub fn article_seed(master_seed: u64, article_id: &str, stream: Stream) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(stream.tag());
    hasher.update([0u8]);
    hasher.update(article_id.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn article_rng(master_seed: u64, article_id: &str, stream: Stream) -> SimRng {
    SimRng::seed_from_u64(article_seed(master_seed, article_id, stream))
}

/// One update interval: minutes `[start_minute, end_minute)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    /// 1-based.
    pub index: u32,
    pub size: u64,
    pub start_minute: u32,
    pub end_minute: u32,
}

/// Partition `[0, horizon)` into update intervals and count each one's impressions.
/// The final batch is cut short at the horizon; later impressions are dropped.
pub fn build_batches(trace: &ImpressionTrace, config: &SimConfig) -> Vec<Batch> {
    let interval = config.update_interval.max(1);
    let mut batches: Vec<Batch> = (0..config.horizon.div_ceil(interval))
        .map(|i| Batch {
            index: i + 1,
            size: 0,
            start_minute: i * interval,
            end_minute: ((i + 1) * interval).min(config.horizon),
        })
        .collect();
    for &(minute, n) in trace.entries() {
        if minute >= config.horizon {
            break;
        }
        batches[(minute / interval) as usize].size += n;
    }
    batches
}

/// Bernoulli(theta) click.
pub fn simulate_response<R: Rng + ?Sized>(theta_hat: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < theta_hat
}

/// What happened in one batch, with the posteriors after its update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub index: u32,
    pub start_minute: u32,
    pub end_minute: u32,
    pub size: u64,
    pub impressions: Vec<u64>,
    pub clicks: Vec<u64>,
    pub posterior: Vec<ArmPosterior>,
}

/// Full allocation and click history of one simulated article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleResult {
    pub article_id: String,
    pub update_interval: u32,
    pub testing_period: u32,
    pub batches: Vec<BatchRecord>,
    pub impressions: Vec<u64>,
    pub clicks: Vec<u64>,
    /// Per-arm tallies for minutes before `testing_period`.
    pub early_impressions: Vec<u64>,
    pub early_clicks: Vec<u64>,
    /// Trace impressions at or after the horizon, not simulated.
    pub post_horizon_impressions: u64,
}

impl ArticleResult {
    pub fn arm_count(&self) -> usize {
        self.impressions.len()
    }

    pub fn total_impressions(&self) -> u64 {
        self.impressions.iter().sum()
    }

    pub fn total_clicks(&self) -> u64 {
        self.clicks.iter().sum()
    }

    pub fn early_click_total(&self) -> u64 {
        self.early_clicks.iter().sum()
    }

    /// Impression conservation and click bounds against the source article.
    pub fn check_invariants(&self, article: &ArticleSpec, config: &SimConfig) -> Result<()> {
        let fail = |what: String| Err(Error::input(format!("{}: {what}", self.article_id)));
        let k = article.arm_count();
        let mut impressions = vec![0u64; k];
        let mut clicks = vec![0u64; k];
        for b in &self.batches {
            if b.impressions.iter().sum::<u64>() != b.size {
                return fail(format!("batch {} allocation does not sum to its size", b.index));
            }
            for arm in 0..k {
                if b.clicks[arm] > b.impressions[arm] {
                    return fail(format!("batch {} arm {arm} has more clicks than impressions", b.index));
                }
                impressions[arm] += b.impressions[arm];
                clicks[arm] += b.clicks[arm];
            }
        }
        if impressions != self.impressions || clicks != self.clicks {
            return fail("totals differ from the per-batch sums".into());
        }
        let in_horizon = article.trace.impressions_between(0, config.horizon);
        if self.total_impressions() != in_horizon {
            return fail(format!(
                "simulated {} impressions but the trace holds {in_horizon} within the horizon",
                self.total_impressions()
            ));
        }
        if self.total_impressions() + self.post_horizon_impressions != article.trace.total() {
            return fail("post-horizon traffic does not account for the remainder".into());
        }
        if (0..k).any(|arm| self.early_clicks[arm] > self.early_impressions[arm]
            || self.early_impressions[arm] > self.impressions[arm])
        {
            return fail("first-hour tallies exceed totals".into());
        }
        Ok(())
    }
}

/// Run batched Thompson Sampling from the Beta(1,1) prior.
pub fn run_article<R: Rng + ?Sized>(
    article: &ArticleSpec,
    config: &SimConfig,
    rng: &mut R,
) -> Result<ArticleResult> {
    let state = BanditState::new(article.arm_count())?;
    run_article_from(article, config, state, rng)
}

/// Run batched Thompson Sampling from an arbitrary starting posterior.
pub fn run_article_from<R: Rng + ?Sized>(
    article: &ArticleSpec,
    config: &SimConfig,
    mut state: BanditState,
    rng: &mut R,
) -> Result<ArticleResult> {
    config.validate()?;
    article.validate()?;
    let k = article.arm_count();
    if state.arm_count() != k {
        return Err(Error::input(format!(
            "article {} has {k} arms but the starting state has {}",
            article.article_id,
            state.arm_count()
        )));
    }

    let batches = build_batches(&article.trace, config);
    let entries = article.trace.entries();
    let mut cursor = 0usize;
    let mut counters = BatchCounters::new(k);
    let mut early = BatchCounters::new(k);
    let mut records = Vec::with_capacity(batches.len());
    let mut impressions = vec![0u64; k];
    let mut clicks = vec![0u64; k];

    for batch in &batches {
        counters.reset();
        if batch.size > 0 {
            let sampler = state.sampler();
            while cursor < entries.len() && entries[cursor].0 < batch.end_minute {
                let (minute, count) = entries[cursor];
                let is_early = minute < config.testing_period;
                for _ in 0..count {
                    let arm = sampler.sample_arm(rng);
                    let reward = simulate_response(article.theta_hat[arm], rng);
                    counters.record(arm, reward)?;
                    if is_early {
                        early.record(arm, reward)?;
                    }
                }
                cursor += 1;
            }
            debug_assert_eq!(counters.total(), batch.size);
            state.apply(config.update_method, &counters)?;
        } else {
            while cursor < entries.len() && entries[cursor].0 < batch.end_minute {
                cursor += 1;
            }
        }

        let batch_impressions: Vec<u64> = (0..k).map(|arm| counters.impressions(arm)).collect();
        for arm in 0..k {
            impressions[arm] += batch_impressions[arm];
            clicks[arm] += counters.successes[arm];
        }
        records.push(BatchRecord {
            index: batch.index,
            start_minute: batch.start_minute,
            end_minute: batch.end_minute,
            size: batch.size,
            impressions: batch_impressions,
            clicks: counters.successes.clone(),
            posterior: state.arms().to_vec(),
        });
    }

    let post_horizon_impressions = entries[cursor..].iter().map(|&(_, n)| n).sum();
    let early_impressions = (0..k).map(|arm| early.impressions(arm)).collect();

    Ok(ArticleResult {
        article_id: article.article_id.clone(),
        update_interval: config.update_interval,
        testing_period: config.testing_period,
        batches: records,
        impressions,
        clicks,
        early_impressions,
        early_clicks: early.successes,
        post_horizon_impressions,
    })
}

/// Simulate every article on its own derived stream. Output is sorted by
/// article id and independent of thread scheduling.
pub fn run_corpus(corpus: &[ArticleSpec], config: &SimConfig) -> Result<Vec<ArticleResult>> {
    config.validate()?;
    let mut results = corpus
        .par_iter()
        .map(|article| {
            let mut rng = article_rng(config.master_seed, &article.article_id, Stream::Bandit);
            run_article(article, config, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    Ok(results)
}

/// Corpus in the same order [`run_corpus`] reports results.
pub fn sorted_corpus(corpus: &[ArticleSpec]) -> Vec<ArticleSpec> {
    let mut sorted = corpus.to_vec();
    sorted.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    sorted
}
