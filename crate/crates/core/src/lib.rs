//! Batched Thompson Sampling for headline testing.
//!
//! The crate has three layers:
//!
//! - [`bandit`]: Beta-Bernoulli posteriors, per-event arm selection and the
//!   summation / normalization batch updates.
//! - [`sim`], [`baseline`], [`synthetic`], [`corpus`]: replay of minute-level
//!   impression traces through the bandit or through a test-rollout baseline.
//! - [`eval`] and [`experiment`]: convergence, speed, self-correction, click
//!   gain and sweep metrics, and the orchestration behind the `bts` binary.

pub mod bandit;
pub mod baseline;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod sim;
pub mod synthetic;
pub mod trace;

pub use bandit::{
    init_arms, normalization_update, posterior_mean, record_response, sample_arm,
    summation_update, ArmPosterior, BanditState, BatchCounters, ThompsonSampler, UpdateMethod,
};
pub use baseline::{run_test_rollout, BaselineResult};
pub use error::{Error, Result};
pub use sim::{build_batches, run_article, simulate_response, ArticleResult, Batch, SimConfig};
pub use synthetic::{generate_synthetic_corpus, CorpusParams};
pub use trace::{active_lifespan, ArticleSpec, ImpressionTrace};
pub use experiment::{build_report, run_experiment, CorpusSource, ExperimentConfig, Manifest, Mode, Report};
