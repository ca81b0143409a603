//! Metrics over simulated corpora.

pub mod convergence;
pub mod gain;
pub mod histogram;
pub mod stats;
pub mod stress;
pub mod sweep;

pub use convergence::{
    convergence_verdict, convergence_verdicts, false_convergence_rate, time_to_optimize,
    time_to_optimize_until, ConvergenceVerdict, DEFAULT_STABLE_WINDOW,
};
pub use gain::{
    bootstrap_gain, click_gain, click_splits, suboptimal_impressions, ClickSplit, GainReport,
    Period, SuboptimalReport,
};
pub use histogram::Histogram;
pub use stress::{
    expected_share, self_correction_experiment, self_correction_time, AdversarialPrior,
    CORRECTION_STREAK,
};
pub use sweep::{compare_frequencies, compare_update_methods, SweepCell, SweepDelta, SweepReport};
