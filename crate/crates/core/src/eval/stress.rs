//! Self-correction stress test: start the bandit from a prior that sends most
//! traffic to the worst arm and measure how long the optimal arm takes to lead
//! on posterior mean for several consecutive batches.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::bandit::{ArmPosterior, BanditState};
use crate::error::{Error, Result};
use crate::sim::{run_article_from, ArticleResult, SimConfig, SimRng};
use crate::trace::ArticleSpec;

/// Consecutive batches the optimal arm must lead to count as corrected.
pub const CORRECTION_STREAK: usize = 5;

/// Calibration draws per candidate strength.
const CALIBRATION_DRAWS: usize = 40_000;

/// Prior with the worst arm at Beta(1 + s, 1) and every other arm at
/// Beta(1, 1 + s); `s` is tuned so the worst arm wins `target_share` of draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialPrior {
    pub worst_arm: usize,
    pub strength: f64,
    pub arms: Vec<ArmPosterior>,
    /// Monte Carlo estimate of the worst arm's share of the first batch.
    pub worst_arm_share: f64,
}

impl AdversarialPrior {
    pub fn with_strength(arm_count: usize, worst_arm: usize, strength: f64) -> Result<Self> {
        if arm_count < 2 || worst_arm >= arm_count {
            return Err(Error::config(format!(
                "adversarial prior needs 2+ arms and a valid worst arm, got {arm_count} arms, worst {worst_arm}"
            )));
        }
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::config(format!("prior strength {strength} must be finite and non-negative")));
        }
        let arms = (0..arm_count)
            .map(|k| {
                if k == worst_arm {
                    ArmPosterior::new(1.0 + strength, 1.0)
                } else {
                    ArmPosterior::new(1.0, 1.0 + strength)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let worst_arm_share = expected_share(&arms, worst_arm, CALIBRATION_DRAWS, calibration_seed(arm_count))?;
        Ok(AdversarialPrior {
            worst_arm,
            strength,
            arms,
            worst_arm_share,
        })
    }

    /// Bisect the strength until the worst arm's expected share reaches
    /// `target_share`.
    pub fn calibrate(arm_count: usize, worst_arm: usize, target_share: f64) -> Result<Self> {
        let uniform = 1.0 / arm_count.max(1) as f64;
        if !(target_share > uniform && target_share < 1.0) {
            return Err(Error::config(format!(
                "target share {target_share} must lie in ({uniform}, 1)"
            )));
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while Self::with_strength(arm_count, worst_arm, hi)?.worst_arm_share < target_share {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::config(format!("target share {target_share} unreachable")));
            }
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if Self::with_strength(arm_count, worst_arm, mid)?.worst_arm_share < target_share {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::with_strength(arm_count, worst_arm, hi)
    }

    pub fn state(&self) -> Result<BanditState> {
        BanditState::from_arms(self.arms.clone())
    }
}

fn calibration_seed(arm_count: usize) -> u64 {
    0x5eed_0000 + arm_count as u64
}

/// Fraction of Thompson draws that select `arm` under `prior`.
pub fn expected_share(prior: &[ArmPosterior], arm: usize, draws: usize, seed: u64) -> Result<f64> {
    let state = BanditState::from_arms(prior.to_vec())?;
    state.arm(arm)?;
    let sampler = state.sampler();
    let mut rng = SimRng::seed_from_u64(seed);
    let hits = (0..draws).filter(|_| sampler.sample_arm(&mut rng) == arm).count();
    Ok(hits as f64 / draws.max(1) as f64)
}

/// Minute at which the optimal arm completes `streak` consecutive batches as
/// the strict leader on posterior mean (after each batch's update). An
/// article whose best CTR is shared has nothing to correct towards, so it
/// never corrects.
pub fn self_correction_time(result: &ArticleResult, spec: &ArticleSpec, streak: usize) -> Option<u32> {
    let optimal = crate::bandit::strict_argmax(&spec.theta_hat)?;
    let mut run = 0usize;
    for b in &result.batches {
        let means: Vec<f64> = b.posterior.iter().map(ArmPosterior::mean).collect();
        if crate::bandit::strict_argmax(&means) == Some(optimal) {
            run += 1;
            if run >= streak.max(1) {
                return Some(b.end_minute);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Run one article from `prior` and report its self-correction time.
pub fn self_correction_experiment<R: Rng + ?Sized>(
    spec: &ArticleSpec,
    prior: &[ArmPosterior],
    config: &SimConfig,
    rng: &mut R,
) -> Result<Option<u32>> {
    let state = BanditState::from_arms(prior.to_vec())?;
    let result = run_article_from(spec, config, state, rng)?;
    Ok(self_correction_time(&result, spec, CORRECTION_STREAK))
}
