//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use bts_core::synthetic::{CorpusParams, Span};
use bts_core::{ArmPosterior, ArticleSpec, ImpressionTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::beta::ln_beta;

/// P(X > Y) for independent X ~ Beta(a1, b1), Y ~ Beta(a2, b2) with integer
/// parameters, as a finite sum over the first shape of X.
pub fn p_greater(a1: u32, b1: u32, a2: u32, b2: u32) -> f64 {
    let (a1, b1, a2, b2) = (a1 as f64, b1 as f64, a2 as f64, b2 as f64);
    (0..a1 as u32)
        .map(|i| {
            let i = i as f64;
            (ln_beta(a2 + i, b1 + b2) - (b1 + i).ln() - ln_beta(1.0 + i, b1) - ln_beta(a2, b2)).exp()
        })
        .sum()
}

/// Classical Thompson Sampling, updated after every event. Returns the
/// posterior after each event. Draws follow the simulator's stream layout:
/// per arm a Gamma(alpha) then a Gamma(beta) variate, then one uniform for the
/// click.
pub fn per_event_reference(theta: &[f64], events: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<(f64, f64)>> {
    let mut post: Vec<(f64, f64)> = vec![(1.0, 1.0); theta.len()];
    let mut trajectory = Vec::with_capacity(events);
    for _ in 0..events {
        let mut best = 0;
        let mut best_draw = f64::NEG_INFINITY;
        for (k, &(a, b)) in post.iter().enumerate() {
            let x = Gamma::new(a, 1.0).unwrap().sample(rng);
            let y = Gamma::new(b, 1.0).unwrap().sample(rng);
            let draw = x / (x + y);
            if draw > best_draw {
                best = k;
                best_draw = draw;
            }
        }
        if rng.random::<f64>() < theta[best] {
            post[best].0 += 1.0;
        } else {
            post[best].1 += 1.0;
        }
        trajectory.push(post.clone());
    }
    trajectory
}

pub fn pairs(arms: &[ArmPosterior]) -> Vec<(f64, f64)> {
    arms.iter().map(|a| (a.alpha, a.beta)).collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flat trace: `per_minute` impressions every minute for `minutes` minutes.
pub fn flat_article(id: &str, theta: Vec<f64>, per_minute: u64, minutes: usize) -> ArticleSpec {
    let trace = ImpressionTrace::from_dense(&vec![per_minute; minutes]).unwrap();
    ArticleSpec::new(id, theta, trace).unwrap()
}

/// 3-arm corpus with at least 20% relative gap to the best arm and enough
/// traffic that every article sees 100k impressions inside 48 hours.
pub fn convergence_params() -> CorpusParams {
    CorpusParams {
        articles: 200,
        arms: Span::fixed(3),
        gap: Span::new(0.2, 0.5),
        impressions: Span::new(125_000, 300_000),
        ..CorpusParams::default()
    }
}

/// Smaller corpus for repeated sweeps.
pub fn sweep_params() -> CorpusParams {
    CorpusParams {
        articles: 40,
        impressions: Span::new(10_000, 40_000),
        ..CorpusParams::default()
    }
}
