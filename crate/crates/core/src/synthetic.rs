//! Synthetic corpus generator.
//!
//! Each article gets K arms whose CTRs sit a relative gap below the best arm,
//! and a minute-level impression trace drawn from a two-component exponential
//! decay: a fast burst right after publish plus a slow tail. The mixture weight
//! is solved per article so that the expected share of traffic in the first
//! hour equals `first_hour_share`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SimRng;
use crate::trace::{ArticleSpec, ImpressionTrace};

/// Inclusive range; `lo == hi` pins the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Copy> Span<T> {
    pub const fn new(lo: T, hi: T) -> Self {
        Span { lo, hi }
    }

    pub const fn fixed(v: T) -> Self {
        Span { lo: v, hi: v }
    }
}

impl<T: fmt::Display + PartialEq> fmt::Display for Span<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}..{}", self.lo, self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub articles: usize,
    pub arms: Span<usize>,
    /// CTR of the best arm.
    pub ctr: Span<f64>,
    /// Relative shortfall of every other arm below the best: theta = best * (1 - gap).
    pub gap: Span<f64>,
    /// Expected impressions over the whole trace, drawn log-uniformly.
    pub impressions: Span<u64>,
    pub first_hour_share: f64,
    /// Time constant of the publish burst, minutes.
    pub burst_minutes: f64,
    /// Time constant of the long tail, minutes.
    pub tail_minutes: Span<f64>,
    /// Trace length; traffic past the simulation horizon is kept in the trace.
    pub trace_minutes: u32,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            articles: 200,
            arms: Span::new(2, 4),
            ctr: Span::new(0.02, 0.08),
            gap: Span::new(0.2, 0.5),
            impressions: Span::new(100_000, 300_000),
            first_hour_share: 0.24,
            burst_minutes: 30.0,
            tail_minutes: Span::new(360.0, 1440.0),
            trace_minutes: 72 * 60,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if self.articles == 0 {
            return bad("articles must be at least 1".into());
        }
        if self.arms.lo < 2 || self.arms.lo > self.arms.hi {
            return bad(format!("arms {} must be an ordered range with at least 2 arms", self.arms));
        }
        if !(0.0..=1.0).contains(&self.ctr.lo) || !(0.0..=1.0).contains(&self.ctr.hi) || self.ctr.lo > self.ctr.hi {
            return bad(format!("ctr {} must be an ordered range inside [0, 1]", self.ctr));
        }
        if !(0.0..=1.0).contains(&self.gap.lo) || !(0.0..=1.0).contains(&self.gap.hi) || self.gap.lo > self.gap.hi {
            return bad(format!("gap {} must be an ordered range inside [0, 1]", self.gap));
        }
        if self.impressions.lo < 1 || self.impressions.lo > self.impressions.hi {
            return bad(format!("impressions {} must be an ordered positive range", self.impressions));
        }
        if self.trace_minutes <= 60 {
            return bad(format!("trace_minutes {} must exceed one hour", self.trace_minutes));
        }
        let positive = self.burst_minutes > 0.0 && self.tail_minutes.lo > 0.0;
        if !positive || self.tail_minutes.lo > self.tail_minutes.hi {
            return bad("decay time constants must be positive ordered values".into());
        }
        if !(self.first_hour_share > 0.0 && self.first_hour_share < 1.0) {
            return bad(format!("first_hour_share {} must lie in (0, 1)", self.first_hour_share));
        }
        for tail in [self.tail_minutes.lo, self.tail_minutes.hi] {
            if self.burst_weight(tail).is_none() {
                return bad(format!(
                    "first_hour_share {} is unreachable with burst {} min and tail {} min",
                    self.first_hour_share, self.burst_minutes, tail
                ));
            }
        }
        Ok(())
    }

    fn first_hour_mass(&self, time_constant: f64) -> f64 {
        let window = self.trace_minutes as f64;
        (1.0 - (-60.0 / time_constant).exp()) / (1.0 - (-window / time_constant).exp())
    }

    /// Mixture weight on the burst component hitting the first-hour target.
    fn burst_weight(&self, tail_minutes: f64) -> Option<f64> {
        let burst = self.first_hour_mass(self.burst_minutes);
        let tail = self.first_hour_mass(tail_minutes);
        if burst <= tail {
            return None;
        }
        let w = (self.first_hour_share - tail) / (burst - tail);
        (0.0..=1.0).contains(&w).then_some(w)
    }

    /// Expected share of trace mass in minute `m` for one decay component.
    fn minute_mass(&self, time_constant: f64, minute: u32) -> f64 {
        let window = self.trace_minutes as f64;
        let m = minute as f64;
        ((-m / time_constant).exp() - (-(m + 1.0) / time_constant).exp())
            / (1.0 - (-window / time_constant).exp())
    }
}

impl fmt::Display for CorpusParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "articles={},arms={},ctr={},gap={},impressions={},first_hour_share={},burst={},tail={},minutes={}",
            self.articles,
            self.arms,
            self.ctr,
            self.gap,
            self.impressions,
            self.first_hour_share,
            self.burst_minutes,
            self.tail_minutes,
            self.trace_minutes
        )
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::config(format!("synthetic spec: `{key}` has unparsable value `{raw}`")))
}

fn parse_span<T: FromStr + Copy>(key: &str, raw: &str) -> Result<Span<T>> {
    match raw.split_once("..") {
        Some((lo, hi)) => Ok(Span::new(parse_value(key, lo)?, parse_value(key, hi)?)),
        None => Ok(Span::fixed(parse_value(key, raw)?)),
    }
}

/// `key=value` pairs separated by commas; ranges are written `lo..hi`.
/// Unlisted keys keep their defaults.
impl FromStr for CorpusParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut params = CorpusParams::default();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::config(format!("synthetic spec: expected key=value, got `{item}`")))?;
            let key = key.trim();
            match key {
                "articles" => params.articles = parse_value(key, value)?,
                "arms" => params.arms = parse_span(key, value)?,
                "ctr" => params.ctr = parse_span(key, value)?,
                "gap" => params.gap = parse_span(key, value)?,
                "impressions" => params.impressions = parse_span(key, value)?,
                "first_hour_share" => params.first_hour_share = parse_value(key, value)?,
                "burst" => params.burst_minutes = parse_value(key, value)?,
                "tail" => params.tail_minutes = parse_span(key, value)?,
                "minutes" => params.trace_minutes = parse_value(key, value)?,
                other => return Err(Error::config(format!("synthetic spec: unknown key `{other}`"))),
            }
        }
        params.validate()?;
        Ok(params)
    }
}

/// Deterministic corpus for `(params, seed)`.
pub fn generate_synthetic_corpus(params: &CorpusParams, seed: u64) -> Result<Vec<ArticleSpec>> {
    params.validate()?;
    let mut rng = SimRng::seed_from_u64(seed);
    (0..params.articles)
        .map(|i| generate_article(params, format!("syn-{i:05}"), &mut rng))
        .collect()
}

fn uniform<R: Rng>(rng: &mut R, span: Span<f64>) -> f64 {
    if span.lo == span.hi {
        span.lo
    } else {
        rng.random_range(span.lo..=span.hi)
    }
}

fn generate_article<R: Rng>(params: &CorpusParams, article_id: String, rng: &mut R) -> Result<ArticleSpec> {
    let arms = rng.random_range(params.arms.lo..=params.arms.hi);
    let best = uniform(rng, params.ctr);
    let mut theta_hat = vec![best];
    theta_hat.extend((1..arms).map(|_| best * (1.0 - uniform(rng, params.gap))));
    theta_hat.shuffle(rng);

    let total = if params.impressions.lo == params.impressions.hi {
        params.impressions.lo as f64
    } else {
        let (lo, hi) = ((params.impressions.lo as f64).ln(), (params.impressions.hi as f64).ln());
        rng.random_range(lo..=hi).exp()
    };
    let tail = uniform(rng, params.tail_minutes);
    let weight = params
        .burst_weight(tail)
        .ok_or_else(|| Error::config("first_hour_share unreachable for drawn tail"))?;

    let mut counts: Vec<u64> = (0..params.trace_minutes)
        .map(|m| {
            let mass = weight * params.minute_mass(params.burst_minutes, m)
                + (1.0 - weight) * params.minute_mass(tail, m);
            let lambda = total * mass;
            if lambda > 0.0 {
                Poisson::new(lambda).map_or(0, |p| p.sample(rng) as u64)
            } else {
                0
            }
        })
        .collect();
    if counts.iter().all(|&n| n == 0) {
        counts[0] = 1;
    }
    ArticleSpec::new(article_id, theta_hat, ImpressionTrace::from_dense(&counts)?)
}
