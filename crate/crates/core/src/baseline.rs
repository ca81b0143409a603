//! Test-rollout baseline: an exact equal split during the testing period, then
//! every remaining impression goes to the arm with the most testing clicks.
//! Both phases use the article's estimated CTRs.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::argmax;
use crate::error::{Error, Result};
use crate::sim::{article_rng, SimConfig, Stream};
use crate::trace::ArticleSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub article_id: String,
    /// Impressions each arm received during the testing period.
    pub testing_impressions: Vec<u64>,
    pub testing_clicks: Vec<u64>,
    pub winner: usize,
    pub post_clicks: u64,
    /// M^test: in-horizon impressions before `testing_period`.
    pub testing_total: u64,
    /// M^post: in-horizon impressions from `testing_period` to the horizon.
    pub post_total: u64,
    pub total_clicks: u64,
}

impl BaselineResult {
    pub fn testing_click_total(&self) -> u64 {
        self.testing_clicks.iter().sum()
    }

    /// Impressions per arm over the whole run.
    pub fn impressions(&self) -> Vec<u64> {
        let mut shown = self.testing_impressions.clone();
        shown[self.winner] += self.post_total;
        shown
    }

    pub fn check_invariants(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::input(format!("{}: {what}", self.article_id)));
        if self.total_clicks != self.testing_click_total() + self.post_clicks {
            return fail("total clicks differ from testing plus post clicks");
        }
        if argmax(&self.testing_clicks) != Some(self.winner) {
            return fail("winner is not the argmax of testing clicks");
        }
        if self.testing_impressions.iter().sum::<u64>() != self.testing_total {
            return fail("testing allocation does not sum to the testing traffic");
        }
        if self.post_clicks > self.post_total
            || self.testing_clicks.iter().zip(&self.testing_impressions).any(|(c, n)| c > n)
        {
            return fail("more clicks than impressions");
        }
        Ok(())
    }
}

/// Equal split of `total` over `arms`, remainder handed out from arm 0.
pub fn equal_split(total: u64, arms: usize) -> Vec<u64> {
    let k = arms as u64;
    (0..k).map(|i| total / k + u64::from(i < total % k)).collect()
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> Result<u64> {
    let dist = Binomial::new(n, p)
        .map_err(|e| Error::input(format!("binomial({n}, {p}): {e}")))?;
    Ok(dist.sample(rng))
}

pub fn run_test_rollout<R: Rng + ?Sized>(
    article: &ArticleSpec,
    config: &SimConfig,
    rng: &mut R,
) -> Result<BaselineResult> {
    config.validate()?;
    article.validate()?;
    let boundary = config.testing_period.min(config.horizon);
    let testing_total = article.trace.impressions_between(0, boundary);
    let post_total = article.trace.impressions_between(boundary, config.horizon);

    let testing_impressions = equal_split(testing_total, article.arm_count());
    let testing_clicks = testing_impressions
        .iter()
        .zip(&article.theta_hat)
        .map(|(&n, &p)| binomial(n, p, rng))
        .collect::<Result<Vec<_>>>()?;
    let winner = argmax(&testing_clicks).unwrap_or(0);
    let post_clicks = binomial(post_total, article.theta_hat[winner], rng)?;
    let total_clicks = testing_clicks.iter().sum::<u64>() + post_clicks;

    Ok(BaselineResult {
        article_id: article.article_id.clone(),
        testing_impressions,
        testing_clicks,
        winner,
        post_clicks,
        testing_total,
        post_total,
        total_clicks,
    })
}

/// Baseline for every article on its derived baseline stream, sorted by id.
pub fn run_baseline_corpus(corpus: &[ArticleSpec], config: &SimConfig) -> Result<Vec<BaselineResult>> {
    config.validate()?;
    let mut results = corpus
        .par_iter()
        .map(|article| {
            let mut rng = article_rng(config.master_seed, &article.article_id, Stream::Baseline);
            run_test_rollout(article, config, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimRng;
    use crate::trace::ImpressionTrace;
    use rand::SeedableRng;

    fn article(theta: Vec<f64>, test: u64, post: u64) -> ArticleSpec {
        ArticleSpec::new("b", theta, ImpressionTrace::new(vec![(0, test), (60, post)]).unwrap()).unwrap()
    }

    #[test]
    fn split_hands_remainder_round_robin() {
        assert_eq!(equal_split(10, 3), vec![4, 3, 3]);
        assert_eq!(equal_split(11, 3), vec![4, 4, 3]);
        assert_eq!(equal_split(9, 3), vec![3, 3, 3]);
        assert_eq!(equal_split(1, 4), vec![1, 0, 0, 0]);
    }

    #[test]
    fn zero_ctr_means_zero_clicks() {
        let a = article(vec![0.0, 0.0, 0.0], 900, 9000);
        let r = run_test_rollout(&a, &SimConfig::default(), &mut SimRng::seed_from_u64(1)).unwrap();
        assert_eq!(r.total_clicks, 0);
        r.check_invariants().unwrap();
    }

    #[test]
    fn degenerate_ctrs_force_outcome() {
        let a = article(vec![1.0, 0.0], 100, 900);
        let r = run_test_rollout(&a, &SimConfig::default(), &mut SimRng::seed_from_u64(2)).unwrap();
        assert_eq!(r.testing_clicks, vec![50, 0]);
        assert_eq!(r.winner, 0);
        assert_eq!(r.post_clicks, 900);
        assert_eq!(r.total_clicks, 950);
        assert_eq!(r.impressions(), vec![950, 50]);
        r.check_invariants().unwrap();
    }

    #[test]
    fn expected_clicks_match_binomial_means() {
        // E = 5000 * 0.06 + 5000 * 0.04 + 90000 * 0.06 (winner is arm 0 almost surely) = 5900.
        let a = article(vec![0.06, 0.04], 10_000, 90_000);
        let cfg = SimConfig::default();
        let mut rng = SimRng::seed_from_u64(3);
        let runs = 1000;
        let mut sum = 0u64;
        for _ in 0..runs {
            let r = run_test_rollout(&a, &cfg, &mut rng).unwrap();
            r.check_invariants().unwrap();
            sum += r.total_clicks;
        }
        let mean = sum as f64 / runs as f64;
        assert!((mean / 5900.0 - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn equal_ctrs_give_ctr_times_traffic() {
        let a = article(vec![0.05, 0.05, 0.05], 3_000, 27_000);
        let cfg = SimConfig::default();
        let mut rng = SimRng::seed_from_u64(4);
        let runs = 500;
        let mean = (0..runs)
            .map(|_| run_test_rollout(&a, &cfg, &mut rng).unwrap().total_clicks)
            .sum::<u64>() as f64
            / runs as f64;
        // sd of the mean: sqrt(30000 * 0.05 * 0.95 / 500) ~ 1.7
        assert!((mean - 1500.0).abs() < 8.0, "{mean}");
    }

    #[test]
    fn traffic_past_horizon_is_excluded() {
        let trace = ImpressionTrace::new(vec![(0, 100), (100, 200), (3000, 5000)]).unwrap();
        let a = ArticleSpec::new("h", vec![0.1, 0.2], trace).unwrap();
        let r = run_test_rollout(&a, &SimConfig::default(), &mut SimRng::seed_from_u64(5)).unwrap();
        assert_eq!((r.testing_total, r.post_total), (100, 200));
    }

    #[test]
    fn well_separated_arms_pick_the_best() {
        let a = article(vec![0.05, 0.03, 0.04], 30_000, 70_000);
        let cfg = SimConfig::default();
        let mut rng = SimRng::seed_from_u64(6);
        let correct = (0..300)
            .filter(|_| run_test_rollout(&a, &cfg, &mut rng).unwrap().winner == 0)
            .count();
        assert!(correct >= 290, "{correct}");
    }
}
