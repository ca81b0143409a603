//! Small statistics helpers used by the metrics and the acceptance suite.

use rand::{Rng, SeedableRng};

use crate::sim::SimRng;

/// Nearest-rank percentile of optional values; `None` sorts above every value.
///
/// Returns `Some(None)` when the percentile falls on an unachieved entry and
/// `None` for empty input.
pub fn percentile(values: &[Option<u32>], fraction: f64) -> Option<Option<u32>> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let rank = (fraction.clamp(0.0, 1.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.saturating_sub(1)])
}

/// Fraction of values achieved at or before `limit`.
pub fn fraction_within(values: &[Option<u32>], limit: u32) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| v.is_some_and(|m| m <= limit)).count() as f64 / values.len() as f64
}

/// One-sided exact sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
/// Ties are dropped by the caller.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    // log C(n, k) accumulated incrementally keeps this exact enough for n in the thousands.
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= wins {
            tail += (ln_choose + ln_half_n).exp();
        }
    }
    tail.min(1.0)
}

/// Count of (a > b) wins and (a < b) losses over paired samples.
pub fn paired_wins<T: PartialOrd>(a: &[T], b: &[T]) -> (usize, usize) {
    a.iter().zip(b).fold((0, 0), |(w, l), (x, y)| {
        if x > y {
            (w + 1, l)
        } else if x < y {
            (w, l + 1)
        } else {
            (w, l)
        }
    })
}

/// Percentile bootstrap interval for `statistic` over resampled index sets.
pub fn bootstrap_interval<F>(n: usize, resamples: usize, level: f64, seed: u64, statistic: F) -> Option<(f64, f64)>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    if n == 0 || resamples == 0 {
        return None;
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let mut indices = vec![0usize; n];
    let mut stats: Vec<f64> = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in indices.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        if let Some(s) = statistic(&indices) {
            stats.push(s);
        }
    }
    if stats.is_empty() {
        return None;
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| stats[((q * stats.len() as f64).floor() as usize).min(stats.len() - 1)];
    Some((at(tail), at(1.0 - tail)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<Option<u32>> = (1..=10).map(Some).collect();
        assert_eq!(percentile(&v, 0.8), Some(Some(8)));
        assert_eq!(percentile(&v, 1.0), Some(Some(10)));
        assert_eq!(percentile(&v, 0.0), Some(Some(1)));
        let v = vec![Some(5), None, Some(10), None, Some(1)];
        assert_eq!(percentile(&v, 0.6), Some(Some(10)));
        assert_eq!(percentile(&v, 0.8), Some(None));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn fraction_within_counts_unachieved_as_misses() {
        let v = vec![Some(10), Some(60), Some(61), None];
        assert_eq!(fraction_within(&v, 60), 0.5);
    }

    #[test]
    fn sign_test_matches_binomial_tail() {
        // P(X >= 15 | n = 20) = 21700 / 2^20
        assert!((sign_test(15, 5) - 21_700.0 / 1_048_576.0).abs() < 1e-12);
        assert!((sign_test(14, 6) - 60_460.0 / 1_048_576.0).abs() < 1e-12);
        assert_eq!(sign_test(0, 0), 1.0);
        assert!((sign_test(0, 7) - 1.0).abs() < 1e-12);
        assert!((sign_test(3, 0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn paired_wins_drop_ties() {
        assert_eq!(paired_wins(&[3, 2, 1, 5], &[1, 2, 4, 4]), (2, 1));
    }

    #[test]
    fn bootstrap_of_constant_is_degenerate() {
        let ci = bootstrap_interval(50, 200, 0.95, 1, |_| Some(2.5)).unwrap();
        assert_eq!(ci, (2.5, 2.5));
        let data: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (lo, hi) = bootstrap_interval(100, 2000, 0.95, 2, |idx| {
            Some(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64)
        })
        .unwrap();
        // mean 49.5, standard error ~2.9
        assert!(lo < 49.5 && hi > 49.5 && hi - lo < 15.0 && hi - lo > 7.0, "{lo} {hi}");
    }
}
