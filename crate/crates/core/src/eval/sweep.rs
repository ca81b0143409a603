//! Update-method and update-interval sweeps over a corpus.
//!
//! Every cell is simulated on the same per-article streams for a given seed,
//! so cells are paired seed by seed.

use serde::{Deserialize, Serialize};

use crate::bandit::UpdateMethod;
use crate::error::{Error, Result};
use crate::sim::{run_corpus, SimConfig};
use crate::trace::ArticleSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub method: UpdateMethod,
    pub interval: u32,
    /// Corpus click total for each seed, in `SweepReport::seeds` order.
    pub seed_clicks: Vec<u64>,
    pub total_clicks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDelta {
    pub method: UpdateMethod,
    pub interval: u32,
    pub reference_method: UpdateMethod,
    pub reference_interval: u32,
    /// 100 * (cell - reference) / reference.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seeds: Vec<u64>,
    pub cells: Vec<SweepCell>,
    pub deltas: Vec<SweepDelta>,
}

impl SweepReport {
    pub fn cell(&self, method: UpdateMethod, interval: u32) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.interval == interval)
    }

    pub fn delta(&self, method: UpdateMethod, interval: u32) -> Option<&SweepDelta> {
        self.deltas
            .iter()
            .find(|d| d.method == method && d.interval == interval)
    }
}

fn percent(value: u64, reference: u64) -> f64 {
    if reference == 0 {
        if value == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (value as f64 - reference as f64) / reference as f64
    }
}

/// Corpus click totals for one (method, interval) cell across seeds.
pub fn simulate_cell(
    corpus: &[ArticleSpec],
    config: &SimConfig,
    method: UpdateMethod,
    interval: u32,
    seeds: &[u64],
) -> Result<SweepCell> {
    let cell_config = config.with_method(method).with_interval(interval);
    let seed_clicks = seeds
        .iter()
        .map(|&seed| {
            let results = run_corpus(corpus, &cell_config.with_seed(seed))?;
            Ok(results.iter().map(|r| r.total_clicks()).sum())
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(SweepCell {
        method,
        interval,
        total_clicks: seed_clicks.iter().sum(),
        seed_clicks,
    })
}

fn check_grid(corpus: &[ArticleSpec], intervals: &[u32], seeds: &[u64]) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::input("sweep needs a non-empty corpus"));
    }
    if intervals.is_empty() || intervals.contains(&0) {
        return Err(Error::config("sweep intervals must be a non-empty list of positive minutes"));
    }
    if seeds.is_empty() {
        return Err(Error::config("sweep needs at least one seed"));
    }
    Ok(())
}

/// Summation versus normalization at each interval. Deltas are summation
/// relative to normalization at the same interval.
pub fn compare_update_methods(
    corpus: &[ArticleSpec],
    intervals: &[u32],
    config: &SimConfig,
    seeds: &[u64],
) -> Result<SweepReport> {
    check_grid(corpus, intervals, seeds)?;
    let mut cells = Vec::new();
    let mut deltas = Vec::new();
    for &interval in intervals {
        let sum = simulate_cell(corpus, config, UpdateMethod::Summation, interval, seeds)?;
        let norm = simulate_cell(corpus, config, UpdateMethod::Normalization, interval, seeds)?;
        deltas.push(SweepDelta {
            method: UpdateMethod::Summation,
            interval,
            reference_method: UpdateMethod::Normalization,
            reference_interval: interval,
            percent: percent(sum.total_clicks, norm.total_clicks),
        });
        cells.push(sum);
        cells.push(norm);
    }
    Ok(SweepReport {
        seeds: seeds.to_vec(),
        cells,
        deltas,
    })
}

/// Summation update at each interval, with gaps measured from the best cell.
/// Intervals must be strictly ascending.
pub fn compare_frequencies(
    corpus: &[ArticleSpec],
    intervals: &[u32],
    config: &SimConfig,
    seeds: &[u64],
) -> Result<SweepReport> {
    check_grid(corpus, intervals, seeds)?;
    if intervals.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(format!(
            "sweep intervals must be strictly ascending, got {intervals:?}"
        )));
    }
    let cells = intervals
        .iter()
        .map(|&interval| simulate_cell(corpus, config, UpdateMethod::Summation, interval, seeds))
        .collect::<Result<Vec<_>>>()?;
    Ok(frequency_report(seeds, cells))
}

pub(crate) fn frequency_report(seeds: &[u64], cells: Vec<SweepCell>) -> SweepReport {
    // First maximum wins, i.e. the shortest interval on ties.
    let best = cells
        .iter()
        .fold(None::<&SweepCell>, |best, c| match best {
            Some(b) if b.total_clicks >= c.total_clicks => Some(b),
            _ => Some(c),
        })
        .expect("grid is non-empty");
    let deltas = cells
        .iter()
        .map(|c| SweepDelta {
            method: c.method,
            interval: c.interval,
            reference_method: best.method,
            reference_interval: best.interval,
            percent: percent(c.total_clicks, best.total_clicks),
        })
        .collect();
    SweepReport {
        seeds: seeds.to_vec(),
        cells,
        deltas,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::ImpressionTrace;

    fn cell(interval: u32, total: u64) -> SweepCell {
        SweepCell {
            method: UpdateMethod::Summation,
            interval,
            seed_clicks: vec![total],
            total_clicks: total,
        }
    }

    #[test]
    fn single_interval_has_zero_gap() {
        let report = frequency_report(&[1], vec![cell(5, 1234)]);
        assert_eq!(report.deltas.len(), 1);
        assert_eq!(report.deltas[0].percent, 0.0);
        assert_eq!(report.deltas[0].reference_interval, 5);
    }

    #[test]
    fn gaps_are_measured_from_best_cell() {
        let report = frequency_report(&[1], vec![cell(1, 1000), cell(5, 1000), cell(60, 950)]);
        let gaps: Vec<f64> = report.deltas.iter().map(|d| d.percent).collect();
        assert_eq!(gaps, vec![0.0, 0.0, -5.0]);
        assert!(report.deltas.iter().all(|d| d.reference_interval == 1));
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let trace = ImpressionTrace::new(vec![(0, 10)]).unwrap();
        let corpus = vec![ArticleSpec::new("a", vec![0.1, 0.2], trace).unwrap()];
        let cfg = SimConfig::default();
        assert!(compare_frequencies(&corpus, &[5, 1], &cfg, &[1]).is_err());
        assert!(compare_frequencies(&corpus, &[], &cfg, &[1]).is_err());
        assert!(compare_update_methods(&corpus, &[5], &cfg, &[]).is_err());
        assert!(compare_update_methods(&[], &[5], &cfg, &[1]).is_err());
    }

    #[test]
    fn method_grid_shape() {
        let trace = ImpressionTrace::from_dense(&[20; 120]).unwrap();
        let corpus = vec![ArticleSpec::new("a", vec![0.1, 0.2], trace).unwrap()];
        let cfg = SimConfig {
            horizon: 120,
            ..SimConfig::default()
        };
        let report = compare_update_methods(&corpus, &[1, 5, 60], &cfg, &[3, 4]).unwrap();
        assert_eq!(report.cells.len(), 6);
        assert_eq!(report.deltas.len(), 3);
        let c = report.cell(UpdateMethod::Normalization, 60).unwrap();
        assert_eq!(c.seed_clicks.len(), 2);
        assert_eq!(c.total_clicks, c.seed_clicks.iter().sum::<u64>());
    }
}
