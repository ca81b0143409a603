//! Acceptance gate. One line per criterion:
//!
//! `criterion N PASS|FAIL <name>: <measurement> [<elapsed> / budget <budget>]`
//!
//! A criterion fails when its check fails or when it overruns its budget.
//! Exit status is nonzero if any criterion fails.

mod common;

use std::cell::Cell;
use std::time::{Duration, Instant};

use bts_core::bandit::{normalization_update, sample_arm, summation_update, BanditState, BatchCounters};
use bts_core::baseline::{run_baseline_corpus, BaselineResult};
use bts_core::eval::stats::{paired_wins, percentile, sign_test};
use bts_core::eval::sweep::simulate_cell;
use bts_core::eval::*;
use bts_core::experiment::{build_report, run_experiment, CorpusSource, ExperimentConfig, Mode, SweepGrid};
use bts_core::sim::{article_rng, build_batches, run_article, run_corpus, sorted_corpus, SimConfig, Stream};
use bts_core::synthetic::generate_synthetic_corpus;
use bts_core::{ArmPosterior, ArticleResult, ArticleSpec, ImpressionTrace, UpdateMethod};
use common::*;

const CORPUS_SEED: u64 = 20_240_601;
const SWEEP_INTERVALS: [u32; 6] = [1, 3, 5, 10, 30, 60];

thread_local! {
    static CHECKED_RUNS: Cell<usize> = const { Cell::new(0) };
}

/// Every simulated run in the suite passes through here.
fn checked(results: Vec<ArticleResult>, corpus: &[ArticleSpec], config: &SimConfig) -> Vec<ArticleResult> {
    for (r, a) in results.iter().zip(corpus) {
        assert_eq!(r.article_id, a.article_id);
        r.check_invariants(a, config).expect("bandit invariant");
    }
    CHECKED_RUNS.with(|c| c.set(c.get() + results.len()));
    results
}

fn checked_baseline(results: Vec<BaselineResult>) -> Vec<BaselineResult> {
    for r in &results {
        r.check_invariants().expect("baseline invariant");
    }
    CHECKED_RUNS.with(|c| c.set(c.get() + results.len()));
    results
}

struct Gate {
    failures: usize,
}

impl Gate {
    fn criterion(&mut self, id: u32, name: &str, budget: Duration, check: impl FnOnce() -> (bool, String)) {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let (ok, detail) = outcome.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        let in_budget = elapsed <= budget;
        let pass = ok && in_budget;
        if !pass {
            self.failures += 1;
        }
        println!(
            "criterion {id} {} {name}: {detail}{} [{:.2}s / budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            if in_budget { "" } else { " (over budget)" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
}

fn per_event_reduction() -> (bool, String) {
    let theta = vec![0.03, 0.06, 0.045];
    let events = 10_000;
    let article = flat_article("reduction", theta.clone(), 1, events);
    let config = SimConfig {
        update_interval: 1,
        horizon: events as u32,
        ..SimConfig::default()
    };
    let mut identical = 0;
    for seed in 0..10u64 {
        let batched = checked(vec![run_article(&article, &config, &mut seeded(seed)).unwrap()], std::slice::from_ref(&article), &config);
        let reference = per_event_reference(&theta, events, &mut seeded(seed));
        let same = batched[0].batches.len() == events
            && batched[0].batches.iter().zip(&reference).all(|(b, r)| b.size == 1 && pairs(&b.posterior) == *r);
        identical += same as usize;
    }
    (identical == 10, format!("{identical}/10 seeds bit-identical over {events} events"))
}

fn selection_oracle() -> (bool, String) {
    let draws = 100_000u32;
    let cases = [(2u32, 1u32, 1u32, 1u32), (100, 1, 1, 100), (3, 5, 4, 4), (10, 20, 12, 18), (5, 3, 2, 9)];
    let mut worst_z: f64 = 0.0;
    let mut ok = true;
    for (i, &(a1, b1, a2, b2)) in cases.iter().enumerate() {
        let state = BanditState::from_arms(vec![
            ArmPosterior::new(a1 as f64, b1 as f64).unwrap(),
            ArmPosterior::new(a2 as f64, b2 as f64).unwrap(),
        ])
        .unwrap();
        let mut rng = seeded(0xacce_0000 + i as u64);
        let hits = (0..draws).filter(|_| sample_arm(&state, &mut rng) == 0).count();
        let p = p_greater(a1, b1, a2, b2).clamp(0.0, 1.0);
        let freq = hits as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        // Slack of 1e-12 only absorbs rounding in the oracle when p is ~1.
        let dev = (freq - p).abs();
        ok &= dev <= 4.0 * se + 1e-12;
        if se > 0.0 {
            worst_z = worst_z.max(dev / se);
        }
    }
    (ok, format!("5 pairs x {draws} draws, worst deviation {worst_z:.2} standard errors (limit 4)"))
}

fn update_arithmetic() -> (bool, String) {
    let minutes = [615u64, 4568, 4762, 5282, 5412, 5334];
    let config = SimConfig {
        update_interval: 3,
        horizon: 6,
        ..SimConfig::default()
    };
    let sizes: Vec<u64> = build_batches(&ImpressionTrace::from_dense(&minutes).unwrap(), &config)
        .iter()
        .map(|b| b.size)
        .collect();
    let mut ok = sizes == [9945, 16028];

    // Batch 1: the arm under test saw S=50, F=950.
    let first = BatchCounters {
        successes: vec![50, 200, 300],
        failures: vec![950, 3000, 5445],
    };
    let mut sum = BanditState::new(3).unwrap();
    summation_update(&mut sum, &first).unwrap();
    ok &= pairs(sum.arms()) == [(51.0, 951.0), (201.0, 3001.0), (301.0, 5446.0)];
    let mut norm = BanditState::new(3).unwrap();
    normalization_update(&mut norm, &first, sizes[0]).unwrap();
    ok &= pairs(norm.arms())[0] == (1.0 + 165.75, 1.0 + 3149.25);
    ok &= norm.arms()[0].mean() == 166.75 / 3317.0;

    // Batch 2 on top: 16028 impressions split 8014 / 4007 / 4007, so each
    // arm's success increment is a whole number.
    let second = BatchCounters {
        successes: vec![300, 600, 150],
        failures: vec![7714, 3407, 3857],
    };
    ok &= second.total() == sizes[1];
    summation_update(&mut sum, &second).unwrap();
    ok &= pairs(sum.arms()) == [(351.0, 8665.0), (801.0, 6408.0), (451.0, 9303.0)];
    normalization_update(&mut norm, &second, sizes[1]).unwrap();
    let alphas: Vec<f64> = norm.arms().iter().map(|a| a.alpha).collect();
    let second_alpha = |n: f64, s: f64| 16028.0 * s / (3.0 * n);
    ok &= alphas[0] == 166.75 + 200.0;
    ok &= alphas[1] == 1.0 + 3315.0 * 200.0 / 3200.0 + 800.0;
    ok &= alphas[2] == 1.0 + 9945.0 * 300.0 / (3.0 * 5745.0) + second_alpha(4007.0, 150.0);
    // Every arm gained exactly M/K per batch in total pseudo-count.
    let mass_ok = norm
        .arms()
        .iter()
        .all(|a| ((a.alpha + a.beta) - (2.0 + 3315.0 + 16028.0 / 3.0)).abs() < 1e-9);
    ok &= mass_ok;
    (
        ok,
        format!(
            "batch sizes {sizes:?}; normalization arm 0 -> Beta({}, {}); mass per arm {}",
            norm.arms()[0].alpha,
            norm.arms()[0].beta,
            if mass_ok { "M/K within 1e-9" } else { "off" }
        ),
    )
}

struct MainCorpus {
    corpus: Vec<ArticleSpec>,
    config: SimConfig,
    bandit: Vec<ArticleResult>,
}

fn main_corpus() -> MainCorpus {
    let corpus = sorted_corpus(&generate_synthetic_corpus(&convergence_params(), CORPUS_SEED).unwrap());
    let config = SimConfig::default();
    let bandit = checked(run_corpus(&corpus, &config).unwrap(), &corpus, &config);
    MainCorpus { corpus, config, bandit }
}

fn convergence(m: &MainCorpus) -> (bool, String) {
    let c = &m.corpus;
    let three_arms = c.iter().all(|a| a.arm_count() == 3);
    let min_gap = c
        .iter()
        .map(|a| {
            let best = a.theta_hat[a.optimal_arm()];
            a.theta_hat
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != a.optimal_arm())
                .map(|(_, &t)| 1.0 - t / best)
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    let min_traffic = c.iter().map(|a| a.trace.impressions_between(0, m.config.horizon)).min().unwrap();
    let shape_ok = c.len() == 200 && three_arms && min_gap >= 0.2 - 1e-12 && min_traffic >= 100_000;
    let rate = false_convergence_rate(&m.bandit, c, DEFAULT_STABLE_WINDOW).unwrap();
    (
        shape_ok && rate <= 0.05,
        format!(
            "false convergence {:.2}% (limit 5%) over {} articles; min gap {:.1}%, min in-horizon impressions {min_traffic}",
            100.0 * rate,
            c.len(),
            100.0 * min_gap
        ),
    )
}

fn optimization_speed(m: &MainCorpus) -> (bool, String) {
    let verdicts = convergence_verdicts(&m.bandit, &m.corpus, DEFAULT_STABLE_WINDOW).unwrap();
    let times: Vec<Option<u32>> = m.bandit.iter().zip(&m.corpus).map(|(r, a)| time_to_optimize(r, a)).collect();
    let converged: Vec<Option<u32>> = times
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| v.converged_correctly)
        .map(|(t, _)| *t)
        .collect();
    // Judged over every article, unsettled ones ranking last.
    let p80_all = percentile(&times, 0.8).flatten();
    let p80_converged = percentile(&converged, 0.8).flatten();
    let show = |p: Option<u32>| p.map_or("not reached".to_string(), |m| format!("{m} min"));
    (
        p80_all.is_some_and(|p| p <= 45),
        format!(
            "80th percentile {} over all articles (limit 45 min), {} over correctly converged",
            show(p80_all),
            show(p80_converged)
        ),
    )
}

fn self_correction() -> (bool, String) {
    let article = flat_article("stress", vec![0.10, 0.08, 0.05], 300, 240);
    let config = SimConfig::default();
    let prior = AdversarialPrior::calibrate(3, article.worst_arm(), 0.9).unwrap();
    let times: Vec<Option<u32>> = (0..200u64)
        .map(|seed| {
            let mut rng = article_rng(seed, &article.article_id, Stream::Stress);
            let state = prior.state().unwrap();
            let result = bts_core::sim::run_article_from(&article, &config, state, &mut rng).unwrap();
            let result = checked(vec![result], std::slice::from_ref(&article), &config).remove(0);
            self_correction_time(&result, &article, CORRECTION_STREAK)
        })
        .collect();
    let within = times.iter().filter(|t| t.is_some_and(|m| m <= 60)).count();
    let p80 = percentile(&times, 0.8).flatten();
    (
        within * 100 >= 80 * times.len(),
        format!(
            "{within}/200 runs corrected within 60 min (need 160); prior strength {:.3} sends {:.1}% to the worst arm; 80th percentile {}",
            prior.strength,
            100.0 * prior.worst_arm_share,
            p80.map_or("not reached".into(), |m| format!("{m} min"))
        ),
    )
}

struct Paired {
    baseline: Vec<BaselineResult>,
}

fn click_gain_check(m: &MainCorpus, p: &Paired) -> (bool, String) {
    let first: u64 = m.corpus.iter().map(|a| a.trace.impressions_between(0, 60)).sum();
    let all: u64 = m.corpus.iter().map(|a| a.trace.impressions_between(0, m.config.horizon)).sum();
    let t = click_splits(&m.bandit);
    let r = click_splits(&p.baseline);
    let g = click_gain(&t, &r).unwrap();
    let (lo, hi) = bootstrap_gain(&t, &r, Period::FirstHour, 2000, 0.95, CORPUS_SEED).unwrap().unwrap();
    let (first_gain, total) = (g.first_hour.unwrap(), g.total.unwrap());
    (
        lo > 0.0 && total > 0.0 && total < first_gain,
        format!(
            "first hour {:+.2}% (95% CI {:+.2}%..{:+.2}%), remaining {:+.2}%, total {:+.2}%; first-hour traffic share {:.1}%",
            100.0 * first_gain,
            100.0 * lo,
            100.0 * hi,
            100.0 * g.remaining.unwrap(),
            100.0 * total,
            100.0 * first as f64 / all as f64
        ),
    )
}

fn suboptimal(m: &MainCorpus, p: &Paired) -> (bool, String) {
    let report = suboptimal_impressions(&m.bandit, &p.baseline, &m.corpus).unwrap();
    (
        report.decrease > 0.5,
        format!(
            "decrease {:.2}% (limit > 50%): {} bandit vs {} baseline sub-optimal impressions",
            100.0 * report.decrease,
            report.bandit_impressions,
            report.baseline_impressions
        ),
    )
}

fn sweep_directions() -> (bool, String) {
    let corpus = sorted_corpus(&generate_synthetic_corpus(&sweep_params(), CORPUS_SEED + 1).unwrap());
    let config = SimConfig::default();
    let seeds: Vec<u64> = (0..20).collect();
    let mut cells = Vec::new();
    for method in UpdateMethod::ALL {
        for interval in SWEEP_INTERVALS {
            let cell = simulate_cell(&corpus, &config, method, interval, &seeds).unwrap();
            cells.push(cell);
        }
    }
    // Conservation for the sweep runs is checked on one seed per cell.
    for method in UpdateMethod::ALL {
        for interval in SWEEP_INTERVALS {
            let c = config.with_method(method).with_interval(interval);
            checked(run_corpus(&corpus, &c).unwrap(), &corpus, &c);
        }
    }
    let cell = |m: UpdateMethod, i: u32| cells.iter().find(|c| c.method == m && c.interval == i).unwrap();
    let sum_wins = SWEEP_INTERVALS
        .iter()
        .filter(|&&i| cell(UpdateMethod::Summation, i).total_clicks >= cell(UpdateMethod::Normalization, i).total_clicks)
        .count();
    let one = &cell(UpdateMethod::Summation, 1).seed_clicks;
    let sixty = &cell(UpdateMethod::Summation, 60).seed_clicks;
    let (wins, losses) = paired_wins(one, sixty);
    let p = sign_test(wins, losses);
    let deltas: Vec<String> = SWEEP_INTERVALS
        .iter()
        .map(|&i| {
            let s = cell(UpdateMethod::Summation, i).total_clicks as f64;
            let n = cell(UpdateMethod::Normalization, i).total_clicks as f64;
            format!("{i}:{:+.2}%", 100.0 * (s - n) / n)
        })
        .collect();
    (
        sum_wins * 2 > SWEEP_INTERVALS.len() && p < 0.05,
        format!(
            "summation >= normalization at {sum_wins}/6 intervals [{}]; 1-min beats 60-min in {wins}/20 seeds ({losses} losses), sign test p = {p:.4}",
            deltas.join(" ")
        ),
    )
}

fn determinism() -> (bool, String) {
    let params = bts_core::synthetic::CorpusParams {
        articles: 12,
        impressions: bts_core::synthetic::Span::new(5_000, 15_000),
        ..bts_core::synthetic::CorpusParams::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::new(Mode::Run, CorpusSource::Synthetic { params, seed: 5 }, tmp.path().join("a"));
    config.sweep = Some(SweepGrid {
        methods: UpdateMethod::ALL.to_vec(),
        intervals: vec![1, 5, 60],
        replicates: 2,
    });
    config.stress_replicates = 2;
    config.bootstrap_resamples = 500;
    let (first, _) = run_experiment(&config).unwrap();
    config.out_dir = tmp.path().join("b");
    let (second, _) = run_experiment(&config).unwrap();
    let strip = |dir: &std::path::Path| -> String {
        std::fs::read_to_string(dir.join("report.json"))
            .unwrap()
            .lines()
            .filter(|l| !l.contains("\"generated_at\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let files_equal = strip(&tmp.path().join("a")) == strip(&tmp.path().join("b"));
    let manifests_equal = std::fs::read(tmp.path().join("a/manifest.json")).unwrap()
        == std::fs::read(tmp.path().join("b/manifest.json")).unwrap();
    let canonical_equal = first.canonical_json().unwrap() == second.canonical_json().unwrap();
    // A thread pool of a different size must not change anything.
    let pooled = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| build_report(&config).unwrap());
    let pool_equal = pooled.canonical_json().unwrap() == first.canonical_json().unwrap();
    let suite_runs = CHECKED_RUNS.with(Cell::get);
    let report_runs = first.invariants.bandit_runs_checked + first.invariants.baseline_runs_checked;
    (
        files_equal && manifests_equal && canonical_equal && pool_equal,
        format!(
            "reports {} across runs and thread pools, manifests {}; invariants held on {suite_runs} suite runs and {report_runs} report runs",
            if files_equal && canonical_equal && pool_equal { "byte-identical" } else { "DIFFER" },
            if manifests_equal { "identical" } else { "DIFFER" }
        ),
    )
}

fn main() {
    let mut gate = Gate { failures: 0 };
    let secs = Duration::from_secs;

    gate.criterion(1, "per-event reduction", secs(10), per_event_reduction);
    gate.criterion(2, "selection-probability oracle", secs(10), selection_oracle);
    gate.criterion(3, "update arithmetic", secs(1), update_arithmetic);

    // Criteria 4 and 5 share one simulated corpus and one budget; the time to
    // build it is charged to criterion 4.
    let mut main: Option<MainCorpus> = None;
    gate.criterion(4, "false convergence", secs(180), || {
        let m = main_corpus();
        let out = convergence(&m);
        main = Some(m);
        out
    });
    let main = main.unwrap_or_else(main_corpus);
    gate.criterion(5, "time to optimize", secs(180), || optimization_speed(&main));
    gate.criterion(6, "self-correction", secs(60), self_correction);

    let mut paired: Option<Paired> = None;
    gate.criterion(7, "click gain", secs(180), || {
        let p = Paired {
            baseline: checked_baseline(run_baseline_corpus(&main.corpus, &main.config).unwrap()),
        };
        let out = click_gain_check(&main, &p);
        paired = Some(p);
        out
    });
    let paired = paired.unwrap_or_else(|| Paired {
        baseline: run_baseline_corpus(&main.corpus, &main.config).unwrap(),
    });
    gate.criterion(8, "sub-optimal exposure", secs(180), || suboptimal(&main, &paired));
    gate.criterion(9, "update method and frequency sweeps", secs(300), sweep_directions);
    gate.criterion(10, "determinism and conservation", secs(120), determinism);

    println!(
        "acceptance: {} of 10 criteria passed",
        10 - gate.failures
    );
    if gate.failures > 0 {
        std::process::exit(1);
    }
}
