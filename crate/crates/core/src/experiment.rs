//! End-to-end experiment orchestration behind the `bts` binary.
//!
//! An [`ExperimentConfig`] fully determines a [`Report`]: the corpus, every
//! simulation seed and every metric parameter live in it. The only field of the
//! report outside that contract is `generated_at`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::UpdateMethod;
use crate::baseline::{run_baseline_corpus, BaselineResult};
use crate::corpus::{parse_corpus, write_corpus};
use crate::error::{Error, Result};
use crate::eval::convergence::convergence_verdicts;
use crate::eval::gain::{bootstrap_gain, click_gain, click_splits, suboptimal_impressions, Period, SuboptimalReport};
use crate::eval::histogram::Histogram;
use crate::eval::stats::{fraction_within, percentile};
use crate::eval::stress::{self_correction_time, AdversarialPrior, CORRECTION_STREAK};
use crate::eval::sweep::{frequency_report, simulate_cell, SweepDelta};
use crate::eval::{time_to_optimize, DEFAULT_STABLE_WINDOW};
use crate::sim::{article_rng, run_article_from, run_corpus, sorted_corpus, ArticleResult, SimConfig, Stream};
use crate::synthetic::{generate_synthetic_corpus, CorpusParams};
use crate::trace::ArticleSpec;

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LIFESPAN_CSV: &str = "active_lifespan.csv";
pub const TIME_TO_OPTIMIZE_CSV: &str = "time_to_optimize.csv";
pub const SELF_CORRECTION_CSV: &str = "self_correction.csv";

/// Git commit of the build, or "unknown" outside a checkout.
pub const GIT_COMMIT: &str = env!("BTS_GIT_COMMIT");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    File(PathBuf),
    Synthetic { params: CorpusParams, seed: u64 },
}

impl CorpusSource {
    pub fn load(&self) -> Result<Vec<ArticleSpec>> {
        match self {
            CorpusSource::File(path) => parse_corpus(path),
            CorpusSource::Synthetic { params, seed } => generate_synthetic_corpus(params, *seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Every bandit metric, the baseline comparison, the stress test, and the
    /// sweep when a grid is configured.
    Run,
    Sweep,
    Stress,
    BaselineCompare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub methods: Vec<UpdateMethod>,
    pub intervals: Vec<u32>,
    /// Paired seeds per cell, derived from the master seed.
    pub replicates: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            methods: UpdateMethod::ALL.to_vec(),
            intervals: vec![1, 3, 5, 10, 30, 60],
            replicates: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub corpus: CorpusSource,
    pub sim: SimConfig,
    /// Batches with traffic that make up the stable window.
    pub stable_window: usize,
    pub sweep: Option<SweepGrid>,
    /// Worst-arm share of the first batch under the adversarial prior.
    pub stress_target_share: f64,
    /// Self-correction runs per article.
    pub stress_replicates: usize,
    pub bootstrap_resamples: usize,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, corpus: CorpusSource, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            mode,
            corpus,
            sim: SimConfig::default(),
            stable_window: DEFAULT_STABLE_WINDOW,
            sweep: None,
            stress_target_share: 0.9,
            stress_replicates: 1,
            bootstrap_resamples: 2000,
            out_dir: out_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.stable_window == 0 {
            return Err(Error::config("stable_window must be at least 1 batch"));
        }
        if let Some(grid) = &self.sweep {
            if grid.methods.is_empty() || grid.intervals.is_empty() || grid.replicates == 0 {
                return Err(Error::config("sweep grid needs methods, intervals and at least one replicate"));
            }
            if grid.intervals.contains(&0) {
                return Err(Error::config("sweep intervals must be positive"));
            }
        }
        if self.mode == Mode::Sweep && self.sweep.is_none() {
            return Err(Error::config("sweep mode needs a sweep grid"));
        }
        if self.stress_replicates == 0 {
            return Err(Error::config("stress_replicates must be at least 1"));
        }
        if let CorpusSource::Synthetic { params, .. } = &self.corpus {
            params.validate()?;
        }
        Ok(())
    }

    fn runs_bandit_metrics(&self) -> bool {
        matches!(self.mode, Mode::Run | Mode::BaselineCompare)
    }

    fn runs_stress(&self) -> bool {
        matches!(self.mode, Mode::Run | Mode::Stress)
    }
}

/// Seeds for sweep replicates: the master seed, then consecutive values.
pub fn replicate_seeds(master_seed: u64, replicates: usize) -> Vec<u64> {
    (0..replicates as u64).map(|i| master_seed.wrapping_add(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub articles: usize,
    pub arms: BTreeMap<usize, usize>,
    pub impressions: u64,
    pub in_horizon_impressions: u64,
    pub post_horizon_impressions: u64,
    /// Share of in-horizon impressions that fall in the testing period.
    pub first_hour_share: f64,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanSection {
    /// Articles whose active lifespan fits inside the horizon.
    pub share_within_horizon: f64,
    pub median_minutes: Option<u32>,
    pub p95_minutes: Option<u32>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSection {
    pub stable_window: usize,
    pub articles: usize,
    pub false_convergence_rate: f64,
    pub misallocated: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeToOptimizeSection {
    /// Over articles that converge correctly; unsettled articles rank last.
    pub p80_minutes: Option<u32>,
    pub p80_minutes_all_articles: Option<u32>,
    pub achieved_share: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickGainSection {
    pub first_hour_percent: Option<f64>,
    pub remaining_percent: Option<f64>,
    pub total_percent: Option<f64>,
    /// 95% percentile-bootstrap interval over articles.
    pub first_hour_ci95_percent: Option<(f64, f64)>,
    pub total_ci95_percent: Option<(f64, f64)>,
    pub baseline_winner_accuracy: f64,
    pub bandit_clicks: u64,
    pub baseline_clicks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuboptimalSection {
    #[serde(flatten)]
    pub counts: SuboptimalReport,
    pub decrease_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCorrectionSection {
    pub target_share: f64,
    pub streak: usize,
    /// Calibrated prior per arm count (worst arm listed last).
    pub priors: BTreeMap<usize, AdversarialPrior>,
    pub runs: usize,
    pub p80_minutes: Option<u32>,
    pub share_within_60_minutes: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
    pub cells: Vec<crate::eval::SweepCell>,
    /// Summation relative to normalization per interval, when both are swept.
    pub update_method_deltas: Vec<SweepDelta>,
    /// Per method, gap of each interval from its best interval.
    pub frequency_gaps: BTreeMap<UpdateMethod, Vec<SweepDelta>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSection {
    pub bandit_runs_checked: usize,
    pub baseline_runs_checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Unix seconds; not covered by the determinism contract.
    pub generated_at: u64,
    pub version: String,
    pub config: ExperimentConfig,
    pub corpus: CorpusSummary,
    pub active_lifespan: LifespanSection,
    pub convergence: Option<ConvergenceSection>,
    pub time_to_optimize: Option<TimeToOptimizeSection>,
    pub click_gain: Option<ClickGainSection>,
    pub suboptimal_impressions: Option<SuboptimalSection>,
    pub self_correction: Option<SelfCorrectionSection>,
    pub sweep: Option<SweepSection>,
    pub invariants: InvariantSection,
}

impl Report {
    /// Pretty JSON with `generated_at` zeroed, the deterministic part of the report.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.generated_at = 0;
        Ok(serde_json::to_string_pretty(&copy)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeVersion {
    pub package: String,
    pub git_commit: String,
}

/// Everything needed to reproduce a report: `bts replay manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub code_version: CodeVersion,
    pub corpus_digest: String,
    /// SHA-256 of [`Report::canonical_json`].
    pub report_digest: String,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn corpus_digest(corpus: &[ArticleSpec]) -> Result<String> {
    let mut buf = Vec::new();
    write_corpus(&mut buf, corpus)?;
    Ok(sha256_hex(&buf))
}

fn percent(x: Option<f64>) -> Option<f64> {
    x.map(|v| 100.0 * v)
}

fn summarize_corpus(corpus: &[ArticleSpec], sim: &SimConfig) -> Result<CorpusSummary> {
    let mut arms = BTreeMap::new();
    let (mut impressions, mut in_horizon, mut first_hour) = (0u64, 0u64, 0u64);
    for a in corpus {
        *arms.entry(a.arm_count()).or_insert(0) += 1;
        impressions += a.trace.total();
        in_horizon += a.trace.impressions_between(0, sim.horizon);
        first_hour += a.trace.impressions_between(0, sim.testing_period.min(sim.horizon));
    }
    Ok(CorpusSummary {
        articles: corpus.len(),
        arms,
        impressions,
        in_horizon_impressions: in_horizon,
        post_horizon_impressions: impressions - in_horizon,
        first_hour_share: if in_horizon > 0 { first_hour as f64 / in_horizon as f64 } else { 0.0 },
        digest: corpus_digest(corpus)?,
    })
}

fn lifespan_section(corpus: &[ArticleSpec], horizon: u32) -> LifespanSection {
    let spans: Vec<Option<u32>> = corpus.iter().map(|a| Some(a.trace.active_lifespan())).collect();
    LifespanSection {
        share_within_horizon: fraction_within(&spans, horizon),
        median_minutes: percentile(&spans, 0.5).flatten(),
        p95_minutes: percentile(&spans, 0.95).flatten(),
        histogram: Histogram::from_values(60, horizon, &spans),
    }
}

fn check_bandit_invariants(results: &[ArticleResult], corpus: &[ArticleSpec], sim: &SimConfig) -> Result<()> {
    for (r, a) in results.iter().zip(corpus) {
        r.check_invariants(a, sim)
            .map_err(|e| Error::Internal(format!("invariant violated: {e}")))?;
    }
    Ok(())
}

fn check_baseline_invariants(results: &[BaselineResult]) -> Result<()> {
    for r in results {
        r.check_invariants()
            .map_err(|e| Error::Internal(format!("invariant violated: {e}")))?;
    }
    Ok(())
}

/// Calibrated adversarial priors for every arm count in the corpus, worst arm last.
pub fn calibrate_priors(corpus: &[ArticleSpec], target_share: f64) -> Result<BTreeMap<usize, AdversarialPrior>> {
    let mut counts: Vec<usize> = corpus.iter().map(ArticleSpec::arm_count).collect();
    counts.sort_unstable();
    counts.dedup();
    let priors = counts
        .par_iter()
        .map(|&k| Ok((k, AdversarialPrior::calibrate(k, k - 1, target_share)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(priors.into_iter().collect())
}

/// Adversarial prior for one article: the calibrated shape, moved onto its worst arm.
pub fn prior_for(article: &ArticleSpec, calibrated: &AdversarialPrior) -> Vec<crate::bandit::ArmPosterior> {
    let mut arms = calibrated.arms.clone();
    arms.swap(calibrated.worst_arm, article.worst_arm());
    arms
}

fn self_correction_section(
    corpus: &[ArticleSpec],
    config: &ExperimentConfig,
) -> Result<SelfCorrectionSection> {
    let priors = calibrate_priors(corpus, config.stress_target_share)?;
    let jobs: Vec<(&ArticleSpec, u64)> = corpus
        .iter()
        .flat_map(|a| (0..config.stress_replicates as u64).map(move |r| (a, r)))
        .collect();
    let times = jobs
        .par_iter()
        .map(|&(article, replicate)| {
            let prior = prior_for(article, &priors[&article.arm_count()]);
            let seed = config.sim.master_seed.wrapping_add(replicate);
            let mut rng = article_rng(seed, &article.article_id, Stream::Stress);
            let state = crate::bandit::BanditState::from_arms(prior)?;
            let result = run_article_from(article, &config.sim, state, &mut rng)?;
            result.check_invariants(article, &config.sim)
                .map_err(|e| Error::Internal(format!("invariant violated: {e}")))?;
            Ok(self_correction_time(&result, article, CORRECTION_STREAK))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelfCorrectionSection {
        target_share: config.stress_target_share,
        streak: CORRECTION_STREAK,
        priors,
        runs: times.len(),
        p80_minutes: percentile(&times, 0.8).flatten(),
        share_within_60_minutes: fraction_within(&times, 60),
        histogram: Histogram::from_values(5, 70, &times),
    })
}

fn sweep_section(corpus: &[ArticleSpec], sim: &SimConfig, grid: &SweepGrid) -> Result<SweepSection> {
    let seeds = replicate_seeds(sim.master_seed, grid.replicates);
    let mut intervals = grid.intervals.clone();
    intervals.sort_unstable();
    intervals.dedup();
    let mut methods = grid.methods.clone();
    methods.sort_unstable();
    methods.dedup();

    let mut cells = Vec::new();
    for &method in &methods {
        for &interval in &intervals {
            cells.push(simulate_cell(corpus, sim, method, interval, &seeds)?);
        }
    }
    let find = |m: UpdateMethod, i: u32| cells.iter().find(|c| c.method == m && c.interval == i);
    let update_method_deltas = intervals
        .iter()
        .filter_map(|&i| {
            let sum = find(UpdateMethod::Summation, i)?;
            let norm = find(UpdateMethod::Normalization, i)?;
            Some(SweepDelta {
                method: UpdateMethod::Summation,
                interval: i,
                reference_method: UpdateMethod::Normalization,
                reference_interval: i,
                percent: 100.0 * (sum.total_clicks as f64 - norm.total_clicks as f64)
                    / norm.total_clicks.max(1) as f64,
            })
        })
        .collect();
    let frequency_gaps = methods
        .iter()
        .map(|&m| {
            let row = cells.iter().filter(|c| c.method == m).cloned().collect();
            (m, frequency_report(&seeds, row).deltas)
        })
        .collect();
    Ok(SweepSection {
        seeds,
        cells,
        update_method_deltas,
        frequency_gaps,
    })
}

/// Compute the full report for `config` without touching the filesystem
/// (other than reading a corpus file).
pub fn build_report(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let corpus = sorted_corpus(&config.corpus.load()?);
    if corpus.is_empty() {
        return Err(Error::input("corpus is empty; nothing to evaluate"));
    }
    let sim = &config.sim;
    let mut invariants = InvariantSection {
        bandit_runs_checked: 0,
        baseline_runs_checked: 0,
    };

    let (mut convergence, mut tto, mut gain, mut suboptimal) = (None, None, None, None);
    if config.runs_bandit_metrics() {
        let results = run_corpus(&corpus, sim)?;
        check_bandit_invariants(&results, &corpus, sim)?;
        invariants.bandit_runs_checked += results.len();

        let verdicts = convergence_verdicts(&results, &corpus, config.stable_window)?;
        let wrong: Vec<String> = verdicts
            .iter()
            .filter(|v| !v.converged_correctly)
            .map(|v| v.article_id.clone())
            .collect();
        let times: Vec<Option<u32>> = results
            .iter()
            .zip(&corpus)
            .map(|(r, a)| time_to_optimize(r, a))
            .collect();
        let converged_times: Vec<Option<u32>> = times
            .iter()
            .zip(&verdicts)
            .filter(|(_, v)| v.converged_correctly)
            .map(|(t, _)| *t)
            .collect();
        convergence = Some(ConvergenceSection {
            stable_window: config.stable_window,
            articles: verdicts.len(),
            false_convergence_rate: wrong.len() as f64 / verdicts.len() as f64,
            misallocated: wrong,
        });
        tto = Some(TimeToOptimizeSection {
            p80_minutes: percentile(&converged_times, 0.8).flatten(),
            p80_minutes_all_articles: percentile(&times, 0.8).flatten(),
            achieved_share: times.iter().filter(|t| t.is_some()).count() as f64 / times.len() as f64,
            histogram: Histogram::from_values(5, 65, &converged_times),
        });

        let baseline = run_baseline_corpus(&corpus, sim)?;
        check_baseline_invariants(&baseline)?;
        invariants.baseline_runs_checked += baseline.len();
        let bandit_splits = click_splits(&results);
        let baseline_splits = click_splits(&baseline);
        let g = click_gain(&bandit_splits, &baseline_splits)?;
        let ci = |period| -> Result<Option<(f64, f64)>> {
            Ok(bootstrap_gain(&bandit_splits, &baseline_splits, period, config.bootstrap_resamples, 0.95, sim.master_seed)?
                .map(|(lo, hi)| (100.0 * lo, 100.0 * hi)))
        };
        let correct_winners = baseline
            .iter()
            .zip(&corpus)
            .filter(|(b, a)| b.winner == a.optimal_arm())
            .count();
        gain = Some(ClickGainSection {
            first_hour_percent: percent(g.first_hour),
            remaining_percent: percent(g.remaining),
            total_percent: percent(g.total),
            first_hour_ci95_percent: ci(Period::FirstHour)?,
            total_ci95_percent: ci(Period::Total)?,
            baseline_winner_accuracy: correct_winners as f64 / corpus.len() as f64,
            bandit_clicks: bandit_splits.iter().map(|s| s.total()).sum(),
            baseline_clicks: baseline_splits.iter().map(|s| s.total()).sum(),
        });
        let counts = suboptimal_impressions(&results, &baseline, &corpus)?;
        suboptimal = Some(SuboptimalSection {
            decrease_percent: 100.0 * counts.decrease,
            counts,
        });
    }

    let self_correction = if config.runs_stress() {
        let section = self_correction_section(&corpus, config)?;
        invariants.bandit_runs_checked += section.runs;
        Some(section)
    } else {
        None
    };

    let sweep = match (&config.sweep, config.mode) {
        (Some(grid), Mode::Run | Mode::Sweep) => Some(sweep_section(&corpus, sim, grid)?),
        _ => None,
    };

    Ok(Report {
        generated_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        corpus: summarize_corpus(&corpus, sim)?,
        active_lifespan: lifespan_section(&corpus, sim.horizon),
        convergence,
        time_to_optimize: tto,
        click_gain: gain,
        suboptimal_impressions: suboptimal,
        self_correction,
        sweep,
        invariants,
    })
}

/// Paths of the artifacts written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub report: PathBuf,
    pub manifest: PathBuf,
    pub histograms: Vec<PathBuf>,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Build the report and write it, its manifest and the histogram CSVs to
/// `config.out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Report, Artifacts)> {
    let report = build_report(config)?;
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut histograms = Vec::new();
    let mut csv = |name: &str, h: &Histogram| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, h.to_csv().as_bytes())?;
        histograms.push(path);
        Ok(())
    };
    csv(LIFESPAN_CSV, &report.active_lifespan.histogram)?;
    if let Some(t) = &report.time_to_optimize {
        csv(TIME_TO_OPTIMIZE_CSV, &t.histogram)?;
    }
    if let Some(s) = &report.self_correction {
        csv(SELF_CORRECTION_CSV, &s.histogram)?;
    }

    let report_path = dir.join(REPORT_FILE);
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_file(&report_path, json.as_bytes())?;

    let manifest = Manifest {
        config: config.clone(),
        master_seed: config.sim.master_seed,
        code_version: CodeVersion {
            package: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            git_commit: GIT_COMMIT.to_string(),
        },
        corpus_digest: report.corpus.digest.clone(),
        report_digest: sha256_hex(report.canonical_json()?.as_bytes()),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_file(&manifest_path, json.as_bytes())?;

    Ok((
        report,
        Artifacts {
            report: report_path,
            manifest: manifest_path,
            histograms,
        },
    ))
}

/// Digest a report the same way the manifest does.
pub fn report_digest(report: &Report) -> Result<String> {
    Ok(sha256_hex(report.canonical_json()?.as_bytes()))
}
