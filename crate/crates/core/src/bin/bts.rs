//! `bts`: run batched Thompson Sampling experiments over impression traces.
//!
//! Exit status: 0 success, 1 bad configuration, 2 bad input data, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bts_core::corpus::write_corpus_file;
use bts_core::experiment::{report_digest, run_experiment, SweepGrid};
use bts_core::synthetic::{generate_synthetic_corpus, CorpusParams};
use bts_core::{CorpusSource, Error, ExperimentConfig, Manifest, Mode, Report, Result, UpdateMethod};

#[derive(Parser, Debug)]
#[command(name = "bts", version, about = "Batched Thompson Sampling headline-testing simulator")]
struct Cli {
    /// More log output (repeatable); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full evaluation: convergence, time to optimize, click gain, sub-optimal
    /// impressions and self-correction.
    Run(ExperimentArgs),
    /// Update-method and update-interval sweep.
    Sweep(ExperimentArgs),
    /// Self-correction from a prior that favours the worst arm.
    Stress(ExperimentArgs),
    /// Bandit against the test-rollout baseline.
    BaselineCompare(ExperimentArgs),
    /// Write a synthetic corpus as JSON lines.
    Generate {
        /// Generator parameters, e.g. `articles=50,arms=3,ctr=0.02..0.06`.
        #[arg(long, default_value = "")]
        synthetic: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the experiment recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long, env = "BTS_OUT_DIR")]
        out: PathBuf,
        /// Fail unless the new report matches the recorded digest.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["corpus", "synthetic"])))]
struct ExperimentArgs {
    /// Corpus as JSON lines: {"article_id", "theta_hat", "trace"}.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Generate the corpus instead, from `key=value,...` parameters.
    #[arg(long)]
    synthetic: Option<String>,
    /// Seed for the synthetic generator (defaults to --seed).
    #[arg(long)]
    corpus_seed: Option<u64>,
    /// Update interval in minutes.
    #[arg(long, default_value_t = bts_core::sim::DEFAULT_INTERVAL)]
    interval: u32,
    #[arg(long, default_value = "sum")]
    method: UpdateMethod,
    #[arg(long, default_value_t = 48)]
    horizon_hours: u32,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep intervals in minutes; enables the sweep section under `run`.
    #[arg(long, value_delimiter = ',')]
    sweep_intervals: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',', default_value = "sum,norm")]
    sweep_methods: Vec<UpdateMethod>,
    /// Paired seeds per sweep cell.
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Self-correction runs per article.
    #[arg(long, default_value_t = 1)]
    stress_replicates: usize,
    /// Nonempty batches in the convergence window.
    #[arg(long, default_value_t = bts_core::eval::DEFAULT_STABLE_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = 2000)]
    bootstrap: usize,
    /// Output directory.
    #[arg(long, env = "BTS_OUT_DIR", default_value = "bts-out")]
    out: PathBuf,
}

const DEFAULT_SWEEP_INTERVALS: [u32; 6] = [1, 3, 5, 10, 30, 60];

impl ExperimentArgs {
    fn into_config(self, mode: Mode) -> Result<ExperimentConfig> {
        let corpus = match (self.corpus, self.synthetic) {
            (Some(path), None) => CorpusSource::File(path),
            (None, Some(spec)) => CorpusSource::Synthetic {
                params: spec.parse::<CorpusParams>()?,
                seed: self.corpus_seed.unwrap_or(self.seed),
            },
            _ => return Err(Error::InvalidConfig("give exactly one of --corpus or --synthetic".into())),
        };
        let horizon = self
            .horizon_hours
            .checked_mul(60)
            .filter(|&h| h > 0)
            .ok_or_else(|| Error::InvalidConfig(format!("--horizon-hours {} is out of range", self.horizon_hours)))?;
        let mut config = ExperimentConfig::new(mode, corpus, self.out);
        config.sim.update_interval = self.interval;
        config.sim.update_method = self.method;
        config.sim.horizon = horizon;
        config.sim.master_seed = self.seed;
        config.stable_window = self.window;
        config.stress_replicates = self.stress_replicates;
        config.bootstrap_resamples = self.bootstrap;
        let intervals = match (self.sweep_intervals, mode) {
            (Some(list), _) => Some(list),
            (None, Mode::Sweep) => Some(DEFAULT_SWEEP_INTERVALS.to_vec()),
            _ => None,
        };
        config.sweep = intervals.map(|intervals| SweepGrid {
            methods: self.sweep_methods,
            intervals,
            replicates: self.replicates,
        });
        Ok(config)
    }
}

fn fmt_percent(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".into(), |v| format!("{v:+.2}%"))
}

fn fmt_minutes(x: Option<u32>) -> String {
    x.map_or_else(|| "not reached".into(), |m| format!("{m} min"))
}

fn print_summary(report: &Report, dir: &Path) {
    let c = &report.corpus;
    println!(
        "corpus: {} articles, {} impressions in horizon ({} after)",
        c.articles, c.in_horizon_impressions, c.post_horizon_impressions
    );
    if let Some(v) = &report.convergence {
        println!("false convergence rate: {:.2}%", 100.0 * v.false_convergence_rate);
    }
    if let Some(t) = &report.time_to_optimize {
        println!("time to optimize, 80th percentile: {}", fmt_minutes(t.p80_minutes));
    }
    if let Some(g) = &report.click_gain {
        println!(
            "click gain: first hour {}, remaining {}, total {}",
            fmt_percent(g.first_hour_percent),
            fmt_percent(g.remaining_percent),
            fmt_percent(g.total_percent)
        );
    }
    if let Some(s) = &report.suboptimal_impressions {
        println!("sub-optimal impressions: {:+.2}% decrease", s.decrease_percent);
    }
    if let Some(s) = &report.self_correction {
        println!(
            "self-correction: 80th percentile {}, {:.1}% within 60 min",
            fmt_minutes(s.p80_minutes),
            100.0 * s.share_within_60_minutes
        );
    }
    if let Some(s) = &report.sweep {
        for cell in &s.cells {
            println!("sweep {} @ {} min: {} clicks", cell.method, cell.interval, cell.total_clicks);
        }
    }
    println!("artifacts written to {}", dir.display());
}

fn run(cli: Cli) -> Result<()> {
    let (mode, args) = match cli.command {
        Command::Run(a) => (Mode::Run, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::Stress(a) => (Mode::Stress, a),
        Command::BaselineCompare(a) => (Mode::BaselineCompare, a),
        Command::Generate { synthetic, seed, out } => {
            let params: CorpusParams = synthetic.parse()?;
            let corpus = generate_synthetic_corpus(&params, seed)?;
            write_corpus_file(&out, &corpus)?;
            println!("wrote {} articles to {}", corpus.len(), out.display());
            return Ok(());
        }
        Command::Replay { manifest, out, check } => {
            let recorded = Manifest::load(&manifest)?;
            if recorded.code_version.git_commit != bts_core::experiment::GIT_COMMIT {
                log::warn!(
                    "manifest was written by commit {}, this build is {}",
                    recorded.code_version.git_commit,
                    bts_core::experiment::GIT_COMMIT
                );
            }
            let mut config = recorded.config.clone();
            config.out_dir = out;
            let (report, _) = run_with_note(&config)?;
            let digest = report_digest(&report)?;
            if check && digest != recorded.report_digest {
                return Err(Error::Internal(format!(
                    "replayed report digest {digest} differs from recorded {}",
                    recorded.report_digest
                )));
            }
            print_summary(&report, &config.out_dir);
            return Ok(());
        }
    };
    let config = args.into_config(mode)?;
    let (report, _) = run_with_note(&config)?;
    print_summary(&report, &config.out_dir);
    Ok(())
}

fn run_with_note(config: &ExperimentConfig) -> Result<(Report, bts_core::experiment::Artifacts)> {
    run_experiment(config).inspect_err(|_| {
        if config.out_dir.exists() {
            eprintln!(
                "note: {} may hold partial artifacts from this or an earlier run",
                config.out_dir.display()
            );
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
