//! C ABI over `bts-core`.
//!
//! Objects are opaque handles created by `*_new` / `*_load` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`BtsStatus`]; on failure `bts_last_error()` describes what went wrong on
//! the calling thread. Panics never cross the boundary; they surface as
//! `BTS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use bts_core::experiment::{run_experiment, ExperimentConfig};
use bts_core::sim::{run_corpus, SimRng};
use bts_core::synthetic::{generate_synthetic_corpus, CorpusParams};
use bts_core::{
    corpus::parse_corpus, ArmPosterior, ArticleSpec, BanditState, BatchCounters, Error, SimConfig,
    ThompsonSampler, UpdateMethod,
};
use rand::SeedableRng;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    InvalidInput = 3,
    Io = 4,
    Internal = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtsUpdateMethod {
    Summation = 0,
    Normalization = 1,
}

impl From<BtsUpdateMethod> for UpdateMethod {
    fn from(m: BtsUpdateMethod) -> Self {
        match m {
            BtsUpdateMethod::Summation => UpdateMethod::Summation,
            BtsUpdateMethod::Normalization => UpdateMethod::Normalization,
        }
    }
}

/// Simulation settings, all durations in minutes.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BtsSimConfig {
    pub update_interval: u32,
    pub horizon: u32,
    pub testing_period: u32,
    pub update_method: BtsUpdateMethod,
    pub master_seed: u64,
}

impl From<BtsSimConfig> for SimConfig {
    fn from(c: BtsSimConfig) -> Self {
        SimConfig {
            update_interval: c.update_interval,
            horizon: c.horizon,
            testing_period: c.testing_period,
            update_method: c.update_method.into(),
            master_seed: c.master_seed,
        }
    }
}

/// Corpus totals from one simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BtsCorpusTotals {
    pub impressions: u64,
    pub clicks: u64,
    pub post_horizon_impressions: u64,
}

/// Online batched Thompson sampler: select and record events, then close the
/// batch to fold them into the posteriors.
pub struct BtsBandit {
    state: BanditState,
    sampler: ThompsonSampler,
    counters: BatchCounters,
    method: UpdateMethod,
    rng: SimRng,
}

/// A validated corpus of articles.
pub struct BtsCorpus {
    articles: Vec<ArticleSpec>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BtsStatus {
    match e {
        Error::InvalidConfig(_) => BtsStatus::InvalidConfig,
        Error::Io { .. } => BtsStatus::Io,
        Error::Json(_) | Error::Internal(_) => BtsStatus::Internal,
        _ => BtsStatus::InvalidInput,
    }
}

struct Failure(BtsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BtsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BtsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BtsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside bts".into());
            BtsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(BtsStatus::InvalidInput, format!("{what} is not valid UTF-8")))
}

/// Message for the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Defaults: 5-minute batches, 48-hour horizon, 60-minute testing period,
/// summation update, seed 0.
#[no_mangle]
pub extern "C" fn bts_sim_config_default() -> BtsSimConfig {
    let c = SimConfig::default();
    BtsSimConfig {
        update_interval: c.update_interval,
        horizon: c.horizon,
        testing_period: c.testing_period,
        update_method: match c.update_method {
            UpdateMethod::Summation => BtsUpdateMethod::Summation,
            UpdateMethod::Normalization => BtsUpdateMethod::Normalization,
        },
        master_seed: c.master_seed,
    }
}

/// New bandit with `arm_count` Beta(1, 1) arms.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bts_bandit_new(
    arm_count: usize,
    method: BtsUpdateMethod,
    seed: u64,
    out: *mut *mut BtsBandit,
) -> BtsStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let state = BanditState::new(arm_count)?;
        let bandit = BtsBandit {
            sampler: state.sampler(),
            counters: BatchCounters::new(arm_count),
            state,
            method: method.into(),
            rng: SimRng::seed_from_u64(seed),
        };
        *out = Box::into_raw(Box::new(bandit));
        Ok(())
    })
}

/// # Safety
/// `bandit` must come from `bts_bandit_new` and not be used afterwards. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn bts_bandit_free(bandit: *mut BtsBandit) {
    if !bandit.is_null() {
        drop(Box::from_raw(bandit));
    }
}

/// # Safety
/// `bandit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bts_bandit_arm_count(bandit: *const BtsBandit, out: *mut usize) -> BtsStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(bandit, "bandit")?.state.arm_count();
        Ok(())
    })
}

/// Draw an arm from the posteriors frozen at the last batch boundary.
///
/// # Safety
/// `bandit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bts_bandit_select(bandit: *mut BtsBandit, out: *mut usize) -> BtsStatus {
    guard(|| {
        let b = as_mut(bandit, "bandit")?;
        *as_mut(out, "out")? = b.sampler.sample_arm(&mut b.rng);
        Ok(())
    })
}

/// Tally one response for `arm` in the current batch.
///
/// # Safety
/// `bandit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bts_bandit_record(bandit: *mut BtsBandit, arm: usize, clicked: bool) -> BtsStatus {
    guard(|| {
        as_mut(bandit, "bandit")?.counters.record(arm, clicked)?;
        Ok(())
    })
}

/// Fold the current batch into the posteriors and start a new batch.
///
/// # Safety
/// `bandit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bts_bandit_end_batch(bandit: *mut BtsBandit) -> BtsStatus {
    guard(|| {
        let b = as_mut(bandit, "bandit")?;
        if b.counters.total() > 0 {
            b.state.apply(b.method, &b.counters)?;
            b.sampler = b.state.sampler();
        }
        b.counters.reset();
        Ok(())
    })
}

/// Current Beta parameters of `arm`.
///
/// # Safety
/// `bandit` must be a live handle; `alpha` and `beta` writable.
#[no_mangle]
pub unsafe extern "C" fn bts_bandit_posterior(
    bandit: *const BtsBandit,
    arm: usize,
    alpha: *mut f64,
    beta: *mut f64,
) -> BtsStatus {
    guard(|| {
        let ArmPosterior { alpha: a, beta: b } = *as_ref(bandit, "bandit")?.state.arm(arm)?;
        *as_mut(alpha, "alpha")? = a;
        *as_mut(beta, "beta")? = b;
        Ok(())
    })
}

/// Load a JSON-lines corpus.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bts_corpus_load(path: *const c_char, out: *mut *mut BtsCorpus) -> BtsStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let articles = parse_corpus(PathBuf::from(as_str(path, "path")?))?;
        *out = Box::into_raw(Box::new(BtsCorpus { articles }));
        Ok(())
    })
}

/// Generate a synthetic corpus from `key=value,...` parameters ("" for defaults).
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bts_corpus_synthetic(
    spec: *const c_char,
    seed: u64,
    out: *mut *mut BtsCorpus,
) -> BtsStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let params: CorpusParams = as_str(spec, "spec")?.parse()?;
        let articles = generate_synthetic_corpus(&params, seed)?;
        *out = Box::into_raw(Box::new(BtsCorpus { articles }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bts_corpus_len(corpus: *const BtsCorpus, out: *mut usize) -> BtsStatus {
    guard(|| {
        *as_mut(out, "out")? = as_ref(corpus, "corpus")?.articles.len();
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from a corpus constructor and not be used afterwards. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn bts_corpus_free(corpus: *mut BtsCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Run the bandit over every article and sum the outcome.
///
/// # Safety
/// `corpus` and `config` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bts_corpus_simulate(
    corpus: *const BtsCorpus,
    config: *const BtsSimConfig,
    out: *mut BtsCorpusTotals,
) -> BtsStatus {
    guard(|| {
        let corpus = as_ref(corpus, "corpus")?;
        let config: SimConfig = (*as_ref(config, "config")?).into();
        let out = as_mut(out, "out")?;
        let results = run_corpus(&corpus.articles, &config)?;
        *out = results.iter().fold(BtsCorpusTotals::default(), |acc, r| BtsCorpusTotals {
            impressions: acc.impressions + r.total_impressions(),
            clicks: acc.clicks + r.total_clicks(),
            post_horizon_impressions: acc.post_horizon_impressions + r.post_horizon_impressions,
        });
        Ok(())
    })
}

/// Run a full experiment described by a JSON config (the `config` object of a
/// `bts` manifest) and write its artifacts to `out_dir`.
///
/// # Safety
/// `config_json` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bts_run_experiment(config_json: *const c_char, out_dir: *const c_char) -> BtsStatus {
    guard(|| {
        let mut config: ExperimentConfig = serde_json::from_str(as_str(config_json, "config_json")?)
            .map_err(|e| Failure(BtsStatus::InvalidConfig, format!("config: {e}")))?;
        config.out_dir = PathBuf::from(as_str(out_dir, "out_dir")?);
        run_experiment(&config)?;
        Ok(())
    })
}
