//! C ABI for the polyhazard sampler.
//!
//! Conventions: every fallible call returns a [`PhzStatus`]; out-parameters
//! are written only on `Ok`. Objects are opaque handles created and released
//! by matching `phz_*_free` calls. `phz_last_error` returns a thread-local
//! message describing the most recent failure on the calling thread. Strings
//! returned through out-parameters are owned by the caller and must be
//! released with `phz_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use polyhazard::cli::{read_data_csv, FitConfig};
use polyhazard::engine::{self, ChainRun};
use polyhazard::error::Error;
use polyhazard::model::{standardize_with, ColumnStats, Dataset, ModelState};
use polyhazard::oracle;
use polyhazard::postprocess::{
    apply_ordering, mean_survival, pooled_submodel_probabilities, SubmodelProb,
};
use polyhazard::survdist::DistKind;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhzStatus {
    Ok = 0,
    /// A pointer argument was null or an argument was out of range.
    InvalidArgument = 1,
    /// Input data or configuration was malformed.
    InputError = 2,
    /// A numerical failure inside the sampler.
    NumericalError = 3,
    /// A panic crossed the boundary; state may be inconsistent.
    Panic = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> PhzStatus {
    match err {
        Error::Input { .. }
        | Error::Schema(_)
        | Error::Config(_)
        | Error::MissingArtifact(_)
        | Error::Io(_)
        | Error::Json(_) => PhzStatus::InputError,
        Error::Domain(_)
        | Error::Numerical { .. }
        | Error::Capacity { .. }
        | Error::ChainAborted { .. } => PhzStatus::NumericalError,
    }
}

fn guard<F: FnOnce() -> PhzStatus>(f: F) -> PhzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            PhzStatus::Panic
        }
    }
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn phz_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned through an out-parameter.
///
/// # Safety
/// `s` must be a pointer previously returned by this library and not yet
/// freed; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn phz_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Censored survival dataset with standardized covariates.
pub struct PhzDataset {
    inner: Dataset,
}

/// Completed sampler run: posterior snapshots, submodel probabilities, and
/// diagnostics for every chain.
pub struct PhzRun {
    chains: Vec<ChainRun>,
    samples: Vec<ModelState>,
    submodels: Vec<SubmodelProb>,
    columns: Vec<ColumnStats>,
    max_time: f64,
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Load a dataset from a CSV file (header `time,event,x1..xp`).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phz_dataset_read_csv(
    path: *const c_char,
    out: *mut *mut PhzDataset,
) -> PhzStatus {
    guard(|| {
        let Some(path) = cstr(path) else {
            set_error("path must be valid UTF-8 and non-null");
            return PhzStatus::InvalidArgument;
        };
        if out.is_null() {
            set_error("out must not be null");
            return PhzStatus::InvalidArgument;
        }
        match read_data_csv(Path::new(path)).and_then(Dataset::new) {
            Ok(data) => {
                *out = Box::into_raw(Box::new(PhzDataset { inner: data }));
                PhzStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Simulate a single-Weibull dataset with exponential censoring
/// (`censor_rate = 0` disables censoring).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phz_dataset_simulate_weibull(
    nu: f64,
    mu: f64,
    censor_rate: f64,
    n: usize,
    seed: u64,
    out: *mut *mut PhzDataset,
) -> PhzStatus {
    guard(|| {
        if out.is_null() {
            set_error("out must not be null");
            return PhzStatus::InvalidArgument;
        }
        let raw =
            match oracle::simulate_polyhazard(&[(DistKind::Weibull, nu, mu)], censor_rate, n, seed)
            {
                Ok(raw) => raw,
                Err(e) => {
                    set_error(&e.to_string());
                    return status_of(&e);
                }
            };
        match Dataset::new(raw) {
            Ok(data) => {
                *out = Box::into_raw(Box::new(PhzDataset { inner: data }));
                PhzStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Number of observations.
///
/// # Safety
/// `dataset` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn phz_dataset_rows(dataset: *const PhzDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.n()
}

/// Number of covariate columns.
///
/// # Safety
/// `dataset` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn phz_dataset_covariates(dataset: *const PhzDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.p()
}

/// Release a dataset handle.
///
/// # Safety
/// `dataset` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn phz_dataset_free(dataset: *mut PhzDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Fit the model. `config_json` holds the same JSON accepted by the CLI
/// (`{"prior": {...}, "sampler": {...}}`); pass null for the defaults.
///
/// # Safety
/// `dataset` must be a live handle; `out` a valid pointer; `config_json`
/// null or NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn phz_fit(
    dataset: *const PhzDataset,
    config_json: *const c_char,
    out: *mut *mut PhzRun,
) -> PhzStatus {
    guard(|| {
        if dataset.is_null() || out.is_null() {
            set_error("dataset and out must not be null");
            return PhzStatus::InvalidArgument;
        }
        let config: FitConfig = if config_json.is_null() {
            FitConfig::default()
        } else {
            let Some(text) = cstr(config_json) else {
                set_error("config_json must be valid UTF-8");
                return PhzStatus::InvalidArgument;
            };
            match serde_json::from_str(text) {
                Ok(cfg) => cfg,
                Err(e) => {
                    set_error(&format!("config: {e}"));
                    return PhzStatus::InputError;
                }
            }
        };
        let data = &(*dataset).inner;
        let workers = polyhazard::cli::max_workers();
        match engine::run(&config.sampler, &config.prior, data, workers) {
            Ok(chains) => {
                let mut samples = Vec::new();
                for c in &chains {
                    for s in &c.skeleton.samples {
                        let mut s = s.clone();
                        apply_ordering(&mut s);
                        samples.push(s);
                    }
                }
                let skeletons: Vec<_> = chains.iter().map(|c| &c.skeleton).collect();
                let submodels = pooled_submodel_probabilities(&skeletons);
                *out = Box::into_raw(Box::new(PhzRun {
                    samples,
                    submodels,
                    columns: data.columns().to_vec(),
                    max_time: data.max_time(),
                    chains,
                }));
                PhzStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Number of posterior snapshots across all chains.
///
/// # Safety
/// `run` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn phz_run_num_samples(run: *const PhzRun) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).samples.len()
}

fn string_out(out: *mut *mut c_char, text: String) -> PhzStatus {
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            PhzStatus::Ok
        }
        Err(_) => {
            set_error("output contained interior NUL");
            PhzStatus::NumericalError
        }
    }
}

/// Pooled and per-chain diagnostics as a JSON document.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer; the returned
/// string is released with `phz_string_free`.
#[no_mangle]
pub unsafe extern "C" fn phz_run_diagnostics_json(
    run: *const PhzRun,
    out: *mut *mut c_char,
) -> PhzStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            set_error("run and out must not be null");
            return PhzStatus::InvalidArgument;
        }
        let run = &*run;
        let per_chain: Vec<_> = run.chains.iter().map(|c| c.diagnostics.report()).collect();
        let pooled = engine::pooled_diagnostics(&run.chains).report();
        let doc = serde_json::json!({ "per_chain": per_chain, "pooled": pooled });
        string_out(out, doc.to_string())
    })
}

/// Submodel probability table as a JSON array of
/// `{label, occupancy, snapshot_fraction}` rows.
///
/// # Safety
/// As for [`phz_run_diagnostics_json`].
#[no_mangle]
pub unsafe extern "C" fn phz_run_submodels_json(
    run: *const PhzRun,
    out: *mut *mut c_char,
) -> PhzStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            set_error("run and out must not be null");
            return PhzStatus::InvalidArgument;
        }
        match serde_json::to_string(&(*run).submodels) {
            Ok(text) => string_out(out, text),
            Err(e) => {
                set_error(&e.to_string());
                PhzStatus::NumericalError
            }
        }
    })
}

/// Posterior mean survival for a covariate profile given on the original
/// scale (`profile_len` must equal the dataset's covariate count; pass
/// `horizon <= 0` for the default of ten times the largest observed time).
/// Writes the posterior mean and the central 95% interval.
///
/// # Safety
/// `run` must be a live handle; `profile` must point to `profile_len`
/// doubles (null allowed when `profile_len == 0`); the three outputs must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn phz_run_mean_survival(
    run: *const PhzRun,
    profile: *const f64,
    profile_len: usize,
    horizon: f64,
    mean: *mut f64,
    lo: *mut f64,
    hi: *mut f64,
) -> PhzStatus {
    guard(|| {
        if run.is_null() || mean.is_null() || lo.is_null() || hi.is_null() {
            set_error("run and outputs must not be null");
            return PhzStatus::InvalidArgument;
        }
        if profile.is_null() && profile_len > 0 {
            set_error("profile must not be null when profile_len > 0");
            return PhzStatus::InvalidArgument;
        }
        let run = &*run;
        if profile_len != run.columns.len() {
            set_error(&format!(
                "profile has {profile_len} values, dataset has {} covariates",
                run.columns.len()
            ));
            return PhzStatus::InvalidArgument;
        }
        let raw: Vec<f64> = if profile_len == 0 {
            vec![]
        } else {
            std::slice::from_raw_parts(profile, profile_len).to_vec()
        };
        let standardized = match standardize_with(&run.columns, &raw) {
            Ok(s) => s,
            Err(e) => {
                set_error(&e.to_string());
                return status_of(&e);
            }
        };
        let h = if horizon > 0.0 {
            horizon
        } else {
            10.0 * run.max_time.max(1.0)
        };
        match mean_survival(&run.samples, &standardized, h) {
            Ok(ms) => {
                *mean = ms.stats.mean;
                *lo = ms.stats.q025;
                *hi = ms.stats.q975;
                PhzStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Release a run handle.
///
/// # Safety
/// `run` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn phz_run_free(run: *mut PhzRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
