//! C ABI over the `argfree` experiment harness.
//!
//! Every fallible call returns an [`ArgfreeStatus`]. On failure the message
//! is kept per thread and read with [`argfree_last_error`]. Handles are
//! opaque, created by `*_new`/`*_from_json` calls and released by the
//! matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use argfree::harness::{self, ExperimentConfig, ExperimentResult};
use argfree::solver::{Algorithm, Solver};
use argfree::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgfreeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    NumericalAbort = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgfreeAlgorithm {
    Argfree = 0,
    ArgfreeEm = 1,
    ExactGradientBaseline = 2,
}

/// Per-row statistics exposed by [`argfree_result_series`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgfreeSeries {
    RelativeLoss = 0,
    GradNorm = 1,
    Theta1 = 2,
    Theta2 = 3,
    Theta3 = 4,
    Theta4 = 5,
    Theta5 = 6,
}

/// An experiment configuration.
pub struct ArgfreeExperiment {
    config: ExperimentConfig,
}

/// Aggregated statistics and per-replica traces of a finished experiment.
pub struct ArgfreeResult {
    inner: ExperimentResult,
}

/// A single replica advanced step by step.
pub struct ArgfreeSolver {
    inner: Solver,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> ArgfreeStatus {
    if e.is_numerical() {
        ArgfreeStatus::NumericalAbort
    } else {
        ArgfreeStatus::ConfigError
    }
}

/// Run `f`, converting errors and panics into a status.
fn guard<F>(f: F) -> ArgfreeStatus
where
    F: FnOnce() -> Result<(), (ArgfreeStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArgfreeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            ArgfreeStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (ArgfreeStatus, String) {
    let mut msg = e.to_string();
    if let Error::Replica { source, .. } = &e {
        msg = format!("{msg}: {source}");
    }
    (status_of(&e), msg)
}

fn null(what: &str) -> (ArgfreeStatus, String) {
    (ArgfreeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ArgfreeStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (ArgfreeStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (ArgfreeStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (ArgfreeStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn argfree_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parse a JSON experiment configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn argfree_experiment_from_json(json: *const c_char, out: *mut *mut ArgfreeExperiment) -> ArgfreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(json, "json")?;
        let config = ExperimentConfig::from_json(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ArgfreeExperiment { config }));
        Ok(())
    })
}

/// The formation benchmark with its reference parameters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn argfree_experiment_benchmark_defaults(
    algorithm: ArgfreeAlgorithm,
    k_max: usize,
    seed: u64,
    out: *mut *mut ArgfreeExperiment,
) -> ArgfreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let alg = match algorithm {
            ArgfreeAlgorithm::Argfree => Algorithm::Argfree,
            ArgfreeAlgorithm::ArgfreeEm => Algorithm::ArgfreeEm,
            ArgfreeAlgorithm::ExactGradientBaseline => Algorithm::ExactGradientBaseline,
        };
        *out = Box::into_raw(Box::new(ArgfreeExperiment { config: ExperimentConfig::benchmark_defaults(alg, k_max, seed) }));
        Ok(())
    })
}

/// Serialize the configuration; release the string with [`argfree_string_free`].
///
/// # Safety
/// `exp` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn argfree_experiment_to_json(exp: *const ArgfreeExperiment, out: *mut *mut c_char) -> ArgfreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let exp = in_arg(exp, "experiment")?;
        let text = exp.config.to_json().map_err(lib_err)?;
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn argfree_experiment_free(exp: *mut ArgfreeExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Convergence certificate as a JSON string; release it with
/// [`argfree_string_free`].
///
/// # Safety
/// `exp` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn argfree_certify_json(exp: *const ArgfreeExperiment, out: *mut *mut c_char) -> ArgfreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let exp = in_arg(exp, "experiment")?;
        let cert = harness::certify_experiment(&exp.config).map_err(lib_err)?;
        let text = serde_json::to_string(&cert).map_err(|e| (ArgfreeStatus::ConfigError, e.to_string()))?;
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn argfree_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Run all Monte Carlo replicas.
///
/// # Safety
/// `exp` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn argfree_experiment_run(exp: *const ArgfreeExperiment, out: *mut *mut ArgfreeResult) -> ArgfreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let exp = in_arg(exp, "experiment")?;
        let inner = harness::run_experiment(&exp.config).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ArgfreeResult { inner }));
        Ok(())
    })
}

/// Number of recorded rows (0 for a null handle).
///
/// # Safety
/// `res` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn argfree_result_len(res: *const ArgfreeResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.stats.k.len())
}

/// Number of replicas (0 for a null handle).
///
/// # Safety
/// `res` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn argfree_result_runs(res: *const ArgfreeResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.stats.n_runs)
}

/// Copy the recorded iteration indices into `k` (`len` entries).
///
/// # Safety
/// `k` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn argfree_result_iterations(res: *const ArgfreeResult, k: *mut usize, len: usize) -> ArgfreeStatus {
    guard(|| {
        let r = in_arg(res, "result")?;
        if k.is_null() {
            return Err(null("k"));
        }
        let src = &r.inner.stats.k;
        if len != src.len() {
            return Err((ArgfreeStatus::InvalidArgument, format!("buffer holds {len} values, need {}", src.len())));
        }
        std::slice::from_raw_parts_mut(k, len).copy_from_slice(src);
        Ok(())
    })
}

/// Copy the per-row mean and population standard deviation of one series.
/// Undefined entries are NaN.
///
/// # Safety
/// `mean` and `std` must each have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn argfree_result_series(
    res: *const ArgfreeResult,
    series: ArgfreeSeries,
    mean: *mut f64,
    std: *mut f64,
    len: usize,
) -> ArgfreeStatus {
    guard(|| {
        let r = in_arg(res, "result")?;
        if mean.is_null() || std.is_null() {
            return Err(null("output buffer"));
        }
        let s = &r.inner.stats;
        let src = match series {
            ArgfreeSeries::RelativeLoss => &s.relative_loss,
            ArgfreeSeries::GradNorm => &s.grad_norm,
            ArgfreeSeries::Theta1 => &s.theta[0],
            ArgfreeSeries::Theta2 => &s.theta[1],
            ArgfreeSeries::Theta3 => &s.theta[2],
            ArgfreeSeries::Theta4 => &s.theta[3],
            ArgfreeSeries::Theta5 => &s.theta[4],
        };
        if len != src.mean.len() {
            return Err((ArgfreeStatus::InvalidArgument, format!("buffer holds {len} values, need {}", src.mean.len())));
        }
        std::slice::from_raw_parts_mut(mean, len).copy_from_slice(&src.mean);
        std::slice::from_raw_parts_mut(std, len).copy_from_slice(&src.std);
        Ok(())
    })
}

/// # Safety
/// `res` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn argfree_result_free(res: *mut ArgfreeResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Initialize replica `replica` of an experiment (seed `solver.seed + replica`).
///
/// # Safety
/// `exp` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn argfree_solver_new(
    exp: *const ArgfreeExperiment,
    replica: u64,
    out: *mut *mut ArgfreeSolver,
) -> ArgfreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let exp = in_arg(exp, "experiment")?;
        let (mut problem, graph) = exp.config.build().map_err(lib_err)?;
        let mut sc = exp.config.solver.clone();
        sc.seed = sc.seed.wrapping_add(replica);
        if let Some(noise) = &exp.config.noise {
            problem = problem.with_isotropic_noise(noise.scale, sc.seed, noise.refresh).map_err(lib_err)?;
        }
        let inner = Solver::new(problem, graph, sc).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ArgfreeSolver { inner }));
        Ok(())
    })
}

/// Advance `n_steps` rounds.
///
/// # Safety
/// `solver` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn argfree_solver_step(solver: *mut ArgfreeSolver, n_steps: usize) -> ArgfreeStatus {
    guard(|| {
        let s = out_arg(solver, "solver")?;
        for _ in 0..n_steps {
            s.inner.step().map_err(lib_err)?;
        }
        Ok(())
    })
}

/// Rounds completed so far (0 for a null handle).
///
/// # Safety
/// `solver` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn argfree_solver_iteration(solver: *const ArgfreeSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.inner.state().k)
}

/// Stacked decision dimension `n` (0 for a null handle).
///
/// # Safety
/// `solver` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn argfree_solver_dim(solver: *const ArgfreeSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.inner.problem().dim())
}

/// Copy the stacked iterate into `x` (`len` must equal the dimension).
///
/// # Safety
/// `x` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn argfree_solver_state(solver: *const ArgfreeSolver, x: *mut f64, len: usize) -> ArgfreeStatus {
    guard(|| {
        let s = in_arg(solver, "solver")?;
        if x.is_null() {
            return Err(null("x"));
        }
        let src = s.inner.state().x.as_slice();
        if len != src.len() {
            return Err((ArgfreeStatus::InvalidArgument, format!("buffer holds {len} values, need {}", src.len())));
        }
        std::slice::from_raw_parts_mut(x, len).copy_from_slice(src);
        Ok(())
    })
}

/// Lyapunov components `θ₁…θ₅` of the current state (NaN where undefined).
///
/// # Safety
/// `theta` must have room for 5 values.
#[no_mangle]
pub unsafe extern "C" fn argfree_solver_theta(solver: *const ArgfreeSolver, theta: *mut f64) -> ArgfreeStatus {
    guard(|| {
        let s = in_arg(solver, "solver")?;
        if theta.is_null() {
            return Err(null("theta"));
        }
        std::slice::from_raw_parts_mut(theta, 5).copy_from_slice(&s.inner.theta());
        Ok(())
    })
}

/// # Safety
/// `solver` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn argfree_solver_free(solver: *mut ArgfreeSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}
