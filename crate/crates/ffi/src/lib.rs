//! C interface to the rt-spectra solver.
//!
//! Every fallible function returns an [`RtsStatus`] code and writes its
//! result through an out-pointer. On failure a message is kept per thread
//! and can be read with [`rts_last_error`]. Handles are opaque and must be
//! released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rt_spectra::assembly::{build_grid, VerticalGrid};
use rt_spectra::cli::dispersion_scan;
use rt_spectra::config::RunConfig;
use rt_spectra::dispersion::{
    critical_frequency, escape_time, solve_at, DispersionCurve, StabilityReport, Verdict,
};
use rt_spectra::physics::{build_equilibrium, EquilibriumProfile};
use rt_spectra::Error;

/// Result codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtsStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numerical = 3,
    Domain = 4,
    Panic = 5,
}

/// Stability verdict of a dispersion scan.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtsVerdict {
    Stable = 0,
    Unstable = 1,
    Marginal = 2,
}

/// One sampled frequency. `lambda` is 0 and `unstable` is 0 for stable samples.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RtsSample {
    pub xi1: f64,
    pub xi2: f64,
    pub lambda: f64,
    pub unstable: i32,
}

/// Scalar results of a scan. Absent values are NaN, an infinite critical
/// frequency is `INFINITY`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RtsSummary {
    pub lambda_max: f64,
    pub xi1: [f64; 2],
    pub xi_c: f64,
    pub c7: f64,
    pub rayleigh: f64,
    pub verdict: RtsVerdict,
}

/// Parsed configuration with its equilibrium and vertical grid.
pub struct RtsConfig {
    cfg: RunConfig,
    profile: EquilibriumProfile,
    grid: VerticalGrid,
}

/// Result of a dispersion scan.
pub struct RtsCurve {
    curve: DispersionCurve,
    report: StabilityReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> RtsStatus {
    match e {
        Error::Domain(_) => RtsStatus::Domain,
        Error::Numerical(_) | Error::Horizon { .. } => RtsStatus::Numerical,
        Error::InvalidField { .. } | Error::Config(_) | Error::Io(_) => RtsStatus::Config,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), RtsStatus>) -> RtsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RtsStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RtsStatus::Panic
        }
    }
}

fn fail(e: Error) -> RtsStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(name: &str) -> RtsStatus {
    set_error(format!("`{name}` is null"));
    RtsStatus::NullPointer
}

fn nan_or(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

/// Parses a JSON run configuration and builds its equilibrium.
///
/// # Safety
/// `json` must be a valid nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rts_config_from_json(json: *const c_char, out: *mut *mut RtsConfig) -> RtsStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| fail(Error::Config("config is not valid UTF-8".into())))?;
        let cfg = RunConfig::from_json(text).map_err(fail)?;
        let n = cfg.numerics.elements_per_layer;
        let profile = build_equilibrium(&cfg.physics, 4 * n + 1).map_err(fail)?;
        let grid = build_grid(&profile, n).map_err(fail)?;
        *out = Box::into_raw(Box::new(RtsConfig { cfg, profile, grid }));
        Ok(())
    })
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `cfg` must come from [`rts_config_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rts_config_free(cfg: *mut RtsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Critical frequency `sqrt(g [rho] / theta)`; `INFINITY` without surface tension.
///
/// # Safety
/// `cfg` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rts_critical_frequency(cfg: *const RtsConfig, out: *mut f64) -> RtsStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = critical_frequency(&c.cfg.physics, &c.profile);
        Ok(())
    })
}

/// Growth rate at frequency `(xi1, xi2)`. Stable frequencies give
/// `*unstable = 0` and `*lambda = 0`.
///
/// # Safety
/// `cfg`, `lambda` and `unstable` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rts_solve_lambda(
    cfg: *const RtsConfig,
    xi1: f64,
    xi2: f64,
    lambda: *mut f64,
    unstable: *mut i32,
) -> RtsStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let lambda = lambda.as_mut().ok_or_else(|| null("lambda"))?;
        let unstable = unstable.as_mut().ok_or_else(|| null("unstable"))?;
        let (_, outcome) =
            solve_at(&c.cfg.physics, &c.profile, &c.grid, c.cfg.numerics.tol, [xi1, xi2]).map_err(fail)?;
        let l = outcome.lambda();
        *lambda = l.unwrap_or(0.0);
        *unstable = i32::from(l.is_some());
        Ok(())
    })
}

/// Runs the configured dispersion scan.
///
/// # Safety
/// `cfg` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rts_dispersion_new(cfg: *const RtsConfig, out: *mut *mut RtsCurve) -> RtsStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let (curve, report) = dispersion_scan(&c.cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(RtsCurve { curve, report }));
        Ok(())
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `curve` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn rts_dispersion_len(curve: *const RtsCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.curve.samples.len())
}

/// Sample `index` of the scan.
///
/// # Safety
/// `curve` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rts_dispersion_sample(
    curve: *const RtsCurve,
    index: usize,
    out: *mut RtsSample,
) -> RtsStatus {
    guard(|| {
        let c = curve.as_ref().ok_or_else(|| null("curve"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = c.curve.samples.get(index).ok_or_else(|| {
            fail(Error::Domain(format!(
                "sample index {index} out of range for {} samples",
                c.curve.samples.len()
            )))
        })?;
        *out = RtsSample {
            xi1: s.xi[0],
            xi2: s.xi[1],
            lambda: s.lambda.unwrap_or(0.0),
            unstable: i32::from(s.lambda.is_some()),
        };
        Ok(())
    })
}

/// Largest rate, its frequency, the growth constant and the verdict.
///
/// # Safety
/// `curve` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rts_dispersion_summary(curve: *const RtsCurve, out: *mut RtsSummary) -> RtsStatus {
    guard(|| {
        let c = curve.as_ref().ok_or_else(|| null("curve"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = RtsSummary {
            lambda_max: c.curve.lambda_max,
            xi1: c.curve.xi1.unwrap_or([f64::NAN; 2]),
            xi_c: c.curve.xi_c,
            c7: nan_or(c.curve.c7),
            rayleigh: nan_or(c.report.r),
            verdict: match c.report.verdict {
                Verdict::Stable => RtsVerdict::Stable,
                Verdict::Unstable => RtsVerdict::Unstable,
                Verdict::Marginal => RtsVerdict::Marginal,
            },
        };
        Ok(())
    })
}

/// Releases a scan. Null is ignored.
///
/// # Safety
/// `curve` must come from [`rts_dispersion_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rts_dispersion_free(curve: *mut RtsCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Escape time `ln(epsilon / delta) / c7`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rts_escape_time(c7: f64, epsilon: f64, delta: f64, out: *mut f64) -> RtsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = escape_time(c7, epsilon, delta).map_err(fail)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn rts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
