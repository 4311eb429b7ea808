//! C ABI for `pwhac`.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns a [`PwhacStatus`]; on failure the message is
//! available from [`pwhac_last_error_message`] until the next failing call
//! on the same thread. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use pwhac::bandwidth::{BandwidthRule, OmegaSpec};
use pwhac::diagnostics::{diagnose, Verdict};
use pwhac::model::CovarianceFamily;
use pwhac::montecarlo::{calibrate_critical_value, McConfig};
use pwhac::testing::{build_adjusted, test_statistic, TestProcedure};
use pwhac::{EstimatorConfig, Kernel, RegressionProblem};

/// Result codes. `PWHAC_STATUS_INVALID_ARGUMENT` and
/// `PWHAC_STATUS_NOT_APPLICABLE` match the CLI exit statuses 2 and 3.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwhacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotApplicable = 3,
    Internal = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwhacKernel {
    Bartlett = 0,
    Parzen = 1,
    QuadraticSpectral = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwhacRule {
    /// Andrews with the customary constants (Bartlett and QS only).
    Andrews = 0,
    /// Newey–West with rectangular lag weights and c̄ = (1, 1.1447, 1/3).
    NeweyWest = 1,
    /// Fixed-b, M = b(n−p); `b` is passed separately.
    FixedB = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwhacVerdict {
    SizeOne = 0,
    PowerZero = 1,
    SizeAtLeastHalf = 2,
    SizeOneSpanCase = 3,
    PositiveUnadjusted = 4,
    TrivialBreakdown = 5,
    Inconclusive = 6,
}

impl From<Verdict> for PwhacVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::SizeOne => Self::SizeOne,
            Verdict::PowerZero => Self::PowerZero,
            Verdict::SizeAtLeastHalf => Self::SizeAtLeastHalf,
            Verdict::SizeOneSpanCase => Self::SizeOneSpanCase,
            Verdict::PositiveUnadjusted => Self::PositiveUnadjusted,
            Verdict::TrivialBreakdown => Self::TrivialBreakdown,
            Verdict::Inconclusive => Self::Inconclusive,
        }
    }
}

/// Design and hypothesis.
pub struct PwhacProblem(RegressionProblem);

/// Kernel, bandwidth rule and VAR order.
pub struct PwhacConfig(EstimatorConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &pwhac::Error) -> PwhacStatus {
    match err {
        pwhac::Error::NotApplicable(_) | pwhac::Error::AugmentationImpossible { .. } => PwhacStatus::NotApplicable,
        pwhac::Error::Contract(_) => PwhacStatus::Internal,
        _ => PwhacStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Lib(pwhac::Error),
}

impl From<pwhac::Error> for Failure {
    fn from(e: pwhac::Error) -> Self {
        Self::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PwhacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PwhacStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PwhacStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PwhacStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(what))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(what))
}

/// Creates a problem from `x` (`n × k`), `r_mat` (`q × k`) and `r_vec` (`q`).
///
/// # Safety
/// Pointers must reference arrays of the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwhac_problem_new(
    x: *const f64,
    n: usize,
    k: usize,
    r_mat: *const f64,
    r_vec: *const f64,
    q: usize,
    out_problem: *mut *mut PwhacProblem,
) -> PwhacStatus {
    guard(|| {
        let slot = out(out_problem, "out_problem")?;
        let x = DMatrix::from_row_slice(n, k, slice(x, n * k, "x")?);
        let r = DMatrix::from_row_slice(q, k, slice(r_mat, q * k, "r_mat")?);
        let rv = DVector::from_column_slice(slice(r_vec, q, "r_vec")?);
        let problem = RegressionProblem::new(x, r, rv)?;
        *slot = Box::into_raw(Box::new(PwhacProblem(problem)));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from [`pwhac_problem_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pwhac_problem_free(problem: *mut PwhacProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Creates an estimator configuration. `b` is used only by the fixed-b rule.
///
/// # Safety
/// `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwhac_config_new(
    kernel: PwhacKernel,
    rule: PwhacRule,
    p: usize,
    b: f64,
    out_config: *mut *mut PwhacConfig,
) -> PwhacStatus {
    guard(|| {
        let slot = out(out_config, "out_config")?;
        let kernel = match kernel {
            PwhacKernel::Bartlett => Kernel::Bartlett,
            PwhacKernel::Parzen => Kernel::Parzen,
            PwhacKernel::QuadraticSpectral => Kernel::QuadraticSpectral,
        };
        let rule = match rule {
            PwhacRule::Andrews => BandwidthRule::andrews_default(&kernel, OmegaSpec::ones())?,
            PwhacRule::NeweyWest => BandwidthRule::newey_west_default(OmegaSpec::ones()),
            PwhacRule::FixedB => BandwidthRule::fixed_b(b),
        };
        rule.validate(1)?;
        *slot = Box::into_raw(Box::new(PwhacConfig(EstimatorConfig::new(kernel, rule, p))));
        Ok(())
    })
}

/// Parses a configuration from TOML (`kernel`, `rule`, `p`).
///
/// # Safety
/// `toml_text` must be a NUL-terminated UTF-8 string; `out_config` writable.
#[no_mangle]
pub unsafe extern "C" fn pwhac_config_from_toml(
    toml_text: *const c_char,
    out_config: *mut *mut PwhacConfig,
) -> PwhacStatus {
    guard(|| {
        let slot = out(out_config, "out_config")?;
        if toml_text.is_null() {
            return Err(Failure::Null("toml_text"));
        }
        let text = CStr::from_ptr(toml_text)
            .to_str()
            .map_err(|e| pwhac::Error::Input(format!("configuration is not UTF-8: {e}")))?;
        let config: EstimatorConfig =
            toml::from_str(text).map_err(|e| pwhac::Error::Config(e.to_string()))?;
        *slot = Box::into_raw(Box::new(PwhacConfig(config)));
        Ok(())
    })
}

/// # Safety
/// `config` must come from a `pwhac_config_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pwhac_config_free(config: *mut PwhacConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// `T(y)`; `*out_defined` is 1 when `Ω̂` was well defined and invertible.
///
/// # Safety
/// Handles must be live; `y` must hold `n` values; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn pwhac_test_statistic(
    problem: *const PwhacProblem,
    config: *const PwhacConfig,
    y: *const f64,
    n: usize,
    out_t: *mut f64,
    out_defined: *mut i32,
) -> PwhacStatus {
    guard(|| {
        let (problem, config) = (&handle(problem, "problem")?.0, &handle(config, "config")?.0);
        let (t_slot, d_slot) = (out(out_t, "out_t")?, out(out_defined, "out_defined")?);
        let y = DVector::from_column_slice(slice(y, n, "y")?);
        let res = test_statistic(problem, &y, config)?;
        *t_slot = res.t;
        *d_slot = i32::from(res.defined);
        Ok(())
    })
}

/// `T̄(y)` of the adjusted test, with the scenario number (1–4).
///
/// # Safety
/// As for [`pwhac_test_statistic`].
#[no_mangle]
pub unsafe extern "C" fn pwhac_adjusted_statistic(
    problem: *const PwhacProblem,
    config: *const PwhacConfig,
    y: *const f64,
    n: usize,
    out_t: *mut f64,
    out_defined: *mut i32,
    out_scenario: *mut i32,
) -> PwhacStatus {
    guard(|| {
        let (problem, config) = (&handle(problem, "problem")?.0, &handle(config, "config")?.0);
        let (t_slot, d_slot) = (out(out_t, "out_t")?, out(out_defined, "out_defined")?);
        let s_slot = out(out_scenario, "out_scenario")?;
        let y = DVector::from_column_slice(slice(y, n, "y")?);
        let adj = build_adjusted(problem, config)?;
        let scenario = adj.scenario.number();
        let res = TestProcedure::Adjusted(adj).statistic(&y)?;
        *t_slot = res.t;
        *d_slot = i32::from(res.defined);
        *s_slot = i32::from(scenario);
        Ok(())
    })
}

/// Breakdown verdict of the design for critical value `c`.
///
/// # Safety
/// Handles must be live; `out_verdict` writable.
#[no_mangle]
pub unsafe extern "C" fn pwhac_diagnose(
    problem: *const PwhacProblem,
    config: *const PwhacConfig,
    c: f64,
    out_verdict: *mut PwhacVerdict,
) -> PwhacStatus {
    guard(|| {
        let (problem, config) = (&handle(problem, "problem")?.0, &handle(config, "config")?.0);
        let slot = out(out_verdict, "out_verdict")?;
        *slot = diagnose(problem, config, c)?.verdict.into();
        Ok(())
    })
}

/// Critical value `C(δ)` over the AR(1) family `rho[0..n_rho]`, for the
/// adjusted test (`adjusted != 0`) or the plain one.
///
/// # Safety
/// Handles must be live; `rho` must hold `n_rho` values; `out_c` writable.
#[no_mangle]
pub unsafe extern "C" fn pwhac_calibrate(
    problem: *const PwhacProblem,
    config: *const PwhacConfig,
    delta: f64,
    reps: usize,
    seed: u64,
    rho: *const f64,
    n_rho: usize,
    adjusted: i32,
    out_c: *mut f64,
) -> PwhacStatus {
    guard(|| {
        let (problem, config) = (&handle(problem, "problem")?.0, &handle(config, "config")?.0);
        let slot = out(out_c, "out_c")?;
        let family = CovarianceFamily::ar1_grid(slice(rho, n_rho, "rho")?.to_vec())?;
        let mc = McConfig::new(reps, seed, family)?;
        let procedure = if adjusted != 0 {
            TestProcedure::Adjusted(build_adjusted(problem, config)?)
        } else {
            TestProcedure::Unadjusted { problem: problem.clone(), config: config.clone() }
        };
        *slot = calibrate_critical_value(&procedure, &mc, delta)?.critical_value;
        Ok(())
    })
}

/// Message of the last failing call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pwhac_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version, NUL-terminated, static.
#[no_mangle]
pub extern "C" fn pwhac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
