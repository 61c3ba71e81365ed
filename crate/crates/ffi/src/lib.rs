//! C ABI for the simulator core.
//!
//! Conventions:
//! - Handles (`AntcloudScenario`, `AntcloudReport`) are opaque; create them
//!   through this API and release them with the matching `_free` function.
//! - Functions returning `int32_t` yield `ANTCLOUD_OK` (0) on success and a
//!   negative `ANTCLOUD_ERR_*` code on failure; the failure detail is
//!   available through [`antcloud_last_error`] on the same thread.
//! - Strings crossing the boundary are NUL-terminated UTF-8. Strings
//!   returned as `char*` are owned by the caller and must be released with
//!   [`antcloud_string_free`]; strings returned as `const char*` are
//!   borrowed and must not be freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use antcloud::cli::run_scenario;
use antcloud::config::{parse_scenario, Scenario};
use antcloud::engine::Policy;
use antcloud::metrics::MetricsReport;

/// Success.
pub const ANTCLOUD_OK: i32 = 0;
/// A required pointer argument was NULL.
pub const ANTCLOUD_ERR_NULL_ARG: i32 = -1;
/// A string argument was not valid UTF-8.
pub const ANTCLOUD_ERR_UTF8: i32 = -2;
/// The scenario text failed to parse or validate.
pub const ANTCLOUD_ERR_PARSE: i32 = -3;
/// An argument value was outside its domain.
pub const ANTCLOUD_ERR_BAD_ARG: i32 = -4;
/// The simulation aborted internally.
pub const ANTCLOUD_ERR_INTERNAL: i32 = -5;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl Into<Vec<u8>>) {
    let message = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::default());
}

/// An opaque, resolved scenario ready to run.
pub struct AntcloudScenario {
    inner: Scenario,
}

/// An opaque finished-run report.
pub struct AntcloudReport {
    inner: MetricsReport,
}

/// Library version as a borrowed, NUL-terminated string. Never freed.
#[no_mangle]
pub extern "C" fn antcloud_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread, as a borrowed,
/// NUL-terminated string. Valid until the next failing call on the same
/// thread; empty when the last call succeeded.
#[no_mangle]
pub extern "C" fn antcloud_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse and resolve a scenario from TOML text.
///
/// On success stores a new handle in `*out` and returns `ANTCLOUD_OK`; the
/// caller owns the handle and must release it with
/// [`antcloud_scenario_free`]. Trace-file workloads resolve relative to the
/// process working directory.
///
/// # Safety
/// `toml_text` must point to a NUL-terminated string and `out` to a valid
/// pointer slot; both must stay valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn antcloud_scenario_parse(
    toml_text: *const c_char,
    out: *mut *mut AntcloudScenario,
) -> i32 {
    if toml_text.is_null() || out.is_null() {
        set_last_error("toml_text and out must not be NULL");
        return ANTCLOUD_ERR_NULL_ARG;
    }
    // SAFETY: caller guarantees a NUL-terminated string.
    let text = match unsafe { CStr::from_ptr(toml_text) }.to_str() {
        Ok(text) => text,
        Err(_) => {
            set_last_error("scenario text is not valid UTF-8");
            return ANTCLOUD_ERR_UTF8;
        }
    };
    let parsed = catch_unwind(|| parse_scenario(text, None));
    match parsed {
        Ok(Ok(scenario)) => {
            clear_last_error();
            // SAFETY: out was checked non-NULL above.
            unsafe {
                *out = Box::into_raw(Box::new(AntcloudScenario { inner: scenario }));
            }
            ANTCLOUD_OK
        }
        Ok(Err(e)) => {
            set_last_error(e.to_string());
            ANTCLOUD_ERR_PARSE
        }
        Err(_) => {
            set_last_error("internal panic while parsing scenario");
            ANTCLOUD_ERR_INTERNAL
        }
    }
}

/// Override the scenario's seed.
///
/// # Safety
/// `scenario` must be a live handle from [`antcloud_scenario_parse`].
#[no_mangle]
pub unsafe extern "C" fn antcloud_scenario_set_seed(
    scenario: *mut AntcloudScenario,
    seed: u64,
) -> i32 {
    let Some(scenario) = (unsafe { scenario.as_mut() }) else {
        set_last_error("scenario must not be NULL");
        return ANTCLOUD_ERR_NULL_ARG;
    };
    scenario.inner.params.seed = seed;
    clear_last_error();
    ANTCLOUD_OK
}

/// Override the scenario's policy: "ant", "round_robin", or "first_fit".
///
/// # Safety
/// `scenario` must be a live handle and `policy` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn antcloud_scenario_set_policy(
    scenario: *mut AntcloudScenario,
    policy: *const c_char,
) -> i32 {
    let Some(scenario) = (unsafe { scenario.as_mut() }) else {
        set_last_error("scenario must not be NULL");
        return ANTCLOUD_ERR_NULL_ARG;
    };
    if policy.is_null() {
        set_last_error("policy must not be NULL");
        return ANTCLOUD_ERR_NULL_ARG;
    }
    // SAFETY: caller guarantees a NUL-terminated string.
    let name = match unsafe { CStr::from_ptr(policy) }.to_str() {
        Ok(name) => name,
        Err(_) => {
            set_last_error("policy is not valid UTF-8");
            return ANTCLOUD_ERR_UTF8;
        }
    };
    let parsed = match name {
        "ant" => Policy::Ant,
        "round_robin" => Policy::RoundRobin,
        "first_fit" => Policy::FirstFit,
        other => {
            set_last_error(format!(
                "unknown policy `{other}` (expected ant, round_robin, or first_fit)"
            ));
            return ANTCLOUD_ERR_BAD_ARG;
        }
    };
    scenario.inner.params.policy = parsed;
    clear_last_error();
    ANTCLOUD_OK
}

/// Release a scenario handle. NULL is a no-op.
///
/// # Safety
/// `scenario` must be NULL or a live handle, and must not be used after.
#[no_mangle]
pub unsafe extern "C" fn antcloud_scenario_free(scenario: *mut AntcloudScenario) {
    if !scenario.is_null() {
        // SAFETY: the handle was created by Box::into_raw in this module.
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Run a scenario to its horizon. The scenario handle is not consumed and
/// can be rerun (identical seeds reproduce identical reports). On success
/// stores a new report handle in `*out`, owned by the caller.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer slot.
#[no_mangle]
pub unsafe extern "C" fn antcloud_run(
    scenario: *const AntcloudScenario,
    out: *mut *mut AntcloudReport,
) -> i32 {
    let Some(scenario) = (unsafe { scenario.as_ref() }) else {
        set_last_error("scenario must not be NULL");
        return ANTCLOUD_ERR_NULL_ARG;
    };
    if out.is_null() {
        set_last_error("out must not be NULL");
        return ANTCLOUD_ERR_NULL_ARG;
    }
    let result = catch_unwind(AssertUnwindSafe(|| run_scenario(scenario.inner.clone())));
    match result {
        Ok(report) => {
            clear_last_error();
            // SAFETY: out was checked non-NULL above.
            unsafe {
                *out = Box::into_raw(Box::new(AntcloudReport { inner: report }));
            }
            ANTCLOUD_OK
        }
        Err(_) => {
            set_last_error("internal panic while running scenario");
            ANTCLOUD_ERR_INTERNAL
        }
    }
}

/// Serialize a report as pretty JSON. Returns a caller-owned string
/// (release with [`antcloud_string_free`]), or NULL if `report` is NULL.
///
/// # Safety
/// `report` must be NULL or a live handle from [`antcloud_run`].
#[no_mangle]
pub unsafe extern "C" fn antcloud_report_to_json(report: *const AntcloudReport) -> *mut c_char {
    let Some(report) = (unsafe { report.as_ref() }) else {
        set_last_error("report must not be NULL");
        return ptr::null_mut();
    };
    let json = report.inner.to_json();
    clear_last_error();
    CString::new(json)
        .expect("JSON text contains no NUL bytes")
        .into_raw()
}

/// Total fleet energy over the run, joules. NaN if `report` is NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn antcloud_report_fleet_energy_j(report: *const AntcloudReport) -> f64 {
    match unsafe { report.as_ref() } {
        Some(report) => report.inner.energy.fleet_j,
        None => f64::NAN,
    }
}

/// VM-seconds spent in a critical service band. NaN if `report` is NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn antcloud_report_violation_vm_seconds(
    report: *const AntcloudReport,
) -> f64 {
    match unsafe { report.as_ref() } {
        Some(report) => report.inner.sla.violation_vm_seconds,
        None => f64::NAN,
    }
}

/// Release a report handle. NULL is a no-op.
///
/// # Safety
/// `report` must be NULL or a live handle, and must not be used after.
#[no_mangle]
pub unsafe extern "C" fn antcloud_report_free(report: *mut AntcloudReport) {
    if !report.is_null() {
        // SAFETY: the handle was created by Box::into_raw in this module.
        drop(unsafe { Box::from_raw(report) });
    }
}

/// Release a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a string obtained from this library, and must not be
/// used after.
#[no_mangle]
pub unsafe extern "C" fn antcloud_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: the string was created by CString::into_raw in this module.
        drop(unsafe { CString::from_raw(s) });
    }
}
