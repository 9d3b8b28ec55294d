//! C ABI for the simulator.
//!
//! Objects cross the boundary as opaque handles created and destroyed by
//! this library. Fallible calls return a [`HyperentStatus`]; on failure the
//! message is kept per thread and read with [`hyperent_last_error`].
//! Strings returned as `char *` are owned by the caller and released with
//! [`hyperent_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hyperent::afc_memory::{afc_efficiency, CombSpec, PeakShape};
use hyperent::experiment::{run_scenario, Artifact, ExperimentConfig, RunReport, Scenario};
use hyperent::Error;

/// Status codes of fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperentStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Structural = 4,
    Config = 5,
    Fit = 6,
    Io = 7,
    Parse = 8,
    UnknownScenario = 9,
    OutOfRange = 10,
    Panic = 11,
}

/// Opaque experiment configuration.
pub struct HyperentConfig {
    inner: ExperimentConfig,
}

/// Opaque result of a scenario run.
pub struct HyperentReport {
    report: RunReport,
    artifacts: Vec<Artifact>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: HyperentStatus, msg: &str) -> HyperentStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> HyperentStatus {
    let status = match e {
        Error::Domain(_) => HyperentStatus::Domain,
        Error::Structural(_) => HyperentStatus::Structural,
        Error::Config(_) => HyperentStatus::Config,
        Error::Fit(_) => HyperentStatus::Fit,
        Error::Io(_) => HyperentStatus::Io,
        Error::Parse(_) => HyperentStatus::Parse,
    };
    fail(status, &e.to_string())
}

fn guarded(f: impl FnOnce() -> HyperentStatus) -> HyperentStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(HyperentStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, HyperentStatus> {
    if p.is_null() {
        return Err(fail(HyperentStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(HyperentStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn into_c(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hyperent_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hyperent_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Shipped default configuration. Never NULL.
#[no_mangle]
pub extern "C" fn hyperent_config_default() -> *mut HyperentConfig {
    Box::into_raw(Box::new(HyperentConfig { inner: ExperimentConfig::default() }))
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hyperent_config_from_toml(toml: *const c_char, out: *mut *mut HyperentConfig) -> HyperentStatus {
    guarded(|| {
        if out.is_null() {
            return fail(HyperentStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_toml_str(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(HyperentConfig { inner }));
                HyperentStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `cfg` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn hyperent_config_free(cfg: *mut HyperentConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Configuration serialized as TOML, or NULL for a NULL handle.
///
/// # Safety
/// `cfg` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hyperent_config_to_toml(cfg: *const HyperentConfig) -> *mut c_char {
    cfg.as_ref().map_or(ptr::null_mut(), |c| into_c(&c.inner.to_toml_string()))
}

/// Hex SHA-256 of the canonical configuration, or NULL for a NULL handle.
///
/// # Safety
/// `cfg` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hyperent_config_digest(cfg: *const HyperentConfig) -> *mut c_char {
    cfg.as_ref().map_or(ptr::null_mut(), |c| into_c(&c.inner.digest()))
}

/// Sets the coincidence target of each CHSH setting.
///
/// # Safety
/// `cfg` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hyperent_config_set_target_coincidences(cfg: *mut HyperentConfig, target: u64) -> HyperentStatus {
    let Some(c) = cfg.as_mut() else {
        return fail(HyperentStatus::NullPointer, "null configuration");
    };
    if target == 0 {
        return fail(HyperentStatus::OutOfRange, "target must be positive");
    }
    c.inner.run.target_coincidences_per_setting = target;
    HyperentStatus::Ok
}

/// Runs the scenario named `scenario` (`simulate`, `scan-phase`, `scan-hwp`,
/// `chsh`, `table1`, `comb-spectrum`, `efficiency`, `crosscheck`).
///
/// # Safety
/// `cfg` must be a live handle, `scenario` a NUL-terminated string and
/// `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hyperent_run(cfg: *const HyperentConfig, scenario: *const c_char, seed: u64, out: *mut *mut HyperentReport) -> HyperentStatus {
    guarded(|| {
        if out.is_null() {
            return fail(HyperentStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let Some(c) = cfg.as_ref() else {
            return fail(HyperentStatus::NullPointer, "null configuration");
        };
        let name = match read_str(scenario) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let Some(sc) = Scenario::from_id(name) else {
            return fail(HyperentStatus::UnknownScenario, &format!("unknown scenario '{name}'"));
        };
        match run_scenario(&c.inner, sc, seed) {
            Ok((report, artifacts)) => {
                *out = Box::into_raw(Box::new(HyperentReport { report, artifacts }));
                HyperentStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `report` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn hyperent_report_free(report: *mut HyperentReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Report as pretty-printed JSON, or NULL for a NULL handle.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hyperent_report_json(report: *const HyperentReport) -> *mut c_char {
    report.as_ref().map_or(ptr::null_mut(), |r| into_c(&r.report.to_json()))
}

/// Number of CSV artifacts; 0 for a NULL handle.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hyperent_report_artifact_count(report: *const HyperentReport) -> usize {
    report.as_ref().map_or(0, |r| r.artifacts.len())
}

/// Name of artifact `index`, or NULL when out of range.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hyperent_report_artifact_name(report: *const HyperentReport, index: usize) -> *mut c_char {
    report.as_ref().and_then(|r| r.artifacts.get(index)).map_or(ptr::null_mut(), |a| into_c(&a.name))
}

/// CSV contents of artifact `index`, or NULL when out of range.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hyperent_report_artifact_contents(report: *const HyperentReport, index: usize) -> *mut c_char {
    report.as_ref().and_then(|r| r.artifacts.get(index)).map_or(ptr::null_mut(), |a| into_c(&a.contents))
}

/// Comb peak shape selector for [`hyperent_afc_efficiency`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperentPeakShape {
    Gaussian = 0,
    Square = 1,
}

/// Storage efficiency of a comb with peak depth `d`, finesse `finesse` and
/// background depth `d0`. Teeth sit every 20 MHz over 600 MHz.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hyperent_afc_efficiency(d: f64, finesse: f64, d0: f64, shape: HyperentPeakShape, out: *mut f64) -> HyperentStatus {
    guarded(|| {
        if out.is_null() {
            return fail(HyperentStatus::NullPointer, "null output pointer");
        }
        let comb = CombSpec {
            peak_shape: match shape {
                HyperentPeakShape::Gaussian => PeakShape::Gaussian,
                HyperentPeakShape::Square => PeakShape::Square,
            },
            finesse,
            d_peak: d,
            d_background: d0,
            ..hyperent::afc_memory::measured_comb()
        };
        if let Err(e) = comb.validate() {
            return from_error(&e);
        }
        *out = afc_efficiency(&comb);
        HyperentStatus::Ok
    })
}
