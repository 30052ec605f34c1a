//! C ABI over the flowlab core.
//!
//! Every function returns a [`FlowlabStatus`]; on failure the message is kept
//! per thread and read with [`flowlab_last_error`]. Handles are opaque and
//! owned by the caller until passed to the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use flowlab::atlas::SurfacePoint;
use flowlab::config::{FieldConfig, RunConfig};
use flowlab::field::FieldSpec;
use flowlab::limits::{classify_limit, LimitLabel, Side, Tunables};
use flowlab::FlowError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidParameter = 4,
    OutOfAtlas = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowlabLimitLabel {
    NowhereDenseSing = 0,
    LimitCycle = 1,
    LimitQuasiCircuit = 2,
    LocallyDenseQSet = 3,
    TransverselyCantorQSet = 4,
    QuasiQSetInSingP = 5,
    SelfClosed = 6,
    Undecided = 7,
}

impl From<LimitLabel> for FlowlabLimitLabel {
    fn from(l: LimitLabel) -> Self {
        match l {
            LimitLabel::NowhereDenseSing => FlowlabLimitLabel::NowhereDenseSing,
            LimitLabel::LimitCycle => FlowlabLimitLabel::LimitCycle,
            LimitLabel::LimitQuasiCircuit => FlowlabLimitLabel::LimitQuasiCircuit,
            LimitLabel::LocallyDenseQSet => FlowlabLimitLabel::LocallyDenseQSet,
            LimitLabel::TransverselyCantorQSet => FlowlabLimitLabel::TransverselyCantorQSet,
            LimitLabel::QuasiQSetInSingP => FlowlabLimitLabel::QuasiQSetInSingP,
            LimitLabel::SelfClosed => FlowlabLimitLabel::SelfClosed,
            LimitLabel::Undecided => FlowlabLimitLabel::Undecided,
        }
    }
}

/// A vector field on a surface, possibly with surgeries applied.
pub struct FlowlabField {
    spec: FieldSpec,
}

/// The JSON report of one run.
pub struct FlowlabReport {
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &FlowError) -> FlowlabStatus {
    match e {
        FlowError::Config { .. } => FlowlabStatus::Config,
        FlowError::OutOfAtlas { .. } => FlowlabStatus::OutOfAtlas,
        FlowError::StiffnessAbort { .. } | FlowError::InsufficientData(_) => FlowlabStatus::Numerical,
        FlowError::Io(_) => FlowlabStatus::Io,
        _ => FlowlabStatus::InvalidParameter,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (FlowlabStatus, String)>) -> FlowlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FlowlabStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            FlowlabStatus::Panic
        }
    }
}

fn flow_err(e: FlowError) -> (FlowlabStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, (FlowlabStatus, String)> {
    if p.is_null() {
        return Err((FlowlabStatus::NullPointer, "null string".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (FlowlabStatus::InvalidUtf8, "string is not UTF-8".into()))
}

fn null_arg(name: &str) -> (FlowlabStatus, String) {
    (FlowlabStatus::NullPointer, format!("{name} is null"))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next flowlab call on the same thread.
#[no_mangle]
pub extern "C" fn flowlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn flowlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a field from a TOML fragment in the `[field]` layout:
/// `base = { type = ... }` plus optional `[[surgery]]` tables.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn flowlab_field_from_toml(toml: *const c_char, out: *mut *mut FlowlabField) -> FlowlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        *out = std::ptr::null_mut();
        let text = read_str(toml)?;
        let cfg: FieldConfig = toml::from_str(text).map_err(|e| (FlowlabStatus::Config, e.message().to_string()))?;
        let spec = cfg.build().map_err(flow_err)?;
        *out = Box::into_raw(Box::new(FlowlabField { spec }));
        Ok(())
    })
}

/// # Safety
/// `field` must come from [`flowlab_field_from_toml`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn flowlab_field_free(field: *mut FlowlabField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Field value at chart coordinates `(u, v)`, written to `out[0..2]`.
///
/// # Safety
/// `field` must be a live handle and `out` point to two doubles.
#[no_mangle]
pub unsafe extern "C" fn flowlab_field_eval(field: *const FlowlabField, chart: u8, u: f64, v: f64, out: *mut f64) -> FlowlabStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null_arg("field"))?;
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let w = f.spec.eval(&SurfacePoint::new(chart, u, v)).map_err(flow_err)?;
        *out = w[0];
        *out.add(1) = w[1];
        Ok(())
    })
}

/// Classifies the omega (`omega != 0`) or alpha limit set of the orbit
/// through `(u, v)` with default tunables and the given time budget.
///
/// # Safety
/// `field` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn flowlab_classify(
    field: *const FlowlabField,
    chart: u8,
    u: f64,
    v: f64,
    omega: i32,
    budget: f64,
    out: *mut FlowlabLimitLabel,
) -> FlowlabStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null_arg("field"))?;
        if out.is_null() {
            return Err(null_arg("out"));
        }
        if !(budget > 0.0 && budget.is_finite()) {
            return Err((FlowlabStatus::InvalidParameter, "budget must be positive and finite".into()));
        }
        let tun = Tunables { budget, ..Tunables::default() };
        let side = if omega != 0 { Side::Omega } else { Side::Alpha };
        let r = classify_limit(&f.spec, &SurfacePoint::new(chart, u, v), side, &tun).map_err(flow_err)?;
        *out = r.label.into();
        Ok(())
    })
}

/// Runs a complete configuration (same format as the command line tool)
/// single-threaded and returns its report. Output paths in the
/// configuration are ignored.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn flowlab_run(config: *const c_char, out: *mut *mut FlowlabReport) -> FlowlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        *out = std::ptr::null_mut();
        let cfg = RunConfig::parse(read_str(config)?).map_err(flow_err)?;
        let res = flowlab::report::run(&cfg, 1).map_err(flow_err)?;
        let json = CString::new(res.report).map_err(|_| (FlowlabStatus::Io, "report contains NUL".into()))?;
        *out = Box::into_raw(Box::new(FlowlabReport { json }));
        Ok(())
    })
}

/// JSON text of a report; valid while the report lives.
///
/// # Safety
/// `report` must be a live handle or null (which yields null).
#[no_mangle]
pub unsafe extern "C" fn flowlab_report_json(report: *const FlowlabReport) -> *const c_char {
    match report.as_ref() {
        Some(r) => r.json.as_ptr(),
        None => std::ptr::null(),
    }
}

/// # Safety
/// `report` must come from [`flowlab_run`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn flowlab_report_free(report: *mut FlowlabReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
