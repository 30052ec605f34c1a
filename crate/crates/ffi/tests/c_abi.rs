use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use flowlab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(flowlab_last_error()) }.to_string_lossy().into_owned()
}

fn field(toml: &str) -> (FlowlabStatus, *mut FlowlabField) {
    let c = CString::new(toml).unwrap();
    let mut f = ptr::null_mut();
    let s = unsafe { flowlab_field_from_toml(c.as_ptr(), &mut f) };
    (s, f)
}

#[test]
fn field_lifecycle_and_eval() {
    let (s, f) = field("base = { type = \"linear_torus\", slope = 0.5 }");
    assert_eq!(s, FlowlabStatus::Ok, "{}", last_error());
    assert!(!f.is_null());
    let mut w = [0.0; 2];
    let s = unsafe { flowlab_field_eval(f, 0, 0.2, 0.3, w.as_mut_ptr()) };
    assert_eq!(s, FlowlabStatus::Ok);
    assert!((w[1] / w[0] - 0.5).abs() < 1e-12);
    assert_eq!(last_error(), "");
    unsafe { flowlab_field_free(f) };
}

#[test]
fn classify_sphere_height() {
    let (_, f) = field("base = { type = \"gradient\", id = \"sphere_height\" }");
    let mut label = FlowlabLimitLabel::Undecided;
    let s = unsafe { flowlab_classify(f, 0, 0.3, 0.2, 1, 100.0, &mut label) };
    assert_eq!(s, FlowlabStatus::Ok, "{}", last_error());
    assert_eq!(label, FlowlabLimitLabel::NowhereDenseSing);
    unsafe { flowlab_field_free(f) };
}

#[test]
fn errors_set_status_and_message() {
    let (s, f) = field("base = { type = \"no_such_field\" }");
    assert_eq!(s, FlowlabStatus::Config);
    assert!(f.is_null());
    assert!(!last_error().is_empty());

    let (s, _) = field("base = { type = \"linear_torus\", slope = 0.5 }\n[[surgery]]\nkind = { type = \"fake_saddle\", point = { chart = 0, u = 0.5, v = 0.5 }, radius = -1.0 }");
    assert_eq!(s, FlowlabStatus::InvalidParameter);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { flowlab_field_from_toml(ptr::null(), &mut out) }, FlowlabStatus::NullPointer);

    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { flowlab_field_from_toml(bad.as_ptr().cast(), &mut out) }, FlowlabStatus::InvalidUtf8);

    let mut label = FlowlabLimitLabel::Undecided;
    assert_eq!(unsafe { flowlab_classify(ptr::null(), 0, 0.0, 0.0, 1, 10.0, &mut label) }, FlowlabStatus::NullPointer);

    let (_, f) = field("base = { type = \"linear_torus\", slope = 0.5 }");
    assert_eq!(unsafe { flowlab_classify(f, 0, 0.0, 0.0, 1, -1.0, &mut label) }, FlowlabStatus::InvalidParameter);
    unsafe { flowlab_field_free(f) };
    unsafe { flowlab_field_free(ptr::null_mut()) };
}

#[test]
fn run_config_returns_json() {
    let cfg = CString::new("task = \"tables\"\n[tables]\ncases = [\"1\"]\n").unwrap();
    let mut r = ptr::null_mut();
    let s = unsafe { flowlab_run(cfg.as_ptr(), &mut r) };
    assert_eq!(s, FlowlabStatus::Ok, "{}", last_error());
    let json = unsafe { CStr::from_ptr(flowlab_report_json(r)) }.to_str().unwrap().to_owned();
    unsafe { flowlab_report_free(r) };
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["result"]["passed"], 1);
    assert!(unsafe { flowlab_report_json(ptr::null()) }.is_null());
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(flowlab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/flowlab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["flowlab_field_from_toml", "flowlab_classify", "flowlab_run", "flowlab_last_error", "FLOWLAB_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, "#include \"flowlab.h\"\nint main(void) { FlowlabField *f = 0; return flowlab_field_from_toml(\"\", &f) == FLOWLAB_STATUS_OK; }\n").unwrap();
    let Ok(out) = Command::new("cc").arg("-fsyntax-only").arg("-I").arg(header.parent().unwrap()).arg(&src).output() else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
