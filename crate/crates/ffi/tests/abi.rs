use std::ffi::{CStr, CString};
use std::ptr;

use qtraj_ffi::*;

fn take(s: *mut std::ffi::c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { qtraj_string_free(s) };
    out
}

fn gallery(name: &str, params: Option<&str>) -> *mut QtrajModel {
    let name = CString::new(name).unwrap();
    let params = params.map(|p| CString::new(p).unwrap());
    let mut m = ptr::null_mut();
    let st = unsafe {
        qtraj_model_gallery(name.as_ptr(), params.as_ref().map_or(ptr::null(), |p| p.as_ptr()), &mut m)
    };
    assert_eq!(st, QtrajStatus::Ok);
    m
}

#[test]
fn gallery_checks_round_trip_through_json() {
    let m = gallery("counterexample", None);
    let mut dim = 0;
    assert_eq!(unsafe { qtraj_model_dim(m, &mut dim) }, QtrajStatus::Ok);
    assert_eq!(dim, 3);

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { qtraj_check_erg(m, &mut s) }, QtrajStatus::Ok);
    let erg: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
    assert_eq!(erg["holds"], true);

    assert_eq!(unsafe { qtraj_check_pur(m, &mut s) }, QtrajStatus::Ok);
    let pur: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
    assert_eq!(pur["verdict"], "fails");

    assert_eq!(unsafe { qtraj_model_to_json(m, &mut s) }, QtrajStatus::Ok);
    let json = CString::new(take(s)).unwrap();
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { qtraj_model_from_json(json.as_ptr(), &mut back) }, QtrajStatus::Ok);
    unsafe {
        qtraj_model_free(back);
        qtraj_model_free(m);
    }
}

#[test]
fn evolve_master_reaches_thermal_state() {
    let m = gallery("thermal_jump", Some(r#"{"a": 2.0, "b": 1.0}"#));
    // ρ = e1 e1*, row-major interleaved
    let rho = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut out = [0.0; 8];
    assert_eq!(unsafe { qtraj_evolve_master(m, rho.as_ptr(), 30.0, out.as_mut_ptr()) }, QtrajStatus::Ok);
    assert!((out[0] - 2.0 / 3.0).abs() < 1e-10);
    assert!((out[6] - 1.0 / 3.0).abs() < 1e-10);
    unsafe { qtraj_model_free(m) };
}

#[test]
fn distances() {
    let x = [1.0, 0.0, 0.0, 0.0];
    let y = [0.6, 0.0, 0.0, 0.8];
    let mut d = -1.0;
    assert_eq!(unsafe { qtraj_fs_distance(x.as_ptr(), y.as_ptr(), 2, &mut d) }, QtrajStatus::Ok);
    assert!((d - 0.8).abs() < 1e-14);

    // two atoms vs the same two atoms, swapped
    let a = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let b = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let mut w = -1.0;
    let st = unsafe { qtraj_wasserstein1(a.as_ptr(), ptr::null(), 2, b.as_ptr(), ptr::null(), 2, 2, &mut w) };
    assert_eq!(st, QtrajStatus::Ok);
    assert!(w.abs() < 1e-14);

    let wa = [0.75, 0.25];
    let st = unsafe { qtraj_wasserstein1(a.as_ptr(), wa.as_ptr(), 2, b.as_ptr(), ptr::null(), 2, 2, &mut w) };
    assert_eq!(st, QtrajStatus::Ok);
    assert!((w - 0.25).abs() < 1e-12);
}

#[test]
fn errors_are_reported() {
    let mut m = ptr::null_mut();
    let bad = CString::new("{\"dim\": 2}").unwrap();
    assert_eq!(unsafe { qtraj_model_from_json(bad.as_ptr(), &mut m) }, QtrajStatus::Json);
    assert!(!qtraj_last_error().is_null());

    let name = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { qtraj_model_gallery(name.as_ptr(), ptr::null(), &mut m) },
        QtrajStatus::InvalidArgument
    );
    let msg = unsafe { CStr::from_ptr(qtraj_last_error()) }.to_str().unwrap();
    assert!(msg.contains("nope"));

    assert_eq!(unsafe { qtraj_model_dim(ptr::null(), ptr::null_mut()) }, QtrajStatus::NullPointer);

    let zero = [0.0; 4];
    let mut d = 0.0;
    assert_eq!(
        unsafe { qtraj_fs_distance(zero.as_ptr(), zero.as_ptr(), 2, &mut d) },
        QtrajStatus::InvalidArgument
    );
    // a successful call clears the message
    let x = [1.0, 0.0, 0.0, 0.0];
    assert_eq!(unsafe { qtraj_fs_distance(x.as_ptr(), x.as_ptr(), 2, &mut d) }, QtrajStatus::Ok);
    assert!(qtraj_last_error().is_null());
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/qtraj.h")).unwrap();
    for name in [
        "qtraj_model_from_json",
        "qtraj_model_gallery",
        "qtraj_model_free",
        "qtraj_check_erg",
        "qtraj_check_pur",
        "qtraj_evolve_master",
        "qtraj_fs_distance",
        "qtraj_wasserstein1",
        "qtraj_last_error",
        "qtraj_string_free",
        "QTRAJ_STATUS_OK",
        "typedef struct QtrajModel QtrajModel",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
