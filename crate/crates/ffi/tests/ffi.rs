use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use twistop_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tw_last_error()) }.to_string_lossy().into_owned()
}

fn builtin(name: &str) -> *mut TwMap {
    let name = CString::new(name).unwrap();
    let mut map = ptr::null_mut();
    assert_eq!(unsafe { tw_map_builtin(name.as_ptr(), &mut map) }, TwStatus::Ok);
    map
}

fn ulam(map: *const TwMap, shape: &[usize]) -> *mut TwMatrix {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tw_ulam_build(map, shape.as_ptr(), shape.len(), &mut m) }, TwStatus::Ok, "{}", last_error());
    m
}

fn digit(n: usize) -> Vec<f64> {
    (0..n).map(|j| if j < n / 2 { 0.0 } else { 1.0 }).collect()
}

#[test]
fn map_handles() {
    let map = builtin("doubling");
    let mut d = 0;
    assert_eq!(unsafe { tw_map_dim(map, &mut d) }, TwStatus::Ok);
    assert_eq!(d, 1);
    let mut y = [0.0];
    assert_eq!(unsafe { tw_map_evaluate(map, [0.75].as_ptr(), y.as_mut_ptr()) }, TwStatus::Ok);
    assert_eq!(y, [0.5]);
    assert_eq!(unsafe { tw_map_evaluate(map, [0.5].as_ptr(), y.as_mut_ptr()) }, TwStatus::BoundaryPoint);
    assert!(!last_error().is_empty());
    let (mut s, mut big_y, mut eta) = (0.0, 0u64, 0.0);
    assert_eq!(unsafe { tw_map_regularity(map, &mut s, &mut big_y, &mut eta) }, TwStatus::Ok);
    assert_eq!((s, big_y), (0.5, 2));
    assert!((eta - 4.5).abs() < 1e-12);
    unsafe { tw_map_free(map) };
    unsafe { tw_map_free(ptr::null_mut()) };
}

#[test]
fn errors_are_reported() {
    let name = CString::new("tent").unwrap();
    let mut map = ptr::null_mut();
    assert_eq!(unsafe { tw_map_builtin(name.as_ptr(), &mut map) }, TwStatus::UnknownMap);
    assert!(map.is_null());
    assert!(last_error().contains("tent"));
    assert_eq!(unsafe { tw_map_builtin(ptr::null(), &mut map) }, TwStatus::NullPointer);
    let mut d = 0;
    assert_eq!(unsafe { tw_map_dim(ptr::null(), &mut d) }, TwStatus::NullPointer);

    let identity = builtin("identity");
    let m = ulam(identity, &[8]);
    let mut c = 0.0;
    let phi = digit(8);
    assert_eq!(unsafe { tw_rate(m, phi.as_ptr(), 8, 0.1, &mut c) }, TwStatus::NotMixing);
    assert_eq!(unsafe { tw_lambda(m, phi.as_ptr(), 7, 0.0, &mut c) }, TwStatus::InvalidArgument);
    unsafe {
        tw_matrix_free(m);
        tw_map_free(identity);
    }
}

#[test]
fn explicit_map_from_json() {
    let json = CString::new(
        r#"{"phase_space":{"lower":[0],"upper":[1]},"branches":[
            {"domain":{"lower":[0],"upper":[0.5]},"linear":[2],"offset":[0]},
            {"domain":{"lower":[0.5],"upper":[1]},"linear":[-2],"offset":[2]}]}"#,
    )
    .unwrap();
    let mut map = ptr::null_mut();
    assert_eq!(unsafe { tw_map_from_json(json.as_ptr(), 1.0, &mut map) }, TwStatus::Ok, "{}", last_error());
    let mut y = [0.0];
    assert_eq!(unsafe { tw_map_evaluate(map, [0.75].as_ptr(), y.as_mut_ptr()) }, TwStatus::Ok);
    assert!((y[0] - 0.5).abs() < 1e-15);
    unsafe { tw_map_free(map) };

    let overlap = CString::new(
        r#"{"phase_space":{"lower":[0],"upper":[1]},"branches":[
            {"domain":{"lower":[0],"upper":[0.6]},"linear":[2],"offset":[0]},
            {"domain":{"lower":[0.4],"upper":[1]},"linear":[2],"offset":[-1]}]}"#,
    )
    .unwrap();
    assert_eq!(unsafe { tw_map_from_json(overlap.as_ptr(), 1.0, &mut map) }, TwStatus::InvalidMap);
    let named = CString::new(r#""beta-2.5""#).unwrap();
    assert_eq!(unsafe { tw_map_from_json(named.as_ptr(), 0.5, &mut map) }, TwStatus::Ok);
    unsafe { tw_map_free(map) };
}

#[test]
fn doubling_oracles_through_the_c_interface() {
    let map = builtin("doubling");
    let m = ulam(map, &[64]);
    let mut n = 0;
    assert_eq!(unsafe { tw_matrix_dim(m, &mut n) }, TwStatus::Ok);
    assert_eq!(n, 64);

    let ones = vec![1.0; n];
    let mut out = vec![0.0; n];
    assert_eq!(unsafe { tw_matrix_apply(m, ones.as_ptr(), n, out.as_mut_ptr()) }, TwStatus::Ok);
    assert!(out.iter().all(|&v| (v - 1.0).abs() < 1e-14));

    let mut lambda = 0.0;
    assert_eq!(unsafe { tw_invariant_density(m, out.as_mut_ptr(), n, &mut lambda) }, TwStatus::Ok);
    assert!((lambda - 1.0).abs() < 1e-12);
    assert!(out.iter().all(|&v| (v - 1.0).abs() < 1e-10));

    let phi: Vec<f64> = digit(n).iter().map(|v| v - 0.5).collect();
    for theta in [-2.0, -0.5, 0.0, 1.0, 2.0] {
        let mut l = 0.0;
        assert_eq!(unsafe { tw_lambda(m, phi.as_ptr(), n, theta, &mut l) }, TwStatus::Ok);
        assert!((l - (theta / 2.0f64).cosh()).abs() < 1e-10);
    }

    let raw = digit(n);
    let mut sigma2 = 0.0;
    assert_eq!(unsafe { tw_green_kubo(m, raw.as_ptr(), n, &mut sigma2) }, TwStatus::Ok);
    assert!((sigma2 - 0.25).abs() < 1e-8);

    let mut c = 0.0;
    assert_eq!(unsafe { tw_rate(m, raw.as_ptr(), n, 0.1, &mut c) }, TwStatus::Ok, "{}", last_error());
    assert!((c - 0.0201355).abs() < 1e-6, "{c}");
    unsafe {
        tw_matrix_free(m);
        tw_map_free(map);
    }
}

#[test]
fn run_config_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut exit = -1;

    let ok = CString::new(r#"{"map":"doubling","resolution":[32],"monte_carlo":{"samples":2000,"clt_samples":2000}}"#).unwrap();
    assert_eq!(unsafe { tw_run_config(ok.as_ptr(), out.as_ptr(), &mut exit) }, TwStatus::Ok, "{}", last_error());
    assert_eq!(exit, 0);
    assert!(dir.path().join("summary.json").exists());

    let refused = CString::new(r#"{"map":"identity","resolution":[16]}"#).unwrap();
    assert_eq!(unsafe { tw_run_config(refused.as_ptr(), out.as_ptr(), &mut exit) }, TwStatus::NotMixing);
    assert_eq!(exit, 2);
    assert!(last_error().contains("spectrum"));

    let bad = CString::new(r#"{"map":"doubling","resolution":[0]}"#).unwrap();
    assert_eq!(unsafe { tw_run_config(bad.as_ptr(), out.as_ptr(), &mut exit) }, TwStatus::SchemaError);
    assert_eq!(exit, 1);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(tw_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/twistop.h")).unwrap();
    for name in [
        "typedef struct TwMap TwMap;",
        "typedef struct TwMatrix TwMatrix;",
        "TW_STATUS_NOT_MIXING = 10",
        "tw_last_error(void)",
        "tw_map_builtin(",
        "tw_map_from_json(",
        "tw_map_evaluate(",
        "tw_ulam_build(",
        "tw_invariant_density(",
        "tw_lambda(",
        "tw_green_kubo(",
        "tw_rate(",
        "tw_run_config(",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

/// Compiles and runs a small C program against the header and static
/// library when a C compiler is on the path.
#[test]
fn c_program_links_against_static_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libtwistop_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <math.h>
#include <stdio.h>
#include "twistop.h"
int main(void) {
    TwMap *map = NULL;
    TwMatrix *k = NULL;
    size_t shape[1] = {16};
    double phi[16], lambda = 0.0;
    if (tw_map_builtin("doubling", &map) != TW_STATUS_OK) return 1;
    if (tw_ulam_build(map, shape, 1, &k) != TW_STATUS_OK) return 2;
    for (int j = 0; j < 16; j++) phi[j] = j < 8 ? -0.5 : 0.5;
    if (tw_lambda(k, phi, 16, 1.0, &lambda) != TW_STATUS_OK) return 3;
    if (fabs(lambda - cosh(0.5)) > 1e-10) return 4;
    if (tw_map_builtin("tent", &map) != TW_STATUS_UNKNOWN_MAP) return 5;
    printf("%s\n", tw_last_error());
    tw_matrix_free(k);
    tw_map_free(map);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).contains("tent"));
}
