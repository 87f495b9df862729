use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use scorelab_ffi::*;

const MIX: &str = r#"
family = "mixture"

[[components]]
weight = 0.4
mean = [-1.0]
variance = 0.25

[[components]]
weight = 0.6
mean = [1.0]
variance = 0.5
"#;

fn new_density(text: &str) -> (ScorelabStatus, *mut ScorelabDensity) {
    let c = CString::new(text).unwrap();
    let mut h = ptr::null_mut();
    let st = unsafe { scorelab_density_from_spec(c.as_ptr(), &mut h) };
    (st, h)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(scorelab_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn gaussian_score_through_handle() {
    let (st, h) = new_density("family = \"mixture\"\n[[components]]\nweight = 1.0\nmean = [0.0, 0.0]\nvariance = 1.0\n");
    assert_eq!(st, ScorelabStatus::Ok);
    let mut dim = 0;
    assert_eq!(unsafe { scorelab_density_dim(h, &mut dim) }, ScorelabStatus::Ok);
    assert_eq!(dim, 2);
    let x = [0.3, -1.2];
    let mut s = [0.0; 2];
    assert_eq!(unsafe { scorelab_score(h, 0.5, x.as_ptr(), 2, s.as_mut_ptr()) }, ScorelabStatus::Ok);
    assert!((s[0] + 0.3).abs() < 1e-12 && (s[1] - 1.2).abs() < 1e-12);
    let mut j = [0.0; 4];
    assert_eq!(unsafe { scorelab_score_jacobian(h, 0.5, x.as_ptr(), 2, j.as_mut_ptr()) }, ScorelabStatus::Ok);
    assert!((j[0] + 1.0).abs() < 1e-12 && j[1].abs() < 1e-12 && (j[3] + 1.0).abs() < 1e-12);
    let mut lp = 0.0;
    assert_eq!(unsafe { scorelab_log_density(h, x.as_ptr(), 2, &mut lp) }, ScorelabStatus::Ok);
    let expect = -0.5 * (0.09 + 1.44) - (2.0 * std::f64::consts::PI).ln();
    assert!((lp - expect).abs() < 1e-12);
    unsafe { scorelab_density_free(h) };
}

#[test]
fn mixture_jacobian_is_symmetric_with_real_eigs() {
    let (st, h) = new_density(MIX);
    assert_eq!(st, ScorelabStatus::Ok);
    let x = [0.2];
    let mut j = [0.0];
    assert_eq!(unsafe { scorelab_score_jacobian(h, 0.1, x.as_ptr(), 1, j.as_mut_ptr()) }, ScorelabStatus::Ok);
    let mut ev = [0.0];
    assert_eq!(unsafe { scorelab_sym_eigs(j.as_ptr(), 1, ev.as_mut_ptr()) }, ScorelabStatus::Ok);
    assert_eq!(ev[0], j[0]);
    unsafe { scorelab_density_free(h) };
}

#[test]
fn errors_map_to_status_codes() {
    let (st, h) = new_density("family = \"mixture\"\ncomponents = 3\n");
    assert_eq!(st, ScorelabStatus::Config);
    assert!(h.is_null());
    assert!(last_error().contains("config error"));

    let (_, h) = new_density(MIX);
    let x = [0.0, 0.0];
    let mut s = [0.0; 2];
    assert_eq!(unsafe { scorelab_score(h, 0.5, x.as_ptr(), 2, s.as_mut_ptr()) }, ScorelabStatus::InvalidInput);
    assert_eq!(unsafe { scorelab_score(h, -1.0, x.as_ptr(), 1, s.as_mut_ptr()) }, ScorelabStatus::Domain);
    assert_eq!(unsafe { scorelab_score(h, 0.5, x.as_ptr(), 1, ptr::null_mut()) }, ScorelabStatus::NullPointer);
    let mut w = 0.0;
    assert_eq!(unsafe { scorelab_wasserstein2_1d(x.as_ptr(), 0, x.as_ptr(), 1, &mut w) }, ScorelabStatus::InvalidInput);
    unsafe { scorelab_density_free(h) };
    unsafe { scorelab_density_free(ptr::null_mut()) };
}

#[test]
fn wasserstein_of_shifted_samples() {
    let a: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
    let b: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
    let mut w = 0.0;
    assert_eq!(unsafe { scorelab_wasserstein2_1d(a.as_ptr(), a.len(), b.as_ptr(), b.len(), &mut w) }, ScorelabStatus::Ok);
    assert!((w - 0.5).abs() < 1e-12);
}

#[test]
fn header_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/scorelab.h");
    let text = std::fs::read_to_string(&header).expect("generated header");
    for f in ["scorelab_density_from_spec", "scorelab_score_jacobian", "scorelab_last_error", "SCORELAB_STATUS_PANIC"] {
        assert!(text.contains(f), "header lacks {f}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"]).arg(&header).output() else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
