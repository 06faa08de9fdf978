use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rt_spectra_ffi::*;

const REFERENCE: &str = r#"{
  "physics": {
    "g": 1.0, "theta": 0.2,
    "mu_plus": 0.1, "mu_minus": 0.1, "zeta_plus": 0.1, "zeta_minus": 0.1,
    "h_minus": -1.0, "h_plus": 1.0,
    "p_plus": { "family": "affine", "slope": 1.0, "offset": 0.0 },
    "p_minus": { "family": "affine", "slope": 2.0, "offset": 0.0 },
    "rho_minus_at_interface": 1.0
  },
  "numerics": { "elements_per_layer": 16 },
  "scan": { "samples": 12, "refine_iterations": 6 }
}"#;

fn last_error() -> String {
    let p = rts_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(json: &str) -> (RtsStatus, *mut RtsConfig) {
    let text = CString::new(json).unwrap();
    let mut cfg = ptr::null_mut();
    let status = unsafe { rts_config_from_json(text.as_ptr(), &mut cfg) };
    (status, cfg)
}

#[test]
fn reference_round_trip() {
    let (status, cfg) = config(REFERENCE);
    assert_eq!(status, RtsStatus::Ok);
    assert!(rts_last_error().is_null());
    unsafe {
        let mut xi_c = 0.0;
        assert_eq!(rts_critical_frequency(cfg, &mut xi_c), RtsStatus::Ok);
        assert!((xi_c - 5f64.sqrt()).abs() < 1e-6);

        let (mut lambda, mut unstable) = (0.0, 0);
        assert_eq!(rts_solve_lambda(cfg, 1.0, 0.0, &mut lambda, &mut unstable), RtsStatus::Ok);
        assert_eq!(unstable, 1);
        assert!(lambda > 0.1 && lambda < 0.3);
        assert_eq!(rts_solve_lambda(cfg, 3.0, 0.0, &mut lambda, &mut unstable), RtsStatus::Ok);
        assert_eq!((unstable, lambda), (0, 0.0));

        let mut curve = ptr::null_mut();
        assert_eq!(rts_dispersion_new(cfg, &mut curve), RtsStatus::Ok);
        let n = rts_dispersion_len(curve);
        assert!(n >= 12);
        let mut best = 0.0f64;
        for i in 0..n {
            let mut s = RtsSample::default();
            assert_eq!(rts_dispersion_sample(curve, i, &mut s), RtsStatus::Ok);
            best = best.max(s.lambda);
        }
        let mut s = RtsSample::default();
        assert_eq!(rts_dispersion_sample(curve, n, &mut s), RtsStatus::Domain);
        assert!(last_error().contains("out of range"));

        let mut summary = std::mem::zeroed::<RtsSummary>();
        assert_eq!(rts_dispersion_summary(curve, &mut summary), RtsStatus::Ok);
        assert_eq!(summary.verdict, RtsVerdict::Unstable);
        assert_eq!(summary.lambda_max, best);
        assert!(summary.rayleigh.is_nan());
        assert!(summary.c7 > 0.0);

        let mut t = 0.0;
        assert_eq!(rts_escape_time(summary.c7, 1.0, 1e-3, &mut t), RtsStatus::Ok);
        assert!((t - 1e3f64.ln() / summary.c7).abs() < 1e-12 * t);

        rts_dispersion_free(curve);
        rts_config_free(cfg);
    }
}

#[test]
fn config_errors_are_reported() {
    let (status, cfg) = config(&REFERENCE.replace("\"mu_plus\": 0.1", "\"mu_plus\": -0.1"));
    assert_eq!(status, RtsStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("mu_plus"));

    let (status, _) = config("{ not json");
    assert_eq!(status, RtsStatus::Config);
}

#[test]
fn null_pointers_and_domain_errors() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(rts_config_from_json(ptr::null(), &mut out), RtsStatus::NullPointer);
        let mut x = 0.0;
        assert_eq!(rts_critical_frequency(ptr::null(), &mut x), RtsStatus::NullPointer);
        assert_eq!(rts_escape_time(1.0, 1.0, 1e-3, ptr::null_mut()), RtsStatus::NullPointer);
        assert_eq!(rts_escape_time(-1.0, 1.0, 1e-3, &mut x), RtsStatus::Domain);
        assert_eq!(rts_escape_time(1.0, 1.0, 2.0, &mut x), RtsStatus::Domain);
        assert_eq!(rts_dispersion_len(ptr::null()), 0);
        rts_config_free(ptr::null_mut());
        rts_dispersion_free(ptr::null_mut());
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rt_spectra.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["rts_config_from_json", "rts_solve_lambda", "rts_dispersion_summary", "rts_last_error"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99"]).arg(&header).output() else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
