use std::ffi::{CStr, CString};
use std::ptr;

use pwhac_ffi::*;

fn last_error() -> String {
    let p = pwhac_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// 40 × 2 design with a deterministic, non-trivial second column.
fn design(n: usize) -> Vec<f64> {
    (0..n).flat_map(|t| [(t as f64 * 0.37).sin() + 0.1 * t as f64, (t as f64 * 1.3).cos()]).collect()
}

unsafe fn problem(x: &[f64], n: usize, r: &[f64], rv: &[f64]) -> *mut PwhacProblem {
    let mut h = ptr::null_mut();
    assert_eq!(pwhac_problem_new(x.as_ptr(), n, 2, r.as_ptr(), rv.as_ptr(), 1, &mut h), PwhacStatus::Ok, "{}", last_error());
    h
}

unsafe fn nw_config() -> *mut PwhacConfig {
    let mut c = ptr::null_mut();
    assert_eq!(pwhac_config_new(PwhacKernel::Bartlett, PwhacRule::NeweyWest, 1, 0.0, &mut c), PwhacStatus::Ok);
    c
}

#[test]
fn statistic_matches_library() {
    let n = 40;
    let x = design(n);
    let y: Vec<f64> = (0..n).map(|t| (t as f64 * 0.71).sin() + 0.3 * (t as f64 * 0.2).cos()).collect();
    unsafe {
        let h = problem(&x, n, &[0.0, 1.0], &[0.0]);
        let c = nw_config();
        let (mut t, mut defined) = (0.0, 0);
        assert_eq!(pwhac_test_statistic(h, c, y.as_ptr(), n, &mut t, &mut defined), PwhacStatus::Ok);

        let prob = pwhac::RegressionProblem::new(
            nalgebra::DMatrix::from_row_slice(n, 2, &x),
            nalgebra::DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            nalgebra::DVector::zeros(1),
        )
        .unwrap();
        let cfg = pwhac::EstimatorConfig::new(
            pwhac::Kernel::Bartlett,
            pwhac::BandwidthRule::newey_west_default(pwhac::OmegaSpec::ones()),
            1,
        );
        let lib = pwhac::test_statistic(&prob, &nalgebra::DVector::from_vec(y.clone()), &cfg).unwrap();
        assert_eq!(defined, i32::from(lib.defined));
        assert_eq!(t, lib.t);

        let (mut tb, mut db, mut scenario) = (0.0, 0, 0);
        assert_eq!(pwhac_adjusted_statistic(h, c, y.as_ptr(), n, &mut tb, &mut db, &mut scenario), PwhacStatus::Ok);
        assert!((1..=4).contains(&scenario));
        assert!(tb >= 0.0);

        pwhac_config_free(c);
        pwhac_problem_free(h);
    }
}

#[test]
fn diagnose_location_model() {
    let n = 20;
    let x = vec![1.0; n];
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(pwhac_problem_new(x.as_ptr(), n, 1, [1.0].as_ptr(), [0.0].as_ptr(), 1, &mut h), PwhacStatus::Ok);
        let c = nw_config();
        let mut v = PwhacVerdict::Inconclusive;
        assert_eq!(pwhac_diagnose(h, c, 10.0, &mut v), PwhacStatus::Ok);
        assert_eq!(v, PwhacVerdict::SizeOneSpanCase);
        pwhac_config_free(c);
        pwhac_problem_free(h);
    }
}

#[test]
fn config_from_toml() {
    let n = 40;
    let x = design(n);
    let y: Vec<f64> = (0..n).map(|t| (t as f64 * 0.53).cos()).collect();
    let text = CString::new("kernel = \"bartlett\"\np = 1\nrule = { rule = \"fixed-b\", fraction = 0.5 }\n").unwrap();
    unsafe {
        let h = problem(&x, n, &[0.0, 1.0], &[0.0]);
        let mut from_toml = ptr::null_mut();
        assert_eq!(pwhac_config_from_toml(text.as_ptr(), &mut from_toml), PwhacStatus::Ok, "{}", last_error());
        let mut direct = ptr::null_mut();
        assert_eq!(pwhac_config_new(PwhacKernel::Bartlett, PwhacRule::FixedB, 1, 0.5, &mut direct), PwhacStatus::Ok);
        let (mut a, mut b, mut d) = (0.0, 0.0, 0);
        pwhac_test_statistic(h, from_toml, y.as_ptr(), n, &mut a, &mut d);
        pwhac_test_statistic(h, direct, y.as_ptr(), n, &mut b, &mut d);
        assert_eq!(a, b);
        pwhac_config_free(from_toml);
        pwhac_config_free(direct);
        pwhac_problem_free(h);

        let bad = CString::new("kernel = 3").unwrap();
        let mut c = ptr::null_mut();
        assert_eq!(pwhac_config_from_toml(bad.as_ptr(), &mut c), PwhacStatus::InvalidArgument);
        assert!(c.is_null());
        assert!(last_error().contains("configuration"));
    }
}

#[test]
fn calibrate_is_deterministic() {
    let n = 40;
    let x = design(n);
    let rho = [0.0, 0.5];
    unsafe {
        let h = problem(&x, n, &[0.0, 1.0], &[0.0]);
        let c = nw_config();
        let mut crit = 0.0;
        assert_eq!(pwhac_calibrate(h, c, 0.1, 200, 5, rho.as_ptr(), rho.len(), 1, &mut crit), PwhacStatus::Ok, "{}", last_error());
        assert!(crit > 0.0);
        let mut again = 0.0;
        pwhac_calibrate(h, c, 0.1, 200, 5, rho.as_ptr(), rho.len(), 1, &mut again);
        assert_eq!(crit, again);
        pwhac_config_free(c);
        pwhac_problem_free(h);
    }
}

#[test]
fn errors_and_null_pointers() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(pwhac_problem_new(ptr::null(), 10, 1, [1.0].as_ptr(), [0.0].as_ptr(), 1, &mut h), PwhacStatus::NullPointer);
        assert!(last_error().contains("x"));

        // n ≤ 2 is rejected by the library.
        let x = [1.0, 1.0];
        assert_eq!(pwhac_problem_new(x.as_ptr(), 2, 1, [1.0].as_ptr(), [0.0].as_ptr(), 1, &mut h), PwhacStatus::InvalidArgument);
        assert!(h.is_null());
        assert!(last_error().contains("n > 2"));

        let mut c = ptr::null_mut();
        assert_eq!(pwhac_config_new(PwhacKernel::Parzen, PwhacRule::Andrews, 1, 0.0, &mut c), PwhacStatus::InvalidArgument);
        assert_eq!(pwhac_config_new(PwhacKernel::Bartlett, PwhacRule::FixedB, 1, -1.0, &mut c), PwhacStatus::InvalidArgument);

        let mut t = 0.0;
        let mut d = 0;
        assert_eq!(pwhac_test_statistic(ptr::null(), ptr::null(), ptr::null(), 0, &mut t, &mut d), PwhacStatus::NullPointer);

        pwhac_problem_free(ptr::null_mut());
        pwhac_config_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(pwhac_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pwhac.h")).unwrap();
    for name in [
        "pwhac_problem_new", "pwhac_problem_free", "pwhac_config_new", "pwhac_config_from_toml",
        "pwhac_config_free", "pwhac_test_statistic", "pwhac_adjusted_statistic", "pwhac_diagnose",
        "pwhac_calibrate", "pwhac_last_error_message", "pwhac_version", "typedef struct PwhacProblem PwhacProblem",
        "PWHAC_STATUS_NOT_APPLICABLE = 3",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
