use std::ffi::CStr;
use std::ptr;

use dpsgd_ffi::*;

unsafe fn fig5(t: u64) -> *mut DpsgdMechanism {
    let mut m = ptr::null_mut();
    let s = dpsgd_mechanism_new(16, 2, 0.2, 2.0, 1.0, 4.0, t, 1.0, 1, &mut m);
    assert_eq!(s, DpsgdStatus::Ok);
    m
}

unsafe fn last_error() -> String {
    CStr::from_ptr(dpsgd_last_error()).to_string_lossy().into_owned()
}

#[test]
fn dc_bound_matches_converged_value() {
    unsafe {
        let m = fig5(500);
        let mut eps = 0.0;
        let mut ok = false;
        assert_eq!(dpsgd_bound(m, DPSGD_FAMILY_DC, 1.1, &mut eps, &mut ok), DpsgdStatus::Ok);
        assert!((eps - 1.546367).abs() < 1e-5, "{eps}");
        assert!(ok);
        dpsgd_mechanism_free(m);
    }
}

#[test]
fn constraint_pointer_may_be_null() {
    unsafe {
        let m = fig5(10);
        let mut eps = 0.0;
        let s = dpsgd_bound(m, DPSGD_FAMILY_TRIVIAL, 2.0, &mut eps, ptr::null_mut());
        assert_eq!(s, DpsgdStatus::Ok);
        assert!(eps > 0.0);
        dpsgd_mechanism_free(m);
    }
}

#[test]
fn invalid_inputs_report_status_and_message() {
    unsafe {
        let mut m = ptr::null_mut();
        let s = dpsgd_mechanism_new(16, 32, 0.2, 2.0, 1.0, 4.0, 10, 1.0, 1, &mut m);
        assert_eq!(s, DpsgdStatus::ParameterError);
        assert!(m.is_null());
        assert!(!last_error().is_empty());

        let m = fig5(10);
        let mut eps = 0.0;
        assert_eq!(dpsgd_bound(m, 99, 2.0, &mut eps, ptr::null_mut()), DpsgdStatus::ParameterError);
        assert!(last_error().contains("family"));
        assert_eq!(dpsgd_bound(ptr::null(), 0, 2.0, &mut eps, ptr::null_mut()), DpsgdStatus::NullPointer);
        assert_eq!(dpsgd_bound(m, 0, 2.0, ptr::null_mut(), ptr::null_mut()), DpsgdStatus::NullPointer);
        assert_eq!(dpsgd_mechanism_set_sigma(m, -1.0), DpsgdStatus::ParameterError);
        dpsgd_mechanism_free(m);
    }
}

#[test]
fn best_dp_and_calibration_round_trip() {
    unsafe {
        let m = fig5(100);
        let mut sigma = 0.0;
        let s = dpsgd_calibrate_sigma(m, DPSGD_FAMILY_DC, 2.0, 1e-5, &mut sigma);
        assert_eq!(s, DpsgdStatus::Ok, "{}", last_error());
        assert_eq!(dpsgd_mechanism_set_sigma(m, sigma), DpsgdStatus::Ok);
        let (mut alpha, mut eps) = (0.0, 0.0);
        assert_eq!(dpsgd_best_dp(m, DPSGD_FAMILY_DC, 1e-5, &mut alpha, &mut eps), DpsgdStatus::Ok);
        assert!(eps <= 2.0 && eps > 2.0 * (1.0 - 1e-4), "{eps}");
        assert!(alpha > 1.0);
        dpsgd_mechanism_free(m);
    }
}

#[test]
fn scalar_conversions() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(dpsgd_rdp_to_dp(1.0, 2.0, 0.5, &mut out), DpsgdStatus::Ok);
        assert!((out - (1.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(dpsgd_mia_epsilon(0.1, 0.1, 0.0, &mut out), DpsgdStatus::Ok);
        assert!((out - 9f64.ln()).abs() < 1e-12);
        assert_eq!(dpsgd_mia_epsilon(1.5, 0.1, 0.0, &mut out), DpsgdStatus::ParameterError);
    }
}

#[test]
fn training_trace_is_readable() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(dpsgd_problem_quadratic(3, 20, 7, 1.0, &mut p), DpsgdStatus::Ok);
        let (mut n, mut dim, mut l, mut mu) = (0usize, 0usize, 0.0, 0.0);
        assert_eq!(dpsgd_problem_info(p, &mut n, &mut dim, &mut l, &mut mu), DpsgdStatus::Ok);
        assert_eq!((n, dim), (20, 3));
        assert!((l - 1.0).abs() < 1e-9 && mu > 0.0 && mu <= l);

        let mut m = ptr::null_mut();
        let s = dpsgd_mechanism_new(20, 4, 0.5, 10.0, -1.0, 0.1, 30, l, dim, &mut m);
        assert_eq!(s, DpsgdStatus::Ok);
        let mut tr = ptr::null_mut();
        assert_eq!(dpsgd_train(p, m, 3, 10, &mut tr), DpsgdStatus::Ok, "{}", last_error());
        let len = dpsgd_trace_len(tr);
        assert_eq!(len, 4);

        let mut t = 0u64;
        let mut gap = 0.0;
        assert_eq!(
            dpsgd_trace_record(tr, len - 1, &mut t, &mut gap, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()),
            DpsgdStatus::Ok
        );
        assert_eq!(t, 30);
        assert!(gap >= 0.0);

        let mut theta = [f64::NAN; 3];
        assert_eq!(dpsgd_trace_theta(tr, 0, theta.as_mut_ptr(), 3), DpsgdStatus::Ok);
        assert_eq!(theta, [0.0; 3]);
        assert_eq!(dpsgd_trace_theta(tr, 0, theta.as_mut_ptr(), 2), DpsgdStatus::ParameterError);
        assert_eq!(
            dpsgd_trace_record(tr, len, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()),
            DpsgdStatus::ParameterError
        );

        dpsgd_trace_free(tr);
        dpsgd_mechanism_free(m);
        dpsgd_problem_free(p);
    }
}

#[test]
fn mismatched_problem_is_config_error() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(dpsgd_problem_logistic(4, 30, 1, 1e-2, 0.1, &mut p), DpsgdStatus::Ok);
        let mut m = ptr::null_mut();
        assert_eq!(dpsgd_mechanism_new(31, 4, 0.5, 1.0, -1.0, 0.1, 5, 1.0, 4, &mut m), DpsgdStatus::Ok);
        let mut tr = ptr::null_mut();
        assert_eq!(dpsgd_train(p, m, 0, 1, &mut tr), DpsgdStatus::ConfigError);
        assert!(tr.is_null());
        dpsgd_mechanism_free(m);
        dpsgd_problem_free(p);
    }
}

#[test]
fn free_accepts_null() {
    unsafe {
        dpsgd_mechanism_free(ptr::null_mut());
        dpsgd_problem_free(ptr::null_mut());
        dpsgd_trace_free(ptr::null_mut());
        assert_eq!(dpsgd_trace_len(ptr::null()), 0);
    }
}
