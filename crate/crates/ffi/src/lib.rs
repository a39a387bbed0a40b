//! C ABI over `dpsgd-core`.
//!
//! Every fallible function returns a [`DpsgdStatus`] and writes results
//! through out-pointers. On failure, `dpsgd_last_error()` returns a message
//! for the calling thread. Objects are opaque handles created by `*_new`
//! style functions and released by the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dpsgd_core::accountant::{
    best_dp, calibrate_sigma, default_alpha_grid, rdp_to_dp, BaselineParams, Beta, BoundOptions,
    Family, MechanismConfig, Mode,
};
use dpsgd_core::mia::mia_epsilon;
use dpsgd_core::optimizer::{train, TrainConfig, TrainTrace};
use dpsgd_core::problems::ProblemSpec;
use dpsgd_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpsgdStatus {
    Ok = 0,
    ParameterError = 1,
    PreconditionError = 2,
    CalibrationError = 3,
    ConfigError = 4,
    NumericalError = 5,
    IoError = 6,
    NullPointer = 7,
    Panic = 8,
}

pub const DPSGD_FAMILY_GC_LINEAR: i32 = 0;
pub const DPSGD_FAMILY_DC: i32 = 1;
pub const DPSGD_FAMILY_TRIVIAL: i32 = 2;
pub const DPSGD_FAMILY_FELDMAN: i32 = 3;
pub const DPSGD_FAMILY_ALTSCHULER: i32 = 4;
pub const DPSGD_FAMILY_KONG: i32 = 5;
pub const DPSGD_FAMILY_COMPOSITION: i32 = 6;

pub const DPSGD_MODE_GENERAL: i32 = 0;
pub const DPSGD_MODE_STRENGTHENED: i32 = 1;

/// Opaque mechanism configuration plus accounting options.
pub struct DpsgdMechanism {
    cfg: MechanismConfig,
    opts: BoundOptions,
}

/// Opaque synthetic problem.
pub struct DpsgdProblem(ProblemSpec);

/// Opaque training trace.
pub struct DpsgdTrace(TrainTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DpsgdStatus {
    match e {
        Error::Parameter(_) => DpsgdStatus::ParameterError,
        Error::Precondition(_) => DpsgdStatus::PreconditionError,
        Error::Calibration(_) => DpsgdStatus::CalibrationError,
        Error::Config(_) => DpsgdStatus::ConfigError,
        Error::Numerical(_) => DpsgdStatus::NumericalError,
        Error::Io(_) => DpsgdStatus::IoError,
    }
}

struct Fail(DpsgdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DpsgdStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DpsgdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DpsgdStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DpsgdStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn family(code: i32) -> Result<Family, Fail> {
    usize::try_from(code)
        .ok()
        .and_then(|i| Family::ALL.get(i).copied())
        .ok_or_else(|| Fail(DpsgdStatus::ParameterError, format!("unknown family code {code}")))
}

/// Message describing the last failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dpsgd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a mechanism. Pass a negative or NaN `diameter_d` for an
/// unbounded domain.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_mechanism_new(
    n: u64,
    b: u64,
    eta: f64,
    clip_c: f64,
    diameter_d: f64,
    sigma_dp: f64,
    t_iters: u64,
    smooth_l: f64,
    dim: usize,
    out: *mut *mut DpsgdMechanism,
) -> DpsgdStatus {
    guard(|| {
        let cfg = MechanismConfig {
            n,
            b,
            eta,
            clip_c,
            diameter_d: (diameter_d >= 0.0).then_some(diameter_d),
            sigma_dp,
            t_iters,
            smooth_l,
            dim,
        };
        cfg.validate()?;
        let h = Box::new(DpsgdMechanism {
            cfg,
            opts: BoundOptions::default(),
        });
        write_out(out, Box::into_raw(h), "out")
    })
}

/// # Safety
/// `mech` must be null or a handle from `dpsgd_mechanism_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_mechanism_free(mech: *mut DpsgdMechanism) {
    if !mech.is_null() {
        drop(Box::from_raw(mech));
    }
}

/// # Safety
/// `mech` must be a live mechanism handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_mechanism_set_sigma(mech: *mut DpsgdMechanism, sigma_dp: f64) -> DpsgdStatus {
    guard(|| {
        let m = mech.as_mut().ok_or_else(|| null("mech"))?;
        m.cfg.with_sigma(sigma_dp).validate()?;
        m.cfg.sigma_dp = sigma_dp;
        Ok(())
    })
}

/// # Safety
/// `mech` must be a live mechanism handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_mechanism_set_t(mech: *mut DpsgdMechanism, t_iters: u64) -> DpsgdStatus {
    guard(|| {
        let m = mech.as_mut().ok_or_else(|| null("mech"))?;
        m.cfg.t_iters = t_iters;
        Ok(())
    })
}

/// Sets the accounting mode (`DPSGD_MODE_*`) and noise split; a `beta`
/// outside (0, 1] selects the automatic split.
///
/// # Safety
/// `mech` must be a live mechanism handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_mechanism_set_accounting(
    mech: *mut DpsgdMechanism,
    mode: i32,
    beta: f64,
) -> DpsgdStatus {
    guard(|| {
        let m = mech.as_mut().ok_or_else(|| null("mech"))?;
        m.opts.mode = match mode {
            DPSGD_MODE_GENERAL => Mode::General,
            DPSGD_MODE_STRENGTHENED => Mode::Strengthened,
            other => {
                return Err(Fail(DpsgdStatus::ParameterError, format!("unknown mode code {other}")))
            }
        };
        m.opts.beta = if beta > 0.0 && beta <= 1.0 {
            Beta::Fixed(beta)
        } else {
            Beta::Auto
        };
        Ok(())
    })
}

/// Sets the baseline constants M and m and the baseline multiplier.
///
/// # Safety
/// `mech` must be a live mechanism handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_mechanism_set_baseline(
    mech: *mut DpsgdMechanism,
    lipschitz_m: f64,
    weak_convex_m: f64,
    multiplier: f64,
) -> DpsgdStatus {
    guard(|| {
        let m = mech.as_mut().ok_or_else(|| null("mech"))?;
        m.opts.baseline = BaselineParams {
            lipschitz_m: Some(lipschitz_m),
            weak_convex_m: Some(weak_convex_m),
            multiplier,
        };
        Ok(())
    })
}

/// RDP ε of `family` (`DPSGD_FAMILY_*`) at order `alpha`. `out_constraints_ok`
/// may be null.
///
/// # Safety
/// `mech` must be a live handle; `out_eps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_bound(
    mech: *const DpsgdMechanism,
    family_code: i32,
    alpha: f64,
    out_eps: *mut f64,
    out_constraints_ok: *mut bool,
) -> DpsgdStatus {
    guard(|| {
        let m = deref(mech, "mech")?;
        let r = family(family_code)?.evaluate(&m.cfg, alpha, &m.opts)?;
        write_out(out_eps, r.epsilon, "out_eps")?;
        if !out_constraints_ok.is_null() {
            out_constraints_ok.write(r.constraints_ok);
        }
        Ok(())
    })
}

/// Best (ε, δ)-DP over the default order grid.
///
/// # Safety
/// `mech` must be a live handle; both out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_best_dp(
    mech: *const DpsgdMechanism,
    family_code: i32,
    delta: f64,
    out_alpha: *mut f64,
    out_eps_dp: *mut f64,
) -> DpsgdStatus {
    guard(|| {
        let m = deref(mech, "mech")?;
        let r = best_dp(&m.cfg, family(family_code)?, &m.opts, delta, &default_alpha_grid())?;
        write_out(out_alpha, r.alpha, "out_alpha")?;
        write_out(out_eps_dp, r.epsilon_dp, "out_eps_dp")
    })
}

/// Smallest σ_DP meeting `target_eps_dp` at `delta` over the default grid.
/// The handle's own σ_DP is ignored and left unchanged.
///
/// # Safety
/// `mech` must be a live handle; `out_sigma` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_calibrate_sigma(
    mech: *const DpsgdMechanism,
    family_code: i32,
    target_eps_dp: f64,
    delta: f64,
    out_sigma: *mut f64,
) -> DpsgdStatus {
    guard(|| {
        let m = deref(mech, "mech")?;
        let s = calibrate_sigma(
            &m.cfg,
            family(family_code)?,
            &m.opts,
            target_eps_dp,
            delta,
            &default_alpha_grid(),
        )?;
        write_out(out_sigma, s, "out_sigma")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_rdp_to_dp(eps_rdp: f64, alpha: f64, delta: f64, out: *mut f64) -> DpsgdStatus {
    guard(|| write_out(out, rdp_to_dp(eps_rdp, alpha, delta)?, "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_mia_epsilon(fpr: f64, fnr: f64, delta: f64, out: *mut f64) -> DpsgdStatus {
    guard(|| write_out(out, mia_epsilon(fpr, fnr, delta)?, "out"))
}

/// Random quadratic with shared Hessian (L = 1).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_problem_quadratic(
    dim: usize,
    n: usize,
    seed: u64,
    spread: f64,
    out: *mut *mut DpsgdProblem,
) -> DpsgdStatus {
    guard(|| {
        let p = ProblemSpec::synthetic_quadratic(dim, n, seed, spread)?;
        write_out(out, Box::into_raw(Box::new(DpsgdProblem(p))), "out")
    })
}

/// Random ridge-regularized logistic regression.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_problem_logistic(
    dim: usize,
    n: usize,
    seed: u64,
    ridge: f64,
    label_noise: f64,
    out: *mut *mut DpsgdProblem,
) -> DpsgdStatus {
    guard(|| {
        let p = ProblemSpec::synthetic_logistic(dim, n, seed, ridge, label_noise)?;
        write_out(out, Box::into_raw(Box::new(DpsgdProblem(p))), "out")
    })
}

/// Writes n, dim, L and μ of a problem. Any out-pointer may be null.
///
/// # Safety
/// `problem` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_problem_info(
    problem: *const DpsgdProblem,
    out_n: *mut usize,
    out_dim: *mut usize,
    out_smooth_l: *mut f64,
    out_strong_mu: *mut f64,
) -> DpsgdStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.0;
        if !out_n.is_null() {
            out_n.write(p.n());
        }
        if !out_dim.is_null() {
            out_dim.write(p.dim());
        }
        if !out_smooth_l.is_null() {
            out_smooth_l.write(p.smooth_l);
        }
        if !out_strong_mu.is_null() {
            out_strong_mu.write(p.strong_mu);
        }
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_problem_free(problem: *mut DpsgdProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs DPSGD on `problem` with `mech` and returns the recorded trace.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_train(
    problem: *const DpsgdProblem,
    mech: *const DpsgdMechanism,
    seed: u64,
    record_every: u64,
    out: *mut *mut DpsgdTrace,
) -> DpsgdStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.0;
        let m = deref(mech, "mech")?;
        let mut cfg = TrainConfig::new(m.cfg, seed);
        cfg.record_every = record_every;
        let trace = train(p, &cfg)?;
        write_out(out, Box::into_raw(Box::new(DpsgdTrace(trace))), "out")
    })
}

/// Number of recorded iterates; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_trace_len(trace: *const DpsgdTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.records.len())
}

/// Reads record `index`. Out-pointers may be null.
///
/// # Safety
/// `trace` must be a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_trace_record(
    trace: *const DpsgdTrace,
    index: usize,
    out_t: *mut u64,
    out_loss_gap: *mut f64,
    out_grad_norm: *mut f64,
    out_clip_fraction: *mut f64,
    out_projected: *mut bool,
) -> DpsgdStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.0;
        let r = t.records.get(index).ok_or_else(|| {
            Fail(DpsgdStatus::ParameterError, format!("record {index} out of range"))
        })?;
        if !out_t.is_null() {
            out_t.write(r.t);
        }
        if !out_loss_gap.is_null() {
            out_loss_gap.write(r.loss_gap);
        }
        if !out_grad_norm.is_null() {
            out_grad_norm.write(r.grad_norm);
        }
        if !out_clip_fraction.is_null() {
            out_clip_fraction.write(r.clip_fraction);
        }
        if !out_projected.is_null() {
            out_projected.write(r.projected);
        }
        Ok(())
    })
}

/// Copies the iterate of record `index` into `buf`, which must hold `len`
/// doubles with `len` equal to the model dimension.
///
/// # Safety
/// `trace` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_trace_theta(
    trace: *const DpsgdTrace,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> DpsgdStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.0;
        let r = t.records.get(index).ok_or_else(|| {
            Fail(DpsgdStatus::ParameterError, format!("record {index} out of range"))
        })?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != r.theta.len() {
            return Err(Fail(
                DpsgdStatus::ParameterError,
                format!("buffer holds {len} values, iterate has {}", r.theta.len()),
            ));
        }
        ptr::copy_nonoverlapping(r.theta.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn dpsgd_trace_free(trace: *mut DpsgdTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
