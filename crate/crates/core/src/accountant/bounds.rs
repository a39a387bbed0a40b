use super::sgm::{alpha_star, SGM_MAX_SAMPLING_RATE, SGM_MIN_SIGMA};
use super::{
    check_alpha, BaselineParams, Beta, ConstraintReport, Family, MechanismConfig, Mode,
    RdpQuery, RdpResult, Regime,
};
use crate::error::{Error, Result};

/// Per-step RDP increment without sampling assumptions, `2αC²/(nbσ²)`
/// (at β = 1).
pub fn per_step_general(cfg: &MechanismConfig, alpha: f64) -> f64 {
    let c2 = cfg.clip_c * cfg.clip_c;
    2.0 * alpha * c2 / (cfg.n as f64 * cfg.b as f64 * cfg.sigma_dp * cfg.sigma_dp)
}

/// Per-step RDP increment in the sampled-Gaussian regime, `8αC²/(n²σ²)`
/// (at β = 1).
pub fn per_step_strengthened(cfg: &MechanismConfig, alpha: f64) -> f64 {
    let n = cfg.n as f64;
    8.0 * alpha * cfg.clip_c * cfg.clip_c / (n * n * cfg.sigma_dp * cfg.sigma_dp)
}

/// Cost of shifting a distance-D discrepancy back to zero in one step,
/// `α(1+ηL)²D²/(2η²σ²)` (at β = 0).
pub fn shift_term(cfg: &MechanismConfig, alpha: f64, diameter: f64) -> f64 {
    let expansion = 1.0 + cfg.eta * cfg.smooth_l;
    alpha * expansion * expansion * diameter * diameter
        / (2.0 * cfg.eta * cfg.eta * cfg.sigma_dp * cfg.sigma_dp)
}

fn per_step(cfg: &MechanismConfig, alpha: f64, mode: Mode) -> f64 {
    match mode {
        Mode::General => per_step_general(cfg, alpha),
        Mode::Strengthened => per_step_strengthened(cfg, alpha),
    }
}

fn check_constraints(cfg: &MechanismConfig, alpha: f64, beta: f64) -> ConstraintReport {
    let q = cfg.sampling_rate();
    let batch_ok = q <= SGM_MAX_SAMPLING_RATE;
    // σ > 8C/(b√β) is the same statement as an SGM noise multiplier above 4.
    let sgm_sigma = cfg.b as f64 * beta.sqrt() * cfg.sigma_dp / (2.0 * cfg.clip_c);
    let noise_ok = sgm_sigma > SGM_MIN_SIGMA && sgm_sigma.is_finite();
    let alpha_star = if batch_ok && noise_ok {
        alpha_star(q, sgm_sigma).ok()
    } else {
        None
    };
    ConstraintReport {
        batch_ok,
        noise_ok,
        order_ok: alpha_star.is_some_and(|a| alpha <= a),
        alpha_star,
        beta,
    }
}

/// RDP of the final iterate of DPSGD-GC: `2αC²T/(βnbσ²)`, or
/// `8αC²T/(βn²σ²)` in strengthened mode when its constraints hold.
pub fn gc_bound(cfg: &MechanismConfig, q: &RdpQuery) -> Result<RdpResult> {
    cfg.validate_for_bound()?;
    check_alpha(q.alpha)?;
    q.beta.validate()?;
    let beta = match q.beta {
        Beta::Auto => 1.0,
        Beta::Fixed(b) => b,
    };
    let t = cfg.t_iters as f64;
    let general = RdpResult {
        alpha: q.alpha,
        epsilon: per_step_general(cfg, q.alpha) * t / beta,
        family: Family::GcLinear,
        regime: None,
        beta_used: Some(beta),
        constraints_ok: true,
        constraints: None,
    };
    if q.mode == Mode::General {
        return Ok(general);
    }
    let report = check_constraints(cfg, q.alpha, beta);
    if report.all_ok() {
        Ok(RdpResult {
            epsilon: per_step_strengthened(cfg, q.alpha) * t / beta,
            constraints: Some(report),
            ..general
        })
    } else {
        Ok(RdpResult {
            constraints_ok: false,
            constraints: Some(report),
            ..general
        })
    }
}

/// `(ε, β*)` of the converged branch for per-step constant `a` and shift
/// constant `s`: `(√a + √s)²` at `β* = √a/(√a + √s)`.
fn converged(a: f64, s: f64) -> (f64, f64) {
    let (ra, rs) = (a.sqrt(), s.sqrt());
    if ra + rs == 0.0 {
        return (0.0, 1.0);
    }
    ((ra + rs) * (ra + rs), ra / (ra + rs))
}

/// `g(β) = a/β + s/(1−β)`.
fn split_cost(a: f64, s: f64, beta: f64) -> f64 {
    let shift = if s == 0.0 { 0.0 } else { s / (1.0 - beta) };
    a / beta + shift
}

/// `(ε, regime, β)` minimizing over the linear and converged branches.
fn dc_branches(a: f64, s: f64, t: f64, beta: Beta) -> (f64, Regime, f64) {
    if t == 0.0 {
        let b = match beta {
            Beta::Auto => 1.0,
            Beta::Fixed(b) => b,
        };
        return (0.0, Regime::Linear, b);
    }
    let (lin, lin_beta, conv, conv_beta) = match beta {
        Beta::Auto => {
            let (conv, beta_star) = converged(a, s);
            (a * t, 1.0, conv, beta_star)
        }
        Beta::Fixed(b) => (a * t / b, b, split_cost(a, s, b), b),
    };
    if lin <= conv {
        (lin, Regime::Linear, lin_beta)
    } else {
        (conv, Regime::Converged, conv_beta)
    }
}

/// RDP of the final iterate of DPSGD-DC: the smaller of the linear bound and
/// the converged bound `(√(2αC²/(nbσ²)) + √(α(1+ηL)²D²/(2η²σ²)))²`.
pub fn dc_bound(cfg: &MechanismConfig, q: &RdpQuery) -> Result<RdpResult> {
    cfg.validate_for_bound()?;
    check_alpha(q.alpha)?;
    q.beta.validate()?;
    let diameter = cfg.require_diameter()?;
    let s = shift_term(cfg, q.alpha, diameter);
    let t = cfg.t_iters as f64;

    let make = |mode: Mode| {
        let (epsilon, regime, beta) = dc_branches(per_step(cfg, q.alpha, mode), s, t, q.beta);
        RdpResult {
            alpha: q.alpha,
            epsilon,
            family: Family::Dc,
            regime: Some(regime),
            beta_used: Some(beta),
            constraints_ok: true,
            constraints: None,
        }
    };

    let general = make(Mode::General);
    if q.mode == Mode::General {
        return Ok(general);
    }
    let strong = make(Mode::Strengthened);
    let beta = strong.beta_used.unwrap_or(1.0);
    let report = check_constraints(cfg, q.alpha, beta);
    if report.all_ok() {
        Ok(RdpResult {
            constraints: Some(report),
            ..strong
        })
    } else {
        Ok(RdpResult {
            constraints_ok: false,
            constraints: Some(report),
            ..general
        })
    }
}

/// Closed-form noise split minimizing the converged DC bound.
pub fn optimal_beta(cfg: &MechanismConfig, alpha: f64) -> Result<f64> {
    cfg.validate_for_bound()?;
    check_alpha(alpha)?;
    let d = cfg.require_diameter()?;
    Ok(converged(per_step_general(cfg, alpha), shift_term(cfg, alpha, d)).1)
}

/// The T-independent value the DC bound saturates at.
pub fn dc_converged(cfg: &MechanismConfig, alpha: f64, mode: Mode) -> Result<f64> {
    cfg.validate_for_bound()?;
    check_alpha(alpha)?;
    let d = cfg.require_diameter()?;
    Ok(converged(per_step(cfg, alpha, mode), shift_term(cfg, alpha, d)).0)
}

/// Real-valued iteration count `T*` at which the linear and converged DC
/// branches meet.
pub fn crossover_t(cfg: &MechanismConfig, alpha: f64, mode: Mode) -> Result<f64> {
    let conv = dc_converged(cfg, alpha, mode)?;
    Ok(conv / per_step(cfg, alpha, mode))
}

/// Sampled Gaussian mechanism composed over T steps: `T·2αq²/σ_sgm²` with
/// `q = b/n` and `σ_sgm = bσ/(2C)`.
pub fn composition_bound(cfg: &MechanismConfig, alpha: f64) -> Result<RdpResult> {
    cfg.validate_for_bound()?;
    check_alpha(alpha)?;
    let q = cfg.sampling_rate();
    let sgm_sigma = cfg.b as f64 * cfg.sigma_dp / (2.0 * cfg.clip_c);
    let epsilon = cfg.t_iters as f64 * 2.0 * alpha * q * q / (sgm_sigma * sgm_sigma);
    let report = check_constraints(cfg, alpha, 1.0);
    Ok(RdpResult {
        constraints_ok: report.all_ok(),
        constraints: Some(report),
        ..RdpResult::plain(Family::Composition, alpha, epsilon)
    })
}

/// Post-processing of one Gaussian release of the whole domain:
/// `2α(D + ηC/b)²/(η²σ²)`.
///
/// The denominator uses the noise scale ησ that actually reaches the
/// parameters in the update `θ − η(g + ζ)`.
pub fn trivial_bound(cfg: &MechanismConfig, alpha: f64) -> Result<RdpResult> {
    cfg.validate_for_bound()?;
    check_alpha(alpha)?;
    let d = cfg.require_diameter()?;
    let epsilon = if cfg.t_iters == 0 {
        0.0
    } else {
        let reach = d + cfg.eta * cfg.clip_c / cfg.b as f64;
        2.0 * alpha * reach * reach / (cfg.eta * cfg.eta * cfg.sigma_dp * cfg.sigma_dp)
    };
    Ok(RdpResult::plain(Family::Trivial, alpha, epsilon))
}

fn positive(name: &str, v: Option<f64>) -> Result<f64> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(Error::param(format!("{name} must be positive, got {x}"))),
        None => Err(Error::param(format!("{name} is required for this bound"))),
    }
}

fn multiplier(bp: &BaselineParams) -> Result<f64> {
    positive("baseline multiplier", Some(bp.multiplier))
}

/// `αM²T/(b²σ²)`, times the baseline multiplier.
pub fn feldman_bound(cfg: &MechanismConfig, alpha: f64, bp: &BaselineParams) -> Result<RdpResult> {
    cfg.validate_for_bound()?;
    check_alpha(alpha)?;
    let m = positive("lipschitz_m", bp.lipschitz_m)?;
    let b = cfg.b as f64;
    let epsilon = multiplier(bp)? * alpha * m * m * cfg.t_iters as f64
        / (b * b * cfg.sigma_dp * cfg.sigma_dp);
    Ok(RdpResult::plain(Family::Feldman, alpha, epsilon))
}

/// `αM²/(n²σ²)·min{T, Dn/(ηM)}`, times the baseline multiplier.
pub fn altschuler_bound(
    cfg: &MechanismConfig,
    alpha: f64,
    bp: &BaselineParams,
) -> Result<RdpResult> {
    cfg.validate_for_bound()?;
    check_alpha(alpha)?;
    let m = positive("lipschitz_m", bp.lipschitz_m)?;
    let d = cfg.require_diameter()?;
    let n = cfg.n as f64;
    let horizon = (cfg.t_iters as f64).min(d * n / (cfg.eta * m));
    let epsilon =
        multiplier(bp)? * alpha * m * m / (n * n * cfg.sigma_dp * cfg.sigma_dp) * horizon;
    Ok(RdpResult::plain(Family::Altschuler, alpha, epsilon))
}

/// `α/(η²σ²)·(D√(1 + 2ηm[1 + m/(2(L+m))]) + ηC/b)²`, times the baseline
/// multiplier. Does not grow with T.
pub fn kong_bound(cfg: &MechanismConfig, alpha: f64, bp: &BaselineParams) -> Result<RdpResult> {
    cfg.validate_for_bound()?;
    check_alpha(alpha)?;
    let m = positive("weak_convex_m", bp.weak_convex_m)?;
    let d = cfg.require_diameter()?;
    let mult = multiplier(bp)?;
    let epsilon = if cfg.t_iters == 0 {
        0.0
    } else {
        let eta = cfg.eta;
        let growth = 1.0 + 2.0 * eta * m * (1.0 + m / (2.0 * (cfg.smooth_l + m)));
        let reach = d * growth.sqrt() + eta * cfg.clip_c / cfg.b as f64;
        mult * alpha / (eta * eta * cfg.sigma_dp * cfg.sigma_dp) * reach * reach
    };
    Ok(RdpResult::plain(Family::Kong, alpha, epsilon))
}
