//! Sampled Gaussian mechanism: closed-form RDP bound and the largest
//! admissible Rényi order `α*(q, σ)`.

use crate::error::{Error, Result};

/// Spacing of the order grid scanned by [`alpha_star`].
pub const ALPHA_GRID_STEP: f64 = 1e-3;
/// Largest order considered by [`alpha_star`].
pub const ALPHA_GRID_MAX: f64 = 1e4;
/// The closed-form SGM bound needs `q <= 1/5`.
pub const SGM_MAX_SAMPLING_RATE: f64 = 0.2;
/// The closed-form SGM bound needs `σ > 4`.
pub const SGM_MIN_SIGMA: f64 = 4.0;

const GRID_SCALE: f64 = 1.0 / ALPHA_GRID_STEP;

/// `2αq²/σ²`, valid when `α <= α*(q, σ)`.
pub fn sgm_rdp_bound(q: f64, sigma: f64, alpha: f64) -> f64 {
    2.0 * alpha * q * q / (sigma * sigma)
}

/// Evaluates the two order constraints at `alpha`:
///
/// `α <= Kσ²/2 − 2 log σ` and
/// `α <= (K²σ²/2 − log 5 − 2 log σ) / (K + log(qα) + 1/(2σ²))`
/// with `K = log(1 + 1/(q(α−1)))`.
pub fn sgm_order_constraints(q: f64, sigma: f64, alpha: f64) -> (bool, bool) {
    let k = (1.0 / (q * (alpha - 1.0))).ln_1p();
    let s2 = sigma * sigma;
    let log_sigma = sigma.ln();
    let first = alpha <= k * s2 / 2.0 - 2.0 * log_sigma;
    // K + log(qα) = log(qα + α/(α−1)) > 0, so the denominator is positive.
    let denom = k + (q * alpha).ln() + 1.0 / (2.0 * s2);
    let numer = k * k * s2 / 2.0 - 5f64.ln() - 2.0 * log_sigma;
    let second = alpha <= numer / denom;
    (first, second)
}

fn grid_alpha(k: u64) -> f64 {
    1.0 + k as f64 * ALPHA_GRID_STEP
}

/// Largest order on the grid `1 + k·10⁻³ <= 10⁴` satisfying both SGM
/// constraints.
///
/// Requires `0 < q <= 1/5` and `σ > 4`.
pub fn alpha_star(q: f64, sigma: f64) -> Result<f64> {
    if !(q > 0.0 && q <= SGM_MAX_SAMPLING_RATE) {
        return Err(Error::Precondition(format!(
            "alpha* is defined only for 0 < q <= 1/5, got q={q}"
        )));
    }
    if !(sigma > SGM_MIN_SIGMA) || !sigma.is_finite() {
        return Err(Error::Precondition(format!(
            "alpha* is defined only for finite sigma > 4, got sigma={sigma}"
        )));
    }
    let k_max = ((ALPHA_GRID_MAX - 1.0) * GRID_SCALE).round() as u64;
    // Since log1p(x) <= x, the first constraint forces (α−1)² < σ²/(2q);
    // grid points above 1 + σ/√(2q) cannot be admissible.
    let k_cap = ((sigma / (2.0 * q).sqrt()) * GRID_SCALE).ceil() as u64 + 1;
    let top = k_max.min(k_cap);
    (1..=top)
        .rev()
        .map(grid_alpha)
        .find(|&a| {
            let (c1, c2) = sgm_order_constraints(q, sigma, a);
            c1 && c2
        })
        .ok_or_else(|| {
            Error::Precondition(format!(
                "no admissible Renyi order for q={q}, sigma={sigma}"
            ))
        })
}
