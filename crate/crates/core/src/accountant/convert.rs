use super::{check_alpha, BoundOptions, Family, MechanismConfig};
use crate::error::{Error, Result};

/// Relative width at which noise calibration stops bisecting.
pub const CALIBRATION_REL_TOL: f64 = 1e-6;
/// Range of noise scales searched by [`calibrate_sigma`].
pub const CALIBRATION_BRACKET: (f64, f64) = (1e-6, 1e6);

/// Converts an (α, ε)-RDP guarantee into (ε + log(1/δ)/(α−1), δ)-DP.
pub fn rdp_to_dp(epsilon_rdp: f64, alpha: f64, delta: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(epsilon_rdp >= 0.0) {
        return Err(Error::param(format!(
            "RDP epsilon must be nonnegative, got {epsilon_rdp}"
        )));
    }
    Ok(epsilon_rdp + (1.0 / delta).ln() / (alpha - 1.0))
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Orders searched when none are given: 128 log-spaced points in [1.1, 256].
pub fn default_alpha_grid() -> Vec<f64> {
    log_spaced(1.1, 256.0, 128)
}

/// Best (ε, δ)-DP guarantee over a grid of Rényi orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpResult {
    pub alpha: f64,
    pub epsilon_dp: f64,
    pub epsilon_rdp: f64,
}

/// Minimizes the RDP→DP conversion of `family` over `alpha_grid`.
pub fn best_dp(
    cfg: &MechanismConfig,
    family: Family,
    opts: &BoundOptions,
    delta: f64,
    alpha_grid: &[f64],
) -> Result<DpResult> {
    if alpha_grid.is_empty() {
        return Err(Error::param("alpha grid must not be empty"));
    }
    let mut best: Option<DpResult> = None;
    for &alpha in alpha_grid {
        let rdp = family.evaluate(cfg, alpha, opts)?;
        let eps = rdp_to_dp(rdp.epsilon, alpha, delta)?;
        if best.is_none_or(|b| eps < b.epsilon_dp) {
            best = Some(DpResult {
                alpha,
                epsilon_dp: eps,
                epsilon_rdp: rdp.epsilon,
            });
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Smallest σ_DP (to relative precision [`CALIBRATION_REL_TOL`]) whose best
/// DP guarantee meets `target_eps_dp`. `cfg.sigma_dp` is ignored.
///
/// Assumes the family is nonincreasing in σ_DP, which holds for every
/// family in general mode.
pub fn calibrate_sigma(
    cfg: &MechanismConfig,
    family: Family,
    opts: &BoundOptions,
    target_eps_dp: f64,
    delta: f64,
    alpha_grid: &[f64],
) -> Result<f64> {
    if !(target_eps_dp > 0.0) || !target_eps_dp.is_finite() {
        return Err(Error::param(format!(
            "target epsilon must be positive, got {target_eps_dp}"
        )));
    }
    let eps_at = |sigma: f64| -> Result<f64> {
        Ok(best_dp(&cfg.with_sigma(sigma), family, opts, delta, alpha_grid)?.epsilon_dp)
    };
    let (mut lo, mut hi) = CALIBRATION_BRACKET;
    if eps_at(hi)? > target_eps_dp {
        return Err(Error::Calibration(format!(
            "target epsilon {target_eps_dp} not reachable with sigma <= {hi}"
        )));
    }
    if eps_at(lo)? <= target_eps_dp {
        return Ok(lo);
    }
    // Invariant: eps(lo) > target >= eps(hi).
    while hi / lo - 1.0 > CALIBRATION_REL_TOL {
        let mid = (lo * hi).sqrt();
        if eps_at(mid)? <= target_eps_dp {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_examples() {
        let delta = (-2.0f64).exp();
        assert!((rdp_to_dp(0.5, 2.0, delta).unwrap() - 2.5).abs() < 1e-12);
        let v = rdp_to_dp(0.0, 1e6, 0.5).unwrap();
        assert!((v - 2f64.ln() / (1e6 - 1.0)).abs() < 1e-18);
        assert!((v - 6.93e-7).abs() < 1e-9);
        let v = rdp_to_dp(1.546367, 1.1, 1e-5).unwrap();
        assert!((v - 116.675).abs() < 1e-3, "{v}");
    }

    #[test]
    fn conversion_rejects_bad_inputs() {
        assert!(rdp_to_dp(1.0, 1.0, 0.1).is_err());
        assert!(rdp_to_dp(1.0, 2.0, 0.0).is_err());
        assert!(rdp_to_dp(1.0, 2.0, 1.0).is_err());
        assert!(rdp_to_dp(-1.0, 2.0, 0.1).is_err());
    }

    #[test]
    fn grid_helpers() {
        let g = log_spaced(1.1, 64.0, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1.1).abs() < 1e-12 && (g[4] - 64.0).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(default_alpha_grid().iter().all(|&a| a > 1.0));
    }

    #[test]
    fn best_dp_needs_grid() {
        let cfg = MechanismConfig {
            n: 16,
            b: 2,
            eta: 0.2,
            clip_c: 2.0,
            diameter_d: Some(1.0),
            sigma_dp: 4.0,
            t_iters: 100,
            smooth_l: 1.0,
            dim: 1,
        };
        let opts = BoundOptions::default();
        assert!(best_dp(&cfg, Family::Dc, &opts, 1e-5, &[]).is_err());
        let single = best_dp(&cfg, Family::Dc, &opts, 1e-5, &[2.0]).unwrap();
        let direct = Family::Dc.evaluate(&cfg, 2.0, &opts).unwrap().epsilon;
        assert_eq!(single.epsilon_dp, rdp_to_dp(direct, 2.0, 1e-5).unwrap());
    }
}
