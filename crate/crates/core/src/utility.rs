//! Order-of-magnitude utility bounds for DPSGD-GC and DPSGD-DC, the
//! privacy-utility trade-off obtained by plugging in the noise level a
//! privacy budget demands, and a hyperparameter recommender.
//!
//! Every hidden constant is 1; `constant_c` scales the whole expression.

use serde::{Deserialize, Serialize};

use crate::accountant::{check_alpha, MechanismConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityTarget {
    /// `min_t E‖∇l(θ_t)‖` for DPSGD-GC on L-smooth losses.
    GcGradientNorm,
    /// `min_t E√(l(θ_t) − l(θ*))` for DPSGD-DC on strongly convex losses.
    DcOptimalityGap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityQuery {
    pub mech: MechanismConfig,
    pub strong_mu: Option<f64>,
    pub sgd_sigma: f64,
    pub constant_c: f64,
    pub target: UtilityTarget,
    /// Evaluate even when η exceeds the admissible step size.
    pub allow_step_violation: bool,
}

impl UtilityQuery {
    pub fn new(mech: MechanismConfig, sgd_sigma: f64, target: UtilityTarget) -> Self {
        UtilityQuery {
            mech,
            strong_mu: None,
            sgd_sigma,
            constant_c: 1.0,
            target,
            allow_step_violation: false,
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.strong_mu = Some(mu);
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant_c = c;
        self
    }

    /// Largest admissible step size for the target: `1/(9L)` for GC,
    /// `9/(20L)` for DC.
    pub fn max_step_size(&self) -> f64 {
        match self.target {
            UtilityTarget::GcGradientNorm => 1.0 / (9.0 * self.mech.smooth_l),
            UtilityTarget::DcOptimalityGap => 9.0 / (20.0 * self.mech.smooth_l),
        }
    }

    pub fn step_size_ok(&self) -> bool {
        self.mech.eta <= self.max_step_size()
    }

    fn validate_constants(&self) -> Result<()> {
        self.mech.validate()?;
        if !(self.constant_c > 0.0) || !self.constant_c.is_finite() {
            return Err(Error::param(format!(
                "constant multiplier must be positive, got {}",
                self.constant_c
            )));
        }
        if !(self.sgd_sigma >= 0.0) || !self.sgd_sigma.is_finite() {
            return Err(Error::param(format!(
                "sgd_sigma must be finite and nonnegative, got {}",
                self.sgd_sigma
            )));
        }
        if !(self.mech.smooth_l > 0.0) {
            return Err(Error::param("smoothness L must be positive"));
        }
        if self.target == UtilityTarget::DcOptimalityGap {
            self.mu()?;
            self.mech.require_diameter()?;
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.validate_constants()?;
        if !(self.mech.eta > 0.0) {
            return Err(Error::param("step size must be positive"));
        }
        if !(self.mech.clip_c > 0.0) {
            return Err(Error::param("clipping norm must be positive"));
        }
        if self.mech.t_iters == 0 {
            return Err(Error::param("utility bounds need T >= 1"));
        }
        if !self.allow_step_violation && !self.step_size_ok() {
            return Err(Error::Precondition(format!(
                "step size {} exceeds {} for this bound",
                self.mech.eta,
                self.max_step_size()
            )));
        }
        Ok(())
    }

    fn mu(&self) -> Result<f64> {
        match self.strong_mu {
            Some(mu) if mu > 0.0 && mu.is_finite() => Ok(mu),
            Some(mu) => Err(Error::param(format!("mu must be positive, got {mu}"))),
            None => Err(Error::param("the DC bound requires strong convexity mu")),
        }
    }
}

fn require_target(q: &UtilityQuery, target: UtilityTarget) -> Result<()> {
    if q.target != target {
        return Err(Error::param(format!(
            "query targets {:?}, expected {target:?}",
            q.target
        )));
    }
    Ok(())
}

/// The six GC terms before scaling:
/// `1/(ηCT)`, `1/√(ηT)`, `min(σ_SGD, σ_SGD²/C)`, `√(ηL)σ_SGD/√b`,
/// `dLησ_DP²/C`, `√(dLη)σ_DP`.
pub fn gc_utility_terms(q: &UtilityQuery) -> Result<[f64; 6]> {
    q.validate()?;
    let m = &q.mech;
    let (eta, c, t, l) = (m.eta, m.clip_c, m.t_iters as f64, m.smooth_l);
    let (s, d, sdp) = (q.sgd_sigma, m.dim as f64, m.sigma_dp);
    Ok([
        1.0 / (eta * c * t),
        1.0 / (eta * t).sqrt(),
        s.min(s * s / c),
        (eta * l).sqrt() * s / (m.b as f64).sqrt(),
        d * l * eta * sdp * sdp / c,
        (d * l * eta).sqrt() * sdp,
    ])
}

pub fn gc_utility_bound(q: &UtilityQuery) -> Result<f64> {
    require_target(q, UtilityTarget::GcGradientNorm)?;
    Ok(q.constant_c * gc_utility_terms(q)?.iter().sum::<f64>())
}

/// The six DC terms before scaling:
/// `√L·D²/(ηCT)`, `D/√(ηT)`, `min(L^¾σ_SGD/μ^{5/4}, √(σ_SGD³/(μC)))`,
/// `√η·σ_SGD/√b`, `dησ_DP²√L/C`, `√(dη)σ_DP`.
pub fn dc_utility_terms(q: &UtilityQuery) -> Result<[f64; 6]> {
    q.validate()?;
    let m = &q.mech;
    let dd = m.require_diameter()?;
    let mu = q.mu()?;
    let (eta, c, t, l) = (m.eta, m.clip_c, m.t_iters as f64, m.smooth_l);
    let (s, d, sdp) = (q.sgd_sigma, m.dim as f64, m.sigma_dp);
    Ok([
        l.sqrt() * dd * dd / (eta * c * t),
        dd / (eta * t).sqrt(),
        (l.powf(0.75) * s / mu.powf(1.25)).min((s.powi(3) / (mu * c)).sqrt()),
        eta.sqrt() * s / (m.b as f64).sqrt(),
        d * eta * sdp * sdp * l.sqrt() / c,
        (d * eta).sqrt() * sdp,
    ])
}

pub fn dc_utility_bound(q: &UtilityQuery) -> Result<f64> {
    require_target(q, UtilityTarget::DcOptimalityGap)?;
    Ok(q.constant_c * dc_utility_terms(q)?.iter().sum::<f64>())
}

/// Dispatches on `q.target`.
pub fn utility_bound(q: &UtilityQuery) -> Result<f64> {
    match q.target {
        UtilityTarget::GcGradientNorm => gc_utility_bound(q),
        UtilityTarget::DcOptimalityGap => dc_utility_bound(q),
    }
}

fn check_budget(alpha: f64, eps_rdp: f64) -> Result<()> {
    check_alpha(alpha)?;
    if !(eps_rdp > 0.0) || !eps_rdp.is_finite() {
        return Err(Error::param(format!(
            "RDP epsilon must be positive, got {eps_rdp}"
        )));
    }
    Ok(())
}

/// Noise needed by GC for an (α, ε)-RDP budget: `σ² = αC²T/(εnb)`.
pub fn tradeoff_sigma_gc(q: &UtilityQuery, alpha: f64, eps_rdp: f64) -> Result<f64> {
    check_budget(alpha, eps_rdp)?;
    let m = &q.mech;
    let var = alpha * m.clip_c * m.clip_c * m.t_iters as f64 / (eps_rdp * m.n as f64 * m.b as f64);
    Ok(var.sqrt())
}

/// `T̄ = (1+ηL)²nbD²/(η²C²)`, beyond which DC needs no extra noise.
pub fn dc_saturation_t(q: &UtilityQuery) -> Result<f64> {
    let m = &q.mech;
    let dd = m.require_diameter()?;
    let grow = 1.0 + m.eta * m.smooth_l;
    Ok(grow * grow * m.n as f64 * m.b as f64 * dd * dd / (m.eta * m.eta * m.clip_c * m.clip_c))
}

/// Noise needed by DC: `σ² = αC²/(εnb)·min{T, T̄}`.
pub fn tradeoff_sigma_dc(q: &UtilityQuery, alpha: f64, eps_rdp: f64) -> Result<f64> {
    check_budget(alpha, eps_rdp)?;
    let m = &q.mech;
    let horizon = (m.t_iters as f64).min(dc_saturation_t(q)?);
    let var = alpha * m.clip_c * m.clip_c * horizon / (eps_rdp * m.n as f64 * m.b as f64);
    Ok(var.sqrt())
}

/// GC utility bound at the noise level of [`tradeoff_sigma_gc`].
pub fn tradeoff_bound_gc(q: &UtilityQuery, alpha: f64, eps_rdp: f64) -> Result<f64> {
    let sigma = tradeoff_sigma_gc(q, alpha, eps_rdp)?;
    let mut at = *q;
    at.mech.sigma_dp = sigma;
    gc_utility_bound(&at)
}

/// DC utility terms at the noise level of [`tradeoff_sigma_dc`]. The last
/// two (noise) terms stop depending on T once `T >= T̄`.
pub fn tradeoff_terms_dc(q: &UtilityQuery, alpha: f64, eps_rdp: f64) -> Result<[f64; 6]> {
    let sigma = tradeoff_sigma_dc(q, alpha, eps_rdp)?;
    let mut at = *q;
    at.mech.sigma_dp = sigma;
    require_target(&at, UtilityTarget::DcOptimalityGap)?;
    dc_utility_terms(&at)
}

/// DC utility bound at the noise level of [`tradeoff_sigma_dc`].
pub fn tradeoff_bound_dc(q: &UtilityQuery, alpha: f64, eps_rdp: f64) -> Result<f64> {
    Ok(q.constant_c * tradeoff_terms_dc(q, alpha, eps_rdp)?.iter().sum::<f64>())
}

/// The T minimizing the T-dependent part of [`tradeoff_bound_gc`]:
/// `T = √(εnb/(dLα))/(ηC)`. Both pairs of T-dependent terms balance here,
/// so this is the exact minimizer of their sum. With `α/ε ≍ log(1/δ)/ε_dp²`
/// it reads `ε_dp·n/(ηC√(dL log(1/δ)))` up to constants.
pub fn gc_tradeoff_optimal_t(q: &UtilityQuery, alpha: f64, eps_rdp: f64) -> Result<f64> {
    check_budget(alpha, eps_rdp)?;
    let m = &q.mech;
    let ratio = eps_rdp * m.n as f64 * m.b as f64 / (m.dim as f64 * m.smooth_l * alpha);
    Ok(ratio.sqrt() / (m.eta * m.clip_c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendRegime {
    GcSmallNoise,
    GcLargeNoise,
    DcSmallNoise,
    DcLargeNoise,
    DcLargeT,
}

impl RecommendRegime {
    pub fn name(self) -> &'static str {
        match self {
            RecommendRegime::GcSmallNoise => "gc_small_noise",
            RecommendRegime::GcLargeNoise => "gc_large_noise",
            RecommendRegime::DcSmallNoise => "dc_small_noise",
            RecommendRegime::DcLargeNoise => "dc_large_noise",
            RecommendRegime::DcLargeT => "dc_large_t",
        }
    }
}

/// Θ-level hyperparameters for a target (ε, δ)-DP budget. `predicted_utility`
/// bounds the squared utility metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub regime: RecommendRegime,
    pub eta: f64,
    pub clip_c: f64,
    pub t_iters: f64,
    pub predicted_utility: f64,
}

/// Picks the regime by the small/large stochastic noise test (ties count as
/// small noise) and returns its closed-form choices for C, η and T.
///
/// For DC the bounded-horizon recipe is compared against the large-T recipe
/// (only available when σ_SGD > 0) and the one with the smaller predicted
/// utility wins; ties keep the bounded horizon.
pub fn recommend(q: &UtilityQuery, eps_dp: f64, delta: f64) -> Result<Recommendation> {
    q.validate_constants()?;
    if !(eps_dp > 0.0) || !eps_dp.is_finite() {
        return Err(Error::param(format!("epsilon must be positive, got {eps_dp}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    let m = &q.mech;
    let log = (1.0 / delta).ln();
    let (d, l, n, b) = (m.dim as f64, m.smooth_l, m.n as f64, m.b as f64);
    let s = q.sgd_sigma;
    let en = eps_dp * n;
    // dL log(1/δ)/(ε²n²)
    let ratio = d * l * log / (en * en);
    let scale = |r: Recommendation| Recommendation {
        predicted_utility: r.predicted_utility * q.constant_c,
        ..r
    };

    let rec = match q.target {
        UtilityTarget::GcGradientNorm => {
            if ratio >= s * s {
                Recommendation {
                    regime: RecommendRegime::GcSmallNoise,
                    clip_c: (d * l * log).sqrt() / en,
                    eta: b / l,
                    t_iters: en * en / (b * d * log),
                    predicted_utility: ratio,
                }
            } else {
                let dll = d * l * log;
                Recommendation {
                    regime: RecommendRegime::GcLargeNoise,
                    clip_c: s.powf(4.0 / 3.0) * en.powf(1.0 / 3.0) / dll.powf(1.0 / 6.0),
                    eta: b / (l * s.powf(2.0 / 3.0)) * ratio.cbrt(),
                    t_iters: en.powf(4.0 / 3.0) * l / (b * dll.powf(2.0 / 3.0) * s.powf(2.0 / 3.0)),
                    predicted_utility: s.powf(4.0 / 3.0) * ratio.cbrt(),
                }
            }
        }
        UtilityTarget::DcOptimalityGap => {
            let mu = q.mu()?;
            let dd = m.require_diameter()?;
            if !(dd > 0.0) {
                return Err(Error::param("recommendation for DC needs D > 0"));
            }
            let bounded = if dd * dd * ratio >= l.powf(1.5) * s * s / mu.powf(2.5) {
                Recommendation {
                    regime: RecommendRegime::DcSmallNoise,
                    clip_c: dd * l * (d * log).sqrt() / en,
                    eta: b * l.powf(1.5) / mu.powf(2.5),
                    t_iters: en * en * mu.powf(2.5) / (b * l.powf(1.5) * log),
                    predicted_utility: dd * dd * ratio,
                }
            } else {
                let dll = d * l * log;
                Recommendation {
                    regime: RecommendRegime::DcLargeNoise,
                    clip_c: s.powf(1.5) * en.sqrt() / (mu.sqrt() * dd.sqrt() * dll.powf(0.25)),
                    eta: b * dd.sqrt() / (mu.sqrt() * s.sqrt()) * ratio.cbrt(),
                    t_iters: en.powf(7.0 / 6.0) * mu * dd / (b * dll.powf(2.0 / 3.0) * s),
                    predicted_utility: s.powf(1.5) * dd.sqrt() / mu.sqrt() * ratio.powf(0.25),
                }
            };
            match dc_large_t(q, eps_dp, log, mu, dd) {
                Some(large) if large.predicted_utility < bounded.predicted_utility => large,
                _ => bounded,
            }
        }
    };
    Ok(scale(rec))
}

/// Large-horizon DC recipe: `η = D√(b·d·log(1/δ))/(ε·σ_SGD)`, then C and T
/// just large enough that no remaining term exceeds the predicted utility
/// `σ_SGD·D√(d log(1/δ))/(√b·ε)`.
fn dc_large_t(q: &UtilityQuery, eps: f64, log: f64, mu: f64, dd: f64) -> Option<Recommendation> {
    let s = q.sgd_sigma;
    if !(s > 0.0) {
        return None;
    }
    let m = &q.mech;
    let (d, l, n, b) = (m.dim as f64, m.smooth_l, m.n as f64, m.b as f64);
    let eta = dd * (b * d * log).sqrt() / (eps * s);
    let target = s * dd * (d * log).sqrt() / (b.sqrt() * eps);
    let grow = 1.0 + eta * l;
    // σ³/(μC) <= target and d²L(1+ηL)⁴D⁴log²/(η²C²ε⁴) <= target.
    let c_var = s.powi(3) / (mu * target);
    let c_noise = d * l.sqrt() * grow * grow * dd * dd * log / (eta * eps * eps * target.sqrt());
    let clip_c = c_var.max(c_noise);
    // T >= T̄' and LD⁴/(η²C²T²), D²/(ηT) <= target.
    let t_bar = grow * grow * n * n * dd * dd / (eta * eta * clip_c * clip_c);
    let t_opt1 = l.sqrt() * dd * dd / (eta * clip_c * target.sqrt());
    let t_opt2 = dd * dd / (eta * target);
    Some(Recommendation {
        regime: RecommendRegime::DcLargeT,
        eta,
        clip_c,
        t_iters: t_bar.max(t_opt1).max(t_opt2),
        predicted_utility: target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mech(eta: f64, c: f64, t: u64, b: u64, d: usize, sigma: f64) -> MechanismConfig {
        MechanismConfig {
            n: 16,
            b,
            eta,
            clip_c: c,
            diameter_d: Some(1.0),
            sigma_dp: sigma,
            t_iters: t,
            smooth_l: 1.0,
            dim: d,
        }
    }

    fn gc_example() -> UtilityQuery {
        let mut m = mech(0.1, 1.0, 100, 10, 2, 0.5);
        m.n = 100;
        UtilityQuery::new(m, 0.1, UtilityTarget::GcGradientNorm)
    }

    fn dc_example() -> UtilityQuery {
        UtilityQuery::new(mech(0.2, 2.0, 1000, 2, 2, 4.0), 0.1, UtilityTarget::DcOptimalityGap)
            .with_mu(0.5)
    }

    #[test]
    fn gc_example_value() {
        // Terms by hand: 0.1, 1/√10, 0.01, 0.01, 0.05, √0.2·0.5.
        let expected = 0.1 + 10f64.sqrt().recip() + 0.01 + 0.01 + 0.05 + 0.2f64.sqrt() * 0.5;
        let got = gc_utility_bound(&gc_example()).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got - 0.709834563767).abs() < 1e-11);
    }

    #[test]
    fn dc_example_value() {
        // √L·D²/(ηCT) = 1/400, D/√(ηT) = 1/√200,
        // min(0.1/0.5^1.25, √(0.001/1)), √0.2·0.1/√2, 2·0.2·16/2, √0.4·4.
        let expected = 0.0025
            + 200f64.sqrt().recip()
            + (0.1 / 0.5f64.powf(1.25)).min(0.001f64.sqrt())
            + 0.2f64.sqrt() * 0.1 / 2f64.sqrt()
            + 3.2
            + 0.4f64.sqrt() * 4.0;
        let got = dc_utility_bound(&dc_example()).unwrap();
        assert!((got - expected).abs() < 1e-13);
        assert!((got - 5.86627835946).abs() < 1e-10, "{got}");
    }

    #[test]
    fn multiplier_is_linear() {
        let q = gc_example();
        let one = gc_utility_bound(&q).unwrap();
        let two = gc_utility_bound(&q.with_constant(2.0)).unwrap();
        assert_eq!(two, 2.0 * one);
        let q = dc_example();
        let one = dc_utility_bound(&q).unwrap();
        assert!((dc_utility_bound(&q.with_constant(3.0)).unwrap() - 3.0 * one).abs() < 1e-14);
        assert!(gc_utility_bound(&gc_example().with_constant(0.0)).is_err());
    }

    #[test]
    fn gc_vanishes_without_noise() {
        let mut q = gc_example();
        q.sgd_sigma = 0.0;
        q.mech.sigma_dp = 0.0;
        q.mech.t_iters = 1_000_000_000;
        assert!(gc_utility_bound(&q).unwrap() < 1e-3);
    }

    #[test]
    fn dc_limits() {
        let mut q = dc_example();
        q.mech.sigma_dp = 0.0;
        let t = dc_utility_terms(&q).unwrap();
        assert_eq!((t[4], t[5]), (0.0, 0.0));
        q.mech.diameter_d = Some(1e-12);
        let t = dc_utility_terms(&q).unwrap();
        assert!(t[0] < 1e-20 && t[1] < 1e-10);
    }

    #[test]
    fn step_size_precondition() {
        let mut q = gc_example();
        q.mech.eta = 0.2;
        assert!(matches!(gc_utility_bound(&q), Err(Error::Precondition(_))));
        q.allow_step_violation = true;
        assert!(gc_utility_bound(&q).is_ok());
        let mut q = dc_example();
        q.mech.eta = 0.46;
        assert!(dc_utility_bound(&q).is_err());
        q.strong_mu = None;
        q.mech.eta = 0.2;
        assert!(dc_utility_bound(&q).is_err());
    }

    #[test]
    fn term_monotonicity() {
        let q = gc_example();
        let base = gc_utility_terms(&q).unwrap();
        let mut longer = q;
        longer.mech.t_iters = 400;
        let later = gc_utility_terms(&longer).unwrap();
        assert!(later[0] <= base[0] && later[1] <= base[1]);
        let mut noisier = q;
        noisier.mech.sigma_dp = 1.0;
        assert!(gc_utility_bound(&noisier).unwrap() >= gc_utility_bound(&q).unwrap());
    }

    #[test]
    fn tradeoff_monotone_in_budget() {
        let q = gc_example();
        let a = tradeoff_bound_gc(&q, 2.0, 0.5).unwrap();
        let b = tradeoff_bound_gc(&q, 2.0, 1.0).unwrap();
        assert!(b < a);
        let q = dc_example();
        assert!(tradeoff_bound_dc(&q, 2.0, 1.0).unwrap() < tradeoff_bound_dc(&q, 2.0, 0.5).unwrap());
        assert!(tradeoff_bound_gc(&gc_example(), 2.0, 0.0).is_err());
    }

    #[test]
    fn gc_optimal_t_minimizes_t_terms() {
        let q = gc_example();
        let (alpha, eps) = (3.0, 0.8);
        let t_star = gc_tradeoff_optimal_t(&q, alpha, eps).unwrap();
        let t_part = |t: f64| {
            let mut at = q;
            at.mech.t_iters = 1;
            // Evaluate the T-dependent terms at real-valued T directly.
            let m = &at.mech;
            let var = alpha * m.clip_c * m.clip_c * t / (eps * m.n as f64 * m.b as f64);
            let (eta, c, d, l) = (m.eta, m.clip_c, m.dim as f64, m.smooth_l);
            1.0 / (eta * c * t) + 1.0 / (eta * t).sqrt() + d * l * eta * var / c + (d * l * eta * var).sqrt()
        };
        let best = (1..=20_000)
            .map(|k| t_star * (0.5 + k as f64 * 1e-4))
            .min_by(|a, b| t_part(*a).total_cmp(&t_part(*b)))
            .unwrap();
        assert!((best / t_star - 1.0).abs() < 2e-4, "{best} vs {t_star}");
    }

    #[test]
    fn dc_tradeoff_noise_saturates() {
        let q = dc_example();
        let t_bar = dc_saturation_t(&q).unwrap();
        let mut a = q;
        a.mech.t_iters = t_bar.ceil() as u64 + 1;
        let mut b = q;
        b.mech.t_iters = 10 * a.mech.t_iters;
        let ta = tradeoff_terms_dc(&a, 2.0, 1.0).unwrap();
        let tb = tradeoff_terms_dc(&b, 2.0, 1.0).unwrap();
        assert_eq!(tradeoff_sigma_dc(&a, 2.0, 1.0).unwrap(), tradeoff_sigma_dc(&b, 2.0, 1.0).unwrap());
        assert_eq!(&ta[2..], &tb[2..]);
        assert!(tb[0] < ta[0] && tb[1] < ta[1]);
    }

    fn rec_query(target: UtilityTarget, s: f64) -> UtilityQuery {
        let m = MechanismConfig {
            n: 10_000,
            b: 64,
            eta: 0.1,
            clip_c: 1.0,
            diameter_d: Some(1.0),
            sigma_dp: 1.0,
            t_iters: 1,
            smooth_l: 1.0,
            dim: 10,
        };
        UtilityQuery::new(m, s, target).with_mu(0.5)
    }

    #[test]
    fn recommend_regime_example() {
        let r = recommend(&rec_query(UtilityTarget::GcGradientNorm, 0.01), 1.0, 1e-5).unwrap();
        assert_eq!(r.regime, RecommendRegime::GcLargeNoise);
        let ratio = 10.0 * (1e5f64).ln() / 1e8;
        assert!((ratio - 1.151e-6).abs() < 1e-9);
        let r = recommend(&rec_query(UtilityTarget::GcGradientNorm, 0.0), 1.0, 1e-5).unwrap();
        assert_eq!(r.regime, RecommendRegime::GcSmallNoise);
        assert!((r.eta - 64.0).abs() < 1e-12);
        assert!((r.predicted_utility - ratio).abs() < 1e-15);
        let r = recommend(&rec_query(UtilityTarget::DcOptimalityGap, 0.0), 1.0, 1e-5).unwrap();
        assert_eq!(r.regime, RecommendRegime::DcSmallNoise);
    }

    #[test]
    fn recommend_tie_goes_to_small_noise() {
        // d=4, L=1, n=16, ε=1, log(1/δ)=4: dL log/(ε²n²) = 1/16 = σ_SGD².
        let mut q = rec_query(UtilityTarget::GcGradientNorm, 0.25);
        q.mech.n = 16;
        q.mech.b = 2;
        q.mech.dim = 4;
        let delta = (-4f64).exp();
        assert_eq!((1.0 / delta).ln(), 4.0);
        assert_eq!(recommend(&q, 1.0, delta).unwrap().regime, RecommendRegime::GcSmallNoise);
        q.sgd_sigma = 0.25 * (1.0 + 1e-12);
        assert_eq!(recommend(&q, 1.0, delta).unwrap().regime, RecommendRegime::GcLargeNoise);
    }

    #[test]
    fn recommend_gc_large_noise_balances_clip() {
        // C minimizes C√(dL log)/(εn) + σ⁴/C² up to the factor 2^{1/3}.
        let q = rec_query(UtilityTarget::GcGradientNorm, 0.05);
        let r = recommend(&q, 1.0, 1e-5).unwrap();
        let root = (10.0 * 1e5f64.ln()).sqrt() / 1e4;
        let g = |c: f64| c * root + 0.05f64.powi(4) / (c * c);
        let exact = (2.0 * 0.05f64.powi(4) / root).cbrt();
        assert!((r.clip_c / exact - 0.5f64.cbrt()).abs() < 1e-12);
        assert!(g(exact) <= g(r.clip_c));
    }

    #[test]
    fn recommend_fuzz_positive_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(10..1_000_000u64);
            let m = MechanismConfig {
                n,
                b: rng.random_range(1..=n.min(1024)),
                eta: 0.1,
                clip_c: 1.0,
                diameter_d: Some(10f64.powf(rng.random_range(-2.0..2.0))),
                sigma_dp: 1.0,
                t_iters: 1,
                smooth_l: 10f64.powf(rng.random_range(-2.0..2.0)),
                dim: rng.random_range(1..1000),
            };
            let s = if rng.random_bool(0.2) { 0.0 } else { 10f64.powf(rng.random_range(-4.0..1.0)) };
            let eps = 10f64.powf(rng.random_range(-1.0..1.0));
            let delta = 10f64.powf(rng.random_range(-9.0..-2.0));
            for target in [UtilityTarget::GcGradientNorm, UtilityTarget::DcOptimalityGap] {
                let q = UtilityQuery::new(m, s, target).with_mu(m.smooth_l * rng.random_range(0.01..1.0));
                let r = recommend(&q, eps, delta).unwrap();
                for v in [r.eta, r.clip_c, r.t_iters, r.predicted_utility] {
                    assert!(v > 0.0 && v.is_finite(), "{r:?}");
                }
            }
        }
    }

    #[test]
    fn recommend_rejects_bad_budget() {
        let q = rec_query(UtilityTarget::GcGradientNorm, 0.01);
        assert!(recommend(&q, 0.0, 1e-5).is_err());
        assert!(recommend(&q, 1.0, 1.0).is_err());
    }
}
