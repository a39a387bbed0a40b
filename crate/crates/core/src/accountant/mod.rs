//! Closed-form Rényi DP accounting for DPSGD with gradient clipping (GC) and
//! with double clipping (DC), plus the baseline bounds used for comparison.
//!
//! Every evaluator is a pure function of a [`MechanismConfig`] and a Rényi
//! order. Bounds that only hold under the sampled-Gaussian regime are checked
//! and fall back to the general form when their constraints fail.

mod bounds;
mod convert;
mod sgm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bounds::{
    altschuler_bound, composition_bound, crossover_t, dc_bound, dc_converged, feldman_bound,
    gc_bound, kong_bound, optimal_beta, per_step_general, per_step_strengthened, shift_term,
    trivial_bound,
};
pub use convert::{
    best_dp, calibrate_sigma, default_alpha_grid, log_spaced, rdp_to_dp, DpResult,
    CALIBRATION_BRACKET, CALIBRATION_REL_TOL,
};
pub use sgm::{
    alpha_star, sgm_order_constraints, sgm_rdp_bound, ALPHA_GRID_MAX, ALPHA_GRID_STEP,
    SGM_MAX_SAMPLING_RATE, SGM_MIN_SIGMA,
};

/// Hyperparameters of one DPSGD run together with the problem constants the
/// bounds depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    /// Dataset size.
    pub n: u64,
    /// Mini-batch size, `1 <= b <= n`.
    pub b: u64,
    /// Step size.
    pub eta: f64,
    /// Per-sample gradient clipping norm.
    pub clip_c: f64,
    /// Radius of the parameter ball. `None` means an unbounded domain (GC).
    pub diameter_d: Option<f64>,
    /// Per-coordinate standard deviation of the injected Gaussian noise.
    pub sigma_dp: f64,
    /// Number of updates.
    pub t_iters: u64,
    /// Smoothness constant of the per-sample losses.
    pub smooth_l: f64,
    /// Model dimension.
    pub dim: usize,
}

impl MechanismConfig {
    /// Structural validation shared by the accountant and the optimizer.
    ///
    /// Zero is accepted for `eta`, `clip_c`, `sigma_dp` and the diameter so
    /// degenerate runs can be expressed; individual bounds tighten this.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n must be at least 1"));
        }
        if self.b == 0 || self.b > self.n {
            return Err(Error::param(format!(
                "batch size b={} must satisfy 1 <= b <= n={}",
                self.b, self.n
            )));
        }
        if self.dim == 0 {
            return Err(Error::param("dim must be at least 1"));
        }
        nonneg_finite("eta", self.eta)?;
        nonneg_finite("sigma_dp", self.sigma_dp)?;
        nonneg_finite("smooth_l", self.smooth_l)?;
        if self.clip_c.is_nan() || self.clip_c < 0.0 {
            return Err(Error::param(format!(
                "clip_c must be nonnegative, got {}",
                self.clip_c
            )));
        }
        if let Some(d) = self.diameter_d {
            nonneg_finite("diameter_d", d)?;
        }
        Ok(())
    }

    /// Validation for privacy bounds: noise and step size must be positive
    /// and the clipping norm finite.
    pub fn validate_for_bound(&self) -> Result<()> {
        self.validate()?;
        if self.sigma_dp <= 0.0 {
            return Err(Error::param(format!(
                "sigma_dp must be positive, got {}",
                self.sigma_dp
            )));
        }
        if self.eta <= 0.0 {
            return Err(Error::param(format!("eta must be positive, got {}", self.eta)));
        }
        if !self.clip_c.is_finite() {
            return Err(Error::param("clip_c must be finite for accounting"));
        }
        Ok(())
    }

    /// Sampling rate `b / n`.
    pub fn sampling_rate(&self) -> f64 {
        self.b as f64 / self.n as f64
    }

    pub(crate) fn require_diameter(&self) -> Result<f64> {
        self.diameter_d
            .ok_or_else(|| Error::param("diameter_d is required for a bounded-domain bound"))
    }

    pub fn with_sigma(mut self, sigma_dp: f64) -> Self {
        self.sigma_dp = sigma_dp;
        self
    }

    pub fn with_t(mut self, t_iters: u64) -> Self {
        self.t_iters = t_iters;
        self
    }

    pub fn with_diameter(mut self, d: Option<f64>) -> Self {
        self.diameter_d = d;
        self
    }
}

fn nonneg_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::param(format!(
            "{name} must be finite and nonnegative, got {v}"
        )));
    }
    Ok(())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::param(format!(
            "Renyi order alpha must be a finite value > 1, got {alpha}"
        )));
    }
    Ok(())
}

/// How the noise variance is split between the per-step privacy term and the
/// shift-reduction term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Beta {
    /// 1 for the linear branch, the closed-form optimum for the converged one.
    #[default]
    Auto,
    Fixed(f64),
}

impl Beta {
    pub(crate) fn validate(self) -> Result<()> {
        if let Beta::Fixed(b) = self {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::param(format!("beta must lie in (0, 1], got {b}")));
            }
        }
        Ok(())
    }
}

/// Which per-step constant is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `2αC²/(βnbσ²)` per step, no extra assumptions.
    #[default]
    General,
    /// `8αC²/(βn²σ²)` per step; needs `b <= n/5`, `σ > 8C/(b√β)` and
    /// `α <= α*(b/n, b√βσ/(2C))`.
    Strengthened,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Mode::General),
            "strengthened" => Ok(Mode::Strengthened),
            other => Err(Error::param(format!("unknown mode '{other}'"))),
        }
    }
}

/// A Rényi order together with the noise split and accounting mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdpQuery {
    pub alpha: f64,
    pub beta: Beta,
    pub mode: Mode,
}

impl RdpQuery {
    pub fn new(alpha: f64) -> Self {
        RdpQuery {
            alpha,
            beta: Beta::Auto,
            mode: Mode::General,
        }
    }

    pub fn strengthened(mut self) -> Self {
        self.mode = Mode::Strengthened;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Beta::Fixed(beta);
        self
    }
}

/// Bound families that can be evaluated, compared and calibrated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Unbounded domain, linear in T.
    GcLinear,
    /// Bounded domain, saturating in T.
    Dc,
    /// Post-processing plus one Gaussian mechanism on the whole domain.
    Trivial,
    /// Privacy amplification by iteration for convex Lipschitz losses.
    Feldman,
    /// Convex Lipschitz losses on a bounded domain.
    Altschuler,
    /// Weakly convex losses with cyclic traversal.
    Kong,
    /// Sampled Gaussian mechanism composed over all T steps.
    Composition,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::GcLinear,
        Family::Dc,
        Family::Trivial,
        Family::Feldman,
        Family::Altschuler,
        Family::Kong,
        Family::Composition,
    ];

    /// Families taken from prior work, compared against in curves.
    pub const BASELINES: [Family; 4] = [
        Family::Feldman,
        Family::Altschuler,
        Family::Kong,
        Family::Composition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::GcLinear => "gc_linear",
            Family::Dc => "dc",
            Family::Trivial => "trivial",
            Family::Feldman => "feldman",
            Family::Altschuler => "altschuler",
            Family::Kong => "kong",
            Family::Composition => "composition",
        }
    }

    /// Evaluates this family's bound at order `alpha`.
    pub fn evaluate(
        self,
        cfg: &MechanismConfig,
        alpha: f64,
        opts: &BoundOptions,
    ) -> Result<RdpResult> {
        let query = RdpQuery {
            alpha,
            beta: opts.beta,
            mode: opts.mode,
        };
        match self {
            Family::GcLinear => gc_bound(cfg, &query),
            Family::Dc => dc_bound(cfg, &query),
            Family::Trivial => trivial_bound(cfg, alpha),
            Family::Feldman => feldman_bound(cfg, alpha, &opts.baseline),
            Family::Altschuler => altschuler_bound(cfg, alpha, &opts.baseline),
            Family::Kong => kong_bound(cfg, alpha, &opts.baseline),
            Family::Composition => composition_bound(cfg, alpha),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gc" | "gc_linear" => Ok(Family::GcLinear),
            "dc" => Ok(Family::Dc),
            "trivial" => Ok(Family::Trivial),
            "feldman" => Ok(Family::Feldman),
            "altschuler" => Ok(Family::Altschuler),
            "kong" => Ok(Family::Kong),
            "composition" => Ok(Family::Composition),
            other => Err(Error::param(format!("unknown bound family '{other}'"))),
        }
    }
}

/// Which closed form attained the DC minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Linear,
    Converged,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Linear => "linear",
            Regime::Converged => "converged",
        })
    }
}

/// Outcome of the sampled-Gaussian admissibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `b <= n/5`.
    pub batch_ok: bool,
    /// Effective SGM noise multiplier exceeds 4.
    pub noise_ok: bool,
    /// `α <= α*`.
    pub order_ok: bool,
    /// `α*` when it could be computed.
    pub alpha_star: Option<f64>,
    /// Noise split the checks were evaluated at.
    pub beta: f64,
}

impl ConstraintReport {
    pub fn all_ok(&self) -> bool {
        self.batch_ok && self.noise_ok && self.order_ok
    }
}

/// A computed (α, ε)-RDP guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpResult {
    pub alpha: f64,
    pub epsilon: f64,
    pub family: Family,
    /// Present exactly when `family == Dc`.
    pub regime: Option<Regime>,
    pub beta_used: Option<f64>,
    /// False when a strengthened or sampled-Gaussian precondition failed.
    pub constraints_ok: bool,
    pub constraints: Option<ConstraintReport>,
}

impl RdpResult {
    pub(crate) fn plain(family: Family, alpha: f64, epsilon: f64) -> Self {
        RdpResult {
            alpha,
            epsilon,
            family,
            regime: None,
            beta_used: None,
            constraints_ok: true,
            constraints: None,
        }
    }
}

/// Constants for the baseline bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    /// Lipschitz constant M (Feldman, Altschuler).
    pub lipschitz_m: Option<f64>,
    /// Weak-convexity constant m (Kong).
    pub weak_convex_m: Option<f64>,
    /// Multiplier standing in for the unstated big-O constants.
    pub multiplier: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            lipschitz_m: None,
            weak_convex_m: None,
            multiplier: 1.0,
        }
    }
}

impl BaselineParams {
    pub fn new(lipschitz_m: f64, weak_convex_m: f64) -> Self {
        BaselineParams {
            lipschitz_m: Some(lipschitz_m),
            weak_convex_m: Some(weak_convex_m),
            multiplier: 1.0,
        }
    }
}

/// Options common to every family when evaluated generically.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundOptions {
    pub mode: Mode,
    pub beta: Beta,
    pub baseline: BaselineParams,
}
