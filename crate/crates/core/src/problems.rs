//! Synthetic finite-sum objectives with exact per-sample gradients and known
//! constants, used to exercise the optimizer and the utility bounds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradient-norm target for the logistic optimum.
pub const LOGISTIC_OPTIMUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Quadratic,
    Logistic,
}

/// Per-sample parameters.
#[derive(Debug, Clone)]
pub enum ProblemData {
    /// `l_ξ(θ) = ½(θ − c_ξ)ᵀA_ξ(θ − c_ξ)`.
    Quadratic {
        hessians: Vec<DMatrix<f64>>,
        centers: Vec<DVector<f64>>,
    },
    /// `l_ξ(θ) = log(1 + exp(−y_ξ x_ξᵀθ)) + λ/2 ‖θ‖²`.
    Logistic {
        features: Vec<DVector<f64>>,
        labels: Vec<f64>,
        ridge: f64,
    },
}

/// A finite-sum objective `l(θ) = (1/n) Σ l_ξ(θ)` with its constants.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    data: ProblemData,
    dim: usize,
    /// Lipschitz constant of every per-sample gradient.
    pub smooth_l: f64,
    /// Strong convexity of the population loss.
    pub strong_mu: f64,
    /// Probe-based σ_SGD, if one has been estimated.
    pub sgd_sigma: Option<f64>,
    optimum: DVector<f64>,
    optimum_loss: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    (max, min)
}

impl ProblemSpec {
    /// Builds a quadratic problem. The population Hessian must be positive
    /// definite; `smooth_l` is its largest eigenvalue and `strong_mu` its
    /// smallest. Per-sample Hessians must be symmetric PSD with largest
    /// eigenvalue at most `smooth_l` (true whenever they are all equal).
    pub fn quadratic(hessians: Vec<DMatrix<f64>>, centers: Vec<DVector<f64>>) -> Result<Self> {
        let n = hessians.len();
        if n == 0 || centers.len() != n {
            return Err(Error::param(
                "quadratic problem needs matching nonempty hessian and center lists",
            ));
        }
        let dim = centers[0].len();
        if dim == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        let mut mean_h = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        let mut per_sample_max = 0.0f64;
        for (a, c) in hessians.iter().zip(&centers) {
            if a.nrows() != dim || a.ncols() != dim || c.len() != dim {
                return Err(Error::param("inconsistent dimensions in quadratic data"));
            }
            if (a - a.transpose()).amax() > 1e-12 * (1.0 + a.amax()) {
                return Err(Error::param("per-sample hessian is not symmetric"));
            }
            let (hi, lo) = symmetric_extremes(a);
            if lo < -1e-12 * (1.0 + hi.abs()) {
                return Err(Error::param("per-sample hessian is not positive semidefinite"));
            }
            per_sample_max = per_sample_max.max(hi);
            mean_h += a;
            rhs += a * c;
        }
        mean_h /= n as f64;
        rhs /= n as f64;
        let (smooth_l, strong_mu) = symmetric_extremes(&mean_h);
        if !(strong_mu > 0.0) {
            return Err(Error::param("population hessian must be positive definite"));
        }
        if per_sample_max > smooth_l * (1.0 + 1e-9) {
            return Err(Error::param(format!(
                "per-sample smoothness {per_sample_max} exceeds population smoothness {smooth_l}"
            )));
        }
        let optimum = mean_h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("cholesky of mean hessian failed".into()))?
            .solve(&rhs);
        let mut spec = ProblemSpec {
            data: ProblemData::Quadratic { hessians, centers },
            dim,
            smooth_l,
            strong_mu,
            sgd_sigma: None,
            optimum,
            optimum_loss: 0.0,
        };
        spec.optimum_loss = spec.population_loss(&spec.optimum.clone())?;
        Ok(spec)
    }

    /// Builds a ridge-regularized logistic regression problem; labels must
    /// be ±1 and `ridge > 0`. The optimum is found by damped Newton.
    pub fn logistic(features: Vec<DVector<f64>>, labels: Vec<f64>, ridge: f64) -> Result<Self> {
        let n = features.len();
        if n == 0 || labels.len() != n {
            return Err(Error::param(
                "logistic problem needs matching nonempty feature and label lists",
            ));
        }
        if !(ridge > 0.0) || !ridge.is_finite() {
            return Err(Error::param(format!("ridge must be positive, got {ridge}")));
        }
        let dim = features[0].len();
        if dim == 0 || features.iter().any(|x| x.len() != dim) {
            return Err(Error::param("inconsistent feature dimensions"));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::param("labels must be +1 or -1"));
        }
        let max_sq = features.iter().map(|x| x.norm_squared()).fold(0.0, f64::max);
        let mut spec = ProblemSpec {
            data: ProblemData::Logistic {
                features,
                labels,
                ridge,
            },
            dim,
            smooth_l: max_sq / 4.0 + ridge,
            strong_mu: ridge,
            sgd_sigma: None,
            optimum: DVector::zeros(dim),
            optimum_loss: 0.0,
        };
        spec.optimum = spec.newton_optimum()?;
        spec.optimum_loss = spec.population_loss(&spec.optimum.clone())?;
        Ok(spec)
    }

    fn newton_optimum(&self) -> Result<DVector<f64>> {
        let ProblemData::Logistic {
            features,
            labels,
            ridge,
        } = &self.data
        else {
            unreachable!("newton_optimum is only called for logistic problems");
        };
        let n = features.len() as f64;
        let mut theta = DVector::zeros(self.dim);
        for _ in 0..200 {
            let grad = self.population_gradient(&theta)?;
            if grad.norm() <= LOGISTIC_OPTIMUM_TOL {
                return Ok(theta);
            }
            let mut hess = DMatrix::identity(self.dim, self.dim) * *ridge;
            for (x, &y) in features.iter().zip(labels) {
                let s = sigmoid(y * x.dot(&theta));
                hess.ger(s * (1.0 - s) / n, x, x, 1.0);
            }
            let dir = hess
                .cholesky()
                .ok_or_else(|| Error::Numerical("logistic hessian not positive definite".into()))?
                .solve(&(-&grad));
            // Backtracking on the loss keeps early steps from overshooting.
            let f0 = self.population_loss(&theta)?;
            let slope = grad.dot(&dir);
            let mut step = 1.0;
            loop {
                let cand = &theta + &dir * step;
                if self.population_loss(&cand)? <= f0 + 1e-4 * step * slope || step < 1e-12 {
                    theta = cand;
                    break;
                }
                step *= 0.5;
            }
        }
        let g = self.population_gradient(&theta)?.norm();
        if g <= LOGISTIC_OPTIMUM_TOL * 10.0 {
            Ok(theta)
        } else {
            Err(Error::Numerical(format!(
                "newton did not converge, gradient norm {g}"
            )))
        }
    }

    /// Random quadratic sharing one Hessian across samples, with eigenvalues
    /// evenly spaced in `[0.25, 1]` (so `L = 1`) and centers scattered with
    /// standard deviation `spread` around a standard normal point.
    pub fn synthetic_quadratic(dim: usize, n: usize, seed: u64, spread: f64) -> Result<Self> {
        if dim == 0 || n == 0 {
            return Err(Error::param("dim and n must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(dim, dim, |_, _| gauss(&mut rng));
        let q = raw.qr().q();
        let eigs = DVector::from_fn(dim, |i, _| {
            if dim == 1 {
                1.0
            } else {
                1.0 - 0.75 * i as f64 / (dim - 1) as f64
            }
        });
        let mut a: DMatrix<f64> = &q * DMatrix::from_diagonal(&eigs) * q.transpose();
        a = (&a + a.transpose()) * 0.5;
        let anchor = DVector::from_fn(dim, |_, _| gauss(&mut rng));
        let centers = (0..n)
            .map(|_| {
                &anchor
                    + DVector::from_fn(dim, |_, _| spread * gauss(&mut rng))
            })
            .collect();
        Self::quadratic(vec![a; n], centers)
    }

    /// Random logistic data: features `N(0, I/dim)`, labels from a random
    /// linear teacher, each flipped with probability `label_noise`.
    pub fn synthetic_logistic(
        dim: usize,
        n: usize,
        seed: u64,
        ridge: f64,
        label_noise: f64,
    ) -> Result<Self> {
        if dim == 0 || n == 0 {
            return Err(Error::param("dim and n must be positive"));
        }
        if !(0.0..=0.5).contains(&label_noise) {
            return Err(Error::param("label_noise must lie in [0, 0.5]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (dim as f64).sqrt().recip();
        let teacher = DVector::from_fn(dim, |_, _| gauss(&mut rng) * 3.0);
        let unit = Uniform::new(0.0, 1.0).expect("valid range");
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x = DVector::from_fn(dim, |_, _| scale * gauss(&mut rng));
            let mut y = if teacher.dot(&x) >= 0.0 { 1.0 } else { -1.0 };
            if unit.sample(&mut rng) < label_noise {
                y = -y;
            }
            features.push(x);
            labels.push(y);
        }
        Self::logistic(features, labels, ridge)
    }

    pub fn kind(&self) -> ProblemKind {
        match self.data {
            ProblemData::Quadratic { .. } => ProblemKind::Quadratic,
            ProblemData::Logistic { .. } => ProblemKind::Logistic,
        }
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn n(&self) -> usize {
        match &self.data {
            ProblemData::Quadratic { centers, .. } => centers.len(),
            ProblemData::Logistic { features, .. } => features.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exact minimizer of the population loss (numerically converged for
    /// logistic).
    pub fn optimum(&self) -> &DVector<f64> {
        &self.optimum
    }

    fn check(&self, theta: &DVector<f64>, xi: usize) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::param(format!(
                "theta has dimension {}, expected {}",
                theta.len(),
                self.dim
            )));
        }
        if xi >= self.n() {
            return Err(Error::param(format!(
                "sample index {xi} out of range for n={}",
                self.n()
            )));
        }
        Ok(())
    }

    pub fn sample_loss(&self, theta: &DVector<f64>, xi: usize) -> Result<f64> {
        self.check(theta, xi)?;
        Ok(match &self.data {
            ProblemData::Quadratic { hessians, centers } => {
                let diff = theta - &centers[xi];
                0.5 * diff.dot(&(&hessians[xi] * &diff))
            }
            ProblemData::Logistic {
                features,
                labels,
                ridge,
            } => {
                softplus(-labels[xi] * features[xi].dot(theta))
                    + 0.5 * ridge * theta.norm_squared()
            }
        })
    }

    /// Writes `∇l_ξ(θ)` into `out` without allocating.
    pub fn sample_gradient_into(
        &self,
        theta: &DVector<f64>,
        xi: usize,
        out: &mut DVector<f64>,
    ) -> Result<()> {
        self.check(theta, xi)?;
        match &self.data {
            ProblemData::Quadratic { hessians, centers } => {
                out.copy_from(theta);
                *out -= &centers[xi];
                *out = &hessians[xi] * &*out;
            }
            ProblemData::Logistic {
                features,
                labels,
                ridge,
            } => {
                let y = labels[xi];
                let coef = -y * sigmoid(-y * features[xi].dot(theta));
                out.copy_from(theta);
                *out *= *ridge;
                out.axpy(coef, &features[xi], 1.0);
            }
        }
        Ok(())
    }

    pub fn sample_gradient(&self, theta: &DVector<f64>, xi: usize) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.dim);
        self.sample_gradient_into(theta, xi, &mut g)?;
        Ok(g)
    }

    pub fn population_loss(&self, theta: &DVector<f64>) -> Result<f64> {
        let n = self.n();
        let mut total = 0.0;
        for xi in 0..n {
            total += self.sample_loss(theta, xi)?;
        }
        Ok(total / n as f64)
    }

    pub fn population_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        let mut total = DVector::zeros(self.dim);
        let mut g = DVector::zeros(self.dim);
        for xi in 0..n {
            self.sample_gradient_into(theta, xi, &mut g)?;
            total += &g;
        }
        Ok(total / n as f64)
    }

    /// `l(θ) − l(θ*)`, clamped at 0 against rounding.
    pub fn loss_gap(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok((self.population_loss(theta)? - self.optimum_loss).max(0.0))
    }

    /// Exact `E_ξ‖∇l_ξ(θ) − ∇l(θ)‖²` by enumeration over all samples.
    pub fn gradient_variance(&self, theta: &DVector<f64>) -> Result<f64> {
        let mean = self.population_gradient(theta)?;
        let mut g = DVector::zeros(self.dim);
        let mut total = 0.0;
        for xi in 0..self.n() {
            self.sample_gradient_into(theta, xi, &mut g)?;
            total += (&g - &mean).norm_squared();
        }
        Ok(total / self.n() as f64)
    }

    /// σ_SGD as the square root of the largest exact gradient variance over
    /// the probe points. A lower bound on any σ_SGD valid for all θ.
    pub fn estimate_sgd_sigma(&self, probes: &[DVector<f64>]) -> Result<f64> {
        if probes.is_empty() {
            return Err(Error::param("at least one probe point is required"));
        }
        let mut worst = 0.0f64;
        for p in probes {
            worst = worst.max(self.gradient_variance(p)?);
        }
        Ok(worst.sqrt())
    }

    /// Stores [`estimate_sgd_sigma`](Self::estimate_sgd_sigma) in `sgd_sigma`.
    pub fn with_sgd_sigma(mut self, probes: &[DVector<f64>]) -> Result<Self> {
        self.sgd_sigma = Some(self.estimate_sgd_sigma(probes)?);
        Ok(self)
    }

    /// The problem restricted to the given samples, with constants and
    /// optimum recomputed.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::param(format!("sample index {bad} out of range")));
        }
        match &self.data {
            ProblemData::Quadratic { hessians, centers } => Self::quadratic(
                indices.iter().map(|&i| hessians[i].clone()).collect(),
                indices.iter().map(|&i| centers[i].clone()).collect(),
            ),
            ProblemData::Logistic {
                features,
                labels,
                ridge,
            } => Self::logistic(
                indices.iter().map(|&i| features[i].clone()).collect(),
                indices.iter().map(|&i| labels[i]).collect(),
                *ridge,
            ),
        }
    }
}

fn default_lambda() -> f64 {
    1e-2
}

fn default_spread() -> f64 {
    1.0
}

fn default_label_noise() -> f64 {
    0.1
}

/// `[problem]` section of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub dim: usize,
    pub n: usize,
    /// Seed for synthetic data generation.
    #[serde(default)]
    pub seed: u64,
    /// Ridge coefficient (logistic only).
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Scatter of per-sample minimizers (quadratic only).
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Label flip probability (logistic only).
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        match self.kind {
            ProblemKind::Quadratic => {
                ProblemSpec::synthetic_quadratic(self.dim, self.n, self.seed, self.spread)
            }
            ProblemKind::Logistic => ProblemSpec::synthetic_logistic(
                self.dim,
                self.n,
                self.seed,
                self.lambda,
                self.label_noise,
            ),
        }
    }
}
