//! DPSGD with per-sample gradient clipping and optional projection onto the
//! ball of radius D.

use std::io::Write;

use nalgebra::DVector;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::MechanismConfig;
use crate::error::{Error, Result};
use crate::fmt::sig;
use crate::problems::ProblemSpec;

/// How mini-batches are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Exactly `b` distinct samples per step.
    #[default]
    UniformWithoutReplacement,
    /// Each sample included independently with probability `b/n`; the
    /// clipped sum is still divided by `b`.
    Poisson,
}

impl std::str::FromStr for Sampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_without_replacement" => Ok(Sampling::UniformWithoutReplacement),
            "poisson" => Ok(Sampling::Poisson),
            other => Err(Error::param(format!("unknown sampling scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub mech: MechanismConfig,
    pub seed: u64,
    pub sampling: Sampling,
    pub record_every: u64,
}

impl TrainConfig {
    pub fn new(mech: MechanismConfig, seed: u64) -> Self {
        TrainConfig {
            mech,
            seed,
            sampling: Sampling::default(),
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mech.validate()?;
        if self.record_every == 0 {
            return Err(Error::param("record_every must be at least 1"));
        }
        Ok(())
    }

    fn check_problem(&self, problem: &ProblemSpec) -> Result<()> {
        if self.mech.n as usize != problem.n() || self.mech.dim != problem.dim() {
            return Err(Error::Config(format!(
                "mechanism has n={}, d={} but problem has n={}, d={}",
                self.mech.n,
                self.mech.dim,
                problem.n(),
                problem.dim()
            )));
        }
        Ok(())
    }
}

/// `g·min(1, c/‖g‖)`. An infinite `c` disables clipping.
pub fn clip(g: &DVector<f64>, c: f64) -> DVector<f64> {
    let mut out = g.clone();
    clip_in_place(&mut out, c);
    out
}

/// Clips in place and reports whether the vector was rescaled.
pub fn clip_in_place(g: &mut DVector<f64>, c: f64) -> bool {
    let norm = g.norm();
    if norm > c {
        *g *= c / norm;
        true
    } else {
        false
    }
}

/// Euclidean projection onto `{θ : ‖θ‖ <= radius}`.
pub fn project(theta: &DVector<f64>, radius: f64) -> DVector<f64> {
    let mut out = theta.clone();
    project_in_place(&mut out, radius);
    out
}

/// Projects in place and reports whether the point moved.
pub fn project_in_place(theta: &mut DVector<f64>, radius: f64) -> bool {
    let norm = theta.norm();
    if norm > radius {
        *theta *= radius / norm;
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub theta: DVector<f64>,
    pub t: u64,
}

impl TrainState {
    /// `θ_0 = 0`.
    pub fn initial(dim: usize) -> Self {
        TrainState {
            theta: DVector::zeros(dim),
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub batch_size: usize,
    pub clip_fraction: f64,
    pub projected: bool,
}

/// Generator for step `t`: ChaCha8 seeded from `seed`, on stream `t`.
pub fn step_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

fn draw_batch(rng: &mut ChaCha8Rng, n: usize, b: usize, sampling: Sampling) -> Vec<usize> {
    match sampling {
        Sampling::UniformWithoutReplacement => index::sample(rng, n, b).into_vec(),
        Sampling::Poisson => {
            let q = b as f64 / n as f64;
            (0..n).filter(|_| rng.random::<f64>() < q).collect()
        }
    }
}

/// One DPSGD update. The batch and the noise depend only on
/// `(cfg.seed, state.t)`; noise coordinates are `σ_DP` times standard
/// normals from `rand_distr`'s ziggurat sampler.
pub fn step(
    state: &TrainState,
    problem: &ProblemSpec,
    cfg: &TrainConfig,
) -> Result<(TrainState, StepReport)> {
    let mech = &cfg.mech;
    let mut rng = step_rng(cfg.seed, state.t);
    let batch = draw_batch(&mut rng, problem.n(), mech.b as usize, cfg.sampling);

    let dim = problem.dim();
    let mut sum = DVector::zeros(dim);
    let mut g = DVector::zeros(dim);
    let mut clipped = 0usize;
    for &xi in &batch {
        problem.sample_gradient_into(&state.theta, xi, &mut g)?;
        if clip_in_place(&mut g, mech.clip_c) {
            clipped += 1;
        }
        sum += &g;
    }
    let mut update = sum / mech.b as f64;
    for u in update.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *u += mech.sigma_dp * z;
    }
    let mut theta = &state.theta - update * mech.eta;
    let projected = match mech.diameter_d {
        Some(d) => project_in_place(&mut theta, d),
        None => false,
    };
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "iterate became non-finite at step {}",
            state.t + 1
        )));
    }
    let report = StepReport {
        batch_size: batch.len(),
        clip_fraction: if batch.is_empty() {
            0.0
        } else {
            clipped as f64 / batch.len() as f64
        },
        projected,
    };
    Ok((
        TrainState {
            theta,
            t: state.t + 1,
        },
        report,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    pub theta: DVector<f64>,
    pub loss_gap: f64,
    pub grad_norm: f64,
    pub clip_fraction: f64,
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn final_theta(&self) -> &DVector<f64> {
        &self.records.last().expect("trace always holds θ_0").theta
    }

    pub fn min_loss_gap(&self) -> f64 {
        self.records.iter().map(|r| r.loss_gap).fold(f64::INFINITY, f64::min)
    }

    pub fn min_grad_norm(&self) -> f64 {
        self.records.iter().map(|r| r.grad_norm).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,loss_gap,grad_norm,clip_fraction,projected")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.t,
                sig(r.loss_gap),
                sig(r.grad_norm),
                sig(r.clip_fraction),
                u8::from(r.projected)
            )?;
        }
        Ok(())
    }
}

fn record(problem: &ProblemSpec, state: &TrainState, report: Option<StepReport>) -> Result<TraceRecord> {
    Ok(TraceRecord {
        t: state.t,
        theta: state.theta.clone(),
        loss_gap: problem.loss_gap(&state.theta)?,
        grad_norm: problem.population_gradient(&state.theta)?.norm(),
        clip_fraction: report.map_or(0.0, |r| r.clip_fraction),
        projected: report.is_some_and(|r| r.projected),
    })
}

/// Drives [`step`] from `θ_0 = 0`, calling `observe` after every step.
pub fn run<F>(problem: &ProblemSpec, cfg: &TrainConfig, mut observe: F) -> Result<TrainState>
where
    F: FnMut(&TrainState, &StepReport) -> Result<()>,
{
    cfg.validate()?;
    cfg.check_problem(problem)?;
    let mut state = TrainState::initial(problem.dim());
    while state.t < cfg.mech.t_iters {
        let (next, report) = step(&state, problem, cfg)?;
        state = next;
        observe(&state, &report)?;
    }
    Ok(state)
}

/// Runs `T = cfg.mech.t_iters` steps, recording `θ_0`, every
/// `record_every`-th iterate, and the final one.
pub fn train(problem: &ProblemSpec, cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    let mut trace = TrainTrace {
        records: vec![record(problem, &TrainState::initial(problem.dim()), None)?],
    };
    let total = cfg.mech.t_iters;
    run(problem, cfg, |state, report| {
        if state.t % cfg.record_every == 0 || state.t == total {
            trace.records.push(record(problem, state, Some(*report))?);
        }
        Ok(())
    })?;
    Ok(trace)
}

/// Independent runs seeded `seed + i`, executed in parallel.
pub fn train_trials(problem: &ProblemSpec, cfg: &TrainConfig, trials: usize) -> Result<Vec<TrainTrace>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = *cfg;
            c.seed = cfg.seed.wrapping_add(i);
            train(problem, &c)
        })
        .collect()
}
