//! Loss-threshold membership inference against DPSGD-trained models, and
//! the empirical privacy estimate ε̂ derived from its error rates.

use std::io::Write;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig;
use crate::optimizer::{run, TrainConfig};
use crate::problems::ProblemSpec;

/// δ used for ε̂ unless configured otherwise.
pub const DEFAULT_MIA_DELTA: f64 = 1e-5;

const SHADOW_SALT: u64 = 0x5348_4144_4f57_0001;
const SPLIT_STREAM: u64 = u64::MAX;

/// `max{log((1−δ−FPR)/FNR), log((1−δ−FNR)/FPR)}`, clamped below at 0.
/// A zero denominator with a positive numerator gives `+∞`.
pub fn mia_epsilon(fpr: f64, fnr: f64, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fpr) || !(0.0..=1.0).contains(&fnr) {
        return Err(Error::param(format!(
            "error rates must lie in [0, 1], got fpr={fpr}, fnr={fnr}"
        )));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::param(format!("delta must lie in [0, 1), got {delta}")));
    }
    let side = |num: f64, den: f64| {
        if num <= 0.0 {
            f64::NEG_INFINITY
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            (num / den).ln()
        }
    };
    let a = side(1.0 - delta - fpr, fnr);
    let b = side(1.0 - delta - fnr, fpr);
    Ok(a.max(b).max(0.0))
}

/// Linear-interpolation quantile of ascending `sorted` data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = p.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let w = pos - lo as f64;
            if w == 0.0 {
                sorted[lo]
            } else {
                sorted[lo] + w * (sorted[hi] - sorted[lo])
            }
        }
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. NaN when either
/// input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Threshold maximizing accuracy of "member iff loss <= τ" on labelled
/// scores. Ties in accuracy keep the smallest threshold.
pub fn best_threshold(members: &[f64], non_members: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = members
        .iter()
        .map(|&s| (s, true))
        .chain(non_members.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut correct = non_members.len() as i64;
    let mut best = (correct, f64::NEG_INFINITY);
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            correct += if all[i].1 { 1 } else { -1 };
            i += 1;
        }
        if correct > best.0 {
            let tau = if i < all.len() { 0.5 * (v + all[i].0) } else { v };
            best = (correct, tau);
        }
    }
    best.1
}

/// Error rates of the threshold rule on a member / non-member pair.
pub fn error_rates(members: &[f64], non_members: &[f64], tau: f64) -> (f64, f64) {
    let fp = non_members.iter().filter(|&&s| s <= tau).count();
    let fn_ = members.iter().filter(|&&s| s > tau).count();
    (
        fp as f64 / non_members.len() as f64,
        fn_ as f64 / members.len() as f64,
    )
}

fn default_delta() -> f64 {
    DEFAULT_MIA_DELTA
}

fn default_trials() -> usize {
    10
}

/// Attack protocol settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// Size of each of the four disjoint pools: target members, target
    /// non-members, shadow members, shadow non-members.
    pub members: usize,
    pub epochs: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Randomly reassign target membership before scoring (null experiment).
    #[serde(default)]
    pub shuffle_labels: bool,
}

impl AttackConfig {
    pub fn new(members: usize, epochs: u64, trials: usize) -> Self {
        AttackConfig {
            members,
            epochs,
            trials,
            delta: DEFAULT_MIA_DELTA,
            shuffle_labels: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.members == 0 || self.epochs == 0 || self.trials == 0 {
            return Err(Error::Config(
                "members, epochs and trials must all be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Config(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: u64,
    pub fpr: f64,
    pub fnr: f64,
    pub eps_hat_median: f64,
    pub eps_hat_lo95: f64,
    pub eps_hat_hi95: f64,
}

/// Per-trial outcomes, indexed `[epoch − 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub fpr: Vec<f64>,
    pub fnr: Vec<f64>,
    pub eps_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub rows: Vec<EpochSummary>,
    pub trials: Vec<TrialOutcome>,
    pub delta: f64,
    pub attack: &'static str,
}

impl AttackReport {
    pub fn final_row(&self) -> &EpochSummary {
        self.rows.last().expect("at least one epoch")
    }

    /// ε̂ of every trial at the last epoch.
    pub fn final_eps_hat(&self) -> Vec<f64> {
        self.trials
            .iter()
            .map(|t| *t.eps_hat.last().expect("at least one epoch"))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,fpr,fnr,eps_hat_median,eps_hat_lo95,eps_hat_hi95")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.epoch,
                sig(r.fpr),
                sig(r.fnr),
                sig(r.eps_hat_median),
                sig(r.eps_hat_lo95),
                sig(r.eps_hat_hi95)
            )?;
        }
        Ok(())
    }
}

/// Mini-batch steps per epoch, `⌈members/b⌉`.
pub fn steps_per_epoch(members: usize, b: u64) -> u64 {
    (members as u64).div_ceil(b)
}

/// Trains `epochs` worth of steps on `data` and returns the iterate at the
/// end of every epoch.
fn epoch_iterates(
    data: &ProblemSpec,
    cfg: &TrainConfig,
    per_epoch: u64,
) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::new();
    run(data, cfg, |state, _| {
        if state.t % per_epoch == 0 {
            out.push(state.theta.clone());
        }
        Ok(())
    })?;
    Ok(out)
}

fn losses(pool: &ProblemSpec, theta: &DVector<f64>, idx: &[usize]) -> Result<Vec<f64>> {
    idx.iter().map(|&i| pool.sample_loss(theta, i)).collect()
}

fn run_trial(
    pool: &ProblemSpec,
    train_cfg: &TrainConfig,
    attack: &AttackConfig,
    trial_seed: u64,
) -> Result<TrialOutcome> {
    let m = attack.members;
    let mut split_rng = ChaCha8Rng::seed_from_u64(trial_seed);
    split_rng.set_stream(SPLIT_STREAM);
    let mut order: Vec<usize> = (0..pool.n()).collect();
    order.shuffle(&mut split_rng);
    let target_in = order[..m].to_vec();
    let mut target_out = order[m..2 * m].to_vec();
    let shadow_in = order[2 * m..3 * m].to_vec();
    let shadow_out = order[3 * m..4 * m].to_vec();
    let mut scored_in = target_in.clone();
    if attack.shuffle_labels {
        let mut both: Vec<usize> = target_in.iter().chain(&target_out).copied().collect();
        both.shuffle(&mut split_rng);
        scored_in = both[..m].to_vec();
        target_out = both[m..].to_vec();
    }

    let per_epoch = steps_per_epoch(m, train_cfg.mech.b);
    let mut cfg = *train_cfg;
    cfg.mech.n = m as u64;
    cfg.mech.t_iters = attack.epochs * per_epoch;
    cfg.seed = trial_seed;
    let target = epoch_iterates(&pool.subset(&target_in)?, &cfg, per_epoch)?;
    cfg.seed = trial_seed ^ SHADOW_SALT;
    let shadow = epoch_iterates(&pool.subset(&shadow_in)?, &cfg, per_epoch)?;

    let mut out = TrialOutcome {
        fpr: Vec::new(),
        fnr: Vec::new(),
        eps_hat: Vec::new(),
    };
    for (theta_t, theta_s) in target.iter().zip(&shadow) {
        let tau = best_threshold(
            &losses(pool, theta_s, &shadow_in)?,
            &losses(pool, theta_s, &shadow_out)?,
        );
        let (fpr, fnr) = error_rates(
            &losses(pool, theta_t, &scored_in)?,
            &losses(pool, theta_t, &target_out)?,
            tau,
        );
        out.fpr.push(fpr);
        out.fnr.push(fnr);
        out.eps_hat.push(mia_epsilon(fpr, fnr, attack.delta)?);
    }
    Ok(out)
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

/// Runs the shadow-calibrated loss-threshold attack.
///
/// Each trial shuffles `problem`'s samples into four disjoint pools of
/// `attack.members` points, trains a target on one and a shadow model on
/// another with the same recipe, and at the end of every epoch scores the
/// target's members and non-members by per-sample loss against the
/// threshold that best separates the shadow's pools. `train_cfg.mech.n` and
/// `t_iters` are derived from the pool size and epoch count; trial `i` uses
/// seed `train_cfg.seed + i`.
pub fn run_attack(
    problem: &ProblemSpec,
    train_cfg: &TrainConfig,
    attack: &AttackConfig,
) -> Result<AttackReport> {
    attack.validate()?;
    if problem.n() < 4 * attack.members {
        return Err(Error::Config(format!(
            "need {} samples for four disjoint pools of {}, problem has {}",
            4 * attack.members,
            attack.members,
            problem.n()
        )));
    }
    if train_cfg.mech.b as usize > attack.members {
        return Err(Error::Config(format!(
            "batch size {} exceeds pool size {}",
            train_cfg.mech.b, attack.members
        )));
    }
    let trials: Vec<TrialOutcome> = (0..attack.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(problem, train_cfg, attack, train_cfg.seed.wrapping_add(i)))
        .collect::<Result<_>>()?;

    let rows = (0..attack.epochs as usize)
        .map(|e| {
            let med = |f: fn(&TrialOutcome) -> &Vec<f64>| {
                quantile(&sorted(trials.iter().map(|t| f(t)[e]).collect()), 0.5)
            };
            let eps = sorted(trials.iter().map(|t| t.eps_hat[e]).collect());
            EpochSummary {
                epoch: e as u64 + 1,
                fpr: med(|t| &t.fpr),
                fnr: med(|t| &t.fnr),
                eps_hat_median: quantile(&eps, 0.5),
                eps_hat_lo95: quantile(&eps, 0.025),
                eps_hat_hi95: quantile(&eps, 0.975),
            }
        })
        .collect();
    Ok(AttackReport {
        rows,
        trials,
        delta: attack.delta,
        attack: "loss_threshold",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accountant::MechanismConfig;
    use proptest::prelude::*;

    #[test]
    fn epsilon_examples() {
        assert_eq!(mia_epsilon(0.5, 0.5, 0.0).unwrap(), 0.0);
        let v = mia_epsilon(0.05, 0.2, 0.01).unwrap();
        assert!((v - 15.8f64.ln()).abs() < 1e-12);
        assert!((v - 2.7600).abs() < 1e-4);
        assert_eq!(mia_epsilon(0.9, 0.9, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn epsilon_edges() {
        assert_eq!(mia_epsilon(0.0, 0.3, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(mia_epsilon(1.0, 1.0, 0.0).unwrap(), 0.0);
        assert!(mia_epsilon(-0.1, 0.5, 0.0).is_err());
        assert!(mia_epsilon(0.5, 1.5, 0.0).is_err());
        assert!(mia_epsilon(0.5, 0.5, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn epsilon_nonnegative_and_symmetric(fpr in 0.0..=1.0f64, fnr in 0.0..=1.0f64, delta in 0.0..0.5f64) {
            let e = mia_epsilon(fpr, fnr, delta).unwrap();
            prop_assert!(e >= 0.0);
            prop_assert_eq!(e, mia_epsilon(fnr, fpr, delta).unwrap());
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 5.0);
        assert!((quantile(&xs, 0.025) - 1.1).abs() < 1e-12);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // Ties use average ranks: y ranks (1.5, 1.5, 3, 4).
        let r = spearman(&x, &[1.0, 1.0, 2.0, 3.0]);
        let expected = 4.5 / (5.0f64 * 4.5).sqrt();
        assert!((r - expected).abs() < 1e-12, "{r}");
    }

    #[test]
    fn threshold_separates_clean_split() {
        let tau = best_threshold(&[0.1, 0.2, 0.3], &[0.5, 0.6, 0.7]);
        assert!((tau - 0.4).abs() < 1e-12);
        assert_eq!(error_rates(&[0.1, 0.2, 0.3], &[0.5, 0.6, 0.7], tau), (0.0, 0.0));
        // Reversed scores: predicting everyone a non-member is best.
        let tau = best_threshold(&[0.9], &[0.1]);
        assert_eq!(tau, f64::NEG_INFINITY);
    }

    fn toy(sigma: f64, b: u64, shuffle: bool) -> AttackReport {
        let pool = ProblemSpec::synthetic_logistic(20, 160, 3, 1e-3, 0.2).unwrap();
        let mech = MechanismConfig {
            n: 40,
            b,
            eta: 0.5,
            clip_c: 1.0,
            diameter_d: None,
            sigma_dp: sigma,
            t_iters: 0,
            smooth_l: pool.smooth_l,
            dim: 20,
        };
        let mut attack = AttackConfig::new(40, 3, 4);
        attack.shuffle_labels = shuffle;
        run_attack(&pool, &TrainConfig::new(mech, 9), &attack).unwrap()
    }

    #[test]
    fn attack_is_deterministic() {
        let a = toy(0.5, 4, false);
        let b = toy(0.5, 4, false);
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.trials.len(), 4);
        for r in &a.rows {
            assert!(r.eps_hat_lo95 <= r.eps_hat_median && r.eps_hat_median <= r.eps_hat_hi95);
            assert!((0.0..=1.0).contains(&r.fpr) && (0.0..=1.0).contains(&r.fnr));
        }
    }

    #[test]
    fn huge_noise_leaks_little() {
        let r = toy(1e3, 4, false);
        assert!(r.final_row().eps_hat_median <= 0.5, "{:?}", r.final_row());
    }

    #[test]
    fn pools_must_fit() {
        let pool = ProblemSpec::synthetic_logistic(3, 10, 1, 0.1, 0.0).unwrap();
        let mech = MechanismConfig {
            n: 3,
            b: 1,
            eta: 0.1,
            clip_c: 1.0,
            diameter_d: None,
            sigma_dp: 1.0,
            t_iters: 0,
            smooth_l: 1.0,
            dim: 3,
        };
        let res = run_attack(&pool, &TrainConfig::new(mech, 0), &AttackConfig::new(3, 1, 1));
        assert!(matches!(res, Err(Error::Config(_))));
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        toy(1.0, 8, true).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,fpr,fnr,eps_hat_median,eps_hat_lo95,eps_hat_hi95\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
