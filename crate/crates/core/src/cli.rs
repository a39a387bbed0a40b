//! Command-line front end. Every subcommand merges three layers of settings,
//! highest precedence first: command-line flags, the TOML config file, and
//! built-in defaults (or the values of a named recipe).
//!
//! The config file is `--config PATH`. Without it, `$DPSGD_CONFIG_DIR/dpsgd.toml`
//! is used when that variable is set and the file exists. A relative
//! `--config` path that does not exist is also looked up in
//! `$DPSGD_CONFIG_DIR`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::accountant::{
    best_dp, calibrate_sigma, log_spaced, BaselineParams, Beta, BoundOptions, Family,
    MechanismConfig, Mode,
};
use crate::error::{Error, Result};
use crate::fmt::sig;
use crate::mia::{run_attack, AttackConfig, DEFAULT_MIA_DELTA};
use crate::optimizer::{train, Sampling, TrainConfig};
use crate::problems::{ProblemConfig, ProblemKind};
use crate::utility::{recommend, UtilityQuery, UtilityTarget};

/// Environment variable naming the default config directory.
pub const CONFIG_DIR_ENV: &str = "DPSGD_CONFIG_DIR";
/// File looked up in [`CONFIG_DIR_ENV`] when `--config` is absent.
pub const DEFAULT_CONFIG_NAME: &str = "dpsgd.toml";

#[derive(Debug, Parser)]
#[command(name = "dpsgd", version, about = "Privacy accounting and experiments for DPSGD")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write CSV output here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Seed for training and attack randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress informational messages on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one RDP bound, and its DP conversion when --delta is given.
    Bound(BoundArgs),
    /// Sweep T and tabulate several bound families.
    Curve(CurveArgs),
    /// Smallest noise scale meeting an (ε, δ)-DP target.
    Calibrate(CalibrateArgs),
    /// Recommended step size, clipping norm and horizon for a DP budget.
    Recommend(RecommendArgs),
    /// Run DPSGD on a synthetic problem and emit the trace.
    Train(TrainArgs),
    /// Membership-inference experiment producing ε̂ per epoch.
    Mia(MiaArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct MechArgs {
    /// Dataset size.
    #[arg(long)]
    pub n: Option<u64>,
    /// Batch size.
    #[arg(long)]
    pub b: Option<u64>,
    /// Step size.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Gradient clipping norm.
    #[arg(long = "C")]
    pub clip_c: Option<f64>,
    /// Radius of the parameter ball.
    #[arg(long = "D")]
    pub diameter_d: Option<f64>,
    /// Per-coordinate noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Number of iterations.
    #[arg(long = "T")]
    pub t_iters: Option<u64>,
    /// Smoothness constant.
    #[arg(long = "L")]
    pub smooth_l: Option<f64>,
    /// Model dimension.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AccountingArgs {
    /// general or strengthened.
    #[arg(long)]
    pub mode: Option<String>,
    /// Fixed noise split in (0, 1]; automatic when absent.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Lipschitz constant for the feldman and altschuler baselines.
    #[arg(long = "M")]
    pub lipschitz_m: Option<f64>,
    /// Weak-convexity constant for the kong baseline.
    #[arg(long = "m")]
    pub weak_convex_m: Option<f64>,
    /// Constant multiplying every baseline bound.
    #[arg(long)]
    pub multiplier: Option<f64>,
    /// Smallest Rényi order on the search grid.
    #[arg(long)]
    pub grid_min: Option<f64>,
    /// Largest Rényi order on the search grid.
    #[arg(long)]
    pub grid_max: Option<f64>,
    /// Number of log-spaced grid orders.
    #[arg(long)]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Bound family, e.g. gc, dc, trivial.
    #[arg(long)]
    pub family: Option<String>,
    /// Rényi order.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Target δ for the DP conversion.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Print a single key=value line.
    #[arg(long)]
    pub machine: bool,
    #[command(flatten)]
    pub mech: MechArgs,
    #[command(flatten)]
    pub acct: AccountingArgs,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// fig1 or fig5: load that figure's parameters and families.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Comma-separated families; an empty string gives a header-only CSV.
    #[arg(long)]
    pub families: Option<String>,
    /// Rényi order.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// First horizon.
    #[arg(long)]
    pub t_min: Option<u64>,
    /// Last horizon.
    #[arg(long)]
    pub t_max: Option<u64>,
    /// Horizon increment.
    #[arg(long)]
    pub t_step: Option<u64>,
    #[command(flatten)]
    pub mech: MechArgs,
    #[command(flatten)]
    pub acct: AccountingArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Bound family to calibrate against.
    #[arg(long)]
    pub family: Option<String>,
    /// Target ε of the (ε, δ)-DP guarantee.
    #[arg(long)]
    pub target_eps: Option<f64>,
    /// Target δ.
    #[arg(long)]
    pub delta: Option<f64>,
    #[command(flatten)]
    pub mech: MechArgs,
    #[command(flatten)]
    pub acct: AccountingArgs,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    /// gc or dc.
    #[arg(long)]
    pub target: Option<String>,
    /// DP budget ε.
    #[arg(long)]
    pub eps: Option<f64>,
    /// DP budget δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Per-sample gradient standard deviation bound.
    #[arg(long)]
    pub sgd_sigma: Option<f64>,
    /// Strong-convexity constant (dc target).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Constant multiplying the utility bound.
    #[arg(long)]
    pub constant: Option<f64>,
    #[command(flatten)]
    pub mech: MechArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProblemArgs {
    /// quadratic or logistic.
    #[arg(long)]
    pub kind: Option<String>,
    /// Problem dimension.
    #[arg(long)]
    pub problem_dim: Option<usize>,
    /// Number of samples.
    #[arg(long)]
    pub problem_n: Option<usize>,
    /// Seed for the synthetic data.
    #[arg(long)]
    pub problem_seed: Option<u64>,
    /// Ridge coefficient for logistic problems.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Spread of quadratic centers.
    #[arg(long)]
    pub spread: Option<f64>,
    /// Probability of flipping a logistic label.
    #[arg(long)]
    pub label_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Record the iterate every this many steps.
    #[arg(long)]
    pub record_every: Option<u64>,
    /// uniform or poisson.
    #[arg(long)]
    pub sampling: Option<String>,
    #[command(flatten)]
    pub mech: MechArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
}

#[derive(Debug, Args)]
pub struct MiaArgs {
    /// Size of each of the four data pools.
    #[arg(long)]
    pub members: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Independent attack repetitions.
    #[arg(long)]
    pub trials: Option<usize>,
    /// δ used to turn error rates into ε̂.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Shuffle labels to get a null experiment.
    #[arg(long)]
    pub shuffle_labels: bool,
    #[command(flatten)]
    pub mech: MechArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
}

// Config file schema. Every key is optional; unknown keys are rejected.

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub mechanism: MechFile,
    pub accounting: AccountingFile,
    pub bound: BoundFile,
    pub curve: CurveFile,
    pub calibrate: CalibrateFile,
    pub recommend: RecommendFile,
    pub train: TrainFile,
    pub problem: ProblemFile,
    pub mia: MiaFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechFile {
    pub n: Option<u64>,
    pub b: Option<u64>,
    pub eta: Option<f64>,
    pub clip_c: Option<f64>,
    pub diameter_d: Option<f64>,
    pub sigma_dp: Option<f64>,
    pub t_iters: Option<u64>,
    pub smooth_l: Option<f64>,
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccountingFile {
    pub mode: Option<String>,
    pub beta: Option<f64>,
    pub lipschitz_m: Option<f64>,
    pub weak_convex_m: Option<f64>,
    pub multiplier: Option<f64>,
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundFile {
    pub family: Option<String>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveFile {
    pub recipe: Option<String>,
    pub families: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub t_min: Option<u64>,
    pub t_max: Option<u64>,
    pub t_step: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateFile {
    pub family: Option<String>,
    pub target_eps: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendFile {
    pub target: Option<String>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub sgd_sigma: Option<f64>,
    pub mu: Option<f64>,
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub record_every: Option<u64>,
    pub sampling: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemFile {
    pub kind: Option<ProblemKind>,
    pub dim: Option<usize>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub spread: Option<f64>,
    pub label_noise: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiaFile {
    pub members: Option<usize>,
    pub epochs: Option<u64>,
    pub trials: Option<usize>,
    pub delta: Option<f64>,
    pub shuffle_labels: Option<bool>,
}

fn resolve_config_path(explicit: Option<&Path>) -> Option<PathBuf> {
    let dir = std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from);
    match explicit {
        Some(p) if p.exists() || p.is_absolute() => Some(p.to_path_buf()),
        Some(p) => Some(
            dir.map(|d| d.join(p))
                .filter(|c| c.exists())
                .unwrap_or_else(|| p.to_path_buf()),
        ),
        None => dir.map(|d| d.join(DEFAULT_CONFIG_NAME)).filter(|c| c.exists()),
    }
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
}

fn need<T>(v: Option<T>, flag: &str, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing parameter --{flag} (config key {key})")))
}

fn layer(cli: &MechArgs, file: &MechFile, base: &MechFile) -> MechFile {
    MechFile {
        n: cli.n.or(file.n).or(base.n),
        b: cli.b.or(file.b).or(base.b),
        eta: cli.eta.or(file.eta).or(base.eta),
        clip_c: cli.clip_c.or(file.clip_c).or(base.clip_c),
        diameter_d: cli.diameter_d.or(file.diameter_d).or(base.diameter_d),
        sigma_dp: cli.sigma.or(file.sigma_dp).or(base.sigma_dp),
        t_iters: cli.t_iters.or(file.t_iters).or(base.t_iters),
        smooth_l: cli.smooth_l.or(file.smooth_l).or(base.smooth_l),
        dim: cli.dim.or(file.dim).or(base.dim),
    }
}

fn mechanism(m: MechFile) -> Result<MechanismConfig> {
    let cfg = MechanismConfig {
        n: need(m.n, "n", "mechanism.n")?,
        b: need(m.b, "b", "mechanism.b")?,
        eta: need(m.eta, "eta", "mechanism.eta")?,
        clip_c: need(m.clip_c, "C", "mechanism.clip_c")?,
        diameter_d: m.diameter_d,
        sigma_dp: need(m.sigma_dp, "sigma", "mechanism.sigma_dp")?,
        t_iters: need(m.t_iters, "T", "mechanism.t_iters")?,
        smooth_l: m.smooth_l.unwrap_or(1.0),
        dim: m.dim.unwrap_or(1),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn bound_options(cli: &AccountingArgs, file: &AccountingFile) -> Result<(BoundOptions, Vec<f64>)> {
    let mode = match cli.mode.as_ref().or(file.mode.as_ref()) {
        Some(s) => s.parse::<Mode>()?,
        None => Mode::General,
    };
    let beta = match cli.beta.or(file.beta) {
        Some(b) => Beta::Fixed(b),
        None => Beta::Auto,
    };
    let baseline = BaselineParams {
        lipschitz_m: cli.lipschitz_m.or(file.lipschitz_m),
        weak_convex_m: cli.weak_convex_m.or(file.weak_convex_m),
        multiplier: cli.multiplier.or(file.multiplier).unwrap_or(1.0),
    };
    let lo = cli.grid_min.or(file.grid_min).unwrap_or(1.1);
    let hi = cli.grid_max.or(file.grid_max).unwrap_or(256.0);
    let points = cli.grid_points.or(file.grid_points).unwrap_or(128);
    if !(lo > 1.0 && hi >= lo && hi.is_finite()) || points == 0 {
        return Err(Error::param(format!(
            "alpha grid needs 1 < grid_min <= grid_max and at least one point, got [{lo}, {hi}] x {points}"
        )));
    }
    Ok((
        BoundOptions {
            mode,
            beta,
            baseline,
        },
        log_spaced(lo, hi, points),
    ))
}

fn parse_families(list: &[String]) -> Result<Vec<Family>> {
    list.iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

/// Parameters, default families and horizon range of a named figure setting.
#[derive(Debug, Clone)]
pub struct Recipe {
    pub mechanism: MechFile,
    pub accounting: AccountingFile,
    pub families: Vec<Family>,
    pub horizons: (u64, u64),
}

pub fn recipe(name: &str) -> Result<Recipe> {
    let mut mech = MechFile {
        n: None,
        b: Some(2),
        eta: Some(0.2),
        clip_c: Some(2.0),
        diameter_d: Some(1.0),
        sigma_dp: Some(4.0),
        t_iters: Some(0),
        smooth_l: Some(1.0),
        dim: Some(1),
    };
    match name {
        "fig5" => {
            mech.n = Some(16);
            Ok(Recipe {
                mechanism: mech,
                accounting: AccountingFile::default(),
                families: vec![Family::Dc, Family::Trivial],
                horizons: (1, 500),
            })
        }
        "fig1" => {
            mech.n = Some(8);
            let acct = AccountingFile {
                lipschitz_m: Some(2.0),
                weak_convex_m: Some(1.0),
                ..Default::default()
            };
            Ok(Recipe {
                mechanism: mech,
                accounting: acct,
                families: vec![
                    Family::Dc,
                    Family::Kong,
                    Family::Feldman,
                    Family::Composition,
                    Family::Altschuler,
                ],
                horizons: (1, 300),
            })
        }
        other => Err(Error::param(format!(
            "unknown recipe '{other}' (expected fig1 or fig5)"
        ))),
    }
}

/// Global settings shared by every command.
struct Ctx<'a> {
    file: FileConfig,
    out_path: Option<PathBuf>,
    seed: u64,
    quiet: bool,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn info(&mut self, msg: &str) -> Result<()> {
        if !self.quiet {
            writeln!(self.stderr, "{msg}")?;
        }
        Ok(())
    }

    /// Runs `f` against the output file, or stdout when none was given.
    fn emit(&mut self, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        match &self.out_path {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p)?);
                f(&mut w)?;
                w.flush()?;
                Ok(())
            }
            None => f(self.stdout),
        }
    }
}

fn cmd_bound(ctx: &mut Ctx, a: &BoundArgs) -> Result<()> {
    let file = &ctx.file;
    let family: Family = need(
        a.family.clone().or(file.bound.family.clone()),
        "family",
        "bound.family",
    )?
    .parse()?;
    let mech = mechanism(layer(&a.mech, &file.mechanism, &MechFile::default()))?;
    let (opts, grid) = bound_options(&a.acct, &file.accounting)?;
    let delta = a.delta.or(file.bound.delta);
    let alpha = a.alpha.or(file.bound.alpha);
    if alpha.is_none() && delta.is_none() {
        return Err(Error::Config("give --alpha, --delta, or both".into()));
    }

    let rdp = alpha.map(|al| family.evaluate(&mech, al, &opts)).transpose()?;
    let dp = delta
        .map(|d| best_dp(&mech, family, &opts, d, &grid))
        .transpose()?;

    let mut fields: Vec<(&str, String)> = vec![("family", family.name().into())];
    if let Some(r) = &rdp {
        fields.push(("alpha", sig(r.alpha)));
        fields.push(("epsilon_rdp", sig(r.epsilon)));
        if let Some(reg) = r.regime {
            fields.push(("regime", reg.to_string()));
        }
        if let Some(b) = r.beta_used {
            fields.push(("beta_used", sig(b)));
        }
        fields.push(("constraints_ok", r.constraints_ok.to_string()));
    }
    if let (Some(d), Some(res)) = (delta, &dp) {
        fields.push(("delta", sig(d)));
        fields.push(("alpha_dp", sig(res.alpha)));
        fields.push(("epsilon_dp", sig(res.epsilon_dp)));
    }

    if a.machine {
        let line: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(ctx.stdout, "{}", line.join(" "))?;
    } else {
        for (k, v) in &fields {
            writeln!(ctx.stdout, "{k:<15}{v}")?;
        }
    }
    if ctx.out_path.is_some() {
        ctx.emit(|w| {
            let keys: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
            let vals: Vec<&str> = fields.iter().map(|(_, v)| v.as_str()).collect();
            writeln!(w, "{}", keys.join(","))?;
            writeln!(w, "{}", vals.join(","))?;
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_curve(ctx: &mut Ctx, a: &CurveArgs) -> Result<()> {
    let file = ctx.file.clone();
    let recipe_name = a.recipe.clone().or(file.curve.recipe.clone());
    let Recipe {
        mechanism: base_mech,
        accounting: base_acct,
        families: default_families,
        horizons: (t0, t1),
    } = match &recipe_name {
        Some(r) => recipe(r)?,
        None => Recipe {
            mechanism: MechFile {
                t_iters: Some(0),
                ..Default::default()
            },
            accounting: AccountingFile::default(),
            families: Vec::new(),
            horizons: (1, 100),
        },
    };
    let mech = mechanism(layer(&a.mech, &file.mechanism, &base_mech))?;
    let acct_file = AccountingFile {
        mode: file.accounting.mode.clone().or(base_acct.mode),
        beta: file.accounting.beta.or(base_acct.beta),
        lipschitz_m: file.accounting.lipschitz_m.or(base_acct.lipschitz_m),
        weak_convex_m: file.accounting.weak_convex_m.or(base_acct.weak_convex_m),
        multiplier: file.accounting.multiplier.or(base_acct.multiplier),
        ..file.accounting.clone()
    };
    let (opts, _) = bound_options(&a.acct, &acct_file)?;
    let families = match (&a.families, &file.curve.families) {
        (Some(s), _) => parse_families(&s.split(',').map(String::from).collect::<Vec<_>>())?,
        (None, Some(list)) => parse_families(list)?,
        (None, None) if recipe_name.is_some() => default_families,
        (None, None) => {
            return Err(Error::Config(
                "give --families or a --recipe for the curve".into(),
            ))
        }
    };
    let alpha = a.alpha.or(file.curve.alpha).unwrap_or(1.1);
    let t_min = a.t_min.or(file.curve.t_min).unwrap_or(t0);
    let t_max = a.t_max.or(file.curve.t_max).unwrap_or(t1);
    let t_step = a.t_step.or(file.curve.t_step).unwrap_or(1);
    if t_step == 0 || t_min > t_max {
        return Err(Error::param(format!(
            "sweep needs t_min <= t_max and t_step >= 1, got {t_min}..{t_max} step {t_step}"
        )));
    }

    let mut table = Vec::new();
    if !families.is_empty() {
        let mut t = t_min;
        while t <= t_max {
            let cfg = mech.with_t(t);
            let row = families
                .iter()
                .map(|f| f.evaluate(&cfg, alpha, &opts).map(|r| r.epsilon))
                .collect::<Result<Vec<_>>>()?;
            table.push((t, row));
            match t.checked_add(t_step) {
                Some(next) => t = next,
                None => break,
            }
        }
    }
    ctx.emit(|w| {
        let mut header = vec!["T".to_string()];
        header.extend(families.iter().map(|f| f.name().to_string()));
        writeln!(w, "{}", header.join(","))?;
        for (t, row) in &table {
            let vals: Vec<String> = row.iter().map(|&v| sig(v)).collect();
            writeln!(w, "{t},{}", vals.join(","))?;
        }
        Ok(())
    })
}

fn cmd_calibrate(ctx: &mut Ctx, a: &CalibrateArgs) -> Result<()> {
    let file = ctx.file.clone();
    let family: Family = need(
        a.family.clone().or(file.calibrate.family.clone()),
        "family",
        "calibrate.family",
    )?
    .parse()?;
    // σ is what we solve for; any positive placeholder passes validation.
    let base = MechFile {
        sigma_dp: Some(1.0),
        ..Default::default()
    };
    let mut cli_mech = a.mech.clone();
    cli_mech.sigma = None;
    let mut file_mech = file.mechanism.clone();
    file_mech.sigma_dp = None;
    let mech = mechanism(layer(&cli_mech, &file_mech, &base))?;
    let (opts, grid) = bound_options(&a.acct, &file.accounting)?;
    let target = need(a.target_eps.or(file.calibrate.target_eps), "target-eps", "calibrate.target_eps")?;
    let delta = need(a.delta.or(file.calibrate.delta), "delta", "calibrate.delta")?;
    let sigma = calibrate_sigma(&mech, family, &opts, target, delta, &grid)?;
    let check = best_dp(&mech.with_sigma(sigma), family, &opts, delta, &grid)?;
    ctx.info(&format!(
        "sigma_dp {} gives epsilon_dp {} at alpha {}",
        sig(sigma),
        sig(check.epsilon_dp),
        sig(check.alpha)
    ))?;
    ctx.emit(|w| {
        writeln!(w, "family,target_eps_dp,delta,sigma_dp,alpha,epsilon_dp")?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            family.name(),
            sig(target),
            sig(delta),
            sig(sigma),
            sig(check.alpha),
            sig(check.epsilon_dp)
        )?;
        Ok(())
    })
}

fn cmd_recommend(ctx: &mut Ctx, a: &RecommendArgs) -> Result<()> {
    let file = ctx.file.clone();
    let rf = &file.recommend;
    let target = match need(a.target.clone().or(rf.target.clone()), "target", "recommend.target")?.as_str() {
        "gc" => UtilityTarget::GcGradientNorm,
        "dc" => UtilityTarget::DcOptimalityGap,
        other => return Err(Error::param(format!("unknown target '{other}' (gc or dc)"))),
    };
    // Only n, b, L, d and D enter the recommendation.
    let base = MechFile {
        eta: Some(1.0),
        clip_c: Some(1.0),
        sigma_dp: Some(1.0),
        t_iters: Some(1),
        ..Default::default()
    };
    let mech = mechanism(layer(&a.mech, &file.mechanism, &base))?;
    let mut q = UtilityQuery::new(
        mech,
        need(a.sgd_sigma.or(rf.sgd_sigma), "sgd-sigma", "recommend.sgd_sigma")?,
        target,
    );
    q.strong_mu = a.mu.or(rf.mu);
    q.constant_c = a.constant.or(rf.constant).unwrap_or(1.0);
    let eps = need(a.eps.or(rf.eps), "eps", "recommend.eps")?;
    let delta = need(a.delta.or(rf.delta), "delta", "recommend.delta")?;
    let r = recommend(&q, eps, delta)?;
    let limit = q.max_step_size();
    if r.eta > limit {
        ctx.info(&format!(
            "note: recommended eta {} exceeds the step-size condition eta <= {}",
            sig(r.eta),
            sig(limit)
        ))?;
    }
    ctx.emit(|w| {
        writeln!(w, "regime,eta,clip_c,t_iters,predicted_utility")?;
        writeln!(
            w,
            "{},{},{},{},{}",
            r.regime.name(),
            sig(r.eta),
            sig(r.clip_c),
            sig(r.t_iters),
            sig(r.predicted_utility)
        )?;
        Ok(())
    })
}

fn problem_config(cli: &ProblemArgs, file: &ProblemFile) -> Result<ProblemConfig> {
    let kind = match &cli.kind {
        Some(s) => match s.as_str() {
            "quadratic" => ProblemKind::Quadratic,
            "logistic" => ProblemKind::Logistic,
            other => return Err(Error::param(format!("unknown problem kind '{other}'"))),
        },
        None => need(file.kind, "kind", "problem.kind")?,
    };
    Ok(ProblemConfig {
        kind,
        dim: need(cli.problem_dim.or(file.dim), "problem-dim", "problem.dim")?,
        n: need(cli.problem_n.or(file.n), "problem-n", "problem.n")?,
        seed: cli.problem_seed.or(file.seed).unwrap_or(0),
        lambda: cli.lambda.or(file.lambda).unwrap_or(1e-2),
        spread: cli.spread.or(file.spread).unwrap_or(1.0),
        label_noise: cli.label_noise.or(file.label_noise).unwrap_or(0.1),
    })
}

fn cmd_train(ctx: &mut Ctx, a: &TrainArgs) -> Result<()> {
    let file = ctx.file.clone();
    let problem = problem_config(&a.problem, &file.problem)?.build()?;
    let base = MechFile {
        n: Some(problem.n() as u64),
        dim: Some(problem.dim()),
        smooth_l: Some(problem.smooth_l),
        ..Default::default()
    };
    let mech = mechanism(layer(&a.mech, &file.mechanism, &base))?;
    let mut cfg = TrainConfig::new(mech, ctx.seed);
    cfg.record_every = a.record_every.or(file.train.record_every).unwrap_or(1);
    if let Some(s) = a.sampling.as_ref().or(file.train.sampling.as_ref()) {
        cfg.sampling = s.parse::<Sampling>()?;
    }
    let trace = train(&problem, &cfg)?;
    ctx.info(&format!(
        "min loss gap {}, min gradient norm {}",
        sig(trace.min_loss_gap()),
        sig(trace.min_grad_norm())
    ))?;
    ctx.emit(|w| trace.write_csv(w))
}

fn cmd_mia(ctx: &mut Ctx, a: &MiaArgs) -> Result<()> {
    let file = ctx.file.clone();
    let mf = &file.mia;
    let problem = problem_config(&a.problem, &file.problem)?.build()?;
    let members = need(a.members.or(mf.members), "members", "mia.members")?;
    let attack = AttackConfig {
        members,
        epochs: need(a.epochs.or(mf.epochs), "epochs", "mia.epochs")?,
        trials: a.trials.or(mf.trials).unwrap_or(10),
        delta: a.delta.or(mf.delta).unwrap_or(DEFAULT_MIA_DELTA),
        shuffle_labels: a.shuffle_labels || mf.shuffle_labels.unwrap_or(false),
    };
    let base = MechFile {
        n: Some(members as u64),
        t_iters: Some(0),
        dim: Some(problem.dim()),
        smooth_l: Some(problem.smooth_l),
        ..Default::default()
    };
    let mech = mechanism(layer(&a.mech, &file.mechanism, &base))?;
    let report = run_attack(&problem, &TrainConfig::new(mech, ctx.seed), &attack)?;
    let last = report.final_row();
    ctx.info(&format!(
        "final epoch {}: median eps_hat {}",
        last.epoch,
        sig(last.eps_hat_median)
    ))?;
    ctx.emit(|w| report.write_csv(w))
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let file = match resolve_config_path(cli.config.as_deref()) {
        Some(p) => load_config(&p)?,
        None => FileConfig::default(),
    };
    let mut ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        file,
        out_path: cli.out,
        quiet: cli.quiet,
        stdout,
        stderr,
    };
    match &cli.command {
        Command::Bound(a) => cmd_bound(&mut ctx, a),
        Command::Curve(a) => cmd_curve(&mut ctx, a),
        Command::Calibrate(a) => cmd_calibrate(&mut ctx, a),
        Command::Recommend(a) => cmd_recommend(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Mia(a) => cmd_mia(&mut ctx, a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 2 for invalid input, 1 otherwise.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{rendered}");
            return code;
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
