//! Command-line front end.
//!
//! All outputs are files under `--out` (default `output.dir` of the config);
//! `stability` and `ks` also print their result. Failures print one line
//! `error kind=<kind> seed=<seed> message="<text>"` to stderr and exit nonzero.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::{ks_two_sample, replicate_stats, run_replicates, AnalysisError};
use crate::config::{BuiltModel, ConfigError, ExperimentConfig};
use crate::experiments::{
    average_points, averaged_csv, extrap_sweep, log_grid, match_dt_sweep, match_sweep, ExperimentError,
};
use crate::extrapolation::characteristic_roots;
use crate::orchestrator::{run_simulation, AccelConfig, RunError, TrajectoryRecord};
use crate::rng::replicate_seed;
use crate::sde::{Ensemble, SdeModel};

#[derive(Debug, Parser)]
#[command(name = "micromacro", version, about = "Micro/macro acceleration of Monte Carlo SDE simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `numerics.seed`. TOML integers are signed, so at most i64::MAX.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `replicate.r`.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Overrides `replicate.workers`.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One accelerated trajectory.
    Run(Common),
    /// Mean and standard deviation of the QoI over independent seeds.
    Replicate {
        #[command(flatten)]
        common: Common,
        /// Run plain micro simulation (macro step K*dt) instead.
        #[arg(long)]
        micro: bool,
    },
    /// Matching onto reference moments: KS table, moment errors, densities
    /// and the matching error as a function of the macro step.
    MatchSweep(Common),
    /// Local error of one extrapolate-and-match step versus the macro step.
    ExtrapSweep(Common),
    /// Roots of the multistep characteristic polynomial.
    Stability {
        #[arg(long)]
        pe: usize,
        #[arg(long)]
        beta: f64,
    },
    /// Two-sample Kolmogorov-Smirnov test of two sample files.
    Ks { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Run(RunError::MatchFailed { .. }) => "matching",
            CliError::Run(_) => "run",
            CliError::Experiment(_) => "experiment",
            CliError::Analysis(_) => "analysis",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Parses `argv` (including the program name), runs the command and returns the exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("").to_string();
            eprintln!("error kind=usage seed=none message={first:?}");
            eprint!("{e}");
            return 2;
        }
    };
    let mut seed = None;
    match execute(&cli.command, &mut seed) {
        Ok(()) => 0,
        Err(e) => {
            let seed = seed.map_or_else(|| "none".to_string(), |s: u64| s.to_string());
            eprintln!("error kind={} seed={} message={:?}", e.kind(), seed, e.to_string());
            1
        }
    }
}

/// Loads the configuration and applies the flag overrides.
pub fn resolve(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.numerics.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output.dir = o.clone();
    }
    if let Some(r) = common.replicates {
        cfg.replicate.r = r;
    }
    if let Some(w) = common.workers {
        cfg.replicate.workers = w;
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn snapshot(cfg: &ExperimentConfig) -> Result<(), CliError> {
    write(&cfg.output.dir, "config.toml", &cfg.to_toml())?;
    Ok(())
}

fn execute(cmd: &Command, seed: &mut Option<u64>) -> Result<(), CliError> {
    match cmd {
        Command::Run(common) => {
            let cfg = resolve(common)?;
            *seed = Some(cfg.numerics.seed);
            cmd_run(&cfg)
        }
        Command::Replicate { common, micro } => {
            let cfg = resolve(common)?;
            *seed = Some(cfg.numerics.seed);
            cmd_replicate(&cfg, *micro)
        }
        Command::MatchSweep(common) => {
            let cfg = resolve(common)?;
            *seed = Some(cfg.numerics.seed);
            cmd_match_sweep(&cfg)
        }
        Command::ExtrapSweep(common) => {
            let cfg = resolve(common)?;
            *seed = Some(cfg.numerics.seed);
            cmd_extrap_sweep(&cfg)
        }
        Command::Stability { pe, beta } => {
            print!("{}", stability_table(*pe, *beta)?);
            Ok(())
        }
        Command::Ks { a, b } => {
            let r = ks_two_sample(&read_samples(a)?, &read_samples(b)?)?;
            println!("n_a,n_b,D,p\n{},{},{:.17e},{:.17e}", r.n_a, r.n_b, r.statistic, r.p_value);
            Ok(())
        }
    }
}

/// Runs `cfg` from `initial` with whichever model the configuration names.
pub fn simulate(cfg: &ExperimentConfig, accel: &AccelConfig, initial: &Ensemble) -> Result<TrajectoryRecord, CliError> {
    fn go<M: SdeModel>(m: &M, a: &AccelConfig, e: &Ensemble) -> Result<TrajectoryRecord, CliError> {
        Ok(run_simulation(m, e, a)?)
    }
    match cfg.build_model()? {
        BuiltModel::Fene(m) => go(&m, accel, initial),
        BuiltModel::Linear(m) => go(&m, accel, initial),
    }
}

fn cmd_run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let accel = cfg.accel()?;
    let seed = cfg.numerics.seed;
    let rec = simulate(cfg, &accel, &cfg.initial(seed)?)?;
    let mut meta = cfg.metadata(seed, "run");
    meta.push(("speedup".into(), format!("{:.6}", rec.speedup())));
    write(&cfg.output.dir, "trajectory.csv", &rec.to_csv(&meta))?;
    if cfg.output.record_inner {
        let mut text: String = meta.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect();
        text.push_str("time,qoi");
        for v in accel.spec.variables() {
            text.push(',');
            text.push_str(&v.label());
        }
        text.push('\n');
        for s in &rec.inner {
            text.push_str(&format!("{:.17e},{:.17e}", s.time, s.qoi));
            for v in &s.values {
                text.push_str(&format!(",{v:.17e}"));
            }
            text.push('\n');
        }
        write(&cfg.output.dir, "inner.csv", &text)?;
    }
    snapshot(cfg)
}

fn cmd_replicate(cfg: &ExperimentConfig, micro: bool) -> Result<(), CliError> {
    let mut accel = cfg.accel()?;
    if micro {
        accel.policy.dt_macro = accel.policy.floor();
        accel.policy.dt_max = accel.policy.floor();
        accel.policy.adaptive = false;
    }
    let base = cfg.numerics.seed;
    let stats = replicate_stats(cfg.replicate.r, base, cfg.replicate.workers, |s, _| {
        let rec = simulate(cfg, &accel, &cfg.initial(s)?)?;
        Ok::<_, CliError>((rec.times(), rec.qoi()))
    })?;
    let name = if micro { "replicate_micro.csv" } else { "replicate.csv" };
    write(&cfg.output.dir, name, &stats.to_csv(&cfg.metadata(base, "replicate")))?;
    snapshot(cfg)
}

fn cmd_match_sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let seed = cfg.numerics.seed;
    let sw = &cfg.sweep;
    let mcfg = cfg.matching();
    let sweep = match_sweep(&cfg.fene_setup(seed)?, sw.t_minus, sw.t_star, &sw.ls, sw.reported, &mcfg)?;
    let meta = cfg.metadata(seed, "match-sweep");
    let dir = &cfg.output.dir;
    write(dir, "ks.csv", &sweep.ks_csv(&meta))?;
    write(dir, "moment_errors.csv", &sweep.moment_error_csv(&meta))?;
    write(dir, "densities.csv", &sweep.histogram_csv(cfg.output.histogram_bins, &meta)?)?;

    let dts = log_grid(sw.dt_min, sw.dt_max, sw.dt_points, cfg.numerics.dt);
    let runs = run_replicates(cfg.replicate.r, cfg.replicate.workers, |i| {
        let setup = cfg.fene_setup(replicate_seed(seed, i as u64))?;
        Ok::<_, CliError>(match_dt_sweep(&setup, sw.dt_sweep_t_minus, &dts, &sw.dt_sweep_ls, &mcfg)?)
    })?;
    let avg = average_points(runs.into_iter().flatten().map(|p| ("matching".to_string(), p)));
    let mut meta = meta;
    meta.push(("replicates".into(), cfg.replicate.r.to_string()));
    write(dir, "dt_sweep.csv", &averaged_csv(&avg, &meta))?;
    snapshot(cfg)
}

fn cmd_extrap_sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let seed = cfg.numerics.seed;
    let sw = &cfg.sweep;
    let mcfg = cfg.matching();
    let schemes = cfg.schemes()?;
    let k = cfg.numerics.k;
    let dt = cfg.numerics.dt;
    let dts = log_grid((k as f64 * dt).max(sw.dt_min), sw.extrap_dt_max, sw.dt_points, dt);
    let runs = run_replicates(cfg.replicate.r, cfg.replicate.workers, |i| {
        let setup = cfg.fene_setup(replicate_seed(seed, i as u64))?;
        Ok::<_, CliError>(extrap_sweep(&setup, sw.extrap_t_minus, &dts, &sw.dt_sweep_ls, &schemes, k, &mcfg)?)
    })?;
    let avg = average_points(
        runs.into_iter()
            .flatten()
            .map(|p| (format!("{}:{}", p.method, p.order), p.point)),
    );
    let mut meta = cfg.metadata(seed, "extrap-sweep");
    meta.push(("replicates".into(), cfg.replicate.r.to_string()));
    write(&cfg.output.dir, "extrap_sweep.csv", &averaged_csv(&avg, &meta))?;
    snapshot(cfg)
}

/// Root table of `P(ξ; β, p_e)` with a stability verdict.
pub fn stability_table(pe: usize, beta: f64) -> Result<String, CliError> {
    if pe == 0 || !(0.0..=1.0).contains(&beta) {
        return Err(CliError::Usage(format!("need pe >= 1 and beta in [0, 1], got {pe}, {beta}")));
    }
    let report = characteristic_roots(beta, pe);
    let mut out = format!("# pe = {pe}, beta = {beta}\nre,im,modulus\n");
    for r in &report.roots {
        out.push_str(&format!("{:.15},{:.15},{:.15}\n", r.re, r.im, r.norm()));
    }
    out.push_str(&format!(
        "# verdict = {}\n",
        if report.zero_stable { "stable" } else { "unstable" }
    ));
    Ok(out)
}

/// One sample per line; the first comma-separated field is used, and
/// comment lines or non-numeric headers are skipped.
pub fn read_samples(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() => continue,
            Err(_) => {
                return Err(CliError::Io {
                    path: path.display().to_string(),
                    message: format!("line {}: '{field}' is not a number", i + 1),
                })
            }
        }
    }
    Ok(out)
}
