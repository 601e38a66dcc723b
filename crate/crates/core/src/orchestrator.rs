//! The micro/macro acceleration loop.
//!
//! Each macro step runs a burst of `K` micro steps from `t^n`, restricting
//! after every inner step, extrapolates the macroscopic state to `t^n + Δt`
//! and matches the burst's final ensemble onto it. A failed matching shrinks
//! `Δt` and retries from the same burst; a successful one may grow `Δt` for the
//! next step. When `Δt` equals `K δt` no extrapolation happens and the step is
//! plain micro simulation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extrapolation::{
    multistep_extrapolate, projective_extrapolate, ExtrapConfig, ExtrapError, ExtrapMethod,
};
use crate::matching::{match_ensemble, match_fene, MatchConfig, MatchError, MatchOutcome, StepContext};
use crate::reduce::tree_mean;
use crate::restriction::{restrict, scalar_values, stress_kramers, MacroState, MomentSpec, RestrictionError};
use crate::sde::{evolve_observed, Ensemble, FeneParams, SdeError, SdeModel, DEFAULT_RETRY_CAP};

/// Relative tolerance used when comparing times and step sizes.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Restriction(#[from] RestrictionError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Extrap(#[from] ExtrapError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(
        "matching failed ({reason}) at t = {time} with dt_macro = {dt_macro}; seed {seed}, micro step {step}, target {target:?}"
    )]
    MatchFailed {
        reason: &'static str,
        time: f64,
        dt_macro: f64,
        seed: u64,
        step: u64,
        target: Vec<f64>,
    },
}

/// Macro step controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub dt_macro: f64,
    pub dt_max: f64,
    /// Shrink factor `α_under ∈ (0, 1)`.
    pub alpha_under: f64,
    /// Growth factor `ᾱ_over > 1`.
    pub alpha_over: f64,
    pub k: usize,
    pub dt: f64,
    pub adaptive: bool,
}

impl StepPolicy {
    /// Fixed macro step.
    pub fn fixed(dt_macro: f64, k: usize, dt: f64) -> Self {
        Self {
            dt_macro,
            dt_max: dt_macro,
            alpha_under: 0.2,
            alpha_over: 1.2,
            k,
            dt,
            adaptive: false,
        }
    }

    pub fn adaptive(dt0: f64, dt_max: f64, alpha_under: f64, alpha_over: f64, k: usize, dt: f64) -> Self {
        Self {
            dt_macro: dt0,
            dt_max,
            alpha_under,
            alpha_over,
            k,
            dt,
            adaptive: true,
        }
    }

    /// Smallest admissible macro step, `K δt`.
    pub fn floor(&self) -> f64 {
        self.k as f64 * self.dt
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.k == 0 || !(self.dt > 0.0) {
            return bad(format!("need K >= 1 and dt > 0, got K = {}, dt = {}", self.k, self.dt));
        }
        if self.dt_macro < self.floor() * (1.0 - TIME_EPS) {
            return bad(format!("dt_macro {} below K*dt = {}", self.dt_macro, self.floor()));
        }
        if self.dt_max < self.dt_macro * (1.0 - TIME_EPS) {
            return bad(format!("dt_max {} below dt_macro {}", self.dt_max, self.dt_macro));
        }
        if self.adaptive && !(self.alpha_under > 0.0 && self.alpha_under < 1.0 && self.alpha_over > 1.0) {
            return bad(format!(
                "need 0 < alpha_under < 1 < alpha_over, got {} and {}",
                self.alpha_under, self.alpha_over
            ));
        }
        Ok(())
    }

    /// Rejected step: `Δt ← max(α_under Δt, K δt)`.
    pub fn on_failure(&mut self) {
        self.dt_macro = (self.alpha_under * self.dt_macro).max(self.floor());
    }

    /// Accepted step: `Δt ← min(ᾱ_over Δt, Δt_max)`.
    pub fn on_success(&mut self) {
        self.dt_macro = (self.alpha_over * self.dt_macro).min(self.dt_max);
    }
}

/// Quantity of interest recorded along the trajectory.
#[derive(Debug, Clone)]
pub enum Qoi {
    /// Kramers stress of a FENE ensemble.
    Stress(FeneParams),
    /// Raw moment `Ê X^p`.
    RawMoment(u32),
}

impl Qoi {
    pub fn eval(&self, ens: &Ensemble) -> Result<f64, RunError> {
        match self {
            Qoi::Stress(p) => Ok(stress_kramers(ens, p)?),
            Qoi::RawMoment(p) => {
                let p = *p as i32;
                let y = scalar_values(ens)?;
                Ok(tree_mean(y.len(), &|j| y[j].powi(p)))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Qoi::Stress(_) => "stress".into(),
            Qoi::RawMoment(p) => format!("m{p}"),
        }
    }
}

/// Starting procedure for multistep extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Warmup {
    /// Pure micro simulation over the macro step.
    Micro,
    /// Projective extrapolation of order `min(p_e, K)` plus matching.
    Projective,
}

impl Warmup {
    pub fn name(&self) -> &'static str {
        match self {
            Warmup::Micro => "micro",
            Warmup::Projective => "projective",
        }
    }
}

impl FromStr for Warmup {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "micro" => Ok(Warmup::Micro),
            "projective" => Ok(Warmup::Projective),
            other => Err(RunError::Config(format!("unknown warm-up '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AccelConfig {
    pub spec: MomentSpec,
    pub extrap: ExtrapConfig,
    pub matching: MatchConfig,
    pub policy: StepPolicy,
    pub qoi: Qoi,
    pub warmup: Warmup,
    pub t_end: f64,
    /// Keep restrictions and QoI of every inner step.
    pub record_inner: bool,
}

impl AccelConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        self.policy.validate()?;
        self.extrap.validate()?;
        if self.extrap.k != self.policy.k || self.extrap.dt.to_bits() != self.policy.dt.to_bits() {
            return Err(RunError::Config(
                "extrapolation and step policy disagree on K or dt".into(),
            ));
        }
        Ok(())
    }
}

/// How a macro step was completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Initial,
    /// `Δt = K δt`: the burst alone.
    Identity,
    /// Extrapolation and matching.
    Matched,
    /// Multistep warm-up by micro simulation.
    WarmupMicro,
    /// Multistep warm-up by projective extrapolation.
    WarmupProjective,
    /// Remaining time shorter than one burst.
    Tail,
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StepKind::Initial => "initial",
            StepKind::Identity => "identity",
            StepKind::Matched => "matched",
            StepKind::WarmupMicro => "warmup-micro",
            StepKind::WarmupProjective => "warmup-projective",
            StepKind::Tail => "tail",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub values: Vec<f64>,
    pub qoi: f64,
    pub dt_macro: f64,
    pub match_iters: usize,
    pub match_residual: f64,
    pub rejections: usize,
    pub fene_retries: usize,
    pub kind: StepKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSample {
    pub time: f64,
    pub values: Vec<f64>,
    pub qoi: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub spec: MomentSpec,
    pub method: ExtrapMethod,
    pub warmup: Warmup,
    pub rows: Vec<TrajectoryRow>,
    pub inner: Vec<InnerSample>,
    pub micro_steps: u64,
    pub micro_time: f64,
    pub final_ensemble: Ensemble,
}

impl TrajectoryRecord {
    /// Simulated time over micro time.
    pub fn speedup(&self) -> f64 {
        let span = self.rows.last().map_or(0.0, |r| r.time) - self.rows.first().map_or(0.0, |r| r.time);
        if self.micro_time > 0.0 {
            span / self.micro_time
        } else {
            1.0
        }
    }

    pub fn total_rejections(&self) -> usize {
        self.rows.iter().map(|r| r.rejections).sum()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.time).collect()
    }

    pub fn qoi(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.qoi).collect()
    }

    /// CSV with `#` metadata lines followed by the header row.
    pub fn to_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in metadata {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        if !metadata.iter().any(|(k, _)| k == "seed") {
            out.push_str(&format!("# seed = {}\n", self.seed));
        }
        out.push_str(&format!("# moments = {}\n", self.spec.describe()));
        out.push_str(&format!("# extrapolation = {}\n", self.method));
        out.push_str(&format!("# warmup = {}\n", self.warmup.name()));
        out.push_str("# norm = max\n");
        out.push_str("time");
        for i in 1..=self.spec.l {
            out.push_str(&format!(",U{i}"));
        }
        out.push_str(",qoi,dt_macro,match_iters,match_residual,rejections,fene_retries,kind\n");
        for r in &self.rows {
            out.push_str(&format!("{:.12e}", r.time));
            for v in &r.values {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push_str(&format!(
                ",{:.17e},{:.12e},{},{:.6e},{},{},{}\n",
                r.qoi, r.dt_macro, r.match_iters, r.match_residual, r.rejections, r.fene_retries, r.kind
            ));
        }
        out
    }
}

/// Result of one macro step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub ensemble: Ensemble,
    pub row: TrajectoryRow,
    pub inner: Vec<InnerSample>,
    pub micro_steps: u64,
}

/// Stateful driver of the macro loop (step policy and multistep history).
pub struct Accelerator<'m, M: SdeModel + ?Sized> {
    model: &'m M,
    cfg: AccelConfig,
    policy: StepPolicy,
    /// Burst endpoints with the gap to their predecessor, newest last.
    endpoints: Vec<(MacroState, f64)>,
    last_dt: f64,
}

struct Burst {
    states: Vec<MacroState>,
    /// QoI of the final ensemble.
    end_qoi: f64,
    prev: Ensemble,
    end: Ensemble,
    inner: Vec<InnerSample>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_EPS * a.abs().max(b.abs())
}

impl<'m, M: SdeModel + ?Sized> Accelerator<'m, M> {
    pub fn new(model: &'m M, cfg: AccelConfig) -> Result<Self, RunError> {
        cfg.validate()?;
        Ok(Self {
            model,
            policy: cfg.policy,
            cfg,
            endpoints: Vec::new(),
            last_dt: f64::NAN,
        })
    }

    pub fn policy(&self) -> &StepPolicy {
        &self.policy
    }

    fn inner_sample(&self, e: &Ensemble) -> Result<(MacroState, InnerSample), RunError> {
        let m = restrict(e, &self.cfg.spec)?;
        let q = self.cfg.qoi.eval(e)?;
        let s = InnerSample {
            time: e.time(),
            values: m.values.clone(),
            qoi: q,
        };
        Ok((m, s))
    }

    fn micro(&self, ens: &mut Ensemble, steps: usize, inner: &mut Vec<InnerSample>) -> Result<(), RunError> {
        for _ in 0..steps {
            evolve_observed(self.model, ens, 1, self.cfg.policy.dt, DEFAULT_RETRY_CAP, |_, _| Ok(()))?;
            if self.cfg.record_inner {
                inner.push(self.inner_sample(ens)?.1);
            }
        }
        Ok(())
    }

    fn burst(&self, ens: &Ensemble) -> Result<Burst, RunError> {
        let k = self.cfg.policy.k;
        let mut states = Vec::with_capacity(k + 1);
        let mut inner = Vec::new();
        states.push(restrict(ens, &self.cfg.spec)?);
        let mut cur = ens.clone();
        let mut prev = ens.clone();
        let mut end_qoi = f64::NAN;
        for step in 0..k {
            if step + 1 == k {
                prev = cur.clone();
            }
            evolve_observed(self.model, &mut cur, 1, self.cfg.policy.dt, DEFAULT_RETRY_CAP, |_, _| Ok(()))?;
            let (m, s) = self.inner_sample(&cur)?;
            states.push(m);
            end_qoi = s.qoi;
            if self.cfg.record_inner {
                inner.push(s);
            }
        }
        Ok(Burst {
            states,
            end_qoi,
            prev,
            end: cur,
            inner,
        })
    }

    fn row(&self, ens: &Ensemble, dt_macro: f64, kind: StepKind) -> Result<TrajectoryRow, RunError> {
        Ok(TrajectoryRow {
            time: ens.time(),
            values: restrict(ens, &self.cfg.spec)?.values,
            qoi: self.cfg.qoi.eval(ens)?,
            dt_macro,
            match_iters: 0,
            match_residual: 0.0,
            rejections: 0,
            fene_retries: 0,
            kind,
        })
    }

    /// Whether the stored endpoints allow a multistep extrapolation over `dt_try`.
    fn multistep_ready(&self, dt_try: f64) -> bool {
        let p = self.cfg.extrap.order;
        let n = self.endpoints.len();
        n >= p + 1 && self.endpoints[n - p..].iter().all(|(_, gap)| close(*gap, dt_try))
    }

    fn do_match(&self, burst: &Burst, target: &MacroState) -> Result<MatchOutcome, RunError> {
        if self.model.is_constrained() {
            let ctx = StepContext {
                model: self.model,
                prev: &burst.prev,
                dt: self.cfg.policy.dt,
            };
            Ok(match_fene(&burst.end, target, &ctx, &self.cfg.matching)?)
        } else {
            Ok(match_ensemble(&burst.end, target, &self.cfg.matching)?)
        }
    }

    /// One macro step from `ens`; never steps past `t_end`.
    pub fn step(&mut self, ens: &Ensemble) -> Result<StepOutput, RunError> {
        let t = ens.time();
        let t_end = self.cfg.t_end;
        let dt = self.cfg.policy.dt;
        let floor = self.policy.floor();
        let remaining = t_end - t;

        if remaining < floor * (1.0 - TIME_EPS) {
            let steps = ((remaining / dt).round() as usize).max(1);
            let mut cur = ens.clone();
            let mut inner = Vec::new();
            self.micro(&mut cur, steps, &mut inner)?;
            if close(cur.time(), t_end) {
                cur.set_time(t_end);
            }
            self.endpoints.clear();
            let row = self.row(&cur, cur.time() - t, StepKind::Tail)?;
            return Ok(StepOutput {
                ensemble: cur,
                row,
                inner,
                micro_steps: steps as u64,
            });
        }

        let burst = self.burst(ens)?;
        let k = self.cfg.policy.k;
        let mut micro_steps = k as u64;
        let mut inner = burst.inner.clone();
        let endpoint = burst.states[k].clone();
        if self.cfg.extrap.method == ExtrapMethod::Multistep {
            let gap = self.last_dt;
            self.endpoints.push((endpoint, gap));
            let keep = self.cfg.extrap.order + 1;
            if self.endpoints.len() > keep {
                self.endpoints.drain(..self.endpoints.len() - keep);
            }
        }

        let mut rejections = 0usize;
        loop {
            let dt_try = self.policy.dt_macro.min(remaining);
            if dt_try <= floor * (1.0 + TIME_EPS) {
                let row = TrajectoryRow {
                    time: burst.end.time(),
                    values: burst.states[k].values.clone(),
                    qoi: burst.end_qoi,
                    dt_macro: floor,
                    match_iters: 0,
                    match_residual: 0.0,
                    rejections,
                    fene_retries: 0,
                    kind: StepKind::Identity,
                };
                self.last_dt = burst.end.time() - t;
                return Ok(StepOutput {
                    ensemble: burst.end,
                    row,
                    inner,
                    micro_steps,
                });
            }
            let alpha = self.cfg.extrap.alpha(dt_try)?;
            let (target, kind) = match self.cfg.extrap.method {
                ExtrapMethod::Projective | ExtrapMethod::ProjectiveChord => (
                    projective_extrapolate(&burst.states, dt_try, &self.cfg.extrap)?,
                    StepKind::Matched,
                ),
                ExtrapMethod::Multistep if self.multistep_ready(dt_try) => {
                    let ends: Vec<MacroState> = self.endpoints.iter().map(|(m, _)| m.clone()).collect();
                    (
                        multistep_extrapolate(&ends, alpha, k, self.cfg.extrap.order, dt)?,
                        StepKind::Matched,
                    )
                }
                ExtrapMethod::Multistep => match self.cfg.warmup {
                    Warmup::Micro => {
                        let total = (dt_try / dt).round() as usize;
                        let mut cur = burst.end.clone();
                        self.micro(&mut cur, total.saturating_sub(k), &mut inner)?;
                        micro_steps = total.max(k) as u64;
                        if dt_try == remaining && close(cur.time(), t_end) {
                            cur.set_time(t_end);
                        }
                        let mut row = self.row(&cur, cur.time() - t, StepKind::WarmupMicro)?;
                        row.rejections = rejections;
                        self.last_dt = cur.time() - t;
                        return Ok(StepOutput {
                            ensemble: cur,
                            row,
                            inner,
                            micro_steps,
                        });
                    }
                    Warmup::Projective => {
                        let mut cfg = self.cfg.extrap;
                        cfg.method = ExtrapMethod::Projective;
                        cfg.order = cfg.order.min(k);
                        (
                            projective_extrapolate(&burst.states, dt_try, &cfg)?,
                            StepKind::WarmupProjective,
                        )
                    }
                },
            };
            let outcome = self.do_match(&burst, &target)?;
            match outcome.result {
                Ok(mut matched) => {
                    let new_t = if dt_try == remaining { t_end } else { t + dt_try };
                    matched.set_time(new_t);
                    let mut row = self.row(&matched, dt_try, kind)?;
                    row.match_iters = outcome.iterations;
                    row.match_residual = outcome.residual;
                    row.rejections = rejections;
                    row.fene_retries = outcome.fene_retries;
                    self.last_dt = dt_try;
                    if self.policy.adaptive && kind == StepKind::Matched {
                        self.policy.on_success();
                    }
                    return Ok(StepOutput {
                        ensemble: matched,
                        row,
                        inner,
                        micro_steps,
                    });
                }
                Err(failure) => {
                    if !self.policy.adaptive {
                        return Err(RunError::MatchFailed {
                            reason: failure.reason(),
                            time: t,
                            dt_macro: dt_try,
                            seed: ens.lineage().seed,
                            step: ens.lineage().step,
                            target: target.values,
                        });
                    }
                    rejections += 1;
                    self.policy.on_failure();
                }
            }
        }
    }
}

/// Runs the accelerated simulation from `initial` to `cfg.t_end`.
pub fn run_simulation<M: SdeModel + ?Sized>(
    model: &M,
    initial: &Ensemble,
    cfg: &AccelConfig,
) -> Result<TrajectoryRecord, RunError> {
    run_simulation_with(model, initial, cfg, |_, _| Ok(()))
}

/// [`run_simulation`] with a callback after every macro step.
pub fn run_simulation_with<M, F>(
    model: &M,
    initial: &Ensemble,
    cfg: &AccelConfig,
    mut on_step: F,
) -> Result<TrajectoryRecord, RunError>
where
    M: SdeModel + ?Sized,
    F: FnMut(&Ensemble, &TrajectoryRow) -> Result<(), RunError>,
{
    let mut acc = Accelerator::new(model, cfg.clone())?;
    let mut ens = initial.clone();
    let first = acc.row(&ens, 0.0, StepKind::Initial)?;
    let mut record = TrajectoryRecord {
        seed: initial.lineage().seed,
        spec: cfg.spec,
        method: cfg.extrap.method,
        warmup: cfg.warmup,
        rows: vec![first],
        inner: Vec::new(),
        micro_steps: 0,
        micro_time: 0.0,
        final_ensemble: initial.clone(),
    };
    let eps = TIME_EPS * cfg.t_end.abs().max(cfg.policy.floor());
    while cfg.t_end - ens.time() > eps {
        let out = acc.step(&ens)?;
        on_step(&out.ensemble, &out.row)?;
        record.micro_steps += out.micro_steps;
        record.rows.push(out.row);
        record.inner.extend(out.inner);
        ens = out.ensemble;
    }
    record.micro_time = record.micro_steps as f64 * cfg.policy.dt;
    record.final_ensemble = ens;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{evolve_ensemble, sample_normal, LinearSde};

    fn linear_cfg(dt_macro: f64, t_end: f64) -> AccelConfig {
        let k = 1;
        let dt = 2e-4;
        AccelConfig {
            spec: MomentSpec::centralized(2),
            extrap: ExtrapConfig::new(ExtrapMethod::Projective, 1, k, dt).unwrap(),
            matching: MatchConfig::default(),
            policy: StepPolicy::fixed(dt_macro, k, dt),
            qoi: Qoi::RawMoment(2),
            warmup: Warmup::Micro,
            t_end,
            record_inner: false,
        }
    }

    #[test]
    fn policy_updates() {
        let mut p = StepPolicy::adaptive(1e-2, 8e-3, 0.2, 1.2, 1, 2e-4);
        p.on_failure();
        assert_eq!(p.dt_macro, 2e-3);
        p.dt_macro = 7e-3;
        p.on_success();
        assert_eq!(p.dt_macro, 8e-3);
        p.dt_macro = 3e-4;
        p.on_failure();
        assert_eq!(p.dt_macro, 2e-4);
    }

    #[test]
    fn identity_steps_equal_micro_simulation() {
        let m = LinearSde::new(-1.0, 1.0, 1.0);
        let ens = sample_normal(200, 0.0, 1.0, 5);
        let cfg = linear_cfg(2e-4, 0.02);
        let rec = run_simulation(&m, &ens, &cfg).unwrap();
        let (reference, _) = evolve_ensemble(&m, &ens, 100, 2e-4).unwrap();
        assert!(rec.final_ensemble.bitwise_eq(&reference));
        assert_eq!(rec.micro_steps, 100);
        assert!(rec.rows[1..].iter().all(|r| r.kind == StepKind::Identity));
    }

    #[test]
    fn empty_horizon_keeps_initial_row() {
        let m = LinearSde::new(-1.0, 1.0, 1.0);
        let ens = sample_normal(50, 0.0, 1.0, 5);
        let rec = run_simulation(&m, &ens, &linear_cfg(1e-3, 0.0)).unwrap();
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.micro_steps, 0);
    }

    #[test]
    fn accelerated_run_ends_exactly_at_horizon() {
        let m = LinearSde::new(-1.0, 1.0, 1.0);
        let ens = sample_normal(500, 0.0, 1.0, 6);
        let rec = run_simulation(&m, &ens, &linear_cfg(1.5e-3, 0.1)).unwrap();
        assert_eq!(rec.rows.last().unwrap().time, 0.1);
        assert!(rec.rows.windows(2).all(|w| w[1].time > w[0].time));
        assert!(rec.speedup() > 5.0);
    }

    #[test]
    fn multistep_runs_warm_up_first() {
        let m = LinearSde::new(-1.0, 1.0, 1.0);
        let ens = sample_normal(500, 0.0, 1.0, 6);
        let mut cfg = linear_cfg(1e-3, 0.05);
        cfg.extrap = ExtrapConfig::new(ExtrapMethod::Multistep, 1, 1, 2e-4).unwrap();
        let rec = run_simulation(&m, &ens, &cfg).unwrap();
        assert_eq!(rec.rows[1].kind, StepKind::WarmupMicro);
        assert_eq!(rec.rows[2].kind, StepKind::Matched);
        assert!((rec.rows.last().unwrap().time - 0.05).abs() < 1e-15);
    }
}
