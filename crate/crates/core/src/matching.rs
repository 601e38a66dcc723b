//! Minimal-perturbation matching of an ensemble onto prescribed moments.
//!
//! Given an ensemble `Y` and target moments `t`, the matched ensemble is
//! `Y' = Y + Σ_k λ_k g_k`, with `g_k` the gradient of the `k`-th constraint
//! evaluated once at `Y`. The multipliers solve the `L` nonlinear equations
//! `C(Y'(λ)) = t` by Newton's method with step halving.
//!
//! Constraint conventions:
//! * standard moments: `C_l = (1/J) Σ y^l`;
//! * layouts containing the mean: the mean is constrained directly and the
//!   central moments are taken about the *target* mean, so the mean equation
//!   decouples;
//! * even central moments without the mean: central moments about the
//!   floating empirical mean of `Y'`, with gradients `p ((y − m)^{p−1} − μ_{p−1}) / J`
//!   at the input ensemble.
//!
//! Internally every direction is rescaled to unit RMS; reported multipliers
//! refer to the unscaled gradients.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::reduce::{tree_mean, tree_sum_vec};
use crate::restriction::{
    moment_values, power_means, scalar_values, Center, MacroState, MomentKind, MomentSpec, RestrictionError, Variable,
};
use crate::sde::{redo_path_step, Ensemble, SdeError, SdeModel};

/// Targets smaller than this in magnitude are matched in absolute terms.
pub const ABSOLUTE_FALLBACK: f64 = 1e-12;

/// Relative RMS below which an orthogonalized direction counts as dependent.
const DEPENDENT_DIRECTION: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    /// Relative residual tolerance (max norm).
    pub tol: f64,
    pub max_iter: usize,
    /// Jacobian condition numbers above this are treated as singular.
    pub jacobian_cond_cap: f64,
    /// Per-path re-evolution retries in [`match_fene`].
    pub fene_retry_cap: usize,
    pub max_halvings: usize,
    /// When the direct solve fails, retry by walking the target from the
    /// input's own restriction in this many stages (0 disables).
    pub continuation_stages: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
            jacobian_cond_cap: 1e14,
            fene_retry_cap: 20,
            max_halvings: 20,
            continuation_stages: 8,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.jacobian_cond_cap > 1.0) {
            return Err(MatchError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Errors in the inputs, as opposed to numerical failures reported in [`MatchOutcome`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error(transparent)]
    Restriction(#[from] RestrictionError),
    #[error("target has spec {target}, matching was asked for {requested}")]
    SpecMismatch { target: String, requested: String },
    #[error("ensemble of {j} paths cannot satisfy {l} constraints")]
    TooFewPaths { j: usize, l: usize },
    #[error("invalid matching configuration: {0}")]
    InvalidConfig(String),
    #[error("Hankel test needs moments up to order {needed}, only {available} given")]
    InsufficientMoments { needed: usize, available: usize },
    #[error(transparent)]
    Sde(#[from] SdeError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchFailure {
    NewtonDiverged { residual: f64 },
    SingularJacobian { condition: f64, hankel: Option<HankelCheck> },
    FeneInadmissible { paths: Vec<usize> },
}

impl MatchFailure {
    pub fn reason(&self) -> &'static str {
        match self {
            MatchFailure::NewtonDiverged { .. } => "newton-diverged",
            MatchFailure::SingularJacobian { .. } => "singular-jacobian",
            MatchFailure::FeneInadmissible { .. } => "fene-inadmissible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub result: Result<Ensemble, MatchFailure>,
    pub iterations: usize,
    /// Final scaled residual, max norm.
    pub residual: f64,
    pub lambda: Vec<f64>,
    /// Paths re-evolved by [`match_fene`], counted with multiplicity.
    pub fene_retries: usize,
}

impl MatchOutcome {
    pub fn is_success(&self) -> bool {
        self.result.is_ok()
    }

    pub fn ensemble(&self) -> Option<&Ensemble> {
        self.result.as_ref().ok()
    }

    pub fn failure_reason(&self) -> &'static str {
        match &self.result {
            Ok(_) => "ok",
            Err(f) => f.reason(),
        }
    }
}

/// Determinant test for local uniqueness of the multipliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HankelCheck {
    pub determinant: f64,
    pub locally_unique: bool,
}

/// Hankel determinant from raw moments `raw[k−1] = U_k`.
///
/// Standard: `det(U_{i+k−2})_{i,k=1..L}` with `U_0 = 1`. Centralized:
/// `det(U_{i+k−2} − U_{i−1} U_{k−1})_{i,k=2..L}`. Both need `U_1..U_{2L−2}`.
pub fn hankel_determinant(raw: &[f64], l: usize, centralized: bool) -> Result<HankelCheck, MatchError> {
    let needed = (2 * l).saturating_sub(2);
    if raw.len() < needed {
        return Err(MatchError::InsufficientMoments {
            needed,
            available: raw.len(),
        });
    }
    let u = |k: usize| if k == 0 { 1.0 } else { raw[k - 1] };
    let m = if centralized {
        let n = l - 1;
        DMatrix::from_fn(n, n, |i, k| {
            let (i, k) = (i + 2, k + 2);
            u(i + k - 2) - u(i - 1) * u(k - 1)
        })
    } else {
        DMatrix::from_fn(l, l, |i, k| u(i + k))
    };
    Ok(determinant_check(&m))
}

fn determinant_check(m: &DMatrix<f64>) -> HankelCheck {
    let n = m.nrows();
    if n == 0 {
        return HankelCheck {
            determinant: 1.0,
            locally_unique: true,
        };
    }
    let det = m.clone().determinant();
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let threshold = 1e-12 * scale.powi(n as i32);
    HankelCheck {
        determinant: det,
        locally_unique: det.is_finite() && det.abs() > threshold,
    }
}

/// Hankel test on a macroscopic state holding enough moments
/// (standard or centralized with `L ≤ 2`; larger `L` needs
/// [`hankel_determinant`] with the extra moments).
pub fn hankel_solvability(state: &MacroState) -> Result<HankelCheck, MatchError> {
    let l = state.spec.l;
    match state.spec.kind {
        MomentKind::Standard => hankel_determinant(&state.values, l, false),
        MomentKind::Centralized => {
            // Central moments about the mean: U_1 = 0 in the shifted frame.
            let mut raw = state.values.clone();
            raw[0] = 0.0;
            hankel_determinant(&raw, l, true)
        }
        MomentKind::EvenCentralized { .. } => Err(MatchError::SpecMismatch {
            target: state.spec.describe(),
            requested: "standard or centralized".into(),
        }),
    }
}

/// Solvability test computed from the ensemble itself. For even central
/// layouts the Gram matrix of the constraint gradients is used.
pub fn hankel_for_ensemble(ens: &Ensemble, spec: &MomentSpec) -> Result<HankelCheck, MatchError> {
    let y = scalar_values(ens)?;
    let l = spec.l;
    match spec.kind {
        MomentKind::Standard => {
            let raw = power_means(y, 0.0, (2 * l).saturating_sub(2).max(1) as u32);
            hankel_determinant(&raw, l, false)
        }
        MomentKind::Centralized => {
            let mean = tree_mean(y.len(), &|j| y[j]);
            let mut c = power_means(y, mean, (2 * l).saturating_sub(2).max(1) as u32);
            c[0] = 0.0;
            hankel_determinant(&c, l, true)
        }
        MomentKind::EvenCentralized { .. } => {
            let dirs = Directions::new(y, spec, None)?;
            let n = y.len();
            let g = tree_sum_vec(n, l * l, &|j, acc: &mut [f64]| {
                for a in 0..l {
                    for b in 0..l {
                        acc[a * l + b] += dirs.raw[a][j] * dirs.raw[b][j];
                    }
                }
            });
            Ok(determinant_check(&DMatrix::from_row_slice(l, l, &g)))
        }
    }
}

/// Constraint gradients at the input ensemble.
struct Directions {
    /// Unscaled gradients (including the `1/J` factor), one vector per variable.
    raw: Vec<Vec<f64>>,
    /// Orthonormal directions used by the Newton iteration.
    unit: Vec<Vec<f64>>,
    /// Row `k`: direction `k` as a combination of the raw gradients.
    to_raw: Vec<Vec<f64>>,
    /// Mean of each unit direction.
    unit_mean: Vec<f64>,
    center: Center,
}

impl Directions {
    fn new(y: &[f64], spec: &MomentSpec, target_mean: Option<f64>) -> Result<Self, MatchError> {
        let n = y.len();
        let jf = n as f64;
        let vars = spec.variables();
        let floating = !spec.has_mean() && spec.is_centered();
        let input_mean = tree_mean(n, &|j| y[j]);
        let center = match (spec.is_centered(), floating, target_mean) {
            (false, _, _) => Center::Fixed(0.0),
            (true, true, _) => Center::Empirical,
            (true, false, Some(m)) => Center::Fixed(m),
            (true, false, None) => Center::Fixed(input_mean),
        };
        let c = match center {
            Center::Fixed(c) => c,
            Center::Empirical => input_mean,
        };
        let lower = if floating {
            power_means(y, c, spec.max_order())
        } else {
            Vec::new()
        };
        let raw: Vec<Vec<f64>> = vars
            .iter()
            .map(|v| {
                let (p, shift) = match *v {
                    Variable::Mean => return vec![1.0 / jf; n],
                    Variable::Raw(p) => (p, 0.0),
                    Variable::Central(p) => (p, c),
                };
                let pf = p as f64;
                let offset = if floating && p >= 2 { lower[p as usize - 2] } else { 0.0 };
                y.par_iter()
                    .map(|&yj| pf * (powi(yj - shift, p - 1) - offset) / jf)
                    .collect()
            })
            .collect();
        let rms: Vec<f64> = raw
            .iter()
            .map(|g| (tree_mean(n, &|j| g[j] * g[j])).sqrt())
            .collect();
        // Orthonormal basis of the gradient span (modified Gram-Schmidt, two
        // passes, RMS inner product); `to_raw` maps basis weights to raw ones.
        let l = raw.len();
        let mut unit: Vec<Vec<f64>> = Vec::with_capacity(l);
        let mut to_raw = vec![vec![0.0; l]; l];
        for (k, g) in raw.iter().enumerate() {
            if rms[k] == 0.0 {
                unit.push(vec![0.0; n]);
                continue;
            }
            let mut v: Vec<f64> = g.iter().map(|x| x / rms[k]).collect();
            // coefficients of v in the raw gradients
            let mut coef = vec![0.0; l];
            coef[k] = 1.0 / rms[k];
            for _ in 0..2 {
                for (i, u) in unit.iter().enumerate() {
                    let d = tree_mean(n, &|j| u[j] * v[j]);
                    if d == 0.0 {
                        continue;
                    }
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
                    for c in 0..l {
                        coef[c] -= d * to_raw[i][c];
                    }
                }
            }
            let norm = tree_mean(n, &|j| v[j] * v[j]).sqrt();
            if !(norm > DEPENDENT_DIRECTION) {
                unit.push(vec![0.0; n]);
                continue;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            coef.iter_mut().for_each(|c| *c /= norm);
            to_raw[k] = coef;
            unit.push(v);
        }
        let unit_mean = unit.iter().map(|g| tree_mean(n, &|j| g[j])).collect();
        Ok(Self {
            raw,
            unit,
            to_raw,
            unit_mean,
            center,
        })
    }

    fn displaced(&self, y: &[f64], mu: &[f64]) -> Vec<f64> {
        y.par_iter()
            .enumerate()
            .map(|(j, &yj)| {
                let mut v = yj;
                for (k, g) in self.unit.iter().enumerate() {
                    v += mu[k] * g[j];
                }
                v
            })
            .collect()
    }
}

#[inline]
fn powi(x: f64, p: u32) -> f64 {
    let mut r = 1.0;
    for _ in 0..p {
        r *= x;
    }
    r
}

struct Problem {
    spec: MomentSpec,
    scale: Vec<f64>,
    dirs: Directions,
}

impl Problem {
    fn residual_of(&self, values: &[f64], target: &[f64]) -> Vec<f64> {
        let c = self.constraint_values(values);
        c.iter()
            .zip(target)
            .zip(&self.scale)
            .map(|((c, t), s)| (c - t) / s)
            .collect()
    }

    fn constraint_values(&self, values: &[f64]) -> Vec<f64> {
        moment_values(values, &self.spec, self.dirs.center)
    }

    /// Scaled Jacobian `∂r_l/∂μ_k` at the displaced ensemble `yp`.
    fn jacobian(&self, yp: &[f64]) -> DMatrix<f64> {
        let vars = self.spec.variables();
        let l = vars.len();
        let n = yp.len();
        let center = match self.dirs.center {
            Center::Fixed(c) => c,
            Center::Empirical => tree_mean(n, &|j| yp[j]),
        };
        let floating = matches!(self.dirs.center, Center::Empirical);
        let unit = &self.dirs.unit;
        let sums = tree_sum_vec(n, l * l, &|j, acc: &mut [f64]| {
            let d = yp[j] - center;
            for (a, v) in vars.iter().enumerate() {
                let w = match *v {
                    Variable::Mean => 1.0,
                    Variable::Raw(p) | Variable::Central(p) => p as f64 * powi(d, p - 1),
                };
                for k in 0..l {
                    acc[a * l + k] += w * unit[k][j];
                }
            }
        });
        let mut jac = DMatrix::from_fn(l, l, |a, k| sums[a * l + k] / n as f64);
        if floating {
            // Chain rule through the floating mean m(μ): ∂m/∂μ_k = mean(ĝ_k).
            let weights: Vec<f64> = vars
                .iter()
                .map(|v| match *v {
                    Variable::Central(p) => {
                        let s = tree_sum_vec(n, 1, &|j, acc: &mut [f64]| {
                            acc[0] += p as f64 * powi(yp[j] - center, p - 1);
                        });
                        s[0] / n as f64
                    }
                    _ => 0.0,
                })
                .collect();
            for a in 0..l {
                for k in 0..l {
                    jac[(a, k)] -= weights[a] * self.dirs.unit_mean[k];
                }
            }
        }
        for a in 0..l {
            for k in 0..l {
                jac[(a, k)] /= self.scale[a];
            }
        }
        jac
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| if x.is_nan() { f64::NAN } else { a.max(x.abs()) })
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max.is_finite() && min.is_finite()) {
        f64::INFINITY
    } else if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Residual scale of each target component.
pub fn residual_scale(target: &[f64]) -> Vec<f64> {
    target
        .iter()
        .map(|t| if t.abs() >= ABSOLUTE_FALLBACK { t.abs() } else { 1.0 })
        .collect()
}

struct Newton {
    mu: Vec<f64>,
    yp: Vec<f64>,
    norm: f64,
    iterations: usize,
    failure: Option<MatchFailure>,
}

/// Damped Newton iteration for `target` from the multipliers `mu`.
fn newton(problem: &Problem, y: &[f64], target: &[f64], mu: Vec<f64>, cfg: &MatchConfig, ens: &Ensemble) -> Newton {
    let l = mu.len();
    let mut yp = problem.dirs.displaced(y, &mu);
    let mut r = problem.residual_of(&yp, target);
    let mut state = Newton {
        norm: max_norm(&r),
        mu,
        yp: Vec::new(),
        iterations: 0,
        failure: None,
    };
    for it in 1..=cfg.max_iter {
        if state.norm <= cfg.tol {
            break;
        }
        let jac = problem.jacobian(&yp);
        let cond = condition_number(&jac);
        let rhs = DVector::from_iterator(l, r.iter().map(|v| -v));
        let delta = if cond <= cfg.jacobian_cond_cap { jac.lu().solve(&rhs) } else { None };
        let Some(delta) = delta else {
            state.failure = Some(MatchFailure::SingularJacobian {
                condition: if cond.is_nan() { f64::INFINITY } else { cond },
                hankel: hankel_for_ensemble(ens, &problem.spec).ok(),
            });
            break;
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = state.mu.iter().zip(delta.iter()).map(|(m, d)| m + step * d).collect();
            let trial_y = problem.dirs.displaced(y, &trial);
            let trial_r = problem.residual_of(&trial_y, target);
            let trial_norm = max_norm(&trial_r);
            if trial_norm.is_finite() && trial_norm < state.norm {
                accepted = Some((trial, trial_y, trial_r, trial_norm));
                break;
            }
            step *= 0.5;
        }
        state.iterations = it;
        let Some((m, ty, tr, tn)) = accepted else {
            state.failure = Some(MatchFailure::NewtonDiverged { residual: state.norm });
            break;
        };
        state.mu = m;
        yp = ty;
        r = tr;
        state.norm = tn;
    }
    if state.failure.is_none() && state.norm > cfg.tol {
        state.failure = Some(MatchFailure::NewtonDiverged { residual: state.norm });
    }
    state.yp = yp;
    state
}

/// Matches `ens` onto `target`.
pub fn match_ensemble(ens: &Ensemble, target: &MacroState, cfg: &MatchConfig) -> Result<MatchOutcome, MatchError> {
    cfg.validate()?;
    let y = scalar_values(ens)?;
    let spec = target.spec;
    if y.len() < spec.l || (spec.is_centered() && y.len() < 2) {
        return Err(MatchError::TooFewPaths { j: y.len(), l: spec.l });
    }
    let l = spec.l;
    let target_mean = spec.has_mean().then(|| target.values[0]);
    let dirs = Directions::new(y, &spec, target_mean)?;
    let problem = Problem {
        spec,
        scale: residual_scale(&target.values),
        dirs,
    };

    let norm = max_norm(&problem.residual_of(y, &target.values));
    if norm <= cfg.tol {
        return Ok(MatchOutcome {
            result: Ok(ens.clone()),
            iterations: 0,
            residual: norm,
            lambda: vec![0.0; l],
            fene_retries: 0,
        });
    }

    let mut run = newton(&problem, y, &target.values, vec![0.0; l], cfg, ens);
    if run.failure.is_some() && cfg.continuation_stages > 1 {
        // Homotopy from the input's own restriction, warm-starting each stage.
        let start = problem.constraint_values(y);
        let stages = cfg.continuation_stages;
        let mut mu = vec![0.0; l];
        let mut iterations = run.iterations;
        let mut staged = None;
        for k in 1..=stages {
            let s = k as f64 / stages as f64;
            let goal: Vec<f64> = if k == stages {
                target.values.clone()
            } else {
                start.iter().zip(&target.values).map(|(a, b)| a + s * (b - a)).collect()
            };
            let stage = newton(&problem, y, &goal, mu, cfg, ens);
            iterations += stage.iterations;
            mu = stage.mu.clone();
            let failed = stage.failure.is_some();
            staged = Some(stage);
            if failed {
                break;
            }
        }
        if let Some(mut stage) = staged {
            stage.iterations = iterations;
            if stage.failure.is_none() {
                run = stage;
            } else {
                run.iterations = iterations;
            }
        }
    }

    let lambda = (0..l)
        .map(|c| run.mu.iter().zip(&problem.dirs.to_raw).map(|(m, row)| m * row[c]).sum())
        .collect();
    let result = match run.failure {
        None => {
            let mut out = ens.clone();
            out.states_mut().copy_from_slice(&run.yp);
            Ok(out)
        }
        Some(f) => Err(f),
    };
    Ok(MatchOutcome {
        result,
        iterations: run.iterations,
        residual: run.norm,
        lambda,
        fene_retries: 0,
    })
}

/// Affine map `z ↦ scale · z + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        self.scale * z + self.offset
    }
}

/// Map carrying a normal law with moments `(mu, sigma2)` to `(target_mu, target_sigma2)`,
/// positive-scale branch: `z ↦ sqrt(σ*²/σ²) (z − μ) + μ*`.
pub fn match_normal_closed_form(
    mu: f64,
    sigma2: f64,
    target_mu: f64,
    target_sigma2: f64,
) -> Result<AffineMap, MatchError> {
    if !(sigma2 > 0.0 && target_sigma2 > 0.0) {
        return Err(MatchError::InvalidConfig(format!(
            "variances must be positive, got {sigma2} and {target_sigma2}"
        )));
    }
    let scale = (target_sigma2 / sigma2).sqrt();
    Ok(AffineMap {
        scale,
        offset: target_mu - scale * mu,
    })
}

/// Replay information for the micro step that produced the ensemble being matched.
pub struct StepContext<'a, M: SdeModel + ?Sized> {
    pub model: &'a M,
    /// Ensemble before the last micro step.
    pub prev: &'a Ensemble,
    pub dt: f64,
}

/// Matching for constrained models: paths whose matched state is not
/// admissible get their last micro step redrawn (fresh stream per retry) and
/// the matching is repeated.
pub fn match_fene<M: SdeModel + ?Sized>(
    ens: &Ensemble,
    target: &MacroState,
    ctx: &StepContext<'_, M>,
    cfg: &MatchConfig,
) -> Result<MatchOutcome, MatchError> {
    let mut cur = ens.clone();
    let mut retries = vec![0usize; ens.len()];
    let mut total = 0usize;
    let t = ctx.prev.time();
    let lineage = ctx.prev.lineage();
    loop {
        let mut outcome = match_ensemble(&cur, target, cfg)?;
        outcome.fene_retries = total;
        let bad: Vec<usize> = match &outcome.result {
            Err(_) => return Ok(outcome),
            Ok(m) => (0..m.len()).filter(|&j| !ctx.model.admissible(m.state(j), ctx.dt)).collect(),
        };
        if bad.is_empty() {
            return Ok(outcome);
        }
        let exhausted: Vec<usize> = bad.iter().copied().filter(|&j| retries[j] >= cfg.fene_retry_cap).collect();
        if !exhausted.is_empty() {
            outcome.result = Err(MatchFailure::FeneInadmissible { paths: exhausted });
            return Ok(outcome);
        }
        let dim = cur.dim();
        for &j in &bad {
            retries[j] += 1;
            total += 1;
            let mut state = vec![0.0; dim];
            redo_path_step(ctx.model, ctx.prev.state(j), t, ctx.dt, lineage, j, retries[j] as u64, &mut state)?;
            cur.state_mut(j).copy_from_slice(&state);
        }
    }
}
