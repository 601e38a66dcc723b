//! Polynomial extrapolation of macroscopic states.
//!
//! * Projective: `U^{n+1,0} = Σ_s l_s(α) U^{n,K−s}`, `α = Δt/δt − K`, using the
//!   last `p_e + 1` restrictions of the current burst.
//! * Projective chord: `U^{n,K} + α/(K−K₁) (U^{n,K} − U^{n,K₁})`.
//! * Multistep: `U^{n+1,0} = Σ_s l_s(β) U^{n−s,K}`, `β = α/(α+K)`, using the
//!   endpoints of the last `p_e + 1` bursts.
//!
//! The weights are `l_s(x) = Π_{i≠s} (x + i) / (s! (p_e − s)! (−1)^s)`, the
//! Lagrange basis on the nodes `0, −1, …, −p_e` evaluated at `x`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::restriction::MacroState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtrapError {
    #[error("macro step {dt_macro} is shorter than the burst K·δt = {burst}")]
    NegativeGap { dt_macro: f64, burst: f64 },
    #[error("need {needed} stored states, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("invalid extrapolation setup: {0}")]
    InvalidConfig(String),
    #[error("stored states use different moment specs")]
    MixedSpecs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtrapMethod {
    Projective,
    ProjectiveChord,
    Multistep,
}

impl ExtrapMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ExtrapMethod::Projective => "projective",
            ExtrapMethod::ProjectiveChord => "projective-chord",
            ExtrapMethod::Multistep => "multistep",
        }
    }
}

impl fmt::Display for ExtrapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExtrapMethod {
    type Err = ExtrapError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "projective" => Ok(ExtrapMethod::Projective),
            "projective-chord" | "chord" => Ok(ExtrapMethod::ProjectiveChord),
            "multistep" => Ok(ExtrapMethod::Multistep),
            other => Err(ExtrapError::InvalidConfig(format!("unknown extrapolation method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapConfig {
    pub method: ExtrapMethod,
    /// Order `p_e`.
    pub order: usize,
    /// Chord base index `K₁` (projective-chord only).
    pub k1: usize,
    /// Burst length `K`.
    pub k: usize,
    /// Inner step `δt`.
    pub dt: f64,
}

impl ExtrapConfig {
    pub fn new(method: ExtrapMethod, order: usize, k: usize, dt: f64) -> Result<Self, ExtrapError> {
        let cfg = Self {
            method,
            order,
            k1: 0,
            k,
            dt,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn chord(k1: usize, k: usize, dt: f64) -> Result<Self, ExtrapError> {
        let cfg = Self {
            method: ExtrapMethod::ProjectiveChord,
            order: 1,
            k1,
            k,
            dt,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExtrapError> {
        if self.k == 0 {
            return Err(ExtrapError::InvalidConfig("K must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ExtrapError::InvalidConfig(format!("inner step must be positive, got {}", self.dt)));
        }
        if self.order == 0 {
            return Err(ExtrapError::InvalidConfig("order must be at least 1".into()));
        }
        match self.method {
            ExtrapMethod::Projective if self.order > self.k => Err(ExtrapError::InvalidConfig(format!(
                "projective order {} exceeds burst length K = {}",
                self.order, self.k
            ))),
            ExtrapMethod::ProjectiveChord if self.k1 >= self.k => Err(ExtrapError::InvalidConfig(format!(
                "chord base K1 = {} must be below K = {}",
                self.k1, self.k
            ))),
            _ => Ok(()),
        }
    }

    /// Gap factor `α = Δt/δt − K`; rejects `Δt < K δt` beyond rounding.
    pub fn alpha(&self, dt_macro: f64) -> Result<f64, ExtrapError> {
        let alpha = dt_macro / self.dt - self.k as f64;
        if alpha < -1e-9 {
            return Err(ExtrapError::NegativeGap {
                dt_macro,
                burst: self.k as f64 * self.dt,
            });
        }
        Ok(alpha.max(0.0))
    }

    /// Number of macro-step endpoints the multistep method needs.
    pub fn history_len(&self) -> usize {
        self.order + 1
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Lagrange weight `l_s(x)` of order `p_e`; the `(x + s)` factor is omitted
/// from the product rather than divided out.
pub fn lagrange_coeff(s: usize, x: f64, pe: usize) -> f64 {
    assert!(s <= pe, "index {s} outside 0..={pe}");
    let num: f64 = (0..=pe).filter(|&i| i != s).map(|i| x + i as f64).product();
    let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
    num / (factorial(s) * factorial(pe - s) * sign)
}

/// All weights `l_0(x), …, l_{p_e}(x)`.
pub fn lagrange_coeffs(x: f64, pe: usize) -> Vec<f64> {
    (0..=pe).map(|s| lagrange_coeff(s, x, pe)).collect()
}

fn combine(states: &[(&MacroState, f64)], time: f64) -> Result<MacroState, ExtrapError> {
    let first = states[0].0;
    if states.iter().any(|(s, _)| s.spec != first.spec || s.values.len() != first.values.len()) {
        return Err(ExtrapError::MixedSpecs);
    }
    let values = (0..first.values.len())
        .map(|i| states.iter().map(|(s, c)| c * s.values[i]).sum())
        .collect();
    Ok(MacroState {
        values,
        spec: first.spec,
        time,
    })
}

/// Weights of the projective schemes as `(index into the burst, weight)`,
/// where the burst holds `U^{n,0}, …, U^{n,K}`.
pub fn projective_weights(alpha: f64, cfg: &ExtrapConfig) -> Vec<(usize, f64)> {
    let k = cfg.k;
    match cfg.method {
        ExtrapMethod::ProjectiveChord => {
            let span = (k - cfg.k1) as f64;
            vec![(k, 1.0 + alpha / span), (cfg.k1, -alpha / span)]
        }
        _ => lagrange_coeffs(alpha, cfg.order)
            .into_iter()
            .enumerate()
            .map(|(s, c)| (k - s, c))
            .collect(),
    }
}

/// Projective extrapolation from the burst `U^{n,0}, …, U^{n,K}` over `Δt`
/// measured from `U^{n,0}`.
pub fn projective_extrapolate(burst: &[MacroState], dt_macro: f64, cfg: &ExtrapConfig) -> Result<MacroState, ExtrapError> {
    cfg.validate()?;
    if cfg.method == ExtrapMethod::Multistep {
        return Err(ExtrapError::InvalidConfig("multistep config passed to projective extrapolation".into()));
    }
    if burst.len() < cfg.k + 1 {
        return Err(ExtrapError::InsufficientHistory {
            needed: cfg.k + 1,
            available: burst.len(),
        });
    }
    let burst = &burst[burst.len() - cfg.k - 1..];
    let alpha = cfg.alpha(dt_macro)?;
    let weighted: Vec<(&MacroState, f64)> = projective_weights(alpha, cfg)
        .into_iter()
        .map(|(i, c)| (&burst[i], c))
        .collect();
    combine(&weighted, burst[0].time + dt_macro)
}

/// Multistep extrapolation from burst endpoints (oldest first, newest last).
/// The result is stamped `α δt` after the newest endpoint.
pub fn multistep_extrapolate(
    endpoints: &[MacroState],
    alpha: f64,
    k: usize,
    pe: usize,
    dt: f64,
) -> Result<MacroState, ExtrapError> {
    if endpoints.len() < pe + 1 {
        return Err(ExtrapError::InsufficientHistory {
            needed: pe + 1,
            available: endpoints.len(),
        });
    }
    if alpha < 0.0 || k == 0 {
        return Err(ExtrapError::InvalidConfig(format!("need alpha >= 0 and K >= 1, got {alpha}, {k}")));
    }
    let beta = alpha / (alpha + k as f64);
    let n = endpoints.len();
    let weighted: Vec<(&MacroState, f64)> = lagrange_coeffs(beta, pe)
        .into_iter()
        .enumerate()
        .map(|(s, c)| (&endpoints[n - 1 - s], c))
        .collect();
    combine(&weighted, endpoints[n - 1].time + alpha * dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub beta: f64,
    pub order: usize,
    pub roots: Vec<Complex<f64>>,
    pub zero_stable: bool,
}

/// Roots of `ξ^{p+1} − Σ_s l_s(β) ξ^{p−s}`, the characteristic polynomial of
/// the multistep recurrence, and the root-condition verdict.
pub fn characteristic_roots(beta: f64, pe: usize) -> StabilityReport {
    let n = pe + 1;
    let l = lagrange_coeffs(beta, pe);
    // Monic polynomial ξ^n + Σ a_i ξ^i with a_{p−s} = −l_s.
    let mut a = vec![0.0; n];
    for (s, c) in l.iter().enumerate() {
        a[pe - s] = -c;
    }
    let companion = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -a[n - 1 - j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut roots: Vec<Complex<f64>> = companion.complex_eigenvalues().iter().cloned().collect();
    roots.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(y.re.total_cmp(&x.re)));
    let inside = roots.iter().all(|r| r.norm() <= 1.0 + 1e-10);
    let unimodular: Vec<&Complex<f64>> = roots.iter().filter(|r| (r.norm() - 1.0).abs() <= 1e-10).collect();
    let simple = unimodular
        .iter()
        .enumerate()
        .all(|(i, a)| unimodular[i + 1..].iter().all(|b| (*a - *b).norm() > 1e-8));
    StabilityReport {
        beta,
        order: pe,
        roots,
        zero_stable: inside && simple,
    }
}
