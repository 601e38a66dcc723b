//! Validation instruments: two-sample KS test, moment ODE oracle for the linear
//! SDE, variance predictor for extrapolated empirical means, order fits,
//! replicate statistics and histograms.

use ode_solvers::{Dop853, System, Vector2};
use rayon::prelude::*;
use thiserror::Error;

use crate::extrapolation::lagrange_coeffs;
use crate::rng::replicate_seed;
use crate::sde::TimeProfile;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("sample is empty")]
    EmptySample,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("ODE integration failed: {0}")]
    Integration(String),
    #[error("replicates disagree on the time grid (replicate {index})")]
    MisalignedReplicate { index: usize },
    #[error("replicate {index}: {message}")]
    Replicate { index: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Kolmogorov survival function `Q(λ) = P(K > λ)`.
///
/// Uses `2 Σ (−1)^{k−1} exp(−2 k² λ²)` for `λ ≥ 1.18` and the Jacobi theta
/// form `1 − √(2π)/λ Σ exp(−(2k−1)² π² / (8 λ²))` below, both cut at 100 terms.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        let pi = std::f64::consts::PI;
        let c = -pi * pi / (8.0 * lambda * lambda);
        let s: f64 = (1..=100)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (c * m * m).exp()
            })
            .sum();
        1.0 - (2.0 * pi).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let kf = k as f64;
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * kf * kf * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    };
    q.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with asymptotic p-value at effective
/// size `n_a n_b / (n_a + n_b)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(AnalysisError::InvalidInput("samples contain NaN".into()));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.par_sort_unstable_by(f64::total_cmp);
    xb.par_sort_unstable_by(f64::total_cmp);
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let x = if xa[i] <= xb[j] { xa[i] } else { xb[j] };
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_survival(ne.sqrt() * d),
        n_a: na,
        n_b: nb,
    })
}

/// Mean `U1` and variance `U2` of the linear SDE `dX = (a1 X + a2) dt + b dW`:
/// `U1' = a1 U1 + a2`, `U2' = 2 a1 U2 + b²`.
#[derive(Debug, Clone)]
pub struct MomentOdeSolution {
    pub a1: TimeProfile,
    pub a2: TimeProfile,
    pub b: TimeProfile,
    pub t0: f64,
    pub u0: (f64, f64),
    pub tol: f64,
}

struct MomentSystem<'a>(&'a MomentOdeSolution);

impl System<f64, Vector2<f64>> for MomentSystem<'_> {
    fn system(&self, t: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        let a1 = self.0.a1.eval(t);
        let b = self.0.b.eval(t);
        dy[0] = a1 * y[0] + self.0.a2.eval(t);
        dy[1] = 2.0 * a1 * y[1] + b * b;
    }
}

impl MomentOdeSolution {
    pub fn new(
        a1: impl Into<TimeProfile>,
        a2: impl Into<TimeProfile>,
        b: impl Into<TimeProfile>,
        t0: f64,
        u0: (f64, f64),
    ) -> Result<Self, AnalysisError> {
        if !(u0.1 >= 0.0) {
            return Err(AnalysisError::InvalidInput(format!("initial variance {} is negative", u0.1)));
        }
        Ok(Self {
            a1: a1.into(),
            a2: a2.into(),
            b: b.into(),
            t0,
            u0,
            tol: 1e-10,
        })
    }

    fn closed_form(&self, t: f64) -> Option<(f64, f64)> {
        let (a1, a2, b) = (self.a1.as_constant()?, self.a2.as_constant()?, self.b.as_constant()?);
        let s = t - self.t0;
        let (m0, v0) = self.u0;
        if a1 == 0.0 {
            return Some((m0 + a2 * s, v0 + b * b * s));
        }
        let e1 = (a1 * s).exp();
        let m = (m0 + a2 / a1) * e1 - a2 / a1;
        let c = b * b / (2.0 * a1);
        let v = (v0 + c) * (e1 * e1) - c;
        Some((m, v))
    }

    /// `(U1(t), U2(t))` for `t ≥ t0`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64), AnalysisError> {
        Ok(self.eval_grid(&[t])?[0])
    }

    /// Values on an increasing grid of times `≥ t0`.
    pub fn eval_grid(&self, grid: &[f64]) -> Result<Vec<(f64, f64)>, AnalysisError> {
        if grid.windows(2).any(|w| w[1] < w[0]) || grid.first().is_some_and(|t| *t < self.t0) {
            return Err(AnalysisError::InvalidInput("time grid must be increasing and start at t0 or later".into()));
        }
        if let Some(first) = grid.first() {
            if self.closed_form(*first).is_some() {
                return Ok(grid.iter().map(|t| self.closed_form(*t).unwrap()).collect());
            }
        }
        let mut out = Vec::with_capacity(grid.len());
        let mut t = self.t0;
        let mut y = Vector2::new(self.u0.0, self.u0.1);
        for &target in grid {
            if target > t {
                let mut solver = Dop853::new(MomentSystem(self), t, target, target - t, y, self.tol, self.tol);
                solver
                    .integrate()
                    .map_err(|e| AnalysisError::Integration(e.to_string()))?;
                y = *solver.y_out().last().expect("integrator output");
                t = target;
            }
            out.push((y[0], y[1]));
        }
        Ok(out)
    }

    /// `E X(t)²`.
    pub fn second_raw_moment(&self, t: f64) -> Result<f64, AnalysisError> {
        let (m, v) = self.eval(t)?;
        Ok(v + m * m)
    }
}

/// Which variance the predictor evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceMode {
    /// One burst of `K` steps followed by projective extrapolation.
    Accelerated,
    /// `α + K` micro steps with `j_micro` paths.
    FullMicro { j_micro: usize },
}

/// Variance of the extrapolated empirical mean for the scalar test equation
/// `dY = a Y dt + b dW` under Euler–Maruyama, `R = 1 + a δt`, `Var S = b² δt`.
///
/// Accelerated: `(1/J) [R_E² v0 + b² δt Σ_{i<K} R^{2i} (Σ_{s ≤ min(p, K−1−i)} l_s(α))²]`
/// with `R_E = Σ_s l_s(α) R^{K−s}`. Full micro: `(1/J̃) [R^{2(α+K)} v0 + b² δt Σ_{i<α+K} R^{2i}]`.
#[allow(clippy::too_many_arguments)]
pub fn predict_variance_projective(
    a: f64,
    b: f64,
    dt: f64,
    j: usize,
    k: usize,
    pe: usize,
    alpha: f64,
    var0: f64,
    mode: VarianceMode,
) -> Result<f64, AnalysisError> {
    if j == 0 || k == 0 || pe == 0 || !(dt > 0.0) || alpha < 0.0 {
        return Err(AnalysisError::InvalidInput("need J, K, p_e >= 1, dt > 0, alpha >= 0".into()));
    }
    let r = 1.0 + a * dt;
    let noise = b * b * dt;
    match mode {
        VarianceMode::Accelerated => {
            if pe > k {
                return Err(AnalysisError::InvalidInput(format!("p_e = {pe} exceeds K = {k}")));
            }
            let l = lagrange_coeffs(alpha, pe);
            let re: f64 = l.iter().enumerate().map(|(s, c)| c * r.powi((k - s) as i32)).sum();
            let mut sum = 0.0;
            for i in 0..k {
                let partial: f64 = l[..=pe.min(k - 1 - i)].iter().sum();
                sum += r.powi(2 * i as i32) * partial * partial;
            }
            Ok((re * re * var0 + noise * sum) / j as f64)
        }
        VarianceMode::FullMicro { j_micro } => {
            if j_micro == 0 || alpha.fract() != 0.0 {
                return Err(AnalysisError::InvalidInput(
                    "full micro comparison needs J~ >= 1 and integer alpha".into(),
                ));
            }
            let n = alpha as usize + k;
            let sum: f64 = (0..n).map(|i| r.powi(2 * i as i32)).sum();
            Ok((r.powi(2 * n as i32) * var0 + noise * sum) / j_micro as f64)
        }
    }
}

/// Least-squares slope of `log(error)` against `log(step)`.
pub fn estimate_order(pairs: &[(f64, f64)]) -> Result<f64, AnalysisError> {
    if pairs.len() < 2 {
        return Err(AnalysisError::InvalidInput("need at least two points".into()));
    }
    if pairs.iter().any(|(h, e)| !(*h > 0.0) || !(*e > 0.0)) {
        return Err(AnalysisError::InvalidInput("step sizes and errors must be positive".into()));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::InvalidInput("all step sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Time-aligned mean and sample standard deviation across replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateStats {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub replicates: usize,
}

impl ReplicateStats {
    pub fn to_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in metadata {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out.push_str(&format!("# replicates = {}\ntime,mean,std\n", self.replicates));
        for i in 0..self.times.len() {
            out.push_str(&format!("{:.12e},{:.17e},{:.17e}\n", self.times[i], self.mean[i], self.std[i]));
        }
        out
    }
}

/// Mean and sample standard deviation of per-replicate series.
pub fn aggregate(series: &[(Vec<f64>, Vec<f64>)]) -> Result<ReplicateStats, AnalysisError> {
    let Some((times, _)) = series.first() else {
        return Err(AnalysisError::InvalidInput("no replicates".into()));
    };
    for (i, (t, v)) in series.iter().enumerate() {
        if t.len() != times.len() || v.len() != times.len() || t.iter().zip(times).any(|(a, b)| a != b) {
            return Err(AnalysisError::MisalignedReplicate { index: i });
        }
    }
    let r = series.len() as f64;
    let n = times.len();
    let mut mean = vec![0.0; n];
    let mut std = vec![0.0; n];
    for k in 0..n {
        let m = series.iter().map(|(_, v)| v[k]).sum::<f64>() / r;
        let ss: f64 = series.iter().map(|(_, v)| (v[k] - m) * (v[k] - m)).sum();
        mean[k] = m;
        std[k] = if series.len() > 1 { (ss / (r - 1.0)).sqrt() } else { 0.0 };
    }
    Ok(ReplicateStats {
        times: times.clone(),
        mean,
        std,
        replicates: series.len(),
    })
}

/// Runs `run(seed, index)` for `r` replicates with seeds derived from
/// `base_seed` on a pool of `workers` threads (0 = rayon default) and
/// aggregates the returned `(times, values)` series.
pub fn replicate_stats<F, E>(r: usize, base_seed: u64, workers: usize, run: F) -> Result<ReplicateStats, AnalysisError>
where
    F: Fn(u64, usize) -> Result<(Vec<f64>, Vec<f64>), E> + Sync,
    E: std::fmt::Display,
{
    if r < 2 {
        return Err(AnalysisError::InvalidInput(format!("need at least 2 replicates, got {r}")));
    }
    let series = run_replicates(r, workers, |i| run(replicate_seed(base_seed, i as u64), i))?;
    aggregate(&series)
}

/// Evaluates `run(index)` for `0..r` on a pool of `workers` threads, keeping
/// results in index order.
pub fn run_replicates<T, F, E>(r: usize, workers: usize, run: F) -> Result<Vec<T>, AnalysisError>
where
    T: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
    E: std::fmt::Display,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| AnalysisError::InvalidInput(e.to_string()))?;
    let results: Vec<Result<T, AnalysisError>> = pool.install(|| {
        (0..r)
            .into_par_iter()
            .map(|i| {
                run(i).map_err(|e| AnalysisError::Replicate {
                    index: i,
                    message: e.to_string(),
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn integral(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.density)
            .map(|(w, d)| (w[1] - w[0]) * d)
            .sum()
    }
}

/// Normalised histogram: bin count over `(J · width)`. Bins are half-open
/// except the last, which includes `hi`; samples outside `[lo, hi]` are
/// counted in `J` but in no bin.
pub fn empirical_histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram, AnalysisError> {
    if bins == 0 {
        return Err(AnalysisError::InvalidInput("need at least one bin".into()));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(AnalysisError::InvalidInput(format!("degenerate range [{lo}, {hi}]")));
    }
    if values.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v < lo || v > hi || v.is_nan() {
            continue;
        }
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let norm = values.len() as f64 * width;
    Ok(Histogram {
        edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        density: counts.iter().map(|&c| c as f64 / norm).collect(),
    })
}
