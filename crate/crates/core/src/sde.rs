//! SDE models and explicit Euler–Maruyama propagation of particle ensembles.
//!
//! Models implement [`SdeModel`]. Two concrete models ship with the crate: the
//! scalar linear equation `dX = (a1(t) X + a2(t)) dt + b(t) dW` and the FENE
//! dumbbell `dX = (κ(t) X − F(X) / (2 We)) dt + We^{-1/2} dW` with
//! `F(X) = X / (1 − |X|² / γ)`. A closure-backed [`ModelSpec`] covers
//! everything else.
//!
//! Constrained models (FENE) reject a trial state that leaves the admissible
//! region and redraw the whole increment until the step is accepted.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{self, PathRng};

/// Default cap on accept-reject redraws for a single path step.
pub const DEFAULT_RETRY_CAP: usize = 10_000;

const PATH_CHUNK: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("state outside the model domain at t = {time}: {reason}")]
    InvalidState { time: f64, reason: String },
    #[error("accept-reject needed more than {cap} redraws at t = {time}; micro step too large")]
    RetryCapExceeded { cap: usize, time: f64 },
    #[error("path {path}: {source}")]
    Path {
        path: usize,
        #[source]
        source: Box<SdeError>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl SdeError {
    fn on_path(self, path: usize) -> Self {
        match self {
            e @ SdeError::Path { .. } => e,
            e => SdeError::Path {
                path,
                source: Box::new(e),
            },
        }
    }
}

/// A scalar function of time.
#[derive(Clone)]
pub enum TimeProfile {
    Constant(f64),
    /// `2 (1.1 + sin(π t))`, the oscillating shear rate used in the FENE runs.
    PeriodicShear,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl TimeProfile {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Constant(c) => *c,
            TimeProfile::PeriodicShear => 2.0 * (1.1 + (std::f64::consts::PI * t).sin()),
            TimeProfile::Custom(f) => f(t),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            TimeProfile::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Debug for TimeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeProfile::Constant(c) => write!(f, "constant({c})"),
            TimeProfile::PeriodicShear => write!(f, "periodic"),
            TimeProfile::Custom(_) => write!(f, "custom"),
        }
    }
}

impl From<f64> for TimeProfile {
    fn from(c: f64) -> Self {
        TimeProfile::Constant(c)
    }
}

/// Interface every SDE model exposes to the integrator.
pub trait SdeModel: Send + Sync {
    /// State dimension `d`.
    fn dim(&self) -> usize;
    /// Wiener dimension `m`.
    fn wiener_dim(&self) -> usize;
    /// Writes `a(t, x)` into `out` (length `d`).
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), SdeError>;
    /// Writes `b(t, x)` into `out`, row-major `d × m`.
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), SdeError>;
    /// Whether trial states must pass [`SdeModel::admissible`].
    fn is_constrained(&self) -> bool {
        false
    }
    /// Acceptance test for a trial state produced with micro step `dt`.
    fn admissible(&self, _x: &[f64], _dt: f64) -> bool {
        true
    }
    /// Precomputes a step-size dependent value handed to [`SdeModel::admissible_with`].
    fn admission_key(&self, dt: f64) -> f64 {
        dt
    }
    /// Acceptance test with the value from [`SdeModel::admission_key`].
    fn admissible_with(&self, x: &[f64], key: f64) -> bool {
        self.admissible(x, key)
    }
}

impl<M: SdeModel + ?Sized> SdeModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn wiener_dim(&self) -> usize {
        (**self).wiener_dim()
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), SdeError> {
        (**self).drift(t, x, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), SdeError> {
        (**self).diffusion(t, x, out)
    }
    fn is_constrained(&self) -> bool {
        (**self).is_constrained()
    }
    fn admissible(&self, x: &[f64], dt: f64) -> bool {
        (**self).admissible(x, dt)
    }
    fn admission_key(&self, dt: f64) -> f64 {
        (**self).admission_key(dt)
    }
    fn admissible_with(&self, x: &[f64], key: f64) -> bool {
        (**self).admissible_with(x, key)
    }
}

type VecFn = dyn Fn(f64, &[f64], &mut [f64]) -> Result<(), SdeError> + Send + Sync;
type Predicate = dyn Fn(&[f64], f64) -> bool + Send + Sync;

/// Closure-backed model definition.
#[derive(Clone)]
pub struct ModelSpec {
    dim: usize,
    wiener_dim: usize,
    drift: Arc<VecFn>,
    diffusion: Arc<VecFn>,
    admissible: Option<Arc<Predicate>>,
}

impl ModelSpec {
    pub fn new<A, B>(dim: usize, wiener_dim: usize, drift: A, diffusion: B) -> Result<Self, SdeError>
    where
        A: Fn(f64, &[f64], &mut [f64]) -> Result<(), SdeError> + Send + Sync + 'static,
        B: Fn(f64, &[f64], &mut [f64]) -> Result<(), SdeError> + Send + Sync + 'static,
    {
        if dim == 0 || wiener_dim == 0 {
            return Err(SdeError::InvalidArgument(
                "state and Wiener dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            dim,
            wiener_dim,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            admissible: None,
        })
    }

    /// Attaches an acceptance predicate `(state, dt) -> bool`.
    pub fn with_admissible<P>(mut self, predicate: P) -> Self
    where
        P: Fn(&[f64], f64) -> bool + Send + Sync + 'static,
    {
        self.admissible = Some(Arc::new(predicate));
        self
    }
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("dim", &self.dim)
            .field("wiener_dim", &self.wiener_dim)
            .field("constrained", &self.admissible.is_some())
            .finish()
    }
}

impl SdeModel for ModelSpec {
    fn dim(&self) -> usize {
        self.dim
    }
    fn wiener_dim(&self) -> usize {
        self.wiener_dim
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), SdeError> {
        (self.drift)(t, x, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), SdeError> {
        (self.diffusion)(t, x, out)
    }
    fn is_constrained(&self) -> bool {
        self.admissible.is_some()
    }
    fn admissible(&self, x: &[f64], dt: f64) -> bool {
        self.admissible.as_ref().map_or(true, |p| p(x, dt))
    }
}

/// Scalar linear SDE in the narrow sense, `dX = (a1 X + a2) dt + b dW`.
#[derive(Debug, Clone)]
pub struct LinearSde {
    pub a1: TimeProfile,
    pub a2: TimeProfile,
    pub b: TimeProfile,
}

impl LinearSde {
    pub fn new(a1: impl Into<TimeProfile>, a2: impl Into<TimeProfile>, b: impl Into<TimeProfile>) -> Self {
        Self {
            a1: a1.into(),
            a2: a2.into(),
            b: b.into(),
        }
    }
}

impl SdeModel for LinearSde {
    fn dim(&self) -> usize {
        1
    }
    fn wiener_dim(&self) -> usize {
        1
    }
    #[inline]
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), SdeError> {
        out[0] = self.a1.eval(t) * x[0] + self.a2.eval(t);
        Ok(())
    }
    #[inline]
    fn diffusion(&self, t: f64, _x: &[f64], out: &mut [f64]) -> Result<(), SdeError> {
        out[0] = self.b.eval(t);
        Ok(())
    }
}

/// Velocity gradient of the solvent.
#[derive(Clone)]
pub enum Kappa {
    /// `κ(t) · Id`.
    Scalar(TimeProfile),
    /// Full `d × d` gradient, row-major.
    Matrix(Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>),
}

impl fmt::Debug for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Scalar(p) => write!(f, "Scalar({p:?})"),
            Kappa::Matrix(_) => write!(f, "Matrix(..)"),
        }
    }
}

/// Parameters of the FENE dumbbell model.
#[derive(Debug, Clone)]
pub struct FeneParams {
    /// Maximal extension parameter; `|X| < sqrt(gamma)`.
    pub gamma: f64,
    /// Weissenberg number.
    pub we: f64,
    pub kappa: Kappa,
    /// Polymer-to-total viscosity ratio, only used for the stress.
    pub epsilon: f64,
}

impl FeneParams {
    pub fn new(gamma: f64, we: f64, kappa: Kappa, epsilon: f64) -> Result<Self, SdeError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(SdeError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        if !(we > 0.0 && we.is_finite()) {
            return Err(SdeError::InvalidArgument(format!("We must be positive, got {we}")));
        }
        Ok(Self {
            gamma,
            we,
            kappa,
            epsilon,
        })
    }

    /// 1-D parameters with a constant shear rate.
    pub fn constant_shear(gamma: f64, we: f64, kappa: f64, epsilon: f64) -> Result<Self, SdeError> {
        Self::new(gamma, we, Kappa::Scalar(TimeProfile::Constant(kappa)), epsilon)
    }

    /// Factor `1 / (1 − |x|²/γ)` such that `F(x) = factor · x`; `None` outside the domain.
    #[inline]
    pub fn force_factor(&self, norm_sq: f64) -> Option<f64> {
        let denom = 1.0 - norm_sq / self.gamma;
        (denom > 0.0).then(|| 1.0 / denom)
    }

    /// Radius `sqrt((1 − sqrt(dt)) γ)` of the accept-reject region.
    pub fn acceptance_radius(&self, dt: f64) -> f64 {
        ((1.0 - dt.sqrt()) * self.gamma).max(0.0).sqrt()
    }
}

/// FENE dumbbell in `dim` space dimensions.
#[derive(Debug, Clone)]
pub struct FeneDumbbell {
    params: FeneParams,
    dim: usize,
    noise: f64,
}

impl FeneDumbbell {
    pub fn new(params: FeneParams, dim: usize) -> Result<Self, SdeError> {
        if dim == 0 {
            return Err(SdeError::InvalidArgument("dimension must be positive".into()));
        }
        let noise = 1.0 / params.we.sqrt();
        Ok(Self { params, dim, noise })
    }

    pub fn one_d(params: FeneParams) -> Self {
        let noise = 1.0 / params.we.sqrt();
        Self { params, dim: 1, noise }
    }

    pub fn params(&self) -> &FeneParams {
        &self.params
    }
}

impl SdeModel for FeneDumbbell {
    fn dim(&self) -> usize {
        self.dim
    }
    fn wiener_dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), SdeError> {
        let p = &self.params;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let denom = 1.0 - r2 / p.gamma;
        if !(denom > 0.0) {
            return Err(SdeError::InvalidState {
                time: t,
                reason: format!("|x|^2 = {r2} is not below gamma = {}", p.gamma),
            });
        }
        let spring = 1.0 / (2.0 * p.we * denom);
        match &p.kappa {
            Kappa::Scalar(k) => {
                let k = k.eval(t);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = k * xi - spring * xi;
                }
            }
            Kappa::Matrix(f) => {
                let d = self.dim;
                let mut m = vec![0.0; d * d];
                f(t, &mut m);
                for i in 0..d {
                    let row: f64 = (0..d).map(|j| m[i * d + j] * x[j]).sum();
                    out[i] = row - spring * x[i];
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> Result<(), SdeError> {
        let d = self.dim;
        if d == 1 {
            out[0] = self.noise;
            return Ok(());
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            out[i * d + i] = self.noise;
        }
        Ok(())
    }

    fn is_constrained(&self) -> bool {
        true
    }

    fn admissible(&self, x: &[f64], dt: f64) -> bool {
        self.admissible_with(x, self.admission_key(dt))
    }

    /// Squared acceptance radius.
    fn admission_key(&self, dt: f64) -> f64 {
        (1.0 - dt.sqrt()) * self.params.gamma
    }

    fn admissible_with(&self, x: &[f64], key: f64) -> bool {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        r2 < key
    }
}

/// Reproduction data of an ensemble: path `j` draws its increment for global
/// micro step `step` from stream `(seed, first_path + j, step, epoch)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedLineage {
    pub seed: u64,
    /// Global index of the next micro step.
    pub step: u64,
    pub first_path: u64,
}

impl SeedLineage {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            step: 0,
            first_path: 0,
        }
    }
}

/// `J` particle states of dimension `d` sharing one time stamp.
///
/// Inner times are computed from an anchor `(t_a, s_a)` as
/// `t_a + (step − s_a) δt`, so splitting a run of micro steps into several
/// bursts does not change any time stamp. [`Ensemble::set_time`] moves the anchor.
#[derive(Debug, Clone)]
pub struct Ensemble {
    dim: usize,
    time: f64,
    states: Vec<f64>,
    lineage: SeedLineage,
    anchor_time: f64,
    anchor_step: u64,
    anchor_dt: f64,
}

impl Ensemble {
    pub fn new(dim: usize, time: f64, states: Vec<f64>, lineage: SeedLineage) -> Result<Self, SdeError> {
        if dim == 0 || states.len() % dim != 0 {
            return Err(SdeError::InvalidArgument(format!(
                "{} values cannot be split into states of dimension {dim}",
                states.len()
            )));
        }
        Ok(Self {
            dim,
            time,
            states,
            lineage,
            anchor_time: time,
            anchor_step: lineage.step,
            anchor_dt: f64::NAN,
        })
    }

    /// One-dimensional ensemble from scalar states.
    pub fn from_scalars(values: Vec<f64>, time: f64, seed: u64) -> Self {
        Self {
            dim: 1,
            time,
            states: values,
            lineage: SeedLineage::new(seed),
            anchor_time: time,
            anchor_step: 0,
            anchor_dt: f64::NAN,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
        self.anchor_time = t;
        self.anchor_step = self.lineage.step;
        self.anchor_dt = f64::NAN;
    }
    pub fn lineage(&self) -> SeedLineage {
        self.lineage
    }
    pub fn set_lineage(&mut self, lineage: SeedLineage) {
        self.lineage = lineage;
        self.anchor_time = self.time;
        self.anchor_step = lineage.step;
        self.anchor_dt = f64::NAN;
    }

    fn anchor_to(&mut self, dt: f64) {
        if self.anchor_dt.to_bits() != dt.to_bits() {
            self.anchor_time = self.time;
            self.anchor_step = self.lineage.step;
            self.anchor_dt = dt;
        }
    }

    fn time_at_step(&self, step: u64) -> f64 {
        self.anchor_time + (step - self.anchor_step) as f64 * self.anchor_dt
    }
    /// Flat row-major storage, `J × d`.
    pub fn states(&self) -> &[f64] {
        &self.states
    }
    pub fn states_mut(&mut self) -> &mut [f64] {
        &mut self.states
    }
    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }
    pub fn state_mut(&mut self, j: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.states[j * d..(j + 1) * d]
    }
    pub fn into_states(self) -> Vec<f64> {
        self.states
    }

    /// Same time, lineage and bit patterns of every state.
    pub fn bitwise_eq(&self, other: &Ensemble) -> bool {
        self.dim == other.dim
            && self.time.to_bits() == other.time.to_bits()
            && self.lineage == other.lineage
            && self.states.len() == other.states.len()
            && self
                .states
                .iter()
                .zip(&other.states)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Reusable buffers for one path step.
#[derive(Debug, Clone)]
pub struct StepScratch {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    dw: Vec<f64>,
    trial: Vec<f64>,
    /// `(dt bits, admission key)` of the last step size seen.
    admission: Option<(u64, f64)>,
}

impl StepScratch {
    pub fn new(dim: usize, wiener_dim: usize) -> Self {
        Self {
            drift: vec![0.0; dim],
            diffusion: vec![0.0; dim * wiener_dim],
            dw: vec![0.0; wiener_dim],
            trial: vec![0.0; dim],
            admission: None,
        }
    }

    pub fn for_model<M: SdeModel + ?Sized>(model: &M) -> Self {
        Self::new(model.dim(), model.wiener_dim())
    }
}

fn check_dt(dt: f64) -> Result<(), SdeError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(SdeError::InvalidArgument(format!("micro step must be positive, got {dt}")))
    }
}

#[inline]
fn em_into<M: SdeModel + ?Sized>(
    model: &M,
    t: f64,
    y: &[f64],
    dw: &[f64],
    dt: f64,
    drift: &mut [f64],
    diffusion: &mut [f64],
    out: &mut [f64],
) -> Result<(), SdeError> {
    let m = dw.len();
    model.drift(t, y, drift)?;
    model.diffusion(t, y, diffusion)?;
    for i in 0..y.len() {
        let mut noise = 0.0;
        for (k, w) in dw.iter().enumerate() {
            noise += diffusion[i * m + k] * w;
        }
        out[i] = y[i] + drift[i] * dt + noise;
    }
    Ok(())
}

/// One Euler–Maruyama step `y + a(t, y) dt + b(t, y) dw`.
pub fn em_step<M: SdeModel + ?Sized>(model: &M, t: f64, y: &[f64], dw: &[f64], dt: f64) -> Result<Vec<f64>, SdeError> {
    check_dt(dt)?;
    if y.len() != model.dim() || dw.len() != model.wiener_dim() {
        return Err(SdeError::InvalidArgument(format!(
            "expected state of length {} and increment of length {}",
            model.dim(),
            model.wiener_dim()
        )));
    }
    let mut scratch = StepScratch::for_model(model);
    let mut out = vec![0.0; y.len()];
    em_into(model, t, y, dw, dt, &mut scratch.drift, &mut scratch.diffusion, &mut out)?;
    Ok(out)
}

/// Advances `y` in place by one step drawing increments from `rng`.
///
/// Constrained models redraw the full increment until the trial state is
/// admissible. Returns the number of rejected trials.
#[inline]
pub fn step_path<M: SdeModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    t: f64,
    y: &mut [f64],
    rng: &mut R,
    dt: f64,
    retry_cap: usize,
    scratch: &mut StepScratch,
) -> Result<usize, SdeError> {
    let sqrt_dt = dt.sqrt();
    let constrained = model.is_constrained();
    let key = match scratch.admission {
        Some((bits, key)) if bits == dt.to_bits() => key,
        _ => {
            let key = model.admission_key(dt);
            scratch.admission = Some((dt.to_bits(), key));
            key
        }
    };
    let StepScratch {
        drift,
        diffusion,
        dw,
        trial,
        ..
    } = scratch;
    model.drift(t, y, drift)?;
    model.diffusion(t, y, diffusion)?;
    let mut rejected = 0usize;
    if y.len() == 1 && dw.len() == 1 {
        let (y0, a, b) = (y[0], drift[0] * dt, diffusion[0]);
        loop {
            let w: f64 = StandardNormal.sample(rng);
            let next = y0 + a + b * (w * sqrt_dt);
            if !constrained || model.admissible_with(&[next], key) {
                y[0] = next;
                return Ok(rejected);
            }
            rejected += 1;
            if rejected > retry_cap {
                return Err(SdeError::RetryCapExceeded { cap: retry_cap, time: t });
            }
        }
    }
    let m = dw.len();
    loop {
        rng::fill_standard_normal(rng, dw);
        for w in dw.iter_mut() {
            *w *= sqrt_dt;
        }
        for i in 0..y.len() {
            let mut noise = 0.0;
            for (k, w) in dw.iter().enumerate() {
                noise += diffusion[i * m + k] * w;
            }
            trial[i] = y[i] + drift[i] * dt + noise;
        }
        if !constrained || model.admissible_with(trial, key) {
            y.copy_from_slice(trial);
            return Ok(rejected);
        }
        rejected += 1;
        if rejected > retry_cap {
            return Err(SdeError::RetryCapExceeded { cap: retry_cap, time: t });
        }
    }
}

/// FENE step with accept-reject; returns the accepted state and the number of redraws.
pub fn fene_step_ar<R: Rng + ?Sized>(
    params: &FeneParams,
    t: f64,
    y: &[f64],
    rng: &mut R,
    dt: f64,
) -> Result<(Vec<f64>, usize), SdeError> {
    check_dt(dt)?;
    let model = FeneDumbbell::new(params.clone(), y.len())?;
    let r2: f64 = y.iter().map(|v| v * v).sum();
    if r2 >= params.gamma {
        return Err(SdeError::InvalidState {
            time: t,
            reason: format!("|y|^2 = {r2} is not below gamma"),
        });
    }
    let mut scratch = StepScratch::for_model(&model);
    let mut out = y.to_vec();
    let redraws = step_path(&model, t, &mut out, rng, dt, DEFAULT_RETRY_CAP, &mut scratch)?;
    Ok((out, redraws))
}

/// Counters collected while propagating an ensemble.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub steps: u64,
    pub redraws: u64,
}

/// Advances every path of `ens` by one micro step at time `t`.
fn step_all<M: SdeModel + ?Sized>(
    model: &M,
    ens: &mut Ensemble,
    t: f64,
    dt: f64,
    retry_cap: usize,
) -> Result<u64, SdeError> {
    let dim = ens.dim;
    let lineage = ens.lineage;
    let chunk_len = PATH_CHUNK * dim;
    let work = |c: usize, chunk: &mut [f64]| -> Result<u64, SdeError> {
        let mut scratch = StepScratch::for_model(model);
        let mut redraws = 0u64;
        for (i, y) in chunk.chunks_mut(dim).enumerate() {
            let j = c * PATH_CHUNK + i;
            let mut rng: PathRng =
                rng::increment_stream(lineage.seed, lineage.first_path + j as u64, lineage.step, 0);
            redraws += step_path(model, t, y, &mut rng, dt, retry_cap, &mut scratch)
                .map_err(|e| e.on_path(j))? as u64;
        }
        Ok(redraws)
    };
    // rayon's splitting costs a few ns per path, skip it on one thread
    let results: Vec<Result<u64, SdeError>> = if rayon::current_num_threads() > 1 {
        ens.states
            .par_chunks_mut(chunk_len)
            .enumerate()
            .map(|(c, chunk)| work(c, chunk))
            .collect()
    } else {
        ens.states
            .chunks_mut(chunk_len)
            .enumerate()
            .map(|(c, chunk)| work(c, chunk))
            .collect()
    };
    let mut total = 0;
    for r in results {
        total += r?;
    }
    ens.lineage.step += 1;
    Ok(total)
}

fn check_model_matches<M: SdeModel + ?Sized>(model: &M, ens: &Ensemble) -> Result<(), SdeError> {
    if model.dim() != ens.dim {
        return Err(SdeError::InvalidArgument(format!(
            "model dimension {} does not match ensemble dimension {}",
            model.dim(),
            ens.dim
        )));
    }
    Ok(())
}

/// Advances `ens` by `k` micro steps, calling `observer(k, &ens)` after each.
///
/// Chained calls with the same `dt` produce the same time stamps as one long call.
pub fn evolve_observed<M, F>(
    model: &M,
    ens: &mut Ensemble,
    k: usize,
    dt: f64,
    retry_cap: usize,
    mut observer: F,
) -> Result<StepStats, SdeError>
where
    M: SdeModel + ?Sized,
    F: FnMut(usize, &Ensemble) -> Result<(), SdeError>,
{
    check_dt(dt)?;
    check_model_matches(model, ens)?;
    let mut stats = StepStats::default();
    ens.anchor_to(dt);
    for step in 0..k {
        let t = ens.time;
        stats.redraws += step_all(model, ens, t, dt, retry_cap)?;
        stats.steps += 1;
        ens.time = ens.time_at_step(ens.lineage.step);
        observer(step + 1, ens)?;
    }
    Ok(stats)
}

/// Burst of `k` micro steps; returns the final ensemble and the snapshots
/// after each step (the last snapshot equals the final ensemble).
pub fn evolve_ensemble<M: SdeModel + ?Sized>(
    model: &M,
    ens: &Ensemble,
    k: usize,
    dt: f64,
) -> Result<(Ensemble, Vec<Ensemble>), SdeError> {
    if k == 0 {
        return Err(SdeError::InvalidArgument("burst length must be at least 1".into()));
    }
    let mut cur = ens.clone();
    let mut snaps = Vec::with_capacity(k);
    evolve_observed(model, &mut cur, k, dt, DEFAULT_RETRY_CAP, |_, e| {
        snaps.push(e.clone());
        Ok(())
    })?;
    Ok((cur, snaps))
}

/// Re-runs the micro step that took path `j` from `prev` (at time `t`) with
/// the redraw stream `epoch`, writing the new state into `out`.
pub fn redo_path_step<M: SdeModel + ?Sized>(
    model: &M,
    prev: &[f64],
    t: f64,
    dt: f64,
    lineage: SeedLineage,
    j: usize,
    epoch: u64,
    out: &mut [f64],
) -> Result<usize, SdeError> {
    let mut rng = rng::increment_stream(lineage.seed, lineage.first_path + j as u64, lineage.step, epoch);
    let mut scratch = StepScratch::for_model(model);
    out.copy_from_slice(prev);
    step_path(model, t, out, &mut rng, dt, DEFAULT_RETRY_CAP, &mut scratch).map_err(|e| e.on_path(j))
}

/// `J` i.i.d. draws from the 1-D stationary FENE density `∝ (1 − x²/γ)^{γ/2}`
/// by rejection against the uniform envelope on `(−√γ, √γ)`.
pub fn sample_fene_equilibrium(params: &FeneParams, j: usize, seed: u64) -> Ensemble {
    let root = params.gamma.sqrt();
    let half_gamma = params.gamma / 2.0;
    let mut values = vec![0.0; j];
    values.par_iter_mut().enumerate().for_each(|(p, v)| {
        let mut rng = rng::initial_stream(seed, p as u64);
        loop {
            let x: f64 = rng.gen_range(-root..root);
            let ratio = 1.0 - x * x / params.gamma;
            if ratio <= 0.0 {
                continue;
            }
            let u: f64 = rng.gen();
            if u < ratio.powf(half_gamma) {
                *v = x;
                break;
            }
        }
    });
    Ensemble::from_scalars(values, 0.0, seed)
}

/// `J` i.i.d. scalar normal draws with the given mean and variance.
pub fn sample_normal(j: usize, mean: f64, variance: f64, seed: u64) -> Ensemble {
    let sd = variance.max(0.0).sqrt();
    let mut values = vec![0.0; j];
    values.par_iter_mut().enumerate().for_each(|(p, v)| {
        let mut rng = rng::initial_stream(seed, p as u64);
        let mut z = [0.0];
        rng::fill_standard_normal(&mut rng, &mut z);
        *v = mean + sd * z[0];
    });
    Ensemble::from_scalars(values, 0.0, seed)
}
