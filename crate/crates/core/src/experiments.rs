//! FENE experiment drivers: matching onto reference moments for a range of
//! moment counts, the matching error as a function of the macro step, and
//! the local error of one extrapolate-and-match step.
//!
//! Every driver runs one reference micro simulation from the equilibrium
//! ensemble and records the restrictions, stresses and ensembles it needs
//! along the way. Averaging over seeds is left to the caller.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::analysis::{empirical_histogram, ks_two_sample, AnalysisError, Histogram, KsResult};
use crate::extrapolation::{multistep_extrapolate, projective_extrapolate, ExtrapConfig, ExtrapError, ExtrapMethod};
use crate::matching::{match_fene, MatchConfig, MatchError, StepContext};
use crate::restriction::{restrict, stress_kramers, MacroState, MomentKind, MomentSpec, RestrictionError};
use crate::sde::{evolve_observed, sample_fene_equilibrium, Ensemble, FeneDumbbell, FeneParams, SdeError, DEFAULT_RETRY_CAP};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Restriction(#[from] RestrictionError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Extrap(#[from] ExtrapError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

/// One-dimensional FENE setup shared by the experiments.
#[derive(Debug, Clone)]
pub struct FeneSetup {
    pub params: FeneParams,
    pub dt: f64,
    pub j: usize,
    pub seed: u64,
    pub kind: MomentKind,
}

impl FeneSetup {
    pub fn model(&self) -> FeneDumbbell {
        FeneDumbbell::one_d(self.params.clone())
    }

    /// Equilibrium ensemble of the unforced model at `t = 0`.
    pub fn initial(&self) -> Ensemble {
        sample_fene_equilibrium(&self.params, self.j, self.seed)
    }

    fn spec(&self, l: usize) -> Result<MomentSpec, ExperimentError> {
        Ok(MomentSpec::new(self.kind, l)?)
    }

    /// Number of micro steps spanning `t`; `t` must be a multiple of `dt`.
    pub fn steps(&self, t: f64) -> Result<usize, ExperimentError> {
        let n = (t / self.dt).round();
        if n < 0.0 || (n * self.dt - t).abs() > 1e-9 * t.abs().max(self.dt) {
            return Err(ExperimentError::Invalid(format!(
                "{t} is not a multiple of the micro step {}",
                self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// What the reference run keeps at one micro step index.
#[derive(Debug, Default)]
struct Snapshot {
    moments: Option<MacroState>,
    stress: Option<f64>,
    ensemble: Option<Ensemble>,
}

#[derive(Debug, Default)]
struct Wanted {
    moments: BTreeSet<usize>,
    stress: BTreeSet<usize>,
    ensembles: BTreeSet<usize>,
}

impl Wanted {
    fn last(&self) -> usize {
        [&self.moments, &self.stress, &self.ensembles]
            .iter()
            .filter_map(|s| s.last().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Runs the reference micro simulation from equilibrium, restricting with
/// `spec` at the wanted step indices.
fn reference_run(
    setup: &FeneSetup,
    spec: &MomentSpec,
    wanted: &Wanted,
) -> Result<BTreeMap<usize, Snapshot>, ExperimentError> {
    let model = setup.model();
    let mut ens = setup.initial();
    let mut out: BTreeMap<usize, Snapshot> = BTreeMap::new();
    let mut failure: Option<ExperimentError> = None;
    let take = |n: usize, e: &Ensemble, out: &mut BTreeMap<usize, Snapshot>| -> Result<(), ExperimentError> {
        if wanted.moments.contains(&n) {
            out.entry(n).or_default().moments = Some(restrict(e, spec)?);
        }
        if wanted.stress.contains(&n) {
            out.entry(n).or_default().stress = Some(stress_kramers(e, &setup.params)?);
        }
        if wanted.ensembles.contains(&n) {
            out.entry(n).or_default().ensemble = Some(e.clone());
        }
        Ok(())
    };
    take(0, &ens, &mut out)?;
    evolve_observed(&model, &mut ens, wanted.last(), setup.dt, DEFAULT_RETRY_CAP, |n, e| {
        if failure.is_none() {
            if let Err(err) = take(n, e, &mut out) {
                failure = Some(err);
            }
        }
        Ok(())
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn prefix(state: &MacroState, kind: MomentKind, l: usize) -> Result<MacroState, ExperimentError> {
    Ok(MacroState::new(
        state.values[..l].to_vec(),
        MomentSpec::new(kind, l)?,
        state.time,
    )?)
}

fn get<'a, T>(v: &'a Option<T>, what: &str, n: usize) -> Result<&'a T, ExperimentError> {
    v.as_ref()
        .ok_or_else(|| ExperimentError::Invalid(format!("reference run lacks {what} at step {n}")))
}

/// Result of matching the prior ensemble onto the reference restriction with `L` variables.
#[derive(Debug, Clone)]
pub struct MatchSweepEntry {
    pub l: usize,
    /// KS test of `|Y|` for the matched against the reference ensemble.
    pub ks: Option<KsResult>,
    /// Same test on the signed states.
    pub ks_raw: Option<KsResult>,
    /// `(U_l − U*_l) / U*_l` for the reported moments.
    pub moment_errors: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub fene_retries: usize,
    pub failure: Option<String>,
    pub matched: Option<Ensemble>,
}

#[derive(Debug, Clone)]
pub struct MatchSweep {
    pub kind: MomentKind,
    /// Number of moments whose errors are reported.
    pub reported: usize,
    pub prior: Ensemble,
    pub reference: Ensemble,
    pub entries: Vec<MatchSweepEntry>,
}

/// Matches the ensemble at `t_minus` onto the restrictions of the reference
/// ensemble at `t_star` for each `L` in `ls`.
pub fn match_sweep(
    setup: &FeneSetup,
    t_minus: f64,
    t_star: f64,
    ls: &[usize],
    reported: usize,
    cfg: &MatchConfig,
) -> Result<MatchSweep, ExperimentError> {
    if ls.is_empty() || ls.contains(&0) {
        return Err(ExperimentError::Invalid("need at least one L >= 1".into()));
    }
    let n_minus = setup.steps(t_minus)?;
    let n_star = setup.steps(t_star)?;
    if n_minus == 0 || n_star <= n_minus {
        return Err(ExperimentError::Invalid(format!("need 0 < t_minus < t_star, got {t_minus}, {t_star}")));
    }
    let l_max = ls.iter().copied().max().unwrap_or(1).max(reported);
    let spec = setup.spec(l_max)?;
    let mut wanted = Wanted::default();
    wanted.moments.insert(n_star);
    wanted.ensembles.extend([n_minus - 1, n_minus, n_star]);
    let mut snaps = reference_run(setup, &spec, &wanted)?;
    let star = snaps.remove(&n_star).unwrap_or_default();
    let u_star = get(&star.moments, "moments", n_star)?.clone();
    let reference = get(&star.ensemble, "ensemble", n_star)?.clone();
    let prior = get(&snaps[&n_minus].ensemble, "ensemble", n_minus)?.clone();
    let before = get(&snaps[&(n_minus - 1)].ensemble, "ensemble", n_minus - 1)?.clone();

    let model = setup.model();
    let ctx = StepContext {
        model: &model,
        prev: &before,
        dt: setup.dt,
    };
    let reference_abs = abs(reference.states());
    let mut entries = Vec::with_capacity(ls.len());
    for &l in ls {
        let target = prefix(&u_star, setup.kind, l)?;
        let outcome = match_fene(&prior, &target, &ctx, cfg)?;
        let mut entry = MatchSweepEntry {
            l,
            ks: None,
            ks_raw: None,
            moment_errors: Vec::new(),
            iterations: outcome.iterations,
            residual: outcome.residual,
            fene_retries: outcome.fene_retries,
            failure: None,
            matched: None,
        };
        match outcome.result {
            Ok(matched) => {
                entry.ks = Some(ks_two_sample(&abs(matched.states()), &reference_abs)?);
                entry.ks_raw = Some(ks_two_sample(matched.states(), reference.states())?);
                let got = restrict(&matched, &spec)?;
                entry.moment_errors = (0..reported)
                    .map(|i| (got.values[i] - u_star.values[i]) / u_star.values[i])
                    .collect();
                entry.matched = Some(matched);
            }
            Err(f) => entry.failure = Some(f.reason().to_string()),
        }
        entries.push(entry);
    }
    Ok(MatchSweep {
        kind: setup.kind,
        reported,
        prior,
        reference,
        entries,
    })
}

fn abs(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.abs()).collect()
}

fn metadata_lines(metadata: &[(String, String)]) -> String {
    metadata.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.17e}"))
}

impl MatchSweep {
    /// `L,D,p` rows on `|Y|` followed by the signed test (`nan` when the matching failed).
    pub fn ks_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = metadata_lines(metadata);
        out.push_str("L,D,p,D_signed,p_signed,iterations,fene_retries,failure\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.l,
                opt(e.ks.map(|k| k.statistic)),
                opt(e.ks.map(|k| k.p_value)),
                opt(e.ks_raw.map(|k| k.statistic)),
                opt(e.ks_raw.map(|k| k.p_value)),
                e.iterations,
                e.fene_retries,
                e.failure.as_deref().unwrap_or("")
            ));
        }
        out
    }

    /// `L,moment,relative_error` rows; `moment` is the position in the layout.
    pub fn moment_error_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = metadata_lines(metadata);
        out.push_str("L,moment,relative_error\n");
        for e in &self.entries {
            for (i, err) in e.moment_errors.iter().enumerate() {
                out.push_str(&format!("{},{},{:.17e}\n", e.l, i + 1, err));
            }
        }
        out
    }

    /// Densities of `|Y|` for the prior, the reference and every matched ensemble.
    pub fn histograms(&self, bins: usize) -> Result<Vec<(String, Histogram)>, ExperimentError> {
        let hi = self.params_bound();
        let abs = |e: &Ensemble| abs(e.states());
        let mut out = vec![
            ("prior".to_string(), empirical_histogram(&abs(&self.prior), bins, 0.0, hi)?),
            ("reference".to_string(), empirical_histogram(&abs(&self.reference), bins, 0.0, hi)?),
        ];
        for e in &self.entries {
            if let Some(m) = &e.matched {
                out.push((format!("L{}", e.l), empirical_histogram(&abs(m), bins, 0.0, hi)?));
            }
        }
        Ok(out)
    }

    fn params_bound(&self) -> f64 {
        let max = |e: &Ensemble| e.states().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut hi = max(&self.prior).max(max(&self.reference));
        for e in self.entries.iter().filter_map(|e| e.matched.as_ref()) {
            hi = hi.max(max(e));
        }
        hi * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }

    pub fn histogram_csv(&self, bins: usize, metadata: &[(String, String)]) -> Result<String, ExperimentError> {
        let hs = self.histograms(bins)?;
        let mut out = metadata_lines(metadata);
        out.push_str("abs_y");
        for (name, _) in &hs {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        let centers = hs[0].1.centers();
        for (i, c) in centers.iter().enumerate() {
            out.push_str(&format!("{c:.12e}"));
            for (_, h) in &hs {
                out.push_str(&format!(",{:.12e}", h.density[i]));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Relative stress error at one macro step for one `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub l: usize,
    pub dt_macro: f64,
    /// `None` when the matching failed.
    pub rel_error: Option<f64>,
}

/// Matches the ensemble at `t_minus` onto the reference restrictions at
/// `t_minus + Δt` and compares the stress with the reference stress.
pub fn match_dt_sweep(
    setup: &FeneSetup,
    t_minus: f64,
    dts: &[f64],
    ls: &[usize],
    cfg: &MatchConfig,
) -> Result<Vec<SweepPoint>, ExperimentError> {
    let n_minus = setup.steps(t_minus)?;
    if n_minus == 0 {
        return Err(ExperimentError::Invalid("t_minus must be positive".into()));
    }
    let offsets = dts.iter().map(|&d| setup.steps(d)).collect::<Result<Vec<_>, _>>()?;
    let l_max = ls.iter().copied().max().unwrap_or(1);
    let spec = setup.spec(l_max)?;
    let mut wanted = Wanted::default();
    wanted.ensembles.extend([n_minus - 1, n_minus]);
    for &o in &offsets {
        wanted.moments.insert(n_minus + o);
        wanted.stress.insert(n_minus + o);
    }
    let snaps = reference_run(setup, &spec, &wanted)?;
    let prior = get(&snaps[&n_minus].ensemble, "ensemble", n_minus)?;
    let before = get(&snaps[&(n_minus - 1)].ensemble, "ensemble", n_minus - 1)?;
    let model = setup.model();
    let ctx = StepContext {
        model: &model,
        prev: before,
        dt: setup.dt,
    };
    let mut out = Vec::new();
    for &l in ls {
        for (&dt_macro, &o) in dts.iter().zip(&offsets) {
            let snap = &snaps[&(n_minus + o)];
            let target = prefix(get(&snap.moments, "moments", n_minus + o)?, setup.kind, l)?;
            let tau = *get(&snap.stress, "stress", n_minus + o)?;
            out.push(SweepPoint {
                l,
                dt_macro,
                rel_error: relative_stress_error(&match_fene(prior, &target, &ctx, cfg)?.result.ok(), tau, &setup.params)?,
            });
        }
    }
    Ok(out)
}

fn relative_stress_error(
    matched: &Option<Ensemble>,
    reference: f64,
    params: &FeneParams,
) -> Result<Option<f64>, ExperimentError> {
    match matched {
        Some(m) => Ok(Some((stress_kramers(m, params)? - reference).abs() / reference.abs())),
        None => Ok(None),
    }
}

/// Extrapolation scheme tested by [`extrap_sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeChoice {
    pub method: ExtrapMethod,
    pub order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrapSweepPoint {
    pub method: ExtrapMethod,
    pub order: usize,
    pub point: SweepPoint,
}

/// One macro step from `t_minus`: burst of `K` micro steps, extrapolation
/// of the restrictions to `t_minus + Δt` and matching of the burst's final
/// ensemble. Multistep schemes take their older endpoints from the
/// reference run. Errors are relative to the reference stress at `t_minus + Δt`.
pub fn extrap_sweep(
    setup: &FeneSetup,
    t_minus: f64,
    dts: &[f64],
    ls: &[usize],
    schemes: &[SchemeChoice],
    k: usize,
    cfg: &MatchConfig,
) -> Result<Vec<ExtrapSweepPoint>, ExperimentError> {
    let n_minus = setup.steps(t_minus)?;
    let offsets = dts.iter().map(|&d| setup.steps(d)).collect::<Result<Vec<_>, _>>()?;
    if k == 0 || offsets.iter().any(|&o| o < k) {
        return Err(ExperimentError::Invalid(format!("every macro step must cover the burst of {k} micro steps")));
    }
    let l_max = ls.iter().copied().max().unwrap_or(1);
    let spec = setup.spec(l_max)?;
    let burst_end = n_minus + k;
    let mut wanted = Wanted::default();
    wanted.ensembles.extend([burst_end - 1, burst_end]);
    wanted.moments.extend(n_minus..=burst_end);
    for &o in &offsets {
        wanted.stress.insert(n_minus + o);
        for s in schemes.iter().filter(|s| s.method == ExtrapMethod::Multistep) {
            for m in 1..=s.order {
                let back = m * o;
                if back > burst_end {
                    return Err(ExperimentError::Invalid(format!(
                        "multistep history for dt_macro = {} reaches before t = 0",
                        o as f64 * setup.dt
                    )));
                }
                wanted.moments.insert(burst_end - back);
            }
        }
    }
    let snaps = reference_run(setup, &spec, &wanted)?;
    let end = get(&snaps[&burst_end].ensemble, "ensemble", burst_end)?;
    let before = get(&snaps[&(burst_end - 1)].ensemble, "ensemble", burst_end - 1)?;
    let model = setup.model();
    let ctx = StepContext {
        model: &model,
        prev: before,
        dt: setup.dt,
    };
    let moments = |n: usize, l: usize| -> Result<MacroState, ExperimentError> {
        prefix(get(&snaps[&n].moments, "moments", n)?, setup.kind, l)
    };
    let mut out = Vec::new();
    for scheme in schemes {
        for &l in ls {
            for (&dt_macro, &o) in dts.iter().zip(&offsets) {
                let target = match scheme.method {
                    ExtrapMethod::Multistep => {
                        let ends = (0..=scheme.order)
                            .rev()
                            .map(|m| moments(burst_end - m * o, l))
                            .collect::<Result<Vec<_>, _>>()?;
                        multistep_extrapolate(&ends, (o - k) as f64, k, scheme.order, setup.dt)?
                    }
                    method => {
                        let burst = (n_minus..=burst_end).map(|n| moments(n, l)).collect::<Result<Vec<_>, _>>()?;
                        let cfg = ExtrapConfig::new(method, scheme.order, k, setup.dt)?;
                        projective_extrapolate(&burst, dt_macro, &cfg)?
                    }
                };
                let tau = *get(&snaps[&(n_minus + o)].stress, "stress", n_minus + o)?;
                let matched = match_fene(end, &target, &ctx, cfg)?.result.ok();
                out.push(ExtrapSweepPoint {
                    method: scheme.method,
                    order: scheme.order,
                    point: SweepPoint {
                        l,
                        dt_macro,
                        rel_error: relative_stress_error(&matched, tau, &setup.params)?,
                    },
                });
            }
        }
    }
    Ok(out)
}

/// Mean relative error per `(label, L, Δt)` over seeds, skipping failed matchings.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedPoint {
    pub label: String,
    pub l: usize,
    pub dt_macro: f64,
    pub mean: f64,
    /// Number of successful matchings that entered the mean.
    pub count: usize,
    pub failures: usize,
}

pub fn average_points<I>(runs: I) -> Vec<AveragedPoint>
where
    I: IntoIterator<Item = (String, SweepPoint)>,
{
    let mut acc: Vec<AveragedPoint> = Vec::new();
    for (label, p) in runs {
        let idx = acc
            .iter()
            .position(|a| a.label == label && a.l == p.l && a.dt_macro.to_bits() == p.dt_macro.to_bits());
        let idx = idx.unwrap_or_else(|| {
            acc.push(AveragedPoint {
                label: label.clone(),
                l: p.l,
                dt_macro: p.dt_macro,
                mean: 0.0,
                count: 0,
                failures: 0,
            });
            acc.len() - 1
        });
        let a = &mut acc[idx];
        match p.rel_error {
            Some(e) => {
                a.mean += e;
                a.count += 1;
            }
            None => a.failures += 1,
        }
    }
    for a in &mut acc {
        a.mean = if a.count > 0 { a.mean / a.count as f64 } else { f64::NAN };
    }
    acc
}

pub fn averaged_csv(points: &[AveragedPoint], metadata: &[(String, String)]) -> String {
    let mut out = metadata_lines(metadata);
    out.push_str("scheme,L,dt_macro,relative_stress_error,samples,failures\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{:.12e},{:.17e},{},{}\n",
            p.label, p.l, p.dt_macro, p.mean, p.count, p.failures
        ));
    }
    out
}

/// Log-spaced macro steps between `lo` and `hi`, rounded to multiples of `dt`
/// and deduplicated.
pub fn log_grid(lo: f64, hi: f64, n: usize, dt: f64) -> Vec<f64> {
    let mut steps: Vec<u64> = (0..n)
        .map(|i| {
            let f = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let v = lo * (hi / lo).powf(f);
            ((v / dt).round() as u64).max(1)
        })
        .collect();
    steps.dedup();
    steps.into_iter().map(|s| s as f64 * dt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(j: usize) -> FeneSetup {
        FeneSetup {
            params: FeneParams::constant_shear(49.0, 1.0, 2.0, 1.0).unwrap(),
            dt: 2e-4,
            j,
            seed: 11,
            kind: MomentKind::EvenCentralized { include_mean: false },
        }
    }

    #[test]
    fn steps_must_be_multiples() {
        let s = setup(10);
        assert_eq!(s.steps(1.0).unwrap(), 5000);
        assert!(s.steps(1.00005).is_err());
    }

    #[test]
    fn zero_offset_reproduces_reference_stress() {
        let s = setup(2000);
        let pts = match_dt_sweep(&s, 0.02, &[0.0, 2e-3], &[3], &MatchConfig::default()).unwrap();
        assert!(pts[0].rel_error.unwrap() < 1e-9);
        assert!(pts[1].rel_error.is_some());
    }

    #[test]
    fn identity_macro_step_has_no_extrapolation_error() {
        let s = setup(2000);
        let schemes = [
            SchemeChoice {
                method: ExtrapMethod::Projective,
                order: 1,
            },
            SchemeChoice {
                method: ExtrapMethod::Multistep,
                order: 1,
            },
        ];
        let pts = extrap_sweep(&s, 0.02, &[2e-4, 2e-3], &[3], &schemes, 1, &MatchConfig::default()).unwrap();
        assert_eq!(pts.len(), 4);
        for p in pts.iter().filter(|p| p.point.dt_macro == 2e-4) {
            assert!(p.point.rel_error.unwrap() < 1e-9);
        }
    }

    #[test]
    fn match_sweep_reports_every_l() {
        let s = setup(3000);
        let sweep = match_sweep(&s, 0.02, 0.03, &[2, 4], 5, &MatchConfig::default()).unwrap();
        assert_eq!(sweep.entries.len(), 2);
        for e in &sweep.entries {
            assert!(e.failure.is_none(), "{:?}", e.failure);
            assert_eq!(e.moment_errors.len(), 5);
            for err in &e.moment_errors[..e.l] {
                assert!(err.abs() < 1e-7);
            }
        }
        let csv = sweep.histogram_csv(20, &[]).unwrap();
        assert_eq!(csv.lines().count(), 21);
    }

    #[test]
    fn grid_is_rounded_and_unique() {
        let g = log_grid(2e-4, 4e-2, 12, 2e-4);
        assert_eq!(g[0], 2e-4);
        assert!((g.last().unwrap() - 4e-2).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn averages_skip_failures() {
        let p = |e| SweepPoint {
            l: 3,
            dt_macro: 1e-3,
            rel_error: e,
        };
        let avg = average_points(vec![
            ("a".to_string(), p(Some(1.0))),
            ("a".to_string(), p(Some(3.0))),
            ("a".to_string(), p(None)),
        ]);
        assert_eq!(avg.len(), 1);
        assert_eq!(avg[0].mean, 2.0);
        assert_eq!(avg[0].count, 2);
        assert_eq!(avg[0].failures, 1);
    }
}
