//! Restriction of scalar ensembles to moment vectors, and quantities of interest.
//!
//! Three moment layouts are supported, for a spec with `L` variables:
//!
//! | kind                         | variables                          |
//! |------------------------------|------------------------------------|
//! | `standard`                   | `m'_1, m'_2, …, m'_L` (raw)        |
//! | `centralized`                | `mean, μ_2, μ_3, …, μ_L`           |
//! | `even-centralized`           | `μ_2, μ_4, …, μ_{2L}`              |
//! | `even-centralized` + mean    | `mean, μ_2, μ_4, …, μ_{2(L−1)}`    |
//!
//! where `μ_p` is the `p`-th central moment about the empirical mean. All
//! sums go through the fixed-shape tree reduction in [`crate::reduce`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reduce::{tree_mean, tree_sum_vec};
use crate::sde::{Ensemble, FeneParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RestrictionError {
    #[error("ensemble is empty")]
    Empty,
    #[error("moment restriction needs scalar states, ensemble has dimension {0}")]
    NotScalar(usize),
    #[error("centralized moments need at least 2 paths, got {0}")]
    TooFewPaths(usize),
    #[error("path {path} is outside the FENE domain (|x|^2 = {norm_sq}, gamma = {gamma})")]
    Inadmissible { path: usize, norm_sq: f64, gamma: f64 },
    #[error("invalid moment spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentKind {
    Standard,
    Centralized,
    EvenCentralized { include_mean: bool },
}

impl MomentKind {
    pub fn name(&self) -> &'static str {
        match self {
            MomentKind::Standard => "standard",
            MomentKind::Centralized => "centralized",
            MomentKind::EvenCentralized { include_mean: false } => "even-centralized",
            MomentKind::EvenCentralized { include_mean: true } => "even-centralized-mean",
        }
    }
}

impl fmt::Display for MomentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MomentKind {
    type Err = RestrictionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "standard" => Ok(MomentKind::Standard),
            "centralized" => Ok(MomentKind::Centralized),
            "even-centralized" => Ok(MomentKind::EvenCentralized { include_mean: false }),
            "even-centralized-mean" => Ok(MomentKind::EvenCentralized { include_mean: true }),
            other => Err(RestrictionError::InvalidSpec(format!("unknown moment kind '{other}'"))),
        }
    }
}

/// One macroscopic variable: the mean, a raw moment or a central moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Mean,
    Raw(u32),
    Central(u32),
}

impl Variable {
    pub fn label(&self) -> String {
        match self {
            Variable::Mean => "mean".into(),
            Variable::Raw(p) => format!("m{p}"),
            Variable::Central(p) => format!("c{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MomentSpec {
    pub kind: MomentKind,
    pub l: usize,
}

impl MomentSpec {
    pub fn new(kind: MomentKind, l: usize) -> Result<Self, RestrictionError> {
        if l == 0 {
            return Err(RestrictionError::InvalidSpec("L must be at least 1".into()));
        }
        Ok(Self { kind, l })
    }

    pub fn standard(l: usize) -> Self {
        Self::new(MomentKind::Standard, l).expect("L >= 1")
    }
    pub fn centralized(l: usize) -> Self {
        Self::new(MomentKind::Centralized, l).expect("L >= 1")
    }
    pub fn even_centralized(l: usize) -> Self {
        Self::new(MomentKind::EvenCentralized { include_mean: false }, l).expect("L >= 1")
    }

    /// Variable layout, in order.
    pub fn variables(&self) -> Vec<Variable> {
        let l = self.l as u32;
        match self.kind {
            MomentKind::Standard => (1..=l).map(Variable::Raw).collect(),
            MomentKind::Centralized => std::iter::once(Variable::Mean)
                .chain((2..=l).map(Variable::Central))
                .collect(),
            MomentKind::EvenCentralized { include_mean: false } => {
                (1..=l).map(|i| Variable::Central(2 * i)).collect()
            }
            MomentKind::EvenCentralized { include_mean: true } => std::iter::once(Variable::Mean)
                .chain((1..l).map(|i| Variable::Central(2 * i)))
                .collect(),
        }
    }

    /// Highest power appearing in the layout.
    pub fn max_order(&self) -> u32 {
        self.variables()
            .iter()
            .map(|v| match v {
                Variable::Mean => 1,
                Variable::Raw(p) | Variable::Central(p) => *p,
            })
            .max()
            .unwrap_or(1)
    }

    pub fn is_centered(&self) -> bool {
        !matches!(self.kind, MomentKind::Standard)
    }

    pub fn has_mean(&self) -> bool {
        matches!(
            self.kind,
            MomentKind::Centralized | MomentKind::EvenCentralized { include_mean: true }
        )
    }

    /// `kind:L` string used in file headers.
    pub fn describe(&self) -> String {
        let labels: Vec<String> = self.variables().iter().map(Variable::label).collect();
        format!("{}:{} [{}]", self.kind, self.l, labels.join(" "))
    }
}

/// Macroscopic state: `L` moment values with their layout and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    pub values: Vec<f64>,
    pub spec: MomentSpec,
    pub time: f64,
}

impl MacroState {
    pub fn new(values: Vec<f64>, spec: MomentSpec, time: f64) -> Result<Self, RestrictionError> {
        if values.len() != spec.l {
            return Err(RestrictionError::InvalidSpec(format!(
                "{} values for a spec with L = {}",
                values.len(),
                spec.l
            )));
        }
        Ok(Self { values, spec, time })
    }

    /// Maximum-norm distance between the value vectors.
    pub fn max_norm_diff(&self, other: &MacroState) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn csv_header(spec: &MomentSpec) -> String {
        let mut cols = vec!["time".to_string()];
        cols.extend((1..=spec.l).map(|i| format!("U{i}")));
        format!("# moments = {}\n# norm = max\n{}", spec.describe(), cols.join(","))
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!("{}", self.time);
        for v in &self.values {
            s.push(',');
            s.push_str(&format!("{v:e}"));
        }
        s
    }
}

/// Where the central moments are centred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Center {
    /// At the empirical mean of the values.
    Empirical,
    /// At a prescribed point.
    Fixed(f64),
}

/// `(1/J) Σ (y_j − c)^p` for `p = 1..=max_order`.
pub(crate) fn power_means(values: &[f64], center: f64, max_order: u32) -> Vec<f64> {
    let n = values.len();
    let width = max_order as usize;
    let mut sums = tree_sum_vec(n, width, &|j, acc: &mut [f64]| {
        let d = values[j] - center;
        let mut p = d;
        acc[0] += p;
        for a in acc.iter_mut().skip(1) {
            p *= d;
            *a += p;
        }
    });
    for s in sums.iter_mut() {
        *s /= n as f64;
    }
    sums
}

/// Evaluates the layout of `spec` on `values`. With `Center::Fixed(c)` the
/// mean is still the empirical mean while central moments use `c`; with `c`
/// equal to the empirical mean the result is bitwise the restriction.
pub(crate) fn moment_values(values: &[f64], spec: &MomentSpec, center: Center) -> Vec<f64> {
    let vars = spec.variables();
    let max = spec.max_order();
    if !spec.is_centered() {
        let raw = power_means(values, 0.0, max);
        return vars
            .iter()
            .map(|v| match v {
                Variable::Raw(p) => raw[*p as usize - 1],
                _ => unreachable!("standard layouts hold raw moments only"),
            })
            .collect();
    }
    let mean = tree_mean(values.len(), &|j| values[j]);
    let c = match center {
        Center::Empirical => mean,
        Center::Fixed(c) => c,
    };
    let central = power_means(values, c, max);
    vars.iter()
        .map(|v| match v {
            Variable::Mean => mean,
            Variable::Central(p) => central[*p as usize - 1],
            Variable::Raw(_) => unreachable!("centred layouts hold no raw moments"),
        })
        .collect()
}

/// States of a scalar ensemble.
pub fn scalar_values(ens: &Ensemble) -> Result<&[f64], RestrictionError> {
    if ens.dim() != 1 {
        return Err(RestrictionError::NotScalar(ens.dim()));
    }
    if ens.is_empty() {
        return Err(RestrictionError::Empty);
    }
    Ok(ens.states())
}

/// Empirical macroscopic state of `ens`.
pub fn restrict(ens: &Ensemble, spec: &MomentSpec) -> Result<MacroState, RestrictionError> {
    let y = scalar_values(ens)?;
    if spec.is_centered() && y.len() < 2 {
        return Err(RestrictionError::TooFewPaths(y.len()));
    }
    Ok(MacroState {
        values: moment_values(y, spec, Center::Empirical),
        spec: *spec,
        time: ens.time(),
    })
}

/// `(1/J) Σ f(y_j)` for a vector-valued `f` of width `width`.
pub fn observable_mean<F>(ens: &Ensemble, width: usize, f: F) -> Result<Vec<f64>, RestrictionError>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    if ens.is_empty() {
        return Err(RestrictionError::Empty);
    }
    let n = ens.len();
    let mut sums = tree_sum_vec(n, width, &|j, acc: &mut [f64]| {
        let mut tmp = [0.0f64; 16];
        if width <= tmp.len() {
            f(ens.state(j), &mut tmp[..width]);
            for (a, t) in acc.iter_mut().zip(&tmp[..width]) {
                *a += t;
            }
        } else {
            let mut v = vec![0.0; width];
            f(ens.state(j), &mut v);
            for (a, t) in acc.iter_mut().zip(&v) {
                *a += t;
            }
        }
    });
    for s in sums.iter_mut() {
        *s /= n as f64;
    }
    Ok(sums)
}

fn check_admissible(ens: &Ensemble, params: &FeneParams) -> Result<(), RestrictionError> {
    for j in 0..ens.len() {
        let r2: f64 = ens.state(j).iter().map(|v| v * v).sum();
        if params.force_factor(r2).is_none() {
            return Err(RestrictionError::Inadmissible {
                path: j,
                norm_sq: r2,
                gamma: params.gamma,
            });
        }
    }
    Ok(())
}

/// Kramers stress tensor `(ε/We)(Ê[X ⊗ F(X)] − Id)`, row-major `d × d`.
pub fn stress_tensor(ens: &Ensemble, params: &FeneParams) -> Result<Vec<f64>, RestrictionError> {
    if ens.is_empty() {
        return Err(RestrictionError::Empty);
    }
    check_admissible(ens, params)?;
    let d = ens.dim();
    let n = ens.len();
    let sums = tree_sum_vec(n, d * d, &|j, acc: &mut [f64]| {
        let x = ens.state(j);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let factor = 1.0 / (1.0 - r2 / params.gamma);
        for a in 0..d {
            for b in 0..d {
                acc[a * d + b] += x[a] * x[b] * factor;
            }
        }
    });
    let scale = params.epsilon / params.we;
    Ok((0..d * d)
        .map(|k| {
            let id = if k / d == k % d { 1.0 } else { 0.0 };
            scale * (sums[k] / n as f64 - id)
        })
        .collect())
}

/// Scalar Kramers stress `(ε/We)(Ê[X F(X)] − 1)` of a 1-D ensemble.
pub fn stress_kramers(ens: &Ensemble, params: &FeneParams) -> Result<f64, RestrictionError> {
    if ens.dim() != 1 {
        return Err(RestrictionError::NotScalar(ens.dim()));
    }
    Ok(stress_tensor(ens, params)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(v: &[f64]) -> Ensemble {
        Ensemble::from_scalars(v.to_vec(), 0.0, 0)
    }

    #[test]
    fn standard_moments_by_hand() {
        let m = restrict(&ens(&[1.0, 2.0, 3.0]), &MomentSpec::standard(2)).unwrap();
        assert_eq!(m.values[0], 2.0);
        assert!((m.values[1] - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn centralized_moments_by_hand() {
        let m = restrict(&ens(&[1.0, 2.0, 3.0]), &MomentSpec::centralized(2)).unwrap();
        assert_eq!(m.values[0], 2.0);
        assert!((m.values[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn odd_central_moments_vanish_for_symmetric_data() {
        let m = restrict(&ens(&[-1.5, 1.5]), &MomentSpec::centralized(5)).unwrap();
        assert_eq!(m.values[2], 0.0);
        assert_eq!(m.values[4], 0.0);
    }

    #[test]
    fn even_layouts() {
        let s = MomentSpec::even_centralized(3);
        assert_eq!(
            s.variables(),
            vec![Variable::Central(2), Variable::Central(4), Variable::Central(6)]
        );
        let s = MomentSpec::new(MomentKind::EvenCentralized { include_mean: true }, 3).unwrap();
        assert_eq!(
            s.variables(),
            vec![Variable::Mean, Variable::Central(2), Variable::Central(4)]
        );
        let m = restrict(&ens(&[0.0, 2.0]), &MomentSpec::even_centralized(2)).unwrap();
        assert_eq!(m.values, vec![1.0, 1.0]);
    }

    #[test]
    fn fixed_center_at_the_mean_reproduces_restriction() {
        let v: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.731).sin()).collect();
        let spec = MomentSpec::centralized(5);
        let r = restrict(&ens(&v), &spec).unwrap();
        let fixed = moment_values(&v, &spec, Center::Fixed(r.values[0]));
        assert_eq!(r.values, fixed);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            MomentKind::Standard,
            MomentKind::Centralized,
            MomentKind::EvenCentralized { include_mean: false },
            MomentKind::EvenCentralized { include_mean: true },
        ] {
            assert_eq!(k.name().parse::<MomentKind>().unwrap(), k);
        }
    }

    #[test]
    fn restriction_errors() {
        assert_eq!(
            restrict(&ens(&[]), &MomentSpec::standard(1)),
            Err(RestrictionError::Empty)
        );
        assert_eq!(
            restrict(&ens(&[1.0]), &MomentSpec::centralized(2)),
            Err(RestrictionError::TooFewPaths(1))
        );
        let two_d = Ensemble::new(2, 0.0, vec![0.0; 4], crate::sde::SeedLineage::new(0)).unwrap();
        assert_eq!(
            restrict(&two_d, &MomentSpec::standard(1)),
            Err(RestrictionError::NotScalar(2))
        );
    }

    #[test]
    fn stress_values() {
        let p = FeneParams::constant_shear(49.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(stress_kramers(&ens(&[0.0, 0.0]), &p).unwrap(), -1.0);
        let s = stress_kramers(&ens(&[1.0, -1.0]), &p).unwrap();
        assert!((s - 1.0 / 48.0).abs() < 1e-15);
        let p2 = FeneParams::constant_shear(49.0, 1.0, 0.0, 2.0).unwrap();
        assert_eq!(stress_kramers(&ens(&[1.0, -1.0]), &p2).unwrap(), 2.0 * s);
        assert!(matches!(
            stress_kramers(&ens(&[7.0]), &p),
            Err(RestrictionError::Inadmissible { path: 0, .. })
        ));
    }

    #[test]
    fn stress_tensor_2d_identity_offset() {
        let p = FeneParams::constant_shear(49.0, 1.0, 0.0, 1.0).unwrap();
        let e = Ensemble::new(2, 0.0, vec![0.0; 6], crate::sde::SeedLineage::new(0)).unwrap();
        assert_eq!(stress_tensor(&e, &p).unwrap(), vec![-1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn observable_means() {
        let e = ens(&[-1.0, 0.0, 1.0]);
        let m = observable_mean(&e, 1, |x, o| o[0] = x[0] * x[0]).unwrap();
        assert!((m[0] - 2.0 / 3.0).abs() < 1e-15);
        let c = observable_mean(&e, 2, |_, o| {
            o[0] = 4.5;
            o[1] = -1.0;
        })
        .unwrap();
        assert_eq!(c, vec![4.5, -1.0]);
    }
}
