//! TOML experiment configuration.
//!
//! Sections: `[model]`, `[numerics]`, `[macro]`, `[policy]`, `[matching]`,
//! `[output]`, `[replicate]` and `[sweep]`. Every key has a default, so an
//! empty file describes the FENE setup with `δt = 2e-4`, `γ = 49`, `We = 1`,
//! `ε = 1`, `α_under = 0.2` and `ᾱ_over = 1.2`.
//!
//! Time profiles (`kappa`, `a1`, `a2`, `b`) are written as a number,
//! `"constant(c)"` or `"paper-periodic"` (`2 (1.1 + sin(π t))`).

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::extrapolation::{ExtrapConfig, ExtrapMethod};
use crate::experiments::{FeneSetup, SchemeChoice};
use crate::matching::MatchConfig;
use crate::orchestrator::{AccelConfig, Qoi, StepPolicy, Warmup};
use crate::restriction::{MomentKind, MomentSpec};
use crate::sde::{sample_fene_equilibrium, sample_normal, Ensemble, FeneParams, Kappa, LinearSde, TimeProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for '{key}': {message}")]
    Invalid { key: &'static str, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(key: &'static str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.to_string(),
    }
}

/// Named scalar time profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Constant(f64),
    PaperPeriodic,
}

impl Profile {
    pub fn to_time_profile(self) -> TimeProfile {
        match self {
            Profile::Constant(c) => TimeProfile::Constant(c),
            Profile::PaperPeriodic => TimeProfile::PeriodicShear,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "constant({c:?})"),
            Profile::PaperPeriodic => f.write_str("paper-periodic"),
        }
    }
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "paper-periodic" || s == "periodic" {
            return Ok(Profile::PaperPeriodic);
        }
        if let Some(inner) = s.strip_prefix("constant(").and_then(|r| r.strip_suffix(')')) {
            return inner
                .trim()
                .parse::<f64>()
                .map(Profile::Constant)
                .map_err(|e| format!("bad constant in '{s}': {e}"));
        }
        s.parse::<f64>()
            .map(Profile::Constant)
            .map_err(|_| format!("unknown profile '{s}', expected a number, constant(c) or paper-periodic"))
    }
}

impl Serialize for Profile {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Profile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Profile::Constant(v)),
            Raw::Int(v) => Ok(Profile::Constant(v as f64)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Fene,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub gamma: f64,
    pub we: f64,
    pub epsilon: f64,
    pub kappa: Profile,
    pub a1: Profile,
    pub a2: Profile,
    pub b: Profile,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Fene,
            gamma: 49.0,
            we: 1.0,
            epsilon: 1.0,
            kappa: Profile::Constant(2.0),
            a1: Profile::Constant(-1.0),
            a2: Profile::Constant(1.0),
            b: Profile::Constant(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsSection {
    pub dt: f64,
    pub k: usize,
    pub j: usize,
    pub t0: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Linear model only: normal initial law.
    pub initial_mean: f64,
    pub initial_variance: f64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            dt: 2e-4,
            k: 1,
            j: 10_000,
            t0: 0.0,
            t_end: 1.0,
            seed: 1,
            initial_mean: 0.0,
            initial_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroSection {
    pub moments: String,
    pub l: usize,
    pub method: String,
    pub order: usize,
    /// Older burst index of the chord scheme.
    pub k1: usize,
    pub warmup: String,
}

impl Default for MacroSection {
    fn default() -> Self {
        Self {
            moments: "even-centralized".into(),
            l: 3,
            method: "projective".into(),
            order: 1,
            k1: 0,
            warmup: "micro".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub dt0: f64,
    pub dt_max: f64,
    pub alpha_under: f64,
    pub alpha_over: f64,
    pub adaptive: bool,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            dt0: 1e-3,
            dt_max: 8e-3,
            alpha_under: 0.2,
            alpha_over: 1.2,
            adaptive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingSection {
    pub tol: f64,
    pub max_iter: usize,
    pub jacobian_cond_cap: f64,
    pub fene_retry_cap: usize,
    pub continuation_stages: usize,
}

impl Default for MatchingSection {
    fn default() -> Self {
        let d = MatchConfig::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            jacobian_cond_cap: d.jacobian_cond_cap,
            fene_retry_cap: d.fene_retry_cap,
            continuation_stages: d.continuation_stages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also write restrictions of every inner micro step.
    pub record_inner: bool,
    pub histogram_bins: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            record_inner: false,
            histogram_bins: 70,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateSection {
    pub r: usize,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
}

impl Default for ReplicateSection {
    fn default() -> Self {
        Self { r: 20, workers: 0 }
    }
}

/// Parameters of `match-sweep` and `extrap-sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Prior time of the moment-count sweep.
    pub t_minus: f64,
    pub t_star: f64,
    pub ls: Vec<usize>,
    /// Moments whose errors are reported.
    pub reported: usize,
    /// Prior time of the macro step sweeps.
    pub dt_sweep_t_minus: f64,
    pub dt_sweep_ls: Vec<usize>,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_points: usize,
    pub extrap_t_minus: f64,
    pub extrap_dt_max: f64,
    /// Schemes as `method:order`.
    pub extrap_schemes: Vec<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            t_minus: 1.0,
            t_star: 1.15,
            ls: (1..=10).collect(),
            reported: 10,
            dt_sweep_t_minus: 1.5,
            dt_sweep_ls: vec![3, 4, 5],
            dt_min: 2e-4,
            dt_max: 4e-2,
            dt_points: 12,
            extrap_t_minus: 1.4,
            extrap_dt_max: 0.2,
            extrap_schemes: vec!["projective:1".into(), "multistep:1".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub numerics: NumericsSection,
    #[serde(rename = "macro")]
    pub macro_: MacroSection,
    pub policy: PolicySection,
    pub matching: MatchingSection,
    pub output: OutputSection,
    pub replicate: ReplicateSection,
    pub sweep: SweepSection,
}

/// A model built from the configuration.
pub enum BuiltModel {
    Fene(crate::sde::FeneDumbbell),
    Linear(LinearSde),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Canonical TOML snapshot; parses back to an equal configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical snapshot, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn fene_params(&self) -> Result<FeneParams, ConfigError> {
        let m = &self.model;
        FeneParams::new(m.gamma, m.we, Kappa::Scalar(m.kappa.to_time_profile()), m.epsilon)
            .map_err(|e| invalid("model", e))
    }

    pub fn build_model(&self) -> Result<BuiltModel, ConfigError> {
        match self.model.kind {
            ModelKind::Fene => Ok(BuiltModel::Fene(crate::sde::FeneDumbbell::one_d(self.fene_params()?))),
            ModelKind::Linear => Ok(BuiltModel::Linear(LinearSde::new(
                self.model.a1.to_time_profile(),
                self.model.a2.to_time_profile(),
                self.model.b.to_time_profile(),
            ))),
        }
    }

    /// Initial ensemble for `seed`, stamped with `t0`.
    pub fn initial(&self, seed: u64) -> Result<Ensemble, ConfigError> {
        let n = &self.numerics;
        if n.j < 2 {
            return Err(invalid("numerics.j", format!("need at least 2 paths, got {}", n.j)));
        }
        let mut ens = match self.model.kind {
            ModelKind::Fene => sample_fene_equilibrium(&self.fene_params()?, n.j, seed),
            ModelKind::Linear => {
                if !(n.initial_variance >= 0.0) {
                    return Err(invalid("numerics.initial_variance", "must be nonnegative"));
                }
                sample_normal(n.j, n.initial_mean, n.initial_variance, seed)
            }
        };
        ens.set_time(n.t0);
        Ok(ens)
    }

    pub fn moment_kind(&self) -> Result<MomentKind, ConfigError> {
        self.macro_.moments.parse().map_err(|e| invalid("macro.moments", e))
    }

    pub fn spec(&self) -> Result<MomentSpec, ConfigError> {
        MomentSpec::new(self.moment_kind()?, self.macro_.l).map_err(|e| invalid("macro.l", e))
    }

    pub fn extrap(&self) -> Result<ExtrapConfig, ConfigError> {
        let method: ExtrapMethod = self.macro_.method.parse().map_err(|e| invalid("macro.method", e))?;
        let n = &self.numerics;
        let cfg = match method {
            ExtrapMethod::ProjectiveChord => ExtrapConfig::chord(self.macro_.k1, n.k, n.dt),
            m => ExtrapConfig::new(m, self.macro_.order, n.k, n.dt),
        };
        cfg.map_err(|e| invalid("macro", e))
    }

    pub fn matching(&self) -> MatchConfig {
        let m = &self.matching;
        MatchConfig {
            tol: m.tol,
            max_iter: m.max_iter,
            jacobian_cond_cap: m.jacobian_cond_cap,
            fene_retry_cap: m.fene_retry_cap,
            continuation_stages: m.continuation_stages,
            ..MatchConfig::default()
        }
    }

    pub fn policy(&self) -> StepPolicy {
        let p = &self.policy;
        let n = &self.numerics;
        if p.adaptive {
            StepPolicy::adaptive(p.dt0, p.dt_max, p.alpha_under, p.alpha_over, n.k, n.dt)
        } else {
            StepPolicy::fixed(p.dt0, n.k, n.dt)
        }
    }

    pub fn qoi(&self) -> Result<Qoi, ConfigError> {
        Ok(match self.model.kind {
            ModelKind::Fene => Qoi::Stress(self.fene_params()?),
            ModelKind::Linear => Qoi::RawMoment(2),
        })
    }

    pub fn accel(&self) -> Result<AccelConfig, ConfigError> {
        let warmup: Warmup = self.macro_.warmup.parse().map_err(|e| invalid("macro.warmup", e))?;
        let cfg = AccelConfig {
            spec: self.spec()?,
            extrap: self.extrap()?,
            matching: self.matching(),
            policy: self.policy(),
            qoi: self.qoi()?,
            warmup,
            t_end: self.numerics.t_end,
            record_inner: self.output.record_inner,
        };
        cfg.validate().map_err(|e| invalid("policy", e))?;
        if !(self.numerics.t_end >= self.numerics.t0) {
            return Err(invalid("numerics.t_end", "must not precede t0"));
        }
        Ok(cfg)
    }

    /// FENE experiment setup for `seed`.
    pub fn fene_setup(&self, seed: u64) -> Result<FeneSetup, ConfigError> {
        if self.model.kind != ModelKind::Fene {
            return Err(invalid("model.kind", "the sweeps need the fene model"));
        }
        Ok(FeneSetup {
            params: self.fene_params()?,
            dt: self.numerics.dt,
            j: self.numerics.j,
            seed,
            kind: self.moment_kind()?,
        })
    }

    pub fn schemes(&self) -> Result<Vec<SchemeChoice>, ConfigError> {
        self.sweep
            .extrap_schemes
            .iter()
            .map(|s| {
                let (m, o) = s.split_once(':').unwrap_or((s.as_str(), "1"));
                let method = m.parse().map_err(|e| invalid("sweep.extrap_schemes", e))?;
                let order = o
                    .trim()
                    .parse()
                    .map_err(|e| invalid("sweep.extrap_schemes", format!("bad order in '{s}': {e}")))?;
                Ok(SchemeChoice { method, order })
            })
            .collect()
    }

    /// `#` header lines for CSV outputs.
    pub fn metadata(&self, seed: u64, command: &str) -> Vec<(String, String)> {
        vec![
            ("command".into(), command.into()),
            ("config_hash".into(), self.hash()),
            ("seed".into(), seed.to_string()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_documented_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.numerics.dt, 2e-4);
        assert_eq!(c.model.gamma, 49.0);
        assert_eq!(c.model.we, 1.0);
        assert_eq!(c.model.epsilon, 1.0);
        assert_eq!(c.policy.alpha_under, 0.2);
        assert_eq!(c.policy.alpha_over, 1.2);
    }

    #[test]
    fn profiles_parse() {
        assert_eq!("constant(2)".parse::<Profile>().unwrap(), Profile::Constant(2.0));
        assert_eq!("paper-periodic".parse::<Profile>().unwrap(), Profile::PaperPeriodic);
        assert_eq!("periodic".parse::<Profile>().unwrap(), Profile::PaperPeriodic);
        assert_eq!("-1.5".parse::<Profile>().unwrap(), Profile::Constant(-1.5));
        assert!("sine".parse::<Profile>().is_err());
        let c = ExperimentConfig::from_toml("[model]\nkappa = 3\na1 = -0.5\n").unwrap();
        assert_eq!(c.model.kappa, Profile::Constant(3.0));
        assert_eq!(c.model.a1, Profile::Constant(-0.5));
    }

    #[test]
    fn snapshot_round_trips() {
        let text = "[model]\nkind = \"linear\"\nkappa = \"paper-periodic\"\n[numerics]\ndt = 0.1\nseed = 9\n[macro]\nl = 5\n";
        let c = ExperimentConfig::from_toml(text).unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
    }

    #[test]
    fn unknown_keys_are_reported_with_line() {
        let err = ExperimentConfig::from_toml("[numerics]\ndt = 1e-3\nbogus = 4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.numerics.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn schemes_parse() {
        let c = ExperimentConfig::default();
        let s = c.schemes().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].method, ExtrapMethod::Multistep);
    }
}
