//! Run configuration: one JSON document, validated before any computation.
//!
//! Profile and parameter files referenced from the document or from flags
//! are read once and inlined, so the effective configuration written next
//! to the outputs is self-contained and its hash identifies the run.

use std::fs;
use std::path::{Path, PathBuf};

use heatengine::montecarlo::McConfig;
use heatengine::params::DEFAULT_FRICTION_RATIO;
use heatengine::sweeps::{ProtocolKind, SweepOptions};
use heatengine::{EngineParams, ProfileSpec, TemperatureProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Bath temperature profiles. `tradeoff` uses all of them; the other
    /// commands use the first.
    #[serde(default)]
    pub profiles: Vec<ProfileEntry>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub synthesize: SynthesizeConfig,
    #[serde(default)]
    pub tradeoff: TradeoffConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profiles: Vec::new(),
            params: ParamsConfig::default(),
            synthesize: SynthesizeConfig::default(),
            tradeoff: TradeoffConfig::default(),
            sweep: SweepConfig::default(),
            montecarlo: MonteCarloConfig::default(),
            out: default_out(),
            format: Format::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    pub name: String,
    pub spec: ProfileSource,
}

/// A profile description inline or as a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSource {
    File(PathBuf),
    Inline(ProfileSpec),
}

/// Engine constants. `t_f` defaults to the profile period; q₀ may be given
/// directly or through γ/√(m q₀), defaulting to a ratio of 10⁻².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub m: f64,
    pub gamma: f64,
    pub k_b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub friction_ratio: Option<f64>,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            m: 1.0,
            gamma: 1.0,
            k_b: 1.0,
            t_f: None,
            q0: None,
            friction_ratio: None,
        }
    }
}

impl ParamsConfig {
    pub fn build(&self, period: Option<f64>) -> Result<EngineParams, CliError> {
        let t_f = self
            .t_f
            .or(period)
            .ok_or_else(|| CliError::Config("params.t_f is required when no profile is given".into()))?;
        let base = EngineParams::new(self.m, self.gamma, self.k_b, t_f)?;
        Ok(match (self.q0, self.friction_ratio) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give params.q0 or params.friction_ratio, not both".into()))
            }
            (Some(q0), None) => base.with_q0(q0)?,
            (None, Some(r)) => base.with_friction_ratio(r)?,
            (None, None) => base.with_friction_ratio(DEFAULT_FRICTION_RATIO)?,
        })
    }
}

/// Protocol synthesis. Without `power` the maximum-power protocol is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesizeConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    /// Rows of the protocol table.
    pub points: usize,
}

impl Default for SynthesizeConfig {
    fn default() -> Self {
        Self { power: None, points: 1000 }
    }
}

/// η*(𝒫) on `grid` equally spaced powers over [0, fraction·𝒫*].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradeoffConfig {
    pub grid: usize,
    pub fraction: f64,
}

impl Default for TradeoffConfig {
    fn default() -> Self {
        Self {
            grid: 50,
            fraction: 1.0 - 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// γ/√(m q₀), moved through q₀ on the first profile.
    #[default]
    Friction,
    /// T_h/T_c of a sinusoid with mean `sweep.mean` and period t_f.
    TemperatureRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub protocols: Vec<ProtocolKind>,
    /// Mean temperature of the swept sinusoid.
    pub mean: f64,
    pub options: SweepOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::default(),
            values: vec![1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0],
            protocols: vec![ProtocolKind::LowFrictionOptimal],
            mean: 1.0,
            options: SweepOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartState {
    /// Periodic orbit of the covariance equations.
    #[default]
    Orbit,
    /// Equilibrium at the mean temperature and q(0).
    Equilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub ensemble: McConfig,
    /// Fixed-power protocol instead of the maximum-power one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    /// Width of the ramps replacing stiffness jumps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jump_ramp: Option<f64>,
    pub start: StartState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Flags that override values of the configuration file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub profiles: Vec<String>,
    pub params: Option<String>,
    pub power: Option<f64>,
    pub grid: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
}

/// JSON given inline (starting with `{`) or as a file path.
fn read_json<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> Result<T, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::Config(format!("cannot read {what} file {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid {what} {arg}: {e}")))
}

fn profile_name(arg: &str, index: usize) -> String {
    if arg.trim_start().starts_with('{') {
        format!("profile{}", index + 1)
    } else {
        Path::new(arg)
            .file_stem()
            .map_or_else(|| format!("profile{}", index + 1), |s| s.to_string_lossy().into_owned())
    }
}

impl RunConfig {
    /// Reads the file (if any), applies the flag overrides, inlines every
    /// referenced profile and validates the result.
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg: RunConfig = match path {
            Some(p) => read_json(&p.to_string_lossy(), "config")?,
            None => RunConfig::default(),
        };
        let base = path.and_then(Path::parent).unwrap_or(Path::new("."));
        if !flags.profiles.is_empty() {
            cfg.profiles = flags
                .profiles
                .iter()
                .enumerate()
                .map(|(i, arg)| {
                    Ok(ProfileEntry {
                        name: profile_name(arg, i),
                        spec: ProfileSource::Inline(read_json(arg, "profile")?),
                    })
                })
                .collect::<Result<_, CliError>>()?;
        }
        for entry in &mut cfg.profiles {
            if let ProfileSource::File(file) = &entry.spec {
                let full = base.join(file);
                entry.spec = ProfileSource::Inline(read_json(&full.to_string_lossy(), "profile")?);
            }
        }
        if let Some(arg) = &flags.params {
            cfg.params = read_json(arg, "params")?;
        }
        if let Some(p) = flags.power {
            cfg.synthesize.power = Some(p);
            cfg.montecarlo.power = Some(p);
        }
        if let Some(n) = flags.grid {
            cfg.synthesize.points = n;
            cfg.tradeoff.grid = n;
        }
        match &flags.out {
            Some(out) => cfg.out.clone_from(out),
            None if path.is_some() => cfg.out = base.join(&cfg.out),
            None => {}
        }
        if let Some(f) = flags.format {
            cfg.format = f;
        }
        if let Some(seed) = flags.seed {
            cfg.montecarlo.ensemble.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.into()));
        for p in self.profiles() {
            p?;
        }
        if self.synthesize.points < 2 {
            return bad("synthesize.points must be at least 2");
        }
        if self.tradeoff.grid < 2 {
            return bad("tradeoff.grid must be at least 2");
        }
        if !(self.tradeoff.fraction > 0.0 && self.tradeoff.fraction < 1.0) {
            return bad("tradeoff.fraction must lie in (0, 1)");
        }
        if self.sweep.values.is_empty() || self.sweep.protocols.is_empty() {
            return bad("sweep.values and sweep.protocols must not be empty");
        }
        if self.sweep.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("sweep.values must be positive");
        }
        if self.sweep.axis == SweepAxis::TemperatureRatio && self.sweep.values.iter().any(|&v| v <= 1.0) {
            return bad("temperature ratios must exceed 1");
        }
        if !(self.sweep.mean > 0.0) {
            return bad("sweep.mean must be positive");
        }
        let period = self.profiles.first().map(|_| self.profile(0)).transpose()?.map(|p| p.period());
        if period.is_some() || self.params.t_f.is_some() {
            self.params.build(period)?;
        }
        Ok(())
    }

    /// Profiles in order, built from their inlined specs.
    pub fn profiles(&self) -> impl Iterator<Item = Result<TemperatureProfile, CliError>> + '_ {
        (0..self.profiles.len()).map(|i| self.profile(i))
    }

    pub fn profile(&self, i: usize) -> Result<TemperatureProfile, CliError> {
        let entry = &self.profiles[i];
        match &entry.spec {
            ProfileSource::Inline(spec) => TemperatureProfile::try_from(spec)
                .map_err(|e| CliError::Config(format!("profile {}: {e}", entry.name))),
            ProfileSource::File(f) => Err(CliError::Config(format!("profile file {} was not loaded", f.display()))),
        }
    }

    pub fn first_profile(&self) -> Result<TemperatureProfile, CliError> {
        if self.profiles.is_empty() {
            return Err(CliError::Config("this command needs a profile (--profile or \"profiles\")".into()));
        }
        self.profile(0)
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("configuration serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of the canonical JSON with `out` cleared, so the same
    /// run written to two places carries the same hash.
    pub fn hash(&self) -> String {
        let located = Self {
            out: PathBuf::new(),
            ..self.clone()
        };
        format!("{:x}", Sha256::digest(located.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CARNOT: &str = r#"{"period": 1.0, "pieces": [
        {"kind": "constant", "value": 4.0, "end": 0.5},
        {"kind": "constant", "value": 1.0}
    ]}"#;

    #[test]
    fn defaults_and_overrides() {
        let flags = Overrides {
            profiles: vec![CARNOT.into()],
            power: Some(0.1),
            grid: Some(7),
            seed: Some(5),
            ..Default::default()
        };
        let cfg = RunConfig::load(None, &flags).unwrap();
        assert_eq!(cfg.synthesize.power, Some(0.1));
        assert_eq!((cfg.synthesize.points, cfg.tradeoff.grid), (7, 7));
        assert_eq!(cfg.montecarlo.ensemble.seed, 5);
        let params = cfg.params.build(Some(1.0)).unwrap();
        assert!((params.friction_ratio() - DEFAULT_FRICTION_RATIO).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"profiles": [], "colour": 1}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        assert!(serde_json::from_str::<RunConfig>(r#"{"params": {"mass": 1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"montecarlo": {"ensemble": {"particles": 1}}}"#).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let flags = Overrides {
            profiles: vec![CARNOT.into()],
            grid: Some(1),
            ..Default::default()
        };
        assert!(matches!(RunConfig::load(None, &flags), Err(CliError::Config(_))));
        let flags = Overrides {
            profiles: vec![CARNOT.into()],
            params: Some(r#"{"m": -1}"#.into()),
            ..Default::default()
        };
        assert!(matches!(RunConfig::load(None, &flags), Err(CliError::Config(_))));
        let flags = Overrides {
            profiles: vec![CARNOT.into()],
            params: Some(r#"{"q0": 1, "friction_ratio": 0.1}"#.into()),
            ..Default::default()
        };
        assert!(matches!(RunConfig::load(None, &flags), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let flags = Overrides {
            profiles: vec![CARNOT.into()],
            ..Default::default()
        };
        let a = RunConfig::load(None, &flags).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.tradeoff.grid = 51;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), c.hash());
        let back: RunConfig = serde_json::from_str(&a.canonical_json()).unwrap();
        assert_eq!(back, a);
    }
}
