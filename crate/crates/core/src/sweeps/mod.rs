//! Full-model parameter sweeps comparing realized power and efficiency
//! with the low-friction predictions.

use serde::{Deserialize, Serialize};

use crate::dynamics::{find_periodic_orbit, CovarianceState, Model, OrbitOptions, PeriodicOrbit};
use crate::energetics::{cycle_uptake_and_efficiency, CycleLedger, DEFAULT_PERIODIC_TOL};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::params::EngineParams;
use crate::profiles::TemperatureProfile;
use crate::synthesis::{efficiency_at_max_power, max_power_protocol, max_power_value, Protocol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Maximum-power protocol of the reduced model.
    LowFrictionOptimal,
    /// `q₀(1 + (ΔT/T̄) cos ωt)`; single-sinusoid profiles only.
    LinearResponse,
}

impl ProtocolKind {
    pub fn build(self, profile: &TemperatureProfile, params: &EngineParams) -> Result<Protocol> {
        match self {
            ProtocolKind::LowFrictionOptimal => max_power_protocol(profile, params),
            ProtocolKind::LinearResponse => Protocol::linear_response_for(profile, params.q0).ok_or_else(|| {
                Error::InvalidProfile("the linear-response protocol needs a single sinusoid".into())
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::LowFrictionOptimal => "low_friction_optimal",
            ProtocolKind::LinearResponse => "linear_response",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub orbit: OrbitOptions,
    /// Replace stiffness jumps by log-linear ramps of this width.
    pub jump_ramp: Option<f64>,
    pub periodic_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            orbit: OrbitOptions::default(),
            jump_ramp: None,
            periodic_tol: DEFAULT_PERIODIC_TOL,
        }
    }
}

/// Full-model steady state at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub ledger: CycleLedger,
    /// Reduced-model maximum power of the profile.
    pub max_power: f64,
    /// Predicted η_𝒰 at maximum power.
    pub predicted_efficiency: f64,
    /// Largest |qΣ_x − mΣ_v|/(mΣ_v) over the orbit.
    pub equipartition_max: f64,
    pub cycles: usize,
}

impl SweepRecord {
    pub fn power_ratio(&self) -> f64 {
        self.ledger.power / self.max_power
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Value on the sweep axis.
    pub x: f64,
    pub protocol: ProtocolKind,
    pub outcome: Result<SweepRecord>,
}

/// Builds the protocol, finds the full-model orbit and evaluates its ledger.
pub fn evaluate(
    profile: &TemperatureProfile,
    params: &EngineParams,
    kind: ProtocolKind,
    opts: &SweepOptions,
) -> Result<SweepRecord> {
    let mut protocol = kind.build(profile, params)?;
    if let Some(width) = opts.jump_ramp {
        protocol = protocol.with_smoothed_jumps(width)?;
    }
    let orbit = steady_state(profile, &protocol, params, &opts.orbit)?;
    let ledger = cycle_uptake_and_efficiency(&orbit.trajectory, opts.periodic_tol)?;
    let m = params.m;
    let equipartition_max = orbit
        .trajectory
        .nodes()
        .iter()
        .map(|s| s.state.equipartition_residual(s.q, m))
        .fold(0.0, f64::max);
    Ok(SweepRecord {
        ledger,
        max_power: max_power_value(profile, params)?,
        predicted_efficiency: efficiency_at_max_power(profile)?,
        equipartition_max,
        cycles: orbit.cycles,
    })
}

/// Full-model orbit searched from the equilibrium state at the mean temperature.
pub fn steady_state(
    profile: &TemperatureProfile,
    protocol: &Protocol,
    params: &EngineParams,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    let mean = profile.average(|t| t)?;
    let guess = CovarianceState::equilibrium(mean, protocol.eval(0.0), params);
    find_periodic_orbit(Model::Full, profile, protocol, params, guess, opts)
}

/// Sweeps γ/√(m q₀) by moving q₀ at fixed m, γ, k_B, t_f. Parametric
/// resonance (trap frequency at half the drive frequency) sits at
/// γ/√(m q₀) = γ t_f/(π m); keep that above the sweep range.
pub fn friction_sweep(
    profile: &TemperatureProfile,
    params: &EngineParams,
    ratios: &[f64],
    kinds: &[ProtocolKind],
    opts: &SweepOptions,
    exec: Execution,
) -> Vec<SweepPoint> {
    let jobs: Vec<(f64, ProtocolKind)> = ratios.iter().flat_map(|&r| kinds.iter().map(move |&k| (r, k))).collect();
    exec.map(&jobs, |&(ratio, kind)| SweepPoint {
        x: ratio,
        protocol: kind,
        outcome: params
            .with_friction_ratio(ratio)
            .and_then(|p| evaluate(profile, &p, kind, opts)),
    })
}

/// Sinusoid T̄ + ΔT cos(2πt/t_f) with hot/cold ratio (T̄+ΔT)/(T̄−ΔT) = `ratio`.
pub fn sinusoid_for_ratio(mean: f64, ratio: f64, period: f64) -> Result<TemperatureProfile> {
    if !(ratio >= 1.0) {
        return Err(Error::InvalidProfile(format!("temperature ratio must be at least 1, got {ratio}")));
    }
    TemperatureProfile::sinusoid(mean, mean * (ratio - 1.0) / (ratio + 1.0), period)
}

/// Sweeps T_h/T_c of a sinusoidal bath with mean `mean` over `params.t_f`.
pub fn temperature_ratio_sweep(
    mean: f64,
    params: &EngineParams,
    ratios: &[f64],
    kinds: &[ProtocolKind],
    opts: &SweepOptions,
    exec: Execution,
) -> Vec<SweepPoint> {
    let jobs: Vec<(f64, ProtocolKind)> = ratios.iter().flat_map(|&r| kinds.iter().map(move |&k| (r, k))).collect();
    exec.map(&jobs, |&(ratio, kind)| SweepPoint {
        x: ratio,
        protocol: kind,
        outcome: sinusoid_for_ratio(mean, ratio, params.t_f).and_then(|profile| evaluate(&profile, params, kind, opts)),
    })
}
