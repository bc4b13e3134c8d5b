//! Cycle energetics: work, heat, thermal uptake, dissipation and the two
//! efficiency notions.
//!
//! Sign convention: work and heat are counted as received by the particle,
//! so an engine has 𝒲 < 0 and delivers power 𝒫 = −𝒲/t_f.

use serde::{Deserialize, Serialize};

use crate::dynamics::{CovarianceState, Model, Trajectory};
use crate::error::{Error, Result};
use crate::params::EngineParams;

/// Default tolerance on state(t_f⁺) − state(0⁺) for ledgers.
pub const DEFAULT_PERIODIC_TOL: f64 = 1e-7;

/// Instantaneous rates (d𝒲/dt, d𝒬/dt) = (½ q̇ Σ_x, γ(k_B T/m − Σ_v)).
pub fn rates(state: &CovarianceState, qdot: f64, temp: f64, params: &EngineParams) -> (f64, f64) {
    let work = 0.5 * qdot * state.sigma_x;
    let heat = params.gamma * (params.k_b * temp / params.m - state.sigma_v);
    (work, heat)
}

/// Work received at a stiffness jump.
///
/// Full model: the potential energy jump ½(q⁺ − q⁻)Σ_x. Reduced model: the
/// change of the equipartition energy mΣ_v under Σ_v → Σ_v √(q⁺/q⁻).
fn jump_work(model: Model, before: &CovarianceState, after: &CovarianceState, q_minus: f64, q_plus: f64, m: f64) -> f64 {
    match model {
        Model::Full => 0.5 * (q_plus - q_minus) * before.sigma_x,
        Model::Reduced => m * (after.sigma_v - before.sigma_v),
    }
}

/// Cycle work 𝒲 including jump contributions.
pub fn cycle_work(trajectory: &Trajectory) -> f64 {
    let params = trajectory.params();
    let smooth = trajectory.integrate(&|s| 0.5 * s.q * s.log_rate * s.state.sigma_x);
    let jumps: f64 = trajectory
        .jumps()
        .iter()
        .map(|j| jump_work(trajectory.model(), &j.before, &j.after, j.q_minus, j.q_plus, params.m))
        .sum();
    smooth + jumps
}

/// Heat received over [a, b] ⊂ [0, t_f]; no heat flows at jumps.
pub fn heat_over(trajectory: &Trajectory, a: f64, b: f64) -> f64 {
    let p = *trajectory.params();
    trajectory.integrate_over(a, b, &|s| p.gamma * (p.k_b * s.temp / p.m - s.state.sigma_v))
}

/// Cycle power from both sides of the first law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclePower {
    /// (γ/t_f) ∫ (k_B T/m − Σ_v) dt.
    pub heat_side: f64,
    /// −𝒲/t_f.
    pub work_side: f64,
}

/// Cycle power of a periodic trajectory. Fails with [`Error::NotPeriodic`]
/// if the boundary states differ by more than `periodic_tol`.
pub fn cycle_power(trajectory: &Trajectory, periodic_tol: f64) -> Result<CyclePower> {
    trajectory.check_periodic(periodic_tol)?;
    let t_f = trajectory.period();
    Ok(CyclePower {
        heat_side: heat_over(trajectory, 0.0, t_f) / t_f,
        work_side: -cycle_work(trajectory) / t_f,
    })
}

/// Conditions worth reporting alongside a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerFlag {
    /// Work and dissipation both vanish; η_𝒰 is set to 1.
    QuasiStatic,
    /// 𝒰 ≤ 0, so η_𝒰 is undefined.
    NonPositiveUptake,
}

/// Per-cycle energetics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleLedger {
    pub work: f64,
    pub heat: f64,
    pub uptake: f64,
    pub dissipation: f64,
    /// Heat-side power.
    pub power: f64,
    pub power_work_side: f64,
    pub eta_u: Option<f64>,
    /// Only for two-level profiles.
    pub eta_q: Option<f64>,
    pub flags: Vec<LedgerFlag>,
}

/// Thermal uptake 𝒰 = k_B ∫ T dS over the cycle.
///
/// Reduced model: (k_B²γ/m²) ∫ T²/Σ_v − (k_B γ/m) ∫ T. Full model: S is the
/// Gaussian entropy ½ ln det Σ, continuous across stiffness jumps.
pub fn uptake(trajectory: &Trajectory) -> f64 {
    let p = *trajectory.params();
    match trajectory.model() {
        Model::Reduced => {
            let c = p.k_b * p.gamma / p.m;
            trajectory.integrate(&|s| c * s.temp * (p.k_b * s.temp / (p.m * s.state.sigma_v) - 1.0))
        }
        Model::Full => trajectory.integrate(&|s| {
            let (x, r) = (&s.state, &s.rate);
            let det_rate = r.sigma_x * x.sigma_v + x.sigma_x * r.sigma_v - 2.0 * x.sigma_xv * r.sigma_xv;
            p.k_b * s.temp * 0.5 * det_rate / x.determinant()
        }),
    }
}

/// Scale below which work and dissipation count as zero: a 1e-7 fraction
/// of the heat that equilibrium-scale fluctuations would exchange.
fn negligible(trajectory: &Trajectory) -> f64 {
    let p = trajectory.params();
    let flux = p.gamma * p.k_b / p.m * trajectory.integrate(&|s| s.temp);
    1e-7 * flux
}

/// Full ledger of a periodic cycle.
pub fn cycle_uptake_and_efficiency(trajectory: &Trajectory, periodic_tol: f64) -> Result<CycleLedger> {
    let power = cycle_power(trajectory, periodic_tol)?;
    let t_f = trajectory.period();
    let work = -power.work_side * t_f;
    let heat = power.heat_side * t_f;
    let uptake = uptake(trajectory);
    let dissipation = uptake + work;
    let mut flags = Vec::new();
    let tiny = negligible(trajectory);
    let eta_u = if work.abs() <= tiny && dissipation.abs() <= tiny {
        flags.push(LedgerFlag::QuasiStatic);
        Some(1.0)
    } else if uptake <= 0.0 {
        flags.push(LedgerFlag::NonPositiveUptake);
        None
    } else {
        Some(-work / uptake)
    };
    let eta_q = match eta_q_carnot(trajectory, periodic_tol) {
        Ok(eta) => Some(eta),
        Err(Error::NotCarnotProfile | Error::DegenerateCycle) => None,
        Err(e) => return Err(e),
    };
    Ok(CycleLedger {
        work,
        heat,
        uptake,
        dissipation,
        power: power.heat_side,
        power_work_side: power.work_side,
        eta_u,
        eta_q,
        flags,
    })
}

/// η_𝒬 = −𝒲/𝒬_h with 𝒬_h the heat received while the bath is hot.
pub fn eta_q_carnot(trajectory: &Trajectory, periodic_tol: f64) -> Result<f64> {
    let levels = trajectory.profile().two_level_structure().ok_or(Error::NotCarnotProfile)?;
    trajectory.check_periodic(periodic_tol)?;
    let work = cycle_work(trajectory);
    let q_hot: f64 = levels
        .hot_intervals
        .iter()
        .map(|&(a, b)| heat_over(trajectory, a, b))
        .sum();
    let tiny = negligible(trajectory);
    if levels.hot == levels.cold || work.abs() <= tiny || q_hot <= tiny {
        return Err(Error::DegenerateCycle);
    }
    Ok(-work / q_hot)
}

/// Curzon–Ahlborn efficiency 1 − √(T_c/T_h).
pub fn curzon_ahlborn(hot: f64, cold: f64) -> f64 {
    1.0 - (cold / hot).sqrt()
}
