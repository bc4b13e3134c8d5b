//! Optimal variance trajectories, stiffness protocols and closed-form
//! performance figures in the low-friction regime.
//!
//! Under equipartition the only state left is the velocity variance Σ_v,
//! and periodicity of the cycle turns into the integral constraint
//! ∫ T/Σ_v dt = m t_f / k_B. Every trajectory emitted here satisfies it.

mod protocol;

pub use protocol::Protocol;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::params::EngineParams;
use crate::profiles::{ProfileMoments, TemperatureProfile};
use crate::roots::bisect;

/// How a [`SigmaTrajectory`] was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SigmaForm {
    /// Σ_v = scale · √T.
    MaxPower { scale: f64 },
    /// Σ_v = √(T² + μT) / √λ.
    FixedPower { mu: f64, sqrt_lambda: f64 },
    /// Linear interpolation through sampled `(t, Σ_v)` pairs.
    Numeric { samples: Vec<(f64, f64)> },
}

/// Σ_v(t) over one period.
#[derive(Debug, Clone)]
pub struct SigmaTrajectory {
    form: SigmaForm,
    profile: TemperatureProfile,
}

impl SigmaTrajectory {
    pub fn numeric(profile: &TemperatureProfile, samples: Vec<(f64, f64)>) -> Self {
        Self {
            form: SigmaForm::Numeric { samples },
            profile: profile.clone(),
        }
    }

    pub fn form(&self) -> &SigmaForm {
        &self.form
    }

    /// Σ_v as a function of the bath temperature at the same instant.
    fn at_temperature(&self, t: f64, temp: f64) -> f64 {
        match &self.form {
            SigmaForm::MaxPower { scale } => scale * temp.sqrt(),
            SigmaForm::FixedPower { mu, sqrt_lambda } => (temp * (temp + mu)).sqrt() / sqrt_lambda,
            SigmaForm::Numeric { samples } => {
                let tau = t.rem_euclid(self.profile.period());
                let k = samples.partition_point(|s| s.0 <= tau).clamp(1, samples.len() - 1) - 1;
                let (t0, v0) = samples[k];
                let (t1, v1) = samples[k + 1];
                v0 + (v1 - v0) * (tau - t0) / (t1 - t0)
            }
        }
    }

    /// Σ_v(t), right limit at jumps.
    pub fn eval(&self, t: f64) -> f64 {
        self.at_temperature(t, self.profile.eval(t))
    }

    pub fn eval_left(&self, t: f64) -> f64 {
        self.at_temperature(t, self.profile.eval_left(t))
    }

    /// ∫₀^{t_f} T/Σ_v dt; equals m t_f / k_B on a periodic cycle.
    pub fn constraint_integral(&self) -> Result<f64> {
        self.profile
            .integrate_time(0.0, self.profile.period(), &|t, temp| temp / self.at_temperature(t, temp))
    }

    /// Heat-side cycle power (γ/t_f) ∫ (k_B T/m − Σ_v) dt.
    pub fn power(&self, params: &EngineParams) -> Result<f64> {
        let t_f = self.profile.period();
        // The two parts are integrated separately: their difference vanishes
        // identically on the quasi-static trajectory.
        let int_t = self.profile.integrate_functional(|t| t, 0.0, t_f)?;
        let int_sigma = self.profile.integrate_time(0.0, t_f, &|t, temp| self.at_temperature(t, temp))?;
        Ok(params.gamma * (params.k_b / params.m * int_t - int_sigma) / t_f)
    }

    /// ∫₀^{t_f} T²/Σ_v dt, the dissipation functional.
    pub fn dissipation_integral(&self) -> Result<f64> {
        self.profile.integrate_time(0.0, self.profile.period(), &|t, temp| {
            temp * temp / self.at_temperature(t, temp)
        })
    }

    /// Thermal uptake (k_B²γ/m²) ∫ T²/Σ_v − (k_B γ/m) ∫ T.
    pub fn uptake(&self, params: &EngineParams) -> Result<f64> {
        let t_f = self.profile.period();
        let d = self.dissipation_integral()?;
        let int_t = self.profile.integrate_functional(|t| t, 0.0, t_f)?;
        let c = params.k_b * params.gamma / params.m;
        Ok(c * params.k_b / params.m * d - c * int_t)
    }
}

fn check_inputs(profile: &TemperatureProfile, params: &EngineParams) -> Result<ProfileMoments> {
    params.check_profile(profile)?;
    profile.moments()
}

/// Σ_v(t) = (k_B/(m t_f)) (∫₀^{t_f} √T) √T(t), the unique power maximizer.
pub fn max_power_sigma(profile: &TemperatureProfile, params: &EngineParams) -> Result<SigmaTrajectory> {
    let moments = check_inputs(profile, params)?;
    Ok(SigmaTrajectory {
        form: SigmaForm::MaxPower {
            scale: params.k_b / params.m * moments.mean_sqrt_t,
        },
        profile: profile.clone(),
    })
}

/// 𝒫* = (γ k_B / m) Var(√T).
pub fn max_power_value(profile: &TemperatureProfile, params: &EngineParams) -> Result<f64> {
    let moments = check_inputs(profile, params)?;
    Ok(max_power_from_moments(&moments, params))
}

fn max_power_from_moments(moments: &ProfileMoments, params: &EngineParams) -> f64 {
    params.gamma * params.k_b / params.m * moments.var_sqrt_t
}

/// Stiffness protocol realizing [`max_power_sigma`] under the reduced dynamics:
///
/// q(t) = q₀ (T(t)/T(0)) exp((2γ t_f/m)(t/t_f − ∫₀ᵗ√T / ∫₀^{t_f}√T)).
pub fn max_power_protocol(profile: &TemperatureProfile, params: &EngineParams) -> Result<Protocol> {
    let moments = check_inputs(profile, params)?;
    let rate = 2.0 * params.gamma / params.m;
    let gain = 1.0 / moments.mean_sqrt_t;
    Protocol::shaped(profile, params.q0, None, rate, gain)
}

/// Root of the multiplier equation together with search diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuSolution {
    pub mu: f64,
    pub iterations: usize,
    /// More than one sign change seen while scanning; the smallest root is returned.
    pub multiple_roots: bool,
}

/// Period averages that depend on μ.
struct MuAverages {
    /// mean √(T² + μT)
    root_quadratic: f64,
    /// mean √(T/(T + μ))
    root_ratio: f64,
}

fn mu_averages(profile: &TemperatureProfile, mu: f64) -> Result<MuAverages> {
    Ok(MuAverages {
        root_quadratic: profile.average(|t| (t * (t + mu)).sqrt())?,
        root_ratio: profile.average(|t| (t / (t + mu)).sqrt())?,
    })
}

fn check_power(power: f64, max_power: f64) -> Result<()> {
    if !power.is_finite() || power < 0.0 || (power >= max_power && power != 0.0) {
        return Err(Error::PowerOutOfRange { power, max_power });
    }
    Ok(())
}

/// Lagrange multiplier μ ≥ 0 of the fixed-power problem.
pub fn solve_mu(profile: &TemperatureProfile, params: &EngineParams, power: f64) -> Result<f64> {
    Ok(solve_mu_detailed(profile, params, power)?.mu)
}

/// Solves (∫√(T²+μT)) (∫√T/√(T+μ)) = t_f ∫T − (t_f² m/(γ k_B)) 𝒫 for μ,
/// written with period averages. The left side is bracketed by a ×10
/// expansion from μ = mean(T), the first sign change is located by a
/// decade scan below the bracket, and bisection finishes to 1e-12.
pub fn solve_mu_detailed(
    profile: &TemperatureProfile,
    params: &EngineParams,
    power: f64,
) -> Result<MuSolution> {
    let moments = check_inputs(profile, params)?;
    solve_mu_with(profile, params, &moments, power)
}

fn solve_mu_with(
    profile: &TemperatureProfile,
    params: &EngineParams,
    moments: &ProfileMoments,
    power: f64,
) -> Result<MuSolution> {
    let max_power = max_power_from_moments(moments, params);
    check_power(power, max_power)?;
    if power == 0.0 {
        return Ok(MuSolution {
            mu: 0.0,
            iterations: 0,
            multiple_roots: false,
        });
    }
    let target = moments.mean_t - params.kappa() * power;
    // Quadrature failures inside the residual are surfaced after the search.
    let failure = std::cell::Cell::new(None);
    let residual = |mu: f64| match mu_averages(profile, mu) {
        Ok(a) => a.root_quadratic * a.root_ratio - target,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };

    let ceiling = 1e15 * moments.mean_t;
    let mut hi = moments.mean_t;
    let mut f_hi = residual(hi);
    while !(f_hi < 0.0) {
        if let Some(e) = failure.take() {
            return Err(e);
        }
        if hi >= ceiling {
            return Err(Error::BracketFailure { mu_hi: hi });
        }
        hi *= 10.0;
        f_hi = residual(hi);
    }

    // Decade scan below the bracket: the first negative sample bounds the
    // smallest root; extra sign changes are reported.
    let mut samples: Vec<(f64, f64)> = (1..=16)
        .rev()
        .map(|j| {
            let mu = hi * 10f64.powi(-j);
            (mu, residual(mu))
        })
        .collect();
    samples.insert(0, (0.0, params.kappa() * power));
    samples.push((hi, f_hi));
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let sign_changes = samples
        .windows(2)
        .filter(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0))
        .count();
    let first_negative = samples.iter().position(|s| s.1 < 0.0).expect("bracket end is negative");
    let (lo, f_lo) = samples[first_negative - 1];
    let (hi, f_hi) = samples[first_negative];

    let root = bisect(residual, lo, hi, f_lo, f_hi, 1e-12);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(MuSolution {
        mu: root.x,
        iterations: root.iterations,
        multiple_roots: sign_changes > 1,
    })
}

fn at_max_power(power: f64, max_power: f64) -> bool {
    max_power > 0.0 && (power - max_power).abs() <= 1e-14 * max_power
}

/// Σ_v minimizing dissipation at fixed power 𝒫: Σ_v = √(T² + μT)/√λ with
/// √λ = ∫√(T²+μT) / ((k_B/m)∫T − (t_f/γ)𝒫).
pub fn fixed_power_sigma(
    profile: &TemperatureProfile,
    params: &EngineParams,
    power: f64,
) -> Result<SigmaTrajectory> {
    let moments = check_inputs(profile, params)?;
    if at_max_power(power, max_power_from_moments(&moments, params)) {
        return max_power_sigma(profile, params);
    }
    let mu = solve_mu_with(profile, params, &moments, power)?.mu;
    let root_quadratic = profile.average(|t| (t * (t + mu)).sqrt())?;
    let sqrt_lambda = root_quadratic / (params.k_b / params.m * moments.mean_t - power / params.gamma);
    Ok(SigmaTrajectory {
        form: SigmaForm::FixedPower { mu, sqrt_lambda },
        profile: profile.clone(),
    })
}

/// Protocol realizing [`fixed_power_sigma`]:
///
/// q(t) = q₀ (T²+μT)/(T(0)²+μT(0)) exp(2γ(t − r(t))/m),
/// r(t) = ∫√(T²+μT) / (∫T − t_f κ 𝒫) · ∫₀ᵗ √T/√(T+μ).
pub fn fixed_power_protocol(
    profile: &TemperatureProfile,
    params: &EngineParams,
    power: f64,
) -> Result<Protocol> {
    let moments = check_inputs(profile, params)?;
    if at_max_power(power, max_power_from_moments(&moments, params)) {
        return max_power_protocol(profile, params);
    }
    let mu = solve_mu_with(profile, params, &moments, power)?.mu;
    let root_quadratic = profile.average(|t| (t * (t + mu)).sqrt())?;
    let gain = root_quadratic / (moments.mean_t - params.kappa() * power);
    Protocol::shaped(profile, params.q0, Some(mu), 2.0 * params.gamma / params.m, gain)
}

/// Maximum η_𝒰 at power 𝒫:
///
/// η* = κ𝒫 / [ mean√((T+μ)T) / (mean T − κ𝒫) · mean(T^{3/2}/√(T+μ)) − mean T ].
pub fn max_efficiency_at_power(
    profile: &TemperatureProfile,
    params: &EngineParams,
    power: f64,
) -> Result<f64> {
    let moments = check_inputs(profile, params)?;
    efficiency_with(profile, params, &moments, power).map(|(eta, _)| eta)
}

/// (η*, μ) at one power level; μ is `None` at 𝒫*.
fn efficiency_with(
    profile: &TemperatureProfile,
    params: &EngineParams,
    moments: &ProfileMoments,
    power: f64,
) -> Result<(f64, Option<f64>)> {
    let max_power = max_power_from_moments(moments, params);
    if at_max_power(power, max_power) {
        return Ok((efficiency_at_max_power(profile)?, None));
    }
    let mu = solve_mu_with(profile, params, moments, power)?.mu;
    if power == 0.0 {
        return Ok((1.0, Some(0.0)));
    }
    let kp = params.kappa() * power;
    let root_quadratic = profile.average(|t| (t * (t + mu)).sqrt())?;
    let weighted = profile.average(|t| t * (t / (t + mu)).sqrt())?;
    let bracket = root_quadratic / (moments.mean_t - kp) * weighted - moments.mean_t;
    Ok((kp / bracket, Some(mu)))
}

/// Efficiency at maximum power under the optimal protocol, computed from
/// mean(√T)Var(√T) / (mean T^{3/2} − mean T · mean √T) and cross-checked
/// against 1/(2 + μ₃(√T)/(Var(√T) mean √T)).
pub fn efficiency_at_max_power(profile: &TemperatureProfile) -> Result<f64> {
    let m = profile.moments()?;
    efficiency_at_max_power_from(&m, profile.quadrature().tol)
}

/// Both closed forms of the efficiency at maximum power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPowerEfficiency {
    pub direct: f64,
    pub third_moment: f64,
}

pub fn efficiency_at_max_power_forms(moments: &ProfileMoments) -> MaxPowerEfficiency {
    let m = moments;
    let direct = m.mean_sqrt_t * m.var_sqrt_t / (m.mean_t32 - m.mean_t * m.mean_sqrt_t);
    let third_moment = 1.0 / (2.0 + m.mu3_sqrt_t / (m.var_sqrt_t * m.mean_sqrt_t));
    MaxPowerEfficiency {
        direct,
        third_moment,
    }
}

fn efficiency_at_max_power_from(m: &ProfileMoments, quad_tol: f64) -> Result<f64> {
    if m.var_sqrt_t <= quad_tol * m.mean_t {
        return Err(Error::DegenerateProfile {
            variance: m.var_sqrt_t,
        });
    }
    let forms = efficiency_at_max_power_forms(m);
    // The direct form subtracts two nearly equal averages when the
    // modulation is weak; widen the check by that cancellation.
    let denominator = m.mean_t32 - m.mean_t * m.mean_sqrt_t;
    let tolerance = 1e-10_f64.max(64.0 * f64::EPSILON * m.mean_t32 / denominator.abs());
    if (forms.direct - forms.third_moment).abs() > tolerance * forms.third_moment.abs() {
        return Err(Error::FormulaMismatch {
            direct: forms.direct,
            third_moment: forms.third_moment,
            tolerance,
        });
    }
    Ok(forms.third_moment)
}

/// One point of the power/efficiency trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub power: f64,
    pub power_fraction: f64,
    pub efficiency: f64,
    /// `None` at maximum power.
    pub mu: Option<f64>,
}

/// η*(𝒫) at each requested power.
pub fn tradeoff_curve(
    profile: &TemperatureProfile,
    params: &EngineParams,
    powers: &[f64],
    exec: Execution,
) -> Result<Vec<TradeoffPoint>> {
    let moments = check_inputs(profile, params)?;
    let max_power = max_power_from_moments(&moments, params);
    exec.map(powers, |&power| {
        let (efficiency, mu) = efficiency_with(profile, params, &moments, power)?;
        Ok(TradeoffPoint {
            power,
            power_fraction: if max_power > 0.0 { power / max_power } else { 0.0 },
            efficiency,
            mu,
        })
    })
    .into_iter()
    .collect()
}

/// `n ≥ 2` equally spaced powers on [0, fraction · 𝒫*].
pub fn power_grid(max_power: f64, n: usize, fraction: f64) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|k| max_power * fraction * k as f64 / (n - 1) as f64)
        .collect()
}

/// ω √(m/q_min): how close the drive comes to the trap's natural frequency.
pub fn drive_frequency_ratio(profile: &TemperatureProfile, protocol: &Protocol, params: &EngineParams) -> f64 {
    profile.drive_frequency() * (params.m / protocol.min_stiffness(512)).sqrt()
}
