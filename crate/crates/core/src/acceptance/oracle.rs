//! Brute-force reference for the fixed-power problem.
//!
//! Σ_v is discretized on equal time bins with the bath temperature at bin
//! midpoints. Stationarity of the discrete Lagrangian for minimal uptake,
//! under the periodicity and power constraints, gives s_i = c √(T_i² + μ T_i).
//! The power constraint fixes c for each μ, and μ is located by a nested
//! grid scan on the periodicity residual. Nothing here calls the
//! continuous solvers.

use crate::error::{Error, Result};
use crate::{EngineParams, TemperatureProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteOptimum {
    pub mu: f64,
    /// −𝒲/𝒰 of the discrete optimum.
    pub efficiency: f64,
}

struct Discrete {
    temps: Vec<f64>,
    h: f64,
    /// m/k_B · t_f, the target of Σ T_i/s_i h.
    periodic_target: f64,
    /// Σ s_i h fixed by the power.
    sigma_total: f64,
}

impl Discrete {
    fn new(profile: &TemperatureProfile, params: &EngineParams, power: f64, bins: usize) -> Self {
        let t_f = profile.period();
        let h = t_f / bins as f64;
        let temps: Vec<f64> = (0..bins).map(|i| profile.eval((i as f64 + 0.5) * h)).collect();
        let int_t: f64 = temps.iter().sum::<f64>() * h;
        Self {
            temps,
            h,
            periodic_target: params.m * t_f / params.k_b,
            sigma_total: params.k_b / params.m * int_t - t_f * power / params.gamma,
        }
    }

    fn sigma(&self, mu: f64) -> Vec<f64> {
        let shape: Vec<f64> = self.temps.iter().map(|&t| (t * (t + mu)).sqrt()).collect();
        let c = self.sigma_total / (shape.iter().sum::<f64>() * self.h);
        shape.into_iter().map(|s| c * s).collect()
    }

    fn residual(&self, mu: f64) -> f64 {
        let s = self.sigma(mu);
        self.temps.iter().zip(&s).map(|(t, s)| t / s).sum::<f64>() * self.h - self.periodic_target
    }
}

/// First sign change of `f` on [lo, hi], refined by repeated uniform subdivision.
fn nested_scan(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    const SUBDIVISIONS: usize = 64;
    let mut f_lo = f(lo);
    while hi - lo > 1e-13 * hi.abs().max(1e-300) {
        let step = (hi - lo) / SUBDIVISIONS as f64;
        let mut found = None;
        for k in 1..=SUBDIVISIONS {
            let x = if k == SUBDIVISIONS { hi } else { lo + step * k as f64 };
            let fx = f(x);
            if (fx < 0.0) != (f_lo < 0.0) {
                found = Some((lo + step * (k - 1) as f64, x));
                break;
            }
            f_lo = fx;
        }
        let (a, b) = found?;
        lo = a;
        hi = b;
        f_lo = f(lo);
    }
    Some(0.5 * (lo + hi))
}

/// Optimal μ and efficiency of the `bins`-bin problem at power `power` > 0.
pub fn discrete_optimum(profile: &TemperatureProfile, params: &EngineParams, power: f64, bins: usize) -> Result<DiscreteOptimum> {
    if !(power > 0.0) || bins < 2 {
        return Err(Error::InvalidParams(format!("oracle needs power > 0 and at least two bins, got {power}, {bins}")));
    }
    let d = Discrete::new(profile, params, power, bins);
    let mean_t = d.temps.iter().sum::<f64>() / bins as f64;
    // Coarse logarithmic scan for the first bracket, then the nested scan.
    let grid: Vec<f64> = std::iter::once(0.0)
        .chain((0..=240).map(|k| mean_t * 10f64.powf(-8.0 + k as f64 / 10.0)))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&mu| d.residual(mu)).collect();
    let k = (1..grid.len())
        .find(|&k| (values[k] < 0.0) != (values[k - 1] < 0.0))
        .ok_or(Error::BracketFailure { mu_hi: grid[grid.len() - 1] })?;
    let mu = nested_scan(|mu| d.residual(mu), grid[k - 1], grid[k]).ok_or(Error::BracketFailure { mu_hi: grid[k] })?;

    let s = d.sigma(mu);
    let c = params.k_b * params.gamma / params.m;
    let uptake: f64 = d
        .temps
        .iter()
        .zip(&s)
        .map(|(&t, &s)| c * t * (params.k_b * t / (params.m * s) - 1.0))
        .sum::<f64>()
        * d.h;
    Ok(DiscreteOptimum {
        mu,
        efficiency: power * profile.period() / uptake,
    })
}
