use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::TemperatureProfile;

/// Physical constants of the engine and the reference stiffness q(0⁺).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineParams {
    pub m: f64,
    pub gamma: f64,
    #[serde(default = "unit")]
    pub k_b: f64,
    pub t_f: f64,
    pub q0: f64,
}

fn unit() -> f64 {
    1.0
}

/// γ/√(m q₀) used when no reference stiffness is given.
pub const DEFAULT_FRICTION_RATIO: f64 = 1e-2;

impl EngineParams {
    /// Parameters with q₀ chosen so that γ/√(m q₀) = [`DEFAULT_FRICTION_RATIO`].
    pub fn new(m: f64, gamma: f64, k_b: f64, t_f: f64) -> Result<Self> {
        let q0 = Self::stiffness_for_ratio(m, gamma, DEFAULT_FRICTION_RATIO);
        let p = Self { m, gamma, k_b, t_f, q0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_q0(mut self, q0: f64) -> Result<Self> {
        self.q0 = q0;
        self.validate()?;
        Ok(self)
    }

    /// Same parameters with q₀ set from a target γ/√(m q₀).
    pub fn with_friction_ratio(self, ratio: f64) -> Result<Self> {
        self.with_q0(Self::stiffness_for_ratio(self.m, self.gamma, ratio))
    }

    fn stiffness_for_ratio(m: f64, gamma: f64, ratio: f64) -> f64 {
        (gamma / ratio).powi(2) / m
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m", self.m),
            ("gamma", self.gamma),
            ("k_b", self.k_b),
            ("t_f", self.t_f),
            ("q0", self.q0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Rejects a profile whose period differs from `t_f`.
    pub fn check_profile(&self, profile: &TemperatureProfile) -> Result<()> {
        self.validate()?;
        let p = profile.period();
        if (p - self.t_f).abs() > 1e-12 * p.max(self.t_f) {
            return Err(Error::InvalidParams(format!(
                "cycle period t_f = {} does not match the profile period {p}",
                self.t_f
            )));
        }
        Ok(())
    }

    /// κ = m / (γ k_B).
    pub fn kappa(&self) -> f64 {
        self.m / (self.gamma * self.k_b)
    }

    /// γ/√(m q₀); small values mean many oscillations per damping time.
    pub fn friction_ratio(&self) -> f64 {
        self.gamma / (self.m * self.q0).sqrt()
    }
}
