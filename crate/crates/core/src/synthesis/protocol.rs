use crate::error::{Error, Result};
use crate::profiles::{Panel, Piece, TemperatureProfile};
use crate::quadrature::CumulativeTable;

/// Time course of the trap stiffness q(t) over one period.
///
/// Protocols built from a temperature profile share its panels: q is smooth
/// inside every panel and can jump only where T jumps.
#[derive(Debug, Clone)]
pub struct Protocol {
    period: f64,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Constant {
        q: f64,
    },
    /// `q0 (1 + ratio cos(ω t + phase))`.
    LinearResponse {
        q0: f64,
        ratio: f64,
        omega: f64,
        phase: f64,
    },
    Shaped(Box<Shaped>),
    Ramped(Box<Ramped>),
}

/// Each jump of `inner` replaced by a smooth ramp in ln q, centred on the
/// jump time.
#[derive(Debug, Clone)]
struct Ramped {
    inner: Protocol,
    width: f64,
    /// (time, ln(q⁺/q⁻)).
    jumps: Vec<(f64, f64)>,
}

impl Ramped {
    /// Signed distance from jump `tj` on the circle of circumference `period`.
    fn offset(&self, t: f64, tj: f64) -> f64 {
        let p = self.inner.period;
        (t - tj + 0.5 * p).rem_euclid(p) - 0.5 * p
    }

    /// ln q − ln q_inner at `t`; `left` picks the side of a jump landing on `t`.
    fn log_correction(&self, t: f64, left: bool) -> f64 {
        self.jumps
            .iter()
            .map(|&(tj, l)| {
                let d = self.offset(t, tj);
                let step = if d > 0.0 || (d == 0.0 && !left) { 1.0 } else { 0.0 };
                l * (smootherstep(d / self.width + 0.5) - step)
            })
            .sum()
    }

    fn log_rate_correction(&self, t: f64) -> f64 {
        self.jumps
            .iter()
            .map(|&(tj, l)| l / self.width * smootherstep_slope(self.offset(t, tj) / self.width + 0.5))
            .sum()
    }
}

/// 6u⁵ − 15u⁴ + 10u³ on [0, 1], clamped outside: a step with continuous
/// first and second derivatives, so the ramp ends do not kick the oscillator.
fn smootherstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (u * (6.0 * u - 15.0) + 10.0)
}

fn smootherstep_slope(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    30.0 * u * u * (u - 1.0) * (u - 1.0)
}

/// `q(t) = q0 · a(T(t))/a(T(0⁺)) · exp(rate · (t − gain · ∫₀ᵗ g(T)))`
///
/// with a(T) = T, g(T) = √T at maximum power, and a(T) = T² + μT,
/// g(T) = √(T/(T + μ)) at fixed power.
#[derive(Debug, Clone)]
struct Shaped {
    profile: TemperatureProfile,
    q0: f64,
    mu: Option<f64>,
    amplitude0: f64,
    rate: f64,
    gain: f64,
    cumulative: CumulativeTable,
}

impl Shaped {
    fn amplitude(&self, temp: f64) -> f64 {
        match self.mu {
            None => temp,
            Some(mu) => temp * (temp + mu),
        }
    }

    fn amplitude_log_slope(&self, temp: f64) -> f64 {
        match self.mu {
            None => 1.0 / temp,
            Some(mu) => (2.0 * temp + mu) / (temp * (temp + mu)),
        }
    }

    fn integrand(mu: Option<f64>, temp: f64) -> f64 {
        match mu {
            None => temp.sqrt(),
            Some(mu) => (temp / (temp + mu)).sqrt(),
        }
    }

    fn running_integral(&self, tau: f64) -> f64 {
        let panels = self.profile.panels();
        let mu = self.mu;
        let g = |i: usize, t: f64| Self::integrand(mu, self.profile.eval_on(&panels[i], t));
        self.cumulative.eval(tau, &g)
    }

    fn q_at(&self, tau: f64, temp: f64) -> f64 {
        let exponent = self.rate * (tau - self.gain * self.running_integral(tau));
        self.q0 * self.amplitude(temp) / self.amplitude0 * exponent.exp()
    }
}

impl Protocol {
    pub fn constant(q: f64, period: f64) -> Self {
        Self {
            period,
            kind: Kind::Constant { q },
        }
    }

    /// First-order expansion `q0 (1 + ratio cos(ω t + phase))` of the
    /// optimal protocol for a weakly modulated sinusoidal bath.
    pub fn linear_response(q0: f64, ratio: f64, omega: f64, phase: f64, period: f64) -> Self {
        Self {
            period,
            kind: Kind::LinearResponse {
                q0,
                ratio,
                omega,
                phase,
            },
        }
    }

    /// The linear-response protocol matched to a single-piece sinusoidal
    /// profile (ratio ΔT/T̄, same frequency and phase). `None` for any other profile.
    pub fn linear_response_for(profile: &TemperatureProfile, q0: f64) -> Option<Self> {
        match profile.segments() {
            [seg] => match seg.piece {
                Piece::Sinusoid {
                    mean,
                    amplitude,
                    omega,
                    phase,
                } => Some(Self::linear_response(
                    q0,
                    amplitude / mean,
                    omega,
                    phase,
                    profile.period(),
                )),
                _ => None,
            },
            _ => None,
        }
    }

    pub(crate) fn shaped(
        profile: &TemperatureProfile,
        q0: f64,
        mu: Option<f64>,
        rate: f64,
        gain: f64,
    ) -> Result<Self> {
        let panels = profile.panels();
        let intervals: Vec<(f64, f64)> = panels.iter().map(|p| (p.start, p.end)).collect();
        let g = |i: usize, t: f64| Shaped::integrand(mu, profile.eval_on(&panels[i], t));
        let cumulative = CumulativeTable::build(&intervals, profile.quadrature(), &g)?;
        let t0 = profile.eval(0.0);
        let amplitude0 = match mu {
            None => t0,
            Some(mu) => t0 * (t0 + mu),
        };
        Ok(Self {
            period: profile.period(),
            kind: Kind::Shaped(Box::new(Shaped {
                profile: profile.clone(),
                q0,
                mu,
                amplitude0,
                rate,
                gain,
                cumulative,
            })),
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Running integral ∫₀ᵗ g(T) that enters the exponent, for shaped protocols.
    pub fn running_integral(&self, t: f64) -> Option<f64> {
        match &self.kind {
            Kind::Shaped(s) => Some(s.running_integral(self.wrap(t))),
            Kind::Ramped(r) => r.inner.running_integral(t),
            _ => None,
        }
    }

    fn wrap(&self, t: f64) -> f64 {
        let tau = t.rem_euclid(self.period);
        if tau >= self.period {
            0.0
        } else {
            tau
        }
    }

    /// q(t), right limit at jumps.
    pub fn eval(&self, t: f64) -> f64 {
        let tau = self.wrap(t);
        match &self.kind {
            Kind::Constant { q } => *q,
            Kind::LinearResponse {
                q0,
                ratio,
                omega,
                phase,
            } => q0 * (1.0 + ratio * (omega * tau + phase).cos()),
            Kind::Shaped(s) => s.q_at(tau, s.profile.eval(tau)),
            Kind::Ramped(r) => r.inner.eval(tau) * r.log_correction(tau, false).exp(),
        }
    }

    /// Left limit q(t⁻); at t ≡ 0 this is q(t_f⁻).
    pub fn eval_left(&self, t: f64) -> f64 {
        let mut tau = self.wrap(t);
        if tau == 0.0 {
            tau = self.period;
        }
        match &self.kind {
            Kind::Shaped(s) => s.q_at(tau, s.profile.eval_left(tau)),
            Kind::Ramped(r) => r.inner.eval_left(tau) * r.log_correction(tau, true).exp(),
            _ => self.eval(tau),
        }
    }

    /// q(t) on a panel of the driving profile, with `t` allowed on either edge.
    pub fn eval_on(&self, profile: &TemperatureProfile, panel: &Panel, t: f64) -> f64 {
        match &self.kind {
            Kind::Shaped(s) => s.q_at(t, profile.eval_on(panel, t)),
            Kind::Ramped(r) => {
                let left = t - panel.start > panel.end - t;
                r.inner.eval_on(profile, panel, t) * r.log_correction(t, left).exp()
            }
            _ => self.eval(t),
        }
    }

    /// q̇/q on a panel of the driving profile.
    pub fn log_derivative_on(&self, profile: &TemperatureProfile, panel: &Panel, t: f64) -> f64 {
        match &self.kind {
            Kind::Constant { .. } => 0.0,
            Kind::LinearResponse {
                q0,
                ratio,
                omega,
                phase,
            } => {
                let arg = omega * t + phase;
                -q0 * ratio * omega * arg.sin() / (q0 * (1.0 + ratio * arg.cos()))
            }
            Kind::Shaped(s) => {
                let temp = profile.eval_on(panel, t);
                let dtemp = profile.derivative_on(panel, t);
                s.amplitude_log_slope(temp) * dtemp
                    + s.rate * (1.0 - s.gain * Shaped::integrand(s.mu, temp))
            }
            Kind::Ramped(r) => r.inner.log_derivative_on(profile, panel, t) + r.log_rate_correction(t),
        }
    }

    /// Times in (0, t_f] where q jumps, with the ratio q(t⁺)/q(t⁻).
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        let Kind::Shaped(s) = &self.kind else {
            return Vec::new();
        };
        let mut times: Vec<f64> = s.profile.jump_times().to_vec();
        if s.profile.jumps_at_period_boundary() {
            times.push(self.period);
        }
        times
            .into_iter()
            .map(|t| (t, self.eval(t) / self.eval_left(t)))
            .filter(|&(_, r)| (r - 1.0).abs() > 1e-12)
            .collect()
    }

    /// The same protocol with every jump spread over a window of `width`
    /// centred on the jump, across which ln q follows a C² smooth step.
    ///
    /// Under low friction a ramp much longer than the oscillation period
    /// √(m/q) but much shorter than the relaxation time m/γ reproduces the
    /// reduced model's jump rule, which a sudden jump of the full model
    /// does not.
    pub fn with_smoothed_jumps(&self, width: f64) -> Result<Self> {
        let jumps: Vec<(f64, f64)> = self.jumps().into_iter().map(|(t, r)| (t, r.ln())).collect();
        let mut gap = self.period;
        for (k, &(t, _)) in jumps.iter().enumerate() {
            let next = jumps.get(k + 1).map_or(jumps[0].0 + self.period, |j| j.0);
            gap = gap.min(next - t);
        }
        if !(width > 0.0 && width < gap) {
            return Err(Error::InvalidParams(format!(
                "ramp width must lie in (0, {gap}), got {width}"
            )));
        }
        if jumps.is_empty() {
            return Ok(self.clone());
        }
        Ok(Self {
            period: self.period,
            kind: Kind::Ramped(Box::new(Ramped {
                inner: self.clone(),
                width,
                jumps,
            })),
        })
    }

    /// Largest q on a uniform sample of `n` points (plus left limits at jumps).
    pub fn max_stiffness(&self, n: usize) -> f64 {
        let sampled = (0..n)
            .map(|k| self.eval(self.period * k as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        self.jumps()
            .iter()
            .map(|&(t, _)| self.eval_left(t))
            .fold(sampled, f64::max)
    }

    /// Smallest q, sampled as in [`Protocol::max_stiffness`].
    pub fn min_stiffness(&self, n: usize) -> f64 {
        let sampled = (0..n)
            .map(|k| self.eval(self.period * k as f64 / n as f64))
            .fold(f64::INFINITY, f64::min);
        self.jumps()
            .iter()
            .map(|&(t, _)| self.eval_left(t))
            .fold(sampled, f64::min)
    }
}
