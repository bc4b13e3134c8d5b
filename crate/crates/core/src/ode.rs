//! Dormand–Prince 5(4) with step-size control and 4th-order dense output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on the step size.
    pub max_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 2_000_000,
            max_step: None,
        }
    }
}

impl OdeOptions {
    pub fn with_rtol(self, rtol: f64) -> Self {
        Self { rtol, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let cap_ok = self.max_step.is_none_or(|h| h > 0.0);
        if !(self.rtol > 0.0 && self.rtol < 1.0 && self.atol >= 0.0 && self.max_steps > 0 && cap_ok) {
            return Err(Error::InvalidParams(format!("invalid ODE options {self:?}")));
        }
        Ok(())
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub t: f64,
    pub h: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn end(&self) -> f64 {
        self.t + self.h
    }

    /// Interpolated state at `t` in [self.t, self.t + h].
    pub fn eval(&self, t: f64) -> [f64; N] {
        let theta = ((t - self.t) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        std::array::from_fn(|i| {
            r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])))
        })
    }
}

/// Result of a call to [`solve`].
#[derive(Debug, Clone, Copy)]
pub struct Solution<const N: usize> {
    pub y: [f64; N],
    /// Last accepted step size, a good first guess for the next interval.
    pub h: f64,
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn scaled_norm<const N: usize>(v: &[f64; N], y: &[f64; N], opts: &OdeOptions) -> f64 {
    let sum: f64 = (0..N)
        .map(|i| (v[i] / (opts.atol + opts.rtol * y[i].abs())).powi(2))
        .sum();
    (sum / N as f64).sqrt()
}

fn initial_step<const N: usize>(
    f: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    span: f64,
    opts: &OdeOptions,
) -> f64 {
    let d0 = scaled_norm(y0, y0, opts);
    let d1 = scaled_norm(f0, y0, opts);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(span);
    let y1 = combine(y0, h0, &[(1.0, f0)]);
    let f1 = f(t0 + h0, &y1);
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = scaled_norm(&diff, y0, opts) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Stage derivatives of one Dormand–Prince step; `k[6]` is f at the new point.
struct Stages<const N: usize> {
    k: [[f64; N]; 7],
    y_new: [f64; N],
}

impl<const N: usize> Stages<N> {
    fn dense(&self, t: f64, h: f64, y: &[f64; N]) -> DenseStep<N> {
        let k = &self.k;
        let mut rcont = [[0.0; N]; 5];
        for i in 0..N {
            let dy = self.y_new[i] - y[i];
            let bspl = h * k[0][i] - dy;
            rcont[0][i] = y[i];
            rcont[1][i] = dy;
            rcont[2][i] = bspl;
            rcont[3][i] = dy - h * k[6][i] - bspl;
            rcont[4][i] = h
                * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        DenseStep { t, h, rcont }
    }
}

fn stages<const N: usize>(
    f: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    t_new: f64,
    h: f64,
    y: &[f64; N],
    k1: &[f64; N],
) -> Stages<N> {
    let k2 = f(t + C2 * h, &combine(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &combine(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(t + C5 * h, &combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(
        t_new,
        &combine(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y_new = combine(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t_new, &y_new);
    Stages {
        k: [*k1, k2, k3, k4, k5, k6, k7],
        y_new,
    }
}

/// Steps through the fixed nodes `grid` without error control. The map
/// y0 ↦ y(end) is then a fixed sequence of arithmetic operations; for a
/// linear ODE it is exactly affine in `y0`.
pub fn solve_on_grid<const N: usize>(
    f: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    admissible: &dyn Fn(&[f64; N]) -> bool,
    grid: &[f64],
    y0: [f64; N],
    mut record: Option<&mut Vec<DenseStep<N>>>,
) -> Result<[f64; N]> {
    let mut y = y0;
    let Some(&first) = grid.first() else {
        return Ok(y);
    };
    let mut k1 = f(first, &y);
    for w in grid.windows(2) {
        let (t, t_new) = (w[0], w[1]);
        let h = t_new - t;
        let st = stages(f, t, t_new, h, &y, &k1);
        if !st.y_new.iter().all(|v| v.is_finite()) {
            return Err(Error::StepFailure { t, h });
        }
        if !admissible(&st.y_new) {
            return Err(Error::PositivityLoss { t: t_new });
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.push(st.dense(t, h, &y));
        }
        y = st.y_new;
        k1 = st.k[6];
    }
    Ok(y)
}

/// Integrates y' = f(t, y) from `t0` to `t1 > t0`.
///
/// Steps whose endpoint fails `admissible` are rejected and halved; if that
/// drives the step below the resolution of `t` the call fails with
/// [`Error::PositivityLoss`]. Accepted steps are pushed to `record`.
#[allow(clippy::too_many_arguments)]
pub fn solve<const N: usize>(
    f: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    admissible: &dyn Fn(&[f64; N]) -> bool,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    opts: &OdeOptions,
    h_hint: Option<f64>,
    mut record: Option<&mut Vec<DenseStep<N>>>,
) -> Result<Solution<N>> {
    let span = t1 - t0;
    let mut y = y0;
    if span <= 0.0 {
        return Ok(Solution {
            y,
            h: h_hint.unwrap_or(0.0),
            accepted: 0,
            rejected: 0,
        });
    }
    let mut t = t0;
    let mut k1 = f(t, &y);
    let cap = opts.max_step.unwrap_or(f64::INFINITY);
    let mut h = match h_hint {
        Some(h) if h > 0.0 => h.min(span),
        _ => initial_step(f, t, &y, &k1, span, opts),
    }
    .min(cap);
    let mut accepted = 0;
    let mut rejected = 0;
    let mut last_rejected = false;
    let mut positivity_rejections = 0u32;

    while t < t1 {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::StepFailure { t, h });
        }
        h = h.min(cap);
        let finishing = t + h >= t1 || t1 - (t + h) < 1e-12 * span;
        if finishing {
            h = t1 - t;
        }
        if h <= 4.0 * f64::EPSILON * t.abs().max(span) {
            return Err(if positivity_rejections > 0 {
                Error::PositivityLoss { t }
            } else {
                Error::StepFailure { t, h }
            });
        }

        let t_new = if finishing { t1 } else { t + h };
        let st = stages(f, t, t_new, h, &y, &k1);
        let (y_new, k7) = (st.y_new, st.k[6]);

        if !y_new.iter().all(|v| v.is_finite()) || !admissible(&y_new) {
            if y_new.iter().all(|v| v.is_finite()) {
                positivity_rejections += 1;
            }
            rejected += 1;
            last_rejected = true;
            h *= 0.5;
            continue;
        }

        let err_vec: [f64; N] = std::array::from_fn(|i| {
            let k = &st.k;
            h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i])
        });
        let scale: [f64; N] = std::array::from_fn(|i| y[i].abs().max(y_new[i].abs()));
        let err = scaled_norm(&err_vec, &scale, opts);

        if err <= 1.0 {
            if let Some(rec) = record.as_deref_mut() {
                rec.push(st.dense(t, h, &y));
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            accepted += 1;
            positivity_rejections = 0;
            let mut factor = 0.9 * err.max(1e-10).powf(-0.2);
            factor = factor.clamp(0.2, 10.0);
            if last_rejected {
                factor = factor.min(1.0);
            }
            last_rejected = false;
            if !finishing {
                h *= factor;
            } else {
                h = (h * factor).max(h);
            }
        } else {
            rejected += 1;
            last_rejected = true;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(Solution {
        y,
        h,
        accepted,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn always(_: &[f64; 2]) -> bool {
        true
    }

    #[test]
    fn harmonic_oscillator_returns_after_one_period() {
        let f = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let tau = std::f64::consts::TAU;
        let sol = solve(&f, &always, 0.0, tau, [1.0, 0.0], &OdeOptions::default(), None, None).unwrap();
        assert!((sol.y[0] - 1.0).abs() < 1e-8);
        assert!(sol.y[1].abs() < 1e-8);
    }

    #[test]
    fn dense_output_is_fourth_order_accurate() {
        let f = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let opts = OdeOptions::default().with_rtol(1e-6);
        let mut steps = Vec::new();
        solve(&f, &always, 0.0, 10.0, [1.0, 0.0], &opts, None, Some(&mut steps)).unwrap();
        let mut worst: f64 = 0.0;
        for s in &steps {
            for j in 1..10 {
                let t = s.t + s.h * j as f64 / 10.0;
                let y = s.eval(t);
                worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
            }
        }
        assert!(worst < 1e-5, "worst dense error {worst}");
        assert_eq!(steps.first().unwrap().t, 0.0);
        assert_eq!(steps.last().unwrap().end(), 10.0);
    }

    #[test]
    fn error_shrinks_at_fifth_order_rate() {
        let f = |t: f64, y: &[f64; 1]| [-2.0 * t * y[0]];
        let exact = (-4.0f64).exp();
        let errs: Vec<f64> = [1e-6, 1e-8, 1e-10]
            .iter()
            .map(|&rtol| {
                let opts = OdeOptions {
                    rtol,
                    atol: 0.0,
                    ..Default::default()
                };
                let sol = solve(&f, &|_| true, 0.0, 2.0, [1.0], &opts, None, None).unwrap();
                (sol.y[0] - exact).abs() / exact
            })
            .collect();
        for (e, rtol) in errs.iter().zip([1e-6, 1e-8, 1e-10]) {
            assert!(*e < 50.0 * rtol, "{e} at {rtol}");
        }
        assert!(errs[2] < errs[0]);
    }

    #[test]
    fn inadmissible_states_force_smaller_steps() {
        // Decays to zero; the guard rejects any overshoot below zero.
        let f = |_: f64, y: &[f64; 1]| [-50.0 * y[0]];
        let sol = solve(&f, &|y| y[0] > 0.0, 0.0, 1.0, [1.0], &OdeOptions::default(), Some(0.5), None).unwrap();
        assert!(sol.y[0] > 0.0);
        assert!((sol.y[0] - (-50.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn impossible_constraint_is_reported() {
        let f = |_: f64, _: &[f64; 1]| [-1.0];
        let err = solve(&f, &|y| y[0] > 0.5, 0.0, 1.0, [1.0], &OdeOptions::default(), None, None).unwrap_err();
        assert!(matches!(err, Error::PositivityLoss { .. }), "{err:?}");
    }
}
