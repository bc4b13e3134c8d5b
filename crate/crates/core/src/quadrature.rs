//! Composite Gauss–Legendre quadrature with level-doubling refinement.
//!
//! Every integral over a temperature profile is split at the profile's
//! breakpoints first, so a panel never straddles a jump or a kink and the
//! Gauss rule sees an analytic integrand on each panel.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureOptions {
    /// Relative change between successive refinement levels that stops the doubling.
    pub tol: f64,
    /// Number of Gauss–Legendre nodes per panel.
    pub order: usize,
    pub max_levels: u32,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            order: 16,
            max_levels: 20,
        }
    }
}

/// Nodes and weights of the Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss rule needs at least one node");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = ((4 * i + 3) as f64 * std::f64::consts::PI / (4 * n + 2) as f64).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 16-point rule.
    pub fn order16() -> &'static GaussRule {
        static RULE: OnceLock<GaussRule> = OnceLock::new();
        RULE.get_or_init(|| GaussRule::new(16))
    }

    /// Shared 8-point rule.
    pub fn order8() -> &'static GaussRule {
        static RULE: OnceLock<GaussRule> = OnceLock::new();
        RULE.get_or_init(|| GaussRule::new(8))
    }

    /// Apply the rule on [a, b]; returns (∫f, ∫|f|).
    pub fn apply(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        let mut abs = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            sum += w * v;
            abs += w * v.abs();
        }
        (sum * half, abs * half.abs())
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

fn rule_for(order: usize) -> std::borrow::Cow<'static, GaussRule> {
    match order {
        16 => std::borrow::Cow::Borrowed(GaussRule::order16()),
        8 => std::borrow::Cow::Borrowed(GaussRule::order8()),
        n => std::borrow::Cow::Owned(GaussRule::new(n)),
    }
}

/// Result of refining one smooth interval.
#[derive(Debug, Clone)]
pub(crate) struct Refined {
    pub value: f64,
    /// Number of equal sub-panels of the accepted level.
    pub panels: usize,
}

/// Integrate a smooth function over [a, b], doubling the panel count until
/// the relative change drops below `opts.tol`.
pub(crate) fn integrate_smooth(
    a: f64,
    b: f64,
    opts: &QuadratureOptions,
    f: &dyn Fn(f64) -> f64,
) -> Result<Refined> {
    if b <= a {
        return Ok(Refined {
            value: 0.0,
            panels: 1,
        });
    }
    let rule = rule_for(opts.order);
    let composite = |panels: usize| -> (f64, f64) {
        let h = (b - a) / panels as f64;
        let mut sum = 0.0;
        let mut abs = 0.0;
        for k in 0..panels {
            let lo = a + k as f64 * h;
            let hi = if k + 1 == panels { b } else { lo + h };
            let (s, m) = rule.apply(lo, hi, f);
            sum += s;
            abs += m;
        }
        (sum, abs)
    };
    let mut panels = 1;
    let (mut prev, _) = composite(panels);
    for _ in 0..opts.max_levels {
        panels *= 2;
        let (cur, abs) = composite(panels);
        let scale = cur.abs().max(abs);
        if (cur - prev).abs() <= opts.tol * scale || scale == 0.0 {
            return Ok(Refined { value: cur, panels });
        }
        prev = cur;
    }
    Err(Error::NonConvergent {
        levels: opts.max_levels,
        a,
        b,
    })
}

/// Running integral t ↦ ∫_{t0}^{t} g over a fixed set of smooth intervals.
///
/// Each interval is refined once at construction; evaluation locates the
/// accepted sub-panel by binary search and applies one Gauss rule to the
/// partial panel.
#[derive(Debug, Clone)]
pub(crate) struct CumulativeTable {
    /// Sub-panel left edges, plus the final right edge.
    edges: Vec<f64>,
    /// Integral from the first edge up to each entry of `edges`.
    cumulative: Vec<f64>,
    /// Index of the smooth interval that owns each sub-panel.
    owner: Vec<usize>,
}

impl CumulativeTable {
    /// `intervals` must be contiguous and sorted; `g(i, t)` evaluates the
    /// integrand on interval `i`.
    pub fn build(
        intervals: &[(f64, f64)],
        opts: &QuadratureOptions,
        g: &dyn Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        let rule = GaussRule::order16();
        let mut edges = Vec::new();
        let mut cumulative = Vec::new();
        let mut owner = Vec::new();
        let mut total = 0.0;
        for (i, &(a, b)) in intervals.iter().enumerate() {
            let f = |t: f64| g(i, t);
            let refined = integrate_smooth(a, b, opts, &f)?;
            let h = (b - a) / refined.panels as f64;
            for k in 0..refined.panels {
                let lo = a + k as f64 * h;
                let hi = if k + 1 == refined.panels { b } else { lo + h };
                edges.push(lo);
                cumulative.push(total);
                owner.push(i);
                total += rule.apply(lo, hi, f).0;
            }
        }
        let last = intervals.last().map(|iv| iv.1).unwrap_or(0.0);
        edges.push(last);
        cumulative.push(total);
        Ok(Self {
            edges,
            cumulative,
            owner,
        })
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// ∫ from the first edge to `t`, with `t` clamped into the table range.
    pub fn eval(&self, t: f64, g: &dyn Fn(usize, f64) -> f64) -> f64 {
        let n = self.owner.len();
        if n == 0 || t <= self.edges[0] {
            return 0.0;
        }
        if t >= self.edges[n] {
            return self.total();
        }
        let k = self.edges.partition_point(|&e| e <= t) - 1;
        let lo = self.edges[k];
        if t == lo {
            return self.cumulative[k];
        }
        let i = self.owner[k];
        self.cumulative[k] + GaussRule::order16().apply(lo, t, |s| g(i, s)).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_weights_sum_to_two() {
        for n in [1, 2, 5, 8, 16, 31] {
            let r = GaussRule::new(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "order {n}: {s}");
        }
    }

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let r = GaussRule::order16();
        for deg in 0..=31 {
            let (v, _) = r.apply(0.0, 1.0, |x| x.powi(deg));
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!(((v - exact) / exact).abs() < 1e-13, "degree {deg}: {v} vs {exact}");
        }
    }

    #[test]
    fn refinement_converges_on_smooth_integrand() {
        let opts = QuadratureOptions::default();
        let r = integrate_smooth(0.0, 10.0, &opts, &|x: f64| x.sin()).unwrap();
        assert!((r.value - (1.0 - 10f64.cos())).abs() < 1e-12);
    }

    #[test]
    fn refinement_reports_nonconvergence() {
        let opts = QuadratureOptions {
            max_levels: 3,
            ..Default::default()
        };
        // Unbounded derivative near 0 defeats a three-level cap.
        let err = integrate_smooth(0.0, 1.0, &opts, &|x: f64| (1e-300 + x).ln() * x.powf(-0.9))
            .unwrap_err();
        assert!(matches!(err, Error::NonConvergent { levels: 3, .. }));
    }

    #[test]
    fn cumulative_table_matches_antiderivative() {
        let intervals = [(0.0, 0.5), (0.5, 2.0)];
        let g = |i: usize, t: f64| if i == 0 { t.cos() } else { 2.0 * t.cos() };
        let table = CumulativeTable::build(&intervals, &QuadratureOptions::default(), &g).unwrap();
        let exact = |t: f64| {
            if t <= 0.5 {
                t.sin()
            } else {
                0.5f64.sin() + 2.0 * (t.sin() - 0.5f64.sin())
            }
        };
        for k in 0..=40 {
            let t = 2.0 * k as f64 / 40.0;
            assert!((table.eval(t, &g) - exact(t)).abs() < 1e-13, "t = {t}");
        }
    }
}
