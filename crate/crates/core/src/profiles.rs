//! Periodic bath temperature profiles and their √T moments.
//!
//! A profile is an ordered list of smooth segments tiling one period. Jumps
//! are allowed only at segment boundaries and evaluation always returns the
//! right limit, so a cycle runs from 0⁺ to t_f⁺.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_smooth, QuadratureOptions};

/// Temperature law on one smooth segment. Times are absolute within the period.
#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    Constant(f64),
    /// `mean + amplitude · cos(omega · t + phase)`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// `(mean + amplitude · cos(omega · t + phase))²`, a sinusoid in √T.
    RootSinusoid {
        mean: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// Knots `(t, T)` interpolated linearly in T.
    Sampled(Vec<(f64, f64)>),
}

impl Piece {
    fn value(&self, t: f64) -> f64 {
        match self {
            Piece::Constant(v) => *v,
            Piece::Sinusoid {
                mean,
                amplitude,
                omega,
                phase,
            } => mean + amplitude * (omega * t + phase).cos(),
            Piece::RootSinusoid { .. } => self.root().value(t).powi(2),
            Piece::Sampled(knots) => {
                let k = knot_index(knots, t);
                let (t0, v0) = knots[k];
                let (t1, v1) = knots[k + 1];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        match self {
            Piece::Constant(_) => 0.0,
            Piece::Sinusoid {
                amplitude,
                omega,
                phase,
                ..
            } => -amplitude * omega * (omega * t + phase).sin(),
            Piece::RootSinusoid { .. } => {
                let root = self.root();
                2.0 * root.value(t) * root.derivative(t)
            }
            Piece::Sampled(knots) => {
                let k = knot_index(knots, t);
                let (t0, v0) = knots[k];
                let (t1, v1) = knots[k + 1];
                (v1 - v0) / (t1 - t0)
            }
        }
    }

    /// Smallest value on [start, end].
    fn minimum(&self, start: f64, end: f64) -> f64 {
        match self {
            Piece::Constant(v) => *v,
            Piece::Sinusoid {
                mean,
                amplitude,
                omega,
                phase,
            } => {
                let ends = self.value(start).min(self.value(end));
                if *omega == 0.0 {
                    return ends;
                }
                // cos reaches -sign(amplitude) where omega t + phase hits the
                // matching multiple of π.
                let offset = if *amplitude >= 0.0 {
                    std::f64::consts::PI
                } else {
                    0.0
                };
                let two_pi = std::f64::consts::TAU;
                let (lo, hi) = {
                    let a = omega * start + phase;
                    let b = omega * end + phase;
                    (a.min(b), a.max(b))
                };
                let k = ((lo - offset) / two_pi).ceil();
                if offset + k * two_pi <= hi {
                    ends.min(mean - amplitude.abs())
                } else {
                    ends
                }
            }
            Piece::RootSinusoid { .. } => {
                let (lo, hi) = self.root().extrema(start, end);
                if lo <= 0.0 && hi >= 0.0 {
                    0.0
                } else {
                    (lo * lo).min(hi * hi)
                }
            }
            Piece::Sampled(knots) => knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min),
        }
    }

    fn maximum(&self, start: f64, end: f64) -> f64 {
        match self {
            Piece::RootSinusoid { .. } => {
                let (lo, hi) = self.root().extrema(start, end);
                (lo * lo).max(hi * hi)
            }
            _ => -self.scaled(-1.0).minimum(start, end),
        }
    }

    fn extrema(&self, start: f64, end: f64) -> (f64, f64) {
        (self.minimum(start, end), self.maximum(start, end))
    }

    /// The sinusoid in √T of a [`Piece::RootSinusoid`].
    fn root(&self) -> Piece {
        match *self {
            Piece::RootSinusoid {
                mean,
                amplitude,
                omega,
                phase,
            } => Piece::Sinusoid {
                mean,
                amplitude,
                omega,
                phase,
            },
            _ => unreachable!("only root sinusoids have a root piece"),
        }
    }

    fn scaled(&self, c: f64) -> Piece {
        match self {
            Piece::Constant(v) => Piece::Constant(c * v),
            Piece::Sinusoid {
                mean,
                amplitude,
                omega,
                phase,
            } => Piece::Sinusoid {
                mean: c * mean,
                amplitude: c * amplitude,
                omega: *omega,
                phase: *phase,
            },
            Piece::RootSinusoid {
                mean,
                amplitude,
                omega,
                phase,
            } => Piece::RootSinusoid {
                mean: c.sqrt() * mean,
                amplitude: c.sqrt() * amplitude,
                omega: *omega,
                phase: *phase,
            },
            Piece::Sampled(knots) => Piece::Sampled(knots.iter().map(|&(t, v)| (t, c * v)).collect()),
        }
    }
}

fn knot_index(knots: &[(f64, f64)], t: f64) -> usize {
    let k = knots.partition_point(|k| k.0 <= t);
    k.clamp(1, knots.len() - 1) - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub piece: Piece,
}

/// A maximal interval on which T is analytic: a segment, or the stretch
/// between two knots of a sampled segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub start: f64,
    pub end: f64,
    pub segment: usize,
}

/// Period averages of powers of √T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileMoments {
    pub mean_t: f64,
    pub mean_sqrt_t: f64,
    pub mean_t32: f64,
    /// Var(√T) = mean(T) − mean(√T)².
    pub var_sqrt_t: f64,
    /// Third central moment of √T.
    pub mu3_sqrt_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureProfile {
    period: f64,
    segments: Vec<Segment>,
    panels: Vec<Panel>,
    jumps: Vec<f64>,
    boundary_jump: bool,
    quad: QuadratureOptions,
}

const JUMP_REL: f64 = 1e-12;

impl TemperatureProfile {
    pub fn new(period: f64, mut segments: Vec<Segment>) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidProfile(format!("period must be positive, got {period}")));
        }
        if segments.is_empty() {
            return Err(Error::InvalidProfile("profile has no segments".into()));
        }
        let snap = 1e-12 * period;
        if segments[0].start.abs() > snap {
            return Err(Error::InvalidProfile(format!(
                "first segment starts at {} instead of 0",
                segments[0].start
            )));
        }
        segments[0].start = 0.0;
        let last = segments.len() - 1;
        if (segments[last].end - period).abs() > snap {
            return Err(Error::InvalidProfile(format!(
                "last segment ends at {} instead of the period {period}",
                segments[last].end
            )));
        }
        segments[last].end = period;
        for i in 0..segments.len() {
            if i > 0 {
                let prev_end = segments[i - 1].end;
                if (segments[i].start - prev_end).abs() > snap {
                    return Err(Error::InvalidProfile(format!(
                        "segments do not tile the period: gap or overlap at t = {prev_end}"
                    )));
                }
                segments[i].start = prev_end;
            }
            let seg = &segments[i];
            if !(seg.end > seg.start) {
                return Err(Error::InvalidProfile(format!(
                    "segment {i} is empty: [{}, {}]",
                    seg.start, seg.end
                )));
            }
            validate_piece(i, seg)?;
            let min = seg.piece.minimum(seg.start, seg.end);
            if !(min > 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "temperature must stay positive; segment {i} reaches {min}"
                )));
            }
        }

        let mut panels = Vec::new();
        for (i, seg) in segments.iter().enumerate() {
            match &seg.piece {
                Piece::Sampled(knots) => {
                    for w in knots.windows(2) {
                        let (a, b) = (w[0].0.max(seg.start), w[1].0.min(seg.end));
                        if b > a {
                            panels.push(Panel {
                                start: a,
                                end: b,
                                segment: i,
                            });
                        }
                    }
                }
                _ => panels.push(Panel {
                    start: seg.start,
                    end: seg.end,
                    segment: i,
                }),
            }
        }

        let is_jump = |left: f64, right: f64| (left - right).abs() > JUMP_REL * left.abs().max(right.abs());
        let mut jumps = Vec::new();
        for w in segments.windows(2) {
            let t = w[1].start;
            if is_jump(w[0].piece.value(t), w[1].piece.value(t)) {
                jumps.push(t);
            }
        }
        let boundary_jump = is_jump(
            segments[last].piece.value(period),
            segments[0].piece.value(0.0),
        );

        Ok(Self {
            period,
            segments,
            panels,
            jumps,
            boundary_jump,
            quad: QuadratureOptions::default(),
        })
    }

    pub fn constant(value: f64, period: f64) -> Result<Self> {
        Self::new(
            period,
            vec![Segment {
                start: 0.0,
                end: period,
                piece: Piece::Constant(value),
            }],
        )
    }

    /// Two-level profile: `hot` on [0, t_f/2), `cold` on [t_f/2, t_f).
    pub fn carnot(hot: f64, cold: f64, period: f64) -> Result<Self> {
        Self::two_level(hot, cold, period, 0.5)
    }

    /// Two-level profile hot on the first `hot_fraction` of the period.
    pub fn two_level(hot: f64, cold: f64, period: f64, hot_fraction: f64) -> Result<Self> {
        if !(hot_fraction > 0.0 && hot_fraction < 1.0) {
            return Err(Error::InvalidProfile(format!(
                "hot fraction must lie in (0, 1), got {hot_fraction}"
            )));
        }
        let split = hot_fraction * period;
        Self::new(
            period,
            vec![
                Segment {
                    start: 0.0,
                    end: split,
                    piece: Piece::Constant(hot),
                },
                Segment {
                    start: split,
                    end: period,
                    piece: Piece::Constant(cold),
                },
            ],
        )
    }

    /// `mean + amplitude · cos(2π t / period)`.
    pub fn sinusoid(mean: f64, amplitude: f64, period: f64) -> Result<Self> {
        Self::new(
            period,
            vec![Segment {
                start: 0.0,
                end: period,
                piece: Piece::Sinusoid {
                    mean,
                    amplitude,
                    omega: std::f64::consts::TAU / period,
                    phase: 0.0,
                },
            }],
        )
    }

    /// `(mean + amplitude · cos(2π t / period))²`. √T is symmetric about
    /// its mean, so its third central moment vanishes.
    pub fn root_sinusoid(mean: f64, amplitude: f64, period: f64) -> Result<Self> {
        Self::new(
            period,
            vec![Segment {
                start: 0.0,
                end: period,
                piece: Piece::RootSinusoid {
                    mean,
                    amplitude,
                    omega: std::f64::consts::TAU / period,
                    phase: 0.0,
                },
            }],
        )
    }

    /// Piecewise-constant profile with equal-duration levels.
    pub fn staircase(levels: &[f64], period: f64) -> Result<Self> {
        let n = levels.len();
        let segments = levels
            .iter()
            .enumerate()
            .map(|(i, &v)| Segment {
                start: period * i as f64 / n as f64,
                end: period * (i + 1) as f64 / n as f64,
                piece: Piece::Constant(v),
            })
            .collect();
        Self::new(period, segments)
    }

    /// Single sampled segment through `knots`, which must start at 0 and end at the period.
    pub fn sampled(knots: Vec<(f64, f64)>, period: f64) -> Result<Self> {
        Self::new(
            period,
            vec![Segment {
                start: 0.0,
                end: period,
                piece: Piece::Sampled(knots),
            }],
        )
    }

    pub fn with_quadrature(mut self, quad: QuadratureOptions) -> Self {
        self.quad = quad;
        self
    }

    /// Same shape with every temperature multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let segments = self
            .segments
            .iter()
            .map(|s| Segment {
                start: s.start,
                end: s.end,
                piece: s.piece.scaled(c),
            })
            .collect();
        Ok(Self::new(self.period, segments)?.with_quadrature(self.quad))
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn quadrature(&self) -> &QuadratureOptions {
        &self.quad
    }

    /// Interior discontinuities in (0, t_f).
    pub fn jump_times(&self) -> &[f64] {
        &self.jumps
    }

    /// Whether T(t_f⁻) differs from T(0⁺).
    pub fn jumps_at_period_boundary(&self) -> bool {
        self.boundary_jump
    }

    fn wrap(&self, t: f64) -> f64 {
        let tau = t.rem_euclid(self.period);
        if tau >= self.period {
            0.0
        } else {
            tau
        }
    }

    fn segment_at(&self, tau: f64) -> usize {
        self.segments
            .partition_point(|s| s.end <= tau)
            .min(self.segments.len() - 1)
    }

    /// T(t), right limit at jumps, periodically extended.
    pub fn eval(&self, t: f64) -> f64 {
        let tau = self.wrap(t);
        self.segments[self.segment_at(tau)].piece.value(tau)
    }

    /// Left limit T(t⁻).
    pub fn eval_left(&self, t: f64) -> f64 {
        let mut tau = self.wrap(t);
        if tau == 0.0 {
            tau = self.period;
        }
        let i = self.segments.partition_point(|s| s.end < tau).min(self.segments.len() - 1);
        self.segments[i].piece.value(tau)
    }

    /// T on a given panel, without periodic wrapping; `t` may sit on either panel edge.
    pub fn eval_on(&self, panel: &Panel, t: f64) -> f64 {
        self.segments[panel.segment].piece.value(t)
    }

    /// dT/dt on a given panel.
    pub fn derivative_on(&self, panel: &Panel, t: f64) -> f64 {
        self.segments[panel.segment].piece.derivative(t)
    }

    /// Highest angular frequency present in the drive; 2π/t_f for
    /// profiles without sinusoidal pieces.
    pub fn drive_frequency(&self) -> f64 {
        let base = std::f64::consts::TAU / self.period;
        self.segments
            .iter()
            .filter_map(|s| match s.piece {
                Piece::Sinusoid { omega, .. } => Some(omega.abs()),
                Piece::RootSinusoid { omega, .. } => Some(2.0 * omega.abs()),
                _ => None,
            })
            .fold(base, f64::max)
    }

    /// Range (min, max) of T over the period.
    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.segments {
            lo = lo.min(s.piece.minimum(s.start, s.end));
            hi = hi.max(s.piece.maximum(s.start, s.end));
        }
        (lo, hi)
    }

    /// ∫_a^b f(T(t)) dt, split at every breakpoint of the periodic extension.
    pub fn integrate_functional(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        self.integrate_time(a, b, &|_, temp| f(temp))
    }

    /// ∫_a^b g(t, T(t)) dt with the same panel splitting. `t` is the
    /// unwrapped time.
    pub fn integrate_time(&self, a: f64, b: f64, g: &dyn Fn(f64, f64) -> f64) -> Result<f64> {
        if b <= a {
            return Ok(-self.integrate_time(b, a, g)?);
        }
        let p = self.period;
        let first = (a / p).floor() as i64;
        let last = (b / p).ceil() as i64;
        let mut total = 0.0;
        for k in first..last {
            let shift = k as f64 * p;
            for panel in &self.panels {
                let lo = (panel.start + shift).max(a);
                let hi = (panel.end + shift).min(b);
                if hi <= lo {
                    continue;
                }
                let piece = &self.segments[panel.segment].piece;
                let f = |t: f64| g(t, piece.value(t - shift));
                total += integrate_smooth(lo, hi, &self.quad, &f)?.value;
            }
        }
        Ok(total)
    }

    /// Period average of f(T).
    pub fn average(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        Ok(self.integrate_functional(f, 0.0, self.period)? / self.period)
    }

    pub fn moments(&self) -> Result<ProfileMoments> {
        let mean_t = self.average(|t| t)?;
        let mean_sqrt_t = self.average(f64::sqrt)?;
        let mean_t32 = self.average(|t| t * t.sqrt())?;
        // Central forms avoid the cancellation in mean_T − mean_√T² for
        // weak modulation; the two are equal as identities.
        let var_sqrt_t = self.average(|t| (t.sqrt() - mean_sqrt_t).powi(2))?;
        let mu3_sqrt_t = self.average(|t| (t.sqrt() - mean_sqrt_t).powi(3))?;
        Ok(ProfileMoments {
            mean_t,
            mean_sqrt_t,
            mean_t32,
            var_sqrt_t,
            mu3_sqrt_t,
        })
    }

    /// Hot/cold levels and hot intervals of a piecewise-constant two-level profile.
    pub fn two_level_structure(&self) -> Option<TwoLevel> {
        let mut values = Vec::new();
        for s in &self.segments {
            match s.piece {
                Piece::Constant(v) => values.push(v),
                _ => return None,
            }
        }
        if values.len() < 2 {
            return None;
        }
        let hot = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cold = values.iter().copied().fold(f64::INFINITY, f64::min);
        let close = |a: f64, b: f64| (a - b).abs() <= JUMP_REL * a.abs().max(b.abs());
        if values.iter().any(|&v| !close(v, hot) && !close(v, cold)) {
            return None;
        }
        let hot_intervals = self
            .segments
            .iter()
            .filter(|s| matches!(s.piece, Piece::Constant(v) if close(v, hot)))
            .map(|s| (s.start, s.end))
            .collect();
        Some(TwoLevel {
            hot,
            cold,
            hot_intervals,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevel {
    pub hot: f64,
    pub cold: f64,
    pub hot_intervals: Vec<(f64, f64)>,
}

fn validate_piece(i: usize, seg: &Segment) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidProfile(format!("segment {i}: {msg}")));
    match &seg.piece {
        Piece::Constant(v) if !v.is_finite() => bad(format!("non-finite temperature {v}")),
        Piece::Sinusoid {
            mean,
            amplitude,
            omega,
            phase,
        }
        | Piece::RootSinusoid {
            mean,
            amplitude,
            omega,
            phase,
        } if ![mean, amplitude, omega, phase].iter().all(|x| x.is_finite()) => {
            bad("non-finite sinusoid coefficient".into())
        }
        Piece::Sampled(knots) => {
            if knots.len() < 2 {
                return bad("sampled piece needs at least two knots".into());
            }
            if knots.iter().any(|k| !(k.0.is_finite() && k.1.is_finite())) {
                return bad("non-finite knot".into());
            }
            if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                return bad("knot times must be strictly increasing".into());
            }
            let tol = 1e-12 * (seg.end - seg.start).abs().max(seg.end.abs());
            if knots[0].0 > seg.start + tol || knots[knots.len() - 1].0 < seg.end - tol {
                return bad(format!(
                    "knots [{}, {}] do not cover the segment [{}, {}]",
                    knots[0].0,
                    knots[knots.len() - 1].0,
                    seg.start,
                    seg.end
                ));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// JSON description of a profile: `{ "period": .., "pieces": [..] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub period: f64,
    pub pieces: Vec<PieceSpec>,
}

/// One piece of a [`ProfileSpec`]. `start` defaults to the previous piece's
/// end (or 0); `end` defaults to the next piece's start (or the period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PieceSpec {
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end: Option<f64>,
        value: f64,
    },
    Sinusoid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end: Option<f64>,
        mean: f64,
        amplitude: f64,
        /// Defaults to 2π / period.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// `(mean + amplitude · cos(omega · t + phase))²`.
    #[serde(rename = "root_sinusoid")]
    RootSinusoid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end: Option<f64>,
        mean: f64,
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
        #[serde(default)]
        phase: f64,
    },
    Sampled {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end: Option<f64>,
        knots: Vec<[f64; 2]>,
    },
}

impl PieceSpec {
    fn bounds(&self) -> (Option<f64>, Option<f64>) {
        match self {
            PieceSpec::Constant { start, end, .. }
            | PieceSpec::Sinusoid { start, end, .. }
            | PieceSpec::RootSinusoid { start, end, .. } => (*start, *end),
            PieceSpec::Sampled { start, end, knots } => (
                start.or_else(|| knots.first().map(|k| k[0])),
                end.or_else(|| knots.last().map(|k| k[0])),
            ),
        }
    }
}

impl TryFrom<&ProfileSpec> for TemperatureProfile {
    type Error = Error;

    fn try_from(spec: &ProfileSpec) -> Result<Self> {
        let n = spec.pieces.len();
        let bounds: Vec<_> = spec.pieces.iter().map(PieceSpec::bounds).collect();
        let mut segments = Vec::with_capacity(n);
        let mut cursor = 0.0;
        for (i, piece) in spec.pieces.iter().enumerate() {
            let start = bounds[i].0.unwrap_or(cursor);
            let end = match bounds[i].1 {
                Some(e) => e,
                None if i + 1 == n => spec.period,
                None => bounds[i + 1].0.ok_or_else(|| {
                    Error::InvalidProfile(format!(
                        "piece {i} has no end and piece {} has no start",
                        i + 1
                    ))
                })?,
            };
            let piece = match piece {
                PieceSpec::Constant { value, .. } => Piece::Constant(*value),
                PieceSpec::Sinusoid {
                    mean,
                    amplitude,
                    omega,
                    phase,
                    ..
                } => Piece::Sinusoid {
                    mean: *mean,
                    amplitude: *amplitude,
                    omega: omega.unwrap_or(std::f64::consts::TAU / spec.period),
                    phase: *phase,
                },
                PieceSpec::RootSinusoid {
                    mean,
                    amplitude,
                    omega,
                    phase,
                    ..
                } => Piece::RootSinusoid {
                    mean: *mean,
                    amplitude: *amplitude,
                    omega: omega.unwrap_or(std::f64::consts::TAU / spec.period),
                    phase: *phase,
                },
                PieceSpec::Sampled { knots, .. } => {
                    Piece::Sampled(knots.iter().map(|k| (k[0], k[1])).collect())
                }
            };
            segments.push(Segment { start, end, piece });
            cursor = end;
        }
        TemperatureProfile::new(spec.period, segments)
    }
}

impl From<&TemperatureProfile> for ProfileSpec {
    fn from(profile: &TemperatureProfile) -> Self {
        let pieces = profile
            .segments
            .iter()
            .map(|s| match &s.piece {
                Piece::Constant(v) => PieceSpec::Constant {
                    start: Some(s.start),
                    end: Some(s.end),
                    value: *v,
                },
                Piece::Sinusoid {
                    mean,
                    amplitude,
                    omega,
                    phase,
                } => PieceSpec::Sinusoid {
                    start: Some(s.start),
                    end: Some(s.end),
                    mean: *mean,
                    amplitude: *amplitude,
                    omega: Some(*omega),
                    phase: *phase,
                },
                Piece::RootSinusoid {
                    mean,
                    amplitude,
                    omega,
                    phase,
                } => PieceSpec::RootSinusoid {
                    start: Some(s.start),
                    end: Some(s.end),
                    mean: *mean,
                    amplitude: *amplitude,
                    omega: Some(*omega),
                    phase: *phase,
                },
                Piece::Sampled(knots) => PieceSpec::Sampled {
                    start: Some(s.start),
                    end: Some(s.end),
                    knots: knots.iter().map(|&(t, v)| [t, v]).collect(),
                },
            })
            .collect();
        ProfileSpec {
            period: profile.period,
            pieces,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn carnot() -> TemperatureProfile {
        TemperatureProfile::carnot(4.0, 1.0, 1.0).unwrap()
    }

    /// Trapezoid rule on a uniform grid; independent of the Gauss path.
    fn trapezoid(profile: &TemperatureProfile, f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let p = profile.period();
        let h = p / n as f64;
        // Periodic integrand: the trapezoid rule reduces to a plain sum.
        (0..n).map(|k| f(profile.eval(k as f64 * h))).sum::<f64>() * h
    }

    #[test]
    fn carnot_evaluates_right_limits() {
        let c = carnot();
        assert_eq!(c.eval(0.25), 4.0);
        assert_eq!(c.eval(0.5), 1.0);
        assert_eq!(c.eval_left(0.5), 4.0);
        assert_eq!(c.eval(0.0), 4.0);
        assert_eq!(c.eval_left(0.0), 1.0);
        assert_eq!(c.eval(1.0), 4.0);
        assert_eq!(c.jump_times(), &[0.5]);
        assert!(c.jumps_at_period_boundary());
    }

    #[test]
    fn constant_profile_is_flat() {
        let c = TemperatureProfile::constant(2.0, 3.0).unwrap();
        for t in [-7.1, 0.0, 0.3, 2.999, 12.0] {
            assert_eq!(c.eval(t), 2.0);
        }
        assert!(c.jump_times().is_empty());
        assert!(!c.jumps_at_period_boundary());
    }

    #[test]
    fn periodic_extension() {
        let s = TemperatureProfile::sinusoid(2.5, 1.5, 1.0).unwrap();
        for k in 0..50 {
            let t = 0.0137 * k as f64;
            assert!((s.eval(t + 1.0) - s.eval(t)).abs() < 1e-14);
            assert!((s.eval(t - 3.0) - s.eval(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_nonpositive_and_gapped_profiles() {
        assert!(TemperatureProfile::sinusoid(1.0, 1.0, 1.0).is_err());
        assert!(TemperatureProfile::sinusoid(1.0, -1.2, 1.0).is_err());
        assert!(TemperatureProfile::constant(0.0, 1.0).is_err());
        assert!(TemperatureProfile::carnot(4.0, -1.0, 1.0).is_err());
        let gap = TemperatureProfile::new(
            1.0,
            vec![
                Segment { start: 0.0, end: 0.4, piece: Piece::Constant(1.0) },
                Segment { start: 0.5, end: 1.0, piece: Piece::Constant(1.0) },
            ],
        );
        assert!(gap.is_err());
        assert!(TemperatureProfile::sampled(vec![(0.0, 1.0), (0.5, -0.1), (1.0, 1.0)], 1.0).is_err());
    }

    #[test]
    fn sinusoid_minimum_found_inside_segment() {
        // Minimum at ωt = π falls inside [0.25, 0.75] only.
        let seg = Segment {
            start: 0.25,
            end: 0.75,
            piece: Piece::Sinusoid { mean: 1.0, amplitude: 1.0, omega: std::f64::consts::TAU, phase: 0.0 },
        };
        assert_eq!(seg.piece.minimum(seg.start, seg.end), 0.0);
        assert!((seg.piece.minimum(0.0, 0.2) - (1.0 + (0.4 * std::f64::consts::PI).cos())).abs() < 1e-15);
    }

    #[test]
    fn carnot_sqrt_integral() {
        let v = carnot().integrate_functional(f64::sqrt, 0.0, 1.0).unwrap();
        assert!((v - 1.5).abs() < 1e-14);
    }

    #[test]
    fn flat_sinusoid_integrates_to_mean() {
        let s = TemperatureProfile::sinusoid(1.0, 0.0, 1.0).unwrap();
        let v = s.integrate_functional(|t| t, 0.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sinusoid_sqrt_integral_matches_trapezoid_oracle() {
        let s = TemperatureProfile::sinusoid(2.5, 1.5, 1.0).unwrap();
        let oracle = trapezoid(&s, f64::sqrt, 10_000_000);
        let v = s.integrate_functional(f64::sqrt, 0.0, 1.0).unwrap();
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
    }

    #[test]
    fn polynomial_exact_on_constant_piece() {
        let c = TemperatureProfile::constant(1.7, 2.0).unwrap();
        for deg in 0..=31 {
            let v = c.integrate_functional(|t| t.powi(deg), 0.0, 2.0).unwrap();
            let exact = 2.0 * 1.7f64.powi(deg);
            assert!(((v - exact) / exact).abs() < 1e-13);
        }
    }

    #[test]
    fn integral_over_shifted_period_is_invariant() {
        let profiles = [
            carnot(),
            TemperatureProfile::sinusoid(2.5, 1.5, 1.0).unwrap(),
            TemperatureProfile::sampled(vec![(0.0, 1.0), (0.3, 3.0), (0.8, 2.0), (1.0, 1.0)], 1.0).unwrap(),
        ];
        for p in &profiles {
            let base = p.integrate_functional(f64::sqrt, 0.0, 1.0).unwrap();
            for s in [0.1, 0.5, 0.77, -2.3] {
                let shifted = p.integrate_functional(f64::sqrt, s, s + 1.0).unwrap();
                assert!(((shifted - base) / base).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn carnot_moments() {
        let m = carnot().moments().unwrap();
        assert!((m.mean_t - 2.5).abs() < 1e-14);
        assert!((m.mean_sqrt_t - 1.5).abs() < 1e-14);
        assert!((m.var_sqrt_t - 0.25).abs() < 1e-14);
        assert!(m.mu3_sqrt_t.abs() < 1e-12);
        assert!((m.mean_t32 - 4.5).abs() < 1e-14);
    }

    #[test]
    fn constant_moments_vanish() {
        let m = TemperatureProfile::constant(3.3, 1.0).unwrap().moments().unwrap();
        assert!(m.var_sqrt_t.abs() < 1e-12);
        assert!(m.mu3_sqrt_t.abs() < 1e-12);
    }

    #[test]
    fn sinusoid_variance_matches_trapezoid_oracle() {
        let s = TemperatureProfile::sinusoid(2.5, 1.5, 1.0).unwrap();
        let n = 1_000_000;
        let mean_t = trapezoid(&s, |t| t, n);
        let mean_sqrt = trapezoid(&s, f64::sqrt, n);
        let oracle = mean_t - mean_sqrt * mean_sqrt;
        let m = s.moments().unwrap();
        assert!((m.var_sqrt_t - oracle).abs() < 1e-9, "{} vs {oracle}", m.var_sqrt_t);
        assert!((m.var_sqrt_t - (m.mean_t - m.mean_sqrt_t.powi(2))).abs() < 1e-14);
    }

    #[test]
    fn spec_roundtrip_and_defaults() {
        let json = r#"{"period": 2.0, "pieces": [
            {"kind": "constant", "value": 3.0, "end": 1.0},
            {"kind": "sampled", "knots": [[1.0, 1.0], [1.5, 2.0], [2.0, 3.0]]}
        ]}"#;
        let spec: ProfileSpec = serde_json::from_str(json).unwrap();
        let p = TemperatureProfile::try_from(&spec).unwrap();
        assert_eq!(p.eval(0.5), 3.0);
        assert!((p.eval(1.25) - 1.5).abs() < 1e-15);
        assert_eq!(p.jump_times(), &[1.0]);
        assert!(!p.jumps_at_period_boundary());
        let back = TemperatureProfile::try_from(&ProfileSpec::from(&p)).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn root_sinusoid_has_symmetric_square_root() {
        let p = TemperatureProfile::root_sinusoid(1.5, 0.5, 2.0).unwrap();
        let (lo, hi) = p.range();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 4.0).abs() < 1e-12, "{lo} {hi}");
        let m = p.moments().unwrap();
        assert!((m.mean_sqrt_t - 1.5).abs() < 1e-12);
        assert!((m.var_sqrt_t - 0.125).abs() < 1e-12);
        assert!(m.mu3_sqrt_t.abs() < 1e-12);
        // mean T = 1.5² + 0.5²/2
        assert!((m.mean_t - 2.375).abs() < 1e-12);
        assert!((p.drive_frequency() - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        let q = p.scaled(4.0).unwrap();
        assert!((q.eval(0.3) - 4.0 * p.eval(0.3)).abs() < 1e-12);

        let json = r#"{"period": 2.0, "pieces": [{"kind": "root_sinusoid", "mean": 1.5, "amplitude": 0.5}]}"#;
        let spec: ProfileSpec = serde_json::from_str(json).unwrap();
        assert_eq!(TemperatureProfile::try_from(&spec).unwrap(), p);
        assert_eq!(TemperatureProfile::try_from(&ProfileSpec::from(&p)).unwrap(), p);
    }

    #[test]
    fn spec_rejects_unknown_keys() {
        let json = r#"{"period": 1.0, "pieces": [{"kind": "constant", "value": 1.0, "colour": 2}]}"#;
        assert!(serde_json::from_str::<ProfileSpec>(json).is_err());
        let json = r#"{"period": 1.0, "pieces": [], "extra": 1}"#;
        assert!(serde_json::from_str::<ProfileSpec>(json).is_err());
    }

    #[test]
    fn two_level_detection() {
        let c = TemperatureProfile::two_level(4.0, 1.0, 2.0, 0.9).unwrap();
        let tl = c.two_level_structure().unwrap();
        assert_eq!((tl.hot, tl.cold), (4.0, 1.0));
        assert_eq!(tl.hot_intervals, vec![(0.0, 1.8)]);
        assert!(TemperatureProfile::constant(1.0, 1.0).unwrap().two_level_structure().is_none());
        assert!(TemperatureProfile::staircase(&[1.0, 2.0, 3.0], 1.0).unwrap().two_level_structure().is_none());
    }
}
