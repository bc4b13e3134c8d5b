//! Ensemble simulation of the underdamped Langevin equation with pathwise
//! work and heat.
//!
//! m dv = −q(t) x dt − γ v dt + √(2γ k_B T(t)) dB, dx = v dt.
//!
//! Work is counted when the stiffness changes at fixed position
//! (½ Δq x²); heat is whatever energy change remains, so the first law
//! holds per particle by construction.

use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64Dxsm;
use serde::{Deserialize, Serialize};

use crate::dynamics::CovarianceState;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::params::EngineParams;
use crate::profiles::TemperatureProfile;
use crate::synthesis::Protocol;

/// Particles handled by one work item. Fixed, so results do not depend on
/// the number of threads.
const CHUNK: usize = 1000;

/// Positions or velocities beyond this magnitude abort the run.
const OVERFLOW_GUARD: f64 = 1e150;

/// Discretization of the Langevin equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit Euler–Maruyama: position and velocity both advance from the
    /// old state.
    EulerMaruyama,
    /// Euler–Maruyama velocity update followed by a position update with
    /// the new velocity (symplectic Euler). Keeps the trap energy from
    /// drifting at a rate ∝ (q/m) dt, which explicit Euler–Maruyama does.
    #[default]
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub n_particles: usize,
    /// Largest allowed time step; the actual step divides the period evenly.
    pub dt: f64,
    pub n_cycles_discard: usize,
    pub n_cycles_measure: usize,
    pub seed: u64,
    /// Sampling points per period for the covariance trajectory.
    pub n_nodes: usize,
    pub scheme: Scheme,
    /// Each step's noise is the normalized sum of this many standard
    /// normals. A run with step h and k substeps consumes the same numbers
    /// as a run with step h/k and one, which couples the two for
    /// step-size comparisons.
    pub noise_substeps: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_particles: 10_000,
            dt: 1e-4,
            n_cycles_discard: 0,
            n_cycles_measure: 1,
            seed: 0,
            n_nodes: 100,
            scheme: Scheme::default(),
            noise_substeps: 1,
        }
    }
}

impl McConfig {
    /// Checks counts and dt ≤ 0.01·min(√(m/q_max), m/γ).
    pub fn validate(&self, protocol: &Protocol, params: &EngineParams) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_particles < 1000 {
            return bad(format!("n_particles must be at least 1000, got {}", self.n_particles));
        }
        if self.n_cycles_measure == 0 {
            return bad("n_cycles_measure must be positive".into());
        }
        if self.n_nodes == 0 {
            return bad("n_nodes must be positive".into());
        }
        if self.noise_substeps == 0 {
            return bad("noise_substeps must be positive".into());
        }
        let limit = 0.01 * (params.m / protocol.max_stiffness(1024)).sqrt().min(params.m / params.gamma);
        if !(self.dt > 0.0 && self.dt <= limit) {
            return bad(format!("dt must lie in (0, {limit:e}], got {}", self.dt));
        }
        Ok(())
    }

    /// Steps per period: the smallest multiple of `n_nodes` with step ≤ dt.
    pub fn steps_per_cycle(&self, period: f64) -> usize {
        let per_node = (period / (self.dt * self.n_nodes as f64)).ceil().max(1.0) as usize;
        per_node * self.n_nodes
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_sums(sum: f64, sum_sq: f64, n: usize) -> Self {
        let n = n as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// Whether `value` lies within `k` standard errors.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.se
    }
}

/// Empirical covariance at one phase of the cycle, averaged over the
/// measured cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub t: f64,
    pub q: f64,
    pub sigma_x: Estimate,
    pub sigma_xv: Estimate,
    pub sigma_v: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_particles: usize,
    pub n_cycles_measure: usize,
    pub steps_per_cycle: usize,
    pub nodes: Vec<NodeStats>,
    /// Work per cycle (received by the particle).
    pub work: Estimate,
    /// Heat per cycle from the energy balance.
    pub heat: Estimate,
    /// Heat per cycle from the Stratonovich sum of (−γv + noise)∘v dt,
    /// with v at the step midpoint.
    pub heat_stratonovich: Estimate,
    /// −work / t_f.
    pub power: Estimate,
    /// Largest per-particle |ΔE − 𝒲 − 𝒬| / |ΔE| among particles whose
    /// energy change is at least 1e-3 of their energy scale.
    pub first_law_residual: f64,
}

/// Per-node moment sums, indexed [node][x, v, xx, xv, vv, xx², xv², vv²].
type Moments = Vec<[f64; 8]>;

struct Accumulator {
    n: usize,
    moments: Moments,
    /// [work, work², heat, heat², strat, strat²]
    energetics: [f64; 6],
    first_law: f64,
}

impl Accumulator {
    fn new(n_nodes: usize) -> Self {
        Self {
            n: 0,
            moments: vec![[0.0; 8]; n_nodes],
            energetics: [0.0; 6],
            first_law: 0.0,
        }
    }

    fn merge(&mut self, other: &Self) {
        self.n += other.n;
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            for k in 0..8 {
                a[k] += b[k];
            }
        }
        for k in 0..6 {
            self.energetics[k] += other.energetics[k];
        }
        self.first_law = self.first_law.max(other.first_law);
    }
}

/// Quantities shared by every particle: stiffness and noise amplitude on
/// the step grid.
struct Schedule {
    h: f64,
    /// q(t_n) for n = 0..=N.
    q: Vec<f64>,
    /// q(t_n) h/m.
    spring: Vec<f64>,
    /// √(2γ k_B T h)/m at each step midpoint.
    kick: Vec<f64>,
    stride: usize,
}

impl Schedule {
    fn new(profile: &TemperatureProfile, protocol: &Protocol, params: &EngineParams, n_steps: usize, stride: usize) -> Self {
        let h = profile.period() / n_steps as f64;
        let q: Vec<f64> = (0..=n_steps).map(|n| protocol.eval(n as f64 * h)).collect();
        let spring = q[..n_steps].iter().map(|q| q * h / params.m).collect();
        let kick = (0..n_steps)
            .map(|n| {
                let temp = profile.eval((n as f64 + 0.5) * h);
                (2.0 * params.gamma * params.k_b * temp * h).sqrt() / params.m
            })
            .collect();
        Self {
            h,
            q,
            spring,
            kick,
            stride,
        }
    }
}

fn energy(x: f64, v: f64, q: f64, m: f64) -> f64 {
    0.5 * (m * v * v + q * x * x)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator of particle `index`: PCG stream `index`, with a starting state
/// hashed from (seed, index) so that streams do not share a state.
fn particle_rng(seed: u64, index: usize) -> Pcg64Dxsm {
    let a = mix(seed ^ mix(index as u64));
    let b = mix(a ^ 0x5851_f42d_4c95_7f2d);
    Pcg64Dxsm::new(((a as u128) << 64) | b as u128, index as u128)
}

/// Draws (x, v) from the zero-mean Gaussian with covariance `s`.
fn draw(s: &CovarianceState, rng: &mut Pcg64Dxsm) -> (f64, f64) {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    let sx = s.sigma_x.sqrt();
    let x = sx * a;
    let v = s.sigma_xv / sx * a + (s.determinant() / s.sigma_x).sqrt() * b;
    (x, v)
}

/// Particles advanced together. Their updates are independent, which
/// hides the latency of each particle's serial dependency chain.
const LANES: usize = 8;

/// Compensated sums for a group of particles.
#[derive(Clone, Copy)]
struct LaneSum {
    s: [f64; LANES],
    c: [f64; LANES],
}

impl LaneSum {
    const ZERO: Self = Self {
        s: [0.0; LANES],
        c: [0.0; LANES],
    };

    #[inline(always)]
    fn add(&mut self, x: &[f64; LANES]) {
        for j in 0..LANES {
            let (s, x) = (self.s[j], x[j]);
            let t = s + x;
            self.c[j] += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
            self.s[j] = t;
        }
    }

    fn value(&self, j: usize) -> f64 {
        self.s[j] + self.c[j]
    }
}

/// Work, balance heat and Stratonovich heat accumulated per particle.
#[derive(Clone, Copy)]
struct PathEnergetics {
    work: LaneSum,
    heat: LaneSum,
    strat: LaneSum,
}

impl PathEnergetics {
    const ZERO: Self = Self {
        work: LaneSum::ZERO,
        heat: LaneSum::ZERO,
        strat: LaneSum::ZERO,
    };
}

struct Group<'a> {
    /// Index of the first particle.
    first: usize,
    /// Lanes holding real particles; the rest run as padding.
    active: usize,
    params: &'a EngineParams,
    schedule: &'a Schedule,
    scheme: Scheme,
    substeps: usize,
    rngs: [Pcg64Dxsm; LANES],
    x: [f64; LANES],
    v: [f64; LANES],
}

impl Group<'_> {
    /// One period; calls `node(k, lane, x, v)` at the start of each node interval.
    fn cycle(&mut self, cycle_start: f64, mut node: impl FnMut(usize, usize, f64, f64), path: &mut PathEnergetics) -> Result<()> {
        let s = self.schedule;
        let m = self.params.m;
        let h = s.h;
        let damp = self.params.gamma * h / m;
        let semi = self.scheme == Scheme::SemiImplicit;
        let sub = self.substeps;
        let norm = 1.0 / (sub as f64).sqrt();
        let (mut x, mut v) = (self.x, self.v);
        let mut xi = [0.0; LANES];
        for k in 0..s.kick.len() / s.stride {
            for j in 0..self.active {
                if !(x[j].abs() < OVERFLOW_GUARD && v[j].abs() < OVERFLOW_GUARD) {
                    return Err(Error::UnstableStep {
                        t: cycle_start + (k * s.stride) as f64 * h,
                        particle: self.first + j,
                    });
                }
                node(k, j, x[j], v[j]);
            }
            // Plain partial sums over one node interval, folded into the
            // compensated totals once per interval.
            let (mut dw, mut dq, mut ds) = ([0.0; LANES], [0.0; LANES], [0.0; LANES]);
            for n in k * s.stride..(k + 1) * s.stride {
                let (q, dq_step, spring, kick) = (s.q[n], s.q[n + 1] - s.q[n], s.spring[n], s.kick[n]);
                for (z, rng) in xi.iter_mut().zip(self.rngs.iter_mut()) {
                    *z = if sub == 1 {
                        StandardNormal.sample(rng)
                    } else {
                        (0..sub).map(|_| -> f64 { StandardNormal.sample(rng) }).sum::<f64>() * norm
                    };
                }
                for j in 0..LANES {
                    let (x0, v0) = (x[j], v[j]);
                    let noise = kick * xi[j];
                    let v1 = v0 - spring * x0 - damp * v0 + noise;
                    let x1 = x0 + if semi { v1 } else { v0 } * h;
                    dq[j] += 0.5 * (m * (v1 * v1 - v0 * v0) + q * (x1 * x1 - x0 * x0));
                    let v_mid = 0.5 * (v0 + v1);
                    ds[j] += m * (noise - damp * v_mid) * v_mid;
                    dw[j] += 0.5 * dq_step * x1 * x1;
                    x[j] = x1;
                    v[j] = v1;
                }
            }
            path.heat.add(&dq);
            path.strat.add(&ds);
            path.work.add(&dw);
        }
        self.x = x;
        self.v = v;
        Ok(())
    }
}

struct Run<'a> {
    profile: &'a TemperatureProfile,
    params: &'a EngineParams,
    cfg: &'a McConfig,
    initial: CovarianceState,
    schedule: Schedule,
}

impl Run<'_> {
    fn chunk(&self, c: usize) -> Result<Accumulator> {
        let cfg = self.cfg;
        let n_nodes = cfg.n_nodes;
        let mut acc = Accumulator::new(n_nodes);
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(cfg.n_particles);
        let m = self.params.m;
        let q_start = self.schedule.q[0];
        let period = self.profile.period();
        let cycles = cfg.n_cycles_measure as f64;
        let mut per_node = vec![[[0.0; 5]; LANES]; n_nodes];
        for first in (lo..hi).step_by(LANES) {
            let active = (hi - first).min(LANES);
            let mut rngs: [Pcg64Dxsm; LANES] = std::array::from_fn(|j| particle_rng(cfg.seed, first + j));
            let mut x = [0.0; LANES];
            let mut v = [0.0; LANES];
            for j in 0..LANES {
                (x[j], v[j]) = draw(&self.initial, &mut rngs[j]);
            }
            let mut g = Group {
                first,
                active,
                params: self.params,
                schedule: &self.schedule,
                scheme: cfg.scheme,
                substeps: cfg.noise_substeps,
                rngs,
                x,
                v,
            };
            let mut scratch = PathEnergetics::ZERO;
            for k in 0..cfg.n_cycles_discard {
                g.cycle(k as f64 * period, |_, _, _, _| {}, &mut scratch)?;
            }
            let e0: [f64; LANES] = std::array::from_fn(|j| energy(g.x[j], g.v[j], q_start, m));
            let mut path = PathEnergetics::ZERO;
            per_node.iter_mut().for_each(|r| *r = [[0.0; 5]; LANES]);
            for k in 0..cfg.n_cycles_measure {
                let t0 = (cfg.n_cycles_discard + k) as f64 * period;
                g.cycle(
                    t0,
                    |i, j, x, v| {
                        let r = &mut per_node[i][j];
                        r[0] += x;
                        r[1] += v;
                        r[2] += x * x;
                        r[3] += x * v;
                        r[4] += v * v;
                    },
                    &mut path,
                )?;
            }
            for j in 0..active {
                for (a, lanes) in acc.moments.iter_mut().zip(&per_node) {
                    let r = &lanes[j];
                    for k in 0..5 {
                        a[k] += r[k] / cycles;
                    }
                    for k in 0..3 {
                        let mean = r[2 + k] / cycles;
                        a[5 + k] += mean * mean;
                    }
                }
                let (w, q, st) = (path.work.value(j), path.heat.value(j), path.strat.value(j));
                for (k, val) in [w, q, st].into_iter().enumerate() {
                    let per_cycle = val / cycles;
                    acc.energetics[2 * k] += per_cycle;
                    acc.energetics[2 * k + 1] += per_cycle * per_cycle;
                }
                let e1 = energy(g.x[j], g.v[j], q_start, m);
                let delta = e1 - e0[j];
                if delta.abs() >= 1e-3 * (e0[j] + e1) {
                    acc.first_law = acc.first_law.max((delta - w - q).abs() / delta.abs());
                }
                acc.n += 1;
            }
        }
        Ok(acc)
    }

    fn finish(&self, acc: Accumulator) -> EnsembleStats {
        let n = acc.n;
        let nf = n as f64;
        let stride = self.schedule.stride;
        let nodes = acc
            .moments
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let (mx, mv) = (a[0] / nf, a[1] / nf);
                // Central moments; the standard error is that of the raw
                // second moment, the mean correction being O(1/n).
                let central = |sum: f64, sum_sq: f64, shift: f64| {
                    let raw = Estimate::from_sums(sum, sum_sq, n);
                    Estimate {
                        mean: raw.mean - shift,
                        se: raw.se,
                    }
                };
                NodeStats {
                    t: (k * stride) as f64 * self.schedule.h,
                    q: self.schedule.q[k * stride],
                    sigma_x: central(a[2], a[5], mx * mx),
                    sigma_xv: central(a[3], a[6], mx * mv),
                    sigma_v: central(a[4], a[7], mv * mv),
                }
            })
            .collect();
        let e = acc.energetics;
        let work = Estimate::from_sums(e[0], e[1], n);
        let period = self.profile.period();
        EnsembleStats {
            n_particles: n,
            n_cycles_measure: self.cfg.n_cycles_measure,
            steps_per_cycle: self.schedule.kick.len(),
            nodes,
            work,
            heat: Estimate::from_sums(e[2], e[3], n),
            heat_stratonovich: Estimate::from_sums(e[4], e[5], n),
            power: Estimate {
                mean: -work.mean / period,
                se: work.se / period,
            },
            first_law_residual: acc.first_law,
        }
    }
}

/// Simulates `cfg.n_particles` independent particles started from the
/// Gaussian with covariance `initial` at t = 0⁺.
///
/// Particle i draws from PCG stream i with a state hashed from
/// (`cfg.seed`, i), and particles are
/// merged in fixed chunks in index order, so the result is bit-identical
/// for any `exec`.
pub fn simulate(
    profile: &TemperatureProfile,
    protocol: &Protocol,
    params: &EngineParams,
    initial: CovarianceState,
    cfg: &McConfig,
    exec: Execution,
) -> Result<EnsembleStats> {
    params.validate()?;
    params.check_profile(profile)?;
    if (protocol.period() - profile.period()).abs() > 1e-12 * profile.period() {
        return Err(Error::InvalidParams(format!(
            "protocol period {} differs from profile period {}",
            protocol.period(),
            profile.period()
        )));
    }
    cfg.validate(protocol, params)?;
    if !initial.is_positive_definite() {
        return Err(Error::InvalidConfig("initial covariance is not positive definite".into()));
    }
    let n_steps = cfg.steps_per_cycle(profile.period());
    let run = Run {
        profile,
        params,
        cfg,
        initial,
        schedule: Schedule::new(profile, protocol, params, n_steps, n_steps / cfg.n_nodes),
    };
    let n_chunks = cfg.n_particles.div_ceil(CHUNK);
    let chunks = exec.map_range(n_chunks, |c| run.chunk(c));
    let mut total = Accumulator::new(cfg.n_nodes);
    for chunk in chunks {
        total.merge(&chunk?);
    }
    Ok(run.finish(total))
}

/// Equipartition residual |qΣ_x − mΣ_v|/(mΣ_v) at one node, with a standard
/// error propagated from the node estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquipartitionPoint {
    pub t: f64,
    pub residual: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equipartition {
    pub points: Vec<EquipartitionPoint>,
    pub max: f64,
}

pub fn equipartition_diagnostic(stats: &EnsembleStats, m: f64) -> Equipartition {
    let points: Vec<EquipartitionPoint> = stats
        .nodes
        .iter()
        .map(|n| {
            let kinetic = m * n.sigma_v.mean;
            let potential = n.q * n.sigma_x.mean;
            let residual = (potential - kinetic).abs() / kinetic;
            let se = ((n.q * n.sigma_x.se).powi(2) + (potential / kinetic * m * n.sigma_v.se).powi(2)).sqrt() / kinetic;
            EquipartitionPoint { t: n.t, residual, se }
        })
        .collect();
    let max = points.iter().map(|p| p.residual).fold(0.0, f64::max);
    Equipartition { points, max }
}
