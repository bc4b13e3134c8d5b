//! Covariance dynamics of the trapped particle under a protocol q(t) and a
//! bath temperature T(t).
//!
//! Two models share one trajectory type. The reduced model evolves Σ_v
//! alone and assumes equipartition, so Σ_x = mΣ_v/q and Σ_xv = 0 are
//! implied; across a stiffness jump Σ_v is rescaled by √(q⁺/q⁻). The full
//! model evolves (Σ_x, Σ_xv, Σ_v) and a stiffness jump leaves the state
//! untouched.

mod orbit;
#[cfg(test)]
mod tests;

pub use orbit::{find_periodic_orbit, OrbitMethod, OrbitOptions, PeriodicOrbit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, DenseStep, OdeOptions};
use crate::params::EngineParams;
use crate::profiles::{Panel, TemperatureProfile};
use crate::quadrature::GaussRule;
use crate::synthesis::Protocol;

/// Second moments of the zero-mean Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceState {
    pub sigma_x: f64,
    pub sigma_xv: f64,
    pub sigma_v: f64,
}

impl CovarianceState {
    pub fn new(sigma_x: f64, sigma_xv: f64, sigma_v: f64) -> Result<Self> {
        let s = Self {
            sigma_x,
            sigma_xv,
            sigma_v,
        };
        if !s.is_positive_definite() {
            return Err(Error::InvalidParams(format!("covariance {s:?} is not positive definite")));
        }
        Ok(s)
    }

    /// Gibbs state of the trap with stiffness `q` at temperature `temp`.
    pub fn equilibrium(temp: f64, q: f64, params: &EngineParams) -> Self {
        Self {
            sigma_x: params.k_b * temp / q,
            sigma_xv: 0.0,
            sigma_v: params.k_b * temp / params.m,
        }
    }

    /// Equipartition state q Σ_x = m Σ_v with the given Σ_v.
    pub fn equipartition(sigma_v: f64, q: f64, m: f64) -> Self {
        Self {
            sigma_x: m * sigma_v / q,
            sigma_xv: 0.0,
            sigma_v,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.sigma_x * self.sigma_v - self.sigma_xv * self.sigma_xv
    }

    pub fn is_positive_definite(&self) -> bool {
        self.sigma_x > 0.0 && self.sigma_v > 0.0 && self.determinant() > 0.0 && self.determinant().is_finite()
    }

    /// Mean energy ½qΣ_x + ½mΣ_v.
    pub fn energy(&self, q: f64, m: f64) -> f64 {
        0.5 * q * self.sigma_x + 0.5 * m * self.sigma_v
    }

    /// |qΣ_x − mΣ_v| / (mΣ_v).
    pub fn equipartition_residual(&self, q: f64, m: f64) -> f64 {
        (q * self.sigma_x - m * self.sigma_v).abs() / (m * self.sigma_v)
    }

    fn to_array(self) -> [f64; 3] {
        [self.sigma_x, self.sigma_xv, self.sigma_v]
    }

    fn from_array(y: [f64; 3]) -> Self {
        Self {
            sigma_x: y[0],
            sigma_xv: y[1],
            sigma_v: y[2],
        }
    }
}

/// Which set of covariance equations is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Reduced,
    Full,
}

/// Drive and physical parameters shared by both models.
#[derive(Clone, Copy)]
pub(crate) struct Drive<'a> {
    pub profile: &'a TemperatureProfile,
    pub protocol: &'a Protocol,
    pub params: &'a EngineParams,
}

impl Drive<'_> {
    fn check(&self) -> Result<()> {
        self.params.check_profile(self.profile)?;
        let p = self.profile.period();
        if (self.protocol.period() - p).abs() > 1e-12 * p {
            return Err(Error::InvalidParams(format!(
                "protocol period {} does not match the profile period {p}",
                self.protocol.period()
            )));
        }
        Ok(())
    }

    /// Oscillator phase ∫√(q/m) dt accumulated over one period, from a
    /// midpoint sum on `n` samples. Infinite if q overflows.
    fn phase(&self, n: usize) -> f64 {
        let p = self.profile.period();
        let h = p / n as f64;
        (0..n)
            .map(|k| (self.protocol.eval((k as f64 + 0.5) * h) / self.params.m).sqrt())
            .sum::<f64>()
            * h
    }

    fn q(&self, panel: &Panel, t: f64) -> f64 {
        self.protocol.eval_on(self.profile, panel, t)
    }

    /// q(t⁺)/q(t⁻) at the right edge of panel `i` (the period end for the last panel).
    fn jump_ratio(&self, i: usize) -> (f64, f64) {
        let panels = self.profile.panels();
        let here = &panels[i];
        let q_minus = self.q(here, here.end);
        let q_plus = if i + 1 < panels.len() {
            self.q(&panels[i + 1], here.end)
        } else {
            self.q(&panels[0], panels[0].start)
        };
        (q_minus, q_plus)
    }
}

/// The ODE side of one model with state dimension `N`.
pub(crate) trait System<const N: usize> {
    const MODEL: Model;
    fn rhs(drive: &Drive, panel: &Panel, t: f64, y: &[f64; N]) -> [f64; N];
    fn jump(y: [f64; N], q_minus: f64, q_plus: f64) -> [f64; N];
    fn admissible(y: &[f64; N]) -> bool;
    fn to_state(y: &[f64; N], q: f64, m: f64) -> CovarianceState;
    fn from_state(s: &CovarianceState) -> [f64; N];
    /// Scales used for relative orbit residuals.
    fn scales(y: &[f64; N]) -> [f64; N];
    fn wrap(steps: Vec<Vec<DenseStep<N>>>) -> StepStore;
    /// Step-size cap keeping explicit steps well inside the stability region.
    fn max_step(_drive: &Drive) -> Option<f64> {
        None
    }
}

pub(crate) struct ReducedSystem;
pub(crate) struct FullSystem;

impl System<1> for ReducedSystem {
    const MODEL: Model = Model::Reduced;

    fn rhs(drive: &Drive, panel: &Panel, t: f64, y: &[f64; 1]) -> [f64; 1] {
        let p = drive.params;
        let temp = drive.profile.eval_on(panel, t);
        let rate = drive.protocol.log_derivative_on(drive.profile, panel, t);
        [y[0] * (0.5 * rate - p.gamma / p.m) + p.gamma * p.k_b / (p.m * p.m) * temp]
    }

    fn jump(y: [f64; 1], q_minus: f64, q_plus: f64) -> [f64; 1] {
        [y[0] * (q_plus / q_minus).sqrt()]
    }

    fn admissible(y: &[f64; 1]) -> bool {
        y[0] > 0.0
    }

    fn to_state(y: &[f64; 1], q: f64, m: f64) -> CovarianceState {
        CovarianceState::equipartition(y[0], q, m)
    }

    fn from_state(s: &CovarianceState) -> [f64; 1] {
        [s.sigma_v]
    }

    fn scales(y: &[f64; 1]) -> [f64; 1] {
        [y[0].abs()]
    }

    fn wrap(steps: Vec<Vec<DenseStep<1>>>) -> StepStore {
        StepStore::Reduced(steps)
    }
}

impl System<3> for FullSystem {
    const MODEL: Model = Model::Full;

    fn rhs(drive: &Drive, panel: &Panel, t: f64, y: &[f64; 3]) -> [f64; 3] {
        let p = drive.params;
        let temp = drive.profile.eval_on(panel, t);
        let q = drive.q(panel, t);
        let (sx, sxv, sv) = (y[0], y[1], y[2]);
        [
            2.0 * sxv,
            sv - q / p.m * sx - p.gamma / p.m * sxv,
            -2.0 * q / p.m * sxv - 2.0 * p.gamma / p.m * sv + 2.0 * p.gamma * p.k_b / (p.m * p.m) * temp,
        ]
    }

    fn jump(y: [f64; 3], _: f64, _: f64) -> [f64; 3] {
        y
    }

    fn admissible(y: &[f64; 3]) -> bool {
        CovarianceState::from_array(*y).is_positive_definite()
    }

    fn to_state(y: &[f64; 3], _: f64, _: f64) -> CovarianceState {
        CovarianceState::from_array(*y)
    }

    fn from_state(s: &CovarianceState) -> [f64; 3] {
        s.to_array()
    }

    fn scales(y: &[f64; 3]) -> [f64; 3] {
        let cross = (y[0].abs() * y[2].abs()).sqrt();
        [y[0].abs(), cross, y[2].abs()]
    }

    fn wrap(steps: Vec<Vec<DenseStep<3>>>) -> StepStore {
        StepStore::Full(steps)
    }

    /// The covariance oscillates at twice the trap frequency; steps are
    /// kept below half a radian of that oscillation at the stiffest point.
    fn max_step(drive: &Drive) -> Option<f64> {
        let q_max = drive.protocol.max_stiffness(1024);
        Some(0.25 * (drive.params.m / q_max).sqrt())
    }
}

/// Dense steps per profile panel.
#[derive(Debug, Clone)]
pub(crate) enum StepStore {
    Reduced(Vec<Vec<DenseStep<1>>>),
    Full(Vec<Vec<DenseStep<3>>>),
}

/// State just before and just after a stiffness jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub t: f64,
    pub q_minus: f64,
    pub q_plus: f64,
    pub before: CovarianceState,
    pub after: CovarianceState,
}

/// Everything known at one instant along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub temp: f64,
    pub q: f64,
    /// q̇/q.
    pub log_rate: f64,
    pub state: CovarianceState,
    /// Time derivative of `state`.
    pub rate: CovarianceState,
}

/// One period of a solution, 0⁺ to t_f⁺.
#[derive(Debug, Clone)]
pub struct Trajectory {
    model: Model,
    profile: TemperatureProfile,
    protocol: Protocol,
    params: EngineParams,
    steps: StepStore,
    jumps: Vec<JumpRecord>,
    start: CovarianceState,
    end: CovarianceState,
    next: CovarianceState,
}

/// Step nodes per profile panel, as produced by an adaptive run.
pub(crate) type StepGrid = Vec<Vec<f64>>;

pub(crate) struct Propagated<const N: usize> {
    /// State at t_f⁺.
    pub y: [f64; N],
    pub steps: Vec<Vec<DenseStep<N>>>,
    pub jumps: Vec<JumpRecord>,
}

impl<const N: usize> Propagated<N> {
    pub fn grid(&self) -> StepGrid {
        self.steps
            .iter()
            .map(|panel| {
                let mut nodes: Vec<f64> = panel.iter().map(|s| s.t).collect();
                if let Some(last) = panel.last() {
                    nodes.push(last.end());
                }
                nodes
            })
            .collect()
    }
}

/// Propagates one period, adaptively or on a frozen step grid.
pub(crate) fn propagate<const N: usize, S: System<N>>(
    drive: &Drive,
    y0: [f64; N],
    opts: &OdeOptions,
    grid: Option<&StepGrid>,
    record: bool,
) -> Result<Propagated<N>> {
    let panels = drive.profile.panels();
    let m = drive.params.m;
    let capped = OdeOptions {
        max_step: match (opts.max_step, S::max_step(drive)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        },
        ..*opts
    };
    let opts = &capped;
    let mut y = y0;
    let mut h = None;
    let mut steps = Vec::new();
    let mut jumps = Vec::new();
    for (i, panel) in panels.iter().enumerate() {
        let f = |t: f64, y: &[f64; N]| S::rhs(drive, panel, t, y);
        let mut rec = Vec::new();
        match grid {
            Some(g) => {
                y = ode::solve_on_grid(&f, &S::admissible, &g[i], y, record.then_some(&mut rec))?;
            }
            None => {
                let sol = ode::solve(
                    &f,
                    &S::admissible,
                    panel.start,
                    panel.end,
                    y,
                    opts,
                    h,
                    record.then_some(&mut rec),
                )?;
                y = sol.y;
                h = Some(sol.h);
            }
        }
        if record {
            steps.push(rec);
        }
        let (q_minus, q_plus) = drive.jump_ratio(i);
        if (q_plus / q_minus - 1.0).abs() > 1e-14 {
            let before = y;
            y = S::jump(y, q_minus, q_plus);
            if record {
                jumps.push(JumpRecord {
                    t: panel.end,
                    q_minus,
                    q_plus,
                    before: S::to_state(&before, q_minus, m),
                    after: S::to_state(&y, q_plus, m),
                });
            }
        }
    }
    Ok(Propagated { y, steps, jumps })
}

/// Lower bound on accepted steps per radian of oscillator phase.
const STEPS_PER_RADIAN: f64 = 2.0;

pub(crate) fn check_start<const N: usize, S: System<N>>(drive: &Drive, y0: &[f64; N], opts: &OdeOptions) -> Result<()> {
    drive.check()?;
    opts.validate()?;
    if !S::admissible(y0) {
        return Err(Error::InvalidParams("initial state is not admissible".into()));
    }
    if S::MODEL == Model::Full {
        // The adaptive solver takes a handful of steps per radian; refuse
        // up front rather than exhaust memory on the dense record.
        let estimated = STEPS_PER_RADIAN * drive.phase(4096);
        if !(estimated <= opts.max_steps as f64) {
            return Err(Error::StepBudget {
                estimated: estimated.min(usize::MAX as f64) as usize,
                max_steps: opts.max_steps,
            });
        }
    }
    Ok(())
}

pub(crate) fn into_trajectory<const N: usize, S: System<N>>(
    drive: &Drive,
    y0: [f64; N],
    run: Propagated<N>,
) -> Trajectory {
    let panels = drive.profile.panels();
    let m = drive.params.m;
    let first = &panels[0];
    let last = &panels[panels.len() - 1];
    let y_end = run
        .steps
        .last()
        .and_then(|s| s.last())
        .map(|s| s.eval(s.end()))
        .unwrap_or(y0);
    Trajectory {
        model: S::MODEL,
        profile: drive.profile.clone(),
        protocol: drive.protocol.clone(),
        params: *drive.params,
        start: S::to_state(&y0, drive.q(first, first.start), m),
        end: S::to_state(&y_end, drive.q(last, last.end), m),
        next: S::to_state(&run.y, drive.q(first, first.start), m),
        steps: S::wrap(run.steps),
        jumps: run.jumps,
    }
}

fn record_trajectory<const N: usize, S: System<N>>(
    drive: &Drive,
    y0: [f64; N],
    opts: &OdeOptions,
) -> Result<Trajectory> {
    check_start::<N, S>(drive, &y0, opts)?;
    let run = propagate::<N, S>(drive, y0, opts, None, true)?;
    Ok(into_trajectory::<N, S>(drive, y0, run))
}

/// Integrates the reduced variance equation over one period from Σ_v(0⁺) = `sigma_v0`.
pub fn integrate_reduced(
    profile: &TemperatureProfile,
    protocol: &Protocol,
    params: &EngineParams,
    sigma_v0: f64,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    if !(sigma_v0 > 0.0 && sigma_v0.is_finite()) {
        return Err(Error::InvalidParams(format!("sigma_v0 must be positive, got {sigma_v0}")));
    }
    let drive = Drive {
        profile,
        protocol,
        params,
    };
    record_trajectory::<1, ReducedSystem>(&drive, [sigma_v0], opts)
}

/// Integrates the three covariance equations over one period from `state0` at 0⁺.
pub fn integrate_full(
    profile: &TemperatureProfile,
    protocol: &Protocol,
    params: &EngineParams,
    state0: CovarianceState,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    if !state0.is_positive_definite() {
        return Err(Error::InvalidParams(format!("initial covariance {state0:?} is not positive definite")));
    }
    let drive = Drive {
        profile,
        protocol,
        params,
    };
    record_trajectory::<3, FullSystem>(&drive, state0.to_array(), opts)
}

/// Integrates either model; the reduced model reads only `state0.sigma_v`.
pub fn integrate(
    model: Model,
    profile: &TemperatureProfile,
    protocol: &Protocol,
    params: &EngineParams,
    state0: CovarianceState,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    match model {
        Model::Reduced => integrate_reduced(profile, protocol, params, state0.sigma_v, opts),
        Model::Full => integrate_full(profile, protocol, params, state0, opts),
    }
}

fn locate<const N: usize>(steps: &[Vec<DenseStep<N>>], panel: usize, t: f64) -> &DenseStep<N> {
    let list = &steps[panel];
    let k = list.partition_point(|s| s.end() < t).min(list.len() - 1);
    &list[k]
}

impl Trajectory {
    pub fn model(&self) -> Model {
        self.model
    }

    pub fn profile(&self) -> &TemperatureProfile {
        &self.profile
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn period(&self) -> f64 {
        self.profile.period()
    }

    /// State at 0⁺.
    pub fn start(&self) -> CovarianceState {
        self.start
    }

    /// State at t_f⁻, before any jump at the period boundary.
    pub fn end(&self) -> CovarianceState {
        self.end
    }

    /// State at t_f⁺, the image of [`Trajectory::start`] under the cycle map.
    pub fn next_start(&self) -> CovarianceState {
        self.next
    }

    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    /// Relative mismatch between the states at 0⁺ and t_f⁺.
    pub fn periodicity_residual(&self) -> f64 {
        match self.model {
            Model::Reduced => relative_residual::<1, ReducedSystem>(
                &ReducedSystem::from_state(&self.start),
                &ReducedSystem::from_state(&self.next),
            ),
            Model::Full => relative_residual::<3, FullSystem>(&self.start.to_array(), &self.next.to_array()),
        }
    }

    /// Fails with [`Error::NotPeriodic`] if the boundary states differ by more than `tol`.
    pub fn check_periodic(&self, tol: f64) -> Result<()> {
        let mismatch = self.periodicity_residual();
        if mismatch > tol {
            return Err(Error::NotPeriodic { mismatch });
        }
        Ok(())
    }

    fn panel_index(&self, t: f64, left: bool) -> usize {
        let panels = self.profile.panels();
        let k = if left {
            panels.partition_point(|p| p.end < t)
        } else {
            panels.partition_point(|p| p.end <= t)
        };
        k.min(panels.len() - 1)
    }

    fn sample_on(&self, panel_idx: usize, t: f64) -> Sample {
        let panel = &self.profile.panels()[panel_idx];
        let drive = Drive {
            profile: &self.profile,
            protocol: &self.protocol,
            params: &self.params,
        };
        let temp = self.profile.eval_on(panel, t);
        let q = drive.q(panel, t);
        let log_rate = self.protocol.log_derivative_on(&self.profile, panel, t);
        let m = self.params.m;
        match &self.steps {
            StepStore::Reduced(steps) => {
                let y = locate(steps, panel_idx, t).eval(t);
                let dv = ReducedSystem::rhs(&drive, panel, t, &y)[0];
                Sample {
                    t,
                    temp,
                    q,
                    log_rate,
                    state: CovarianceState::equipartition(y[0], q, m),
                    rate: CovarianceState {
                        sigma_x: m * (dv - y[0] * log_rate) / q,
                        sigma_xv: 0.0,
                        sigma_v: dv,
                    },
                }
            }
            StepStore::Full(steps) => {
                let y = locate(steps, panel_idx, t).eval(t);
                let d = FullSystem::rhs(&drive, panel, t, &y);
                Sample {
                    t,
                    temp,
                    q,
                    log_rate,
                    state: CovarianceState::from_array(y),
                    rate: CovarianceState::from_array(d),
                }
            }
        }
    }

    /// Sample at `t` ∈ [0, t_f], right limit at jumps (t_f itself gives t_f⁻).
    pub fn at(&self, t: f64) -> Sample {
        let t = t.clamp(0.0, self.period());
        self.sample_on(self.panel_index(t, false), t)
    }

    /// Sample at `t` ∈ (0, t_f], left limit at jumps.
    pub fn at_left(&self, t: f64) -> Sample {
        let t = t.clamp(0.0, self.period());
        self.sample_on(self.panel_index(t, true), t)
    }

    pub fn state(&self, t: f64) -> CovarianceState {
        self.at(t).state
    }

    /// Samples at every accepted step boundary, with both sides of each jump.
    pub fn nodes(&self) -> Vec<Sample> {
        let n_panels = self.profile.panels().len();
        let mut out = Vec::new();
        for i in 0..n_panels {
            let bounds: Vec<(f64, f64)> = match &self.steps {
                StepStore::Reduced(s) => s[i].iter().map(|d| (d.t, d.end())).collect(),
                StepStore::Full(s) => s[i].iter().map(|d| (d.t, d.end())).collect(),
            };
            for (k, &(a, b)) in bounds.iter().enumerate() {
                out.push(self.sample_on(i, a));
                if k + 1 == bounds.len() {
                    out.push(self.sample_on(i, b));
                }
            }
        }
        out
    }

    /// Samples on `n + 1` uniformly spaced times from 0 to t_f.
    pub fn uniform(&self, n: usize) -> Vec<Sample> {
        let p = self.period();
        (0..=n).map(|k| self.at(p * k as f64 / n as f64)).collect()
    }

    /// ∫₀^{t_f} g(sample) dt, with an 8-point Gauss rule on every accepted step.
    pub fn integrate(&self, g: &dyn Fn(&Sample) -> f64) -> f64 {
        self.integrate_over(0.0, self.period(), g)
    }

    /// ∫_a^b g(sample) dt for 0 ≤ a ≤ b ≤ t_f.
    pub fn integrate_over(&self, a: f64, b: f64, g: &dyn Fn(&Sample) -> f64) -> f64 {
        let rule = GaussRule::order8();
        let n_panels = self.profile.panels().len();
        let mut total = 0.0;
        for i in 0..n_panels {
            let bounds: Vec<(f64, f64)> = match &self.steps {
                StepStore::Reduced(s) => s[i].iter().map(|d| (d.t, d.end())).collect(),
                StepStore::Full(s) => s[i].iter().map(|d| (d.t, d.end())).collect(),
            };
            for (lo, hi) in bounds {
                let (lo, hi) = (lo.max(a), hi.min(b));
                if hi > lo {
                    total += rule.apply(lo, hi, |t| g(&self.sample_on(i, t))).0;
                }
            }
        }
        total
    }

    /// Number of accepted ODE steps.
    pub fn step_count(&self) -> usize {
        match &self.steps {
            StepStore::Reduced(s) => s.iter().map(Vec::len).sum(),
            StepStore::Full(s) => s.iter().map(Vec::len).sum(),
        }
    }
}

pub(crate) fn relative_residual<const N: usize, S: System<N>>(x: &[f64; N], fx: &[f64; N]) -> f64 {
    let scales = S::scales(x);
    (0..N)
        .map(|i| (fx[i] - x[i]).abs() / scales[i].max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}
