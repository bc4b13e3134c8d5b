use heatengine::acceptance::{run_suite, SuiteOptions};
use heatengine::dynamics::{integrate_full, OrbitOptions};
use heatengine::energetics::cycle_work;
use heatengine::montecarlo::{equipartition_diagnostic, simulate, EnsembleStats, Estimate};
use heatengine::ode::OdeOptions;
use heatengine::sweeps::{friction_sweep, steady_state, temperature_ratio_sweep, SweepPoint};
use heatengine::synthesis::{
    efficiency_at_max_power, fixed_power_protocol, fixed_power_sigma, max_efficiency_at_power, max_power_protocol,
    max_power_sigma, max_power_value, power_grid, solve_mu, tradeoff_curve,
};
use heatengine::{CovarianceState, EngineParams, Error, Execution, Protocol, TemperatureProfile};
use serde::Serialize;

use crate::config::{RunConfig, StartState, SweepAxis};
use crate::output::Output;
use crate::CliError;

fn params_for(cfg: &RunConfig, profile: &TemperatureProfile) -> Result<EngineParams, CliError> {
    cfg.params.build(Some(profile.period()))
}

fn build_protocol(profile: &TemperatureProfile, params: &EngineParams, power: Option<f64>) -> Result<Protocol, CliError> {
    Ok(match power {
        Some(p) => fixed_power_protocol(profile, params, p)?,
        None => max_power_protocol(profile, params)?,
    })
}

#[derive(Serialize)]
struct ProtocolRow {
    t: f64,
    q: f64,
    temperature: f64,
    sigma_v: f64,
}

#[derive(Serialize)]
struct SynthesisSummary {
    max_power: f64,
    power: f64,
    /// Undefined (null) for a bath without temperature fluctuations.
    efficiency: Option<f64>,
    efficiency_at_max_power: Option<f64>,
    mu: Option<f64>,
    /// Power of the synthesized Σ_v evaluated by quadrature.
    power_check: f64,
}

fn unless_degenerate(r: heatengine::Result<f64>) -> Result<Option<f64>, CliError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateProfile { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn synthesize(cfg: &RunConfig) -> Result<(), CliError> {
    let profile = cfg.first_profile()?;
    let params = params_for(cfg, &profile)?;
    let eta_star = unless_degenerate(efficiency_at_max_power(&profile))?;
    let max_power = if eta_star.is_some() { max_power_value(&profile, &params)? } else { 0.0 };
    let power = cfg.synthesize.power;
    let protocol = build_protocol(&profile, &params, power)?;
    let sigma = match power {
        Some(p) => fixed_power_sigma(&profile, &params, p)?,
        None => max_power_sigma(&profile, &params)?,
    };
    let n = cfg.synthesize.points;
    let t_f = profile.period();
    let rows: Vec<ProtocolRow> = (0..n)
        .map(|k| {
            let t = t_f * k as f64 / n as f64;
            ProtocolRow {
                t,
                q: protocol.eval(t),
                temperature: profile.eval(t),
                sigma_v: sigma.eval(t),
            }
        })
        .collect();
    let target = power.unwrap_or(max_power);
    let mu = match power {
        Some(p) if p < max_power => Some(solve_mu(&profile, &params, p)?),
        _ => None,
    };
    let summary = SynthesisSummary {
        max_power,
        power: target,
        efficiency: unless_degenerate(max_efficiency_at_power(&profile, &params, target))?,
        efficiency_at_max_power: eta_star,
        mu,
        power_check: sigma.power(&params)?,
    };
    let out = Output::create(cfg)?;
    out.table("protocol", &rows)?;
    out.json("summary", &summary)?;
    let efficiency = summary.efficiency.map_or("undefined".into(), |e| format!("{e:.6}"));
    println!("max power {:.6e}, power {:.6e}, efficiency {efficiency}", summary.max_power, summary.power);
    Ok(())
}

#[derive(Serialize)]
struct TradeoffRow<'a> {
    profile: &'a str,
    power: f64,
    power_fraction: f64,
    efficiency: f64,
    mu: Option<f64>,
}

pub fn tradeoff(cfg: &RunConfig, exec: Execution) -> Result<(), CliError> {
    if cfg.profiles.is_empty() {
        return Err(CliError::Config("tradeoff needs at least one profile".into()));
    }
    let mut rows = Vec::new();
    for (entry, profile) in cfg.profiles.iter().zip(cfg.profiles()) {
        let profile = profile?;
        let params = params_for(cfg, &profile)?;
        let max_power = max_power_value(&profile, &params)?;
        let powers = power_grid(max_power, cfg.tradeoff.grid, cfg.tradeoff.fraction);
        for p in tradeoff_curve(&profile, &params, &powers, exec)? {
            rows.push(TradeoffRow {
                profile: &entry.name,
                power: p.power,
                power_fraction: p.power_fraction,
                efficiency: p.efficiency,
                mu: p.mu,
            });
        }
        println!("{}: max power {max_power:.6e}", entry.name);
    }
    let out = Output::create(cfg)?;
    out.table("tradeoff", &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    x: f64,
    protocol: &'static str,
    power: Option<f64>,
    max_power: Option<f64>,
    power_ratio: Option<f64>,
    eta_u: Option<f64>,
    predicted_efficiency: Option<f64>,
    equipartition_max: Option<f64>,
    cycles: Option<usize>,
    error: Option<String>,
}

impl From<&SweepPoint> for SweepRow {
    fn from(p: &SweepPoint) -> Self {
        let r = p.outcome.as_ref().ok();
        SweepRow {
            x: p.x,
            protocol: p.protocol.name(),
            power: r.map(|r| r.ledger.power),
            max_power: r.map(|r| r.max_power),
            power_ratio: r.map(|r| r.power_ratio()),
            eta_u: r.and_then(|r| r.ledger.eta_u),
            predicted_efficiency: r.map(|r| r.predicted_efficiency),
            equipartition_max: r.map(|r| r.equipartition_max),
            cycles: r.map(|r| r.cycles),
            error: p.outcome.as_ref().err().map(ToString::to_string),
        }
    }
}

/// Points that fail are recorded with their error; the command itself
/// succeeds unless every point failed.
pub fn sweep(cfg: &RunConfig, exec: Execution) -> Result<(), CliError> {
    let s = &cfg.sweep;
    let mut points = match s.axis {
        SweepAxis::Friction => {
            let profile = cfg.first_profile()?;
            let params = params_for(cfg, &profile)?;
            friction_sweep(&profile, &params, &s.values, &s.protocols, &s.options, exec)
        }
        SweepAxis::TemperatureRatio => {
            let period = cfg.profiles.first().map(|_| cfg.profile(0)).transpose()?.map(|p| p.period());
            let params = cfg.params.build(period)?;
            temperature_ratio_sweep(s.mean, &params, &s.values, &s.protocols, &s.options, exec)
        }
    };
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.protocol.name().cmp(b.protocol.name())));
    let rows: Vec<SweepRow> = points.iter().map(SweepRow::from).collect();
    let out = Output::create(cfg)?;
    out.table("sweep", &rows)?;
    for row in &rows {
        match (&row.error, row.power_ratio) {
            (Some(e), _) => eprintln!("{:>10.3e} {:<22} failed: {e}", row.x, row.protocol),
            (None, Some(r)) => println!("{:>10.3e} {:<22} P/P* = {r:.4}", row.x, row.protocol),
            _ => {}
        }
    }
    if let Some(first) = points.iter().find_map(|p| p.outcome.as_ref().err()) {
        if points.iter().all(|p| p.outcome.is_err()) {
            return Err(first.clone().into());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct NodeRow {
    t: f64,
    q: f64,
    sigma_x: f64,
    sigma_x_se: f64,
    sigma_xv: f64,
    sigma_xv_se: f64,
    sigma_v: f64,
    sigma_v_se: f64,
    ode_sigma_x: f64,
    ode_sigma_xv: f64,
    ode_sigma_v: f64,
    z_sigma_x: f64,
    z_sigma_xv: f64,
    z_sigma_v: f64,
}

#[derive(Serialize)]
struct MonteCarloSummary {
    n_particles: usize,
    n_cycles_measure: usize,
    steps_per_cycle: usize,
    work: Estimate,
    heat: Estimate,
    heat_stratonovich: Estimate,
    power: Estimate,
    first_law_residual: f64,
    equipartition_max: f64,
    /// Power of the covariance equations over the measured cycles.
    ode_power: f64,
    power_z: f64,
    max_abs_z: f64,
}

fn z(e: Estimate, reference: f64) -> f64 {
    if e.se > 0.0 {
        (e.mean - reference) / e.se
    } else {
        0.0
    }
}

/// Covariance equations chained over the same cycles as the ensemble:
/// node states averaged over the measured cycles, and the mean power.
fn ode_reference(
    profile: &TemperatureProfile,
    protocol: &Protocol,
    params: &EngineParams,
    start: CovarianceState,
    stats: &EnsembleStats,
    discard: usize,
) -> Result<(Vec<CovarianceState>, f64), CliError> {
    let opts = OdeOptions::default();
    let mut state = start;
    for _ in 0..discard {
        state = integrate_full(profile, protocol, params, state, &opts)?.next_start();
    }
    let cycles = stats.n_cycles_measure;
    let mut sums = vec![[0.0; 3]; stats.nodes.len()];
    let mut work = 0.0;
    for _ in 0..cycles {
        let traj = integrate_full(profile, protocol, params, state, &opts)?;
        for (sum, node) in sums.iter_mut().zip(&stats.nodes) {
            let s = traj.state(node.t);
            sum[0] += s.sigma_x;
            sum[1] += s.sigma_xv;
            sum[2] += s.sigma_v;
        }
        work += cycle_work(&traj);
        state = traj.next_start();
    }
    let n = cycles as f64;
    let states = sums
        .iter()
        .map(|s| CovarianceState {
            sigma_x: s[0] / n,
            sigma_xv: s[1] / n,
            sigma_v: s[2] / n,
        })
        .collect();
    Ok((states, -work / (n * profile.period())))
}

pub fn montecarlo(cfg: &RunConfig, exec: Execution) -> Result<(), CliError> {
    let mc = &cfg.montecarlo;
    let profile = cfg.first_profile()?;
    let params = params_for(cfg, &profile)?;
    let mut protocol = build_protocol(&profile, &params, mc.power)?;
    if let Some(width) = mc.jump_ramp {
        protocol = protocol.with_smoothed_jumps(width)?;
    }
    let start = match mc.start {
        StartState::Orbit => steady_state(&profile, &protocol, &params, &OrbitOptions::default())?.state0,
        StartState::Equilibrium => {
            CovarianceState::equilibrium(profile.average(|t| t)?, protocol.eval(0.0), &params)
        }
    };
    let stats = simulate(&profile, &protocol, &params, start, &mc.ensemble, exec)?;
    let (reference, ode_power) =
        ode_reference(&profile, &protocol, &params, start, &stats, mc.ensemble.n_cycles_discard)?;

    let rows: Vec<NodeRow> = stats
        .nodes
        .iter()
        .zip(&reference)
        .map(|(n, r)| NodeRow {
            t: n.t,
            q: n.q,
            sigma_x: n.sigma_x.mean,
            sigma_x_se: n.sigma_x.se,
            sigma_xv: n.sigma_xv.mean,
            sigma_xv_se: n.sigma_xv.se,
            sigma_v: n.sigma_v.mean,
            sigma_v_se: n.sigma_v.se,
            ode_sigma_x: r.sigma_x,
            ode_sigma_xv: r.sigma_xv,
            ode_sigma_v: r.sigma_v,
            z_sigma_x: z(n.sigma_x, r.sigma_x),
            z_sigma_xv: z(n.sigma_xv, r.sigma_xv),
            z_sigma_v: z(n.sigma_v, r.sigma_v),
        })
        .collect();
    let max_abs_z = rows
        .iter()
        .flat_map(|r| [r.z_sigma_x, r.z_sigma_xv, r.z_sigma_v])
        .fold(0.0, |a: f64, b| a.max(b.abs()));
    let summary = MonteCarloSummary {
        n_particles: stats.n_particles,
        n_cycles_measure: stats.n_cycles_measure,
        steps_per_cycle: stats.steps_per_cycle,
        work: stats.work,
        heat: stats.heat,
        heat_stratonovich: stats.heat_stratonovich,
        power: stats.power,
        first_law_residual: stats.first_law_residual,
        equipartition_max: equipartition_diagnostic(&stats, params.m).max,
        ode_power,
        power_z: z(stats.power, ode_power),
        max_abs_z,
    };
    let out = Output::create(cfg)?;
    out.table("nodes", &rows)?;
    out.json("summary", &summary)?;
    println!(
        "power {:.6e} ± {:.1e} (ODE {:.6e}, z = {:.2}); largest node |z| = {:.2}",
        summary.power.mean, summary.power.se, ode_power, summary.power_z, max_abs_z
    );
    Ok(())
}

#[derive(Serialize)]
struct CheckRow {
    id: u8,
    name: &'static str,
    passed: bool,
    detail: String,
}

/// Runs the acceptance checks. Returns whether all of them passed.
pub fn validate(cfg: &RunConfig, exec: Execution, ids: &[u8], particles: Option<usize>) -> Result<bool, CliError> {
    if let Some(&bad) = ids.iter().find(|&&id| !(1..=10).contains(&id)) {
        return Err(CliError::Config(format!("no check {bad}; checks are numbered 1 to 10")));
    }
    let mut opts = SuiteOptions {
        exec,
        ..Default::default()
    };
    if let Some(n) = particles {
        opts.mc_particles = n;
    }
    let checks = run_suite(ids, &opts, |c| println!("{c}"));
    let rows: Vec<CheckRow> = checks
        .iter()
        .map(|c| CheckRow {
            id: c.id,
            name: c.name,
            passed: c.passed,
            detail: c.detail.clone(),
        })
        .collect();
    let passed = rows.iter().filter(|r| r.passed).count();
    println!("validate: {passed} passed, {} failed", rows.len() - passed);
    let out = Output::create(cfg)?;
    out.table("validation", &rows)?;
    Ok(passed == rows.len())
}
