use super::*;
use crate::synthesis::{fixed_power_protocol, fixed_power_sigma, max_power_protocol, max_power_sigma, max_power_value};

fn unit_params() -> EngineParams {
    EngineParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
}

fn carnot() -> TemperatureProfile {
    TemperatureProfile::carnot(4.0, 1.0, 1.0).unwrap()
}

fn opts() -> OdeOptions {
    OdeOptions::default()
}

#[test]
fn reduced_equilibrium_is_stationary() {
    let profile = TemperatureProfile::constant(2.0, 1.0).unwrap();
    let params = unit_params().with_q0(50.0).unwrap();
    let q = Protocol::constant(50.0, 1.0);
    let tr = integrate_reduced(&profile, &q, &params, 2.0, &opts()).unwrap();
    for s in tr.uniform(20) {
        assert!((s.state.sigma_v - 2.0).abs() < 1e-12);
        assert!((s.state.sigma_x - 2.0 / 50.0).abs() < 1e-14);
    }
}

#[test]
fn reduced_relaxation_half_life() {
    let params = EngineParams::new(2.0, 0.5, 1.5, 4.0).unwrap();
    let profile = TemperatureProfile::constant(3.0, 4.0).unwrap();
    let q = Protocol::constant(10.0, 4.0);
    let eq = params.k_b * 3.0 / params.m;
    let tr = integrate_reduced(&profile, &q, &params, 2.0 * eq, &opts()).unwrap();
    // Excess over equilibrium decays as e^{−γt/m}; find where it halves.
    let excess = |t: f64| tr.state(t).sigma_v / eq - 1.0 - 0.5;
    let root = crate::roots::bisect(excess, 0.0, 4.0, excess(0.0), excess(4.0), 1e-14);
    let expected = params.m / params.gamma * std::f64::consts::LN_2;
    assert!(((root.x - expected) / expected).abs() < 1e-6, "{} vs {expected}", root.x);
    for s in tr.uniform(16) {
        let exact = eq * (1.0 + (-params.gamma * s.t / params.m).exp());
        assert!(((s.state.sigma_v - exact) / exact).abs() < 1e-8);
    }
}

#[test]
fn step_count_grows_no_faster_than_fourth_order() {
    let params = unit_params();
    let profile = TemperatureProfile::constant(1.0, 1.0).unwrap();
    let q = Protocol::linear_response(40.0, 0.3, std::f64::consts::TAU, 0.0, 1.0);
    let state = CovarianceState::new(0.05, 0.01, 2.0).unwrap();
    let coarse = integrate_full(&profile, &q, &params, state, &OdeOptions::default().with_rtol(1e-6)).unwrap();
    let fine = integrate_full(&profile, &q, &params, state, &OdeOptions::default().with_rtol(1e-9)).unwrap();
    let ratio = fine.step_count() as f64 / coarse.step_count() as f64;
    assert!(ratio < 1000f64.powf(0.25), "step ratio {ratio}");
    let a = coarse.end();
    let b = fine.end();
    assert!(((a.sigma_v - b.sigma_v) / b.sigma_v).abs() < 1e-4);
}

#[test]
fn optimal_pair_is_periodic() {
    let params = unit_params().with_q0(25.0).unwrap();
    for profile in [carnot(), TemperatureProfile::sinusoid(2.5, 1.5, 1.0).unwrap()] {
        let sigma = max_power_sigma(&profile, &params).unwrap();
        let q = max_power_protocol(&profile, &params).unwrap();
        let tr = integrate_reduced(&profile, &q, &params, sigma.eval(0.0), &opts()).unwrap();
        let back = tr.next_start().sigma_v;
        assert!(((back - sigma.eval(0.0)) / sigma.eval(0.0)).abs() < 1e-8);
    }
}

#[test]
fn reduced_jump_rescales_by_square_root_of_stiffness_ratio() {
    let params = unit_params().with_q0(25.0).unwrap();
    let q = max_power_protocol(&carnot(), &params).unwrap();
    let tr = integrate_reduced(&carnot(), &q, &params, 3.0, &opts()).unwrap();
    let jumps = tr.jumps();
    assert_eq!(jumps.len(), 2);
    let j = &jumps[0];
    assert_eq!(j.t, 0.5);
    assert_eq!(j.after.sigma_v, j.before.sigma_v * (j.q_plus / j.q_minus).sqrt());
    assert!((j.before.sigma_v - 3.0).abs() < 1e-9);
    assert!((j.after.sigma_v - 1.5).abs() < 1e-9);
    // Left and right limits straddle the jump.
    assert!((tr.at_left(0.5).state.sigma_v - 3.0).abs() < 1e-9);
    assert!((tr.at(0.5).state.sigma_v - 1.5).abs() < 1e-9);
}

#[test]
fn full_jump_leaves_covariance_unchanged() {
    let params = unit_params().with_q0(25.0).unwrap();
    let q = max_power_protocol(&carnot(), &params).unwrap();
    let start = CovarianceState::equipartition(3.0, 25.0, 1.0);
    let tr = integrate_full(&carnot(), &q, &params, start, &opts()).unwrap();
    for j in tr.jumps() {
        assert_eq!(j.before, j.after);
        assert!(j.q_plus != j.q_minus);
    }
}

#[test]
fn closed_loop_reproduces_synthesized_sigma() {
    let params = unit_params().with_q0(30.0).unwrap();
    let profiles = [
        carnot(),
        TemperatureProfile::sinusoid(2.5, 1.5, 1.0).unwrap(),
        TemperatureProfile::sampled(vec![(0.0, 1.0), (0.3, 3.5), (0.6, 2.0), (1.0, 1.0)], 1.0).unwrap(),
    ];
    for profile in profiles {
        let pmax = max_power_value(&profile, &params).unwrap();
        let mut pairs = vec![(
            max_power_sigma(&profile, &params).unwrap(),
            max_power_protocol(&profile, &params).unwrap(),
        )];
        for frac in [0.0, 0.4, 0.9] {
            pairs.push((
                fixed_power_sigma(&profile, &params, frac * pmax).unwrap(),
                fixed_power_protocol(&profile, &params, frac * pmax).unwrap(),
            ));
        }
        for (sigma, q) in pairs {
            let tr = integrate_reduced(&profile, &q, &params, sigma.eval(0.0), &opts()).unwrap();
            let mut sup: f64 = 0.0;
            for k in 1..997 {
                let t = k as f64 / 997.0;
                let target = sigma.eval(t);
                sup = sup.max(((tr.state(t).sigma_v - target) / target).abs());
            }
            for &t in profile.jump_times() {
                let left = sigma.eval_left(t);
                let right = sigma.eval(t);
                sup = sup.max(((tr.at_left(t).state.sigma_v - left) / left).abs());
                sup = sup.max(((tr.at(t).state.sigma_v - right) / right).abs());
            }
            assert!(sup < 1e-7, "{:?}: sup {sup}", sigma.form());
        }
    }
}

/// e^{Mt} by scaling and squaring of a Taylor series.
fn expm(m: [[f64; 3]; 3], t: f64) -> [[f64; 3]; 3] {
    let norm: f64 = m.iter().flatten().map(|v| v.abs()).sum::<f64>() * t;
    let squarings = norm.log2().ceil().max(0.0) as i32 + 4;
    let s = t / 2f64.powi(squarings);
    let a: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
    let mul = |x: &[[f64; 3]; 3], y: &[[f64; 3]; 3]| {
        let mut z = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                z[i][j] = (0..3).map(|k| x[i][k] * y[k][j]).sum();
            }
        }
        z
    };
    let a_arr: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| a[i][j]));
    let mut result = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut term = result;
    for k in 1..30 {
        term = mul(&term, &a_arr);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul(&result, &result);
    }
    result
}

#[test]
fn full_relaxation_matches_matrix_exponential() {
    let params = EngineParams::new(1.0, 0.7, 1.0, 3.0).unwrap();
    let (temp, stiffness) = (2.0, 9.0);
    let profile = TemperatureProfile::constant(temp, 3.0).unwrap();
    let q = Protocol::constant(stiffness, 3.0);
    let eq = CovarianceState::equilibrium(temp, stiffness, &params);
    let start = CovarianceState::new(eq.sigma_x * 1.5, 0.2, eq.sigma_v * 0.6).unwrap();
    let tr = integrate_full(&profile, &q, &params, start, &opts()).unwrap();
    let (g, m) = (params.gamma, params.m);
    let generator = [
        [0.0, 2.0, 0.0],
        [-stiffness / m, -g / m, 1.0],
        [0.0, -2.0 * stiffness / m, -2.0 * g / m],
    ];
    let d0 = [start.sigma_x - eq.sigma_x, start.sigma_xv, start.sigma_v - eq.sigma_v];
    let size = d0.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for t in [0.3, 1.0, 2.2, 3.0] {
        let e = expm(generator, t);
        let d: [f64; 3] = std::array::from_fn(|i| (0..3).map(|k| e[i][k] * d0[k]).sum());
        let s = tr.state(t);
        let got = [s.sigma_x - eq.sigma_x, s.sigma_xv, s.sigma_v - eq.sigma_v];
        for i in 0..3 {
            assert!((got[i] - d[i]).abs() < 1e-4 * size * (-g * t / m).exp(), "t={t} i={i}");
        }
    }
    // Slowest decay rate of the generator is γ/m.
    let late = tr.state(3.0);
    let dev = (late.sigma_v - eq.sigma_v).abs() + (stiffness * (late.sigma_x - eq.sigma_x)).abs();
    assert!(dev < 10.0 * size * stiffness * (-g * 3.0 / m).exp());
}

#[test]
fn full_equilibrium_is_stationary() {
    let params = unit_params();
    let profile = TemperatureProfile::constant(1.5, 1.0).unwrap();
    let q = Protocol::constant(20.0, 1.0);
    let eq = CovarianceState::equilibrium(1.5, 20.0, &params);
    let tr = integrate_full(&profile, &q, &params, eq, &opts()).unwrap();
    let end = tr.end();
    assert!(((end.sigma_x - eq.sigma_x) / eq.sigma_x).abs() < 1e-9);
    assert!(end.sigma_xv.abs() < 1e-12);
    assert!(((end.sigma_v - eq.sigma_v) / eq.sigma_v).abs() < 1e-9);
}

#[test]
fn first_law_along_full_trajectory() {
    let params = unit_params().with_q0(100.0).unwrap();
    let profile = TemperatureProfile::sinusoid(2.0, 1.0, 1.0).unwrap();
    let q = max_power_protocol(&profile, &params).unwrap();
    let start = CovarianceState::new(0.03, 0.02, 1.5).unwrap();
    let tr = integrate_full(&profile, &q, &params, start, &opts()).unwrap();
    let work = tr.integrate(&|s| 0.5 * s.q * s.log_rate * s.state.sigma_x);
    let heat = tr.integrate(&|s| params.gamma * (params.k_b * s.temp / params.m - s.state.sigma_v));
    let e0 = tr.at(0.0).state.energy(tr.at(0.0).q, params.m);
    let end = tr.at(1.0);
    let e1 = end.state.energy(end.q, params.m);
    let delta = e1 - e0;
    assert!((delta - work - heat).abs() < 1e-8 * (work.abs() + heat.abs()), "{delta} vs {}", work + heat);
}

#[test]
fn positive_definiteness_along_trajectory() {
    let params = EngineParams::new(1.0, 2.0, 1.0, 1.0).unwrap().with_q0(4.0).unwrap();
    let q = max_power_protocol(&carnot(), &params).unwrap();
    let start = CovarianceState::new(1e-3, 0.0, 10.0).unwrap();
    let tr = integrate_full(&carnot(), &q, &params, start, &opts()).unwrap();
    assert!(tr.nodes().iter().all(|s| s.state.is_positive_definite()));
}

#[test]
fn rejects_bad_inputs() {
    let params = unit_params();
    let q = Protocol::constant(1.0, 1.0);
    assert!(integrate_reduced(&carnot(), &q, &params, -1.0, &opts()).is_err());
    let singular = CovarianceState {
        sigma_x: 1.0,
        sigma_xv: 1.0,
        sigma_v: 1.0,
    };
    assert!(integrate_full(&carnot(), &q, &params, singular, &opts()).is_err());
    let wrong_period = Protocol::constant(1.0, 2.0);
    assert!(integrate_reduced(&carnot(), &wrong_period, &params, 1.0, &opts()).is_err());
}

#[test]
fn oversized_full_integration_is_refused_up_front() {
    // 10⁷ radians of phase per period cannot fit a 2·10⁶ step budget.
    let params = unit_params().with_q0(1e14).unwrap();
    let q = Protocol::constant(1e14, 1.0);
    let start = CovarianceState::equilibrium(1.0, 1e14, &params);
    let err = integrate_full(&carnot(), &q, &params, start, &opts()).unwrap_err();
    assert!(matches!(err, Error::StepBudget { estimated: 20_000_000, max_steps: 2_000_000 }), "{err:?}");
    let guess = find_periodic_orbit(Model::Full, &carnot(), &q, &params, start, &OrbitOptions::default());
    assert!(matches!(guess, Err(Error::StepBudget { .. })));
}

#[test]
fn orbit_from_optimal_start_needs_one_map() {
    let params = unit_params().with_q0(25.0).unwrap();
    let sigma = max_power_sigma(&carnot(), &params).unwrap();
    let q = max_power_protocol(&carnot(), &params).unwrap();
    let guess = CovarianceState::equipartition(sigma.eval(0.0), 25.0, 1.0);
    let orbit = find_periodic_orbit(Model::Reduced, &carnot(), &q, &params, guess, &OrbitOptions::default()).unwrap();
    assert_eq!(orbit.cycles, 1);
    assert!(orbit.residual < 1e-9);
}

#[test]
fn reduced_orbit_from_far_guess() {
    let params = unit_params().with_q0(25.0).unwrap();
    let q = max_power_protocol(&carnot(), &params).unwrap();
    let guess = CovarianceState::equipartition(0.2, 25.0, 1.0);
    for method in [OrbitMethod::Newton, OrbitMethod::FixedPoint] {
        let o = OrbitOptions {
            method,
            ..Default::default()
        };
        let orbit = find_periodic_orbit(Model::Reduced, &carnot(), &q, &params, guess, &o).unwrap();
        assert!((orbit.state0.sigma_v - 3.0).abs() < 1e-7, "{method:?}: {}", orbit.state0.sigma_v);
    }
}

#[test]
fn strongly_damped_full_orbit_converges_quickly() {
    // γ t_f / m = 10: the cycle map contracts by about e^{−10}.
    let params = EngineParams::new(1.0, 10.0, 1.0, 1.0).unwrap().with_q0(400.0).unwrap();
    let profile = TemperatureProfile::sinusoid(2.0, 1.0, 1.0).unwrap();
    let q = max_power_protocol(&profile, &params).unwrap();
    let guess = CovarianceState::equilibrium(2.0, 400.0, &params);
    let fp = OrbitOptions {
        method: OrbitMethod::FixedPoint,
        ..Default::default()
    };
    let a = find_periodic_orbit(Model::Full, &profile, &q, &params, guess, &fp).unwrap();
    assert!(a.cycles < 20, "{} cycles", a.cycles);
    let b = find_periodic_orbit(Model::Full, &profile, &q, &params, guess, &OrbitOptions::default()).unwrap();
    assert!(((a.state0.sigma_v - b.state0.sigma_v) / b.state0.sigma_v).abs() < 1e-8);
    assert!(b.residual < 1e-9);
}

#[test]
fn budget_exhaustion_is_reported() {
    let params = EngineParams::new(1.0, 1e-3, 1.0, 1.0).unwrap().with_q0(100.0).unwrap();
    let profile = TemperatureProfile::sinusoid(2.0, 1.0, 1.0).unwrap();
    let q = max_power_protocol(&profile, &params).unwrap();
    let o = OrbitOptions {
        method: OrbitMethod::FixedPoint,
        max_cycles: 5,
        ..Default::default()
    };
    let guess = CovarianceState::equilibrium(1.0, 100.0, &params);
    let err = find_periodic_orbit(Model::Full, &profile, &q, &params, guess, &o).unwrap_err();
    assert!(matches!(err, Error::NoConvergence { cycles: 5, .. }), "{err:?}");
}

#[test]
fn low_friction_orbit_keeps_equipartition() {
    let params = EngineParams::new(1.0, 1.0, 1.0, 10.0).unwrap().with_friction_ratio(1e-3).unwrap();
    let profile = TemperatureProfile::sinusoid(2.5, 1.5, 10.0).unwrap();
    let q = max_power_protocol(&profile, &params).unwrap();
    let guess = CovarianceState::equilibrium(2.5, params.q0, &params);
    let orbit = find_periodic_orbit(Model::Full, &profile, &q, &params, guess, &OrbitOptions::default()).unwrap();
    let worst = orbit
        .trajectory
        .uniform(2000)
        .iter()
        .map(|s| s.state.equipartition_residual(s.q, params.m))
        .fold(0.0, f64::max);
    assert!(worst < 1e-2, "equipartition residual {worst}");
}
