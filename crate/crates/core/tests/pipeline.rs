//! End-to-end runs through the public API: profile description in, cycle
//! ledger out. Reference values are computed here from the bath levels.

use heatengine::dynamics::{find_periodic_orbit, OrbitOptions};
use heatengine::energetics::{cycle_uptake_and_efficiency, DEFAULT_PERIODIC_TOL};
use heatengine::montecarlo::{simulate, McConfig};
use heatengine::synthesis::{fixed_power_protocol, max_power_protocol, max_power_value};
use heatengine::{CovarianceState, EngineParams, Execution, Model, ProfileSpec, TemperatureProfile};
use proptest::prelude::*;

/// Var(√T), mean √T and μ₃(√T) of equal-duration levels.
fn level_moments(levels: &[f64]) -> (f64, f64, f64) {
    let n = levels.len() as f64;
    let roots: Vec<f64> = levels.iter().map(|t| t.sqrt()).collect();
    let mean = roots.iter().sum::<f64>() / n;
    let var = roots.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let mu3 = roots.iter().map(|r| (r - mean).powi(3)).sum::<f64>() / n;
    (var, mean, mu3)
}

fn reduced_ledger(profile: &TemperatureProfile, params: &EngineParams, power: Option<f64>) -> heatengine::energetics::CycleLedger {
    let protocol = match power {
        None => max_power_protocol(profile, params).unwrap(),
        Some(p) => fixed_power_protocol(profile, params, p).unwrap(),
    };
    let guess = CovarianceState::equilibrium(profile.average(|t| t).unwrap(), protocol.eval(0.0), params);
    let orbit = find_periodic_orbit(Model::Reduced, profile, &protocol, params, guess, &OrbitOptions::default()).unwrap();
    cycle_uptake_and_efficiency(&orbit.trajectory, DEFAULT_PERIODIC_TOL).unwrap()
}

#[test]
fn staircase_from_json_reaches_its_maximum_power() {
    let json = r#"{"period": 2.0, "pieces": [
        {"kind": "constant", "value": 3.0, "end": 0.5},
        {"kind": "constant", "value": 1.0, "end": 1.0},
        {"kind": "constant", "value": 2.0, "end": 1.5},
        {"kind": "constant", "value": 0.5}
    ]}"#;
    let spec: ProfileSpec = serde_json::from_str(json).unwrap();
    let profile = TemperatureProfile::try_from(&spec).unwrap();
    let params = EngineParams::new(1.5, 0.7, 1.2, 2.0).unwrap();
    let (var, mean, mu3) = level_moments(&[3.0, 1.0, 2.0, 0.5]);
    let expected = params.gamma * params.k_b / params.m * var;
    assert!((max_power_value(&profile, &params).unwrap() - expected).abs() < 1e-12);

    let ledger = reduced_ledger(&profile, &params, None);
    assert!((ledger.power - expected).abs() < 1e-7 * expected, "{} vs {expected}", ledger.power);
    let eta = 1.0 / (2.0 + mu3 / (var * mean));
    assert!((ledger.eta_u.unwrap() - eta).abs() < 1e-7, "{:?} vs {eta}", ledger.eta_u);
    // First law over the cycle: uptake splits into work out and dissipation.
    assert!((ledger.uptake - (-ledger.work + ledger.dissipation)).abs() < 1e-9);
}

#[test]
fn seeded_ensembles_do_not_depend_on_scheduling() {
    let profile = TemperatureProfile::carnot(2.0, 1.0, 1.0).unwrap();
    let params = EngineParams::new(1.0, 1.0, 1.0, 1.0).unwrap().with_q0(100.0).unwrap();
    let protocol = max_power_protocol(&profile, &params).unwrap().with_smoothed_jumps(0.05).unwrap();
    let start = CovarianceState::equilibrium(1.5, protocol.eval(0.0), &params);
    let cfg = McConfig {
        n_particles: 2500,
        dt: 5e-4,
        n_nodes: 10,
        seed: 99,
        ..Default::default()
    };
    let a = simulate(&profile, &protocol, &params, start, &cfg, Execution::Parallel).unwrap();
    let b = simulate(&profile, &protocol, &params, start, &cfg, Execution::Sequential).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reduced_cycles_deliver_the_requested_power(
        levels in prop::collection::vec(0.3f64..5.0, 2..6),
        fraction in 0.05f64..0.95,
        gamma in 0.2f64..3.0,
    ) {
        let (var, _, _) = level_moments(&levels);
        prop_assume!(var > 1e-3);
        let profile = TemperatureProfile::staircase(&levels, 1.0).unwrap();
        let params = EngineParams::new(1.0, gamma, 1.0, 1.0).unwrap();
        let target = fraction * gamma * var;
        let ledger = reduced_ledger(&profile, &params, Some(target));
        prop_assert!((ledger.power - target).abs() < 1e-7 * gamma * var, "{} vs {}", ledger.power, target);
        let eta = ledger.eta_u.unwrap();
        prop_assert!(eta > 0.0 && eta < 1.0);
    }
}
