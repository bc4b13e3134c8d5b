use super::*;

#[test]
fn oracle_recovers_the_two_level_multiplier() {
    // On a two-level profile with equal halves the discrete problem is exact:
    // the bins resolve T without error, so μ solves the same equation as
    // the continuous problem, written out by hand here.
    let profile = carnot().unwrap();
    let params = unit_params();
    let power = 0.1;
    let residual = |mu: f64| {
        let a = 0.5 * (4.0 * (4.0 + mu)).sqrt() + 0.5 * (1.0 + mu).sqrt();
        let b = 0.5 * (4.0 / (4.0 + mu)).sqrt() + 0.5 * (1.0 / (1.0 + mu)).sqrt();
        a * b - (2.5 - power)
    };
    let got = discrete_optimum(&profile, &params, power, 1000).unwrap();
    assert!(residual(got.mu).abs() < 1e-10, "{got:?}");
    assert!(got.efficiency > 0.5 && got.efficiency < 1.0);
}

#[test]
fn oracle_rejects_zero_power() {
    assert!(discrete_optimum(&carnot().unwrap(), &unit_params(), 0.0, 1000).is_err());
}

#[test]
fn random_profiles_are_valid_and_reproducible() {
    let mut a = Pcg64Dxsm::new(1, 1);
    let mut b = Pcg64Dxsm::new(1, 1);
    for _ in 0..50 {
        let p = random_profile(&mut a).unwrap();
        assert_eq!(p, random_profile(&mut b).unwrap());
        assert!(p.moments().unwrap().var_sqrt_t > 0.0);
    }
}

#[test]
fn tradeoff_grid_ends() {
    let g = tradeoff_grid(2.0);
    assert_eq!(g.len(), TRADEOFF_POINTS);
    assert_eq!(g[0], 2.0 * TRADEOFF_LOW_POWER);
    assert!((g[TRADEOFF_POINTS - 1] - 2.0 * (1.0 - TRADEOFF_END_GAP)).abs() < 1e-15);
}

#[test]
fn cheap_checks_pass() {
    for id in [1, 2, 3, 5, 8, 10] {
        let c = run_check(id, &SuiteOptions::default());
        assert!(c.passed, "{c}");
    }
}

#[test]
fn failures_are_reported_not_raised() {
    let c = Check {
        id: 4,
        name: NAMES[3],
        passed: false,
        detail: "x".into(),
        seconds: 0.5,
    };
    assert_eq!(c.to_string(), "[FAIL]  4 trade-off curve: x (0.50 s)");
}
