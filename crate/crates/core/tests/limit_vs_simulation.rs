use std::f64::consts::LN_2;

use stochrank_core::{InitialProfile, JumpRateLaw, LimitField, Regime, Stratum, SystemState};

fn two_atom() -> InitialProfile {
    InitialProfile::factorized(JumpRateLaw::atoms(&[(1.0, 0.5), (2.0, 0.5)]).unwrap())
}

fn simulate(profile: &InitialProfile, n: usize, seed: u64, t: f64) -> SystemState {
    let mut state = SystemState::init(profile, n, seed).unwrap();
    state.advance_to(t).unwrap();
    state
}

/// Fraction of rate-1 particles among those with `lo <= Y < hi`.
fn rate_one_fraction(state: &SystemState, lo: f64, hi: f64) -> f64 {
    let snap = state.snapshot();
    let window: Vec<_> = snap.records.iter().filter(|r| r.y >= lo && r.y < hi).collect();
    assert!(window.len() > 500);
    window.iter().filter(|r| r.rate == 1.0).count() as f64 / window.len() as f64
}

#[test]
fn empirical_statistic_matches_limit() {
    let profile = two_atom();
    let field = LimitField::new(profile.clone());
    let state = simulate(&profile, 100_000, 41, LN_2);
    let snap = state.snapshot();
    let limit = field.limit_statistic(|w| w, 0.625, LN_2).unwrap();
    let emp = snap.empirical_statistic(|w| w, 0.625);
    assert!((emp - limit).abs() < 0.01, "{emp} vs {limit}");
}

#[test]
fn rate_histograms_match_both_density_branches() {
    let profile = two_atom();
    let field = LimitField::new(profile.clone());

    // Head: weights at y are ∝ w e^{-w t_0(y)}; around y = 0.625 they are (½, ½).
    let state = simulate(&profile, 100_000, 5, 1.0);
    let head = field.density(0.62, 1.0).unwrap();
    assert_eq!(head.regime, Regime::Head);
    let frac = rate_one_fraction(&state, 0.61, 0.63);
    assert!((frac - head.weights[0]).abs() < 0.04, "{frac} vs {:?}", head.weights);
    assert!((frac - 0.5).abs() < 0.05);

    // Tail at t = ln 2: weights (⅔, ⅓) independent of y.
    let state = simulate(&profile, 100_000, 6, LN_2);
    let frac = rate_one_fraction(&state, 0.7, 0.95);
    assert!((frac - 2.0 / 3.0).abs() < 0.02, "{frac}");
}

#[test]
fn simulated_trajectory_follows_flow() {
    let profile = InitialProfile::new(vec![
        Stratum::new(0.0, 0.5, JumpRateLaw::point_mass(1.0).unwrap()),
        Stratum::new(0.5, 1.0, JumpRateLaw::point_mass(2.0).unwrap()),
    ])
    .unwrap();
    let field = LimitField::new(profile.clone());
    let state = simulate(&profile, 100_000, 9, 1.0);
    for y in [0.0, 0.3, 0.7] {
        let emp = state.flow_position(y).unwrap();
        let limit = field.flow(y, 1.0).unwrap();
        assert!((emp - limit).abs() < 0.005, "y={y}: {emp} vs {limit}");
    }
    let hat = state.hat_y_empirical(0.95).unwrap();
    assert!((hat - field.hat_y(0.95, 1.0).unwrap()).abs() < 0.01);
}

#[test]
fn velocity_is_continuous_across_the_boundary() {
    let profiles = [
        two_atom(),
        InitialProfile::new(vec![
            Stratum::new(0.0, 0.3, JumpRateLaw::atoms(&[(0.5, 0.25), (3.0, 0.75)]).unwrap()),
            Stratum::new(0.3, 1.0, JumpRateLaw::gamma(2.0, 1.5).unwrap()),
        ])
        .unwrap(),
    ];
    for profile in profiles {
        let field = LimitField::new(profile);
        for t in [0.2, 1.0, 3.0] {
            let yc = field.y_c(t).unwrap();
            let below = field.velocity(yc - 1e-9, t).unwrap();
            let above = field.velocity(yc + 1e-9, t).unwrap();
            assert!((below - above).abs() < 1e-6, "t={t}: {below} vs {above}");
        }
    }
}
