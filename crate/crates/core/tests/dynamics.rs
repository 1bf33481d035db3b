use proptest::prelude::*;
use stochrank_core::{Error, InitialProfile, JumpRateLaw, Stratum, SystemState};

fn two_atom() -> InitialProfile {
    InitialProfile::factorized(JumpRateLaw::atoms(&[(1.0, 0.5), (2.0, 0.5)]).unwrap())
}

fn two_strata() -> InitialProfile {
    InitialProfile::new(vec![
        Stratum::new(0.0, 0.5, JumpRateLaw::point_mass(1.0).unwrap()),
        Stratum::new(0.5, 1.0, JumpRateLaw::point_mass(2.0).unwrap()),
    ])
    .unwrap()
}

fn gamma_mix() -> InitialProfile {
    let law = JumpRateLaw::mixture(&[
        (0.5, JumpRateLaw::gamma(2.0, 2.0).unwrap()),
        (0.5, JumpRateLaw::point_mass(3.0).unwrap()),
    ])
    .unwrap();
    InitialProfile::factorized(law)
}

/// One-sample KS distance of `samples` against Exp(1).
fn ks_exp1(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = 1.0 - (-x).exp();
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// Asymptotic KS critical values: c(0.01) = 1.628, c(0.001) = 1.949.
#[test]
fn inter_jump_gaps_are_exponential() {
    let n = 10;
    let mut state = SystemState::init(&two_atom(), n, 2024).unwrap();
    let mut last = vec![0.0; n];
    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); n];
    let rates = state.rates().to_vec();
    state
        .advance_observed(12_000.0, |_, e| {
            gaps[e.particle].push((e.time - last[e.particle]) * rates[e.particle]);
            last[e.particle] = e.time;
        })
        .unwrap();

    let mut pooled: Vec<f64> = gaps.iter().flatten().copied().collect();
    assert!(pooled.len() >= 100_000);
    let d = ks_exp1(&mut pooled);
    assert!(d * (pooled.len() as f64).sqrt() <= 1.628, "pooled KS {d}");

    // Per particle, Bonferroni over 10 tests at overall level 0.01.
    for (i, g) in gaps.iter_mut().enumerate() {
        assert!(g.len() >= 10_000, "particle {i} has {} gaps", g.len());
        let d = ks_exp1(g);
        assert!(d * (g.len() as f64).sqrt() <= 1.949, "particle {i}: KS {d}");
    }
}

#[test]
fn jumper_goes_to_head_and_others_shift_by_one() {
    let mut state = SystemState::init(&two_atom(), 30, 77).unwrap();
    let mut before = state.positions();
    let mut events = 0;
    state
        .advance_observed(20.0, |s, e| {
            let after = s.positions();
            assert_eq!(after[e.particle], 1);
            let old = before[e.particle];
            for (i, (&b, &a)) in before.iter().zip(&after).enumerate() {
                if i != e.particle {
                    assert_eq!(a, if b < old { b + 1 } else { b });
                }
            }
            before = after;
            events += 1;
        })
        .unwrap();
    assert!(events > 500);
}

fn check_snapshot_invariants(state: &SystemState) -> Result<(), TestCaseError> {
    let n = state.n();
    let nf = n as f64;
    prop_assert!(state.is_consistent());
    let snap = state.snapshot();
    let boundary = state.boundary();
    prop_assert_eq!(snap.jumped_fraction(), boundary);

    let mut seen = vec![false; n];
    for r in &snap.records {
        let rank = (r.y * nf).round() as usize;
        prop_assert!(rank < n && !seen[rank]);
        seen[rank] = true;
        // Jumped particles fill exactly the first x_C ranks.
        prop_assert_eq!(r.jumped, r.y < boundary);
        if !r.jumped {
            let flow = state.flow_position(r.y0).unwrap();
            prop_assert!((flow - r.y).abs() <= 4.0 * f64::EPSILON, "{} vs {}", flow, r.y);
        }
    }

    for k in 1..20 {
        let y = f64::from(k) / 20.0;
        if y <= boundary {
            let out_of_regime = matches!(state.hat_y_empirical(y), Err(Error::OutOfRegime { .. }));
            prop_assert!(out_of_regime);
            continue;
        }
        let beyond: Vec<usize> = (0..n).filter(|&i| snap.records[i].y > y).collect();
        match state.hat_y_empirical(y) {
            Ok(hat) => {
                let flow = state.flow_position(hat).unwrap();
                prop_assert!((flow - y).abs() <= 2.0 / nf + 1e-12);
                let predicted: Vec<usize> =
                    (0..n).filter(|&i| !snap.records[i].jumped && snap.records[i].y0 >= hat).collect();
                prop_assert_eq!(beyond, predicted);
            }
            Err(Error::NoParticleBeyond(_)) => prop_assert!(beyond.is_empty()),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn snapshot_invariants_hold(
        n in 1usize..120,
        seed in any::<u64>(),
        model in 0usize..3,
        times in proptest::collection::vec(0.0f64..3.0, 1..6),
    ) {
        let profile = [two_atom(), two_strata(), gamma_mix()][model].clone();
        let mut state = SystemState::init(&profile, n, seed).unwrap();
        let mut times = times;
        times.sort_by(f64::total_cmp);
        check_snapshot_invariants(&state)?;
        for t in times {
            state.advance_to(t).unwrap();
            check_snapshot_invariants(&state)?;
        }
    }
}
