use kglab_core::dichotomy::{
    channel_cutoffs, check_channels, commutation_check, dichotomy_rates, project_centre_stable, smoothstep5, unstable_amplitudes_backward,
    zero_mode_coefficients, ChannelParams, FlowProjector, Removal, Reprojector,
};
use kglab_core::evolution::{evolve, MovingPotential, Scenario};
use kglab_core::modes::build_modes;
use kglab_core::norms::energy_norm;
use kglab_core::potentials::PotentialSpec;
use kglab_core::spectrum::{solve_scalar_spectrum, ScalarSpectrum, DEFAULT_ZERO_BAND};
use kglab_core::state::StatePair;
use kglab_core::trajectory::Trajectory;
use kglab_core::{Error, Grid};
use proptest::prelude::*;

fn pt6() -> PotentialSpec {
    PotentialSpec::poeschl_teller(6.0, 1.0)
}

fn spectrum(g: &Grid) -> ScalarSpectrum {
    solve_scalar_spectrum(&pt6(), g, DEFAULT_ZERO_BAND).unwrap()
}

fn packet(g: &Grid, centre: f64, k: f64) -> StatePair {
    StatePair::new(
        g.sample(|x| (-((x - centre) / 2.0).powi(2)).exp() * (k * x).cos()),
        g.sample(|x| 0.5 * (-((x - centre) / 2.0).powi(2)).exp() * (k * x).sin()),
    )
}

#[test]
fn rates_match_boosted_nu() {
    let g = Grid::new(2048, 40.0).unwrap();
    let s = spectrum(&g);
    for v in [0.0, 0.4, 0.8] {
        let fits = dichotomy_rates(&s, &g, v, 0.01, 10.0, 40).unwrap();
        for f in &fits {
            println!("v={v} expected {:.5} growth {:.5} decay {:.5}", f.expected, f.growth, f.decay);
            assert!(f.growth_rel_err < 0.02 && f.decay_rel_err < 0.02, "{f:?}");
        }
    }
}

#[test]
fn centre_stable_basis_action() {
    let g = Grid::new(1024, 40.0).unwrap();
    let s = spectrum(&g);
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: Trajectory::linear(1.0, 0.4) }], 0.02).unwrap();
    let t = 2.5;
    let b = build_modes(&s, &g, 0.4, 2.0).unwrap();
    let out = project_centre_stable(&scen, std::slice::from_ref(&s), t, &b.y_plus[0]).unwrap();
    assert!(energy_norm(&g, &out) < 1e-6);
    let mixed = b.y_minus[0].add(&b.y_zero[0]);
    let out = project_centre_stable(&scen, std::slice::from_ref(&s), t, &mixed).unwrap();
    assert!(energy_norm(&g, &out.sub(&b.y_minus[0])) < 1e-8 * energy_norm(&g, &b.y_minus[0]));
}

#[test]
fn flow_projector_commutes() {
    let g = Grid::new(1024, 40.0).unwrap();
    let s = spectrum(&g);
    let dt = 0.02;
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: Trajectory::linear(-4.0, 0.4) }], dt).unwrap();
    let fp = FlowProjector::build(&scen, std::slice::from_ref(&s), 10.0, 25).unwrap();
    let b = build_modes(&s, &g, 0.4, -4.0).unwrap();
    // continuum packet plus stable and zero-mode parts; no analytic unstable part
    let mut u = packet(&g, -2.0, 1.5);
    u.axpy(0.3, &b.y_minus[0]);
    u.axpy(0.2, &b.y_zero[0]);
    let rep = commutation_check(&scen, std::slice::from_ref(&s), &fp, &u).unwrap();
    let worst = rep.flow_defect.iter().cloned().fold(0.0, f64::max);
    println!("gram drift {:.2e}", rep.gram_drift);
    for i in 0..rep.times.len() {
        println!("t={:.2} flow {:.2e} analytic {:.2e} gap {:.2e}", rep.times[i], rep.flow_defect[i], rep.analytic_defect[i], rep.projector_gap[i]);
    }
    assert!(worst < 5.0 * dt * dt + 1e-6, "{worst}");
}

#[test]
fn zero_mode_neutrality() {
    let g = Grid::new(1024, 40.0).unwrap();
    let s = spectrum(&g);
    let dt = 0.02;
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: Trajectory::linear(-6.0, 0.4) }], dt).unwrap();
    let sp = vec![s];
    let u0 = project_centre_stable(&scen, &sp, 0.0, &packet(&g, -4.0, 2.0)).unwrap();
    let mut rp = Reprojector::new(sp.clone(), Removal::UnstableOnly, 1);
    let mut worst = 0.0f64;
    evolve(&scen, &u0, 0.0, dt, 1000, None, |n, t, u| {
        rp.apply(&scen, n, t, u)?;
        if n % 50 == 0 {
            for c in zero_mode_coefficients(&scen, &sp, t, u)? {
                worst = worst.max(c.abs());
            }
        }
        Ok(())
    })
    .unwrap();
    assert!(worst < 10.0 * dt * dt, "{worst}");
}

#[test]
fn cutoffs_partition_and_collisions() {
    let g = Grid::new(2048, 200.0).unwrap();
    let two = vec![
        MovingPotential { potential: pt6(), trajectory: Trajectory::linear(-15.0, -0.4) },
        MovingPotential { potential: pt6(), trajectory: Trajectory::linear(15.0, 0.4) },
    ];
    let scen = Scenario::new(g.clone(), two, 0.05).unwrap();
    let p = ChannelParams { eps: 0.1, start: 10.0, offset: 5.0 };
    check_channels(&scen, &p, 150.0).unwrap();
    let cs = channel_cutoffs(&scen, &p, 40.0).unwrap();
    assert!(cs.partition_defect() <= 1e-15, "{}", cs.partition_defect());
    let wide = ChannelParams { eps: 0.3, start: 10.0, offset: 5.0 };
    let e = check_channels(&scen, &wide, 150.0).unwrap_err();
    assert!(matches!(e, Error::ChannelOverlap { .. }), "{e}");

    let one = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: Trajectory::fixed(0.0) }], 0.05).unwrap();
    let cs = channel_cutoffs(&one, &p, 100.0).unwrap();
    let v = one.potential_at(100.0).unwrap();
    for (chi, vv) in cs.chi[1].iter().zip(&v) {
        if vv.abs() > 1e-10 {
            assert_eq!(*chi, 1.0);
        }
    }
    assert!(cs.containment_defect(&one).unwrap()[0] < 1e-11);
}

proptest! {
    #[test]
    fn smoothstep_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(smoothstep5(lo) <= smoothstep5(hi));
        prop_assert!((smoothstep5(a) + smoothstep5(1.0 - a) - 1.0).abs() < 4e-15);
    }
}

#[test]
fn backward_amplitudes_static_and_flow_rate() {
    let g = Grid::new(1024, 40.0).unwrap();
    let s = spectrum(&g);
    let sp = vec![s.clone()];
    let dt = 0.02;
    // static potential, stable datum: no forcing terms, so λ₊ vanishes
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: Trajectory::fixed(0.0) }], dt).unwrap();
    let b = build_modes(&s, &g, 0.0, 0.0).unwrap();
    let mut times = vec![];
    let mut snaps = vec![];
    evolve(&scen, &b.y_minus[0], 0.0, dt, 250, None, |n, t, u| {
        if n % 10 == 0 {
            times.push(t);
            snaps.push(u.clone());
        }
        Ok(())
    })
    .unwrap();
    let ba = unstable_amplitudes_backward(&scen, &sp, &times, &snaps, None, 0, 0, true, 0.01).unwrap();
    assert!(ba.lambda.iter().all(|l| l.abs() < 1e-12));
    // the measured coefficient only carries the O(dt²) leak of the scheme at early times
    assert!(ba.flow_coefficient[1].abs() < 1e-3, "{:?}", ba.flow_coefficient);

    // moving potential, unit 𝒴⁺: integrands vanish and the flow coefficient grows at ν/γ
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: Trajectory::linear(-2.0, 0.4) }], dt).unwrap();
    let b = build_modes(&s, &g, 0.4, -2.0).unwrap();
    let (mut times, mut snaps) = (vec![], vec![]);
    evolve(&scen, &b.y_plus[0], 0.0, dt, 300, None, |n, t, u| {
        if n % 10 == 0 {
            times.push(t);
            snaps.push(u.clone());
        }
        Ok(())
    })
    .unwrap();
    let ba = unstable_amplitudes_backward(&scen, &sp, &times, &snaps, None, 0, 0, true, 0.01).unwrap();
    assert!(ba.terms.iter().all(|t| t.iter().all(|x| x.abs() < 1e-10)));
    let pts: Vec<(f64, f64)> = ba.times.iter().zip(&ba.flow_coefficient).map(|(t, c)| (*t, c.abs().ln())).collect();
    let rate = kglab_core::potentials::linear_fit(&pts).1;
    assert!((rate - ba.rate).abs() / ba.rate < 0.02, "{rate} vs {}", ba.rate);
}
