use kglab_core::evolution::{evolve, free_propagate, frozen_energy, MovingPotential, Scenario};
use kglab_core::modes::build_modes;
use kglab_core::norms::energy_norm;
use kglab_core::potentials::PotentialSpec;
use kglab_core::spectrum::{solve_scalar_spectrum, DEFAULT_ZERO_BAND};
use kglab_core::state::{l2_norm, pairing, StatePair};
use kglab_core::trajectory::{Profile, Trajectory};
use kglab_core::{Error, Grid};
use proptest::prelude::*;

fn packet(g: &Grid, centre: f64, k: f64) -> StatePair {
    StatePair::new(
        g.sample(|x| (-((x - centre) / 3.0).powi(2)).exp() * (k * x).cos()),
        g.sample(|x| (-((x - centre) / 3.0).powi(2)).exp() * (k * x).sin()),
    )
}

fn pt6() -> PotentialSpec {
    PotentialSpec::poeschl_teller(6.0, 1.0)
}

#[test]
fn free_single_mode_closed_form() {
    let g = Grid::new(64, std::f64::consts::PI * 8.0).unwrap();
    // k = 1 lies on the lattice: m π / Lx = 1 for m = 8.
    let u = StatePair::new(g.sample(|x| x.cos()), vec![0.0; 64]);
    assert_eq!(free_propagate(&g, &u, 0.0), u);
    let tau = 1.3;
    let v = free_propagate(&g, &u, tau);
    let w = 2f64.sqrt();
    let err_u: f64 = v.u.iter().zip(g.x()).map(|(a, x)| (a - (tau * w).cos() * x.cos()).abs()).fold(0.0, f64::max);
    let err_t: f64 = v.ut.iter().zip(g.x()).map(|(a, x)| (a + w * (tau * w).sin() * x.cos()).abs()).fold(0.0, f64::max);
    assert!(err_u < 1e-12 && err_t < 1e-12, "{err_u} {err_t}");
}

#[test]
fn free_energy_conserved() {
    let g = Grid::new(512, 40.0).unwrap();
    let u = packet(&g, 0.0, 2.0);
    let e0 = energy_norm(&g, &u);
    let mut v = u.clone();
    for _ in 0..50 {
        v = free_propagate(&g, &v, 0.05);
        assert!((energy_norm(&g, &v) - e0).abs() / e0 < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn free_group_law(t in -3.0f64..3.0, s in -3.0f64..3.0, c in -5.0f64..5.0, k in -3.0f64..3.0) {
        let g = Grid::new(256, 30.0).unwrap();
        let u = packet(&g, c, k);
        let a = free_propagate(&g, &free_propagate(&g, &u, s), t);
        let b = free_propagate(&g, &u, t + s);
        prop_assert!(l2_norm(&g, &a.sub(&b)) < 1e-12 * (1.0 + l2_norm(&g, &u)));
    }

    #[test]
    fn strang_step_transpose(t0 in 0.0f64..5.0, c in -4.0f64..4.0) {
        let g = Grid::new(256, 30.0).unwrap();
        let tr = Trajectory { y0: 1.0, beta: vec![Profile::Constant { value: 0.3 }, Profile::Tanh { amp: 0.05, scale: 2.0 }], slip: vec![] };
        let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: tr }], 0.05).unwrap();
        let a = packet(&g, c, 1.5);
        let b = packet(&g, -c, -0.7);
        let mut sa = a.clone();
        scen.stepper().step(&mut sa, t0, 0.05, None).unwrap();
        let mut tb = b.clone();
        scen.stepper().step_transpose(&mut tb, t0, 0.05).unwrap();
        let l = pairing(&g, &sa, &b);
        let r = pairing(&g, &a, &tb);
        prop_assert!((l - r).abs() < 1e-12 * (1.0 + l.abs()));
    }
}

#[test]
fn cfl_and_superluminal_rejected() {
    let g = Grid::new(256, 20.0).unwrap();
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: Trajectory::linear(0.0, 0.5) }], 0.2).unwrap();
    let u = packet(&g, 0.0, 1.0);
    let e = evolve(&scen, &u, 0.0, 0.2, 5, None, |_, _, _| Ok(())).unwrap_err();
    assert!(matches!(e, Error::Cfl { .. }), "{e}");
    let fast = Trajectory { y0: 0.0, beta: vec![Profile::Constant { value: 0.9 }, Profile::Linear { slope: 0.1 }], slip: vec![] };
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: fast }], 0.01).unwrap();
    let e = evolve(&scen, &u, 0.0, 0.01, 200, None, |_, _, _| Ok(())).unwrap_err();
    assert!(matches!(e, Error::Superluminal(_)), "{e}");
}

#[test]
fn static_zero_mode_is_stationary() {
    let g = Grid::new(1024, 40.0).unwrap();
    let spec = solve_scalar_spectrum(&pt6(), &g, DEFAULT_ZERO_BAND).unwrap();
    let modes = build_modes(&spec, &g, 0.0, 0.0).unwrap();
    let y0 = modes.y_zero[0].clone();
    let mut drift = Vec::new();
    for dt in [0.02, 0.01] {
        let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: Trajectory::fixed(0.0) }], dt).unwrap();
        let steps = (2.0 / dt).round() as usize;
        let fin = evolve(&scen, &y0, 0.0, dt, steps, None, |_, _, _| Ok(())).unwrap();
        drift.push(l2_norm(&g, &fin.sub(&y0)) / l2_norm(&g, &y0));
    }
    assert!(drift[0] < 1e-3, "{drift:?}");
    let ratio = drift[0] / drift[1];
    assert!((3.5..=4.5).contains(&ratio), "{drift:?}");
}

#[test]
fn frozen_energy_static_potential() {
    let g = Grid::new(1024, 60.0).unwrap();
    let mut dev = Vec::new();
    for dt in [0.04, 0.02] {
        let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: PotentialSpec::poeschl_teller(2.0, 1.0), trajectory: Trajectory::fixed(0.0) }], dt).unwrap();
        let u = packet(&g, 5.0, 1.5);
        let e0 = frozen_energy(&scen, &u, 0.0).unwrap();
        let mut worst = 0.0f64;
        evolve(&scen, &u, 0.0, dt, (10.0 / dt) as usize, None, |_, t, v| {
            worst = worst.max((frozen_energy(&scen, v, t)? - e0).abs() / e0);
            Ok(())
        })
        .unwrap();
        dev.push(worst);
    }
    assert!(dev[0] < 1e-2 && dev[1] < dev[0] / 3.0, "{dev:?}");
}

/// Self-convergence with a decelerating potential and forcing: the error
/// ratio between successive halvings sits near 4.
#[test]
fn richardson_ratio_moving_potential() {
    let g = Grid::new(512, 40.0).unwrap();
    let tr = Trajectory { y0: -3.0, beta: vec![Profile::Constant { value: 0.4 }, Profile::Tanh { amp: 0.05, scale: 3.0 }], slip: vec![Profile::Exp { amp: 0.01, rate: 1.0 }] };
    let u0 = packet(&g, 2.0, 1.0);
    let force = |t: f64| StatePair::new(vec![0.0; 512], g.sample(|x| 0.1 * (-(x * x)).exp() * (2.0 * t).cos()));
    let horizon = 4.0;
    let run = |dt: f64| {
        let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: tr.clone() }], dt).unwrap();
        evolve(&scen, &u0, 0.0, dt, (horizon / dt).round() as usize, Some(&force), |_, _, _| Ok(())).unwrap()
    };
    let (a, b, c) = (run(0.04), run(0.02), run(0.01));
    let ratio = energy_norm(&g, &a.sub(&b)) / energy_norm(&g, &b.sub(&c));
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}
