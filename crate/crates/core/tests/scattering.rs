use kglab_core::dichotomy::Removal;
use kglab_core::evolution::{free_propagate, DiagnosticOptions, MovingPotential, Scenario};
use kglab_core::norms::energy_norm;
use kglab_core::potentials::PotentialSpec;
use kglab_core::scattering::{
    centre_stable_run, reference_well, scattering_map_bounds, unstable_negative_control, wave_operator_backward, wavepacket, RunConfig,
};
use kglab_core::spectrum::{solve_scalar_spectrum, ScalarSpectrum, DEFAULT_ZERO_BAND};
use kglab_core::trajectory::Trajectory;
use kglab_core::{Error, Grid};

fn moving(g: &Grid) -> (Scenario, Vec<ScalarSpectrum>) {
    let s = solve_scalar_spectrum(&reference_well(), &Grid::new(512, 30.0).unwrap(), DEFAULT_ZERO_BAND).unwrap();
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: reference_well(), trajectory: Trajectory::linear(-10.0, 0.3) }], 0.05).unwrap();
    (scen, vec![s])
}

fn centre_of_energy(g: &Grid, u: &kglab_core::state::StatePair) -> f64 {
    let d = g.derivative(&u.u);
    let e: Vec<f64> = (0..g.n()).map(|i| u.u[i].powi(2) + d[i].powi(2) + u.ut[i].powi(2)).collect();
    g.x().iter().zip(&e).map(|(x, e)| x * e).sum::<f64>() / e.iter().sum::<f64>()
}

#[test]
fn wavepacket_moves_along_its_carrier() {
    let g = Grid::new(1024, 100.0).unwrap();
    for k in [2.0, -2.0] {
        let u = wavepacket(&g, 0.0, 3.0, k, 0.0, 1.0);
        let v = free_propagate(&g, &u, 20.0);
        let shift = centre_of_energy(&g, &v) - centre_of_energy(&g, &u);
        // group velocity k/⟨k⟩ ≈ ±0.894
        assert!(shift * k.signum() > 15.0 && shift.abs() < 20.0, "k = {k}: {shift}");
    }
}

#[test]
fn short_centre_stable_run() {
    let g = Grid::new(1024, 96.0).unwrap();
    let (scen, sp) = moving(&g);
    let raw = wavepacket(&g, -10.0, 3.0, 5.0, 0.3, 1.0);
    let u0 = kglab_core::dichotomy::project_instantaneous(&scen, &sp, 0.0, &raw, Removal::CentreStable).unwrap();
    let run = centre_stable_run(&scen, &sp, &u0, &RunConfig::standard(40.0)).unwrap();
    assert!(run.initial_energy > 0.0 && run.final_energy.is_finite());
    assert!(run.local_ratio() >= 1.0 && run.local_ratio().is_finite());
    assert!(run.leak_max < 1e-3 * run.initial_energy, "{}", run.leak_max);
    assert_eq!(run.scatter.curve.len(), 11);
    assert!(run.scatter.final_value() < 0.1 * run.initial_energy);

    let mut cfg = RunConfig::standard(20.0);
    cfg.profile_factor = 1.0;
    let same = centre_stable_run(&scen, &sp, &u0, &cfg).unwrap();
    assert!(same.scatter.final_value() < 1e-12 * same.initial_energy);
    cfg.profile_factor = 0.5;
    assert!(matches!(centre_stable_run(&scen, &sp, &u0, &cfg), Err(Error::InvalidParameter(_))));
}

#[test]
fn negative_control_grows() {
    let g = Grid::new(1024, 96.0).unwrap();
    let (scen, sp) = moving(&g);
    let u0 = wavepacket(&g, -10.0, 3.0, 5.0, 0.3, 1.0);
    let nc = unstable_negative_control(&scen, &sp, &u0, 40.0, 1e-3, &DiagnosticOptions::default()).unwrap();
    assert!(nc.log10_ratio > 1.0, "{nc:?}");
    let empty = Scenario::new(g.clone(), vec![], 0.05).unwrap();
    assert!(unstable_negative_control(&empty, &[], &u0, 10.0, 1e-3, &DiagnosticOptions::default()).is_err());
}

#[test]
fn free_wave_operator_is_the_identity() {
    let g = Grid::new(512, 64.0).unwrap();
    let scen = Scenario::new(g.clone(), vec![], 0.05).unwrap();
    let phi0 = wavepacket(&g, -10.0, 3.0, 3.0, 0.0, 1.0);
    let r = wave_operator_backward(&scen, &[], &phi0, &[5.0, 10.0, 20.0], 5, 4).unwrap();
    let n0 = energy_norm(&g, &phi0);
    for u in &r.candidates {
        assert!(energy_norm(&g, &u.sub(&phi0)) < 1e-13 * n0);
    }
    assert!(r.check_curve.iter().all(|c| *c < 1e-13 * n0));
    assert!(wave_operator_backward(&scen, &[], &phi0, &[10.0, 5.0], 5, 4).is_err());
}

#[test]
fn wave_operator_refuses_zero_modes() {
    let g = Grid::new(512, 40.0).unwrap();
    let pt = PotentialSpec::poeschl_teller(6.0, 1.0);
    let s = solve_scalar_spectrum(&pt, &g, DEFAULT_ZERO_BAND).unwrap();
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt, trajectory: Trajectory::fixed(0.0) }], 0.05).unwrap();
    let phi0 = wavepacket(&g, -10.0, 3.0, 3.0, 0.0, 1.0);
    assert!(matches!(wave_operator_backward(&scen, &[s], &phi0, &[5.0], 5, 4), Err(Error::InvalidParameter(_))));
}

#[test]
fn ratio_table_is_bounded_and_contamination_breaks_it() {
    let g = Grid::new(1024, 96.0).unwrap();
    let (scen, sp) = moving(&g);
    let t = scattering_map_bounds(&scen, &sp, 3, &[5.0, 10.0], 11, 0.0).unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(t.backward_min > 0.5 && t.backward_max < 2.0, "{t:?}");
    assert!(t.profile_min > 0.5 && t.profile_max < 2.0);
    let bad = scattering_map_bounds(&scen, &sp, 3, &[5.0, 10.0], 11, 1e-3).unwrap();
    assert!(bad.backward_min < 1e-2, "{}", bad.backward_min);
}
