use kglab_core::potentials::PotentialSpec;
use kglab_core::resolvent::{
    conjugation_residual, free_kernel_3d_check, lattice_lambda, limiting_absorption_sweep, resolvent_identity_residual,
    scaling_relation_check, CState, ResolventOperator, Sponge, SweepParams,
};
use kglab_core::Grid;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn probe(g: &Grid, seed: u64) -> CState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = || {
        let (a, m, w, k) = (rng.random_range(0.5..1.5), rng.random_range(-5.0..5.0), rng.random_range(0.7..2.0), rng.random_range(-2.0..2.0));
        g.sample(|x| a * (-((x - m) / w).powi(2)).exp()).iter().zip(g.x()).map(|(v, x)| C64::from_polar(*v, k * x)).collect::<Vec<_>>()
    };
    CState { u: f(), ut: f() }
}

fn pt(g: &Grid, beta: f64) -> Vec<f64> {
    PotentialSpec::poeschl_teller(6.0, 1.0).sample(g, beta, 0.0).unwrap()
}

/// Point spectrum of ℒ_β for −6 sech²: ±√3/γ and 0.
fn points(beta: f64) -> Vec<f64> {
    let g = 1.0 / (1.0 - beta * beta).sqrt();
    vec![3f64.sqrt() / g, -(3f64.sqrt()) / g, 0.0]
}

#[test]
fn free_single_mode_inverts_the_symbol() {
    let g = Grid::new(64, 10.0).unwrap();
    let k = 3.0 * std::f64::consts::PI / 10.0;
    let lam = C64::new(0.3, 0.1);
    let r = ResolventOperator::free(&g, lam, 0.0).unwrap();
    let e: Vec<C64> = g.x().iter().map(|&x| C64::from_polar(1.0, k * x)).collect();
    let out = r.apply(&CState { u: e.clone(), ut: vec![C64::default(); 64] });
    // Symbol [[-iλ, 1], [-(k²+1), -iλ]] inverted by hand.
    let i = C64::new(0.0, 1.0);
    let det = (-i * lam) * (-i * lam) + (k * k + 1.0);
    for j in 0..64 {
        assert!((out.u[j] - e[j] * (-i * lam) / det).norm() < 1e-12);
        assert!((out.ut[j] - e[j] * (k * k + 1.0) / det).norm() < 1e-12);
    }
}

#[test]
fn gap_edge_is_one_over_gamma() {
    let g = Grid::new(64, 10.0).unwrap();
    assert!(ResolventOperator::free(&g, C64::new(0.5, 0.0), 0.6).is_ok());
    let err = ResolventOperator::free(&g, C64::new(0.85, 0.0), 0.6).unwrap_err();
    assert_eq!(err.code(), "ON_CONTINUOUS_SPECTRUM");
    assert!(format!("{err}").contains("0.8"));
}

#[test]
fn round_trip_and_two_paths() {
    let g = Grid::new(256, 20.0).unwrap();
    for beta in [0.0, 0.6] {
        for (lam, v) in [(C64::new(0.4, 0.05), None), (C64::new(0.3, 0.2), Some(pt(&g, beta)))] {
            let r = match &v {
                None => ResolventOperator::free(&g, lam, beta).unwrap(),
                Some(v) => ResolventOperator::perturbed(&g, lam, beta, v, &points(beta)).unwrap(),
            };
            let d = r.direct().unwrap();
            for seed in 0..3 {
                let f = probe(&g, seed);
                let a = r.apply(&f);
                let rt = r.apply_operator(&a).sub(&f).norm(&g) / f.norm(&g);
                let two = a.sub(&d.solve(&f)).norm(&g) / a.norm(&g);
                let blocks = a.sub(&r.blocks_apply(&f)).norm(&g) / a.norm(&g);
                assert!(rt < 1e-10, "round trip {rt}");
                assert!(two < 1e-8, "two paths {two}");
                assert!(blocks < 1e-12, "blocks {blocks}");
            }
        }
    }
}

#[test]
fn perturbed_identities() {
    let g = Grid::new(256, 20.0).unwrap();
    let beta = 0.4;
    let v = pt(&g, beta);
    let (l1, l2) = (C64::new(0.3, 0.2), C64::new(-0.2, 0.5));
    let free = ResolventOperator::free(&g, l1, beta).unwrap();
    let r1 = ResolventOperator::perturbed(&g, l1, beta, &v, &points(beta)).unwrap();
    let r2 = ResolventOperator::perturbed(&g, l2, beta, &v, &points(beta)).unwrap();
    let zero = ResolventOperator::perturbed(&g, l1, beta, &vec![0.0; g.n()], &[]).unwrap();
    for seed in 0..3 {
        let f = probe(&g, 10 + seed);
        assert!(resolvent_identity_residual(&free, &r1, &f) < 1e-8);
        // ℛ(λ) − ℛ(λ′) = i(λ − λ′) ℛ(λ) ℛ(λ′)
        let lhs = r1.apply(&f).sub(&r2.apply(&f));
        let mut rhs = r1.apply(&r2.apply(&f));
        rhs.scale(C64::new(0.0, 1.0) * (l1 - l2));
        assert!(lhs.sub(&rhs).norm(&g) < 1e-8 * lhs.norm(&g));
        let a = free.apply(&f);
        assert!(a.sub(&zero.apply(&f)).norm(&g) < 1e-10 * a.norm(&g));
    }
}

#[test]
fn adjoint_is_consistent() {
    let g = Grid::new(128, 20.0).unwrap();
    let v = pt(&g, 0.3);
    let r = ResolventOperator::with_sponge(&g, C64::new(1.5, 0.01), 0.3, Some(&v), Sponge::default()).unwrap();
    let (f, h) = (probe(&g, 1), probe(&g, 2));
    let a = r.apply(&f).inner(&g, &h);
    let b = f.inner(&g, &r.apply_adjoint(&h));
    assert!((a - b).norm() < 1e-10 * a.norm(), "{a} vs {b}");
}

#[test]
fn point_spectrum_proximity() {
    let g = Grid::new(128, 20.0).unwrap();
    let v = pt(&g, 0.0);
    // iλ = √3 (the growing mode) sits at λ = −i√3.
    let near = C64::new(0.0, -(3f64.sqrt()) + 1e-4);
    let err = ResolventOperator::perturbed(&g, near, 0.0, &v, &points(0.0)).unwrap_err();
    assert_eq!(err.code(), "NEAR_EIGENVALUE");
    let tiny = C64::new(1e-5, 0.0);
    assert!(ResolventOperator::perturbed(&g, tiny, 0.0, &v, &points(0.0)).is_err());
    assert!(ResolventOperator::perturbed(&g, C64::new(0.5, 0.0), 0.0, &v, &points(0.0)).is_ok());
}

#[test]
fn conjugation_identity_on_the_lattice() {
    let g = Grid::new(512, 40.0).unwrap();
    let lam = lattice_lambda(&g, 0.6, 6).unwrap();
    assert!((lam - 0.50265).abs() < 1e-4);
    let f = probe(&g, 3);
    let res = conjugation_residual(&g, lam, 0.6, &f.u).unwrap();
    assert!(res < 1e-10, "{res}");
    assert!(conjugation_residual(&g, 0.5, 0.6, &f.u).is_err());
}

#[test]
fn scaling_relation() {
    let pt6 = PotentialSpec::poeschl_teller(6.0, 1.0);
    let gb = Grid::new(256, 16.0).unwrap();
    let same = scaling_relation_check(&gb, &gb, -2.5, 0.0, &pt6).unwrap();
    assert!(same.residual < 1e-12);
    let g0 = Grid::new(256, 16.0 * 1.25).unwrap();
    let rep = scaling_relation_check(&gb, &g0, -2.5, 0.6, &pt6).unwrap();
    eprintln!("{rep:?}");
    assert!(rep.residual < rep.discretization_bound);
    assert!(scaling_relation_check(&gb, &gb, -2.5, 0.6, &pt6).is_err());
}

#[test]
fn free_kernel_in_three_dimensions() {
    let s = free_kernel_3d_check(64, 6.0, 0.6, 2.0, 10, (1.0, 3.0), 5).unwrap();
    let worst = s.iter().map(|k| (k.numeric - k.exact).abs() / k.exact).fold(0.0, f64::max);
    eprintln!("3d kernel worst relative error {worst:.3e}");
    assert!(worst < 1e-2);
}

#[test]
fn limiting_absorption_free_and_perturbed() {
    let g = Grid::new(512, 40.0).unwrap();
    let p = SweepParams {
        lambdas: vec![1.0, 1.05, 1.5, 2.0, 3.0],
        eps: vec![1e-1, 1e-2, 1e-3],
        tau: 1.5,
        beta: 0.0,
        sponge: Sponge::default(),
        threshold_band: 0.02,
        max_iterations: 300,
        seed: 1,
    };
    let free = limiting_absorption_sweep(&g, None, &p).unwrap();
    for r in &free.rows {
        eprintln!("free {:.2} {:.0e} {:.4} thr={} conv={}", r.lambda, r.eps, r.norm, r.threshold, r.converged);
    }
    assert!(free.rows.iter().any(|r| r.threshold));
    assert!(free.stabilized, "{:?}", free.last_rung_change);
    let v = pt(&g, 0.0);
    let pert = limiting_absorption_sweep(&g, Some(&v), &p).unwrap();
    for r in &pert.rows {
        eprintln!("pt {:.2} {:.0e} {:.4}", r.lambda, r.eps, r.norm);
    }
    assert!(pert.stabilized, "{:?}", pert.last_rung_change);
}
