use kglab_core::potentials::PotentialSpec;
use kglab_core::spectrum::{
    agmon_decay_rate, detect_threshold_resonance, solve_scalar_spectrum, ResonanceParams, DEFAULT_ZERO_BAND,
};
use kglab_core::Grid;

/// Number of eigenvalues below `lam` of the Dirichlet finite-difference
/// operator `−D² + 1 + V` on `[−l, l]` with `m` interior points (Sturm count).
fn sturm_count(v: &dyn Fn(f64) -> f64, l: f64, m: usize, lam: f64) -> usize {
    let h = 2.0 * l / (m + 1) as f64;
    let off = 1.0 / (h * h);
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..m {
        let x = -l + h * (i + 1) as f64;
        let d = 2.0 * off + 1.0 + v(x) - lam;
        q = if i == 0 { d } else { d - off * off / q };
        if q == 0.0 {
            q = 1e-300;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `idx`-th eigenvalue (ascending) of the finite-difference operator.
fn fd_eigenvalue(v: &dyn Fn(f64) -> f64, l: f64, m: usize, idx: usize) -> f64 {
    let (mut lo, mut hi) = (-50.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(v, l, m, mid) > idx {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Second-order finite differences with one Richardson step.
fn fd_richardson(v: &dyn Fn(f64) -> f64, idx: usize) -> f64 {
    let l = 20.0;
    let m = 8000;
    let a = fd_eigenvalue(v, l, m - 1, idx);
    let b = fd_eigenvalue(v, l, 2 * m - 1, idx);
    (4.0 * b - a) / 3.0
}

fn pt6() -> PotentialSpec {
    PotentialSpec::poeschl_teller(6.0, 1.0)
}

#[test]
fn pt_levels_match_closed_form_and_finite_differences() {
    let g = Grid::new(2048, 80.0).unwrap();
    let s = solve_scalar_spectrum(&pt6(), &g, DEFAULT_ZERO_BAND).unwrap();
    assert_eq!((s.k(), s.m()), (1, 1));
    let ev = s.eigenvalues();
    // Closed-form levels of −∂² − 6 sech² are −4 and −1; L adds 1.
    assert!((ev[0] + 3.0).abs() < 1e-6, "{ev:?}");
    assert!(ev[1].abs() < 1e-6, "{ev:?}");
    let v = |x: f64| -6.0 / x.cosh().powi(2);
    let fd0 = fd_richardson(&v, 0);
    let fd1 = fd_richardson(&v, 1);
    assert!((fd0 - ev[0]).abs() < 1e-6, "fd {fd0} vs {}", ev[0]);
    assert!((fd1 - ev[1]).abs() < 1e-6, "fd {fd1} vs {}", ev[1]);
}

#[test]
fn pt_eigenfunctions_have_closed_form_shape() {
    let g = Grid::new(1024, 40.0).unwrap();
    let s = solve_scalar_spectrum(&pt6(), &g, DEFAULT_ZERO_BAND).unwrap();
    let shapes: [fn(f64) -> f64; 2] = [|x| 1.0 / x.cosh().powi(2), |x| x.tanh() / x.cosh()];
    let pairs = s.negative.iter().chain(&s.zero);
    for (e, shape) in pairs.zip(shapes) {
        let mut f = g.sample(shape);
        let n = g.norm_l2(&f);
        f.iter_mut().for_each(|v| *v /= n);
        let err: f64 = e.phi.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "shape error {err}");
        assert!(e.residual < 1e-8);
    }
}

#[test]
fn eigenfunctions_are_orthonormal_with_parity() {
    let g = Grid::new(512, 20.0).unwrap();
    let s = solve_scalar_spectrum(&PotentialSpec::poeschl_teller_levels(4.0, 1.0), &g, DEFAULT_ZERO_BAND).unwrap();
    assert_eq!((s.k(), s.m()), (3, 1));
    let all: Vec<_> = s.negative.iter().chain(&s.zero).collect();
    let n = g.n();
    for (a, ea) in all.iter().enumerate() {
        for (b, eb) in all.iter().enumerate() {
            let ip = g.dot(&ea.phi, &eb.phi);
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((ip - want).abs() < 1e-10);
        }
        // x -> -x maps index i to n - i on this grid.
        let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
        let par: f64 = (1..n).map(|i| (ea.phi[i] - sign * ea.phi[n - i]).abs()).fold(0.0, f64::max);
        assert!(par < 1e-10, "parity residual {par}");
    }
}

#[test]
fn refinement_does_not_move_eigenvalues() {
    let spec = PotentialSpec::Gaussian { depth: 3.0, width: 1.3 };
    let a = solve_scalar_spectrum(&spec, &Grid::new(256, 20.0).unwrap(), DEFAULT_ZERO_BAND).unwrap();
    let b = solve_scalar_spectrum(&spec, &Grid::new(512, 20.0).unwrap(), DEFAULT_ZERO_BAND).unwrap();
    assert_eq!(a.k(), b.k());
    for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn pt2_has_a_single_zero_mode() {
    let g = Grid::new(512, 40.0).unwrap();
    let s = solve_scalar_spectrum(&PotentialSpec::poeschl_teller(2.0, 1.0), &g, DEFAULT_ZERO_BAND).unwrap();
    assert_eq!((s.k(), s.m()), (0, 1));
    assert!(s.zero[0].value.abs() < 1e-10);
}

#[test]
fn gap_eigenvalues_are_flagged() {
    // Levels of −∂² + V are −(2.55 − n)², so L has 1 − 0.55² inside the gap.
    let g = Grid::new(512, 30.0).unwrap();
    let s = solve_scalar_spectrum(&PotentialSpec::poeschl_teller_levels(2.55, 1.0), &g, DEFAULT_ZERO_BAND).unwrap();
    assert_eq!(s.gap.len(), 1);
    assert!((s.gap[0] - (1.0 - 0.55f64.powi(2))).abs() < 1e-8);
    assert!(s.check_assumptions(false).is_err());
    assert!(s.check_assumptions(true).is_ok());
}

#[test]
fn agmon_rates_of_closed_form_tails() {
    let g = Grid::new(1024, 40.0).unwrap();
    let sech2 = g.sample(|x| 1.0 / x.cosh().powi(2));
    let fit = agmon_decay_rate(&g, &sech2, 3f64.sqrt()).unwrap();
    assert!((fit.rate - 2.0).abs() < 0.04, "{fit:?}");
    assert!((fit.reference - 2.0).abs() < 1e-12);
    let odd = g.sample(|x| x.tanh() / x.cosh());
    let fit = agmon_decay_rate(&g, &odd, 0.0).unwrap();
    assert!((fit.rate - 1.0).abs() < 0.02, "{fit:?}");
    let gauss = g.sample(|x| (-x * x / 4.0).exp());
    assert!(agmon_decay_rate(&g, &gauss, 1.0).is_err());
}

#[test]
fn resonance_screening() {
    let ladder = [40.0, 80.0, 160.0];
    let p = ResonanceParams { h: 0.3125, ..Default::default() };
    // P₂(tanh x) = (3 tanh²x − 1)/2 is a bounded zero-energy solution of −∂² − 6 sech²
    let pt6_verdict = detect_threshold_resonance(&pt6(), &ladder, p).unwrap();
    assert!(pt6_verdict.suspected && pt6_verdict.edge_slope.abs() < 1e-10, "{pt6_verdict:?}");
    assert!(pt6_verdict.rungs.iter().all(|r| r.near_edge.is_none()));
    // constants solve the free problem in one dimension
    let free = detect_threshold_resonance(&PotentialSpec::poeschl_teller(0.0, 1.0), &ladder, p).unwrap();
    assert!(free.suspected);
    // non-integer s: no resonance, levels −5.06 and −1 of −∂² + V
    let clean = detect_threshold_resonance(&PotentialSpec::poeschl_teller_levels(1.8, 0.8), &ladder, p).unwrap();
    assert!(!clean.suspected, "{clean:?}");
    // Shallowest level of −∂² + V at −(2.01 − 2)² = −1e−4.
    let tuned = detect_threshold_resonance(&PotentialSpec::poeschl_teller_levels(2.01, 1.0), &ladder, p).unwrap();
    assert!(tuned.suspected, "{tuned:?}");
    assert!(detect_threshold_resonance(&pt6(), &ladder[..2], p).is_err());
}

#[test]
fn legendre_threshold_solution() {
    let g = Grid::new(2048, 40.0).unwrap();
    let v = pt6().sample(&g, 0.0, 0.0).unwrap();
    let psi = g.sample(|x| 1.5 * x.tanh().powi(2) - 0.5);
    let d2 = g.sample(|x| {
        let (t, s2) = (x.tanh(), 1.0 / x.cosh().powi(2));
        6.0 * s2 * s2 - 12.0 * t * t * s2
    });
    let res = psi.iter().zip(&v).zip(&d2).map(|((p, v), d)| (-0.5 * d + v * p).abs()).fold(0.0, f64::max);
    assert!(res < 1e-13, "{res}");
}
