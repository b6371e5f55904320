use kglab_core::potentials::{boost_function, gamma1, linear_fit, lorentz_gamma, PotentialSpec};
use kglab_core::trajectory::{reduce_trajectory, shift_operator_apply, validate_trajectory, Profile, Trajectory};
use kglab_core::{Error, Grid};
use proptest::prelude::*;

fn curved() -> Trajectory {
    Trajectory {
        y0: -3.0,
        beta: vec![Profile::Constant { value: 0.3 }, Profile::Tanh { amp: 0.002, scale: 10.0 }],
        slip: vec![Profile::Exp { amp: 0.001, rate: 1.0 }],
    }
}

#[test]
fn linear_trajectory_has_zero_budget() {
    let r = validate_trajectory(&Trajectory::linear(1.0, 0.4), 50.0, 0.02).unwrap();
    assert!(r.pass && r.total == 0.0 && (r.sup_beta - 0.4).abs() < 1e-15);
}

/// `‖β′‖₁ = 0.002 tanh(5)`, `‖β′‖∞ = 2e−4`, `‖slip‖₁ = 1e−3(1 − e^{−50})`, `‖slip‖∞ = 1e−3`.
#[test]
fn budget_closed_form() {
    let r = validate_trajectory(&curved(), 50.0, 0.02).unwrap();
    assert!((r.beta_prime_l1 - 0.002 * 5f64.tanh()).abs() < 1e-10);
    assert!((r.beta_prime_linf - 2e-4).abs() < 1e-12);
    assert!((r.slip_l1 - 1e-3 * (1.0 - (-50f64).exp())).abs() < 1e-10);
    assert!((r.slip_linf - 1e-3).abs() < 1e-15);
    assert!(r.pass);
    let tight = validate_trajectory(&curved(), 50.0, 1e-3).unwrap();
    assert!(!tight.pass && !tight.violations.is_empty());
}

#[test]
fn superluminal_and_non_finite_are_rejected() {
    let fast = Trajectory::linear(0.0, 1.0);
    assert!(matches!(validate_trajectory(&fast, 10.0, 1.0), Err(Error::Superluminal(_))));
    let bad = Trajectory::linear(f64::NAN, 0.1);
    assert!(matches!(validate_trajectory(&bad, 10.0, 1.0), Err(Error::NonFinite(_))));
}

#[test]
fn window_jump_counts_in_the_budget() {
    let tr = Trajectory { y0: 0.0, beta: vec![Profile::Window { amp: 0.01, start: 5.0, end: 8.0 }], slip: vec![] };
    let r = validate_trajectory(&tr, 20.0, 1.0).unwrap();
    assert!((r.beta_prime_l1 - 0.02).abs() < 1e-12);
    assert!(r.beta_prime_linf.is_infinite() && !r.pass);
}

#[test]
fn reduction_drift() {
    let tr = curved();
    let red = reduce_trajectory(&tr, 40.0).unwrap();
    assert_eq!(red.beta0, 0.3);
    for t in [0.0, 1.0, 7.5, 40.0] {
        let c = 0.02 * (t / 10.0f64).cosh().ln() + 1e-3 * (1.0 - (-t).exp());
        assert!((red.c(t) - c).abs() < 1e-13, "t = {t}");
    }
    assert!((red.b(10.0, 4.0) - (red.c(10.0) - red.c(4.0))).abs() < 1e-15);
}

#[test]
fn shift_operator_translates() {
    let g = Grid::new(256, 20.0).unwrap();
    let f = g.sample(|x| (-x * x).exp());
    let s = shift_operator_apply(&g, &f, 1.7);
    for (x, v) in g.x().iter().zip(&s) {
        assert!((v - (-(x + 1.7).powi(2)).exp()).abs() < 1e-12);
    }
}

#[test]
fn samples_profile_reproduces_its_nodes() {
    let values: Vec<f64> = (0..20).map(|i| 0.1 * (i as f64 * 0.3).sin()).collect();
    let p = Profile::Samples { dt: 0.5, values: values.clone() };
    for (i, v) in values.iter().enumerate() {
        assert!((p.value(i as f64 * 0.5) - v).abs() < 1e-15);
    }
    assert_eq!(p.value(100.0), *values.last().unwrap());
}

#[test]
fn potential_validation_and_boosts() {
    assert!(PotentialSpec::poeschl_teller(f64::NAN, 1.0).validate().is_err());
    assert!(gamma1(1.0).is_err());
    assert!((lorentz_gamma(&[0.6]).unwrap() - 1.25).abs() < 1e-15);
    let g = Grid::new(256, 20.0).unwrap();
    let v = PotentialSpec::poeschl_teller(6.0, 1.0);
    let b = boost_function(&g, |x| v.eval(x), 0.6).unwrap();
    let s = v.sample(&g, 0.6, 0.0).unwrap();
    assert!(b.iter().zip(&s).all(|(a, c)| (a - c).abs() < 1e-14));
    assert!((v.eval(0.0) + 6.0).abs() < 1e-15);
}

#[test]
fn linear_fit_recovers_a_line() {
    let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
    let (a, b, _) = linear_fit(&pts);
    assert!((a - 2.0).abs() < 1e-13 && (b + 0.5).abs() < 1e-13);
}

proptest! {
    #[test]
    fn profile_integral_matches_quadrature(amp in -0.5f64..0.5, rate in 0.01f64..2.0, t in 0.0f64..20.0) {
        for p in [Profile::Exp { amp, rate }, Profile::Tanh { amp, scale: 1.0 / rate }, Profile::Linear { slope: amp }] {
            let m = 2000;
            let h = t / m as f64;
            let quad: f64 = (0..m).map(|i| p.value((i as f64 + 0.5) * h)).sum::<f64>() * h;
            prop_assert!((p.integral(t) - quad).abs() < 1e-5 * (1.0 + quad.abs()));
        }
    }

    #[test]
    fn y_prime_is_the_derivative_of_y(t in 0.1f64..30.0) {
        let tr = curved();
        let e = 1e-5;
        let fd = (tr.y(t + e) - tr.y(t - e)) / (2.0 * e);
        prop_assert!((fd - tr.y_prime(t)).abs() < 1e-8);
    }
}
