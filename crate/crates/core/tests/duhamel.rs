use kglab_core::duhamel::{
    neumann_invert, one_minus_t_residual, sample_stream, solve_one_minus_t, stream_norm, stream_sub, truncated_duhamel_norm,
    truncated_norm_table, FrozenChannel, TruncatedNormParams,
};
use kglab_core::evolution::free_propagate;
use kglab_core::potentials::PotentialSpec;
use kglab_core::spectrum::{solve_scalar_spectrum, ScalarSpectrum, DEFAULT_ZERO_BAND};
use kglab_core::state::StatePair;
use kglab_core::{Error, Grid};

fn setup() -> (Grid, ScalarSpectrum) {
    let g = Grid::new(512, 40.0).unwrap();
    let s = solve_scalar_spectrum(&PotentialSpec::poeschl_teller(6.0, 1.0), &g, DEFAULT_ZERO_BAND).unwrap();
    (g, s)
}

fn source(g: &Grid) -> impl Fn(f64) -> StatePair + '_ {
    move |t: f64| {
        StatePair::new(
            g.sample(|x| (-((x - 1.0 - 0.2 * t) / 2.0).powi(2)).exp() * (1.3 * x + t).cos()),
            g.sample(|x| 0.5 * (-((x + 1.0) / 1.5).powi(2)).exp() * (0.7 * t).sin()),
        )
    }
}

#[test]
fn t0_matches_direct_quadrature() {
    let (g, s) = setup();
    let ch = FrozenChannel::new(&s, &g, 0.3, 0.0, None).unwrap();
    let dt = 0.02;
    let steps = 50;
    let gs = sample_stream(steps, dt, source(&g));
    let fast = ch.t0(&gs, dt).unwrap();
    let h: Vec<StatePair> = gs.iter().enumerate().map(|(n, x)| ch.apply(x, n as f64 * dt).unwrap()).collect();
    for n in [1, 17, 50] {
        let mut direct = StatePair::zeros(g.n());
        for (j, hj) in h.iter().enumerate().take(n + 1) {
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            direct.axpy(w * dt, &free_propagate(&g, hj, (n - j) as f64 * dt));
        }
        let err = kglab_core::state::l2_norm(&g, &fast[n].sub(&direct));
        assert!(err < 1e-10, "step {n}: {err}");
    }
}

#[test]
fn kappa_changes_only_the_mode_channel() {
    let (g, s) = setup();
    let a = FrozenChannel::new(&s, &g, 0.3, 0.0, Some(1.0)).unwrap();
    let b = FrozenChannel::new(&s, &g, 0.3, 0.0, Some(4.0)).unwrap();
    let src = source(&g);
    for t in [0.0, 1.3, 2.9] {
        let u = src(t);
        let d = a.apply(&u, t).unwrap().sub(&b.apply(&u, t).unwrap());
        let off = d.sub(&a.p_d(&d, t));
        let rel = kglab_core::state::l2_norm(&g, &off) / kglab_core::state::l2_norm(&g, &d);
        assert!(rel < 1e-9, "t = {t}: {rel}");
        // and the difference is exactly 3 P_d u
        let expect = a.p_d(&u, t).scaled(3.0);
        assert!(kglab_core::state::l2_norm(&g, &d.sub(&expect)) < 1e-9);
    }
}

#[test]
fn inverse_identity_second_order() {
    let (g, s) = setup();
    let ch = FrozenChannel::new(&s, &g, 0.3, -2.0, None).unwrap();
    let horizon: f64 = 3.0;
    let mut defects = Vec::new();
    for dt in [0.04, 0.02, 0.01] {
        let steps = (horizon / dt).round() as usize;
        let gs = sample_stream(steps, dt, source(&g));
        let d = ch.identity_defect(&gs, dt).unwrap();
        defects.push(stream_norm(&g, dt, &d) / stream_norm(&g, dt, &gs));
    }
    let r1 = defects[0] / defects[1];
    let r2 = defects[1] / defects[2];
    assert!(defects[2] < 1e-2, "{defects:?}");
    assert!((3.0..=5.0).contains(&r1) && (3.5..=4.5).contains(&r2), "{defects:?}");
}

#[test]
fn shifted_t_reduces_to_t0_and_converges() {
    let (g, s) = setup();
    let ch = FrozenChannel::new(&s, &g, 0.3, 0.0, None).unwrap();
    let dt = 0.02;
    let gs = sample_stream(100, dt, source(&g));
    let t0 = ch.t0(&gs, dt).unwrap();
    let same = ch.t_shifted(&gs, dt, &|_| 0.0).unwrap();
    assert!(stream_norm(&g, dt, &stream_sub(&same, &t0)) < 1e-14);
    let mut gaps = Vec::new();
    for a in [0.04, 0.02, 0.01] {
        let t = ch.t_shifted(&gs, dt, &move |t| a * t).unwrap();
        gaps.push(stream_norm(&g, dt, &stream_sub(&t, &t0)));
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] > 0.0, "{gaps:?}");
}

#[test]
fn neumann_solves_small_drift() {
    let (g, s) = setup();
    let ch = FrozenChannel::new(&s, &g, 0.3, 0.0, None).unwrap();
    let dt = 0.02;
    let gs = sample_stream(100, dt, source(&g));
    let c = |t: f64| 0.01 * (t / 2.0).tanh();
    let sol = solve_one_minus_t(&ch, &gs, dt, &c, 40, 1e-10).unwrap();
    let res = one_minus_t_residual(&ch, &sol.solution, &gs, dt, &c).unwrap();
    assert!(res < 10.0 * dt * dt, "residual {res}, terms {:?}", sol.term_norms);
    assert!(sol.contraction < 1.0);
}

#[test]
fn neumann_flags_non_contraction() {
    let (g, _) = setup();
    let rhs = sample_stream(10, 0.1, source(&g));
    let e = neumann_invert(&rhs, |x| Ok(x.iter().map(|s| s.scaled(1.5)).collect()), |x| stream_norm(&g, 0.1, x), 10, 1e-8).unwrap_err();
    assert!(matches!(e, Error::NonContraction(_)), "{e}");
}

/// Source on the `+0.4` channel, weight on the `−0.4` channel, starting 4 apart; the truncated
/// interaction norm shrinks as the lag grows.
#[test]
fn truncated_norm_decreases_with_lag() {
    let g = Grid::new(2048, 160.0).unwrap();
    let f = |s: f64| g.sample(|x| (-(x - 2.0 - 0.4 * s).powi(2)).exp() * (1.5 * s).cos());
    let w = |t: f64| -2.0 - 0.4 * t;
    let c = |_t: f64| 0.0;
    let p = TruncatedNormParams { horizon: 90.0, dt: 0.05, sigma: 3.0 };
    let (rows, eta) = truncated_norm_table(&g, &f, &w, &c, &[5.0, 10.0, 20.0, 40.0], &p).unwrap();
    for pair in rows.windows(2) {
        assert!(pair[1].1 < pair[0].1, "{rows:?}");
    }
    assert!(eta > 0.0, "eta {eta}");
    let e = truncated_duhamel_norm(&g, &f, &w, &c, 95.0, &p).unwrap_err();
    assert!(matches!(e, Error::LagTooLong { .. }));
}
