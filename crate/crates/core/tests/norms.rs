use kglab_core::norms::{
    apply_fractional_d, besov_norm, energy_norm, lp_block, lp_blocks, lp_max_block, lp_norm, lp_overlap_constants, weighted_local_norm,
};
use kglab_core::state::StatePair;
use kglab_core::{Error, Grid};
use proptest::prelude::*;

fn gauss(g: &Grid) -> Vec<f64> {
    g.sample(|x| (-x * x).exp())
}

#[test]
fn grid_rejects_bad_sizes() {
    assert!(matches!(Grid::new(100, 10.0), Err(Error::InvalidGrid(_))));
    assert!(matches!(Grid::new(2, 10.0), Err(Error::InvalidGrid(_))));
    assert!(matches!(Grid::new(64, -1.0), Err(Error::InvalidGrid(_))));
    assert!(matches!(Grid::new(64, f64::NAN), Err(Error::InvalidGrid(_))));
}

#[test]
fn spectral_derivatives_of_a_gaussian() {
    let g = Grid::new(512, 20.0).unwrap();
    let f = gauss(&g);
    let d1 = g.derivative(&f);
    let d2 = g.second_derivative(&f);
    for ((x, a), b) in g.x().iter().zip(&d1).zip(&d2) {
        let e = (-x * x).exp();
        assert!((a + 2.0 * x * e).abs() < 1e-12);
        assert!((b - (4.0 * x * x - 2.0) * e).abs() < 1e-11);
    }
}

#[test]
fn trigonometric_interpolation_is_exact_on_the_lattice() {
    let g = Grid::new(64, std::f64::consts::PI * 4.0).unwrap();
    // k = 0.5 and 1.25 are lattice frequencies (m / 4)
    let f = g.sample(|x| (0.5 * x).sin() + 0.3 * (1.25 * x).cos());
    let pts = [0.123, -7.7, 3.3];
    let v = g.interpolate(&f, &pts);
    let d = g.interpolate_derivative(&f, &pts);
    for ((p, a), b) in pts.iter().zip(&v).zip(&d) {
        assert!((a - ((0.5 * p).sin() + 0.3 * (1.25 * p).cos())).abs() < 1e-12);
        assert!((b - (0.5 * (0.5 * p).cos() - 0.375 * (1.25 * p).sin())).abs() < 1e-12);
    }
}

#[test]
fn d_squared_is_one_minus_laplacian() {
    let g = Grid::new(512, 20.0).unwrap();
    let f = gauss(&g);
    let d2 = apply_fractional_d(&g, &f, 2.0);
    for (x, a) in g.x().iter().zip(&d2) {
        let e = (-x * x).exp();
        assert!((a - (e - (4.0 * x * x - 2.0) * e)).abs() < 1e-11);
    }
}

/// `u₁ = u₂ = e^{−x²}`: `‖u₁‖² + ‖u₁′‖² = √(2π)` and `‖u₂‖² = √(π/2)`.
#[test]
fn energy_norm_closed_form() {
    let g = Grid::new(512, 20.0).unwrap();
    let u = StatePair::new(gauss(&g), gauss(&g));
    let exact = ((2.0 * std::f64::consts::PI).sqrt() + (0.5 * std::f64::consts::PI).sqrt()).sqrt();
    assert!((energy_norm(&g, &u) - exact).abs() < 1e-13);
}

#[test]
fn weighted_norm_without_weight_is_the_energy_norm() {
    let g = Grid::new(256, 20.0).unwrap();
    let u = StatePair::new(gauss(&g), g.sample(|x| x * (-x * x).exp()));
    let w = weighted_local_norm(&g, &u, &[3.0], 0.0, 0.0).unwrap();
    assert!((w - energy_norm(&g, &u)).abs() < 1e-13);
    let two = weighted_local_norm(&g, &u, &[3.0, -3.0], 2.0, 0.5).unwrap();
    assert!(two > 0.0 && two < 2.0 * energy_norm(&g, &u));
    assert!(matches!(weighted_local_norm(&g, &u, &[], 2.0, 0.0), Err(Error::NoCentres)));
    assert!(weighted_local_norm(&g, &u, &[0.0], -1.0, 0.0).is_err());
}

#[test]
fn littlewood_paley_plancherel() {
    let g = Grid::new(1024, 20.0).unwrap();
    let f = g.sample(|x| (-x * x).exp() * (6.0 * x).cos() + (-(x - 2.0).powi(2) * 4.0).exp());
    let (c, cc) = lp_overlap_constants();
    let total: f64 = lp_blocks(&g, &f).iter().map(|b| g.norm_l2(b).powi(2)).sum();
    let n2 = g.norm_l2(&f).powi(2);
    assert!(total >= c * n2 * (1.0 - 1e-12) && total <= cc * n2 * (1.0 + 1e-12), "{total} vs {n2}");
    // B^0_{2,2} is the same sum
    let b = besov_norm(&g, &f, 0.0, 2.0, 2.0).unwrap();
    assert!((b * b - total).abs() < 1e-12 * total);
    // blocks are the single-block operator
    let blocks = lp_blocks(&g, &f);
    let b3 = lp_block(&g, &f, 3).unwrap();
    assert!(b3.iter().zip(&blocks[3]).all(|(a, b)| (a - b).abs() < 1e-14));
}

/// A single lattice frequency `k = 1.5·2^j` sits midway in the overlap of
/// blocks `j` and `j + 1`, each of which passes exactly half of it, so
/// `B^s_{∞,∞} = 2^{(j+1)s}/2`.
#[test]
fn besov_oracle_single_frequency() {
    let g = Grid::new(1024, 16.0 * std::f64::consts::PI).unwrap();
    for j in 2..5 {
        let k = (j as f64).exp2() * 1.5;
        let f = g.sample(|x| (k * x).cos());
        let blocks = lp_blocks(&g, &f);
        for (i, b) in blocks.iter().enumerate() {
            let m = lp_norm(&g, b, f64::INFINITY);
            if i == j || i == j + 1 {
                assert!((m - 0.5).abs() < 1e-12, "block {i}: {m}");
            } else {
                assert!(m < 1e-12, "block {i}: {m}");
            }
        }
        let bs = besov_norm(&g, &f, 0.5, f64::INFINITY, f64::INFINITY).unwrap();
        assert!((bs - 0.5 * (0.5 * (j + 1) as f64).exp2()).abs() < 1e-11);
    }
}

#[test]
fn unresolved_block_and_bad_indices() {
    let g = Grid::new(64, 10.0).unwrap();
    let f = gauss(&g);
    let e = lp_block(&g, &f, lp_max_block(&g) + 1).unwrap_err();
    assert!(matches!(e, Error::UnresolvedBlock { .. }));
    assert!(besov_norm(&g, &f, 0.0, 0.5, 2.0).is_err());
}

proptest! {
    #[test]
    fn wrap_lands_in_the_box(x in -1e4f64..1e4) {
        let g = Grid::new(64, 7.5).unwrap();
        let w = g.wrap(x);
        prop_assert!((-7.5..7.5).contains(&w));
        let periods = (x - w) / 15.0;
        prop_assert!((periods - periods.round()).abs() < 1e-9);
    }

    #[test]
    fn fractional_d_group_law(s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let g = Grid::new(128, 10.0).unwrap();
        let f = gauss(&g);
        let a = apply_fractional_d(&g, &apply_fractional_d(&g, &f, s), t);
        let b = apply_fractional_d(&g, &f, s + t);
        let scale = g.norm_l2(&b).max(1.0);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12 * scale * 1e2));
    }
}
