//! Fourier multipliers and the norms used by the diagnostics: energy,
//! weighted local energy and Littlewood–Paley/Besov.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::state::StatePair;

/// Japanese bracket symbol `(1 + k²)^{1/2}`.
#[inline]
pub fn bracket(k: f64) -> f64 {
    (1.0 + k * k).sqrt()
}

/// Applies `D^s = (1 - Δ)^{s/2}`.
pub fn apply_fractional_d(grid: &Grid, f: &[f64], s: f64) -> Vec<f64> {
    if s == 0.0 {
        return f.to_vec();
    }
    grid.apply_symbol(f, |k| (1.0 + k * k).powf(0.5 * s))
}

/// `(‖D u₁‖² + ‖u₂‖²)^{1/2}` with Riemann quadrature.
pub fn energy_norm(grid: &Grid, u: &StatePair) -> f64 {
    let spec = grid.spectrum_of(&u.u);
    let hn = grid.h() / grid.n() as f64;
    let a: f64 = spec.iter().zip(grid.k()).map(|(z, &k)| (1.0 + k * k) * z.norm_sqr()).sum();
    (hn * a + grid.dot(&u.ut, &u.ut)).sqrt()
}

/// Weight `⟨x − y⟩^{−σ}` with the periodic distance to the centre.
pub fn bracket_weight(grid: &Grid, centre: f64, sigma: f64) -> Vec<f64> {
    grid.x()
        .iter()
        .map(|&x| {
            let d = grid.wrap(x - centre);
            (1.0 + d * d).powf(-0.5 * sigma)
        })
        .collect()
}

/// Local energy around each centre at one time slice:
/// `Σ_j (‖w_j D^{−ν/2} D u₁‖² + ‖w_j D^{−ν/2} u₂‖²)^{1/2}` with
/// `w_j = ⟨x − y_j⟩^{−σ}`.
pub fn weighted_local_norm(grid: &Grid, u: &StatePair, centres: &[f64], sigma: f64, nu: f64) -> Result<f64> {
    Ok(weighted_local_norms(grid, u, centres, sigma, nu)?.iter().sum())
}

/// Per-centre terms of [`weighted_local_norm`].
pub fn weighted_local_norms(grid: &Grid, u: &StatePair, centres: &[f64], sigma: f64, nu: f64) -> Result<Vec<f64>> {
    if centres.is_empty() {
        return Err(Error::NoCentres);
    }
    if sigma < 0.0 || nu < 0.0 {
        return Err(Error::InvalidParameter(format!("sigma = {sigma}, nu = {nu} must be non-negative")));
    }
    let (a, b) = grid.apply_matrix_symbol(&u.u, &u.ut, |k| {
        let d = bracket(k);
        let s = d.powf(-0.5 * nu);
        [d * s, 0.0, 0.0, s]
    });
    Ok(centres
        .iter()
        .map(|&c| {
            let w = bracket_weight(grid, c, sigma);
            let sa: f64 = a.iter().zip(&w).map(|(v, w)| (v * w) * (v * w)).sum();
            let sb: f64 = b.iter().zip(&w).map(|(v, w)| (v * w) * (v * w)).sum();
            (grid.h() * (sa + sb)).sqrt()
        })
        .collect())
}

/// Smooth step rising from 0 at `t <= 0` to 1 at `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Radial bump equal to 1 on `|ξ| <= 1` and 0 on `|ξ| >= 2`.
pub fn lp_bump(r: f64) -> f64 {
    smooth_step(2.0 - r.abs())
}

/// Symbol of block `j`: block 0 is the low-frequency bump, block `j >= 1`
/// is supported on `2^{j-1} <= |ξ| <= 2^{j+1}`.
pub fn lp_symbol(j: usize, xi: f64) -> f64 {
    if j == 0 {
        lp_bump(xi)
    } else {
        let s = (j as f64).exp2();
        lp_bump(xi / s) - lp_bump(2.0 * xi / s)
    }
}

/// Index of the last block that still touches resolved frequencies.
pub fn lp_max_block(grid: &Grid) -> usize {
    let kn = grid.k_nyquist();
    let mut j = 0usize;
    while (j as f64).exp2() < kn {
        j += 1;
    }
    j
}

pub fn lp_block(grid: &Grid, f: &[f64], j: usize) -> Result<Vec<f64>> {
    let max = lp_max_block(grid);
    if j > max {
        return Err(Error::UnresolvedBlock { block: j, max });
    }
    Ok(grid.apply_symbol(f, |k| lp_symbol(j, k)))
}

/// All blocks `0..=lp_max_block`, sharing one forward transform.
pub fn lp_blocks(grid: &Grid, f: &[f64]) -> Vec<Vec<f64>> {
    let spec = grid.spectrum_of(f);
    (0..=lp_max_block(grid))
        .map(|j| {
            let b: Vec<_> = spec.iter().zip(grid.k()).map(|(z, &k)| z * lp_symbol(j, k)).collect();
            grid.real_from_spectrum(b)
        })
        .collect()
}

/// Lower and upper bounds of `Σ_j ψ_j(ξ)²` over all frequencies, sampled
/// finely on one dyadic period and the low-frequency region.
pub fn lp_overlap_constants() -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let samples = 40_000;
    for i in 0..=samples {
        let xi = 8.0 * i as f64 / samples as f64;
        let s: f64 = (0..6).map(|j| lp_symbol(j, xi).powi(2)).sum();
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

/// Discrete `L^p` norm with weight `h`; `p = ∞` gives the max norm.
pub fn lp_norm(grid: &Grid, f: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return f.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    (grid.h() * f.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
}

/// Besov norm `(Σ_j (2^{js} ‖Δ_j f‖_{L^p})^q)^{1/q}`.
pub fn besov_norm(grid: &Grid, f: &[f64], s: f64, p: f64, q: f64) -> Result<f64> {
    if !(p >= 1.0 && q >= 1.0) {
        return Err(Error::InvalidParameter(format!("Besov indices p = {p}, q = {q} must be >= 1")));
    }
    let terms: Vec<f64> = lp_blocks(grid, f)
        .iter()
        .enumerate()
        .map(|(j, b)| (s * j as f64).exp2() * lp_norm(grid, b, p))
        .collect();
    Ok(if q.is_infinite() {
        terms.iter().fold(0.0, |m: f64, v| m.max(*v))
    } else {
        terms.iter().map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_step_limits() {
        assert_eq!(smooth_step(-1.0), 0.0);
        assert_eq!(smooth_step(2.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_telescopes_to_one() {
        let g = Grid::new(256, 20.0).unwrap();
        let jmax = lp_max_block(&g);
        for &k in g.k() {
            let s: f64 = (0..=jmax).map(|j| lp_symbol(j, k)).sum();
            assert!((s - 1.0).abs() < 1e-14, "k = {k}, sum = {s}");
        }
    }

    #[test]
    fn overlap_constants_bracket_one_half_and_one() {
        let (c, cc) = lp_overlap_constants();
        assert!((0.5 - 1e-12..1.0).contains(&c));
        assert!((cc - 1.0).abs() < 1e-12);
    }
}
