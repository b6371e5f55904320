//! Bound states of the scalar operator `L = −∂² + 1 + V` on the periodic grid.
//!
//! The operator is assembled densely from the exact Fourier second-derivative
//! matrix and diagonalized; eigenvalues below the continuum edge 1 are sorted
//! into strictly negative levels, zero modes and (flagged) gap eigenvalues.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potentials::{linear_fit, PotentialSpec};

pub const DEFAULT_ZERO_BAND: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Eigenpair {
    /// Eigenvalue of `L`.
    pub value: f64,
    /// L²-normalized eigenfunction, positive on its rightmost lobe.
    pub phi: Vec<f64>,
    /// `‖Lφ − value·φ‖_{L²}`.
    pub residual: f64,
}

impl Eigenpair {
    /// `ν` with `value = −ν²` (zero for zero modes).
    pub fn nu(&self) -> f64 {
        (-self.value).max(0.0).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct ScalarSpectrum {
    pub grid: Grid,
    pub potential: PotentialSpec,
    pub zero_band: f64,
    /// Levels `−ν_k²`, most negative first.
    pub negative: Vec<Eigenpair>,
    pub zero: Vec<Eigenpair>,
    /// Eigenvalues in `(zero_band, 1 − zero_band)`; outside the standing assumptions.
    pub gap: Vec<f64>,
}

impl ScalarSpectrum {
    pub fn nus(&self) -> Vec<f64> {
        self.negative.iter().map(Eigenpair::nu).collect()
    }

    pub fn k(&self) -> usize {
        self.negative.len()
    }

    pub fn m(&self) -> usize {
        self.zero.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.negative.iter().chain(&self.zero).map(|e| e.value).collect()
    }

    /// Refuses spectra with eigenvalues inside the gap unless overridden.
    pub fn check_assumptions(&self, allow_gap: bool) -> Result<()> {
        match self.gap.first() {
            Some(&g) if !allow_gap => Err(Error::GapEigenvalue(g)),
            _ => Ok(()),
        }
    }
}

/// Applies `L = −∂² + 1 + V` spectrally.
pub fn apply_scalar_operator(grid: &Grid, v: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = grid.apply_symbol(f, |k| k * k + 1.0);
    for ((o, vv), ff) in out.iter_mut().zip(v).zip(f) {
        *o += vv * ff;
    }
    out
}

/// First column of the circulant Fourier matrix of `−∂²`.
pub fn neg_laplacian_column(grid: &Grid) -> Vec<f64> {
    let n = grid.n();
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    grid.apply_symbol(&e0, |k| k * k)
}

/// Dense matrix of `L` in the grid basis.
pub fn dense_scalar_operator(grid: &Grid, v: &[f64]) -> Mat<f64> {
    let n = grid.n();
    let col = neg_laplacian_column(grid);
    Mat::from_fn(n, n, |i, j| {
        let d = col[(i + n - j) % n];
        if i == j {
            d + 1.0 + v[i]
        } else {
            d
        }
    })
}

fn orient(phi: &mut [f64]) {
    let m = phi.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if let Some(v) = phi.iter().rev().find(|v| v.abs() > 1e-3 * m) {
        if *v < 0.0 {
            phi.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// All eigenpairs of the discretized `L` below `cap`, ascending.
pub fn eigenpairs_below(grid: &Grid, v: &[f64], cap: f64) -> Result<Vec<Eigenpair>> {
    let a = dense_scalar_operator(grid, v);
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let n = grid.n();
    let scale = 1.0 / grid.h().sqrt();
    let mut out = Vec::new();
    for i in 0..n {
        let lam = s[i];
        if !lam.is_finite() {
            return Err(Error::Eigensolver("non-finite eigenvalue".into()));
        }
        if lam >= cap {
            continue;
        }
        let mut phi: Vec<f64> = (0..n).map(|r| u[(r, i)] * scale).collect();
        orient(&mut phi);
        let lphi = apply_scalar_operator(grid, v, &phi);
        let value = grid.dot(&phi, &lphi);
        let res: Vec<f64> = lphi.iter().zip(&phi).map(|(a, b)| a - value * b).collect();
        out.push(Eigenpair { value, phi, residual: grid.norm_l2(&res) });
    }
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(out)
}

/// Eigenvalues below the continuum edge, classified.
pub fn solve_scalar_spectrum(spec: &PotentialSpec, grid: &Grid, zero_band: f64) -> Result<ScalarSpectrum> {
    spec.validate()?;
    let v = spec.sample(grid, 0.0, 0.0)?;
    let pairs = eigenpairs_below(grid, &v, 1.0 - zero_band)?;
    let mut negative = Vec::new();
    let mut zero = Vec::new();
    let mut gap = Vec::new();
    for p in pairs {
        let tol = 1e-8 * (1.0 + p.value.abs());
        if p.residual > tol.max(1e-8) {
            return Err(Error::Eigensolver(format!("residual {:.3e} for eigenvalue {}", p.residual, p.value)));
        }
        if p.value < -zero_band {
            negative.push(p);
        } else if p.value <= zero_band {
            zero.push(p);
        } else {
            gap.push(p.value);
        }
    }
    Ok(ScalarSpectrum { grid: grid.clone(), potential: spec.clone(), zero_band, negative, zero, gap })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgmonFit {
    /// Fitted exponential rate of `|φ|` on the tails.
    pub rate: f64,
    /// `√(1 + ν²)`, the rate expected for an eigenvalue `−ν²` of `L`.
    pub reference: f64,
    pub relative_residual: f64,
    pub samples: usize,
}

/// Fits `log|φ|` against `|x|` on both tails.
///
/// The window starts where `|φ|` has dropped to 1e−3 of its peak and stops
/// either at 90% of the half-box or at the noise floor, whichever is first.
pub fn agmon_decay_rate(grid: &Grid, phi: &[f64], nu: f64) -> Result<AgmonFit> {
    let peak = phi.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let floor = 1e-12 * peak;
    let edge = 0.9 * grid.lx();
    let mut pts = Vec::new();
    let n = grid.n();
    let mid = n / 2;
    for side in [1isize, -1] {
        // Walk outward from the largest sample on this side.
        let half: Vec<usize> = if side > 0 { (mid..n).collect() } else { (0..=mid).collect() };
        let start = half.iter().copied().max_by(|&a, &b| phi[a].abs().total_cmp(&phi[b].abs())).unwrap_or(mid);
        let mut started = false;
        let mut i = start as isize;
        while i >= 0 && (i as usize) < n {
            let x = grid.x()[i as usize];
            let v = phi[i as usize].abs();
            if x.abs() > edge || v < floor {
                break;
            }
            if !started && v < 1e-3 * peak {
                started = true;
            }
            if started {
                pts.push((x.abs(), v.ln()));
            }
            i += side;
        }
    }
    if pts.len() < 8 {
        return Err(Error::TailBelowNoise(pts.len()));
    }
    let (_, slope, rms) = linear_fit(&pts);
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let rel = rms / (hi - lo).max(f64::MIN_POSITIVE);
    if rel > 1e-2 {
        return Err(Error::NotExponential(rel));
    }
    Ok(AgmonFit { rate: -slope, reference: (1.0 + nu * nu).sqrt(), relative_residual: rel, samples: pts.len() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonanceRung {
    pub lx: f64,
    pub n: usize,
    /// Eigenvalue closest to the edge from below, if any lies in the window.
    pub near_edge: Option<f64>,
    /// Fraction of the L² mass of that state outside `|x| < lx/2`.
    pub tail_fraction: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonanceVerdict {
    pub suspected: bool,
    pub rungs: Vec<ResonanceRung>,
    /// `ψ'(+X)` of the zero-energy solution with `ψ = 1, ψ' = 0` at `−X`.
    pub edge_slope: f64,
    /// Human-readable reason; the ladder is a screening heuristic only.
    pub note: String,
}

#[derive(Clone, Copy, Debug)]
pub struct ResonanceParams {
    /// Grid spacing kept fixed along the ladder.
    pub h: f64,
    /// Only states with `1 − window < E < 1 − edge_tol` are examined.
    pub window: f64,
    pub edge_tol: f64,
    /// Tail fraction above which a state counts as unlocalized.
    pub tail_tol: f64,
    /// Relative drift of the binding energy between the last two rungs.
    pub drift_tol: f64,
    /// `|ψ'(+X)|` below which the zero-energy solution counts as bounded.
    pub slope_tol: f64,
}

impl Default for ResonanceParams {
    fn default() -> Self {
        Self { h: 0.15625, window: 0.01, edge_tol: 1e-9, tail_tol: 0.01, drift_tol: 0.1, slope_tol: 0.05 }
    }
}

/// Slope at `+x_max` of the solution of `−ψ'' + Vψ = 0` that starts flat at
/// `−x_max` (RK4). It vanishes exactly when `L` has a resonance at 1, since
/// then the solution bounded on the left stays bounded on the right.
pub fn zero_energy_slope(spec: &PotentialSpec, x_max: f64, step: f64) -> f64 {
    let n = (2.0 * x_max / step).ceil() as usize;
    let h = 2.0 * x_max / n as f64;
    let f = |x: f64, y: [f64; 2]| [y[1], spec.eval(x) * y[0]];
    let mut y = [1.0, 0.0];
    let mut x = -x_max;
    for _ in 0..n {
        let k1 = f(x, y);
        let k2 = f(x + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = f(x + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = f(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        x += h;
    }
    y[1]
}

/// Screening for a threshold resonance at the continuum edge.
///
/// A weakly bound state shows up on the box ladder as an eigenvalue just
/// below 1 whose mass is not localized in the box or whose binding energy
/// keeps moving as the box grows. A resonance sitting exactly at the edge has
/// no such eigenvalue; the zero-energy shot catches it instead.
pub fn detect_threshold_resonance(spec: &PotentialSpec, ladder: &[f64], params: ResonanceParams) -> Result<ResonanceVerdict> {
    if ladder.len() < 3 {
        return Err(Error::InvalidParameter("resonance ladder needs at least three box sizes".into()));
    }
    let mut rungs = Vec::new();
    for &lx in ladder {
        let n = ((2.0 * lx / params.h).round() as usize).next_power_of_two();
        let grid = Grid::new(n, lx)?;
        let v = spec.sample(&grid, 0.0, 0.0)?;
        let pairs = eigenpairs_below(&grid, &v, 1.0 - params.edge_tol)?;
        let cand = pairs.iter().rev().find(|p| p.value > 1.0 - params.window);
        let (near_edge, tail_fraction) = match cand {
            Some(p) => {
                let outside: f64 = grid
                    .x()
                    .iter()
                    .zip(&p.phi)
                    .filter(|(x, _)| x.abs() >= 0.5 * lx)
                    .map(|(_, f)| f * f)
                    .sum::<f64>()
                    * grid.h();
                (Some(p.value), Some(outside))
            }
            None => (None, None),
        };
        rungs.push(ResonanceRung { lx, n, near_edge, tail_fraction });
    }
    let last = &rungs[rungs.len() - 1];
    let prev = &rungs[rungs.len() - 2];
    let mut reasons = Vec::new();
    if let Some(t) = last.tail_fraction {
        if t > params.tail_tol {
            reasons.push(format!("edge state carries {t:.2e} of its mass in the outer half of the box"));
        }
    }
    match (prev.near_edge, last.near_edge) {
        (Some(a), Some(b)) => {
            let (ba, bb) = (1.0 - a, 1.0 - b);
            let drift = (ba - bb).abs() / ba.max(bb);
            if drift > params.drift_tol {
                reasons.push(format!("binding energy drifts by {drift:.2e} between the last two boxes"));
            }
        }
        (None, Some(_)) | (Some(_), None) => reasons.push("edge state appears or disappears along the ladder".into()),
        (None, None) => {}
    }
    let x_max = ladder.iter().cloned().fold(0.0, f64::max);
    let edge_slope = zero_energy_slope(spec, x_max, 1e-3);
    if edge_slope.abs() < params.slope_tol {
        reasons.push(format!("zero-energy solution stays bounded (slope {edge_slope:.2e})"));
    }
    let suspected = !reasons.is_empty();
    let note = if suspected {
        format!("resonance suspected (screening heuristic): {}", reasons.join("; "))
    } else {
        "clean (screening heuristic): no unlocalized state below the edge".into()
    };
    Ok(ResonanceVerdict { suspected, rungs, edge_slope, note })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circulant_column_matches_spectral_operator() {
        let g = Grid::new(64, 6.0).unwrap();
        let v = g.sample(|x| -2.0 / x.cosh().powi(2));
        let f = g.sample(|x| (-(x * x)).exp() * (1.0 + x));
        let a = dense_scalar_operator(&g, &v);
        let lf = apply_scalar_operator(&g, &v, &f);
        for i in 0..g.n() {
            let s: f64 = (0..g.n()).map(|j| a[(i, j)] * f[j]).sum();
            assert!((s - lf[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn free_operator_has_no_bound_states() {
        let g = Grid::new(128, 20.0).unwrap();
        let s = solve_scalar_spectrum(&PotentialSpec::poeschl_teller(0.0, 1.0), &g, DEFAULT_ZERO_BAND).unwrap();
        assert_eq!((s.k(), s.m()), (0, 0));
        assert!(s.gap.is_empty());
    }
}
