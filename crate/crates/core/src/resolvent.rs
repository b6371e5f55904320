//! Resolvents `ℛ_β(λ) = (ℒ_β − iλ)^{−1}` of the matrix operator and their
//! scalar reduction.
//!
//! Writing `D = β∂ − iλ`, the system `(ℒ_β − iλ)u = f` reduces to
//! `S u₁ = D f₁ − f₂`, `u₂ = f₁ − D u₁` with the scalar operator
//! `S = −(1 − β²)∂² − 2iβλ∂ + V + 1 − λ²`, whose inverse is `𝓡_β(λ)`.
//! An optional absorbing layer adds `−s(x)` to the lower right entry of `ℒ_β`;
//! it only exists to give the periodic box a continuous-spectrum surrogate.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potentials::{gamma1, PotentialSpec};
use crate::state::StatePair;

/// Largest `N` for which the scalar operator is factorized densely.
pub const MAX_DENSE_N: usize = 2048;
/// Largest `N` for the unreduced `2N × 2N` validation solve.
pub const MAX_DIRECT_N: usize = 1024;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Complex state `(u₁, u₂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CState {
    pub u: Vec<C64>,
    pub ut: Vec<C64>,
}

impl CState {
    pub fn from_real(s: &StatePair) -> Self {
        CState { u: s.u.iter().map(|&v| v.into()).collect(), ut: s.ut.iter().map(|&v| v.into()).collect() }
    }

    pub fn zeros(n: usize) -> Self {
        CState { u: vec![C64::default(); n], ut: vec![C64::default(); n] }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn axpy(&mut self, a: C64, o: &CState) {
        self.u.iter_mut().zip(&o.u).for_each(|(x, y)| *x += a * y);
        self.ut.iter_mut().zip(&o.ut).for_each(|(x, y)| *x += a * y);
    }

    pub fn sub(&self, o: &CState) -> CState {
        let mut s = self.clone();
        s.axpy(C64::new(-1.0, 0.0), o);
        s
    }

    pub fn scale(&mut self, a: C64) {
        self.u.iter_mut().chain(self.ut.iter_mut()).for_each(|x| *x *= a);
    }

    pub fn weighted(&self, w: &[f64]) -> CState {
        CState {
            u: self.u.iter().zip(w).map(|(a, b)| a * b).collect(),
            ut: self.ut.iter().zip(w).map(|(a, b)| a * b).collect(),
        }
    }

    /// `(‖u₁‖² + ‖u₂‖²)^{1/2}` in L².
    pub fn norm(&self, grid: &Grid) -> f64 {
        (grid.norm_l2_complex(&self.u).powi(2) + grid.norm_l2_complex(&self.ut).powi(2)).sqrt()
    }

    /// `Σ conj(a)·b` with quadrature weight.
    pub fn inner(&self, grid: &Grid, o: &CState) -> C64 {
        let s: C64 = self.u.iter().zip(&o.u).chain(self.ut.iter().zip(&o.ut)).map(|(a, b)| a.conj() * b).sum();
        s * grid.h()
    }
}

/// Absorbing layer `s(x) = strength · q((|x| − start)/(lx − start))²` with a
/// smooth ramp `q`, active only near the box edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sponge {
    /// Fraction of the half-box where the layer starts.
    pub start_fraction: f64,
    pub strength: f64,
}

impl Default for Sponge {
    fn default() -> Self {
        Sponge { start_fraction: 0.7, strength: 1.5 }
    }
}

impl Sponge {
    pub fn profile(&self, grid: &Grid) -> Vec<f64> {
        let a = self.start_fraction * grid.lx();
        let w = grid.lx() - a;
        grid.sample(|x| {
            let t = ((x.abs() - a) / w).clamp(0.0, 1.0);
            let q = t * t * (3.0 - 2.0 * t);
            self.strength * q * q
        })
    }
}

/// Circulant columns of the discrete `∂` (Nyquist removed), `∂∂` and `−∂²`.
struct Circulants {
    d1: Vec<f64>,
    d11: Vec<f64>,
    neg_d2: Vec<f64>,
}

impl Circulants {
    fn new(grid: &Grid) -> Self {
        let mut e0 = vec![0.0; grid.n()];
        e0[0] = 1.0;
        let d1 = grid.derivative(&e0);
        let d11 = grid.derivative(&d1);
        let neg_d2 = grid.apply_symbol(&e0, |k| k * k);
        Circulants { d1, d11, neg_d2 }
    }

    fn at(col: &[f64], i: usize, j: usize) -> f64 {
        let n = col.len();
        col[(i + n - j) % n]
    }
}

/// Discrete `ℒ_β − iλ`, with potential and absorbing layer, and its scalar
/// reduction. All applies use the same Fourier derivatives, so the two
/// solution paths describe the same matrix.
#[derive(Clone, Debug)]
pub struct ResolventOperator {
    grid: Grid,
    lambda: C64,
    beta: f64,
    v: Vec<f64>,
    s: Vec<f64>,
    /// `None` when the scalar operator is diagonal in Fourier space.
    lu: Option<PartialPivLu<C64>>,
}

impl ResolventOperator {
    /// Free resolvent `ℛ_{0,β}(λ)`.
    pub fn free(grid: &Grid, lambda: C64, beta: f64) -> Result<Self> {
        Self::build(grid, lambda, beta, None, &[], None)
    }

    /// Perturbed resolvent. `v` is the boosted, centred potential and
    /// `point_spectrum` the discrete eigenvalues of `ℒ_β` (for example
    /// `±ν_k/γ` and 0 when zero modes exist).
    pub fn perturbed(grid: &Grid, lambda: C64, beta: f64, v: &[f64], point_spectrum: &[f64]) -> Result<Self> {
        Self::build(grid, lambda, beta, Some(v), point_spectrum, None)
    }

    /// Resolvent with an absorbing layer; real `λ` is then admissible.
    pub fn with_sponge(grid: &Grid, lambda: C64, beta: f64, v: Option<&[f64]>, sponge: Sponge) -> Result<Self> {
        Self::build(grid, lambda, beta, v, &[], Some(sponge))
    }

    fn build(
        grid: &Grid,
        lambda: C64,
        beta: f64,
        v: Option<&[f64]>,
        point_spectrum: &[f64],
        sponge: Option<Sponge>,
    ) -> Result<Self> {
        let gamma = gamma1(beta)?;
        if !(lambda.re.is_finite() && lambda.im.is_finite()) {
            return Err(Error::NonFinite("spectral parameter"));
        }
        let n = grid.n();
        if let Some(v) = v {
            if v.len() != n {
                return Err(Error::GridMismatch);
            }
        }
        let edge = 1.0 / gamma;
        if sponge.is_none() && lambda.im.abs() < 1e-12 && lambda.re.abs() >= edge - 1e-12 {
            return Err(Error::OnContinuousSpectrum { lambda: lambda.re, edge });
        }
        let z = I * lambda;
        for &e in point_spectrum {
            let d = (z - e).norm();
            if d < 1e-3 {
                return Err(Error::NearEigenvalue { lambda: format!("{lambda}"), eigenvalue: e, distance: d });
            }
        }
        let s = sponge.map(|sp| sp.profile(grid)).unwrap_or_else(|| vec![0.0; n]);
        let vv = v.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        let diagonal = v.is_none() && sponge.is_none();
        let lu = if diagonal {
            None
        } else {
            if n > MAX_DENSE_N {
                return Err(Error::TooLarge { n, max: MAX_DENSE_N });
            }
            Some(scalar_matrix(grid, lambda, beta, &vv, &s).partial_piv_lu())
        };
        Ok(ResolventOperator { grid: grid.clone(), lambda, beta, v: vv, s, lu })
    }

    pub fn lambda(&self) -> C64 {
        self.lambda
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn d(&self, f: &[C64]) -> Vec<C64> {
        let df = self.grid.derivative_complex(f);
        df.iter().zip(f).map(|(a, b)| self.beta * a - I * self.lambda * b).collect()
    }

    /// `D* g` for the Euclidean adjoint (`∂` is skew on the grid).
    fn d_adj(&self, f: &[C64]) -> Vec<C64> {
        let df = self.grid.derivative_complex(f);
        df.iter().zip(f).map(|(a, b)| -self.beta * a + I * self.lambda.conj() * b).collect()
    }

    fn e(&self, f: &[C64]) -> Vec<C64> {
        let mut out = self.d(f);
        out.iter_mut().zip(&self.s).zip(f).for_each(|((o, s), b)| *o -= s * b);
        out
    }

    fn e_adj(&self, f: &[C64]) -> Vec<C64> {
        let mut out = self.d_adj(f);
        out.iter_mut().zip(&self.s).zip(f).for_each(|((o, s), b)| *o -= s * b);
        out
    }

    /// `(ℒ_β − iλ) u`, applied spectrally.
    pub fn apply_operator(&self, u: &CState) -> CState {
        let a: Vec<C64> = self.d(&u.u).iter().zip(&u.ut).map(|(x, y)| x + y).collect();
        let d2 = self.grid.apply_symbol_complex(&u.u, |k| C64::new(-k * k, 0.0));
        let eu2 = self.e(&u.ut);
        let b = (0..u.len()).map(|i| d2[i] - (self.v[i] + 1.0) * u.u[i] + eu2[i]).collect();
        CState { u: a, ut: b }
    }

    /// Scalar resolvent `𝓡_β(λ) g = S^{−1} g`.
    pub fn scalar_apply(&self, g: &[C64]) -> Vec<C64> {
        match &self.lu {
            Some(lu) => solve_col(lu, g, false),
            None => {
                let (b, l) = (self.beta, self.lambda);
                let ny = self.grid.nyquist_index();
                let kd: Vec<f64> = self.grid.k().iter().enumerate().map(|(j, &k)| if j == ny { 0.0 } else { k }).collect();
                let mut buf = g.to_vec();
                self.grid.forward(&mut buf);
                for (j, z) in buf.iter_mut().enumerate() {
                    let k = self.grid.k()[j];
                    let sym = k * k + 1.0 + (I * b * kd[j] - I * l).powi(2);
                    *z /= sym;
                }
                self.grid.inverse(&mut buf);
                buf
            }
        }
    }

    fn scalar_apply_adjoint(&self, g: &[C64]) -> Vec<C64> {
        match &self.lu {
            Some(lu) => solve_col(lu, g, true),
            None => {
                let (b, l) = (self.beta, self.lambda);
                let ny = self.grid.nyquist_index();
                let mut buf = g.to_vec();
                self.grid.forward(&mut buf);
                for (j, z) in buf.iter_mut().enumerate() {
                    let k = self.grid.k()[j];
                    let kd = if j == ny { 0.0 } else { k };
                    let sym = k * k + 1.0 + (I * b * kd - I * l).powi(2);
                    *z /= sym.conj();
                }
                self.grid.inverse(&mut buf);
                buf
            }
        }
    }

    /// `ℛ_β(λ) f` through the scalar reduction.
    pub fn apply(&self, f: &CState) -> CState {
        let rhs: Vec<C64> = self.e(&f.u).iter().zip(&f.ut).map(|(a, b)| a - b).collect();
        let u1 = self.scalar_apply(&rhs);
        let du1 = self.d(&u1);
        let u2 = f.u.iter().zip(&du1).map(|(a, b)| a - b).collect();
        CState { u: u1, ut: u2 }
    }

    /// Euclidean adjoint of [`Self::apply`].
    pub fn apply_adjoint(&self, g: &CState) -> CState {
        let dg2 = self.d_adj(&g.ut);
        let rhs: Vec<C64> = g.u.iter().zip(&dg2).map(|(a, b)| a - b).collect();
        let w = self.scalar_apply_adjoint(&rhs);
        let ew = self.e_adj(&w);
        CState { u: g.ut.iter().zip(&ew).map(|(a, b)| a + b).collect(), ut: w.iter().map(|x| -x).collect() }
    }

    /// The four blocks of `ℛ_β` applied to `f`, assembled from the scalar
    /// resolvent: `[[𝓡E, −𝓡], [1 − D𝓡E, D𝓡]]` (with `E = D` without sponge).
    pub fn blocks_apply(&self, f: &CState) -> CState {
        let r_ef1 = self.scalar_apply(&self.e(&f.u));
        let r_f2 = self.scalar_apply(&f.ut);
        let d_ref1 = self.d(&r_ef1);
        let d_rf2 = self.d(&r_f2);
        CState {
            u: r_ef1.iter().zip(&r_f2).map(|(a, b)| a - b).collect(),
            ut: (0..f.len()).map(|i| f.u[i] - d_ref1[i] + d_rf2[i]).collect(),
        }
    }

    /// Unreduced `2N × 2N` dense solve of `(ℒ_β − iλ) u = f`.
    pub fn direct(&self) -> Result<DirectSolver> {
        let n = self.grid.n();
        if n > MAX_DIRECT_N {
            return Err(Error::TooLarge { n, max: MAX_DIRECT_N });
        }
        let c = Circulants::new(&self.grid);
        let il = I * self.lambda;
        let m = Mat::<C64>::from_fn(2 * n, 2 * n, |r, q| {
            let (i, j) = (r % n, q % n);
            let diag = if i == j { 1.0 } else { 0.0 };
            match (r < n, q < n) {
                (true, true) => C64::from(self.beta * Circulants::at(&c.d1, i, j)) - il * diag,
                (true, false) => C64::from(diag),
                (false, true) => C64::from(-Circulants::at(&c.neg_d2, i, j) - (self.v[i] + 1.0) * diag),
                (false, false) => C64::from(self.beta * Circulants::at(&c.d1, i, j) - self.s[i] * diag) - il * diag,
            }
        });
        Ok(DirectSolver { n, lu: m.partial_piv_lu() })
    }
}

/// Dense scalar operator `S = −∂² + V + 1 + E D`.
fn scalar_matrix(grid: &Grid, lambda: C64, beta: f64, v: &[f64], s: &[f64]) -> Mat<C64> {
    let n = grid.n();
    let c = Circulants::new(grid);
    let il = I * lambda;
    // E D = β²∂∂ − 2iλβ∂ − λ² − s(β∂ − iλ)
    Mat::from_fn(n, n, |i, j| {
        let diag = if i == j { 1.0 } else { 0.0 };
        let d1 = Circulants::at(&c.d1, i, j);
        let ed = beta * beta * Circulants::at(&c.d11, i, j) - 2.0 * il * beta * d1 + il * il * diag
            - s[i] * (beta * d1 - il * diag);
        ed + Circulants::at(&c.neg_d2, i, j) + (v[i] + 1.0) * diag
    })
}

fn solve_col(lu: &PartialPivLu<C64>, g: &[C64], adjoint: bool) -> Vec<C64> {
    let rhs = Mat::<C64>::from_fn(g.len(), 1, |i, _| g[i]);
    let x = if adjoint { lu.solve_adjoint(&rhs) } else { lu.solve(&rhs) };
    (0..g.len()).map(|i| x[(i, 0)]).collect()
}

pub struct DirectSolver {
    n: usize,
    lu: PartialPivLu<C64>,
}

impl DirectSolver {
    pub fn solve(&self, f: &CState) -> CState {
        let n = self.n;
        let rhs = Mat::<C64>::from_fn(2 * n, 1, |r, _| if r < n { f.u[r] } else { f.ut[r - n] });
        let x = self.lu.solve(&rhs);
        CState { u: (0..n).map(|i| x[(i, 0)]).collect(), ut: (0..n).map(|i| x[(n + i, 0)]).collect() }
    }
}

/// Residual of `(1 + ℛ_{0,β}𝒱_β) ℛ_β f = ℛ_{0,β} f` relative to `‖ℛ_{0,β} f‖`,
/// with `𝒱_β = [[0, 0], [−V, 0]]`.
pub fn resolvent_identity_residual(free: &ResolventOperator, pert: &ResolventOperator, f: &CState) -> f64 {
    let grid = free.grid();
    let w = pert.apply(f);
    let vw = CState { u: vec![C64::default(); w.len()], ut: w.u.iter().zip(&pert.v).map(|(a, v)| -v * a).collect() };
    let mut lhs = free.apply(&vw);
    lhs.axpy(C64::new(1.0, 0.0), &w);
    let rhs = free.apply(f);
    lhs.sub(&rhs).norm(grid) / rhs.norm(grid)
}

/// Spectral parameter for which the conjugation phase `e^{iγ²βλx}` is the
/// lattice mode `m` of the periodic grid, so the identity is exact there.
pub fn lattice_lambda(grid: &Grid, beta: f64, m: i32) -> Result<f64> {
    let g = gamma1(beta)?;
    if beta == 0.0 {
        return Err(Error::InvalidParameter("conjugation is trivial at beta = 0".into()));
    }
    Ok(m as f64 * std::f64::consts::PI / grid.lx() / (beta * g * g))
}

/// Compares the free scalar resolvent with
/// `e^{−iax} (H_{0,β} − (γ²λ² − 1))^{−1} e^{iax}`, `a = γ²βλ`,
/// `H_{0,β} = −(1 − β²)∂²`, on `g`. Returns the relative difference.
pub fn conjugation_residual(grid: &Grid, lambda: f64, beta: f64, g: &[C64]) -> Result<f64> {
    let gamma = gamma1(beta)?;
    let a = gamma * gamma * beta * lambda;
    let steps = a * grid.lx() / std::f64::consts::PI;
    if (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::IncommensurateGrids(format!("phase wavenumber {a} is not a multiple of pi/lx")));
    }
    let r = ResolventOperator::free(grid, C64::new(lambda, 0.0), beta)?;
    let direct = r.scalar_apply(g);
    let shift = gamma * gamma * lambda * lambda - 1.0;
    let phased: Vec<C64> = grid.x().iter().zip(g).map(|(&x, v)| C64::from_polar(1.0, a * (x + grid.lx())) * v).collect();
    let solved = grid.apply_symbol_complex(&phased, |k| C64::new(1.0 / ((1.0 - beta * beta) * k * k - shift), 0.0));
    let back: Vec<C64> = grid.x().iter().zip(&solved).map(|(&x, v)| C64::from_polar(1.0, -a * (x + grid.lx())) * v).collect();
    let diff: Vec<C64> = back.iter().zip(&direct).map(|(a, b)| a - b).collect();
    Ok(grid.norm_l2_complex(&diff) / grid.norm_l2_complex(&direct))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    /// Largest entry of `|R_β − γR₀(γ·, γ·)|` over the largest entry of `R_β`.
    pub residual: f64,
    /// Same quantity between the kernel on `grid_beta` and on a grid twice as fine.
    pub discretization_bound: f64,
}

/// Kernel of `(H − μ²)^{−1}` with `H = −c∂² + V` on the grid, as a dense
/// matrix scaled by `1/h` so that `Σ_j K_ij f_j h` applies the inverse.
fn kernel_matrix(grid: &Grid, c: f64, v: &[f64], mu2: f64) -> Result<Mat<f64>> {
    use faer::linalg::solvers::DenseSolveCore;
    let n = grid.n();
    if n > MAX_DENSE_N {
        return Err(Error::TooLarge { n, max: MAX_DENSE_N });
    }
    let col = Circulants::new(grid).neg_d2;
    let m = Mat::from_fn(n, n, |i, j| c * Circulants::at(&col, i, j) + if i == j { v[i] - mu2 } else { 0.0 });
    let inv = m.partial_piv_lu().inverse();
    Ok(Mat::from_fn(n, n, |i, j| inv[(i, j)] / grid.h()))
}

/// Checks `R_β(μ²; x, y) = γ R₀(μ²; γx, γy)` for `H_β = −(1 − β²)∂² + V(γx)`
/// on a pair of grids with the same `N` whose lengths differ by `γ`.
pub fn scaling_relation_check(grid_beta: &Grid, grid0: &Grid, mu2: f64, beta: f64, v: &PotentialSpec) -> Result<ScalingReport> {
    let g = gamma1(beta)?;
    if grid0.n() != grid_beta.n() || (grid0.lx() - g * grid_beta.lx()).abs() > 1e-12 * grid0.lx() {
        return Err(Error::IncommensurateGrids(format!(
            "need equal N and lx ratio gamma = {g}, got N {} / {} and lx {} / {}",
            grid_beta.n(),
            grid0.n(),
            grid_beta.lx(),
            grid0.lx()
        )));
    }
    let c = 1.0 - beta * beta;
    let kb = kernel_matrix(grid_beta, c, &v.sample(grid_beta, beta, 0.0)?, mu2)?;
    let k0 = kernel_matrix(grid0, 1.0, &v.sample(grid0, 0.0, 0.0)?, mu2)?;
    let n = grid0.n();
    let mut peak = 0.0f64;
    let mut err = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            peak = peak.max(kb[(i, j)].abs());
            err = err.max((kb[(i, j)] - g * k0[(i, j)]).abs());
        }
    }
    let fine = Grid::new(2 * n, grid_beta.lx())?;
    let kf = kernel_matrix(&fine, c, &v.sample(&fine, beta, 0.0)?, mu2)?;
    let mut disc = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            disc = disc.max((kb[(i, j)] - kf[(2 * i, 2 * j)]).abs());
        }
    }
    Ok(ScalingReport { residual: err / peak, discretization_bound: disc / peak })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelSample {
    pub displacement: [f64; 3],
    pub numeric: f64,
    pub exact: f64,
}

/// Free three-dimensional kernel of `(−(1 − β²)∂₁² − ∂₂² − ∂₃² + κ²)^{−1}`
/// from an FFT on an `n³` periodic grid, compared with
/// `γ e^{−κ|r|_β}/(4π|r|_β)`, `|r|_β = (γ²r₁² + r₂² + r₃²)^{1/2}`, at
/// `samples` seeded lattice displacements with `r_min ≤ |r|_β ≤ r_max`.
pub fn free_kernel_3d_check(
    n: usize,
    lx: f64,
    beta: f64,
    kappa: f64,
    samples: usize,
    (r_min, r_max): (f64, f64),
    seed: u64,
) -> Result<Vec<KernelSample>> {
    let g = gamma1(beta)?;
    if n > 128 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("3D check needs a power-of-two n <= 128, got {n}")));
    }
    let h = 2.0 * lx / n as f64;
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let kk = |j: usize| {
        let j = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        j * std::f64::consts::PI / lx
    };
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut buf = vec![C64::default(); n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let s = (1.0 - beta * beta) * kk(a).powi(2) + kk(b).powi(2) + kk(c).powi(2) + kappa * kappa;
                buf[idx(a, b, c)] = C64::new(1.0 / s, 0.0);
            }
        }
    }
    // Inverse transform along each axis in turn.
    let mut line = vec![C64::default(); n];
    for axis in 0..3 {
        for p in 0..n {
            for q in 0..n {
                let at = |t: usize| match axis {
                    0 => idx(t, p, q),
                    1 => idx(p, t, q),
                    _ => idx(p, q, t),
                };
                for t in 0..n {
                    line[t] = buf[at(t)];
                }
                fft.process(&mut line);
                for t in 0..n {
                    buf[at(t)] = line[t];
                }
            }
        }
    }
    let norm = 1.0 / ((n * n * n) as f64 * h * h * h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let m = (r_max / h).ceil() as i64 + 1;
    let mut guard = 0;
    while out.len() < samples {
        guard += 1;
        if guard > 100_000 {
            return Err(Error::InvalidParameter("no lattice displacements in the requested shell".into()));
        }
        let d: [i64; 3] = [rng.random_range(-m..=m), rng.random_range(-m..=m), rng.random_range(-m..=m)];
        let r = [d[0] as f64 * h, d[1] as f64 * h, d[2] as f64 * h];
        let rb = (g * g * r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if rb < r_min || rb > r_max {
            continue;
        }
        let w = |v: i64| v.rem_euclid(n as i64) as usize;
        let numeric = buf[idx(w(d[0]), w(d[1]), w(d[2]))].re * norm;
        let exact = g * (-kappa * rb).exp() / (4.0 * std::f64::consts::PI * rb);
        out.push(KernelSample { displacement: r, numeric, exact });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepParams {
    pub lambdas: Vec<f64>,
    /// Decreasing sequence of imaginary parts.
    pub eps: Vec<f64>,
    pub tau: f64,
    pub beta: f64,
    pub sponge: Sponge,
    /// Points with `||λ| − 1/γ|` below this are flagged as thresholds.
    pub threshold_band: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub eps: f64,
    pub norm: f64,
    pub threshold: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// `(λ, relative change between the last two rungs)` for non-threshold points.
    pub last_rung_change: Vec<(f64, f64)>,
    pub stabilized: bool,
}

/// Estimates `‖⟨x⟩^{−τ} ℛ_β(λ + iε) ⟨x⟩^{−τ}‖` on `L² × L²` by power iteration
/// for each `λ` and `ε`, with the absorbing layer switched on.
pub fn limiting_absorption_sweep(grid: &Grid, v: Option<&[f64]>, p: &SweepParams) -> Result<SweepTable> {
    if p.tau <= 1.0 {
        return Err(Error::InvalidParameter(format!("tau = {} must exceed 1", p.tau)));
    }
    if p.eps.windows(2).any(|w| w[1] >= w[0]) || p.eps.iter().any(|e| *e <= 0.0) {
        return Err(Error::InvalidParameter("epsilon ladder must be positive and decreasing".into()));
    }
    let gamma = gamma1(p.beta)?;
    let w = crate::norms::bracket_weight(grid, 0.0, p.tau);
    let jobs: Vec<(usize, f64, f64)> =
        p.lambdas.iter().enumerate().flat_map(|(i, &l)| p.eps.iter().map(move |&e| (i, l, e))).collect();
    let rows: Result<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(i, lambda, eps)| {
            let r = ResolventOperator::with_sponge(grid, C64::new(lambda, eps), p.beta, v, p.sponge)?;
            let (norm, converged) = weighted_norm(grid, &r, &w, p.max_iterations, p.seed.wrapping_add(i as u64));
            let threshold = (lambda.abs() - 1.0 / gamma).abs() < p.threshold_band;
            Ok(SweepRow { lambda, eps, norm, threshold, converged })
        })
        .collect();
    let rows = rows?;
    let m = p.eps.len();
    let mut last = Vec::new();
    for chunk in rows.chunks(m) {
        if m >= 2 && !chunk[0].threshold {
            let (a, b) = (chunk[m - 2].norm, chunk[m - 1].norm);
            last.push((chunk[0].lambda, (a - b).abs() / b));
        }
    }
    let stabilized = last.iter().all(|(_, c)| *c < 0.1);
    Ok(SweepTable { rows, last_rung_change: last, stabilized })
}

/// Power iteration on `A*A` with `A = W ℛ W`.
fn weighted_norm(grid: &Grid, r: &ResolventOperator, w: &[f64], iters: usize, seed: u64) -> (f64, bool) {
    let n = grid.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = CState {
        u: (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
        ut: (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
    };
    let nx = x.norm(grid);
    x.scale(C64::new(1.0 / nx, 0.0));
    let mut est = 0.0;
    for _ in 0..iters {
        let ax = r.apply(&x.weighted(w)).weighted(w);
        let new = ax.norm(grid);
        let mut y = r.apply_adjoint(&ax.weighted(w)).weighted(w);
        let ny = y.norm(grid);
        if ny == 0.0 {
            return (0.0, true);
        }
        y.scale(C64::new(1.0 / ny, 0.0));
        x = y;
        if (new - est).abs() <= 1e-6 * new {
            return (new, true);
        }
        est = new;
    }
    (est, false)
}
