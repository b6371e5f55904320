//! Boosted discrete modes of the matrix operator `ℒ_β`, their duals and the
//! finite-rank projections built from them.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potentials::{gamma1, PotentialSpec};
use crate::spectrum::ScalarSpectrum;
use crate::state::{pairing, StatePair};

/// `ℒ_β u = (β u₁′ + u₂, u₁″ − (V + 1) u₁ + β u₂′)` for an already boosted
/// and centred potential `v`.
pub fn apply_matrix_operator(grid: &Grid, u: &StatePair, beta: f64, v: &[f64]) -> StatePair {
    let d1 = grid.derivative(&u.u);
    let dd1 = grid.second_derivative(&u.u);
    let d2 = if beta == 0.0 { vec![0.0; grid.n()] } else { grid.derivative(&u.ut) };
    let a = d1.iter().zip(&u.ut).map(|(d, w)| beta * d + w).collect();
    let b = (0..grid.n()).map(|i| dd1[i] - (v[i] + 1.0) * u.u[i] + beta * d2[i]).collect();
    StatePair { u: a, ut: b }
}

/// Evaluates a scalar eigenfunction at arbitrary points.
///
/// Pöschl–Teller levels use their closed form, fitted to the grid samples for
/// sign and normalization. Otherwise the band-limited interpolant is used
/// where the samples are above the noise floor, continued by the exact
/// exponential tail `C e^{−κ|y|}` of an eigenfunction with `Lφ = Eφ`. The tail
/// matters because the boosted modes multiply it by `e^{±γνβx}`.
#[derive(Clone, Debug)]
enum Profile {
    PoeschlTeller { s: f64, width: f64, level: usize, scale: f64 },
    Spliced { grid: Grid, samples: Vec<f64>, kappa: f64, left: (f64, f64), right: (f64, f64) },
}

/// Gegenbauer `C_n^{(a)}(t)` and its derivative.
fn gegenbauer(n: usize, a: f64, t: f64) -> (f64, f64) {
    fn value(n: usize, a: f64, t: f64) -> f64 {
        let (mut c0, mut c1) = (1.0, 2.0 * a * t);
        if n == 0 {
            return c0;
        }
        for m in 2..=n {
            let m = m as f64;
            let c2 = (2.0 * t * (m + a - 1.0) * c1 - (m + 2.0 * a - 2.0) * c0) / m;
            c0 = c1;
            c1 = c2;
        }
        c1
    }
    let d = if n == 0 { 0.0 } else { 2.0 * a * value(n - 1, a + 1.0, t) };
    (value(n, a, t), d)
}

impl Profile {
    fn new(spec: &ScalarSpectrum, level: usize, phi: &[f64], eigenvalue: f64) -> Self {
        let grid = &spec.grid;
        if let PotentialSpec::PoeschlTeller { depth, width } = spec.potential {
            let s = 0.5 * (-1.0 + (1.0 + 4.0 * depth * width * width).sqrt());
            let expect = 1.0 - ((s - level as f64) / width).powi(2);
            if depth > 0.0 && (expect - eigenvalue).abs() < 1e-6 {
                let mut p = Profile::PoeschlTeller { s, width, level, scale: 1.0 };
                let (f, _) = p.eval(grid.x());
                let c = grid.dot(phi, &f) / grid.dot(&f, &f);
                let err = phi.iter().zip(&f).map(|(a, b)| (a - c * b).abs()).fold(0.0, f64::max);
                if err < 1e-6 {
                    if let Profile::PoeschlTeller { scale, .. } = &mut p {
                        *scale = c;
                    }
                    return p;
                }
            }
        }
        let kappa = (1.0 - eigenvalue).max(0.0).sqrt();
        let peak = phi.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let thresh = 1e-9 * peak;
        let x = grid.x();
        let n = grid.n();
        // Outermost samples above the threshold.
        let ir = (0..n).rev().find(|&i| phi[i].abs() > thresh).unwrap_or(n - 1);
        let il = (0..n).find(|&i| phi[i].abs() > thresh).unwrap_or(0);
        let right = (x[ir], phi[ir] * (kappa * x[ir]).exp());
        let left = (x[il], phi[il] * (-kappa * x[il]).exp());
        Profile::Spliced { grid: grid.clone(), samples: phi.to_vec(), kappa, left, right }
    }

    /// Values and derivatives at `pts`.
    fn eval(&self, pts: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            Profile::PoeschlTeller { s, width, level, scale } => {
                let p = s - *level as f64;
                pts.iter()
                    .map(|&y| {
                        let z = y / width;
                        let (t, sech) = (z.tanh(), 1.0 / z.cosh());
                        let sp = sech.powf(p);
                        let (c, dc) = gegenbauer(*level, p + 0.5, t);
                        let f = scale * sp * c;
                        let df = scale / width * sp * (-p * t * c + dc * sech * sech);
                        (f, df)
                    })
                    .unzip()
            }
            Profile::Spliced { grid, samples, kappa, left, right } => {
                let inner: Vec<f64> = pts.iter().copied().filter(|&p| p > left.0 && p < right.0).collect();
                let mut v = grid.interpolate(samples, &inner).into_iter();
                let mut d = grid.interpolate_derivative(samples, &inner).into_iter();
                let k = *kappa;
                pts.iter()
                    .map(|&p| {
                        if p >= right.0 {
                            let f = right.1 * (-k * p).exp();
                            (f, -k * f)
                        } else if p <= left.0 {
                            let f = left.1 * (k * p).exp();
                            (f, k * f)
                        } else {
                            (v.next().unwrap_or(0.0), d.next().unwrap_or(0.0))
                        }
                    })
                    .unzip()
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeBundle {
    pub beta: f64,
    pub gamma: f64,
    pub centre: f64,
    /// `ν_k`, unboosted.
    pub nu: Vec<f64>,
    pub y_minus: Vec<StatePair>,
    pub y_plus: Vec<StatePair>,
    pub y_zero: Vec<StatePair>,
    pub y_one: Vec<StatePair>,
}

impl ModeBundle {
    /// Boosted rates `ν_k/γ`.
    pub fn rates(&self) -> Vec<f64> {
        self.nu.iter().map(|n| n / self.gamma).collect()
    }

    pub fn alpha_minus(&self) -> Vec<StatePair> {
        self.y_plus.iter().map(StatePair::apply_j).collect()
    }

    pub fn alpha_plus(&self) -> Vec<StatePair> {
        self.y_minus.iter().map(StatePair::apply_j).collect()
    }

    pub fn alpha_zero(&self) -> Vec<StatePair> {
        self.y_zero.iter().map(StatePair::apply_j).collect()
    }

    pub fn alpha_one(&self) -> Vec<StatePair> {
        self.y_one.iter().map(StatePair::apply_j).collect()
    }

    pub fn rank(&self) -> usize {
        self.y_minus.len() + self.y_plus.len() + self.y_zero.len() + self.y_one.len()
    }
}

/// Builds the boosted modes of one potential moving with velocity `beta`,
/// centred at `centre`, on `grid`. The scalar spectrum may live on a
/// different grid; eigenfunctions are transferred by interpolation.
///
/// With `ψ(x) = φ(γx)`:
/// `𝒴^∓ = e^{±γνβx}(ψ, −βψ′ ∓ γνψ)`, `𝒴⁰ = (ψ⁰, −βψ⁰′)`,
/// `𝒴¹ = (−βγxψ⁰, γψ⁰ + γβ²xψ⁰′)`.
pub fn build_modes(spec: &ScalarSpectrum, grid: &Grid, beta: f64, centre: f64) -> Result<ModeBundle> {
    let gamma = gamma1(beta)?;
    let xs: Vec<f64> = grid.x().iter().map(|&x| grid.wrap(x - centre)).collect();
    let pts: Vec<f64> = xs.iter().map(|x| gamma * x).collect();
    let mut nu = Vec::new();
    let mut y_minus = Vec::new();
    let mut y_plus = Vec::new();
    for (level, e) in spec.negative.iter().enumerate() {
        let n = e.nu();
        nu.push(n);
        let (f, df) = Profile::new(spec, level, &e.phi, e.value).eval(&pts);
        for (sgn, out) in [(1.0, &mut y_minus), (-1.0, &mut y_plus)] {
            let mut a = Vec::with_capacity(xs.len());
            let mut b = Vec::with_capacity(xs.len());
            for i in 0..xs.len() {
                let w = (sgn * gamma * n * beta * xs[i]).exp();
                let psi = f[i];
                let dpsi = gamma * df[i];
                a.push(w * psi);
                b.push(w * (-beta * dpsi - sgn * gamma * n * psi));
            }
            out.push(StatePair { u: a, ut: b });
        }
    }
    let mut y_zero = Vec::new();
    let mut y_one = Vec::new();
    for (i, e) in spec.zero.iter().enumerate() {
        let (f, df) = Profile::new(spec, spec.k() + i, &e.phi, e.value).eval(&pts);
        let dpsi: Vec<f64> = df.iter().map(|d| gamma * d).collect();
        y_zero.push(StatePair { u: f.clone(), ut: dpsi.iter().map(|d| -beta * d).collect() });
        y_one.push(StatePair {
            u: (0..xs.len()).map(|i| -beta * gamma * xs[i] * f[i]).collect(),
            ut: (0..xs.len()).map(|i| gamma * f[i] + gamma * beta * beta * xs[i] * dpsi[i]).collect(),
        });
    }
    let b = ModeBundle { beta, gamma, centre, nu, y_minus, y_plus, y_zero, y_one };
    check_fits(grid, &b, centre)?;
    Ok(b)
}

/// Refuses modes whose amplitude at the box edge (opposite the centre) is
/// not negligible.
fn check_fits(grid: &Grid, b: &ModeBundle, centre: f64) -> Result<()> {
    let edge = grid.wrap(centre + grid.lx());
    let i = grid
        .x()
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - edge).abs().total_cmp(&(b.1 - edge).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let n = grid.n();
    for m in b.y_minus.iter().chain(&b.y_plus).chain(&b.y_zero).chain(&b.y_one) {
        let peak = m.max_abs();
        let e = (0..5)
            .map(|d| (i + n + d - 2) % n)
            .map(|j| m.u[j].abs().max(m.ut[j].abs()))
            .fold(0.0, f64::max);
        if !(peak.is_finite() && e <= 1e-12 * peak) {
            return Err(Error::BoxTooSmall(e / peak));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Minus,
    Plus,
    Zero,
    One,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeLabel {
    pub potential: usize,
    pub family: Family,
    pub index: usize,
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let fam = match self.family {
            Family::Minus => "Y-",
            Family::Plus => "Y+",
            Family::Zero => "Y0",
            Family::One => "Y1",
        };
        write!(f, "potential {} {}[{}]", self.potential, fam, self.index)
    }
}

/// Biorthogonal projections onto spans of modes, computed from the full Gram
/// matrix `G_ab = ⟨α_a, 𝒴_b⟩` so that no normalization of the pairings is
/// assumed.
#[derive(Clone, Debug)]
pub struct ProjectionSet {
    pub grid: Grid,
    pub labels: Vec<ModeLabel>,
    pub modes: Vec<StatePair>,
    pub duals: Vec<StatePair>,
    pub gram: Vec<Vec<f64>>,
    gram_inv: Mat<f64>,
    pub condition: f64,
}

pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

impl ProjectionSet {
    pub fn rank(&self) -> usize {
        self.modes.len()
    }

    /// Builds the projection set for a list of bundles living on `grid`.
    pub fn new(grid: &Grid, bundles: &[ModeBundle]) -> Result<Self> {
        let mut labels = Vec::new();
        let mut modes = Vec::new();
        let mut duals = Vec::new();
        for (p, b) in bundles.iter().enumerate() {
            let fams: [(Family, &Vec<StatePair>, Vec<StatePair>); 4] = [
                (Family::Minus, &b.y_minus, b.alpha_minus()),
                (Family::Plus, &b.y_plus, b.alpha_plus()),
                (Family::Zero, &b.y_zero, b.alpha_zero()),
                (Family::One, &b.y_one, b.alpha_one()),
            ];
            for (fam, ys, als) in fams {
                for (i, (y, a)) in ys.iter().zip(als).enumerate() {
                    if y.len() != grid.n() {
                        return Err(Error::GridMismatch);
                    }
                    labels.push(ModeLabel { potential: p, family: fam, index: i });
                    modes.push(y.clone());
                    duals.push(a);
                }
            }
        }
        Self::from_parts(grid, labels, modes, duals)
    }

    /// Projection set from explicit modes and duals (same length).
    pub fn from_parts(grid: &Grid, labels: Vec<ModeLabel>, modes: Vec<StatePair>, duals: Vec<StatePair>) -> Result<Self> {
        let r = modes.len();
        let gram: Vec<Vec<f64>> =
            (0..r).map(|a| (0..r).map(|b| pairing(grid, &duals[a], &modes[b])).collect()).collect();
        let (gram_inv, condition) = if r == 0 {
            (Mat::zeros(0, 0), 1.0)
        } else {
            let g = Mat::from_fn(r, r, |i, j| gram[i][j]);
            let sv = g.singular_values().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            if !(cond < GRAM_CONDITION_LIMIT) {
                let (a, b) = worst_overlap(grid, &labels, &modes);
                return Err(Error::SingularGram { cond, a, b });
            }
            let lu = g.partial_piv_lu();
            (lu.inverse(), cond)
        };
        Ok(ProjectionSet { grid: grid.clone(), labels, modes, duals, gram, gram_inv, condition })
    }

    pub fn gram_inverse(&self) -> Vec<Vec<f64>> {
        let r = self.rank();
        (0..r).map(|i| (0..r).map(|j| self.gram_inv[(i, j)]).collect()).collect()
    }

    /// Raw dual pairings `⟨α_a, u⟩`.
    pub fn pairings(&self, u: &StatePair) -> Vec<f64> {
        self.duals.iter().map(|a| pairing(&self.grid, a, u)).collect()
    }

    /// Mode coefficients `c = G⁻¹ ⟨α, u⟩`, so that `P_d u = Σ c_b 𝒴_b`.
    pub fn coefficients(&self, u: &StatePair) -> Vec<f64> {
        let p = self.pairings(u);
        let r = self.rank();
        (0..r).map(|i| (0..r).map(|j| self.gram_inv[(i, j)] * p[j]).sum()).collect()
    }

    /// Projection onto the modes whose label satisfies `keep`.
    pub fn project_where(&self, u: &StatePair, keep: impl Fn(&ModeLabel) -> bool) -> StatePair {
        let c = self.coefficients(u);
        let mut out = StatePair::zeros(u.len());
        for ((l, m), ci) in self.labels.iter().zip(&self.modes).zip(c) {
            if keep(l) {
                out.axpy(ci, m);
            }
        }
        out
    }

    pub fn pi_minus(&self, u: &StatePair) -> StatePair {
        self.project_where(u, |l| l.family == Family::Minus)
    }

    pub fn pi_plus(&self, u: &StatePair) -> StatePair {
        self.project_where(u, |l| l.family == Family::Plus)
    }

    /// Onto the span of `𝒴⁰` and `𝒴¹`.
    pub fn pi_zero(&self, u: &StatePair) -> StatePair {
        self.project_where(u, |l| matches!(l.family, Family::Zero | Family::One))
    }

    pub fn p_d(&self, u: &StatePair) -> StatePair {
        self.project_where(u, |_| true)
    }

    pub fn p_c(&self, u: &StatePair) -> StatePair {
        u.sub(&self.p_d(u))
    }

    /// Centre-stable part `u − π₊u − π₀u`.
    pub fn p_cs(&self, u: &StatePair) -> StatePair {
        u.sub(&self.project_where(u, |l| l.family != Family::Minus))
    }
}

fn worst_overlap(grid: &Grid, labels: &[ModeLabel], modes: &[StatePair]) -> (String, String) {
    let mut best = (-1.0, 0, 0);
    for a in 0..modes.len() {
        for b in a + 1..modes.len() {
            let na = pairing(grid, &modes[a], &modes[a]).sqrt();
            let nb = pairing(grid, &modes[b], &modes[b]).sqrt();
            let c = pairing(grid, &modes[a], &modes[b]).abs() / (na * nb).max(f64::MIN_POSITIVE);
            if c > best.0 {
                best = (c, a, b);
            }
        }
    }
    if best.0 < 0.0 {
        return ("none".into(), "none".into());
    }
    (labels[best.1].to_string(), labels[best.2].to_string())
}
