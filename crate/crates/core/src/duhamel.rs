//! Duhamel operators on time streams `g_n = g(n dt)`, `n = 0..=steps`.
//!
//! For a channel moving with constant velocity `β` the perturbation is
//! `𝖵(s) = 𝒦(s) − (𝔏₀ + 𝒦(s)) P_d(s) − κ P_d(s)`, where `P_d(s)` projects onto
//! the boosted modes centred at `y₀ + βs`. Then
//! `T₀g(t) = ∫₀ᵗ e^{(t−s)𝔏₀} 𝖵(s) g(s) ds`,
//! `T₁g(t) = ∫₀ᵗ U(t, s) 𝖵(s) g(s) ds` with `U` the flow of `𝔏₀ + 𝖵`, and
//! `Tg(t) = ∫₀ᵗ e^{(t−s)𝔏₀} U_A(t, s) 𝖵(s) g(s) ds` with the drift shift `U_A`.
//! All integrals use the trapezoid rule, written as one-step recursions.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evolution::free_propagate;
use crate::grid::Grid;
use crate::modes::{build_modes, ProjectionSet};
use crate::norms::{bracket, bracket_weight, energy_norm};
use crate::potentials::{linear_fit, PotentialSpec};
use crate::spectrum::ScalarSpectrum;
use crate::state::StatePair;
use crate::trajectory::shift_operator_apply;

pub type Stream = Vec<StatePair>;

/// Trapezoid `L²_t ℋ` norm of a stream.
pub fn stream_norm(grid: &Grid, dt: f64, g: &[StatePair]) -> f64 {
    let n = g.len();
    let mut acc = 0.0;
    for (i, s) in g.iter().enumerate() {
        let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        acc += w * energy_norm(grid, s).powi(2);
    }
    (acc * dt).sqrt()
}

pub fn stream_sub(a: &[StatePair], b: &[StatePair]) -> Stream {
    a.iter().zip(b).map(|(x, y)| x.sub(y)).collect()
}

pub fn stream_add(a: &[StatePair], b: &[StatePair]) -> Stream {
    a.iter().zip(b).map(|(x, y)| x.add(y)).collect()
}

/// Samples `g(t)` on `t_n = n dt`.
pub fn sample_stream(steps: usize, dt: f64, g: impl Fn(f64) -> StatePair) -> Stream {
    (0..=steps).map(|n| g(n as f64 * dt)).collect()
}

fn translate(grid: &Grid, u: &StatePair, b: f64) -> StatePair {
    StatePair { u: shift_operator_apply(grid, &u.u, b), ut: shift_operator_apply(grid, &u.ut, b) }
}

/// `(𝔏₀ + 𝒦)u = (u₂, ∂²u₁ − u₁ − V u₁)`.
fn lab_generator(grid: &Grid, u: &StatePair, v: &[f64]) -> StatePair {
    let d2 = grid.second_derivative(&u.u);
    let ut = d2.iter().zip(&u.u).zip(v).map(|((a, b), w)| a - b - w * b).collect();
    StatePair { u: u.ut.clone(), ut }
}

/// A constant-velocity channel with its mode projector and damping `κ`.
#[derive(Clone, Debug)]
pub struct FrozenChannel {
    pub grid: Grid,
    pub potential: PotentialSpec,
    pub beta: f64,
    pub y0: f64,
    pub kappa: f64,
    proj: ProjectionSet,
    /// `(𝔏₀ + 𝒦(0)) 𝒴_b + κ 𝒴_b` at `s = 0`.
    images: Vec<StatePair>,
}

impl FrozenChannel {
    /// `kappa = None` selects `2 max ν/γ`.
    pub fn new(spectrum: &ScalarSpectrum, grid: &Grid, beta: f64, y0: f64, kappa: Option<f64>) -> Result<Self> {
        let bundle = build_modes(spectrum, grid, beta, y0)?;
        let kappa = kappa.unwrap_or_else(|| 2.0 * bundle.rates().into_iter().fold(0.0, f64::max));
        let proj = ProjectionSet::new(grid, std::slice::from_ref(&bundle))?;
        let v = spectrum.potential.sample(grid, beta, y0)?;
        let images = proj
            .modes
            .iter()
            .map(|m| {
                let mut r = lab_generator(grid, m, &v);
                r.axpy(kappa, m);
                r
            })
            .collect();
        Ok(FrozenChannel { grid: grid.clone(), potential: spectrum.potential.clone(), beta, y0, kappa, proj, images })
    }

    pub fn centre(&self, s: f64) -> f64 {
        self.y0 + self.beta * s
    }

    /// `P_d(s) u`.
    pub fn p_d(&self, u: &StatePair, s: f64) -> StatePair {
        let b = self.beta * s;
        translate(&self.grid, &self.proj.p_d(&translate(&self.grid, u, b)), -b)
    }

    /// `𝖵(s) u`.
    pub fn apply(&self, u: &StatePair, s: f64) -> Result<StatePair> {
        let b = self.beta * s;
        let c = self.proj.coefficients(&translate(&self.grid, u, b));
        let mut r = StatePair::zeros(u.len());
        for (ci, img) in c.iter().zip(&self.images) {
            r.axpy(-ci, img);
        }
        let mut out = translate(&self.grid, &r, -b);
        let v = self.potential.sample(&self.grid, self.beta, self.centre(s))?;
        for ((o, a), w) in out.ut.iter_mut().zip(&u.u).zip(&v) {
            *o -= w * a;
        }
        Ok(out)
    }

    /// One step of `U` from `t` to `t + dt`: Strang splitting with the
    /// second-order Taylor polynomial of `e^{(dt/2)𝖵}` as the kick.
    pub fn step(&self, u: &StatePair, t: f64, dt: f64) -> Result<StatePair> {
        let k0 = self.kick(u, t, 0.5 * dt)?;
        let f = free_propagate(&self.grid, &k0, dt);
        self.kick(&f, t + dt, 0.5 * dt)
    }

    fn kick(&self, u: &StatePair, t: f64, tau: f64) -> Result<StatePair> {
        let a = self.apply(u, t)?;
        let aa = self.apply(&a, t)?;
        let mut out = u.clone();
        out.axpy(tau, &a);
        out.axpy(0.5 * tau * tau, &aa);
        Ok(out)
    }

    fn sources(&self, g: &[StatePair], dt: f64) -> Result<Stream> {
        g.iter().enumerate().map(|(n, s)| self.apply(s, n as f64 * dt)).collect()
    }

    pub fn t0(&self, g: &[StatePair], dt: f64) -> Result<Stream> {
        let h = self.sources(g, dt)?;
        trapezoid(&h, dt, |u, _| Ok(free_propagate(&self.grid, u, dt)))
    }

    pub fn t1(&self, g: &[StatePair], dt: f64) -> Result<Stream> {
        let h = self.sources(g, dt)?;
        trapezoid(&h, dt, |u, n| self.step(u, n as f64 * dt, dt))
    }

    /// `T` with drift `c(t)`; `U_A(t, s)φ = φ(x + c(t) − c(s))`.
    pub fn t_shifted(&self, g: &[StatePair], dt: f64, c: &dyn Fn(f64) -> f64) -> Result<Stream> {
        let c0 = c(0.0);
        let h: Stream = self
            .sources(g, dt)?
            .into_iter()
            .enumerate()
            .map(|(n, s)| translate(&self.grid, &s, c0 - c(n as f64 * dt)))
            .collect();
        let i = trapezoid(&h, dt, |u, _| Ok(free_propagate(&self.grid, u, dt)))?;
        Ok(i.into_iter().enumerate().map(|(n, s)| translate(&self.grid, &s, c(n as f64 * dt) - c0)).collect())
    }

    /// `(1 − T₀)(1 + T₁)g − g`.
    pub fn identity_defect(&self, g: &[StatePair], dt: f64) -> Result<Stream> {
        let a = stream_add(g, &self.t1(g, dt)?);
        let b = stream_sub(&a, &self.t0(&a, dt)?);
        Ok(stream_sub(&b, g))
    }
}

/// `I₀ = 0`, `I_{n+1} = step(I_n + dt/2 h_n) + dt/2 h_{n+1}`.
fn trapezoid(h: &[StatePair], dt: f64, step: impl Fn(&StatePair, usize) -> Result<StatePair>) -> Result<Stream> {
    if h.is_empty() {
        return Ok(vec![]);
    }
    let mut out = Vec::with_capacity(h.len());
    let mut cur = StatePair::zeros(h[0].len());
    out.push(cur.clone());
    for n in 0..h.len() - 1 {
        let mut a = cur;
        a.axpy(0.5 * dt, &h[n]);
        let mut b = step(&a, n)?;
        b.axpy(0.5 * dt, &h[n + 1]);
        if !b.is_finite() {
            return Err(Error::NonFinite("Duhamel recursion"));
        }
        out.push(b.clone());
        cur = b;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct NeumannResult {
    pub solution: Stream,
    pub iterations: usize,
    /// Norms of successive terms `‖Sⁿ r‖`.
    pub term_norms: Vec<f64>,
    /// Largest observed ratio `‖Sⁿ⁺¹r‖/‖Sⁿr‖`.
    pub contraction: f64,
}

/// Sums `Σ Sⁿ r` until the next term drops below `tol ‖r‖`. Fails with
/// `NonContraction` as soon as a term fails to shrink.
pub fn neumann_invert(
    rhs: &[StatePair],
    apply_s: impl Fn(&[StatePair]) -> Result<Stream>,
    norm: impl Fn(&[StatePair]) -> f64,
    max_terms: usize,
    tol: f64,
) -> Result<NeumannResult> {
    let r0 = norm(rhs);
    let mut sum: Stream = rhs.to_vec();
    let mut term: Stream = rhs.to_vec();
    let mut norms = vec![r0];
    let mut worst = 0.0f64;
    if r0 == 0.0 {
        return Ok(NeumannResult { solution: sum, iterations: 0, term_norms: norms, contraction: 0.0 });
    }
    for it in 1..=max_terms {
        term = apply_s(&term)?;
        let tn = norm(&term);
        let ratio = tn / norms[it - 1];
        worst = worst.max(ratio);
        if !(ratio < 1.0) {
            return Err(Error::NonContraction(format!("term {it}: ratio {ratio:.3} (norms {:.3e} -> {tn:.3e})", norms[it - 1])));
        }
        norms.push(tn);
        sum = stream_add(&sum, &term);
        if tn <= tol * r0 {
            return Ok(NeumannResult { solution: sum, iterations: it, term_norms: norms, contraction: worst });
        }
    }
    Err(Error::NonContraction(format!("no convergence in {max_terms} terms, last ratio {worst:.3}")))
}

/// Solves `(1 − T)x = f` as `x = (1 − S)⁻¹(1 + T₁)f` with `S = (1 + T₁)(T − T₀)`.
pub fn solve_one_minus_t(ch: &FrozenChannel, f: &[StatePair], dt: f64, c: &dyn Fn(f64) -> f64, max_terms: usize, tol: f64) -> Result<NeumannResult> {
    let g = &ch.grid;
    let rhs = stream_add(f, &ch.t1(f, dt)?);
    neumann_invert(
        &rhs,
        |x| {
            let d = stream_sub(&ch.t_shifted(x, dt, c)?, &ch.t0(x, dt)?);
            Ok(stream_add(&d, &ch.t1(&d, dt)?))
        },
        |x| stream_norm(g, dt, x),
        max_terms,
        tol,
    )
}

/// `‖(1 − T)x − f‖ / ‖f‖`.
pub fn one_minus_t_residual(ch: &FrozenChannel, x: &[StatePair], f: &[StatePair], dt: f64, c: &dyn Fn(f64) -> f64) -> Result<f64> {
    let lhs = stream_sub(x, &ch.t_shifted(x, dt, c)?);
    Ok(stream_norm(&ch.grid, dt, &stream_sub(&lhs, f)) / stream_norm(&ch.grid, dt, f))
}

#[derive(Clone, Debug)]
pub struct TruncatedNormParams {
    pub horizon: f64,
    pub dt: f64,
    pub sigma: f64,
}

/// `‖⟨x − y₁(t)⟩^{−σ} z(t)‖_{L²_t L²_x}` on `[0, horizon]` with
/// `z(t) = ∫₀^{t−M} e^{i(t−s)𝒟} U_A(t, s) 𝒟⁻¹ f(s) ds` (zero for `t < M`).
///
/// `z` obeys `z′ = i𝒟z + a∂z + e^{iM𝒟}U_A(t, t−M)𝒟⁻¹f(t−M)`, which is
/// integrated with the trapezoid recursion and an exact multiplier step.
pub fn truncated_duhamel_norm(
    grid: &Grid,
    f: &dyn Fn(f64) -> Vec<f64>,
    weight_centre: &dyn Fn(f64) -> f64,
    c: &dyn Fn(f64) -> f64,
    lag: f64,
    p: &TruncatedNormParams,
) -> Result<f64> {
    if !(lag >= 0.0) || lag >= p.horizon {
        return Err(Error::LagTooLong { lag, horizon: p.horizon });
    }
    let dt = p.dt;
    let steps = (p.horizon / dt).round() as usize;
    let source = |t: f64| -> Vec<Complex64> {
        if t < lag - 1e-12 {
            return vec![Complex64::new(0.0, 0.0); grid.n()];
        }
        let b = c(t) - c(t - lag);
        let q: Vec<Complex64> = f(t - lag).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        grid.apply_symbol_complex(&q, |k| Complex64::from_polar(1.0 / bracket(k), lag * bracket(k) + k * b))
    };
    let mut z = vec![Complex64::new(0.0, 0.0); grid.n()];
    let mut r = source(0.0);
    let mut acc = 0.0;
    let weigh = |z: &[Complex64], t: f64| -> f64 {
        let w = bracket_weight(grid, weight_centre(t), p.sigma);
        z.iter().zip(&w).map(|(a, w)| a.norm_sqr() * w * w).sum::<f64>() * grid.h()
    };
    for n in 0..steps {
        let t = n as f64 * dt;
        let b = c(t + dt) - c(t);
        let half: Vec<Complex64> = z.iter().zip(&r).map(|(a, s)| a + 0.5 * dt * s).collect();
        let mut next = grid.apply_symbol_complex(&half, |k| Complex64::from_polar(1.0, dt * bracket(k) + k * b));
        let r1 = source(t + dt);
        for (a, s) in next.iter_mut().zip(&r1) {
            *a += 0.5 * dt * s;
        }
        let wl = if n == 0 { 0.5 } else { 1.0 } * weigh(&z, t);
        acc += wl;
        z = next;
        r = r1;
    }
    acc += 0.5 * weigh(&z, steps as f64 * dt);
    let out = (acc * dt).sqrt();
    if !out.is_finite() {
        return Err(Error::NonFinite("truncated Duhamel norm"));
    }
    Ok(out)
}

/// Norms for a list of lags and the fitted decay exponent `η̂` from
/// `log norm ≈ −η̂ log M + c`.
pub fn truncated_norm_table(
    grid: &Grid,
    f: &dyn Fn(f64) -> Vec<f64>,
    weight_centre: &dyn Fn(f64) -> f64,
    c: &dyn Fn(f64) -> f64,
    lags: &[f64],
    p: &TruncatedNormParams,
) -> Result<(Vec<(f64, f64)>, f64)> {
    let rows: Vec<(f64, f64)> =
        lags.iter().map(|&m| truncated_duhamel_norm(grid, f, weight_centre, c, m, p).map(|v| (m, v))).collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.0 > 0.0 && r.1 > 0.0).map(|r| (r.0.ln(), r.1.ln())).collect();
    let eta = if pts.len() >= 2 { -linear_fit(&pts).1 } else { f64::NAN };
    Ok((rows, eta))
}

/// Smooth time-dependent source with random centre, drift, width and phase.
pub fn random_source(g: &Grid, seed: u64) -> impl Fn(f64) -> StatePair + '_ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    move |t: f64| {
        let (m, v, w, k, om) = (3.0 * p[0], 0.3 * p[1], 1.5 + 0.5 * p[2], 1.5 * p[3], 1.0 + 0.5 * p[4]);
        let (m2, w2, om2) = (3.0 * p[5], 1.5 + 0.5 * p[6], 0.7 + 0.3 * p[7]);
        StatePair::new(
            g.sample(|x| (-((x - m - v * t) / w).powi(2)).exp() * (k * x + om * t).cos()),
            g.sample(|x| 0.5 * (-((x - m2) / w2).powi(2)).exp() * (om2 * t).sin()),
        )
    }
}
