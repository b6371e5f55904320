//! Trajectories `(β(t), y(t))`, their smallness budget and the reduction to
//! a frozen velocity plus a slow drift `c(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// One additive term of a velocity or slip curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `amp · e^{−rate·t}`
    Exp { amp: f64, rate: f64 },
    /// `amp · tanh(t/scale)`
    Tanh { amp: f64, scale: f64 },
    /// `amp` on `[start, end)`, zero elsewhere.
    Window { amp: f64, start: f64, end: f64 },
    /// `slope · t`
    Linear { slope: f64 },
    /// Samples at spacing `dt` starting at `t = 0`, Catmull–Rom in between,
    /// held constant past the last sample.
    Samples { dt: f64, values: Vec<f64> },
}

impl Profile {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Exp { amp, rate } => amp * (-rate * t).exp(),
            Profile::Tanh { amp, scale } => amp * (t / scale).tanh(),
            Profile::Window { amp, start, end } => {
                if t >= *start && t < *end {
                    *amp
                } else {
                    0.0
                }
            }
            Profile::Linear { slope } => slope * t,
            Profile::Samples { dt, values } => samples_eval(*dt, values, t).0,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Profile::Constant { .. } | Profile::Window { .. } => 0.0,
            Profile::Exp { amp, rate } => -rate * amp * (-rate * t).exp(),
            Profile::Tanh { amp, scale } => {
                let s = 1.0 / (t / scale).cosh();
                amp / scale * s * s
            }
            Profile::Linear { slope } => *slope,
            Profile::Samples { dt, values } => samples_eval(*dt, values, t).1,
        }
    }

    /// `∫₀ᵗ value`.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Profile::Constant { value } => value * t,
            Profile::Exp { amp, rate } => {
                if *rate == 0.0 {
                    amp * t
                } else {
                    amp * (1.0 - (-rate * t).exp()) / rate
                }
            }
            Profile::Tanh { amp, scale } => amp * scale * (t / scale).cosh().ln(),
            Profile::Window { amp, start, end } => amp * (t.min(*end) - start.max(0.0)).max(0.0),
            Profile::Linear { slope } => 0.5 * slope * t * t,
            Profile::Samples { dt, values } => samples_integral(*dt, values, t),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Profile::Constant { value } => value.is_finite(),
            Profile::Exp { amp, rate } => amp.is_finite() && rate.is_finite(),
            Profile::Tanh { amp, scale } => amp.is_finite() && scale.is_finite() && *scale != 0.0,
            Profile::Window { amp, start, end } => amp.is_finite() && start.is_finite() && end.is_finite(),
            Profile::Linear { slope } => slope.is_finite(),
            Profile::Samples { dt, values } => *dt > 0.0 && !values.is_empty() && values.iter().all(|v| v.is_finite()),
        }
    }

    /// Jump sizes, which carry `L¹` mass of the derivative.
    fn jumps(&self) -> f64 {
        match self {
            Profile::Window { amp, start, .. } => {
                if *start > 0.0 {
                    2.0 * amp.abs()
                } else {
                    amp.abs()
                }
            }
            _ => 0.0,
        }
    }
}

fn samples_eval(dt: f64, v: &[f64], t: f64) -> (f64, f64) {
    let n = v.len();
    if n == 1 || t <= 0.0 {
        return (v[0], 0.0);
    }
    let s = t / dt;
    if s >= (n - 1) as f64 {
        return (v[n - 1], 0.0);
    }
    let i = s.floor() as usize;
    let tt = s - i as f64;
    let at = |j: isize| v[j.clamp(0, n as isize - 1) as usize];
    let i = i as isize;
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let m1 = 0.5 * (p2 - p0);
    let m2 = 0.5 * (p3 - p1);
    let t2 = tt * tt;
    let t3 = t2 * tt;
    let val = (2.0 * t3 - 3.0 * t2 + 1.0) * p1 + (t3 - 2.0 * t2 + tt) * m1 + (-2.0 * t3 + 3.0 * t2) * p2 + (t3 - t2) * m2;
    let der = (6.0 * t2 - 6.0 * tt) * p1 + (3.0 * t2 - 4.0 * tt + 1.0) * m1 + (-6.0 * t2 + 6.0 * tt) * p2 + (3.0 * t2 - 2.0 * tt) * m2;
    (val, der / dt)
}

fn samples_integral(dt: f64, v: &[f64], t: f64) -> f64 {
    if t <= 0.0 {
        return v[0] * t;
    }
    // Gauss–Legendre on each sample interval is exact for the cubic pieces.
    let nodes = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];
    let mut acc = 0.0;
    let mut a = 0.0;
    while a < t {
        let b = (a + dt).min(t);
        let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
        acc += r * nodes.iter().map(|(x, w)| w * samples_eval(dt, v, m + r * x).0).sum::<f64>();
        a = b;
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Initial centre `y(0)`.
    pub y0: f64,
    /// Terms summing to `β(t)`.
    pub beta: Vec<Profile>,
    /// Terms summing to the slip `y′(t) − β(t)`.
    #[serde(default)]
    pub slip: Vec<Profile>,
}

impl Trajectory {
    pub fn fixed(y0: f64) -> Self {
        Self::linear(y0, 0.0)
    }

    pub fn linear(y0: f64, beta: f64) -> Self {
        Self { y0, beta: vec![Profile::Constant { value: beta }], slip: vec![] }
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta.iter().map(|p| p.value(t)).sum()
    }

    pub fn beta_prime(&self, t: f64) -> f64 {
        self.beta.iter().map(|p| p.derivative(t)).sum()
    }

    pub fn slip(&self, t: f64) -> f64 {
        self.slip.iter().map(|p| p.value(t)).sum()
    }

    pub fn y(&self, t: f64) -> f64 {
        self.y0 + self.beta.iter().chain(&self.slip).map(|p| p.integral(t)).sum::<f64>()
    }

    pub fn y_prime(&self, t: f64) -> f64 {
        self.beta(t) + self.slip(t)
    }

    pub fn is_linear(&self) -> bool {
        self.slip.iter().all(|p| p.value(0.0) == 0.0 && matches!(p, Profile::Constant { .. }))
            && self.beta.iter().all(|p| matches!(p, Profile::Constant { .. }))
    }

    fn is_finite(&self) -> bool {
        self.y0.is_finite() && self.beta.iter().chain(&self.slip).all(|p| p.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub horizon: f64,
    pub sup_beta: f64,
    pub beta_prime_l1: f64,
    pub beta_prime_linf: f64,
    pub slip_l1: f64,
    pub slip_linf: f64,
    /// `‖β′‖_{L¹∩L∞} + ‖y′ − β‖_{L¹∩L∞}`, each intersection norm taken as
    /// the sum of its two parts.
    pub total: f64,
    pub delta_max: f64,
    pub pass: bool,
    pub violations: Vec<String>,
}

fn fine_times(horizon: f64) -> Vec<f64> {
    let m = ((horizon / 1e-3).ceil() as usize).clamp(2000, 400_000);
    let m = m + m % 2;
    (0..=m).map(|i| horizon * i as f64 / m as f64).collect()
}

fn simpson(ts: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let m = ts.len() - 1;
    let h = ts[1] - ts[0];
    let mut acc = f(ts[0]) + f(ts[m]);
    for (i, &t) in ts.iter().enumerate().take(m).skip(1) {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
    }
    acc * h / 3.0
}

/// Checks `sup|β| < 1` and the smallness budget on `[0, horizon]`.
pub fn validate_trajectory(tr: &Trajectory, horizon: f64, delta_max: f64) -> Result<TrajectoryReport> {
    if !tr.is_finite() || !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::NonFinite("trajectory"));
    }
    let ts = fine_times(horizon);
    let mut sup_beta = 0.0f64;
    let mut bp_inf = 0.0f64;
    let mut slip_inf = 0.0f64;
    for &t in &ts {
        let b = tr.beta(t);
        let bp = tr.beta_prime(t);
        let s = tr.slip(t);
        if !(b.is_finite() && bp.is_finite() && s.is_finite()) {
            return Err(Error::NonFinite("trajectory samples"));
        }
        sup_beta = sup_beta.max(b.abs());
        bp_inf = bp_inf.max(bp.abs());
        slip_inf = slip_inf.max(s.abs());
    }
    if sup_beta >= 1.0 {
        return Err(Error::Superluminal(sup_beta));
    }
    let jumps: f64 = tr.beta.iter().map(|p| p.jumps()).sum();
    if jumps > 0.0 {
        bp_inf = f64::INFINITY;
    }
    let bp_l1 = simpson(&ts, |t| tr.beta_prime(t).abs()) + jumps;
    let slip_l1 = simpson(&ts, |t| tr.slip(t).abs());
    let total = bp_l1 + bp_inf + slip_l1 + slip_inf;
    let mut violations = Vec::new();
    if bp_l1 + bp_inf > delta_max {
        violations.push(format!("beta_prime: L1 {bp_l1:.3e} + Linf {bp_inf:.3e} exceeds {delta_max:.3e}"));
    }
    if slip_l1 + slip_inf > delta_max {
        violations.push(format!("slip: L1 {slip_l1:.3e} + Linf {slip_inf:.3e} exceeds {delta_max:.3e}"));
    }
    if total > delta_max && violations.is_empty() {
        violations.push(format!("combined budget {total:.3e} exceeds {delta_max:.3e}"));
    }
    Ok(TrajectoryReport {
        horizon,
        sup_beta,
        beta_prime_l1: bp_l1,
        beta_prime_linf: bp_inf,
        slip_l1,
        slip_linf: slip_inf,
        total,
        delta_max,
        pass: violations.is_empty(),
        violations,
    })
}

/// Frozen velocity `β₀ = β(0)` and drift `c(t) = y(t) − y(0) − β₀t`.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub traj: Trajectory,
    pub beta0: f64,
    /// `sup |a|` on the horizon.
    pub a_linf: f64,
    /// Coefficient in front of `|∂_β V|` in the remainder envelope.
    pub envelope_dbeta: f64,
    /// Coefficient in front of `|∇V|` in the remainder envelope.
    pub envelope_grad: f64,
    pub horizon: f64,
}

impl Reduction {
    pub fn c(&self, t: f64) -> f64 {
        self.traj.y(t) - self.traj.y0 - self.beta0 * t
    }

    pub fn a(&self, t: f64) -> f64 {
        self.traj.y_prime(t) - self.beta0
    }

    /// `b(t, s) = ∫_s^t a`.
    pub fn b(&self, t: f64, s: f64) -> f64 {
        self.c(t) - self.c(s)
    }
}

pub fn reduce_trajectory(tr: &Trajectory, horizon: f64) -> Result<Reduction> {
    if !tr.is_finite() {
        return Err(Error::NonFinite("trajectory"));
    }
    let beta0 = tr.beta(0.0);
    let ts = fine_times(horizon);
    let mut a_linf = 0.0f64;
    for &t in &ts {
        a_linf = a_linf.max((tr.y_prime(t) - beta0).abs());
    }
    let jumps: f64 = tr.beta.iter().map(|p| p.jumps()).sum();
    Ok(Reduction {
        traj: tr.clone(),
        beta0,
        a_linf,
        envelope_dbeta: simpson(&ts, |t| tr.beta_prime(t).abs()) + jumps,
        envelope_grad: simpson(&ts, |t| tr.slip(t).abs()),
        horizon,
    })
}

/// `U_A(t, s) φ = φ(x + b)` through the Fourier phase `e^{ikb}`.
pub fn shift_operator_apply(grid: &Grid, f: &[f64], b: f64) -> Vec<f64> {
    if b == 0.0 {
        return f.to_vec();
    }
    let mut spec = grid.spectrum_of(f);
    let ny = grid.nyquist_index();
    for (j, (z, &k)) in spec.iter_mut().zip(grid.k()).enumerate() {
        if j == ny {
            *z *= (k * b).cos();
        } else {
            *z *= num_complex::Complex64::from_polar(1.0, k * b);
        }
    }
    grid.real_from_spectrum(spec)
}
