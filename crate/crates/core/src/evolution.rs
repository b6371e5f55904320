//! Time stepping of `∂_t u = 𝔏₀ u + 𝒦(t) u + F(t)` with
//! `𝔏₀ = [[0, 1], [∂² − 1, 0]]` and `𝒦(t) = [[0, 0], [−W(t), 0]]`,
//! `W(t) = Σ_j V_j(γ_j(t)(x − y_j(t)))`.
//!
//! One step is Strang splitting: half kick `u₂ −= (dt/2) W(t) u₁`, exact free
//! step, half kick at `t + dt`. Because the kick is nilpotent the step equals
//! the trapezoid rule for the Duhamel formula around the free flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::modes::{build_modes, ModeBundle};
use crate::norms::{besov_norm, bracket, energy_norm, weighted_local_norms};
use crate::potentials::{gamma1, PotentialSpec};
use crate::resolvent::Sponge;
use crate::spectrum::ScalarSpectrum;
use crate::state::{symplectic_pair, StatePair};
use crate::trajectory::{validate_trajectory, Trajectory, TrajectoryReport};

/// `e^{τ𝔏₀}`: the Fourier multiplier `[[cos τω, sin τω/ω], [−ω sin τω, cos τω]]`,
/// `ω = ⟨k⟩`.
pub fn free_propagate(grid: &Grid, u: &StatePair, tau: f64) -> StatePair {
    if tau == 0.0 {
        return u.clone();
    }
    let (a, b) = grid.apply_matrix_symbol(&u.u, &u.ut, |k| {
        let w = bracket(k);
        let (s, c) = (tau * w).sin_cos();
        [c, s / w, -w * s, c]
    });
    StatePair { u: a, ut: b }
}

/// Transpose of [`free_propagate`] with respect to `⟨a, b⟩ = ∫ a₁b₁ + a₂b₂`.
pub fn free_propagate_transpose(grid: &Grid, u: &StatePair, tau: f64) -> StatePair {
    if tau == 0.0 {
        return u.clone();
    }
    let (a, b) = grid.apply_matrix_symbol(&u.u, &u.ut, |k| {
        let w = bracket(k);
        let (s, c) = (tau * w).sin_cos();
        [c, -w * s, s / w, c]
    });
    StatePair { u: a, ut: b }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovingPotential {
    pub potential: PotentialSpec,
    pub trajectory: Trajectory,
}

impl MovingPotential {
    /// Samples `V(γ(t)(x − y(t)))` using the periodic distance.
    pub fn sample(&self, grid: &Grid, t: f64) -> Result<Vec<f64>> {
        self.potential.sample(grid, self.trajectory.beta(t), self.trajectory.y(t))
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub grid: Grid,
    pub potentials: Vec<MovingPotential>,
    pub dt: f64,
    /// Absorbing layer acting as `u₂ ← e^{−s dt/2} u₂` with each half kick.
    /// Off by default.
    pub sponge: Option<Sponge>,
}

impl Scenario {
    pub fn new(grid: Grid, potentials: Vec<MovingPotential>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
        }
        for p in &potentials {
            p.potential.validate()?;
        }
        Ok(Scenario { grid, potentials, dt, sponge: None })
    }

    pub fn with_sponge(mut self, sponge: Sponge) -> Self {
        self.sponge = Some(sponge);
        self
    }

    /// Total potential `W(t)` on the grid.
    pub fn potential_at(&self, t: f64) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.grid.n()];
        for p in &self.potentials {
            for (a, b) in w.iter_mut().zip(p.sample(&self.grid, t)?) {
                *a += b;
            }
        }
        Ok(w)
    }

    pub fn centres_at(&self, t: f64) -> Vec<f64> {
        self.potentials.iter().map(|p| self.grid.wrap(p.trajectory.y(t))).collect()
    }

    /// Checks `|β| < 1`, finiteness and the CFL bound `dt ≤ h/(2(1 + max|β|))`
    /// on `[t0, t0 + horizon]` (or the mirrored interval for negative horizons).
    pub fn check_run(&self, t0: f64, horizon: f64) -> Result<()> {
        let (a, b) = if horizon >= 0.0 { (t0, t0 + horizon) } else { (t0 + horizon, t0) };
        let m = ((b - a) / 1e-2).ceil().max(1.0) as usize;
        let mut vmax = 0.0f64;
        for p in &self.potentials {
            for i in 0..=m {
                let t = a + (b - a) * i as f64 / m as f64;
                let (beta, y) = (p.trajectory.beta(t), p.trajectory.y(t));
                if !(beta.is_finite() && y.is_finite()) {
                    return Err(Error::NonFinite("trajectory samples"));
                }
                vmax = vmax.max(beta.abs());
            }
        }
        if vmax >= 1.0 {
            return Err(Error::Superluminal(vmax));
        }
        let bound = 0.5 * self.grid.h() / (1.0 + vmax);
        if self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt: self.dt, bound });
        }
        Ok(())
    }

    /// Trajectory budgets `‖β′‖ + ‖y′ − β‖` on `[0, horizon]` against `delta_max`,
    /// plus the box-size rule `Lx ≥ 4 max|y| + 20 widths`.
    pub fn validate(&self, horizon: f64, delta_max: f64) -> Result<Vec<TrajectoryReport>> {
        let mut out = Vec::new();
        let mut ymax = 0.0f64;
        let mut wmax = 0.0f64;
        for p in &self.potentials {
            let rep = validate_trajectory(&p.trajectory, horizon, delta_max)?;
            if !rep.pass {
                return Err(Error::Trajectory(rep.violations.join("; ")));
            }
            let m = 400;
            for i in 0..=m {
                ymax = ymax.max(p.trajectory.y(horizon * i as f64 / m as f64).abs());
            }
            wmax = wmax.max(p.potential.width());
            out.push(rep);
        }
        let need = 4.0 * ymax + 20.0 * wmax;
        if self.grid.lx() < need {
            return Err(Error::InvalidParameter(format!("box half-width {} below 4 max|y| + 20 widths = {need}", self.grid.lx())));
        }
        self.check_run(0.0, horizon)?;
        Ok(out)
    }

    pub fn stepper(&self) -> Stepper<'_> {
        Stepper { scen: self, cache: None, sponge: self.sponge.map(|s| s.profile(&self.grid)) }
    }
}

/// Strang stepper with a one-entry cache of the sampled potential, so the
/// closing kick of one step is reused as the opening kick of the next.
pub struct Stepper<'a> {
    scen: &'a Scenario,
    cache: Option<(f64, Vec<f64>)>,
    sponge: Option<Vec<f64>>,
}

impl Stepper<'_> {
    fn potential(&mut self, t: f64) -> Result<Vec<f64>> {
        if let Some((tc, w)) = &self.cache {
            if *tc == t {
                return Ok(w.clone());
            }
        }
        let w = self.scen.potential_at(t)?;
        self.cache = Some((t, w.clone()));
        Ok(w)
    }

    fn kick(&self, u: &mut StatePair, w: &[f64], tau: f64) {
        for ((b, a), v) in u.ut.iter_mut().zip(&u.u).zip(w) {
            *b -= tau * v * a;
        }
        if let Some(s) = &self.sponge {
            for (b, sv) in u.ut.iter_mut().zip(s) {
                *b *= (-sv * tau).exp();
            }
        }
    }

    /// Advances `u` from `t` to `t + dt` (`dt` may be negative).
    /// The forcing enters as `dt e^{(dt/2)𝔏₀} F(t + dt/2)`.
    pub fn step(&mut self, u: &mut StatePair, t: f64, dt: f64, forcing: Option<&dyn Fn(f64) -> StatePair>) -> Result<()> {
        let g = &self.scen.grid;
        let w0 = self.potential(t)?;
        self.kick(u, &w0, 0.5 * dt);
        let mut v = match forcing {
            Some(f) => {
                let mut v = free_propagate(g, u, 0.5 * dt);
                v.axpy(dt, &f(t + 0.5 * dt));
                free_propagate(g, &v, 0.5 * dt)
            }
            None => free_propagate(g, u, dt),
        };
        let w1 = self.potential(t + dt)?;
        self.kick(&mut v, &w1, 0.5 * dt);
        *u = v;
        Ok(())
    }

    /// Transpose of the homogeneous step map from `t` to `t + dt`, used to
    /// pull linear functionals back along the flow.
    pub fn step_transpose(&mut self, l: &mut StatePair, t: f64, dt: f64) -> Result<()> {
        let g = &self.scen.grid;
        let w1 = self.potential(t + dt)?;
        self.kick_transpose(l, &w1, 0.5 * dt);
        let mut v = free_propagate_transpose(g, l, dt);
        let w0 = self.potential(t)?;
        self.kick_transpose(&mut v, &w0, 0.5 * dt);
        *l = v;
        Ok(())
    }

    fn kick_transpose(&self, l: &mut StatePair, w: &[f64], tau: f64) {
        if let Some(s) = &self.sponge {
            for (b, sv) in l.ut.iter_mut().zip(s) {
                *b *= (-sv * tau).exp();
            }
        }
        for ((a, b), v) in l.u.iter_mut().zip(&l.ut).zip(w) {
            *a -= tau * v * b;
        }
    }
}

/// Evolves `u0` from `t0` over `steps` steps of signed size `dt`. After each
/// step `hook(n, t, &mut u)` runs with `n` the number of completed steps; it
/// may record or modify the state.
pub fn evolve(
    scen: &Scenario,
    u0: &StatePair,
    t0: f64,
    dt: f64,
    steps: usize,
    forcing: Option<&dyn Fn(f64) -> StatePair>,
    mut hook: impl FnMut(usize, f64, &mut StatePair) -> Result<()>,
) -> Result<StatePair> {
    if u0.len() != scen.grid.n() {
        return Err(Error::GridMismatch);
    }
    if dt.abs() > scen.dt * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!("step {dt} exceeds the scenario step {}", scen.dt)));
    }
    if dt < 0.0 && scen.sponge.is_some() {
        return Err(Error::InvalidParameter("backward runs cannot use an absorbing layer".into()));
    }
    scen.check_run(t0, dt * steps as f64)?;
    let mut st = scen.stepper();
    let mut u = u0.clone();
    hook(0, t0, &mut u)?;
    // Without potentials the step is the free group itself. Repeating the
    // same rounded symbol thousands of times drifts at the 1e-12 level, so
    // propagate from the last state the hook touched instead.
    let free = scen.potentials.is_empty() && scen.sponge.is_none() && forcing.is_none();
    let mut anchor = (u.clone(), 0usize);
    let mut last = u.clone();
    for n in 0..steps {
        let t = t0 + n as f64 * dt;
        if free {
            if u != last {
                anchor = (u.clone(), n);
            }
            u = free_propagate(&scen.grid, &anchor.0, (n + 1 - anchor.1) as f64 * dt);
            last.clone_from(&u);
        } else {
            st.step(&mut u, t, dt, forcing)?;
        }
        if !u.is_finite() {
            return Err(Error::NonFinite("evolved state"));
        }
        hook(n + 1, t0 + (n + 1) as f64 * dt, &mut u)?;
    }
    Ok(u)
}

/// Energy functional `∫ u₂² + u₁′² + u₁² + W u₁²` with the potential frozen at `t`.
pub fn frozen_energy(scen: &Scenario, u: &StatePair, t: f64) -> Result<f64> {
    let e = energy_norm(&scen.grid, u).powi(2);
    let w = scen.potential_at(t)?;
    let pot: f64 = u.u.iter().zip(&w).map(|(a, v)| v * a * a).sum::<f64>() * scen.grid.h();
    Ok(e + pot)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticOptions {
    /// Diagnostics every `stride` steps.
    pub stride: usize,
    pub sigma: f64,
    pub nu: f64,
    pub besov: bool,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        DiagnosticOptions { stride: 10, sigma: 15.0, nu: 0.1, besov: true }
    }
}

/// Per-sample diagnostics and their running time integrals.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DiagnosticSeries {
    pub sigma: f64,
    pub nu: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Weighted local norm around each centre.
    pub local: Vec<Vec<f64>>,
    /// `(‖𝒟u₁‖²_B + ‖u₂‖²_B)^{1/2}` in `B^{−5/6}_{6,2}`.
    pub besov: Vec<f64>,
    /// `λ_± = ω(u, 𝒴^∓)` per potential and level, as `[λ₊, λ₋]`.
    pub amplitudes: Vec<Vec<Vec<[f64; 2]>>>,
    /// `(∫₀ᵗ (Σ_j local_j)² ds)^{1/2}`.
    pub cumulative_local: Vec<f64>,
    /// `(∫₀ᵗ besov² ds)^{1/2}`.
    pub cumulative_besov: Vec<f64>,
}

impl DiagnosticSeries {
    pub fn new(sigma: f64, nu: f64) -> Self {
        DiagnosticSeries { sigma, nu, ..Default::default() }
    }

    /// Records one sample. `bundles` gives the modes at time `t`, one per
    /// potential, for the amplitude series.
    pub fn record(&mut self, scen: &Scenario, t: f64, u: &StatePair, besov: bool, bundles: Option<&[ModeBundle]>) -> Result<()> {
        let g = &scen.grid;
        self.times.push(t);
        self.energy.push(energy_norm(g, u));
        let centres = scen.centres_at(t);
        let local = if centres.is_empty() {
            weighted_local_norms(g, u, &[0.0], self.sigma, self.nu)?
        } else {
            weighted_local_norms(g, u, &centres, self.sigma, self.nu)?
        };
        let total: f64 = local.iter().sum();
        self.local.push(local);
        let b = if besov {
            let du = crate::norms::apply_fractional_d(g, &u.u, 1.0);
            let a = besov_norm(g, &du, -5.0 / 6.0, 6.0, 2.0)?;
            let c = besov_norm(g, &u.ut, -5.0 / 6.0, 6.0, 2.0)?;
            (a * a + c * c).sqrt()
        } else {
            0.0
        };
        self.besov.push(b);
        if let Some(bs) = bundles {
            self.amplitudes.push(
                bs.iter()
                    .map(|m| {
                        m.y_minus
                            .iter()
                            .zip(&m.y_plus)
                            .map(|(ym, yp)| [symplectic_pair(g, u, ym), symplectic_pair(g, u, yp)])
                            .collect()
                    })
                    .collect(),
            );
        }
        let k = self.times.len();
        let (cl, cb) = if k == 1 {
            (0.0, 0.0)
        } else {
            let dt = self.times[k - 1] - self.times[k - 2];
            let prev_total: f64 = self.local[k - 2].iter().sum();
            let l2 = self.cumulative_local[k - 2].powi(2) + 0.5 * dt.abs() * (prev_total.powi(2) + total.powi(2));
            let b2 = self.cumulative_besov[k - 2].powi(2) + 0.5 * dt.abs() * (self.besov[k - 2].powi(2) + b * b);
            (l2.sqrt(), b2.sqrt())
        };
        self.cumulative_local.push(cl);
        self.cumulative_besov.push(cb);
        Ok(())
    }

    /// Value of a cumulative series at the last sample with time `<= t`.
    pub fn at(series: &[f64], times: &[f64], t: f64) -> Option<f64> {
        times.iter().rposition(|&s| s <= t + 1e-9).map(|i| series[i])
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionRun {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<StatePair>,
    pub diagnostics: DiagnosticSeries,
    pub final_state: StatePair,
}

/// Forward run with diagnostics every `opts.stride` steps and snapshots every
/// `snapshot_stride` steps (0 disables snapshots). `spectra`, one per
/// potential, enables the mode-amplitude series.
pub fn run_with_diagnostics(
    scen: &Scenario,
    u0: &StatePair,
    steps: usize,
    forcing: Option<&dyn Fn(f64) -> StatePair>,
    opts: &DiagnosticOptions,
    snapshot_stride: usize,
    spectra: Option<&[ScalarSpectrum]>,
) -> Result<EvolutionRun> {
    let mut diag = DiagnosticSeries::new(opts.sigma, opts.nu);
    let mut snaps = Vec::new();
    let mut snap_t = Vec::new();
    let stride = opts.stride.max(1);
    let fin = evolve(scen, u0, 0.0, scen.dt, steps, forcing, |n, t, u| {
        if n % stride == 0 || n == steps {
            let bundles = match spectra {
                Some(sp) => Some(bundles_at(scen, sp, t)?),
                None => None,
            };
            diag.record(scen, t, u, opts.besov, bundles.as_deref())?;
        }
        if snapshot_stride > 0 && (n % snapshot_stride == 0 || n == steps) {
            snaps.push(u.clone());
            snap_t.push(t);
        }
        Ok(())
    })?;
    Ok(EvolutionRun { t0: 0.0, dt: scen.dt, steps, snapshot_times: snap_t, snapshots: snaps, diagnostics: diag, final_state: fin })
}

/// Mode bundles of every potential at `(β_j(t), y_j(t))`.
pub fn bundles_at(scen: &Scenario, spectra: &[ScalarSpectrum], t: f64) -> Result<Vec<ModeBundle>> {
    if spectra.len() != scen.potentials.len() {
        return Err(Error::InvalidParameter("one spectrum per potential is required".into()));
    }
    scen.potentials
        .iter()
        .zip(spectra)
        .map(|(p, s)| build_modes(s, &scen.grid, p.trajectory.beta(t), p.trajectory.y(t)))
        .collect()
}

/// Default `κ = 2 max_k ν_k/γ` over the given bundles.
pub fn default_kappa(bundles: &[ModeBundle]) -> f64 {
    2.0 * bundles.iter().flat_map(|b| b.rates()).fold(0.0, f64::max)
}

/// `γ` of a constant velocity; convenience for callers building scenarios.
pub fn gamma_of(beta: f64) -> Result<f64> {
    gamma1(beta)
}
