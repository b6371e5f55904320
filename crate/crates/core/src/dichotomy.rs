//! Exponential dichotomy on trajectories of the full flow: measured rates,
//! flow-consistent projections, re-projection during long runs, channel
//! cutoffs and backward-solved unstable amplitudes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{bundles_at, evolve, MovingPotential, Scenario};
use crate::grid::Grid;
use crate::modes::{build_modes, Family, ModeLabel, ProjectionSet};
use crate::norms::energy_norm;
use crate::potentials::linear_fit;
use crate::spectrum::ScalarSpectrum;
use crate::state::{pairing, StatePair};
use crate::trajectory::Trajectory;

/// Quintic smoothstep `6s⁵ − 15s⁴ + 10s³` on `[0, 1]`, clamped outside.
pub fn smoothstep5(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// `χ(x; r) = 1` for `|x| ≤ r`, `0` for `|x| ≥ 2r`.
pub fn cutoff(x: f64, r: f64) -> f64 {
    1.0 - smoothstep5((x.abs() - r) / r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Cone opening `ε`.
    pub eps: f64,
    /// Start time `B` after which the cones must stay disjoint.
    pub start: f64,
    /// Offset `L` in the radius `L + εt`.
    pub offset: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams { eps: 0.1, start: 10.0, offset: 5.0 }
    }
}

/// `χ_j(t)` for every potential, `χ₀ = 1 − Σ χ_j` first.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    pub t: f64,
    pub radius: f64,
    pub chi: Vec<Vec<f64>>,
}

impl ChannelSet {
    /// `sup |(1 − χ_j) V_j| / sup |V_j|` per potential.
    pub fn containment_defect(&self, scen: &Scenario) -> Result<Vec<f64>> {
        scen.potentials
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let v = p.sample(&scen.grid, self.t)?;
                let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let out = v.iter().zip(&self.chi[j + 1]).fold(0.0f64, |m, (a, c)| m.max((a * (1.0 - c)).abs()));
                Ok(if peak > 0.0 { out / peak } else { 0.0 })
            })
            .collect()
    }

    /// `max_x |Σ_j χ_j − 1|`.
    pub fn partition_defect(&self) -> f64 {
        let n = self.chi[0].len();
        (0..n).map(|i| (self.chi.iter().map(|c| c[i]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Cutoffs `χ_j(t) = χ(x − y_j(t); L + εt)`. Errors when two supports overlap.
pub fn channel_cutoffs(scen: &Scenario, p: &ChannelParams, t: f64) -> Result<ChannelSet> {
    let g = &scen.grid;
    let r = p.offset + p.eps * t.max(0.0);
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("cutoff radius must be positive".into()));
    }
    if 2.0 * r >= g.lx() {
        return Err(Error::InvalidParameter(format!("cutoff radius {r} does not fit the box")));
    }
    let centres = scen.centres_at(t);
    for a in 0..centres.len() {
        for b in a + 1..centres.len() {
            if g.wrap(centres[a] - centres[b]).abs() < 4.0 * r {
                return Err(Error::ChannelOverlap { a: a + 1, b: b + 1, t });
            }
        }
    }
    let mut chi = vec![vec![1.0; g.n()]];
    for &c in &centres {
        let cj = g.sample(|x| cutoff(g.wrap(x - c), r));
        for (z, v) in chi[0].iter_mut().zip(&cj) {
            *z -= v;
        }
        chi.push(cj);
    }
    Ok(ChannelSet { t, radius: r, chi })
}

/// Scans `[B, horizon]` for colliding cones.
pub fn check_channels(scen: &Scenario, p: &ChannelParams, horizon: f64) -> Result<()> {
    let m = ((horizon - p.start).max(0.0) / 0.5).ceil() as usize;
    for i in 0..=m {
        let t = p.start + (horizon - p.start).max(0.0) * i as f64 / m.max(1) as f64;
        channel_cutoffs(scen, p, t)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateFit {
    pub velocity: f64,
    pub level: usize,
    /// `ν√(1 − v²)`.
    pub expected: f64,
    pub growth: f64,
    pub decay: f64,
    pub growth_rel_err: f64,
    pub decay_rel_err: f64,
    pub efolds: f64,
}

/// Evolves `𝒴⁺_k` and `𝒴⁻_k` of a potential moving with constant velocity `v`
/// and fits `log|c(t)|`, `c` the mode coefficient from the biorthogonal
/// projection at the current centre, over `efolds` e-folds.
pub fn dichotomy_rates(spec: &ScalarSpectrum, grid: &Grid, v: f64, dt: f64, efolds: f64, samples: usize) -> Result<Vec<RateFit>> {
    let rate0 = build_modes(spec, grid, v, 0.0)?.rates();
    let mut out = Vec::new();
    for (k, &r) in rate0.iter().enumerate() {
        let horizon = efolds / r;
        let steps = (horizon / dt).ceil() as usize;
        let stride = (steps / samples.max(2)).max(1);
        let y0 = -0.5 * v * horizon;
        let traj = Trajectory::linear(y0, v);
        let scen = Scenario::new(grid.clone(), vec![MovingPotential { potential: spec.potential.clone(), trajectory: traj.clone() }], dt)?;
        let mut fits = [0.0; 2];
        for (slot, fam) in [(0, Family::Plus), (1, Family::Minus)] {
            let b0 = build_modes(spec, grid, v, y0)?;
            let u0 = if fam == Family::Plus { b0.y_plus[k].clone() } else { b0.y_minus[k].clone() };
            let mut pts = Vec::new();
            evolve(&scen, &u0, 0.0, dt, steps, None, |n, t, u| {
                if n % stride == 0 || n == steps {
                    let b = build_modes(spec, grid, v, traj.y(t))?;
                    let ps = ProjectionSet::new(grid, std::slice::from_ref(&b))?;
                    let c = ps.coefficients(u);
                    let idx = ps.labels.iter().position(|l| l.family == fam && l.index == k).unwrap_or(0);
                    if c[idx] != 0.0 {
                        pts.push((t, c[idx].abs().ln()));
                    }
                }
                Ok(())
            })?;
            fits[slot] = linear_fit(&pts).1;
        }
        out.push(RateFit {
            velocity: v,
            level: k,
            expected: r,
            growth: fits[0],
            decay: fits[1],
            growth_rel_err: (fits[0] - r).abs() / r,
            decay_rel_err: (fits[1] + r).abs() / r,
            efolds,
        });
    }
    Ok(out)
}

/// Which families a projection removes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Removal {
    /// `π_cs = 1 − π₊ − π₀`.
    CentreStable,
    /// `1 − π₋ − π₀`, for backward runs.
    CentreUnstable,
    /// `π_c = 1 − P_d`.
    Continuous,
    /// `1 − π₀` only.
    ZeroOnly,
    /// `1 − π₊` only.
    UnstableOnly,
}

impl Removal {
    pub fn removes(&self, l: &ModeLabel) -> bool {
        match self {
            Removal::CentreStable => l.family != Family::Minus,
            Removal::CentreUnstable => l.family != Family::Plus,
            Removal::Continuous => true,
            Removal::ZeroOnly => matches!(l.family, Family::Zero | Family::One),
            Removal::UnstableOnly => l.family == Family::Plus,
        }
    }
}

/// Instantaneous projection built from the boosted modes at `(β_j(t), y_j(t))`.
pub fn project_instantaneous(scen: &Scenario, spectra: &[ScalarSpectrum], t: f64, u: &StatePair, removal: Removal) -> Result<StatePair> {
    let ps = ProjectionSet::new(&scen.grid, &bundles_at(scen, spectra, t)?)?;
    Ok(u.sub(&ps.project_where(u, |l| removal.removes(l))))
}

/// `π_cs(t) u` from the modes at time `t`: removes the `π₀` and unstable parts.
pub fn project_centre_stable(scen: &Scenario, spectra: &[ScalarSpectrum], t: f64, u: &StatePair) -> Result<StatePair> {
    project_instantaneous(scen, spectra, t, u, Removal::CentreStable)
}

/// Re-projection applied every `every` steps of a run; accumulates the
/// removed `ℋ` norm (the leak).
#[derive(Clone, Debug)]
pub struct Reprojector {
    pub spectra: Vec<ScalarSpectrum>,
    pub removal: Removal,
    pub every: usize,
    pub removed_total: f64,
    pub removed_max: f64,
}

impl Reprojector {
    pub fn new(spectra: Vec<ScalarSpectrum>, removal: Removal, every: usize) -> Self {
        Reprojector { spectra, removal, every: every.max(1), removed_total: 0.0, removed_max: 0.0 }
    }

    pub fn apply(&mut self, scen: &Scenario, n: usize, t: f64, u: &mut StatePair) -> Result<()> {
        if n % self.every != 0 {
            return Ok(());
        }
        let p = project_instantaneous(scen, &self.spectra, t, u, self.removal)?;
        let d = energy_norm(&scen.grid, &u.sub(&p));
        self.removed_total += d;
        self.removed_max = self.removed_max.max(d);
        *u = p;
        Ok(())
    }
}

/// Projections transported by the discrete flow `𝒯` of a scenario.
///
/// Each mode `R_a(t)` is carried by `𝒯` and each dual `L_a(t)` by `𝒯^{−T}`,
/// so `G = ⟨L(t), R(t)⟩` is time independent and
/// `P(t) = R(t) G⁻¹ ⟨L(t), ·⟩ = 𝒯(t, 0) P(0) 𝒯(0, t)`.
/// Unstable and zero-mode seeds and stable duals start at `t = 0` and are
/// pushed forward; stable seeds and unstable duals start at the horizon and
/// are pulled back, so every transport runs in its growing direction.
#[derive(Clone, Debug)]
pub struct FlowProjector {
    pub grid: Grid,
    pub dt: f64,
    pub stride: usize,
    pub times: Vec<f64>,
    pub labels: Vec<ModeLabel>,
    r: Vec<Vec<StatePair>>,
    l: Vec<Vec<StatePair>>,
    gram_inv: Vec<Vec<f64>>,
    /// `max_t ‖G(t) − G(0)‖ / ‖G(0)‖` over the stored samples.
    pub gram_drift: f64,
}

impl FlowProjector {
    pub fn build(scen: &Scenario, spectra: &[ScalarSpectrum], horizon: f64, stride: usize) -> Result<Self> {
        if scen.sponge.is_some() {
            return Err(Error::InvalidParameter("flow projector needs an invertible flow (no absorbing layer)".into()));
        }
        let dt = scen.dt;
        let steps = (horizon / dt).round() as usize;
        let stride = stride.max(1);
        scen.check_run(0.0, horizon)?;
        let start = ProjectionSet::new(&scen.grid, &bundles_at(scen, spectra, 0.0)?)?;
        let end = ProjectionSet::new(&scen.grid, &bundles_at(scen, spectra, steps as f64 * dt)?)?;
        let labels = start.labels.clone();
        let m = labels.len();
        let forward_r: Vec<bool> = labels.iter().map(|l| l.family != Family::Minus).collect();
        let forward_l: Vec<bool> = labels.iter().map(|l| l.family != Family::Plus).collect();
        let samples = steps / stride + 1;
        let mut r = vec![vec![StatePair::zeros(0); m]; samples];
        let mut l = vec![vec![StatePair::zeros(0); m]; samples];
        // forward sweep
        let mut rs: Vec<StatePair> = start.modes.clone();
        let mut ls: Vec<StatePair> = start.duals.clone();
        let mut st = scen.stepper();
        for n in 0..=steps {
            if n % stride == 0 {
                for a in 0..m {
                    if forward_r[a] {
                        r[n / stride][a] = rs[a].clone();
                    }
                    if forward_l[a] {
                        l[n / stride][a] = ls[a].clone();
                    }
                }
            }
            if n == steps {
                break;
            }
            let t = n as f64 * dt;
            for a in 0..m {
                if forward_r[a] {
                    st.step(&mut rs[a], t, dt, None)?;
                }
                if forward_l[a] {
                    st.step_transpose(&mut ls[a], t + dt, -dt)?;
                }
            }
        }
        // backward sweep
        let mut rs: Vec<StatePair> = end.modes.clone();
        let mut ls: Vec<StatePair> = end.duals.clone();
        let mut st = scen.stepper();
        for n in (0..=steps).rev() {
            if n % stride == 0 {
                for a in 0..m {
                    if !forward_r[a] {
                        r[n / stride][a] = rs[a].clone();
                    }
                    if !forward_l[a] {
                        l[n / stride][a] = ls[a].clone();
                    }
                }
            }
            if n == 0 {
                break;
            }
            let t = n as f64 * dt;
            for a in 0..m {
                if !forward_r[a] {
                    st.step(&mut rs[a], t, -dt, None)?;
                }
                if !forward_l[a] {
                    st.step_transpose(&mut ls[a], t - dt, dt)?;
                }
            }
        }
        // rescale each series by its largest norm
        for a in 0..m {
            for series in [&mut r, &mut l] {
                let big = series.iter().map(|s| pairing(&scen.grid, &s[a], &s[a]).sqrt()).fold(0.0, f64::max);
                if !(big.is_finite() && big > 0.0) {
                    return Err(Error::NonFinite("transported modes"));
                }
                for s in series.iter_mut() {
                    s[a].scale(1.0 / big);
                }
            }
        }
        let gram_at = |i: usize| -> Vec<Vec<f64>> { (0..m).map(|a| (0..m).map(|b| pairing(&scen.grid, &l[i][a], &r[i][b])).collect()).collect() };
        let g0 = gram_at(0);
        let gnorm = g0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        let mut drift = 0.0f64;
        for i in 1..samples {
            let gi = gram_at(i);
            let d = gi.iter().flatten().zip(g0.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            drift = drift.max(d / gnorm);
        }
        let ps = ProjectionSet::from_parts(&scen.grid, labels.clone(), r[0].clone(), l[0].clone())?;
        let gram_inv = ps.gram_inverse();
        let times = (0..samples).map(|i| (i * stride) as f64 * dt).collect();
        Ok(FlowProjector { grid: scen.grid.clone(), dt, stride, times, labels, r, l, gram_inv, gram_drift: drift })
    }

    /// Index of the stored sample at time `t` (must be a stored time).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let i = (t / (self.dt * self.stride as f64)).round() as usize;
        if i >= self.times.len() || (self.times[i] - t).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("time {t} is not a stored sample")));
        }
        Ok(i)
    }

    pub fn project(&self, i: usize, u: &StatePair, removal: Removal) -> StatePair {
        let m = self.labels.len();
        let p: Vec<f64> = self.l[i].iter().map(|a| pairing(&self.grid, a, u)).collect();
        let mut out = u.clone();
        for a in 0..m {
            if removal.removes(&self.labels[a]) {
                let c: f64 = (0..m).map(|b| self.gram_inv[a][b] * p[b]).sum();
                out.axpy(-c, &self.r[i][a]);
            }
        }
        out
    }

    pub fn pi_cs(&self, i: usize, u: &StatePair) -> StatePair {
        self.project(i, u, Removal::CentreStable)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutationReport {
    pub times: Vec<f64>,
    /// `‖𝒯(t,0)π_cs(0)u − π_cs(t)𝒯(t,0)u‖_ℋ` with the flow-consistent projector.
    pub flow_defect: Vec<f64>,
    /// The same quantity with instantaneous projections from the analytic modes.
    pub analytic_defect: Vec<f64>,
    /// `‖(π_cs^flow(t) − π_cs^analytic(t)) 𝒯(t,0)u‖_ℋ / ‖𝒯(t,0)u‖_ℋ`.
    pub projector_gap: Vec<f64>,
    pub gram_drift: f64,
}

/// Two-path commutation check on the stored sample times of `fp`.
pub fn commutation_check(scen: &Scenario, spectra: &[ScalarSpectrum], fp: &FlowProjector, u: &StatePair) -> Result<CommutationReport> {
    let g = &scen.grid;
    let steps = (fp.times.last().copied().unwrap_or(0.0) / scen.dt).round() as usize;
    let a0 = fp.pi_cs(0, u);
    let b0 = project_centre_stable(scen, spectra, 0.0, u)?;
    let mut rep = CommutationReport { times: vec![], flow_defect: vec![], analytic_defect: vec![], projector_gap: vec![], gram_drift: fp.gram_drift };
    let mut st = scen.stepper();
    let (mut x, mut y, mut z) = (u.clone(), a0, b0);
    for n in 0..=steps {
        let t = n as f64 * scen.dt;
        if n % fp.stride == 0 {
            let i = n / fp.stride;
            let pf = fp.pi_cs(i, &x);
            let pa = project_centre_stable(scen, spectra, t, &x)?;
            rep.times.push(t);
            rep.flow_defect.push(energy_norm(g, &y.sub(&pf)));
            rep.analytic_defect.push(energy_norm(g, &z.sub(&pa)));
            rep.projector_gap.push(energy_norm(g, &pf.sub(&pa)) / energy_norm(g, &x));
        }
        if n == steps {
            break;
        }
        st.step(&mut x, t, scen.dt, None)?;
        st.step(&mut y, t, scen.dt, None)?;
        st.step(&mut z, t, scen.dt, None)?;
    }
    Ok(rep)
}

/// Coefficients of `𝒴⁰`, `𝒴¹` (all potentials) in `u` at time `t`.
pub fn zero_mode_coefficients(scen: &Scenario, spectra: &[ScalarSpectrum], t: f64, u: &StatePair) -> Result<Vec<f64>> {
    let ps = ProjectionSet::new(&scen.grid, &bundles_at(scen, spectra, t)?)?;
    let c = ps.coefficients(u);
    Ok(ps.labels.iter().zip(c).filter(|(l, _)| matches!(l.family, Family::Zero | Family::One)).map(|(_, c)| c).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackwardAmplitudes {
    pub potential: usize,
    pub level: usize,
    pub rate: f64,
    pub times: Vec<f64>,
    /// `λ₊(t)` from the backward exponential-weighted quadrature.
    pub lambda: Vec<f64>,
    /// Bound on the contribution of `[T, ∞)`, using `|g(s)| ≤ |g(T)| e^{ε(s−T)}`.
    pub tail_bound: Vec<f64>,
    /// `tail_bound > 0.1 |λ|`.
    pub unreliable: Vec<bool>,
    /// Measured coefficient `⟨α⁺(t), u(t)⟩ / G` along the run, for comparison.
    pub flow_coefficient: Vec<f64>,
    /// Integrand terms at each sample: drift, cross-potential, forcing.
    pub terms: Vec<[f64; 3]>,
}

/// `λ_{j,k,+}(t) = −∫_t^∞ e^{(ν/γ)(t−s)} g(s) ds` on the snapshot times of a run.
///
/// `g = ⟨α⁺, N⟩/G + ⟨m, u⟩/G` where `N = −Σ_{i≠j} V_i u₁ + F` (second
/// component) and `m = −(y′ − β)∂α⁺ + β′∂_β α⁺` is the drift of the dual away
/// from uniform motion with velocity `β(s)`. `eps` is the centre growth rate.
#[allow(clippy::too_many_arguments)]
pub fn unstable_amplitudes_backward(
    scen: &Scenario,
    spectra: &[ScalarSpectrum],
    times: &[f64],
    snapshots: &[StatePair],
    forcing: Option<&dyn Fn(f64) -> StatePair>,
    potential: usize,
    level: usize,
    include_cross: bool,
    eps: f64,
) -> Result<BackwardAmplitudes> {
    if times.len() != snapshots.len() || times.len() < 2 {
        return Err(Error::InvalidParameter("need matching times and snapshots (at least two)".into()));
    }
    let g = &scen.grid;
    let p = scen
        .potentials
        .get(potential)
        .ok_or_else(|| Error::InvalidParameter(format!("no potential {potential}")))?;
    let spec = &spectra[potential];
    let tr = &p.trajectory;
    let mut gs = Vec::with_capacity(times.len());
    let mut terms = Vec::with_capacity(times.len());
    let mut flow_c = Vec::with_capacity(times.len());
    let mut rate = 0.0;
    for (&t, u) in times.iter().zip(snapshots) {
        let (beta, y) = (tr.beta(t), tr.y(t));
        let b = build_modes(spec, g, beta, y)?;
        if level >= b.nu.len() {
            return Err(Error::InvalidParameter(format!("level {level} not present")));
        }
        rate = b.rates()[level];
        let ps = ProjectionSet::new(g, std::slice::from_ref(&b))?;
        let idx = ps.labels.iter().position(|l| l.family == Family::Plus && l.index == level).unwrap_or(0);
        let alpha = ps.duals[idx].clone();
        let gaa = ps.gram[idx][idx];
        flow_c.push(ps.coefficients(u)[idx]);
        // drift of the dual
        let slip = tr.y_prime(t) - beta;
        let da = StatePair { u: g.derivative(&alpha.u), ut: g.derivative(&alpha.ut) };
        let mut m = da.scaled(-slip);
        let bp = tr.beta_prime(t);
        if bp != 0.0 {
            let hb = 1e-5;
            let up = build_modes(spec, g, beta + hb, y)?.alpha_plus()[level].clone();
            let dn = build_modes(spec, g, beta - hb, y)?.alpha_plus()[level].clone();
            let mut d = up.sub(&dn);
            d.scale(bp / (2.0 * hb));
            m = m.add(&d);
        }
        let drift = pairing(g, &m, u) / gaa;
        let mut cross = 0.0;
        if include_cross {
            for (i, q) in scen.potentials.iter().enumerate() {
                if i == potential {
                    continue;
                }
                let v = q.sample(g, t)?;
                let n = StatePair { u: vec![0.0; g.n()], ut: v.iter().zip(&u.u).map(|(a, b)| -a * b).collect() };
                cross += pairing(g, &alpha, &n) / gaa;
            }
        }
        let force = match forcing {
            Some(f) => pairing(g, &alpha, &f(t)) / gaa,
            None => 0.0,
        };
        terms.push([drift, cross, force]);
        gs.push(drift + cross + force);
    }
    let n = times.len();
    let mut lambda = vec![0.0; n];
    let mut tail = vec![0.0; n];
    let t_end = times[n - 1];
    let tail_end = gs[n - 1].abs() / (rate - eps).max(1e-12);
    tail[n - 1] = tail_end;
    for i in (0..n - 1).rev() {
        let h = times[i + 1] - times[i];
        let e = (-rate * h).exp();
        lambda[i] = e * lambda[i + 1] - 0.5 * h * (gs[i] + e * gs[i + 1]);
        tail[i] = (rate * (times[i] - t_end)).exp() * tail_end;
    }
    let unreliable = lambda.iter().zip(&tail).map(|(l, b)| *b > 0.1 * l.abs()).collect();
    Ok(BackwardAmplitudes { potential, level, rate, times: times.to_vec(), lambda, tail_bound: tail, unreliable, flow_coefficient: flow_c, terms })
}
