//! Long centre-stable runs: local energy and Strichartz accumulation,
//! scattering profiles, the backward wave-operator construction and the
//! ratio tables of the scattering map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dichotomy::{project_instantaneous, Removal, Reprojector};
use crate::error::{Error, Result};
use crate::evolution::{bundles_at, evolve, free_propagate, DiagnosticOptions, DiagnosticSeries, MovingPotential, Scenario};
use crate::grid::Grid;
use crate::norms::{energy_norm, weighted_local_norms};
use crate::potentials::{linear_fit, PotentialSpec};
use crate::spectrum::{solve_scalar_spectrum, ScalarSpectrum, DEFAULT_ZERO_BAND};
use crate::state::StatePair;
use crate::trajectory::{Profile, Trajectory};

/// Gaussian packet `e^{−((x−c)/w)²}` with carrier `k`, moving in the
/// direction of `k`: `u₂ = ⟨k⟩ e^{…} sin(k(x − c) + φ)`.
pub fn wavepacket(grid: &Grid, centre: f64, width: f64, k: f64, phase: f64, amp: f64) -> StatePair {
    let w = (1.0 + k * k).sqrt();
    let env = |x: f64| amp * (-(grid.wrap(x - centre) / width).powi(2)).exp();
    StatePair::new(
        grid.sample(|x| env(x) * (k * grid.wrap(x - centre) + phase).cos()),
        grid.sample(|x| w * env(x) * (k * grid.wrap(x - centre) + phase).sin()),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// One static well.
    Static,
    /// One well with `β(t) = 0.4 + 0.004 tanh(t/10)` and slip `0.005 e^{−t}`.
    Moving,
    /// Two wells leaving `∓15` with velocities `∓0.4`.
    TwoPotential,
}

impl ReferenceKind {
    pub fn all() -> [ReferenceKind; 3] {
        [ReferenceKind::Static, ReferenceKind::Moving, ReferenceKind::TwoPotential]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReferenceKind::Static => "static",
            ReferenceKind::Moving => "moving",
            ReferenceKind::TwoPotential => "two_potential",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Reference {
    pub kind: ReferenceKind,
    pub scenario: Scenario,
    pub spectra: Vec<ScalarSpectrum>,
    /// Packets at the wells, projected centre-stable at `t = 0`.
    pub data: StatePair,
    pub delta_max: f64,
}

/// Carrier wavenumber of the reference packets.
pub const REFERENCE_CARRIER: f64 = 5.0;

/// Well of the reference scenarios: `−7.875 sech²(x/0.8)`, levels `−5.0625`
/// and `−1` of `−∂² + V`, so `L` has one negative eigenvalue and one zero
/// mode like `−6 sech²`. Unlike `−6 sech²` (where `P₂(tanh x)` is a bounded
/// zero-energy solution) it has no resonance at the edge, and local decay is
/// not held back to `t^{−1/2}`.
pub fn reference_well() -> PotentialSpec {
    PotentialSpec::poeschl_teller_levels(1.8, 0.8)
}

/// Builds one of the three reference scenarios. All share one box, large
/// enough for the profile horizon `2T` at `T = 200`.
pub fn reference_scenario(kind: ReferenceKind) -> Result<Reference> {
    reference_scenario_with(kind, reference_well(), REFERENCE_CARRIER)
}

/// Reference geometry with another well and packets of carrier `±carrier`.
pub fn reference_scenario_with(kind: ReferenceKind, pt: PotentialSpec, carrier: f64) -> Result<Reference> {
    let (grid, potentials) = match kind {
        ReferenceKind::Static => (Grid::new(8192, 768.0)?, vec![MovingPotential { potential: pt.clone(), trajectory: Trajectory::fixed(0.0) }]),
        ReferenceKind::Moving => {
            let tr = Trajectory {
                y0: -40.0,
                beta: vec![Profile::Constant { value: 0.4 }, Profile::Tanh { amp: 0.004, scale: 10.0 }],
                slip: vec![Profile::Exp { amp: 0.005, rate: 1.0 }],
            };
            (Grid::new(8192, 768.0)?, vec![MovingPotential { potential: pt.clone(), trajectory: tr }])
        }
        ReferenceKind::TwoPotential => (
            Grid::new(8192, 768.0)?,
            vec![
                MovingPotential { potential: pt.clone(), trajectory: Trajectory::linear(-15.0, -0.4) },
                MovingPotential { potential: pt.clone(), trajectory: Trajectory::linear(15.0, 0.4) },
            ],
        ),
    };
    let scenario = Scenario::new(grid.clone(), potentials, 0.05)?;
    let spec = solve_scalar_spectrum(&pt, &Grid::new(1024, 40.0)?, DEFAULT_ZERO_BAND)?;
    let spectra = vec![spec; scenario.potentials.len()];
    let mut raw = StatePair::zeros(grid.n());
    for (j, c) in scenario.centres_at(0.0).into_iter().enumerate() {
        let k = if j % 2 == 0 { carrier } else { -carrier };
        raw = raw.add(&wavepacket(&grid, c, 3.0, k, 0.3, 1.0));
    }
    let data = project_instantaneous(&scenario, &spectra, 0.0, &raw, Removal::CentreStable)?;
    Ok(Reference { kind, scenario, spectra, data, delta_max: 0.02 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: f64,
    pub diagnostics: DiagnosticOptions,
    /// Re-projection period in steps; 0 disables it.
    pub reproject_every: usize,
    pub removal: Removal,
    /// Number of profile samples on `[T/2, T]`.
    pub scatter_samples: usize,
    /// The profile `φ₊` is read off at `profile_factor · T`; the run continues
    /// that long. A factor of 1 makes the curve vanish at `T` by construction.
    pub profile_factor: f64,
}

impl RunConfig {
    pub fn standard(horizon: f64) -> Self {
        RunConfig {
            horizon,
            diagnostics: DiagnosticOptions::default(),
            reproject_every: 5,
            removal: Removal::CentreStable,
            scatter_samples: 11,
            profile_factor: 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScatterResult {
    /// `φ₊ = e^{−T'𝔏₀} v(T')` at the profile horizon `T'`.
    pub profile: StatePair,
    pub profile_time: f64,
    pub times: Vec<f64>,
    /// `‖v(t) − e^{t𝔏₀}φ₊‖_ℋ` on `[T/2, T]`.
    pub curve: Vec<f64>,
    /// Power-law exponent of the source density on `[T/2, T]`.
    pub density_exponent: f64,
    pub density_times: Vec<f64>,
    /// `‖W v₁‖_{L²}` plus the re-projection leak per unit time.
    pub density: Vec<f64>,
}

impl ScatterResult {
    pub fn is_decreasing(&self) -> bool {
        self.curve.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn final_value(&self) -> f64 {
        self.curve.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CentreStableRun {
    pub series: DiagnosticSeries,
    pub scatter: ScatterResult,
    pub initial_energy: f64,
    /// Energy norm at `T`.
    pub final_energy: f64,
    pub leak_total: f64,
    pub leak_max: f64,
}

impl CentreStableRun {
    /// `𝔚(T)/𝔚(T/2)`.
    pub fn local_ratio(&self) -> f64 {
        saturation_ratio(&self.series.cumulative_local, &self.series.times)
    }

    pub fn besov_ratio(&self) -> f64 {
        saturation_ratio(&self.series.cumulative_besov, &self.series.times)
    }
}

fn saturation_ratio(series: &[f64], times: &[f64]) -> f64 {
    let t = times.last().copied().unwrap_or(0.0);
    match (DiagnosticSeries::at(series, times, 0.5 * t), series.last()) {
        (Some(a), Some(b)) if a > 0.0 => b / a,
        _ => f64::NAN,
    }
}

/// Forward run with periodic re-projection, diagnostics on `[0, T]` and the
/// scattering profile from `T' = profile_factor · T`.
pub fn centre_stable_run(scen: &Scenario, spectra: &[ScalarSpectrum], u0: &StatePair, cfg: &RunConfig) -> Result<CentreStableRun> {
    if !(cfg.profile_factor >= 1.0) {
        return Err(Error::InvalidParameter(format!("profile_factor must be at least 1, got {}", cfg.profile_factor)));
    }
    let g = &scen.grid;
    let dt = scen.dt;
    let steps = (cfg.horizon / dt).round() as usize;
    let long = (cfg.horizon * cfg.profile_factor / dt).round() as usize;
    let stride = cfg.diagnostics.stride.max(1);
    let mut series = DiagnosticSeries::new(cfg.diagnostics.sigma, cfg.diagnostics.nu);
    let samples = cfg.scatter_samples.max(2);
    let sample_steps: Vec<usize> = (0..samples).map(|i| steps / 2 + (steps - steps / 2) * i / (samples - 1)).collect();
    let mut profiles: Vec<(f64, StatePair)> = Vec::new();
    let mut rp = (cfg.reproject_every > 0).then(|| Reprojector::new(spectra.to_vec(), cfg.removal, cfg.reproject_every));
    let mut density_t = Vec::new();
    let mut density = Vec::new();
    let mut last_leak = 0.0;
    let mut at_horizon = None;
    let mut leak_at_horizon = (0.0, 0.0);
    let fin = evolve(scen, u0, 0.0, dt, long, None, |n, t, u| {
        if n > 0 {
            if let Some(r) = rp.as_mut() {
                r.apply(scen, n, t, u)?;
            }
        }
        if n <= steps && (n % stride == 0 || n == steps) {
            series.record(scen, t, u, cfg.diagnostics.besov, None)?;
            let w = scen.potential_at(t)?;
            let src = (u.u.iter().zip(&w).map(|(a, v)| (a * v).powi(2)).sum::<f64>() * g.h()).sqrt();
            let leak = rp.as_ref().map(|r| r.removed_total).unwrap_or(0.0);
            let rate = if n == 0 { 0.0 } else { (leak - last_leak) / (stride as f64 * dt) };
            last_leak = leak;
            density_t.push(t);
            density.push(src + rate);
        }
        if sample_steps.contains(&n) {
            profiles.push((t, free_propagate(g, u, -t)));
        }
        if n == steps {
            at_horizon = Some(energy_norm(g, u));
            leak_at_horizon = rp.as_ref().map(|r| (r.removed_total, r.removed_max)).unwrap_or((0.0, 0.0));
        }
        Ok(())
    })?;
    let profile_time = long as f64 * dt;
    let profile = free_propagate(g, &fin, -profile_time);
    let times: Vec<f64> = profiles.iter().map(|p| p.0).collect();
    let curve: Vec<f64> = profiles.iter().map(|p| energy_norm(g, &p.1.sub(&profile))).collect();
    let density_exponent = density_exponent(&density_t, &density, steps as f64 * dt);
    Ok(CentreStableRun {
        series,
        scatter: ScatterResult { profile, profile_time, times, curve, density_exponent, density_times: density_t, density },
        initial_energy: energy_norm(g, u0),
        final_energy: at_horizon.unwrap_or(f64::NAN),
        leak_total: leak_at_horizon.0,
        leak_max: leak_at_horizon.1,
    })
}

/// Power-law exponent `p` of `d(s) ≈ C s^p` fitted on `[T/2, T]`.
fn density_exponent(ts: &[f64], d: &[f64], horizon: f64) -> f64 {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(d)
        .filter(|(t, v)| **t >= 0.5 * horizon && **v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return f64::NAN;
    }
    linear_fit(&pts).1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NegativeControl {
    pub amplitude: f64,
    /// `log₁₀ 𝔚(T)/𝔚(T/2)`.
    pub log10_ratio: f64,
    /// Number of `1e−100` rescalings applied to keep the state finite.
    pub rescalings: usize,
}

/// Centre-stable data plus `amplitude · 𝒴⁺` of the first well, run with only
/// the zero modes removed. The flow is linear, so the state is rescaled when
/// it gets large and `𝔚` is accumulated in log form.
pub fn unstable_negative_control(
    scen: &Scenario,
    spectra: &[ScalarSpectrum],
    u0: &StatePair,
    horizon: f64,
    amplitude: f64,
    diag: &DiagnosticOptions,
) -> Result<NegativeControl> {
    let g = &scen.grid;
    let dt = scen.dt;
    let steps = (horizon / dt).round() as usize;
    let stride = diag.stride.max(1);
    let bundles = bundles_at(scen, spectra, 0.0)?;
    let yp = bundles.first().and_then(|b| b.y_plus.first()).ok_or_else(|| Error::InvalidParameter("negative control needs an unstable mode".into()))?;
    let mut u = u0.clone();
    u.axpy(amplitude, yp);
    let mut rp = Reprojector::new(spectra.to_vec(), Removal::ZeroOnly, 5);
    let ln_add = |a: f64, b: f64| {
        let m = a.max(b);
        if m == f64::NEG_INFINITY {
            m
        } else {
            m + ((a - m).exp() + (b - m).exp()).ln()
        }
    };
    let (mut ln_scale, mut rescalings) = (0.0, 0usize);
    let (mut ln_cum, mut ln_half, mut prev) = (f64::NEG_INFINITY, f64::NEG_INFINITY, None::<f64>);
    evolve(scen, &u, 0.0, dt, steps, None, |n, t, u| {
        if n > 0 {
            rp.apply(scen, n, t, u)?;
        }
        if energy_norm(g, u) > 1e100 {
            u.scale(1e-100);
            ln_scale += 100.0 * std::f64::consts::LN_10;
            rescalings += 1;
        }
        if n % stride == 0 || n == steps {
            let centres = scen.centres_at(t);
            let local: f64 = weighted_local_norms(g, u, if centres.is_empty() { &[0.0] } else { &centres }, diag.sigma, diag.nu)?.iter().sum();
            let ln_i = 2.0 * (local.ln() + ln_scale);
            if let Some(p) = prev {
                let width = if n % stride == 0 { stride } else { n % stride } as f64 * dt;
                ln_cum = ln_add(ln_cum, (0.5 * width).ln() + ln_add(p, ln_i));
            }
            prev = Some(ln_i);
            if n <= steps / 2 {
                ln_half = ln_cum;
            }
        }
        Ok(())
    })?;
    Ok(NegativeControl { amplitude, log10_ratio: 0.5 * (ln_cum - ln_half) / std::f64::consts::LN_10, rescalings })
}

/// Scenario, free profile and terminal times of the wave-operator check.
#[derive(Clone, Debug)]
pub struct WaveOperatorSetup {
    pub scenario: Scenario,
    pub spectra: Vec<ScalarSpectrum>,
    pub phi0: StatePair,
    pub t_list: Vec<f64>,
}

/// Well `s = 1.9, w = 0.8` (no zero mode, no gap eigenvalue) moving at
/// `β = 0.2` from `−16`; `φ₀` is a `k = 3` packet at `−40` that crosses it.
/// With `free` the potential list is empty and the construction is exact.
pub fn wave_operator_setup(free: bool) -> Result<WaveOperatorSetup> {
    let grid = Grid::new(2048, 256.0)?;
    let well = PotentialSpec::poeschl_teller_levels(1.9, 0.8);
    let (potentials, spectra) = if free {
        (vec![], vec![])
    } else {
        let spec = solve_scalar_spectrum(&well, &Grid::new(1024, 40.0)?, DEFAULT_ZERO_BAND)?;
        (vec![MovingPotential { potential: well, trajectory: Trajectory::linear(-16.0, 0.2) }], vec![spec])
    };
    let scenario = Scenario::new(grid.clone(), potentials, 0.0125)?;
    let phi0 = wavepacket(&grid, -40.0, 3.0, 3.0, 0.0, 1.0);
    Ok(WaveOperatorSetup { scenario, spectra, phi0, t_list: vec![20.0, 40.0, 80.0, 160.0] })
}

/// Scenarios for the backward-estimate tables: one static and one moving
/// reference well on a box sized for `s ≤ 100`.
pub fn ratio_scenarios() -> Result<Vec<(&'static str, Scenario, Vec<ScalarSpectrum>)>> {
    let grid = Grid::new(2048, 256.0)?;
    let well = reference_well();
    let spec = solve_scalar_spectrum(&well, &Grid::new(1024, 40.0)?, DEFAULT_ZERO_BAND)?;
    let mk = |tr: Trajectory| Scenario::new(grid.clone(), vec![MovingPotential { potential: well.clone(), trajectory: tr }], 0.05);
    Ok(vec![
        ("static", mk(Trajectory::fixed(0.0))?, vec![spec.clone()]),
        ("moving", mk(Trajectory::linear(-20.0, 0.4))?, vec![spec]),
    ])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveOperatorResult {
    pub t_list: Vec<f64>,
    pub candidates: Vec<StatePair>,
    /// `‖u_{t_{n+1}}(0) − u_{t_n}(0)‖_ℋ`.
    pub differences: Vec<f64>,
    /// Removed norm during each backward run.
    pub leaks: Vec<f64>,
    /// Forward check `‖π_c(t)u(t) − e^{t𝔏₀}φ₀‖_ℋ` from the last candidate.
    pub check_times: Vec<f64>,
    pub check_curve: Vec<f64>,
}

/// For each `t₀`: terminal data `π_c(t₀)e^{t₀𝔏₀}φ₀`, homogeneous backward run to
/// 0 with the stable and zero-mode parts removed every `reproject_every` steps.
pub fn wave_operator_backward(
    scen: &Scenario,
    spectra: &[ScalarSpectrum],
    phi0: &StatePair,
    t_list: &[f64],
    reproject_every: usize,
    check_samples: usize,
) -> Result<WaveOperatorResult> {
    for s in spectra {
        if !s.zero.is_empty() {
            return Err(Error::InvalidParameter("wave-operator scenarios must not have zero modes".into()));
        }
    }
    if t_list.windows(2).any(|w| w[1] <= w[0]) || t_list.is_empty() {
        return Err(Error::InvalidParameter("t_list must be increasing and non-empty".into()));
    }
    let g = &scen.grid;
    let dt = scen.dt;
    let runs: Vec<Result<(StatePair, f64)>> = t_list
        .par_iter()
        .map(|&t0| {
            let steps = (t0 / dt).round() as usize;
            let t0 = steps as f64 * dt;
            let term = project_instantaneous(scen, spectra, t0, &free_propagate(g, phi0, t0), Removal::Continuous)?;
            let mut rp = Reprojector::new(spectra.to_vec(), Removal::CentreUnstable, reproject_every);
            let u = evolve(scen, &term, t0, -dt, steps, None, |n, t, u| if n > 0 { rp.apply(scen, n, t, u) } else { Ok(()) })?;
            Ok((u, rp.removed_total))
        })
        .collect();
    let mut candidates = Vec::new();
    let mut leaks = Vec::new();
    for r in runs {
        let (u, l) = r?;
        candidates.push(u);
        leaks.push(l);
    }
    let differences = candidates.windows(2).map(|w| energy_norm(g, &w[1].sub(&w[0]))).collect();
    // forward check from the last candidate
    let t_last = *t_list.last().unwrap_or(&0.0);
    let steps = (t_last / dt).round() as usize;
    let every = (steps / check_samples.max(1)).max(1);
    let mut rp = Reprojector::new(spectra.to_vec(), Removal::CentreStable, reproject_every);
    let mut check_times = Vec::new();
    let mut check_curve = Vec::new();
    let start = candidates.last().cloned().unwrap_or_else(|| phi0.clone());
    evolve(scen, &start, 0.0, dt, steps, None, |n, t, u| {
        if n > 0 {
            rp.apply(scen, n, t, u)?;
        }
        if n % every == 0 && n > 0 {
            let pc = project_instantaneous(scen, spectra, t, u, Removal::Continuous)?;
            check_times.push(t);
            check_curve.push(energy_norm(g, &pc.sub(&free_propagate(g, phi0, t))));
        }
        Ok(())
    })?;
    Ok(WaveOperatorResult { t_list: t_list.to_vec(), candidates, differences, leaks, check_times, check_curve })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioRow {
    pub sample: usize,
    pub initial_energy: f64,
    /// `‖φ₀‖/‖u₀‖` with `φ₀` the scattering profile at the horizon.
    pub profile_ratio: f64,
    /// `(s, ‖u(0)‖/‖u(s)‖)`.
    pub backward: Vec<(f64, f64)>,
    pub leak: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioTable {
    pub rows: Vec<RatioRow>,
    pub profile_min: f64,
    pub profile_max: f64,
    pub backward_min: f64,
    pub backward_max: f64,
}

/// Random continuum data (packets near the wells, projected with `π_c`), run
/// forward with centre-stable re-projection up to `s_list.last()`.
pub fn scattering_map_bounds(scen: &Scenario, spectra: &[ScalarSpectrum], count: usize, s_list: &[f64], seed: u64, contaminate: f64) -> Result<RatioTable> {
    let g = &scen.grid;
    let dt = scen.dt;
    let horizon = s_list.iter().cloned().fold(0.0, f64::max);
    let steps = (horizon / dt).round() as usize;
    let centres = scen.centres_at(0.0);
    let bundles0 = if contaminate != 0.0 { Some(bundles_at(scen, spectra, 0.0)?) } else { None };
    let data: Vec<StatePair> = (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let c = if centres.is_empty() { 0.0 } else { centres[rng.random_range(0..centres.len())] } + rng.random_range(-3.0..3.0);
            let k = rng.random_range(1.5..3.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let w = rng.random_range(2.0..4.0);
            let ph = rng.random_range(0.0..std::f64::consts::TAU);
            let raw = wavepacket(g, c, w, k, ph, 1.0);
            let mut u = project_instantaneous(scen, spectra, 0.0, &raw, Removal::Continuous)?;
            if let Some(b) = &bundles0 {
                u.axpy(contaminate, &b[0].y_plus[0]);
            }
            Ok(u)
        })
        .collect::<Result<_>>()?;
    let removal = if contaminate != 0.0 { Removal::ZeroOnly } else { Removal::CentreStable };
    let rows: Vec<Result<RatioRow>> = data
        .par_iter()
        .enumerate()
        .map(|(i, u0)| {
            let e0 = energy_norm(g, u0);
            let mut rp = Reprojector::new(spectra.to_vec(), removal, 5);
            let mut back = Vec::new();
            let targets: Vec<usize> = s_list.iter().map(|s| (s / dt).round() as usize).collect();
            let fin = evolve(scen, u0, 0.0, dt, steps, None, |n, _t, u| {
                if n > 0 {
                    rp.apply(scen, n, n as f64 * dt, u)?;
                }
                if let Some(j) = targets.iter().position(|&m| m == n) {
                    back.push((s_list[j], e0 / energy_norm(g, u)));
                }
                Ok(())
            })?;
            let phi = free_propagate(g, &fin, -(steps as f64 * dt));
            Ok(RatioRow { sample: i, initial_energy: e0, profile_ratio: energy_norm(g, &phi) / e0, backward: back, leak: rp.removed_total })
        })
        .collect();
    let rows: Vec<RatioRow> = rows.into_iter().collect::<Result<_>>()?;
    let pr = rows.iter().map(|r| r.profile_ratio);
    let br = rows.iter().flat_map(|r| r.backward.iter().map(|b| b.1));
    Ok(RatioTable {
        profile_min: pr.clone().fold(f64::INFINITY, f64::min),
        profile_max: pr.fold(0.0, f64::max),
        backward_min: br.clone().fold(f64::INFINITY, f64::min),
        backward_max: br.fold(0.0, f64::max),
        rows,
    })
}
