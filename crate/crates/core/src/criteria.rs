//! Acceptance criteria, shared by the `acceptance` test target and the
//! `kglab suite` command. Each check returns an [`Outcome`] with the measured
//! numbers next to their limits; errors turn into failing outcomes.

use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dichotomy::{commutation_check, dichotomy_rates, FlowProjector};
use crate::duhamel::{random_source, sample_stream, stream_norm, truncated_norm_table, FrozenChannel, TruncatedNormParams};
use crate::error::Result;
use crate::evolution::{DiagnosticOptions, MovingPotential, Scenario};
use crate::grid::Grid;
use crate::modes::{apply_matrix_operator, build_modes};
use crate::norms::energy_norm;
use crate::potentials::PotentialSpec;
use crate::resolvent::{
    limiting_absorption_sweep, resolvent_identity_residual, scaling_relation_check, CState, ResolventOperator, Sponge, SweepParams,
};
use crate::scattering::{
    centre_stable_run, ratio_scenarios, reference_scenario, scattering_map_bounds, unstable_negative_control, wave_operator_backward,
    wave_operator_setup, CentreStableRun, ReferenceKind, RunConfig,
};
use crate::spectrum::{solve_scalar_spectrum, DEFAULT_ZERO_BAND};
use crate::state::{l2_norm, StatePair};
use crate::trajectory::Trajectory;

pub const TITLES: [&str; 11] = [
    "scalar spectrum",
    "boosted eigenrelation",
    "resolvent structure",
    "operator algebra",
    "dichotomy rates",
    "projection-flow commutation",
    "local energy decay",
    "scattering",
    "interaction truncation",
    "wave operator",
    "backward estimate",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// Bound the value is compared against, if any.
    pub limit: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Outcome {
    pub id: usize,
    pub title: String,
    pub pass: bool,
    pub detail: String,
    pub metrics: Vec<Metric>,
    /// Error code when the check could not run.
    pub error: Option<String>,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!("criterion {:>2} {} {}: {}", self.id, if self.pass { "PASS" } else { "FAIL" }, self.title, self.detail)
    }
}

struct Check {
    pass: bool,
    detail: Vec<String>,
    metrics: Vec<Metric>,
}

impl Check {
    fn new() -> Self {
        Check { pass: true, detail: Vec::new(), metrics: Vec::new() }
    }

    /// Records `value < limit`.
    fn below(&mut self, name: &str, value: f64, limit: f64) {
        let ok = value < limit;
        self.pass &= ok;
        self.detail.push(format!("{name} {value:.3e} (< {limit:.1e})"));
        self.metrics.push(Metric { name: name.into(), value, limit: Some(limit) });
    }

    fn holds(&mut self, name: &str, ok: bool, note: String) {
        self.pass &= ok;
        self.detail.push(format!("{name} {note}"));
        self.metrics.push(Metric { name: name.into(), value: if ok { 1.0 } else { 0.0 }, limit: None });
    }

    fn report(&mut self, name: &str, value: f64) {
        self.metrics.push(Metric { name: name.into(), value, limit: None });
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")
}

/// Runs the criteria; the reference runs are shared between 7 and 8.
type ReferenceRuns = std::result::Result<Vec<(ReferenceKind, CentreStableRun)>, (String, String)>;

#[derive(Default)]
pub struct Suite {
    reference: OnceLock<ReferenceRuns>,
}

impl Suite {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn evaluate(&self, id: usize) -> Outcome {
        let title = TITLES.get(id.wrapping_sub(1)).copied().unwrap_or("unknown").to_string();
        let res = match id {
            1 => spectrum(),
            2 => eigenrelation(),
            3 => resolvent(),
            4 => operator_algebra(),
            5 => rates(),
            6 => commutation(),
            7 => self.local_decay(),
            8 => self.scattering(),
            9 => truncation(),
            10 => wave_operator(),
            11 => backward_estimate(),
            _ => return Outcome { id, title, pass: false, detail: "no such criterion".into(), metrics: vec![], error: Some("PARAMETER_INVALID".into()) },
        };
        match res {
            Ok(c) => Outcome { id, title, pass: c.pass, detail: c.detail.join("; "), metrics: c.metrics, error: None },
            Err(e) => Outcome { id, title, pass: false, detail: format!("error {}: {e}", e.code()), metrics: vec![], error: Some(e.code().into()) },
        }
    }

    fn reference_runs(&self) -> std::result::Result<&Vec<(ReferenceKind, CentreStableRun)>, (String, String)> {
        self.reference
            .get_or_init(|| {
                ReferenceKind::all()
                    .into_iter()
                    .map(|k| {
                        let r = reference_scenario(k)?;
                        centre_stable_run(&r.scenario, &r.spectra, &r.data, &RunConfig::standard(200.0)).map(|run| (k, run))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| (e.code().to_string(), e.to_string()))
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn local_decay(&self) -> Result<Check> {
        let runs = match self.reference_runs() {
            Ok(r) => r,
            Err((code, msg)) => return Err(crate::Error::InvalidParameter(format!("reference run failed ({code}): {msg}"))),
        };
        let mut c = Check::new();
        for (k, run) in runs {
            let r = run.local_ratio();
            c.below(&format!("{} W(200)/W(100) - 1", k.name()), (r - 1.0).abs(), 0.05);
            c.report(&format!("{} besov_ratio", k.name()), run.besov_ratio());
            c.report(&format!("{} leak_total", k.name()), run.leak_total);
        }
        for k in ReferenceKind::all() {
            let r = reference_scenario(k)?;
            let nc = unstable_negative_control(&r.scenario, &r.spectra, &r.data, 200.0, 1e-3, &DiagnosticOptions::default())?;
            let ok = nc.log10_ratio > 1.0;
            c.holds(&format!("{} control", k.name()), ok, format!("log10 growth {:.1} (> 1)", nc.log10_ratio));
        }
        Ok(c)
    }

    fn scattering(&self) -> Result<Check> {
        let runs = match self.reference_runs() {
            Ok(r) => r,
            Err((code, msg)) => return Err(crate::Error::InvalidParameter(format!("reference run failed ({code}): {msg}"))),
        };
        let mut c = Check::new();
        for (k, run) in runs.iter().filter(|(k, _)| *k != ReferenceKind::Static) {
            let s = &run.scatter;
            c.holds(&format!("{} curve", k.name()), s.is_decreasing(), format!("decreasing={} [{}]", s.is_decreasing(), fmt_list(&s.curve)));
            c.below(&format!("{} final/|u0|", k.name()), s.final_value() / run.initial_energy, 1e-2);
            c.report(&format!("{} density_exponent", k.name()), s.density_exponent);
        }
        Ok(c)
    }
}

/// Dirichlet finite-difference count of eigenvalues of `−D² + 1 + V` below `lam`.
fn sturm_count(v: &dyn Fn(f64) -> f64, l: f64, m: usize, lam: f64) -> usize {
    let h = 2.0 * l / (m + 1) as f64;
    let off = 1.0 / (h * h);
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..m {
        let x = -l + h * (i + 1) as f64;
        let d = 2.0 * off + 1.0 + v(x) - lam;
        q = if i == 0 { d } else { d - off * off / q };
        if q == 0.0 {
            q = 1e-300;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn fd_eigenvalue(v: &dyn Fn(f64) -> f64, idx: usize) -> f64 {
    let solve = |m: usize| {
        let (mut lo, mut hi) = (-50.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sturm_count(v, 20.0, m, mid) > idx {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    (4.0 * solve(15999) - solve(7999)) / 3.0
}

fn pt6() -> PotentialSpec {
    PotentialSpec::poeschl_teller(6.0, 1.0)
}

fn spectrum() -> Result<Check> {
    let g = Grid::new(2048, 80.0)?;
    let s = solve_scalar_spectrum(&pt6(), &g, DEFAULT_ZERO_BAND)?;
    let mut c = Check::new();
    let ev = s.eigenvalues();
    c.holds("levels", ev.len() == 2, format!("{ev:?}"));
    if ev.len() == 2 {
        c.below("|e0 + 3|", (ev[0] + 3.0).abs(), 1e-6);
        c.below("|e1|", ev[1].abs(), 1e-6);
        let v = |x: f64| -6.0 / x.cosh().powi(2);
        c.below("|fd0 - e0|", (fd_eigenvalue(&v, 0) - ev[0]).abs(), 1e-6);
        c.below("|fd1 - e1|", (fd_eigenvalue(&v, 1) - ev[1]).abs(), 1e-6);
    }
    Ok(c)
}

fn eigenrelation() -> Result<Check> {
    let g = Grid::new(2048, 40.0)?;
    let s = solve_scalar_spectrum(&pt6(), &g, DEFAULT_ZERO_BAND)?;
    let rel = |a: &StatePair, b: &StatePair| l2_norm(&g, &a.sub(b)) / l2_norm(&g, b);
    let (mut pm, mut zero, mut gen) = (0.0f64, 0.0f64, 0.0f64);
    for beta in [0.0, 0.3, 0.6, 0.9] {
        let b = build_modes(&s, &g, beta, 0.0)?;
        let v = s.potential.sample(&g, beta, 0.0)?;
        let lam = b.rates()[0];
        let lp = apply_matrix_operator(&g, &b.y_plus[0], beta, &v);
        let lm = apply_matrix_operator(&g, &b.y_minus[0], beta, &v);
        pm = pm.max(rel(&lp, &b.y_plus[0].scaled(lam))).max(rel(&lm, &b.y_minus[0].scaled(-lam)));
        zero = zero.max(l2_norm(&g, &apply_matrix_operator(&g, &b.y_zero[0], beta, &v)));
        let l1 = apply_matrix_operator(&g, &b.y_one[0], beta, &v);
        gen = gen.max(l2_norm(&g, &apply_matrix_operator(&g, &l1, beta, &v)));
    }
    let mut c = Check::new();
    c.below("max rel |L Y± ∓ (ν/γ)Y±|", pm, 1e-6);
    c.below("max |L Y0|", zero, 1e-6);
    c.below("max |L² Y1|", gen, 1e-5);
    Ok(c)
}

fn probe(g: &Grid, seed: u64) -> CState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = || {
        let (a, m, w, k) = (rng.random_range(0.5..1.5), rng.random_range(-5.0..5.0), rng.random_range(0.7..2.0), rng.random_range(-2.0..2.0));
        g.sample(|x| a * (-((x - m) / w).powi(2)).exp()).iter().zip(g.x()).map(|(v, x)| C64::from_polar(*v, k * x)).collect::<Vec<_>>()
    };
    CState { u: f(), ut: f() }
}

fn resolvent() -> Result<Check> {
    let g = Grid::new(256, 20.0)?;
    let points = |beta: f64| {
        let gamma = 1.0 / (1.0 - beta * beta).sqrt();
        vec![3f64.sqrt() / gamma, -(3f64.sqrt()) / gamma, 0.0]
    };
    let mut two = 0.0f64;
    for beta in [0.0, 0.6] {
        let v = pt6().sample(&g, beta, 0.0)?;
        let r = ResolventOperator::perturbed(&g, C64::new(0.3, 0.2), beta, &v, &points(beta))?;
        let d = r.direct()?;
        for seed in 0..3 {
            let f = probe(&g, seed);
            let a = d.solve(&f);
            two = two.max(a.sub(&r.blocks_apply(&f)).norm(&g) / a.norm(&g));
        }
    }
    let beta = 0.4;
    let v = pt6().sample(&g, beta, 0.0)?;
    let free = ResolventOperator::free(&g, C64::new(0.3, 0.2), beta)?;
    let pert = ResolventOperator::perturbed(&g, C64::new(0.3, 0.2), beta, &v, &points(beta))?;
    let ident = (0..3).map(|s| resolvent_identity_residual(&free, &pert, &probe(&g, 10 + s))).fold(0.0, f64::max);
    let scaling = scaling_relation_check(&Grid::new(256, 16.0)?, &Grid::new(256, 20.0)?, -2.5, 0.6, &pt6())?;
    let lg = Grid::new(512, 40.0)?;
    let p = SweepParams {
        lambdas: vec![1.0, 1.05, 1.5, 2.0, 3.0],
        eps: vec![1e-1, 1e-2, 1e-3],
        tau: 1.5,
        beta: 0.0,
        sponge: Sponge::default(),
        threshold_band: 0.02,
        max_iterations: 300,
        seed: 1,
    };
    let lv = pt6().sample(&lg, 0.0, 0.0)?;
    let lap_free = limiting_absorption_sweep(&lg, None, &p)?;
    let lap_pt = limiting_absorption_sweep(&lg, Some(&lv), &p)?;
    let worst_change = |t: &crate::resolvent::SweepTable| t.last_rung_change.iter().map(|r| r.1).fold(0.0, f64::max);
    let mut c = Check::new();
    c.below("direct vs block formula", two, 1e-8);
    c.below("resolvent identity", ident, 1e-8);
    c.below("scaling residual / bound", scaling.residual / scaling.discretization_bound, 1.0);
    c.report("scaling residual", scaling.residual);
    c.holds("ladder free", lap_free.stabilized, format!("last-rung change {:.2e} (< 0.1)", worst_change(&lap_free)));
    c.holds("ladder pt", lap_pt.stabilized, format!("last-rung change {:.2e} (< 0.1)", worst_change(&lap_pt)));
    Ok(c)
}

fn operator_algebra() -> Result<Check> {
    let g = Grid::new(512, 40.0)?;
    let s = solve_scalar_spectrum(&pt6(), &g, DEFAULT_ZERO_BAND)?;
    let ch = FrozenChannel::new(&s, &g, 0.3, -2.0, None)?;
    let horizon = 3.0f64;
    let mut c = Check::new();
    let mut worst_c = 0.0f64;
    for seed in 0..5u64 {
        let src = random_source(&g, 100 + seed);
        let mut d = Vec::new();
        for dt in [0.04, 0.02, 0.01] {
            let steps = (horizon / dt).round() as usize;
            let gs = sample_stream(steps, dt, &src);
            let def = ch.identity_defect(&gs, dt)?;
            let rel = stream_norm(&g, dt, &def) / stream_norm(&g, dt, &gs);
            worst_c = worst_c.max(rel / (dt * dt));
            d.push(rel);
        }
        let ratio = d[1] / d[2];
        c.holds(&format!("stream {seed}"), (3.5..=4.5).contains(&ratio), format!("defects [{}] ratio {ratio:.2}", fmt_list(&d)));
    }
    c.report("C = max defect/dt²", worst_c);
    c.detail.push(format!("C {worst_c:.3}"));
    Ok(c)
}

fn rates() -> Result<Check> {
    let g = Grid::new(2048, 40.0)?;
    let s = solve_scalar_spectrum(&pt6(), &g, DEFAULT_ZERO_BAND)?;
    let mut c = Check::new();
    for v in [0.0, 0.4, 0.8] {
        for f in dichotomy_rates(&s, &g, v, 0.01, 10.0, 40)? {
            c.below(&format!("v={v} growth rel err"), f.growth_rel_err, 0.02);
            c.below(&format!("v={v} decay rel err"), f.decay_rel_err, 0.02);
        }
    }
    Ok(c)
}

fn commutation() -> Result<Check> {
    let g = Grid::new(1024, 40.0)?;
    let s = solve_scalar_spectrum(&pt6(), &g, DEFAULT_ZERO_BAND)?;
    let dt = 0.02;
    let scen = Scenario::new(g.clone(), vec![MovingPotential { potential: pt6(), trajectory: Trajectory::linear(-4.0, 0.4) }], dt)?;
    let sp = std::slice::from_ref(&s);
    let fp = FlowProjector::build(&scen, sp, 10.0, 25)?;
    let b = build_modes(&s, &g, 0.4, -4.0)?;
    let mut u = StatePair::new(
        g.sample(|x| (-((x + 2.0) / 2.0).powi(2)).exp() * (1.5 * x).cos()),
        g.sample(|x| 0.5 * (-((x + 2.0) / 2.0).powi(2)).exp() * (1.5 * x).sin()),
    );
    u.axpy(0.3, &b.y_minus[0]);
    u.axpy(0.2, &b.y_zero[0]);
    let rep = commutation_check(&scen, sp, &fp, &u)?;
    let worst = rep.flow_defect.iter().cloned().fold(0.0, f64::max);
    let mut c = Check::new();
    c.below("max defect t<=10", worst, 5.0 * dt * dt + 1e-6);
    c.report("gram drift", rep.gram_drift);
    c.report("max analytic-projector defect", rep.analytic_defect.iter().cloned().fold(0.0, f64::max));
    Ok(c)
}

fn truncation() -> Result<Check> {
    let g = Grid::new(2048, 160.0)?;
    let f = |s: f64| g.sample(|x| (-(x - 2.0 - 0.4 * s).powi(2)).exp() * (1.5 * s).cos());
    let w = |t: f64| -2.0 - 0.4 * t;
    let p = TruncatedNormParams { horizon: 90.0, dt: 0.05, sigma: 3.0 };
    let (rows, eta) = truncated_norm_table(&g, &f, &w, &|_| 0.0, &[5.0, 10.0, 20.0, 40.0], &p)?;
    let vals: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut c = Check::new();
    c.holds("norms", strictly_decreasing(&vals), format!("M=5,10,20,40: [{}]", vals.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>().join(" ")));
    c.holds("eta", eta > 0.0, format!("{eta:.4} (> 0)"));
    c.report("eta", eta);
    Ok(c)
}

fn wave_operator() -> Result<Check> {
    let w = wave_operator_setup(false)?;
    let r = wave_operator_backward(&w.scenario, &w.spectra, &w.phi0, &w.t_list, 5, 16)?;
    let f = wave_operator_setup(true)?;
    let rf = wave_operator_backward(&f.scenario, &f.spectra, &f.phi0, &f.t_list, 5, 16)?;
    let g = &f.scenario.grid;
    let free_err = rf.candidates.iter().map(|u| energy_norm(g, &u.sub(&f.phi0))).fold(0.0, f64::max) / energy_norm(g, &f.phi0);
    let mut c = Check::new();
    c.holds("differences", strictly_decreasing(&r.differences), format!("[{}]", fmt_list(&r.differences)));
    c.holds("forward check", strictly_decreasing(&r.check_curve), format!("[{}]", fmt_list(&r.check_curve)));
    c.below("free relative error", free_err, 1e-12);
    Ok(c)
}

fn backward_estimate() -> Result<Check> {
    let mut c = Check::new();
    for (name, scen, spectra) in ratio_scenarios()? {
        let t = scattering_map_bounds(&scen, &spectra, 20, &[25.0, 50.0, 100.0], 7, 0.0)?;
        let ok = t.backward_min >= 0.1 && t.backward_max <= 10.0;
        c.holds(name, ok, format!("|u(0)|/|u(s)| in [{:.3}, {:.3}], |φ0|/|u0| in [{:.3}, {:.3}]", t.backward_min, t.backward_max, t.profile_min, t.profile_max));
        c.report(&format!("{name} backward_min"), t.backward_min);
        c.report(&format!("{name} backward_max"), t.backward_max);
        c.report(&format!("{name} profile_min"), t.profile_min);
        c.report(&format!("{name} profile_max"), t.profile_max);
    }
    Ok(c)
}
