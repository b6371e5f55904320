//! The eight experiment kinds. Each returns CSV tables plus a JSON summary.

use kglab_core::duhamel::{random_source, sample_stream, stream_norm, truncated_norm_table, FrozenChannel, TruncatedNormParams};
use kglab_core::evolution::{run_with_diagnostics, DiagnosticOptions, DiagnosticSeries};
use kglab_core::modes::{apply_matrix_operator, build_modes};
use kglab_core::resolvent::{limiting_absorption_sweep, Sponge, SweepParams, SweepTable};
use kglab_core::scattering::{centre_stable_run, wave_operator_backward, RunConfig as CoreRunConfig};
use kglab_core::state::{l2_norm, StatePair};
use kglab_core::trajectory::reduce_trajectory;
use kglab_core::{Error, Result};
use serde_json::{json, Map, Value};

use crate::config::{Experiment, Prepared};
use crate::output::{Cell, Table};

pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    pub snapshots: Option<(Vec<f64>, Vec<StatePair>)>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { tables: Vec::new(), summary: Map::new(), snapshots: None }
    }

    fn note(&mut self, key: &str, v: Value) {
        self.summary.insert(key.into(), v);
    }
}

/// JSON has no NaN or infinity; those become null.
fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

pub fn run(p: &Prepared) -> Result<Outcome> {
    match p.config.experiment {
        Experiment::Spectrum => spectrum(p),
        Experiment::Modes => modes(p),
        Experiment::ResolventSweep => resolvent_sweep(p),
        Experiment::Evolve => evolve(p),
        Experiment::OperatorIdentity => operator_identity(p),
        Experiment::Scattering => scattering(p),
        Experiment::WaveOperator => wave_operator(p),
        Experiment::InteractionSweep => interaction_sweep(p),
    }
}

fn diagnostic_options(p: &Prepared) -> DiagnosticOptions {
    let r = &p.config.run;
    DiagnosticOptions { stride: r.diagnostic_stride, sigma: r.sigma, nu: r.nu, besov: true }
}

fn spectrum(p: &Prepared) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut t = Table::new("spectrum", "eigenvalue of L = -d^2 + 1 + V (energy^2); residual in L2", &["potential", "kind", "k", "eigenvalue", "residual"]);
    let mut counts = Vec::new();
    for (j, s) in p.spectra()?.iter().enumerate() {
        for (i, e) in s.negative.iter().enumerate() {
            t.push(vec![j.into(), "negative".into(), (i + 1).into(), e.value.into(), e.residual.into()]);
        }
        for (i, e) in s.zero.iter().enumerate() {
            t.push(vec![j.into(), "zero".into(), (i + 1).into(), e.value.into(), e.residual.into()]);
        }
        for (i, v) in s.gap.iter().enumerate() {
            t.push(vec![j.into(), "gap".into(), (i + 1).into(), (*v).into(), f64::NAN.into()]);
        }
        counts.push(json!({ "potential": j, "negative": s.k(), "zero": s.m(), "gap": s.gap.len() }));
    }
    out.note("levels", Value::Array(counts));
    out.tables.push(t);
    Ok(out)
}

fn rel(g: &kglab_core::Grid, a: &StatePair, b: &StatePair) -> f64 {
    l2_norm(g, &a.sub(b)) / l2_norm(g, b)
}

fn modes(p: &Prepared) -> Result<Outcome> {
    let g = p.grid();
    let mut out = Outcome::new();
    let mut t = Table::new(
        "modes",
        "rate nu/gamma (1/time); residual relative for plus/minus, absolute L2 for zero/one",
        &["potential", "family", "level", "beta", "centre", "rate", "residual"],
    );
    let mut worst = 0.0f64;
    for (j, (s, mp)) in p.spectra()?.iter().zip(&p.scenario.potentials).enumerate() {
        let (beta, y) = (mp.trajectory.beta(0.0), mp.trajectory.y(0.0));
        let b = build_modes(s, g, beta, y)?;
        let v = mp.sample(g, 0.0)?;
        for (i, lam) in b.rates().iter().enumerate() {
            let lp = apply_matrix_operator(g, &b.y_plus[i], beta, &v);
            let lm = apply_matrix_operator(g, &b.y_minus[i], beta, &v);
            let rp = rel(g, &lp, &b.y_plus[i].scaled(*lam));
            let rm = rel(g, &lm, &b.y_minus[i].scaled(-lam));
            worst = worst.max(rp).max(rm);
            t.push(vec![j.into(), "plus".into(), i.into(), beta.into(), y.into(), (*lam).into(), rp.into()]);
            t.push(vec![j.into(), "minus".into(), i.into(), beta.into(), y.into(), (-lam).into(), rm.into()]);
        }
        for i in 0..b.y_zero.len() {
            let z = l2_norm(g, &apply_matrix_operator(g, &b.y_zero[i], beta, &v));
            let l1 = apply_matrix_operator(g, &b.y_one[i], beta, &v);
            let o = l2_norm(g, &apply_matrix_operator(g, &l1, beta, &v));
            t.push(vec![j.into(), "zero".into(), i.into(), beta.into(), y.into(), 0.0.into(), z.into()]);
            t.push(vec![j.into(), "one".into(), i.into(), beta.into(), y.into(), 0.0.into(), o.into()]);
        }
    }
    out.note("worst_relative_residual", num(worst));
    out.tables.push(t);
    Ok(out)
}

fn resolvent_sweep(p: &Prepared) -> Result<Outcome> {
    let g = p.grid();
    let c = p.config.resolvent.as_ref().ok_or_else(|| Error::InvalidParameter("missing [resolvent]".into()))?;
    let mp = &p.scenario.potentials[0];
    let beta = mp.trajectory.beta(0.0);
    let v = mp.sample(g, 0.0)?;
    let params = SweepParams {
        lambdas: c.lambdas.clone(),
        eps: c.eps_ladder.clone(),
        tau: c.tau,
        beta,
        sponge: Sponge::default(),
        threshold_band: c.threshold_band,
        max_iterations: c.max_iterations,
        seed: p.config.seed,
    };
    let free = limiting_absorption_sweep(g, None, &params)?;
    let pert = limiting_absorption_sweep(g, Some(&v), &params)?;
    let mut out = Outcome::new();
    let mut t = Table::new("sweep", "weighted resolvent norm on L2 x L2 (dimensionless)", &["operator", "lambda", "eps", "norm", "threshold", "converged"]);
    let mut add = |name: &str, s: &SweepTable| {
        for r in &s.rows {
            t.push(vec![name.into(), r.lambda.into(), r.eps.into(), r.norm.into(), r.threshold.into(), r.converged.into()]);
        }
    };
    add("free", &free);
    add("perturbed", &pert);
    let worst = |s: &SweepTable| num(s.last_rung_change.iter().map(|r| r.1).fold(0.0, f64::max));
    out.note("free_stabilized", json!(free.stabilized));
    out.note("perturbed_stabilized", json!(pert.stabilized));
    out.note("free_last_rung_change", worst(&free));
    out.note("perturbed_last_rung_change", worst(&pert));
    out.tables.push(t);
    Ok(out)
}

fn diagnostics_tables(d: &DiagnosticSeries) -> Vec<Table> {
    let mut t = Table::new(
        "diagnostics",
        "time in natural units; norms in the energy space",
        &["t", "energy", "local_sum", "cumulative_local", "besov", "cumulative_besov"],
    );
    for i in 0..d.times.len() {
        let local: f64 = d.local[i].iter().sum();
        let pick = |v: &[f64]| v.get(i).copied().unwrap_or(f64::NAN);
        t.push(vec![
            d.times[i].into(),
            d.energy[i].into(),
            local.into(),
            pick(&d.cumulative_local).into(),
            pick(&d.besov).into(),
            pick(&d.cumulative_besov).into(),
        ]);
    }
    let mut l = Table::new("local", "weighted local energy per centre", &["t", "centre", "value"]);
    for (i, row) in d.local.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            l.push(vec![d.times[i].into(), j.into(), (*v).into()]);
        }
    }
    let mut a = Table::new("amplitudes", "symplectic pairings with the boosted modes", &["t", "potential", "level", "lambda_plus", "lambda_minus"]);
    for (i, per) in d.amplitudes.iter().enumerate() {
        for (j, lv) in per.iter().enumerate() {
            for (k, pm) in lv.iter().enumerate() {
                a.push(vec![d.times[i].into(), j.into(), k.into(), pm[0].into(), pm[1].into()]);
            }
        }
    }
    vec![t, l, a]
}

fn evolve(p: &Prepared) -> Result<Outcome> {
    let r = &p.config.run;
    let spectra = p.spectra()?;
    let u0 = p.data(&spectra)?;
    let steps = (r.horizon / r.dt).round() as usize;
    let sp = (!spectra.is_empty()).then_some(spectra.as_slice());
    let run = run_with_diagnostics(&p.scenario, &u0, steps, None, &diagnostic_options(p), r.snapshot_stride, sp)?;
    let mut out = Outcome::new();
    let d = &run.diagnostics;
    out.note("initial_energy", num(d.energy.first().copied().unwrap_or(f64::NAN)));
    out.note("final_energy", num(d.energy.last().copied().unwrap_or(f64::NAN)));
    out.note("cumulative_local", num(d.cumulative_local.last().copied().unwrap_or(f64::NAN)));
    out.tables = diagnostics_tables(d);
    if r.snapshot_stride > 0 {
        out.snapshots = Some((run.snapshot_times.clone(), run.snapshots.clone()));
    }
    Ok(out)
}

fn operator_identity(p: &Prepared) -> Result<Outcome> {
    let g = p.grid();
    let c = p.config.identity.as_ref().ok_or_else(|| Error::InvalidParameter("missing [identity]".into()))?;
    let spectra = p.spectra()?;
    let tr = &p.scenario.potentials[0].trajectory;
    let ch = FrozenChannel::new(&spectra[0], g, tr.beta(0.0), tr.y(0.0), p.config.run.kappa)?;
    let mut t = Table::new("identity", "relative defect of (1 - T0)(1 + T1) g - g in L2_t L2_x", &["stream", "dt", "defect", "defect_over_dt2"]);
    let mut worst_c = 0.0f64;
    let mut ratios = Vec::new();
    for s in 0..c.streams {
        let src = random_source(g, p.config.seed.wrapping_add(s as u64));
        let mut prev: Option<f64> = None;
        for &dt in &c.dts {
            let steps = (c.stream_horizon / dt).round() as usize;
            let gs = sample_stream(steps, dt, &src);
            let def = ch.identity_defect(&gs, dt)?;
            let rel = stream_norm(g, dt, &def) / stream_norm(g, dt, &gs);
            worst_c = worst_c.max(rel / (dt * dt));
            if let Some(pr) = prev {
                ratios.push(num(pr / rel));
            }
            prev = Some(rel);
            t.push(vec![s.into(), dt.into(), rel.into(), (rel / (dt * dt)).into()]);
        }
    }
    let mut out = Outcome::new();
    out.note("max_defect_over_dt2", num(worst_c));
    out.note("successive_ratios", Value::Array(ratios));
    out.tables.push(t);
    Ok(out)
}

fn scattering(p: &Prepared) -> Result<Outcome> {
    let r = &p.config.run;
    let c = p.config.scattering.as_ref().ok_or_else(|| Error::InvalidParameter("missing [scattering]".into()))?;
    let spectra = p.spectra()?;
    let u0 = p.data(&spectra)?;
    let cfg = CoreRunConfig {
        horizon: r.horizon,
        diagnostics: diagnostic_options(p),
        reproject_every: r.reproject_every,
        removal: r.removal,
        scatter_samples: c.samples,
        profile_factor: c.profile_factor,
    };
    let run = centre_stable_run(&p.scenario, &spectra, &u0, &cfg)?;
    let mut out = Outcome::new();
    out.tables = diagnostics_tables(&run.series);
    let s = &run.scatter;
    let mut t = Table::new("scatter", "energy-norm distance to the free profile", &["t", "distance"]);
    for (tt, v) in s.times.iter().zip(&s.curve) {
        t.push(vec![(*tt).into(), (*v).into()]);
    }
    out.tables.push(t);
    let mut d = Table::new("density", "local energy density (sum of weighted norms)^2", &["t", "density"]);
    for (tt, v) in s.density_times.iter().zip(&s.density) {
        d.push(vec![(*tt).into(), (*v).into()]);
    }
    out.tables.push(d);
    out.note("initial_energy", num(run.initial_energy));
    out.note("final_energy", num(run.final_energy));
    out.note("profile_time", num(s.profile_time));
    out.note("curve_decreasing", json!(s.is_decreasing()));
    out.note("final_distance", num(s.final_value()));
    out.note("final_distance_over_initial", num(s.final_value() / run.initial_energy));
    out.note("local_ratio", num(run.local_ratio()));
    out.note("besov_ratio", num(run.besov_ratio()));
    out.note("density_exponent", num(s.density_exponent));
    out.note("leak_total", num(run.leak_total));
    out.note("leak_max", num(run.leak_max));
    Ok(out)
}

fn wave_operator(p: &Prepared) -> Result<Outcome> {
    let r = &p.config.run;
    let c = p.config.wave_operator.as_ref().ok_or_else(|| Error::InvalidParameter("missing [wave_operator]".into()))?;
    let spectra = p.spectra()?;
    let phi0 = p.data(&spectra)?;
    let w = wave_operator_backward(&p.scenario, &spectra, &phi0, &c.t_list, r.reproject_every, c.check_samples)?;
    let mut t = Table::new("wave_operator", "energy-norm difference to the next candidate; removed mass", &["t_n", "difference_to_next", "leak"]);
    for (i, tn) in w.t_list.iter().enumerate() {
        let d = w.differences.get(i).copied().unwrap_or(f64::NAN);
        t.push(vec![(*tn).into(), d.into(), w.leaks[i].into()]);
    }
    let mut k = Table::new("check", "energy-norm distance of pi_c u(t) to the free evolution of phi0", &["t", "distance"]);
    for (tt, v) in w.check_times.iter().zip(&w.check_curve) {
        k.push(vec![(*tt).into(), (*v).into()]);
    }
    let mut out = Outcome::new();
    let dec = |v: &[f64]| v.windows(2).all(|x| x[1] < x[0]);
    out.note("differences_decreasing", json!(dec(&w.differences)));
    out.note("check_decreasing", json!(dec(&w.check_curve)));
    out.tables.push(t);
    out.tables.push(k);
    Ok(out)
}

fn interaction_sweep(p: &Prepared) -> Result<Outcome> {
    let r = &p.config.run;
    let c = p.config.interaction.as_ref().ok_or_else(|| Error::InvalidParameter("missing [interaction]".into()))?;
    let g = p.grid();
    let f = |s: f64| g.sample(|x| (-(x - c.source_centre - c.source_velocity * s).powi(2)).exp() * (c.carrier * s).cos());
    let w = |t: f64| c.weight_centre + c.weight_velocity * t;
    let red = match p.config.potentials.first() {
        Some(pc) => Some(reduce_trajectory(&pc.trajectory, r.horizon)?),
        None => None,
    };
    let drift = |t: f64| red.as_ref().map_or(0.0, |rd| rd.c(t));
    let params = TruncatedNormParams { horizon: r.horizon, dt: r.dt, sigma: c.sigma };
    let (rows, eta) = truncated_norm_table(g, &f, &w, &drift, &c.lags, &params)?;
    let mut t = Table::new("interaction", "truncated Duhamel norm in L2_t L2_x", &["lag", "norm"]);
    for (m, v) in &rows {
        t.push(vec![Cell::Num(*m), Cell::Num(*v)]);
    }
    let mut out = Outcome::new();
    out.note("eta", num(eta));
    out.note("strictly_decreasing", json!(rows.windows(2).all(|x| x[1].1 < x[0].1)));
    out.tables.push(t);
    Ok(out)
}
