//! Scenario configuration files (TOML) and their validation.

use std::path::Path;

use kglab_core::dichotomy::{check_channels, project_instantaneous, ChannelParams, Removal};
use kglab_core::evolution::{MovingPotential, Scenario};
use kglab_core::potentials::PotentialSpec;
use kglab_core::scattering::wavepacket;
use kglab_core::spectrum::{solve_scalar_spectrum, ScalarSpectrum, DEFAULT_ZERO_BAND};
use kglab_core::state::StatePair;
use kglab_core::trajectory::Trajectory;
use kglab_core::{Error, Grid};
use serde::{Deserialize, Serialize};

/// Failure before any compute: unreadable file, bad syntax or a rejected value.
#[derive(Debug)]
pub struct ConfigError {
    pub code: &'static str,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<Error> for ConfigError {
    fn from(e: Error) -> Self {
        ConfigError { code: e.code(), message: e.to_string() }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError { code: "PARAMETER_INVALID", message: msg.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Spectrum,
    Modes,
    ResolventSweep,
    Evolve,
    OperatorIdentity,
    Scattering,
    WaveOperator,
    InteractionSweep,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Modes => "modes",
            Experiment::ResolventSweep => "resolvent_sweep",
            Experiment::Evolve => "evolve",
            Experiment::OperatorIdentity => "operator_identity",
            Experiment::Scattering => "scattering",
            Experiment::WaveOperator => "wave_operator",
            Experiment::InteractionSweep => "interaction_sweep",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Spatial dimension; only 1 is implemented for evolution.
    pub d: usize,
    pub n: usize,
    pub lx: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialConfig {
    #[serde(flatten)]
    pub spec: PotentialSpec,
    pub trajectory: Trajectory,
}

fn default_sigma() -> f64 {
    15.0
}
fn default_nu() -> f64 {
    0.1
}
fn default_eps() -> f64 {
    0.1
}
fn default_start() -> f64 {
    10.0
}
fn default_offset() -> f64 {
    5.0
}
fn default_lag() -> f64 {
    10.0
}
fn default_zero_band() -> f64 {
    DEFAULT_ZERO_BAND
}
fn default_stride() -> usize {
    10
}
fn default_reproject() -> usize {
    5
}
fn default_delta() -> f64 {
    0.02
}
fn default_removal() -> Removal {
    Removal::CentreStable
}

/// Run block. Fields with defaults are listed in [`RunConfig::DEFAULTS`] and
/// echoed into the manifest when they were not given.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// Channel start time `B`.
    #[serde(default = "default_start")]
    pub channel_start: f64,
    /// Offset `L` in the cone radius `L + εt`.
    #[serde(default = "default_offset")]
    pub channel_offset: f64,
    /// Cone opening `ε`.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Truncation lag `M`.
    #[serde(default = "default_lag")]
    pub lag: f64,
    /// Damping `κ`; `2 max ν/γ` when absent.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_zero_band")]
    pub zero_band: f64,
    /// Snapshot period in steps; 0 writes none.
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default = "default_stride")]
    pub diagnostic_stride: usize,
    #[serde(default = "default_reproject")]
    pub reproject_every: usize,
    #[serde(default = "default_removal")]
    pub removal: Removal,
    /// Trajectory budget `δ`.
    #[serde(default = "default_delta")]
    pub delta_max: f64,
    /// Grid for the scalar eigenproblem; the run grid when absent.
    #[serde(default)]
    pub spectrum_grid: Option<GridConfig>,
}

impl RunConfig {
    pub const DEFAULTS: [(&'static str, &'static str); 14] = [
        ("channel_start", "10"),
        ("channel_offset", "5"),
        ("eps", "0.1"),
        ("lag", "10"),
        ("kappa", "2 max_k nu_k/gamma"),
        ("sigma", "15"),
        ("nu", "0.1"),
        ("zero_band", "1e-6"),
        ("snapshot_stride", "0"),
        ("diagnostic_stride", "10"),
        ("reproject_every", "5"),
        ("removal", "centre_stable"),
        ("delta_max", "0.02"),
        ("spectrum_grid", "run grid"),
    ];
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub centre: f64,
    pub width: f64,
    pub k: f64,
    #[serde(default)]
    pub phase: f64,
    pub amp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    None,
    Continuous,
    CentreStable,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub packets: Vec<Packet>,
    pub projection: Projection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventConfig {
    pub lambdas: Vec<f64>,
    pub eps_ladder: Vec<f64>,
    pub tau: f64,
    pub threshold_band: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityConfig {
    pub streams: usize,
    pub dts: Vec<f64>,
    pub stream_horizon: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringConfig {
    pub profile_factor: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveOperatorConfig {
    pub t_list: Vec<f64>,
    pub check_samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    pub lags: Vec<f64>,
    pub source_centre: f64,
    pub source_velocity: f64,
    /// Temporal frequency of the source.
    pub carrier: f64,
    pub weight_centre: f64,
    pub weight_velocity: f64,
    /// Weight exponent; independent of the run `σ`.
    pub sigma: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Output directory, relative to the output root.
    #[serde(default)]
    pub out: Option<String>,
    pub grid: GridConfig,
    #[serde(default)]
    pub potentials: Vec<PotentialConfig>,
    pub run: RunConfig,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub resolvent: Option<ResolventConfig>,
    #[serde(default)]
    pub identity: Option<IdentityConfig>,
    #[serde(default)]
    pub scattering: Option<ScatteringConfig>,
    #[serde(default)]
    pub wave_operator: Option<WaveOperatorConfig>,
    #[serde(default)]
    pub interaction: Option<InteractionConfig>,
}

/// Validated configuration with the objects the experiments need.
pub struct Prepared {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    pub spectrum_grid: Grid,
    pub warnings: Vec<String>,
    /// Run-block fields that fell back to their defaults.
    pub defaults_applied: Vec<(String, String)>,
}

impl Prepared {
    pub fn grid(&self) -> &Grid {
        &self.scenario.grid
    }

    pub fn spectra(&self) -> Result<Vec<ScalarSpectrum>, Error> {
        self.config
            .potentials
            .iter()
            .map(|p| solve_scalar_spectrum(&p.spec, &self.spectrum_grid, self.config.run.zero_band))
            .collect()
    }

    /// Initial data from the packet list, projected as requested.
    pub fn data(&self, spectra: &[ScalarSpectrum]) -> Result<StatePair, Error> {
        let d = self.config.data.as_ref().ok_or_else(|| Error::InvalidParameter("missing [data] block".into()))?;
        let g = self.grid();
        let mut u = StatePair::zeros(g.n());
        for p in &d.packets {
            u = u.add(&wavepacket(g, p.centre, p.width, p.k, p.phase, p.amp));
        }
        match d.projection {
            Projection::None => Ok(u),
            Projection::Continuous => project_instantaneous(&self.scenario, spectra, 0.0, &u, Removal::Continuous),
            Projection::CentreStable => project_instantaneous(&self.scenario, spectra, 0.0, &u, Removal::CentreStable),
        }
    }
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError { code: "CONFIG_UNREADABLE", message: format!("{}: {e}", path.display()) })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError { code: "CONFIG_SYNTAX", message: e.to_string() })
}

fn run_keys(text: Option<&str>) -> Vec<String> {
    let Some(text) = text else { return vec![] };
    let Ok(v) = text.parse::<toml::Table>() else { return vec![] };
    v.get("run").and_then(|r| r.as_table()).map(|t| t.keys().cloned().collect()).unwrap_or_default()
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be positive")))
    }
}

/// Checks every field and builds the scenario. `source` is the raw file text,
/// used only to tell which run defaults were applied.
pub fn prepare(config: ScenarioConfig, source: Option<&str>) -> Result<Prepared, ConfigError> {
    let r = &config.run;
    let mut warnings = Vec::new();
    if config.grid.d != 1 {
        return Err(invalid(format!("d = {} is not supported; evolution is one-dimensional", config.grid.d)));
    }
    let grid = Grid::new(config.grid.n, config.grid.lx)?;
    let spectrum_grid = match &r.spectrum_grid {
        Some(s) if s.d != 1 => return Err(invalid("spectrum_grid must have d = 1")),
        Some(s) => Grid::new(s.n, s.lx)?,
        None => grid.clone(),
    };
    positive("dt", r.dt)?;
    positive("horizon", r.horizon)?;
    positive("eps", r.eps)?;
    positive("lag", r.lag)?;
    positive("zero_band", r.zero_band)?;
    positive("delta_max", r.delta_max)?;
    if let Some(k) = r.kappa {
        positive("kappa", k)?;
    }
    if !(r.sigma.is_finite() && r.nu.is_finite() && r.nu >= 0.0 && r.sigma >= 0.0) {
        return Err(invalid(format!("sigma = {}, nu = {} must be finite and non-negative", r.sigma, r.nu)));
    }
    if r.sigma <= 14.0 {
        warnings.push(format!("sigma = {} does not exceed 14; decay weights are weaker than the theory assumes", r.sigma));
    }
    if !(r.channel_start >= 0.0 && r.channel_offset >= 0.0) {
        return Err(invalid("channel_start and channel_offset must be non-negative"));
    }
    let potentials: Vec<MovingPotential> =
        config.potentials.iter().map(|p| MovingPotential { potential: p.spec.clone(), trajectory: p.trajectory.clone() }).collect();
    let scenario = Scenario::new(grid, potentials, r.dt)?;
    scenario.validate(r.horizon, r.delta_max)?;
    if scenario.potentials.len() > 1 {
        let p = ChannelParams { eps: r.eps, start: r.channel_start, offset: r.channel_offset };
        check_channels(&scenario, &p, r.horizon)?;
    }
    let need_potential = matches!(
        config.experiment,
        Experiment::Spectrum | Experiment::Modes | Experiment::ResolventSweep | Experiment::OperatorIdentity
    );
    if need_potential && config.potentials.is_empty() {
        return Err(invalid(format!("experiment {} needs at least one potential", config.experiment.name())));
    }
    let section = |present: bool, name: &str| {
        if present {
            Ok(())
        } else {
            Err(invalid(format!("experiment {} needs a [{name}] block", config.experiment.name())))
        }
    };
    match config.experiment {
        Experiment::Evolve | Experiment::Scattering | Experiment::WaveOperator => {
            let d = config.data.as_ref();
            section(d.is_some(), "data")?;
            if d.is_some_and(|d| d.packets.is_empty()) {
                return Err(invalid("[data] needs at least one packet"));
            }
            for p in d.map(|d| d.packets.as_slice()).unwrap_or_default() {
                positive("packet width", p.width)?;
                if !(p.centre.is_finite() && p.k.is_finite() && p.phase.is_finite() && p.amp.is_finite()) {
                    return Err(Error::NonFinite("packet parameters").into());
                }
            }
        }
        _ => {}
    }
    match config.experiment {
        Experiment::ResolventSweep => {
            let s = config.resolvent.as_ref();
            section(s.is_some(), "resolvent")?;
            let s = s.unwrap();
            if s.lambdas.is_empty() || s.eps_ladder.len() < 2 {
                return Err(invalid("[resolvent] needs lambdas and at least two eps rungs"));
            }
        }
        Experiment::OperatorIdentity => {
            let s = config.identity.as_ref();
            section(s.is_some(), "identity")?;
            let s = s.unwrap();
            if s.streams == 0 || s.dts.is_empty() {
                return Err(invalid("[identity] needs streams >= 1 and a dt list"));
            }
            for dt in &s.dts {
                positive("identity dt", *dt)?;
            }
            positive("stream_horizon", s.stream_horizon)?;
        }
        Experiment::Scattering => {
            let s = config.scattering.as_ref();
            section(s.is_some(), "scattering")?;
            if s.unwrap().profile_factor < 1.0 {
                return Err(invalid("profile_factor must be at least 1"));
            }
        }
        Experiment::WaveOperator => {
            let s = config.wave_operator.as_ref();
            section(s.is_some(), "wave_operator")?;
            let s = s.unwrap();
            if s.t_list.is_empty() || s.t_list.windows(2).any(|w| w[1] <= w[0]) || s.t_list[0] <= 0.0 {
                return Err(invalid("t_list must be positive and increasing"));
            }
            // backward runs reach t_last; the forward check as well
            scenario.validate(*s.t_list.last().unwrap(), r.delta_max)?;
        }
        Experiment::InteractionSweep => {
            let s = config.interaction.as_ref();
            section(s.is_some(), "interaction")?;
            let s = s.unwrap();
            if s.lags.is_empty() {
                return Err(invalid("[interaction] needs at least one lag"));
            }
            for v in [s.source_velocity, s.weight_velocity] {
                if v.abs() >= 1.0 {
                    return Err(Error::Superluminal(v.abs()).into());
                }
            }
        }
        _ => {}
    }
    let given = run_keys(source);
    let defaults_applied = RunConfig::DEFAULTS
        .iter()
        .filter(|(k, _)| source.is_some() && !given.iter().any(|g| g == k))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(Prepared { config, scenario, spectrum_grid, warnings, defaults_applied })
}
