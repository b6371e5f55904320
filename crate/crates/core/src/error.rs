use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("velocity |beta| = {0} is not below the speed of light")]
    Superluminal(f64),
    #[error("Littlewood-Paley block {block} exceeds the resolved range (max {max})")]
    UnresolvedBlock { block: usize, max: usize },
    #[error("empty list of weight centres")]
    NoCentres,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("tail of the profile is below the noise floor ({0} usable samples)")]
    TailBelowNoise(usize),
    #[error("tail is not exponential (relative fit residual {0:.3e})")]
    NotExponential(f64),
    #[error("mode does not fit in the box: edge amplitude {0:.3e}")]
    BoxTooSmall(f64),
    #[error("Gram matrix is singular (condition {cond:.3e}); worst overlap between modes {a} and {b}")]
    SingularGram { cond: f64, a: String, b: String },
    #[error("spectral parameter {lambda} lies on the continuous spectrum |lambda| >= {edge}")]
    OnContinuousSpectrum { lambda: f64, edge: f64 },
    #[error("spectral parameter {lambda} lies within {distance:.3e} of the eigenvalue {eigenvalue}")]
    NearEigenvalue { lambda: String, eigenvalue: f64, distance: f64 },
    #[error("grids are not related by the boost factor: {0}")]
    IncommensurateGrids(String),
    #[error("dense solve limited to N <= {max}, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("time step {dt} violates the CFL bound {bound}")]
    Cfl { dt: f64, bound: f64 },
    #[error("trajectory check failed: {0}")]
    Trajectory(String),
    #[error("Neumann series is not contracting: {0}")]
    NonContraction(String),
    #[error("truncation lag {lag} is not shorter than the horizon {horizon}")]
    LagTooLong { lag: f64, horizon: f64 },
    #[error("cutoff cones of channels {a} and {b} overlap at t = {t}")]
    ChannelOverlap { a: usize, b: usize, t: f64 },
    #[error("potential has a gap eigenvalue {0} in (0, 1)")]
    GapEigenvalue(f64),
    #[error("scenario needs potentials without zero modes")]
    ZeroModesPresent,
    #[error("stream lengths differ: {0} vs {1}")]
    StreamLength(usize, usize),
}

impl Error {
    /// Stable machine-readable code used in CLI error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "GRID_INVALID",
            Error::GridMismatch => "GRID_MISMATCH",
            Error::Superluminal(_) => "TRAJECTORY_SUPERLUMINAL",
            Error::UnresolvedBlock { .. } => "LP_BLOCK_UNRESOLVED",
            Error::NoCentres => "NO_CENTRES",
            Error::InvalidParameter(_) => "PARAMETER_INVALID",
            Error::NonFinite(_) => "NON_FINITE",
            Error::Eigensolver(_) => "EIGENSOLVER_FAILED",
            Error::TailBelowNoise(_) => "TAIL_BELOW_NOISE",
            Error::NotExponential(_) => "TAIL_NOT_EXPONENTIAL",
            Error::BoxTooSmall(_) => "BOX_TOO_SMALL",
            Error::SingularGram { .. } => "GRAM_SINGULAR",
            Error::OnContinuousSpectrum { .. } => "ON_CONTINUOUS_SPECTRUM",
            Error::NearEigenvalue { .. } => "NEAR_EIGENVALUE",
            Error::IncommensurateGrids(_) => "GRIDS_INCOMMENSURATE",
            Error::TooLarge { .. } => "PROBLEM_TOO_LARGE",
            Error::Cfl { .. } => "CFL_VIOLATION",
            Error::Trajectory(_) => "TRAJECTORY_INVALID",
            Error::NonContraction(_) => "NEUMANN_NOT_CONTRACTING",
            Error::LagTooLong { .. } => "LAG_TOO_LONG",
            Error::ChannelOverlap { .. } => "CHANNEL_OVERLAP",
            Error::GapEigenvalue(_) => "GAP_EIGENVALUE",
            Error::ZeroModesPresent => "ZERO_MODES_PRESENT",
            Error::StreamLength(..) => "STREAM_LENGTH",
        }
    }
}
