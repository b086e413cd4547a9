use crate::config::ConfigIssue;
use crate::planar::spectrum::Resonance;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported lattice type `{0}`")]
    UnsupportedLattice(String),

    #[error("{module}: invalid parameter: {message}")]
    InvalidParameter { module: &'static str, message: String },

    #[error("{module}: missing Fourier coefficient for reciprocal vector {key:?}")]
    MissingCoefficient { module: &'static str, key: [i32; 2] },

    #[error("{module}: eigensolver failed on a {dim}x{dim} matrix (max |entry| = {max_entry:.3e}): {message}")]
    Eigensolver {
        module: &'static str,
        dim: usize,
        max_entry: f64,
        message: String,
    },

    #[error("{module}: eigenvalue {value:.3e} is negative beyond round-off")]
    NegativeEigenvalue { module: &'static str, value: f64 },

    #[error("no cavity mode inside the gap ({low:.6} .. {high:.6} a/lambda)")]
    NoInGapMode { low: f64, high: f64 },

    #[error("cavity frequency {omega:.6} a/lambda lies outside the gap ({low:.6} .. {high:.6})")]
    OutsideGap { omega: f64, low: f64, high: f64 },

    #[error("bulk crystal has no band gap")]
    NoGap,

    #[error("inversion system has effective rank 0")]
    RankZero,

    #[error("{module}: field is identically zero")]
    ZeroField { module: &'static str },

    #[error("mesh too coarse: {cells:.2} cells per material wavelength (need at least 4)")]
    MeshTooCoarse { cells: f64 },

    #[error("transfer-matrix recombination became unstable: {0}")]
    Instability(String),

    #[error("no resonance feature found in spectrum")]
    NoFeature,

    #[error("{} resonance candidates found where exactly one was requested", candidates.len())]
    AmbiguousFeature { candidates: Vec<Resonance> },

    #[error("checkpoint is corrupt: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} is incompatible with version {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("configuration has {} error(s)", .0.len())]
    Config(Vec<ConfigIssue>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Module that raised the error, for user-facing reports.
    pub fn module(&self) -> &'static str {
        match self {
            Error::UnsupportedLattice(_) => "lattice",
            Error::InvalidParameter { module, .. }
            | Error::MissingCoefficient { module, .. }
            | Error::Eigensolver { module, .. }
            | Error::NegativeEigenvalue { module, .. }
            | Error::ZeroField { module } => module,
            Error::NoGap => "bulk_solver",
            Error::NoInGapMode { .. } => "defect_model",
            Error::OutsideGap { .. } | Error::RankZero => "analytic_inverter",
            Error::MeshTooCoarse { .. } | Error::Instability(_) => "planar_solver",
            Error::NoFeature | Error::AmbiguousFeature { .. } => "planar_solver",
            Error::CorruptCheckpoint(_) | Error::CheckpointVersion { .. } => "ga_optimizer",
            Error::Config(_) => "cli",
            Error::Io(_) | Error::Json(_) => "io",
        }
    }

    pub fn hint(&self) -> &'static str {
        match self {
            Error::UnsupportedLattice(_) => "only `hexagonal` lattices are available",
            Error::InvalidParameter { .. } => "check the value ranges documented in the README",
            Error::MissingCoefficient { .. } => {
                "build the dielectric with the same reciprocal basis used by the solver"
            }
            Error::Eigensolver { .. } | Error::NegativeEigenvalue { .. } => {
                "reduce n_g or check the dielectric for non-physical values"
            }
            Error::NoInGapMode { .. } => "strengthen the defect or widen the band gap",
            Error::OutsideGap { .. } | Error::NoGap => {
                "choose omega_m between the reported gap edges (or use \"midgap\")"
            }
            Error::RankZero => "lower svd_tau or check the cavity coefficients",
            Error::ZeroField { .. } => "the cavity coefficients produce no field on the grid",
            Error::MeshTooCoarse { .. } => "increase slab.mesh",
            Error::Instability(_) => "increase slab.mesh or shorten the structure",
            Error::NoFeature | Error::AmbiguousFeature { .. } => {
                "narrow the scan window around the resonance or add scan points"
            }
            Error::CorruptCheckpoint(_) | Error::CheckpointVersion { .. } => {
                "delete the checkpoint to start a fresh run"
            }
            Error::Config(_) => "fix the listed keys and rerun",
            Error::Io(_) | Error::Json(_) => "check the output directory permissions",
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnsupportedLattice(_) | Error::InvalidParameter { .. } => 2,
            Error::NoInGapMode { .. } => 4,
            Error::Io(_) | Error::Json(_) => 5,
            _ => 3,
        }
    }

    pub(crate) fn invalid(module: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            module,
            message: message.into(),
        }
    }
}
