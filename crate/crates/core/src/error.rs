use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("density matrix is in the {got} basis, expected {expected}")]
    BasisMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("fixed-point iteration for eta did not converge after {iterations} iterations (last eta {last})")]
    EtaNotConverged { iterations: usize, last: f64 },

    #[error("spectral density poles collide ({0}); degenerate poles are unsupported")]
    DegeneratePoles(String),

    #[error("correlation expansion did not reach {tolerance:e} within {cap} Matsubara terms (error {achieved:e})")]
    ExpansionNotConverged {
        tolerance: f64,
        cap: usize,
        achieved: f64,
    },

    #[error("invalid bath: {0}")]
    InvalidBath(String),

    #[error("hierarchy too large: C(n_cor + L, L) = {count} auxiliary operators exceeds the cap of {cap}")]
    HierarchyTooLarge { count: u128, cap: usize },

    #[error("hierarchy blow-up at t = {t_fs} fs (step {step}): ADO at level {level} has norm {norm:e}")]
    BlowUp {
        t_fs: f64,
        step: usize,
        level: usize,
        norm: f64,
    },

    #[error("integrator step-size failure at t = {t_fs} fs: {reason}")]
    StepSize { t_fs: f64, reason: String },

    #[error("invalid time grid: {0}")]
    TimeGrid(String),

    #[error("invalid coherence pair ({0}, {1}) for dimension {2}")]
    InvalidPair(usize, usize, usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidModel(_) | Error::InvalidBath(_) | Error::TimeGrid(_) => 1,
            Error::ExpansionNotConverged { .. } => 3,
            _ => 2,
        }
    }
}
