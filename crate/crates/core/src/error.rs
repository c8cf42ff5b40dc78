//! Error type shared by every module of the solver.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("drift matrix is not Hurwitz-stable: spectral abscissa {abscissa:e} <= 1e-10")]
    NotHurwitz { abscissa: f64 },

    #[error("diffusion matrix is singular (reciprocal condition number {rcond:e})")]
    SingularDiffusion { rcond: f64 },

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("covariance factorization failed at t = {t}: matrix is numerically indefinite")]
    FactorizationFailure { t: f64 },

    #[error("invalid time-randomization rate theta = {theta} for spectral abscissa a = {a}")]
    InvalidTheta { theta: f64, a: f64 },

    #[error("adaptive quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("quadrature for lambda is limited to d <= 2, got d = {0}")]
    QuadratureDimTooLarge(usize),

    #[error("oracle supports d = 1 only, got d = {0}")]
    DimTooLarge(usize),

    #[error("oracle refinements disagree by {diff:e} > tolerance {tol:e}")]
    NonConvergence { diff: f64, tol: f64 },

    #[error("interior margin r = {r} must be smaller than the grid half-width {n_tilde}")]
    MarginTooLarge { r: usize, n_tilde: usize },

    #[error("exponential weight requires C_A = 1, got C_A = {c_a}")]
    BranchMismatch { c_a: f64 },

    #[error("iteration {iteration} produced non-finite values")]
    NonFinite { iteration: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// `true` for invalid user input, as opposed to a numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::NotHurwitz { .. }
                | Error::SingularDiffusion { .. }
                | Error::InvalidTheta { .. }
                | Error::QuadratureDimTooLarge(_)
                | Error::DimTooLarge(_)
                | Error::MarginTooLarge { .. }
                | Error::BranchMismatch { .. }
                | Error::Config(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
