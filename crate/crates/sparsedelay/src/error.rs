//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A topology tuple violates its invariants; the message names the
    /// offending index or size.
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    /// A weight matrix failed its definiteness requirement.
    #[error("{what} must be {requirement}; offending eigenvalue {eigenvalue:.3e}")]
    NotDefinite {
        what: &'static str,
        requirement: &'static str,
        eigenvalue: f64,
    },

    /// The Lyapunov operator is singular (eigenvalue pair summing to zero).
    #[error("resonant spectrum: Lyapunov operator is singular")]
    ResonantSpectrum,

    /// Residual of a linear-algebra solve exceeded its accuracy contract.
    #[error("solver residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },

    /// A closed loop expected to be Hurwitz is not.
    #[error("closed loop is not stable: spectral abscissa {abscissa:.6e}")]
    Unstable { abscissa: f64 },

    /// Eigenvalue iteration failed to converge.
    #[error("eigensolver did not converge")]
    EigenFailure,

    /// A delay fell at or below its propagation floor, or a bandwidth was
    /// not positive.
    #[error("infeasible delay or bandwidth: {0}")]
    InfeasibleDelay(String),

    /// A conic subproblem reported primal or dual infeasibility.
    #[error("conic program infeasible: {0}")]
    Infeasible(String),

    /// The conic solver stopped without a usable solution.
    #[error("conic solver failure: {0}")]
    SolverFailure(String),

    /// A returned design failed independent re-verification even after all
    /// trust-region shrinks.
    #[error("verification failed after {attempts} attempts: {reason}")]
    Verification { attempts: usize, reason: String },

    /// Invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Unknown bundled fixture name.
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
}
