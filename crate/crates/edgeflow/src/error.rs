//! Library error type.

/// Errors surfaced by the edgeflow library.
///
/// Payload values are carried as `f64` regardless of the scalar the caller
/// instantiated; they are for reporting only.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed argument: dimension mismatch, empty spectrum, bad range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Evaluation outside an operation's mathematical domain
    /// (e.g. nonpositive time, radial coordinate outside (0, 1]).
    #[error("domain error: {0}")]
    Domain(String),

    /// Geometry variant that the requested operation does not support.
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    /// The available spectral truncation cannot certify the requested tail
    /// tolerance. `required_levels` is the estimated number of distinct
    /// eigenvalue levels that would be needed.
    #[error("spectral truncation insufficient: {available_levels} levels give tail bound {tail_bound:.3e} > {tail_tol:.3e} (about {required_levels} levels needed)")]
    Truncation {
        available_levels: usize,
        required_levels: usize,
        tail_bound: f64,
        tail_tol: f64,
    },

    /// An iterative procedure exhausted its budget without meeting its
    /// tolerance; the message carries the diagnostic trail.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A configuration failed the feasibility audit where a feasible one is
    /// required.
    #[error("infeasible edge configuration: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
