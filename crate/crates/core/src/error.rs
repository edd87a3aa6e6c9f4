use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate coordinate box (volume {volume})")]
    DegenerateBox { volume: f64 },

    #[error("factorization round trip failed with residual {residual:e}")]
    Reconstruction { residual: f64 },

    #[error("point is not on the boundary: defining function {rho:e} exceeds tolerance {tol:e}")]
    NotOnBoundary { rho: f64, tol: f64 },

    #[error("Re f = {re_f:e} is not negative; the point left the branch domain of log f")]
    BranchDomain { re_f: f64 },

    #[error("divergent parameters: {0}")]
    Divergent(String),

    #[error("no samples fell in the requested region ({0})")]
    EmptySample(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
