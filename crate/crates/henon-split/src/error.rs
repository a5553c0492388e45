use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("singular jacobian: {0}")]
    SingularJacobian(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("too close to a pole: {0}")]
    PoleProximity(String),
    #[error("ill conditioned: {0}")]
    IllConditioned(String),
    #[error("resonance at order {0}")]
    ResonanceError(usize),
    #[error("truncation too small: {0}")]
    TruncationTooSmall(String),
    #[error("no intersection: {0}")]
    NoIntersection(String),
    #[error("newton failure: {0}")]
    NewtonFailure(String),
    #[error("degenerate tangent")]
    DegenerateTangent,
    #[error("seed insufficient: {0}")]
    SeedInsufficient(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("depth insufficient: {0}")]
    DepthInsufficient(String),
    #[error("tau on branch cut")]
    BranchError,
    #[error("degenerate wronskian")]
    DegenerateWronskian,
    #[error("tail divergence: {0}")]
    TailDivergence(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(usize),
    #[error("degenerate design matrix")]
    DegenerateDesignMatrix,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    /// Short machine-readable tag.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::NonConvergence(_) => "NonConvergence",
            Error::SingularJacobian(_) => "SingularJacobian",
            Error::DomainError(_) => "DomainError",
            Error::PoleProximity(_) => "PoleProximity",
            Error::IllConditioned(_) => "IllConditioned",
            Error::ResonanceError(_) => "ResonanceError",
            Error::TruncationTooSmall(_) => "TruncationTooSmall",
            Error::NoIntersection(_) => "NoIntersection",
            Error::NewtonFailure(_) => "NewtonFailure",
            Error::DegenerateTangent => "DegenerateTangent",
            Error::SeedInsufficient(_) => "SeedInsufficient",
            Error::Overflow(_) => "Overflow",
            Error::DepthInsufficient(_) => "DepthInsufficient",
            Error::BranchError => "BranchError",
            Error::DegenerateWronskian => "DegenerateWronskian",
            Error::TailDivergence(_) => "TailDivergence",
            Error::InsufficientSamples(_) => "InsufficientSamples",
            Error::DegenerateDesignMatrix => "DegenerateDesignMatrix",
            Error::GridMismatch(_) => "GridMismatch",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
