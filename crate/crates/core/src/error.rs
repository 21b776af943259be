use thiserror::Error;

use crate::distortions::MidpointWitness;

/// Errors raised by the risk-measure library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the range where the object is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation exists mathematically but is not covered by the quantile calculus
    /// implemented here (for example scaling by a negative factor).
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid distortion: {0}")]
    InvalidDistortion(String),

    #[error("invalid spectral density: {0}")]
    InvalidSpectral(String),

    /// The distortion is not convex, so no increasing spectral density represents it.
    #[error("distortion is not convex: 2D({u}) > D({lo}) + D({hi}) with eps = {eps}", u = .0.u, lo = .0.u - .0.eps, hi = .0.u + .0.eps, eps = .0.eps)]
    NotSpectral(MidpointWitness),

    /// A convex distortion gives a subadditive risk measure, so there is nothing to construct.
    #[error("distortion is convex, the risk measure is subadditive and admits no counterexample")]
    NoCounterexample,

    /// The distortion is non-convex but no midpoint violation could be located numerically.
    #[error("distortion is not convex but no midpoint witness was found")]
    WitnessNotFound,

    /// Numerical integration did not reach the requested tolerance.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// `true` for errors that describe a violated mathematical precondition
    /// rather than bad input files.
    pub fn is_domain_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Unsupported(_)
                | Error::NotSpectral(_)
                | Error::NoCounterexample
                | Error::WitnessNotFound
                | Error::Inconclusive(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
