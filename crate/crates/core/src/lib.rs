//! Quantile (distortion) risk measures over an algebra of one-dimensional distributions.
//!
//! A risk measure is given by a distortion function `D` on `[0, 1]` and evaluated as the
//! integral of the lower quantile function against the measure induced by `D`. The crate
//! computes it through the quantile, Choquet and expected-shortfall-mixture
//! representations, tests convexity of `D`, builds subadditivity counterexamples for
//! non-convex distortions and classifies distributions into the three domain classes.

pub mod distortions;
pub mod distributions;
pub mod error;
pub mod io;
pub mod numeric;
pub mod properties;
pub mod quadrature;
pub mod riskmeasures;
pub mod suite;

pub use distortions::{Distortion, Family, MidpointWitness, Piece, SpectralDensity};
pub use distributions::{Atoms, Distribution, Level, QuantilePair, Transform};
pub use error::{Error, Result};
pub use riskmeasures::{DomainClass, Evaluator, ExtendedRisk, MembershipVerdict, Tolerances, Verdict};
