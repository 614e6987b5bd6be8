//! Error type shared across the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Crate-wide error enumeration.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An instant was claimed to lie in a time scale but does not.
    #[error("instant {t} is not a member of the time scale (membership tolerance {tol:e})")]
    NotMember { t: f64, tol: f64 },

    /// A generator and window combination produced no points at all.
    #[error("time scale window contains no points")]
    EmptyWindow,

    /// Delta derivative requested at a window maximum with no dense left
    /// neighborhood to fall back on.
    #[error("delta derivative undefined at isolated window maximum t = {t}")]
    DerivativeAtMax { t: f64 },

    /// Integration bounds were not ordered.
    #[error("integration bounds reversed: a = {a} exceeds b = {b}")]
    ReversedBounds { a: f64, b: f64 },

    /// Step extension evaluated outside the window hull.
    #[error("instant {t} lies outside the window hull [{lo}, {hi}]")]
    OutsideHull { t: f64, lo: f64, hi: f64 },

    /// A matrix that must be symmetric was not.
    #[error("matrix is not symmetric: largest asymmetry {defect:e}")]
    NotSymmetric { defect: f64 },

    /// The graininess-parametric Lyapunov map is singular, so no solution
    /// exists for this coefficient matrix and graininess.
    #[error(
        "Lyapunov map singular at graininess {mu}: eigenvalue pair \
         ({lambda_i}, {lambda_j}) satisfies lambda_i + lambda_j + mu*lambda_i*lambda_j = {residual:e}"
    )]
    SingularLyapunov {
        mu: f64,
        lambda_i: Complex64,
        lambda_j: Complex64,
        residual: f64,
    },

    /// The matching condition relating the pursuer input map to the evader
    /// input map failed.
    #[error("matching condition C = B D violated: residual {residual:e} exceeds tolerance {tol:e}")]
    MatchingViolation { residual: f64, tol: f64 },

    /// I + mu*A is singular at a scattered point, so the transition matrix
    /// cannot advance past it.
    #[error("I + mu*A singular at t = {t} (graininess {mu}): system not regressive there")]
    NotRegressive { t: f64, mu: f64 },

    /// An operation on a finite point set received no points.
    #[error("point set is empty")]
    EmptySet,

    /// A verification grid ended up with no usable sample points.
    #[error("verification grid is empty: {0}")]
    EmptyGrid(String),

    /// Operand shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration value is missing, malformed, or out of range.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
