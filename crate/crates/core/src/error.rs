use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variant names mirror the failure vocabulary used in reports, so a CLI
/// diagnostic can name the violated invariant directly.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("symplectic matrix is not invertible")]
    NonInvertible,
    #[error("symplectic matrix is not skew-symmetric (entry ({0}, {1}))")]
    NotSkew(usize, usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("point is outside the regular region: {0}")]
    PoleHit(String),
    #[error("the zero-section point is not regular: {0}")]
    PoleAtZeroSection(String),
    #[error("non-finite value encountered: {0}")]
    Overflow(String),
    #[error("jet order {0} exceeds the supported maximum of 4")]
    OrderTooHigh(usize),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("horizontal and vertical distributions intersect")]
    DegenerateFrame,
    #[error("Lagrangian checks require the default block frame")]
    FrameMismatch,
    #[error("integration step failed: {0}")]
    StepFailure(String),
    #[error("path comes within {radius:e} of epsilon = 0")]
    NearZeroEpsilon { radius: f64 },
    #[error("eigenvalues of U are not pairwise distinct")]
    DegenerateEigenvalues,
    #[error("V must have zero diagonal in the eigenbasis of U (entry {0} = {1:e})")]
    ResonantDiagonal(usize, f64),
    #[error("angle {0} lies on a Stokes ray")]
    StokesAngle(f64),
    #[error("charge {0:?} is not in the positive cone")]
    ConeViolation(Vec<i64>),
    #[error("charges {0:?} and {1:?} do not lie on one ray")]
    MixedRays(Vec<i64>, Vec<i64>),
    #[error("truncation order must be at least 1")]
    TruncationTooSmall,
    #[error("automorphisms have incompatible truncation data")]
    IncompatibleTruncation,
    #[error("polynomial has a repeated root near {0}")]
    RepeatedRoot(String),
    #[error("contour passes within {distance:e} of a branch point")]
    TooClose { distance: f64 },
    #[error("quadrature tolerance {0:e} could not be reached")]
    ToleranceUnreachable(f64),
    #[error("cycles cross non-transversally: {0}")]
    NonTransverse(String),
    #[error("deformation merges branch points")]
    RootCollision,
    #[error("cycle does not close on the double cover (odd branch winding)")]
    OddCycle,
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
