use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("the two decoder actions coincide")]
    IdenticalActions,

    #[error("action set is empty")]
    EmptyActionSet,

    #[error("bias vector is zero")]
    ZeroBias,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    /// A bin lost (almost) all of its probability mass.
    #[error("bin {index} died (mass {mass:e})")]
    BinDeath { index: usize, mass: f64 },

    #[error("regression window at t = {t} captured only {count} samples")]
    InsufficientWindow { t: f64, count: usize },

    #[error("value {0} lies outside the support")]
    OutsideSupport(f64),

    #[error("no {requested}-bin equilibrium exists; largest feasible bin count is {max_feasible}")]
    Infeasible { requested: usize, max_feasible: usize },

    /// The encoder distortion target is below `b²`, which no equilibrium meets.
    #[error("encoder distortion {de} is unreachable with bias energy {bias_sq}")]
    UnreachableDistortion { de: f64, bias_sq: f64 },

    #[error("source is not i.i.d.; use the correlated-Gaussian condition instead")]
    NotIid,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("budget too small: {0}")]
    BudgetTooSmall(String),

    #[error("distortion must be positive, got {0}")]
    NonpositiveDistortion(f64),

    #[error("tabulated density: {0}")]
    Table(String),
}
