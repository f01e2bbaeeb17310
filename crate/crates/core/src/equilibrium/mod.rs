//! Equilibrium construction, solving and verification.

mod fixed_point;
mod linear;
mod policy;
mod scalar;
mod verify;

pub use crate::geometry::ActionSet;
pub use fixed_point::{
    best_response_step, solve_fixed_point, ConvergenceStatus, FixedPointOutcome, InitScheme, IterationRecord,
    SolverConfig, MIN_BIN_MASS,
};
pub use linear::{
    verify_linear_equilibrium, CoveragePredicate, CurvePredicate, DeviationPredicate, LinearEquilibriumReport,
};
pub use policy::{
    construct_reveal_plus_quantize, CoordinatePolicy, EncoderPolicy, LinearPolicy, Message, RevealGrid,
    DEFAULT_GRID_LEVELS,
};
pub use scalar::{scalar_equilibrium, solve_scalar_biased, ScalarQuantizer};
pub use verify::{
    expected_distortions, verify_equilibrium, BinCentroidCheck, CheckVerdicts, DistortionReport, Distortions,
    EquilibriumCertificate, GEO_SLACK_TOL, MIN_VERIFY_SAMPLES, STDERR_MULTIPLIER,
};
