use serde::{Deserialize, Serialize};

use super::verify::STDERR_MULTIPLIER;
use crate::error::{Error, Result};
use crate::sources::{
    conditional_mean_curve, conditional_support, x1_range, Budget, CurveMethod, EstimateWithError, SourceModel,
};

/// Quantile levels of `X1` at which the conditional-mean curve is tested.
const CURVE_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
/// Source draws used by the no-deviation search.
const DEVIATION_SAMPLES: usize = 20_000;
/// Report grid for the no-deviation search.
const DEVIATION_GRID: usize = 801;
const COVERAGE_TOL: f64 = 1e-9;

/// `E[X2 | X1 = t] − E[X2]` must vanish along the revealed coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePredicate {
    pub grid: Vec<f64>,
    pub values: Vec<EstimateWithError<f64>>,
    /// Largest `|value| / stderr` over the grid.
    pub max_abs_z: f64,
    pub passed: bool,
}

/// The revealed actions must span the conditional support of `X1` on the
/// line `X2 = E[X2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePredicate {
    pub kappa: f64,
    pub support: (f64, f64),
    pub revealed: (f64, f64),
    pub covered_fraction: f64,
    pub passed: bool,
}

/// No sampled source value prefers to report another `X1` than its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationPredicate {
    pub samples: usize,
    pub grid_points: usize,
    pub grid_spacing: f64,
    pub deviating_fraction: f64,
    /// Largest `|z* − x1|` over the samples.
    pub max_shift: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEquilibriumReport {
    pub curve: CurvePredicate,
    pub coverage: CoveragePredicate,
    pub no_deviation: DeviationPredicate,
    pub passed: bool,
}

fn pair_coordinates(m: &[f64], b: &[f64]) -> (f64, f64) {
    (b[0] * m[1] - b[1] * m[0], b[0] * m[0] + b[1] * m[1])
}

fn curve_predicate(source: &SourceModel, b: &[f64], budget: &Budget) -> Result<CurvePredicate> {
    let samples = source.sample(budget.samples, budget.seed)?;
    let mut x1: Vec<f64> = samples.iter().map(|m| pair_coordinates(m, b).0).collect();
    x1.sort_by(f64::total_cmp);
    let grid: Vec<f64> =
        CURVE_LEVELS.iter().map(|p| x1[((p * x1.len() as f64) as usize).min(x1.len() - 1)]).collect();
    let values = conditional_mean_curve(source, b, &grid, budget, CurveMethod::Regression)?;
    let max_abs_z = values.iter().map(|v| v.z_score(0.0)).fold(0.0, f64::max);
    Ok(CurvePredicate { grid, values, max_abs_z, passed: max_abs_z <= STDERR_MULTIPLIER })
}

fn coverage_predicate(source: &SourceModel, b: &[f64]) -> Result<CoveragePredicate> {
    let mean = source.mean();
    let kappa = b[0] * mean[0] + b[1] * mean[1];
    let support = conditional_support(source, b, kappa)?;
    // Revealing X1 exactly reaches every value the truncated support allows.
    let revealed = x1_range(source, b)?;
    let covered = (support.1.min(revealed.1) - support.0.max(revealed.0)).max(0.0);
    let length = support.1 - support.0;
    let covered_fraction = if length > 0.0 { covered / length } else { 1.0 };
    Ok(CoveragePredicate { kappa, support, revealed, covered_fraction, passed: covered_fraction >= 1.0 - COVERAGE_TOL })
}

fn deviation_predicate(source: &SourceModel, b: &[f64], budget: &Budget) -> Result<DeviationPredicate> {
    let (lo, hi) = x1_range(source, b)?;
    let spacing = (hi - lo) / DEVIATION_GRID as f64;
    let grid: Vec<f64> = (0..DEVIATION_GRID).map(|i| lo + (i as f64 + 0.5) * spacing).collect();
    let curve = conditional_mean_curve(source, b, &grid, budget, CurveMethod::Quadrature)?;
    let mean = source.mean();
    let x2_mean = b[0] * mean[0] + b[1] * mean[1];
    let y2: Vec<f64> = curve.iter().map(|c| x2_mean + c.value).collect();
    let b_tilde = b[0] * b[0] + b[1] * b[1];
    let count = DEVIATION_SAMPLES.min(budget.samples);
    let samples = source.sample(count, budget.seed)?;
    let nearest = |x: f64| (((x - lo) / spacing).floor().max(0.0) as usize).min(DEVIATION_GRID - 1);
    let (mut deviating, mut max_shift) = (0usize, 0.0f64);
    for m in samples.iter() {
        let (x1, x2) = pair_coordinates(m, b);
        let honest = nearest(x1);
        let cost = |j: usize| (x1 - grid[j]).powi(2) + (x2 - y2[j] - b_tilde).powi(2);
        let mut best = honest;
        for j in 0..DEVIATION_GRID {
            if cost(j) < cost(best) {
                best = j;
            }
        }
        if best != honest {
            deviating += 1;
            max_shift = max_shift.max((grid[best] - x1).abs());
        }
    }
    let deviating_fraction = deviating as f64 / count as f64;
    Ok(DeviationPredicate {
        samples: count,
        grid_points: DEVIATION_GRID,
        grid_spacing: spacing,
        deviating_fraction,
        max_shift,
        passed: deviating == 0,
    })
}

/// Tests whether revealing `X1 = b1·M2 − b2·M1` while keeping `X2` silent
/// is an equilibrium of the two-dimensional game: the conditional mean of
/// `X2` must be flat in `X1`, the revealed actions must cover the
/// conditional support, and no sampled encoder may gain by misreporting.
pub fn verify_linear_equilibrium(source: &SourceModel, b: &[f64], budget: &Budget) -> Result<LinearEquilibriumReport> {
    if source.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: source.dim() });
    }
    if b.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: b.len() });
    }
    if b[0] == 0.0 && b[1] == 0.0 {
        return Err(Error::ZeroBias);
    }
    let curve = curve_predicate(source, b, budget)?;
    let coverage = coverage_predicate(source, b)?;
    let no_deviation = deviation_predicate(source, b, budget)?;
    let passed = curve.passed && coverage.passed && no_deviation.passed;
    Ok(LinearEquilibriumReport { curve, coverage, no_deviation, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_equal_bias_fails_everywhere_but_coverage() {
        let src = SourceModel::iid_exponential(2, 1.0).unwrap();
        let report = verify_linear_equilibrium(&src, &[1.0, 1.0], &Budget::with_samples(200_000, 7)).unwrap();
        assert!(!report.curve.passed && report.curve.max_abs_z > 5.0);
        assert!(report.coverage.passed);
        assert!(!report.no_deviation.passed);
        assert!(!report.passed);
    }

    #[test]
    fn uniform_opposite_bias_passes() {
        let src = SourceModel::iid_uniform(2, 0.0, 1.0).unwrap();
        let report = verify_linear_equilibrium(&src, &[1.0, -1.0], &Budget::with_samples(200_000, 7)).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn zero_bias_is_rejected() {
        let src = SourceModel::iid_uniform(2, 0.0, 1.0).unwrap();
        assert_eq!(verify_linear_equilibrium(&src, &[0.0, 0.0], &Budget::default()), Err(Error::ZeroBias));
    }
}
