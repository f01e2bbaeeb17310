//! Existence of informative linear equilibria in two dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sources::{
    check_covariance, conditional_mean_curve, symmetry_deviation, x1_range, Budget, CurveMethod, Family, SourceModel,
    SYMMETRY_THRESHOLD,
};

/// Interior points at which the conditional-mean curve is evaluated as
/// evidence.
const EVIDENCE_GRID: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Existence {
    Yes,
    No,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremCase {
    /// One bias component is zero: reveal the unbiased coordinate.
    ZeroBias,
    /// Unequal nonzero magnitudes: only Gaussian sources work.
    GaussianRequired,
    /// Equal components: the marginal must be symmetric about its mean.
    SymmetryRequired,
    /// Opposite components: any iid source works.
    AntisymmetricBias,
    CorrelatedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Confidence {
    /// Decided by an exact property of the family.
    Analytic,
    /// Decided by a thresholded numerical test.
    Numerical,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub symmetry_deviation: Option<f64>,
    /// `max_t |E[X2 | X1 = t] − E[X2]|` over an interior grid.
    pub curve_max_deviation: Option<f64>,
    pub correlation_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationVerdict {
    pub exists: Existence,
    pub case: TheoremCase,
    pub evidence: Evidence,
    pub confidence: Confidence,
}

fn curve_deviation(source: &SourceModel, b: &[f64]) -> Result<f64> {
    let (lo, hi) = x1_range(source, b)?;
    let step = (hi - lo) / (EVIDENCE_GRID + 1) as f64;
    let grid: Vec<f64> = (1..=EVIDENCE_GRID).map(|i| lo + i as f64 * step).collect();
    let curve = conditional_mean_curve(source, b, &grid, &Budget::default(), CurveMethod::Quadrature)?;
    Ok(curve.iter().map(|c| c.value.abs()).fold(0.0, f64::max))
}

/// Whether revealing one linear combination of an iid pair can be an
/// informative equilibrium under bias `b`.
pub fn classify_linear_existence(source: &SourceModel, b: &[f64]) -> Result<ClassificationVerdict> {
    if source.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: source.dim() });
    }
    if b.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: b.len() });
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("bias {b:?} is not finite")));
    }
    let law = source.iid_marginal().ok_or(Error::NotIid)?;
    let (b1, b2) = (b[0], b[1]);
    let verdict = |exists, case, evidence, confidence| ClassificationVerdict { exists, case, evidence, confidence };

    if b1 == 0.0 || b2 == 0.0 {
        return Ok(verdict(Existence::Yes, TheoremCase::ZeroBias, Evidence::default(), Confidence::Analytic));
    }
    if b1 == -b2 {
        return Ok(verdict(Existence::Yes, TheoremCase::AntisymmetricBias, Evidence::default(), Confidence::Analytic));
    }
    if b1 == b2 {
        let deviation = symmetry_deviation(&law);
        let (symmetric, confidence) = match law.exact_symmetry() {
            Some(s) => (s, Confidence::Analytic),
            None => (deviation < SYMMETRY_THRESHOLD, Confidence::Numerical),
        };
        let evidence = Evidence {
            symmetry_deviation: Some(deviation),
            curve_max_deviation: (confidence == Confidence::Numerical).then(|| curve_deviation(source, b)).transpose()?,
            correlation_residual: None,
        };
        let exists = if symmetric { Existence::Yes } else { Existence::No };
        return Ok(verdict(exists, TheoremCase::SymmetryRequired, evidence, confidence));
    }
    let evidence = Evidence { curve_max_deviation: Some(curve_deviation(source, b)?), ..Evidence::default() };
    match source.family() {
        Family::Tabulated { .. } => {
            // A finite table cannot certify Gaussianity either way.
            Ok(verdict(Existence::Undetermined, TheoremCase::GaussianRequired, evidence, Confidence::Numerical))
        }
        _ => {
            let exists = if law.is_gaussian() { Existence::Yes } else { Existence::No };
            Ok(verdict(exists, TheoremCase::GaussianRequired, evidence, Confidence::Analytic))
        }
    }
}

/// `b1·b2·(σ2² − σ1²) + (b1² − b2²)·ρ` and whether it vanishes, which is
/// sufficient for a linear equilibrium of a correlated Gaussian pair.
pub fn correlated_gaussian_condition(sigma1_sq: f64, sigma2_sq: f64, rho: f64, b: &[f64]) -> Result<(f64, bool)> {
    if b.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: b.len() });
    }
    check_covariance(sigma1_sq, sigma2_sq, rho)?;
    let (b1, b2) = (b[0], b[1]);
    let residual = b1 * b2 * (sigma2_sq - sigma1_sq) + (b1 * b1 - b2 * b2) * rho;
    let scale = 1f64.max((b1 * b1 + b2 * b2) * sigma1_sq.max(sigma2_sq).max(rho.abs()));
    Ok((residual, residual.abs() <= 1e-12 * scale))
}

/// Verdict for a correlated Gaussian pair. The condition is only known to
/// be sufficient, so a failure is reported as undetermined.
pub fn classify_correlated(source: &SourceModel, b: &[f64]) -> Result<ClassificationVerdict> {
    let Family::CorrelatedGaussian2d { variances, covariance, .. } = source.family() else {
        return Err(Error::Precondition(format!(
            "expected a correlated Gaussian pair, got {}",
            source.family().name()
        )));
    };
    let (residual, holds) = correlated_gaussian_condition(variances[0], variances[1], *covariance, b)?;
    Ok(ClassificationVerdict {
        exists: if holds { Existence::Yes } else { Existence::Undetermined },
        case: TheoremCase::CorrelatedGaussian,
        evidence: Evidence { correlation_residual: Some(residual), ..Evidence::default() },
        confidence: Confidence::Analytic,
    })
}

/// Dispatches to [`classify_linear_existence`] or [`classify_correlated`].
pub fn classify(source: &SourceModel, b: &[f64]) -> Result<ClassificationVerdict> {
    match source.family() {
        Family::CorrelatedGaussian2d { .. } => classify_correlated(source, b),
        _ => classify_linear_existence(source, b),
    }
}
