use serde::{Deserialize, Serialize};

use super::{Budget, EstimateWithError, Family, Marginal, Moments, SourceModel, TabulatedDensity, DEFAULT_EPSILON};
use crate::error::{Error, Result};

/// Tabulated marginals with a normalized symmetry deviation below this are
/// treated as symmetric.
pub const SYMMETRY_THRESHOLD: f64 = 1e-3;

/// Simpson intervals for line integrals of the joint density.
const LINE_INTERVALS: usize = 4096;
/// Tail cut for line integrals, in standard deviations (Gaussian) or scale
/// lengths (exponential tails); the dropped mass is far below double
/// precision relative to the kept mass.
const LINE_REACH_SD: f64 = 12.0;
const LINE_REACH_SCALE: f64 = 60.0;
/// Minimum number of samples a regression window must hold.
const MIN_WINDOW: usize = 100;
/// Regression windows may not grow beyond this fraction of the sample range.
const MAX_WINDOW_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMethod {
    /// Nearest-neighbour window means over Monte Carlo samples.
    #[default]
    Regression,
    /// Line integrals of the joint density.
    Quadrature,
}

fn pair_coordinates(b: &[f64]) -> Result<(f64, f64, f64)> {
    if b.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: b.len() });
    }
    let b_tilde = b[0] * b[0] + b[1] * b[1];
    if b_tilde == 0.0 {
        return Err(Error::ZeroBias);
    }
    Ok((b[0], b[1], b_tilde))
}

/// Values `s` for which `(c_k·s + d_k)` lies in `bounds[k]` for both k.
fn line_in_box(c: [f64; 2], d: [f64; 2], bounds: &[(f64, f64)]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..2 {
        let (blo, bhi) = bounds[k];
        if c[k] == 0.0 {
            if d[k] < blo || d[k] > bhi {
                return None;
            }
            continue;
        }
        let (a, b) = ((blo - d[k]) / c[k], (bhi - d[k]) / c[k]);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    let scale = 1.0 + lo.abs().max(hi.abs());
    if lo > hi + 1e-12 * scale {
        return None;
    }
    if lo > hi {
        let mid = 0.5 * (lo + hi);
        return Some((mid, mid));
    }
    Some((lo, hi))
}

/// The interval `[x1_lo, x1_hi]` of `X1 = b1·M2 − b2·M1` values compatible
/// with `X2 = b1·M1 + b2·M2 = kappa`, on the ε-truncated support box.
pub fn conditional_support(source: &SourceModel, b: &[f64], kappa: f64) -> Result<(f64, f64)> {
    if source.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: source.dim() });
    }
    let (b1, b2, bt) = pair_coordinates(b)?;
    // M = T⁻¹X: m1 = (−b2·x1 + b1·κ)/b̃, m2 = (b1·x1 + b2·κ)/b̃.
    line_in_box([-b2 / bt, b1 / bt], [b1 * kappa / bt, b2 * kappa / bt], &source.truncated_box())
        .ok_or(Error::OutsideSupport(kappa))
}

/// Range of the pair coordinate `X1 = b1·M2 − b2·M1` over the ε-truncated
/// support box.
pub fn x1_range(source: &SourceModel, b: &[f64]) -> Result<(f64, f64)> {
    let (b1, b2, _) = pair_coordinates(b)?;
    let bx = source.truncated_box();
    let span = |c: f64, (lo, hi): (f64, f64)| if c >= 0.0 { (c * lo, c * hi) } else { (c * hi, c * lo) };
    let (a_lo, a_hi) = span(-b2, bx[0]);
    let (c_lo, c_hi) = span(b1, bx[1]);
    Ok((a_lo + c_lo, a_hi + c_hi))
}

/// `E[X2 | X1 = t] − E[X2]` at each grid point, where
/// `X1 = b1·M2 − b2·M1` and `X2 = b1·M1 + b2·M2`.
pub fn conditional_mean_curve(
    source: &SourceModel,
    b: &[f64],
    grid: &[f64],
    budget: &Budget,
    method: CurveMethod,
) -> Result<Vec<EstimateWithError<f64>>> {
    if source.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: source.dim() });
    }
    let (b1, b2, _) = pair_coordinates(b)?;
    let mean = source.mean();
    let x2_mean = b1 * mean[0] + b2 * mean[1];
    match method {
        CurveMethod::Quadrature => grid
            .iter()
            .map(|&t| {
                let v = line_conditional_mean(source, b, t)?;
                Ok(EstimateWithError { value: v - x2_mean, stderr: 0.0, sample_count: LINE_INTERVALS + 1 })
            })
            .collect(),
        CurveMethod::Regression => regression_curve(source, b, grid, budget),
    }
}

/// Box for line integrals. Unlike the ε-truncated box it does not bend
/// conditional means near its edges.
fn integration_box(source: &SourceModel) -> Vec<(f64, f64)> {
    if let Family::Tabulated { table: TabulatedDensity::Joint(g) } = source.family() {
        return g.support_box().to_vec();
    }
    (0..source.dim())
        .map(|i| match source.marginal(i) {
            Marginal::Gaussian { mean, sd } => (mean - LINE_REACH_SD * sd, mean + LINE_REACH_SD * sd),
            Marginal::Exponential { rate } => (0.0, LINE_REACH_SCALE / rate),
            Marginal::Laplace { mean, scale } => (mean - LINE_REACH_SCALE * scale, mean + LINE_REACH_SCALE * scale),
            m => m.support(),
        })
        .collect()
}

/// `E[X2 | X1 = t]` by Simpson's rule along the line `X1 = t`.
pub(crate) fn line_conditional_mean(source: &SourceModel, b: &[f64], t: f64) -> Result<f64> {
    let (b1, b2, bt) = pair_coordinates(b)?;
    // With s = x2: m1 = (−b2·t + b1·s)/b̃, m2 = (b1·t + b2·s)/b̃.
    let c = [b1 / bt, b2 / bt];
    let d = [-b2 * t / bt, b1 * t / bt];
    let (lo, hi) = line_in_box(c, d, &integration_box(source)).ok_or(Error::OutsideSupport(t))?;
    if hi == lo {
        return Ok(lo);
    }
    let h = (hi - lo) / LINE_INTERVALS as f64;
    let (mut den, mut num) = (0.0, 0.0);
    for k in 0..=LINE_INTERVALS {
        let s = lo + k as f64 * h;
        let w = if k == 0 || k == LINE_INTERVALS {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let m = [c[0] * s + d[0], c[1] * s + d[1]];
        let f = source
            .density(&m)
            .ok_or_else(|| Error::InvalidParameter("line integrals need a law with a density".into()))?;
        den += w * f;
        num += w * f * s;
    }
    if !(den > 0.0) {
        return Err(Error::OutsideSupport(t));
    }
    Ok(num / den)
}

fn regression_curve(
    source: &SourceModel,
    b: &[f64],
    grid: &[f64],
    budget: &Budget,
) -> Result<Vec<EstimateWithError<f64>>> {
    let count = budget.samples;
    if count < MIN_WINDOW {
        return Err(Error::BudgetTooSmall(format!("{count} samples cannot fill a {MIN_WINDOW}-sample window")));
    }
    let samples = source.sample(count, budget.seed)?;
    let mut pairs: Vec<(f64, f64)> = samples
        .iter()
        .map(|m| (b[0] * m[1] - b[1] * m[0], b[0] * m[0] + b[1] * m[1]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut overall = Moments::default();
    pairs.iter().for_each(|p| overall.push(p.1));
    let k = MIN_WINDOW.max(count / 200);
    let max_half_width = MAX_WINDOW_FRACTION * (pairs[count - 1].0 - pairs[0].0);
    grid.iter()
        .map(|&t| {
            let pos = pairs.partition_point(|p| p.0 < t);
            let (mut lo, mut hi) = (pos, pos);
            while hi - lo < k {
                let left = (lo > 0).then(|| t - pairs[lo - 1].0);
                let right = (hi < count).then(|| pairs[hi].0 - t);
                let (take_left, dist) = match (left, right) {
                    (Some(l), Some(r)) => (l <= r, l.min(r)),
                    (Some(l), None) => (true, l),
                    (None, Some(r)) => (false, r),
                    (None, None) => break,
                };
                if dist > max_half_width {
                    break;
                }
                if take_left {
                    lo -= 1;
                } else {
                    hi += 1;
                }
            }
            if hi - lo < MIN_WINDOW {
                return Err(Error::InsufficientWindow { t, count: hi - lo });
            }
            let mut window = Moments::default();
            pairs[lo..hi].iter().for_each(|p| window.push(p.1));
            Ok(EstimateWithError {
                value: window.mean() - overall.mean(),
                stderr: (window.variance() / window.n as f64 + overall.variance() / overall.n as f64).sqrt(),
                sample_count: window.n,
            })
        })
        .collect()
}

/// `sup_x |f(μ + x) − f(μ − x)| / peak` over offsets taken from a quantile
/// grid. Tabulated densities are compared as cell-width window averages
/// so that cell edges do not register as asymmetry.
pub fn symmetry_deviation(marginal: &Marginal) -> f64 {
    let mu = marginal.mean();
    let half_width = match marginal {
        Marginal::Tabulated(t) => t.width() / 2.0,
        _ => 0.0,
    };
    let peak = marginal.peak_density();
    const POINTS: usize = 2001;
    (0..POINTS)
        .map(|k| {
            let p = (k as f64 / (POINTS - 1) as f64).clamp(DEFAULT_EPSILON, 1.0 - DEFAULT_EPSILON);
            let x = (marginal.quantile(p) - mu).abs();
            let up = marginal.window_density(mu + x, half_width);
            let down = marginal.window_density(mu - x, half_width);
            (up - down).abs() / peak
        })
        .fold(0.0, f64::max)
}
