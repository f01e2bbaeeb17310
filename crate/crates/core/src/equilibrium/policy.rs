use serde::{Deserialize, Serialize};

use super::scalar::{scalar_equilibrium, ScalarQuantizer};
use crate::error::{Error, Result};
use crate::geometry::{assign_unchecked, dot, encoder_cost_unchecked, ActionSet};
use crate::sources::{normal_quantile, symmetry_deviation, Family, Marginal, SourceModel, SYMMETRY_THRESHOLD};
use crate::transforms::{bias_aligning_transform, helmert_transform, LinearTransform};

/// Default number of grid levels standing in for a fully revealed coordinate.
pub const DEFAULT_GRID_LEVELS: usize = 1024;

/// A uniform grid over `[lo, hi]` with `levels` cells, each decoded to its
/// midpoint. Values outside the range fall into the outer cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealGrid {
    pub lo: f64,
    pub hi: f64,
    pub levels: usize,
}

impl RevealGrid {
    pub fn new(lo: f64, hi: f64, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidParameter("a reveal grid needs at least one level".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidParameter(format!("invalid reveal range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, levels })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.levels as f64
    }

    /// Cell holding `x`; also the cell whose midpoint is nearest to `x`.
    pub fn cell(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.width()).floor();
        if i.is_nan() || i < 0.0 {
            0
        } else {
            (i as usize).min(self.levels - 1)
        }
    }

    pub fn rep(&self, cell: usize) -> f64 {
        self.lo + (cell as f64 + 0.5) * self.width()
    }
}

/// How one transformed coordinate is communicated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CoordinatePolicy {
    /// Reported truthfully up to grid resolution.
    Revealed(RevealGrid),
    /// Reported through a monotone scalar quantizer.
    Quantized(ScalarQuantizer),
}

impl CoordinatePolicy {
    fn encode(&self, x: f64) -> usize {
        match self {
            CoordinatePolicy::Revealed(g) => g.cell(x),
            CoordinatePolicy::Quantized(q) => q.encode(x),
        }
    }

    fn decode(&self, message: usize) -> f64 {
        match self {
            CoordinatePolicy::Revealed(g) => g.rep(message),
            CoordinatePolicy::Quantized(q) => q.actions[message],
        }
    }

    /// The message whose decoded value is nearest to `target`.
    fn nearest(&self, target: f64) -> usize {
        match self {
            CoordinatePolicy::Revealed(g) => g.cell(target),
            CoordinatePolicy::Quantized(q) => {
                let mut best = 0;
                for (i, a) in q.actions.iter().enumerate() {
                    if (a - target).abs() < (q.actions[best] - target).abs() {
                        best = i;
                    }
                }
                best
            }
        }
    }

    pub fn message_count(&self) -> usize {
        match self {
            CoordinatePolicy::Revealed(g) => g.levels,
            CoordinatePolicy::Quantized(q) => q.len(),
        }
    }
}

/// Encoder that maps the source through an orthonormal transform and
/// communicates each transformed coordinate separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub transform: LinearTransform,
    pub coordinates: Vec<CoordinatePolicy>,
    /// Exact law of the last transformed coordinate, when known.
    pub last_law: Option<Marginal>,
}

impl LinearPolicy {
    pub fn new(transform: LinearTransform, coordinates: Vec<CoordinatePolicy>, last_law: Option<Marginal>) -> Result<Self> {
        if !transform.orthonormal {
            return Err(Error::InvalidParameter("linear policies need an orthonormal transform".into()));
        }
        if coordinates.len() != transform.dim() {
            return Err(Error::DimensionMismatch { expected: transform.dim(), found: coordinates.len() });
        }
        Ok(Self { transform, coordinates, last_law })
    }

    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    pub fn last(&self) -> &CoordinatePolicy {
        &self.coordinates[self.dim() - 1]
    }

    pub fn grid_levels(&self) -> Option<usize> {
        self.coordinates.iter().find_map(|c| match c {
            CoordinatePolicy::Revealed(g) => Some(g.levels),
            CoordinatePolicy::Quantized(_) => None,
        })
    }

    fn decode_transformed(&self, message: &[usize]) -> Vec<f64> {
        self.coordinates.iter().zip(message).map(|(c, &i)| c.decode(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EncoderPolicy {
    /// Nearest-action encoder (under the encoder's cost) over a finite set.
    Quantizer { actions: ActionSet },
    Linear(LinearPolicy),
}

/// Messages are per-coordinate indices; a quantizer uses a single index.
pub type Message = Vec<usize>;

impl EncoderPolicy {
    pub fn kind(&self) -> &'static str {
        match self {
            EncoderPolicy::Quantizer { .. } => "quantizer",
            EncoderPolicy::Linear(p) if p.last().message_count() == 1 => "linear-reveal",
            EncoderPolicy::Linear(_) => "linear-plus-quantizer",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EncoderPolicy::Quantizer { actions } => actions.dim(),
            EncoderPolicy::Linear(p) => p.dim(),
        }
    }

    /// The message the policy prescribes for `m`.
    pub(crate) fn encode(&self, m: &[f64], b: &[f64]) -> Message {
        match self {
            EncoderPolicy::Quantizer { actions } => vec![assign_unchecked(m, actions, b)],
            EncoderPolicy::Linear(p) => {
                let x = p.transform.forward.mul_vec(m);
                p.coordinates.iter().zip(&x).map(|(c, &v)| c.encode(v)).collect()
            }
        }
    }

    /// The decoder's action, in source units.
    pub(crate) fn decode(&self, message: &[usize]) -> Vec<f64> {
        match self {
            EncoderPolicy::Quantizer { actions } => actions.get(message[0]).to_vec(),
            EncoderPolicy::Linear(p) => p.transform.inverse.mul_vec(&p.decode_transformed(message)),
        }
    }

    /// The encoder's best reply to the decoder, over every message.
    pub(crate) fn best_reply(&self, m: &[f64], b: &[f64]) -> Message {
        match self {
            EncoderPolicy::Quantizer { actions } => vec![assign_unchecked(m, actions, b)],
            EncoderPolicy::Linear(p) => {
                // Orthonormal coordinates make the encoder cost separable.
                let x = p.transform.forward.mul_vec(m);
                let tb = p.transform.forward.mul_vec(b);
                p.coordinates.iter().enumerate().map(|(i, c)| c.nearest(x[i] - tb[i])).collect()
            }
        }
    }

    /// Encoder cost of reporting `message` when the source is `m`.
    pub(crate) fn encoder_cost(&self, m: &[f64], b: &[f64], message: &[usize]) -> f64 {
        encoder_cost_unchecked(m, &self.decode(message), b)
    }

    /// Group used for centroid checks: the action index for quantizers,
    /// the last coordinate's message for linear policies.
    pub(crate) fn group(&self, message: &[usize]) -> usize {
        message[message.len() - 1]
    }

    pub(crate) fn group_count(&self) -> usize {
        match self {
            EncoderPolicy::Quantizer { actions } => actions.len(),
            EncoderPolicy::Linear(p) => p.last().message_count(),
        }
    }
}

/// Which orthonormal change of coordinates decouples the game, and the law
/// of the last coordinate when it is known exactly.
struct Decoupling {
    transform: LinearTransform,
    last_law: Option<Marginal>,
}

fn is_symmetric(law: &Marginal) -> bool {
    law.exact_symmetry().unwrap_or_else(|| symmetry_deviation(law) < SYMMETRY_THRESHOLD)
}

/// Permutation moving coordinate `j` last, as an orthonormal transform.
fn move_last(n: usize, j: usize) -> Result<LinearTransform> {
    let mut order: Vec<usize> = (0..n).filter(|&i| i != j).collect();
    order.push(j);
    let rows = order
        .into_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect();
    LinearTransform::orthonormal_from_rows(rows)
}

fn decouple(source: &SourceModel, b: &[f64]) -> Result<Decoupling> {
    let n = source.dim();
    let law = source
        .iid_marginal()
        .ok_or_else(|| Error::Precondition(format!("{} sources are not iid", source.family().name())))?;
    let nonzero: Vec<usize> = (0..n).filter(|&i| b[i] != 0.0).collect();
    if nonzero.is_empty() {
        return Ok(Decoupling { transform: LinearTransform::identity(n), last_law: Some(law) });
    }
    if law.is_gaussian() {
        let transform = bias_aligning_transform(b)?;
        let sd = law.variance().sqrt();
        let mean = dot(transform.forward.row(n - 1), &source.mean());
        return Ok(Decoupling { transform, last_law: Some(Marginal::Gaussian { mean, sd }) });
    }
    if nonzero.len() == 1 {
        // Only one coordinate is biased: the rest can be revealed as they are.
        let transform = move_last(n, nonzero[0])?.with_bias(b)?;
        return Ok(Decoupling { transform, last_law: Some(law) });
    }
    if n == 2 && b[0] == -b[1] {
        // Exchangeability alone makes E[M1 − M2 | M1 + M2] vanish.
        return Ok(Decoupling { transform: bias_aligning_transform(b)?, last_law: None });
    }
    if b.iter().all(|&x| x == b[0]) {
        if !is_symmetric(&law) {
            return Err(Error::Precondition(format!(
                "equal-bias constructions need a symmetric marginal; {} is not",
                source.family().name()
            )));
        }
        return Ok(Decoupling { transform: helmert_transform(n)?.with_bias(b)?, last_law: None });
    }
    Err(Error::Precondition(format!(
        "no reveal construction covers {} sources with bias {b:?}",
        source.family().name()
    )))
}

/// Range of `row · M` over the source's ε-truncated support.
fn reveal_range(source: &SourceModel, row: &[f64]) -> (f64, f64) {
    if let Family::IidGaussian { mean, variance } = source.family() {
        let z = normal_quantile(1.0 - source.epsilon());
        let c = mean * row.iter().sum::<f64>();
        let half = z * variance.sqrt() * dot(row, row).sqrt();
        return (c - half, c + half);
    }
    source.truncated_box().iter().zip(row).fold((0.0, 0.0), |(lo, hi), (&(a, b), &r)| {
        if r >= 0.0 {
            (lo + r * a, hi + r * b)
        } else {
            (lo + r * b, hi + r * a)
        }
    })
}

/// Reveals the first n−1 transformed coordinates (on a uniform grid of
/// `grid_levels` cells each) and plays the `k_last`-bin scalar equilibrium
/// on the last one, whose bias is the last entry of the transformed bias.
pub fn construct_reveal_plus_quantize(
    source: &SourceModel,
    b: &[f64],
    k_last: usize,
    grid_levels: Option<usize>,
) -> Result<EncoderPolicy> {
    let n = source.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    if n < 2 {
        return Err(Error::Precondition("reveal constructions need at least two dimensions".into()));
    }
    if k_last == 0 {
        return Err(Error::InvalidParameter("bin count must be at least 1".into()));
    }
    let levels = grid_levels.unwrap_or(DEFAULT_GRID_LEVELS);
    let Decoupling { transform, last_law } = decouple(source, b)?;
    let beta = transform.transformed_bias[n - 1];
    let last = match (&last_law, k_last) {
        (Some(law), _) => scalar_equilibrium(law, beta, k_last)?,
        (None, 1) => ScalarQuantizer::single(dot(transform.forward.row(n - 1), &source.mean()), beta),
        (None, _) => {
            return Err(Error::Precondition(format!(
                "the last coordinate's law is not available in closed form for {} sources; only k_last = 1 is supported",
                source.family().name()
            )))
        }
    };
    let mut coordinates = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let (lo, hi) = reveal_range(source, transform.forward.row(i));
        coordinates.push(CoordinatePolicy::Revealed(RevealGrid::new(lo, hi, levels)?));
    }
    coordinates.push(CoordinatePolicy::Quantized(last));
    Ok(EncoderPolicy::Linear(LinearPolicy::new(transform, coordinates, last_law)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_pair_reveals_the_difference() {
        let src = SourceModel::iid_gaussian(2, 0.0, 1.0).unwrap();
        let policy = construct_reveal_plus_quantize(&src, &[1.0, 1.0], 1, None).unwrap();
        assert_eq!(policy.kind(), "linear-reveal");
        let EncoderPolicy::Linear(p) = &policy else { panic!() };
        let row = p.transform.forward.row(0);
        // The revealed direction is orthogonal to the bias.
        assert!((row[0] + row[1]).abs() < 1e-15);
        assert!((p.transform.transformed_bias[1] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.grid_levels(), Some(DEFAULT_GRID_LEVELS));
    }

    #[test]
    fn uniform_equal_bias_uses_helmert() {
        let src = SourceModel::iid_uniform(2, 0.0, 1.0).unwrap();
        let EncoderPolicy::Linear(p) = construct_reveal_plus_quantize(&src, &[1.0, 1.0], 1, Some(64)).unwrap() else {
            panic!()
        };
        let r = 0.5f64.sqrt();
        assert!((p.transform.forward.row(0)[0] - r).abs() < 1e-15);
        assert!((p.transform.forward.row(0)[1] + r).abs() < 1e-15);
        let CoordinatePolicy::Revealed(g) = &p.coordinates[0] else { panic!() };
        assert!((g.lo + r).abs() < 1e-12 && (g.hi - r).abs() < 1e-12);
        assert!(matches!(
            construct_reveal_plus_quantize(&src, &[1.0, 1.0], 2, None),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn preconditions() {
        let exp = SourceModel::iid_exponential(2, 1.0).unwrap();
        assert!(matches!(construct_reveal_plus_quantize(&exp, &[1.0, 1.0], 1, None), Err(Error::Precondition(_))));
        assert!(matches!(construct_reveal_plus_quantize(&exp, &[1.0, 2.0], 1, None), Err(Error::Precondition(_))));
        assert!(construct_reveal_plus_quantize(&exp, &[1.0, -1.0], 1, None).is_ok());
        assert!(construct_reveal_plus_quantize(&exp, &[0.0, 3.0], 2, None).is_ok());
        let corr = SourceModel::correlated_gaussian_2d([0.0, 0.0], [1.0, 2.0], 0.5).unwrap();
        assert!(matches!(construct_reveal_plus_quantize(&corr, &[1.0, 1.0], 1, None), Err(Error::Precondition(_))));
    }

    #[test]
    fn four_dimensional_gaussian_with_three_bins() {
        let src = SourceModel::iid_gaussian(4, 0.0, 1.0).unwrap();
        let policy = construct_reveal_plus_quantize(&src, &[0.5; 4], 3, Some(16)).unwrap();
        assert_eq!(policy.kind(), "linear-plus-quantizer");
        assert_eq!(policy.group_count(), 3);
        let m = [0.3, -1.2, 0.8, 0.1];
        let msg = policy.encode(&m, &[0.5; 4]);
        assert_eq!(msg.len(), 4);
        assert_eq!(policy.best_reply(&m, &[0.5; 4]), msg);
    }

    #[test]
    fn grid_cells_clamp() {
        let g = RevealGrid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.cell(-3.0), 0);
        assert_eq!(g.cell(0.3), 1);
        assert_eq!(g.cell(9.0), 3);
        assert_eq!(g.rep(1), 0.375);
    }
}
