use serde::{Deserialize, Serialize};

use super::{
    map_chunks, Budget, EstimateWithError, EstimationMethod, Family, Marginal, SourceModel, TabulatedDensity,
    SAMPLE_CHUNK,
};
use crate::error::{Error, Result};
use crate::geometry::Hyperplane;

/// Regions below this probability are treated as empty.
pub const MIN_REGION_MASS: f64 = 1e-4;

/// A subset of the source space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// `{m : value_k(m) ≥ 0 for every plane k}`; always convex.
    HalfSpaces(Vec<Hyperplane>),
    /// Membership of each point of `source.sample(budget.samples, budget.seed)`.
    Mask(Vec<bool>),
}

impl Region {
    fn contains(planes: &[Hyperplane], m: &[f64]) -> bool {
        planes.iter().all(|h| h.value(m) >= 0.0)
    }
}

/// Weighted points standing in for the source law: either a tensor
/// quadrature grid or equally weighted samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    quadrature: bool,
}

impl WeightedCloud {
    /// Quadrature when the budget allows it, the dimension is at most 3
    /// and the law has a density; Monte Carlo otherwise.
    pub fn for_source(source: &SourceModel, budget: &Budget) -> Result<Self> {
        let want_grid = match budget.method {
            EstimationMethod::MonteCarlo => false,
            EstimationMethod::Quadrature => true,
            EstimationMethod::Auto => source.dim() <= 3,
        };
        if want_grid && source.density(&source.mean()).is_some() {
            let per_axis = (budget.quadrature_points as f64).powf(1.0 / source.dim() as f64).round() as usize;
            Self::quadrature(source, per_axis.max(2))
        } else if budget.method == EstimationMethod::Quadrature {
            Err(Error::InvalidParameter("quadrature needs a law with a density".into()))
        } else {
            Self::monte_carlo(source, budget)
        }
    }

    pub fn monte_carlo(source: &SourceModel, budget: &Budget) -> Result<Self> {
        let samples = source.sample(budget.samples, budget.seed)?;
        let w = 1.0 / samples.len() as f64;
        Ok(Self {
            dim: samples.dim(),
            weights: vec![w; samples.len()],
            points: samples.as_flat().to_vec(),
            quadrature: false,
        })
    }

    /// Tensor grid on the ε-truncated box with `per_axis` cells per
    /// coordinate. For independent coordinates each node sits at its cell's
    /// conditional mean with the cell's exact mass (the outer cells absorb
    /// the tails); otherwise nodes are midpoints weighted by the density.
    /// Weights sum to 1.
    pub fn quadrature(source: &SourceModel, per_axis: usize) -> Result<Self> {
        let n = source.dim();
        let bounds = source.truncated_box();
        let product = !matches!(
            source.family(),
            Family::CorrelatedGaussian2d { .. } | Family::Tabulated { table: TabulatedDensity::Joint(_) }
        );
        let axes: Vec<(Vec<f64>, Vec<f64>)> = if product {
            (0..n).map(|k| product_axis(&source.marginal(k), bounds[k], per_axis)).collect()
        } else {
            bounds.iter().map(|&(lo, hi)| midpoint_axis(lo, hi, per_axis)).collect()
        };
        let total = per_axis.pow(n as u32);
        let mut points = Vec::with_capacity(total * n);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        let mut m = vec![0.0; n];
        for _ in 0..total {
            let mut w = 1.0;
            for k in 0..n {
                m[k] = axes[k].0[idx[k]];
                w *= axes[k].1[idx[k]];
            }
            if !product {
                w *= source.density(&m).unwrap_or(0.0);
            }
            if w > 0.0 {
                points.extend_from_slice(&m);
                weights.push(w);
            }
            for k in (0..n).rev() {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidParameter("density vanishes on the quadrature grid".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self { dim: n, points, weights, quadrature: true })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_quadrature(&self) -> bool {
        self.quadrature
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Conditional mean over the points accepted by `inside`, with its
    /// standard error (zero for quadrature clouds).
    pub(crate) fn conditional_mean<F>(&self, inside: F) -> Result<EstimateWithError<Vec<f64>>>
    where
        F: Fn(usize, &[f64]) -> bool + Sync,
    {
        let n = self.dim;
        let parts = map_chunks(self.len().div_ceil(SAMPLE_CHUNK), |c| {
            let mut acc = Accumulator::new(n);
            for i in c * SAMPLE_CHUNK..((c + 1) * SAMPLE_CHUNK).min(self.len()) {
                let p = self.point(i);
                if inside(i, p) {
                    acc.push(self.weights[i], p);
                }
            }
            acc
        });
        let mut acc = Accumulator::new(n);
        parts.iter().for_each(|p| acc.merge(p));
        acc.finish(self.quadrature)
    }
}

/// Cell midpoints with the cell width as weight.
fn midpoint_axis(lo: f64, hi: f64, cells: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / cells as f64;
    ((0..cells).map(|i| lo + (i as f64 + 0.5) * h).collect(), vec![h; cells])
}

/// Cell conditional means with exact cell masses; the first and last cells
/// extend to the ends of the support.
fn product_axis(law: &Marginal, (lo, hi): (f64, f64), cells: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / cells as f64;
    let (mut nodes, mut masses) = (Vec::with_capacity(cells), Vec::with_capacity(cells));
    for i in 0..cells {
        let a = if i == 0 { f64::NEG_INFINITY } else { lo + i as f64 * h };
        let b = if i + 1 == cells { f64::INFINITY } else { lo + (i + 1) as f64 * h };
        let (mass, mean) = law.interval_stats(a, b);
        let node = if mass > 0.0 { mean } else { lo + (i as f64 + 0.5) * h };
        nodes.push(node);
        masses.push(mass);
    }
    (nodes, masses)
}

/// Weighted first and second moments of a point set.
#[derive(Debug, Clone)]
struct Accumulator {
    count: usize,
    mass: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self { count: 0, mass: 0.0, sum: vec![0.0; n], sum_sq: vec![0.0; n] }
    }

    fn push(&mut self, w: f64, p: &[f64]) {
        self.count += 1;
        self.mass += w;
        for ((s, sq), x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(p) {
            *s += w * x;
            *sq += w * x * x;
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        self.count += other.count;
        self.mass += other.mass;
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.sum_sq.iter_mut().zip(&other.sum_sq).for_each(|(a, b)| *a += b);
    }

    fn finish(&self, exact: bool) -> Result<EstimateWithError<Vec<f64>>> {
        if !(self.mass >= MIN_REGION_MASS) {
            return Err(Error::BinDeath { index: 0, mass: self.mass });
        }
        let mean: Vec<f64> = self.sum.iter().map(|s| s / self.mass).collect();
        let stderr = if exact {
            0.0
        } else if self.count < 2 {
            f64::INFINITY
        } else {
            // Equal weights: the within-region variance over the count.
            let var: f64 = self
                .sum_sq
                .iter()
                .zip(&mean)
                .map(|(sq, m)| (sq / self.mass - m * m).max(0.0))
                .sum::<f64>()
                * self.count as f64
                / (self.count - 1) as f64;
            (var / self.count as f64).sqrt()
        };
        Ok(EstimateWithError { value: mean, stderr, sample_count: self.count })
    }
}

/// `E[M | M ∈ region]`. One-dimensional half-space regions are intervals
/// and use the closed form of the marginal; otherwise a quadrature grid
/// (n ≤ 3) or Monte Carlo samples. Fails with [`Error::BinDeath`] when the
/// region's mass is below [`MIN_REGION_MASS`].
pub fn region_mean(source: &SourceModel, region: &Region, budget: &Budget) -> Result<EstimateWithError<Vec<f64>>> {
    match region {
        Region::HalfSpaces(planes) => {
            if let Some(h) = planes.iter().find(|h| h.dim() != source.dim()) {
                return Err(Error::DimensionMismatch { expected: source.dim(), found: h.dim() });
            }
            if source.dim() == 1 && budget.method != EstimationMethod::MonteCarlo {
                return interval_mean(source, planes);
            }
            let cloud = WeightedCloud::for_source(source, budget)?;
            cloud.conditional_mean(|_, p| Region::contains(planes, p))
        }
        Region::Mask(mask) => {
            if mask.len() != budget.samples {
                return Err(Error::DimensionMismatch { expected: budget.samples, found: mask.len() });
            }
            let cloud = WeightedCloud::monte_carlo(source, budget)?;
            cloud.conditional_mean(|i, _| mask[i])
        }
    }
}

fn interval_mean(source: &SourceModel, planes: &[Hyperplane]) -> Result<EstimateWithError<Vec<f64>>> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for h in planes {
        let (c, a) = (h.normal()[0], h.anchor()[0]);
        if c > 0.0 {
            lo = lo.max(a);
        } else if c < 0.0 {
            hi = hi.min(a);
        }
    }
    let (mass, mean) = source.marginal(0).interval_stats(lo, hi);
    if !(mass >= MIN_REGION_MASS) {
        return Err(Error::BinDeath { index: 0, mass });
    }
    Ok(EstimateWithError { value: vec![mean], stderr: 0.0, sample_count: 0 })
}
