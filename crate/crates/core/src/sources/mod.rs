//! Source models: marginal laws, i.i.d. and correlated families, tabulated
//! densities, deterministic sampling, and the estimators built on them
//! (region means, conditional-mean curves, symmetry and support tests).

mod curve;
mod marginal;
mod region;
mod tabulated;

pub use curve::{
    conditional_mean_curve, conditional_support, symmetry_deviation, x1_range, CurveMethod, SYMMETRY_THRESHOLD,
};
pub use marginal::{Marginal, PiecewiseConstant};
pub use region::{region_mean, Region, WeightedCloud};
pub use tabulated::{JointGrid, TabulatedDensity};

pub(crate) use marginal::normal_quantile;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points generated per random substream. Substream `c` always produces
/// points `c·CHUNK .. (c+1)·CHUNK`, whatever the worker count.
pub const SAMPLE_CHUNK: usize = 8192;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    IidGaussian { mean: f64, variance: f64 },
    CorrelatedGaussian2d { mean: [f64; 2], variances: [f64; 2], covariance: f64 },
    IidUniform { lo: f64, hi: f64 },
    IidExponential { rate: f64 },
    IidLaplace { mean: f64, scale: f64 },
    #[serde(rename = "tabulated-density")]
    Tabulated { table: TabulatedDensity },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::IidGaussian { .. } => "iid-gaussian",
            Family::CorrelatedGaussian2d { .. } => "correlated-gaussian-2d",
            Family::IidUniform { .. } => "iid-uniform",
            Family::IidExponential { .. } => "iid-exponential",
            Family::IidLaplace { .. } => "iid-laplace",
            Family::Tabulated { .. } => "tabulated-density",
        }
    }
}

/// A probability model for the n-dimensional source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSource")]
pub struct SourceModel {
    #[serde(flatten)]
    family: Family,
    dim: usize,
    epsilon: f64,
}

#[derive(Deserialize)]
struct RawSource {
    #[serde(flatten)]
    family: Family,
    dim: usize,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl TryFrom<RawSource> for SourceModel {
    type Error = Error;
    fn try_from(raw: RawSource) -> Result<Self> {
        SourceModel::new(raw.family, raw.dim)?.with_epsilon(raw.epsilon)
    }
}

impl SourceModel {
    pub fn new(family: Family, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("source dimension must be at least 1".into()));
        }
        match &family {
            Family::CorrelatedGaussian2d { mean, variances, covariance } => {
                if dim != 2 {
                    return Err(Error::DimensionMismatch { expected: 2, found: dim });
                }
                check_covariance(variances[0], variances[1], *covariance)?;
                if mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite mean".into()));
                }
            }
            Family::Tabulated { table: TabulatedDensity::Joint(_) } if dim != 2 => {
                return Err(Error::DimensionMismatch { expected: 2, found: dim });
            }
            Family::IidGaussian { variance, .. } if !(*variance > 0.0) => {
                return Err(Error::InvalidParameter(format!("variance must be positive, got {variance}")));
            }
            _ => {}
        }
        let model = Self { family, dim, epsilon: DEFAULT_EPSILON };
        for i in 0..dim {
            model.marginal(i).validate()?;
        }
        Ok(model)
    }

    pub fn iid_gaussian(dim: usize, mean: f64, variance: f64) -> Result<Self> {
        Self::new(Family::IidGaussian { mean, variance }, dim)
    }

    pub fn iid_uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Family::IidUniform { lo, hi }, dim)
    }

    pub fn iid_exponential(dim: usize, rate: f64) -> Result<Self> {
        Self::new(Family::IidExponential { rate }, dim)
    }

    pub fn iid_laplace(dim: usize, mean: f64, scale: f64) -> Result<Self> {
        Self::new(Family::IidLaplace { mean, scale }, dim)
    }

    pub fn correlated_gaussian_2d(mean: [f64; 2], variances: [f64; 2], covariance: f64) -> Result<Self> {
        Self::new(Family::CorrelatedGaussian2d { mean, variances, covariance }, 2)
    }

    pub fn tabulated(dim: usize, table: TabulatedDensity) -> Result<Self> {
        Self::new(Family::Tabulated { table }, dim)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidParameter(format!("truncation quantile must be in (0, 0.5), got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Law of coordinate `i`.
    pub fn marginal(&self, i: usize) -> Marginal {
        match &self.family {
            Family::IidGaussian { mean, variance } => Marginal::Gaussian { mean: *mean, sd: variance.sqrt() },
            Family::CorrelatedGaussian2d { mean, variances, .. } => {
                Marginal::Gaussian { mean: mean[i], sd: variances[i].sqrt() }
            }
            Family::IidUniform { lo, hi } => Marginal::Uniform { lo: *lo, hi: *hi },
            Family::IidExponential { rate } => Marginal::Exponential { rate: *rate },
            Family::IidLaplace { mean, scale } => Marginal::Laplace { mean: *mean, scale: *scale },
            Family::Tabulated { table } => match table {
                TabulatedDensity::Marginal(p) => Marginal::Tabulated(p.clone()),
                TabulatedDensity::Joint(g) => Marginal::Tabulated(g.marginal(i)),
            },
        }
    }

    /// The law shared by every coordinate when the source is i.i.d.
    pub fn iid_marginal(&self) -> Option<Marginal> {
        match &self.family {
            Family::CorrelatedGaussian2d { mean, variances, covariance } => {
                (*covariance == 0.0 && mean[0] == mean[1] && variances[0] == variances[1]).then(|| self.marginal(0))
            }
            Family::Tabulated { table } => table.iid_marginal().map(Marginal::Tabulated),
            _ => Some(self.marginal(0)),
        }
    }

    pub fn is_iid(&self) -> bool {
        self.iid_marginal().is_some()
    }

    /// True for the analytic Gaussian families; tabulated densities never
    /// qualify, whatever their shape.
    pub fn is_gaussian(&self) -> bool {
        matches!(self.family, Family::IidGaussian { .. } | Family::CorrelatedGaussian2d { .. })
    }

    pub fn mean(&self) -> Vec<f64> {
        match &self.family {
            Family::Tabulated { table: TabulatedDensity::Joint(g) } => g.mean().to_vec(),
            _ => (0..self.dim).map(|i| self.marginal(i).mean()).collect(),
        }
    }

    /// Sum of the coordinate variances, `E‖M − E M‖²`.
    pub fn total_variance(&self) -> f64 {
        (0..self.dim).map(|i| self.marginal(i).variance()).sum()
    }

    /// Joint density, or `None` when the law is singular.
    pub fn density(&self, m: &[f64]) -> Option<f64> {
        match &self.family {
            Family::CorrelatedGaussian2d { mean, variances, covariance } => {
                let det = variances[0] * variances[1] - covariance * covariance;
                if det <= 0.0 {
                    return None;
                }
                let (d0, d1) = (m[0] - mean[0], m[1] - mean[1]);
                let q = (variances[1] * d0 * d0 - 2.0 * covariance * d0 * d1 + variances[0] * d1 * d1) / det;
                Some((-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt()))
            }
            Family::Tabulated { table: TabulatedDensity::Joint(g) } => Some(g.pdf(m)),
            _ => {
                let law = self.marginal(0);
                Some(m.iter().map(|&x| law.pdf(x)).product())
            }
        }
    }

    /// Per-coordinate bounding box, unbounded ends cut at the ε quantiles.
    pub fn truncated_box(&self) -> Vec<(f64, f64)> {
        match &self.family {
            Family::Tabulated { table: TabulatedDensity::Joint(g) } => g.support_box().to_vec(),
            _ => (0..self.dim).map(|i| self.marginal(i).truncated_support(self.epsilon)).collect(),
        }
    }

    fn fill_point(&self, rng: &mut ChaCha8Rng, out: &mut [f64], iid: Option<&Marginal>) {
        match &self.family {
            Family::CorrelatedGaussian2d { mean, variances, covariance } => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let s1 = variances[0].sqrt();
                let cond = (variances[1] - covariance * covariance / variances[0]).max(0.0).sqrt();
                out[0] = mean[0] + s1 * z1;
                out[1] = mean[1] + covariance / s1 * z1 + cond * z2;
            }
            Family::Tabulated { table: TabulatedDensity::Joint(g) } => g.sample(rng, out),
            _ => {
                let law = iid.expect("independent coordinates share one law");
                out.iter_mut().for_each(|x| *x = law.sample(rng));
            }
        }
    }

    /// `count` points, deterministic in `(self, count, seed)`. A shorter
    /// run is a prefix of a longer one with the same seed.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Samples> {
        if count == 0 {
            return Err(Error::InvalidParameter("sample count must be positive".into()));
        }
        let chunks = map_chunks(count.div_ceil(SAMPLE_CHUNK), |c| self.sample_chunk(count, seed, c));
        Ok(Samples { dim: self.dim, data: chunks.concat() })
    }

    /// Chunk `c` of [`SourceModel::sample`], flattened row-major.
    pub(crate) fn sample_chunk(&self, count: usize, seed: u64, c: usize) -> Vec<f64> {
        let iid = match &self.family {
            Family::CorrelatedGaussian2d { .. } | Family::Tabulated { table: TabulatedDensity::Joint(_) } => None,
            _ => Some(self.marginal(0)),
        };
        let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
        let mut rng = substream(seed, c);
        let mut data = vec![0.0; len * self.dim];
        for point in data.chunks_exact_mut(self.dim) {
            self.fill_point(&mut rng, point, iid.as_ref());
        }
        data
    }
}

pub(crate) fn check_covariance(v1: f64, v2: f64, covariance: f64) -> Result<()> {
    if !(v1 > 0.0 && v2 > 0.0) || !v1.is_finite() || !v2.is_finite() || !covariance.is_finite() {
        return Err(Error::InvalidCovariance(format!("variances must be positive, got {v1}, {v2}")));
    }
    if covariance * covariance > v1 * v2 * (1.0 + 1e-12) {
        return Err(Error::InvalidCovariance(format!(
            "covariance {covariance} exceeds √(σ1²σ2²) = {}",
            (v1 * v2).sqrt()
        )));
    }
    Ok(())
}

/// The random stream for chunk `chunk` of a run seeded with `seed`.
pub(crate) fn substream(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Evaluates `f` on `0..n` and returns results in index order; runs in
/// parallel when the `parallel` feature is on.
pub(crate) fn map_chunks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!("{} values do not split into {dim}-vectors", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Coordinate-wise sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for p in self.iter() {
            acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
        }
        acc.iter_mut().for_each(|a| *a /= self.len() as f64);
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMethod {
    /// Quadrature for dimension ≤ 3 when a density exists, Monte Carlo
    /// otherwise.
    #[default]
    Auto,
    MonteCarlo,
    Quadrature,
}

/// How much work an estimate may spend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub samples: usize,
    pub seed: u64,
    /// Total nodes of a tensor quadrature grid (split evenly across axes).
    pub quadrature_points: usize,
    pub method: EstimationMethod,
}

impl Default for Budget {
    fn default() -> Self {
        Self { samples: 1_000_000, seed: 42, quadrature_points: 160_000, method: EstimationMethod::Auto }
    }
}

impl Budget {
    pub fn with_samples(samples: usize, seed: u64) -> Self {
        Self { samples, seed, ..Self::default() }
    }
}

/// A value with its standard error. `stderr` is zero only for closed-form
/// or quadrature results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError<T> {
    pub value: T,
    pub stderr: f64,
    pub sample_count: usize,
}

impl EstimateWithError<f64> {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, sample_count: 0 }
    }

    /// |value − target| measured in standard errors; infinite when the
    /// estimate is exact and misses the target.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

/// Streaming mean/variance with order-stable merging.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> EstimateWithError<f64> {
        EstimateWithError { value: self.mean, stderr: self.stderr(), sample_count: self.n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_sample_mean() {
        let s = SourceModel::iid_uniform(2, 0.0, 1.0).unwrap().sample(1_000_000, 1).unwrap();
        let tol = 3.0 * (1.0 / 12f64.sqrt()) / 1e3;
        for m in s.mean() {
            assert!((m - 0.5).abs() < tol, "{m}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_stable() {
        let src = SourceModel::iid_gaussian(3, 0.0, 1.0).unwrap();
        let a = src.sample(20_000, 9).unwrap();
        let b = src.sample(20_000, 9).unwrap();
        assert_eq!(a, b);
        let c = src.sample(10_000, 9).unwrap();
        assert_eq!(c.as_flat(), &a.as_flat()[..30_000]);
        assert_ne!(src.sample(100, 10).unwrap().as_flat(), &a.as_flat()[..300]);
    }

    #[test]
    fn exponential_sample_mean() {
        let s = SourceModel::iid_exponential(1, 1.0).unwrap().sample(200_000, 3).unwrap();
        let mut m = Moments::default();
        s.iter().for_each(|p| m.push(p[0]));
        assert!(m.estimate().z_score(1.0) < 3.0);
    }

    #[test]
    fn correlated_gaussian_covariance() {
        let src = SourceModel::correlated_gaussian_2d([1.0, -1.0], [1.0, 2.0], 0.9).unwrap();
        let s = src.sample(400_000, 5).unwrap();
        let mean = s.mean();
        let cov = s.iter().map(|p| (p[0] - mean[0]) * (p[1] - mean[1])).sum::<f64>() / s.len() as f64;
        assert!((cov - 0.9).abs() < 0.02, "{cov}");
        assert!(SourceModel::correlated_gaussian_2d([0.0; 2], [1.0, 1.0], 1.5).is_err());
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut parts = Moments::default();
        for chunk in xs.chunks(77) {
            let mut m = Moments::default();
            chunk.iter().for_each(|&x| m.push(x));
            parts.merge(&m);
        }
        assert!((whole.mean() - parts.mean()).abs() < 1e-12);
        assert!((whole.variance() - parts.variance()).abs() < 1e-10);
    }

    #[test]
    fn source_round_trips_through_json() {
        let src = SourceModel::iid_laplace(3, 0.5, 2.0).unwrap();
        let json = serde_json::to_string(&src).unwrap();
        assert_eq!(serde_json::from_str::<SourceModel>(&json).unwrap(), src);
        let bad = r#"{"family":"iid-gaussian","mean":0,"variance":-1,"dim":2}"#;
        assert!(serde_json::from_str::<SourceModel>(bad).is_err());
    }
}
