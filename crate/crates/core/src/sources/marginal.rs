use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian tails are cut here when a finite bracket is needed; `erfc`
/// underflows a little beyond 37 standard deviations.
const GAUSSIAN_REACH: f64 = 37.0;
/// Exponential-type tails are cut at `exp(-700)`.
const EXP_REACH: f64 = 700.0;

/// A one-dimensional probability law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Marginal {
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Laplace { mean: f64, scale: f64 },
    Tabulated(PiecewiseConstant),
}

/// A density that is constant on each cell of a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPiecewise", into = "RawPiecewise")]
pub struct PiecewiseConstant {
    start: f64,
    width: f64,
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPiecewise {
    start: f64,
    width: f64,
    density: Vec<f64>,
}

impl TryFrom<RawPiecewise> for PiecewiseConstant {
    type Error = Error;
    fn try_from(raw: RawPiecewise) -> Result<Self> {
        PiecewiseConstant::new(raw.start, raw.width, raw.density)
    }
}

impl From<PiecewiseConstant> for RawPiecewise {
    fn from(p: PiecewiseConstant) -> Self {
        RawPiecewise { start: p.start, width: p.width, density: p.density }
    }
}

impl PiecewiseConstant {
    /// `start` is the left edge of the first cell; every cell has width
    /// `width`. The density must integrate to 1 within 1e-6.
    pub fn new(start: f64, width: f64, density: Vec<f64>) -> Result<Self> {
        if !start.is_finite() || !(width > 0.0) || !width.is_finite() {
            return Err(Error::Table(format!("bad grid: start {start}, width {width}")));
        }
        if density.is_empty() {
            return Err(Error::Table("no cells".into()));
        }
        if let Some(d) = density.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::Table(format!("density value {d} is negative or non-finite")));
        }
        let mut cumulative = Vec::with_capacity(density.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for d in &density {
            acc += d * width;
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > 1e-6 {
            return Err(Error::Table(format!("density integrates to {acc}, not 1")));
        }
        // Absorb the residual normalization error so the cdf ends at exactly 1.
        for c in cumulative.iter_mut() {
            *c /= acc;
        }
        let density = density.into_iter().map(|d| d / acc).collect();
        Ok(Self { start, width, density, cumulative })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn end(&self) -> f64 {
        self.start + self.width * self.density.len() as f64
    }

    fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.start || x >= self.end() {
            return None;
        }
        let i = ((x - self.start) / self.width) as usize;
        Some(i.min(self.density.len() - 1))
    }

    fn pdf(&self, x: f64) -> f64 {
        self.cell_of(x).map_or(0.0, |i| self.density[i])
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.start {
            return 0.0;
        }
        match self.cell_of(x) {
            None => 1.0,
            Some(i) => {
                let left = self.start + i as f64 * self.width;
                self.cumulative[i] + self.density[i] * (x - left)
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        let n = self.density.len();
        // First cell whose upper cumulative bound reaches p.
        let i = self.cumulative[1..].partition_point(|&c| c < p).min(n - 1);
        let left = self.start + i as f64 * self.width;
        if self.density[i] == 0.0 {
            return left;
        }
        (left + (p - self.cumulative[i]) / self.density[i]).clamp(left, left + self.width)
    }

    /// Mass and first moment of `[a, b]`, summed cell by cell.
    fn partial_moments(&self, a: f64, b: f64) -> (f64, f64) {
        let a = a.max(self.start);
        let b = b.min(self.end());
        if b <= a {
            return (0.0, 0.0);
        }
        let first = ((a - self.start) / self.width) as usize;
        let last = (((b - self.start) / self.width) as usize).min(self.density.len() - 1);
        let (mut mass, mut moment) = (0.0, 0.0);
        for i in first..=last {
            let left = (self.start + i as f64 * self.width).max(a);
            let right = (self.start + (i + 1) as f64 * self.width).min(b);
            if right > left {
                let d = self.density[i];
                mass += d * (right - left);
                moment += d * (right * right - left * left) / 2.0;
            }
        }
        (mass, moment)
    }

    fn mean(&self) -> f64 {
        self.partial_moments(self.start, self.end()).1
    }

    fn second_moment(&self) -> f64 {
        self.density
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let l = self.start + i as f64 * self.width;
                let r = l + self.width;
                d * (r.powi(3) - l.powi(3)) / 3.0
            })
            .sum()
    }
}

/// Standard normal survival function `P(Z > z)`.
pub(crate) fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

pub(crate) fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut z = -SQRT_2 * erfc_inv(2.0 * p);
    // Newton polish; the residual is Φ(z) − p evaluated on the nearer tail.
    for _ in 0..2 {
        let resid = if z > 0.0 { (1.0 - p) - normal_sf(z) } else { normal_cdf(z) - p };
        let step = resid / normal_pdf(z);
        if !step.is_finite() {
            break;
        }
        z -= step;
    }
    z
}

/// `P(α ≤ Z ≤ β)` for a standard normal, evaluated on the tail nearest to
/// the interval to avoid cancellation.
fn normal_interval_mass(alpha: f64, beta: f64) -> f64 {
    if alpha >= 0.0 {
        normal_sf(alpha) - normal_sf(beta)
    } else if beta <= 0.0 {
        normal_sf(-beta) - normal_sf(-alpha)
    } else {
        1.0 - normal_sf(beta) - normal_sf(-alpha)
    }
}

/// Mean of an exponential(rate) law conditioned on `[0, w]` (w may be ∞).
fn exp_truncated_mean(rate: f64, w: f64) -> f64 {
    if w.is_infinite() {
        return 1.0 / rate;
    }
    let lw = rate * w;
    if lw < 1e-8 {
        return w / 2.0;
    }
    1.0 / rate - w / lw.exp_m1()
}

/// `1 − e^{−rate·w}`, w may be ∞.
fn exp_mass(rate: f64, w: f64) -> f64 {
    if w.is_infinite() {
        1.0
    } else {
        -(-rate * w).exp_m1()
    }
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Marginal::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && hi > lo,
            Marginal::Exponential { rate } => rate.is_finite() && rate > 0.0,
            Marginal::Laplace { mean, scale } => mean.is_finite() && scale.is_finite() && scale > 0.0,
            Marginal::Tabulated(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid marginal parameters: {self:?}")))
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Gaussian { mean, sd } => normal_pdf((x - mean) / sd) / sd,
            Marginal::Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Marginal::Exponential { rate } => {
                if x >= 0.0 {
                    rate * (-rate * x).exp()
                } else {
                    0.0
                }
            }
            Marginal::Laplace { mean, scale } => (-(x - mean).abs() / scale).exp() / (2.0 * scale),
            Marginal::Tabulated(t) => t.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Gaussian { mean, sd } => normal_cdf((x - mean) / sd),
            Marginal::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Marginal::Laplace { mean, scale } => {
                let z = (x - mean) / scale;
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            Marginal::Tabulated(t) => t.cdf(x),
        }
    }

    /// Inverse cdf for `p ∈ (0, 1)`; the endpoints map to the support ends.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            Marginal::Gaussian { mean, sd } => mean + sd * normal_quantile(p),
            Marginal::Uniform { lo, hi } => lo + p * (hi - lo),
            Marginal::Exponential { rate } => -(-p).ln_1p() / rate,
            Marginal::Laplace { mean, scale } => {
                if p < 0.5 {
                    mean + scale * (2.0 * p).ln()
                } else {
                    mean - scale * (2.0 * (1.0 - p)).ln()
                }
            }
            Marginal::Tabulated(t) => t.quantile(p),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Marginal::Gaussian { mean, .. } | Marginal::Laplace { mean, .. } => *mean,
            Marginal::Uniform { lo, hi } => (lo + hi) / 2.0,
            Marginal::Exponential { rate } => 1.0 / rate,
            Marginal::Tabulated(t) => t.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Marginal::Gaussian { sd, .. } => sd * sd,
            Marginal::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Marginal::Exponential { rate } => 1.0 / (rate * rate),
            Marginal::Laplace { scale, .. } => 2.0 * scale * scale,
            Marginal::Tabulated(t) => t.second_moment() - t.mean().powi(2),
        }
    }

    /// The exact support; may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Marginal::Gaussian { .. } | Marginal::Laplace { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Marginal::Uniform { lo, hi } => (*lo, *hi),
            Marginal::Exponential { .. } => (0.0, f64::INFINITY),
            Marginal::Tabulated(t) => (t.start(), t.end()),
        }
    }

    /// The support with infinite ends replaced by the `epsilon` and
    /// `1 − epsilon` quantiles.
    pub fn truncated_support(&self, epsilon: f64) -> (f64, f64) {
        let (lo, hi) = self.support();
        let lo = if lo.is_finite() { lo } else { self.quantile(epsilon) };
        let hi = if hi.is_finite() { hi } else { self.quantile(1.0 - epsilon) };
        (lo, hi)
    }

    /// A finite bracket holding all but a negligible (< 1e-300) fraction of
    /// the mass, for root finding.
    pub(crate) fn reach(&self) -> (f64, f64) {
        match self {
            Marginal::Gaussian { mean, sd } => (mean - GAUSSIAN_REACH * sd, mean + GAUSSIAN_REACH * sd),
            Marginal::Exponential { rate } => (0.0, EXP_REACH / rate),
            Marginal::Laplace { mean, scale } => (mean - EXP_REACH * scale, mean + EXP_REACH * scale),
            _ => self.support(),
        }
    }

    /// Mass of `[a, b]` and the conditional mean over it. The mean is NaN
    /// when the interval carries no mass.
    pub fn interval_stats(&self, a: f64, b: f64) -> (f64, f64) {
        let (lo, hi) = self.support();
        let a = a.max(lo);
        let b = b.min(hi);
        if !(b > a) {
            return (0.0, f64::NAN);
        }
        match self {
            Marginal::Gaussian { mean, sd } => {
                let (alpha, beta) = ((a - mean) / sd, (b - mean) / sd);
                let mass = normal_interval_mass(alpha, beta);
                if beta - alpha < 1e-7 {
                    return (mass, (a + b) / 2.0);
                }
                if mass <= 0.0 {
                    // Far tail: the law concentrates at the end nearest the mean.
                    let edge = if alpha >= 0.0 { a } else { b };
                    return (0.0, edge);
                }
                let cm = mean + sd * (normal_pdf(alpha) - normal_pdf(beta)) / mass;
                (mass, cm.clamp(a, b))
            }
            Marginal::Uniform { lo, hi } => ((b - a) / (hi - lo), (a + b) / 2.0),
            Marginal::Exponential { rate } => {
                let mass = (-rate * a).exp() * exp_mass(*rate, b - a);
                (mass, a + exp_truncated_mean(*rate, b - a))
            }
            Marginal::Laplace { mean, scale } => {
                let rate = 1.0 / scale;
                let (mut mass, mut moment) = (0.0, 0.0);
                if b > *mean {
                    let l = a.max(*mean);
                    let m = 0.5 * (-rate * (l - mean)).exp() * exp_mass(rate, b - l);
                    mass += m;
                    moment += m * (l + exp_truncated_mean(rate, b - l));
                }
                if a < *mean {
                    let r = b.min(*mean);
                    let m = 0.5 * (-rate * (mean - r)).exp() * exp_mass(rate, r - a);
                    mass += m;
                    moment += m * (r - exp_truncated_mean(rate, r - a));
                }
                if mass > 0.0 {
                    (mass, (moment / mass).clamp(a, b))
                } else {
                    (0.0, if a >= *mean { a } else { b })
                }
            }
            Marginal::Tabulated(t) => {
                let (mass, moment) = t.partial_moments(a, b);
                if mass > 0.0 {
                    (mass, (moment / mass).clamp(a, b))
                } else {
                    (0.0, f64::NAN)
                }
            }
        }
    }

    /// `Some(true)`/`Some(false)` when the family is known to be symmetric
    /// about its mean or not; `None` when only a numerical test can tell.
    pub fn exact_symmetry(&self) -> Option<bool> {
        match self {
            Marginal::Gaussian { .. } | Marginal::Uniform { .. } | Marginal::Laplace { .. } => Some(true),
            Marginal::Exponential { .. } => Some(false),
            Marginal::Tabulated(_) => None,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Marginal::Gaussian { .. })
    }

    /// Density averaged over `[x − half_width, x + half_width]`.
    pub(crate) fn window_density(&self, x: f64, half_width: f64) -> f64 {
        if half_width <= 0.0 {
            return self.pdf(x);
        }
        self.interval_stats(x - half_width, x + half_width).0 / (2.0 * half_width)
    }

    /// Largest density value; for tabulated densities the largest cell.
    pub fn peak_density(&self) -> f64 {
        match self {
            Marginal::Gaussian { mean, .. } | Marginal::Laplace { mean, .. } => self.pdf(*mean),
            Marginal::Uniform { lo, hi } => 1.0 / (hi - lo),
            Marginal::Exponential { rate } => *rate,
            Marginal::Tabulated(t) => t.density().iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Marginal::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Marginal::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Marginal::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            Marginal::Laplace { mean, scale } => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    mean + scale * e
                } else {
                    mean - scale * e
                }
            }
            Marginal::Tabulated(t) => t.quantile(rng.random::<f64>()),
        }
    }
}
