use serde::{Deserialize, Serialize};

use super::policy::{CoordinatePolicy, EncoderPolicy};
use crate::error::{Error, Result};
use crate::geometry::{dot, encoder_cost_unchecked, geo_slack_unchecked};
use crate::sources::{map_chunks, Budget, EstimateWithError, Moments, Samples, SourceModel, SAMPLE_CHUNK};

/// Smallest sample budget verification accepts.
pub const MIN_VERIFY_SAMPLES: usize = 1000;
/// Pairwise geometric slack may dip this far below zero.
pub const GEO_SLACK_TOL: f64 = 1e-6;
/// Pass threshold for centroid residuals and deviation gains, in standard errors.
pub const STDERR_MULTIPLIER: f64 = 3.0;
/// Samples whose decoded actions seed the sampled pair check of linear policies.
const PAIR_SEEDS: usize = 128;
/// Relative tolerance for bins checked in closed form.
const ANALYTIC_TOL: f64 = 1e-6;
/// Floating-point allowance on the deviation gain, relative to the cost scale.
const DEVIATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distortions {
    pub je: EstimateWithError<f64>,
    pub jd: EstimateWithError<f64>,
    /// Paired estimate of `Je − Jd = ‖b‖² − 2·E[(M − U)ᵀb]`.
    pub je_minus_jd: EstimateWithError<f64>,
}

/// Expected costs per source vector and per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub per_vector: Distortions,
    pub per_dimension: Distortions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCentroidCheck {
    pub index: usize,
    pub samples: usize,
    /// Estimated probability of the bin.
    pub mass: f64,
    /// `‖E[M − U | bin]‖`.
    pub residual: f64,
    pub stderr: f64,
    /// Checked against the exact law of the last coordinate because too few
    /// samples landed in the bin.
    pub analytic: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckVerdicts {
    pub geo_slack: bool,
    pub centroid: bool,
    pub deviation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    pub policy_kind: String,
    /// Grid levels standing in for revealed coordinates, if any.
    pub grid_levels: Option<usize>,
    pub min_pairwise_geo_slack: f64,
    pub pairs_checked: usize,
    pub centroids: Vec<BinCentroidCheck>,
    pub max_centroid_residual: EstimateWithError<f64>,
    /// Mean of (assigned report's cost − best report's cost); zero at an
    /// equilibrium.
    pub encoder_deviation_gain: EstimateWithError<f64>,
    pub distortions: DistortionReport,
    pub checks: CheckVerdicts,
    pub passed: bool,
}

#[derive(Clone)]
struct Accumulator {
    /// Per group, per dimension: moments of `m − u`.
    residual: Vec<Vec<Moments>>,
    je: Moments,
    jd: Moments,
    gap: Moments,
    gain: Moments,
}

impl Accumulator {
    fn new(groups: usize, dim: usize) -> Self {
        Self {
            residual: vec![vec![Moments::default(); dim]; groups],
            je: Moments::default(),
            jd: Moments::default(),
            gap: Moments::default(),
            gain: Moments::default(),
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.residual.iter_mut().zip(&other.residual) {
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        }
        self.je.merge(&other.je);
        self.jd.merge(&other.jd);
        self.gap.merge(&other.gap);
        self.gain.merge(&other.gain);
    }
}

/// Streams `budget.samples` source draws chunk by chunk, so memory stays
/// flat in the sample count.
fn accumulate(policy: &EncoderPolicy, source: &SourceModel, b: &[f64], budget: &Budget) -> Accumulator {
    let n = source.dim();
    let groups = policy.group_count();
    let parts = map_chunks(budget.samples.div_ceil(SAMPLE_CHUNK), |c| {
        let mut acc = Accumulator::new(groups, n);
        for m in source.sample_chunk(budget.samples, budget.seed, c).chunks_exact(n) {
            let message = policy.encode(m, b);
            let u = policy.decode(&message);
            let g = policy.group(&message);
            for (j, moments) in acc.residual[g].iter_mut().enumerate() {
                moments.push(m[j] - u[j]);
            }
            let e = encoder_cost_unchecked(m, &u, b);
            let diff: Vec<f64> = m.iter().zip(&u).map(|(a, c)| a - c).collect();
            let d = dot(&diff, &diff);
            acc.je.push(e);
            acc.jd.push(d);
            acc.gap.push(dot(b, b) - 2.0 * dot(&diff, b));
            let reply = policy.best_reply(m, b);
            let gain = if reply == message { 0.0 } else { e - policy.encoder_cost(m, b, &reply) };
            acc.gain.push(gain);
        }
        acc
    });
    let mut total = Accumulator::new(groups, n);
    parts.iter().for_each(|p| total.merge(p));
    total
}

fn distortion_report(acc: &Accumulator, n: usize) -> DistortionReport {
    let per_vector = Distortions { je: acc.je.estimate(), jd: acc.jd.estimate(), je_minus_jd: acc.gap.estimate() };
    let scale = |e: &EstimateWithError<f64>| EstimateWithError {
        value: e.value / n as f64,
        stderr: e.stderr / n as f64,
        sample_count: e.sample_count,
    };
    let per_dimension = Distortions {
        je: scale(&per_vector.je),
        jd: scale(&per_vector.jd),
        je_minus_jd: scale(&per_vector.je_minus_jd),
    };
    DistortionReport { per_vector, per_dimension }
}

fn check_inputs(policy: &EncoderPolicy, source: &SourceModel, b: &[f64], budget: &Budget) -> Result<()> {
    if policy.dim() != source.dim() {
        return Err(Error::DimensionMismatch { expected: source.dim(), found: policy.dim() });
    }
    if b.len() != source.dim() {
        return Err(Error::DimensionMismatch { expected: source.dim(), found: b.len() });
    }
    if budget.samples < MIN_VERIFY_SAMPLES {
        return Err(Error::BudgetTooSmall(format!(
            "verification needs at least {MIN_VERIFY_SAMPLES} samples, got {}",
            budget.samples
        )));
    }
    Ok(())
}

/// Monte Carlo estimates of the encoder and decoder costs.
pub fn expected_distortions(
    policy: &EncoderPolicy,
    source: &SourceModel,
    b: &[f64],
    budget: &Budget,
) -> Result<DistortionReport> {
    check_inputs(policy, source, b, budget)?;
    Ok(distortion_report(&accumulate(policy, source, b, budget), source.dim()))
}

/// Action pairs whose geometric slack is checked: every pair of a finite
/// action set, or for linear policies the decoded actions of a few samples
/// combined with every action of the last coordinate.
fn candidate_actions(policy: &EncoderPolicy, samples: &Samples, b: &[f64]) -> Vec<Vec<f64>> {
    match policy {
        EncoderPolicy::Quantizer { actions } => actions.to_vecs(),
        EncoderPolicy::Linear(p) => {
            let last = p.dim() - 1;
            let mut out = Vec::new();
            for i in 0..samples.len() {
                let mut message = policy.encode(samples.point(i), b);
                for k in 0..p.last().message_count() {
                    message[last] = k;
                    out.push(policy.decode(&message));
                }
            }
            out
        }
    }
}

fn min_pairwise_slack(actions: &[Vec<f64>], b: &[f64]) -> (f64, usize) {
    let mut min = f64::INFINITY;
    let mut pairs = 0;
    for i in 0..actions.len() {
        for j in i + 1..actions.len() {
            if actions[i] == actions[j] {
                continue;
            }
            min = min.min(geo_slack_unchecked(&actions[i], &actions[j], b));
            pairs += 1;
        }
    }
    (min, pairs)
}

/// Closed-form check of bin `g` of the last coordinate.
fn analytic_check(policy: &EncoderPolicy, g: usize, scale: f64) -> Option<BinCentroidCheck> {
    let EncoderPolicy::Linear(p) = policy else { return None };
    let (law, CoordinatePolicy::Quantized(q)) = (p.last_law.as_ref()?, p.last()) else { return None };
    let lo = if g == 0 { f64::NEG_INFINITY } else { q.boundaries[g - 1] };
    let hi = q.boundaries.get(g).copied().unwrap_or(f64::INFINITY);
    let (mass, mean) = law.interval_stats(lo, hi);
    let residual = (q.actions[g] - mean).abs();
    Some(BinCentroidCheck {
        index: g,
        samples: 0,
        mass,
        residual,
        stderr: 0.0,
        analytic: true,
        passed: mass > 0.0 && residual <= ANALYTIC_TOL * scale,
    })
}

fn centroid_checks(policy: &EncoderPolicy, acc: &Accumulator, total: usize, scale: f64) -> Vec<BinCentroidCheck> {
    acc.residual
        .iter()
        .enumerate()
        .map(|(g, dims)| {
            let count = dims[0].n;
            if count < 2 {
                return analytic_check(policy, g, scale).unwrap_or(BinCentroidCheck {
                    index: g,
                    samples: count,
                    mass: count as f64 / total as f64,
                    residual: f64::NAN,
                    stderr: f64::NAN,
                    analytic: false,
                    passed: false,
                });
            }
            let residual = dims.iter().map(|m| m.mean() * m.mean()).sum::<f64>().sqrt();
            let stderr = dims.iter().map(|m| m.variance() / m.n as f64).sum::<f64>().sqrt();
            BinCentroidCheck {
                index: g,
                samples: count,
                mass: count as f64 / total as f64,
                residual,
                stderr,
                analytic: false,
                passed: residual <= STDERR_MULTIPLIER * stderr,
            }
        })
        .collect()
}

/// Checks a policy against the equilibrium conditions: pairwise geometric
/// slack, decoder centroid conditions, and the absence of a profitable
/// encoder deviation, all estimated from `budget.samples` source draws.
pub fn verify_equilibrium(
    policy: &EncoderPolicy,
    source: &SourceModel,
    b: &[f64],
    budget: &Budget,
) -> Result<EquilibriumCertificate> {
    check_inputs(policy, source, b, budget)?;
    let acc = accumulate(policy, source, b, budget);
    let seeds = source.sample(PAIR_SEEDS.min(budget.samples), budget.seed)?;
    let scale = source.total_variance().sqrt().max(1.0);

    let (min_slack, pairs) = min_pairwise_slack(&candidate_actions(policy, &seeds, b), b);
    let min_slack = if pairs == 0 { 0.0 } else { min_slack };
    let centroids = centroid_checks(policy, &acc, budget.samples, scale);
    let worst = centroids
        .iter()
        .filter(|c| !c.analytic)
        .max_by(|a, b| a.residual.total_cmp(&b.residual))
        .map(|c| EstimateWithError { value: c.residual, stderr: c.stderr, sample_count: c.samples })
        .unwrap_or(EstimateWithError::exact(0.0));
    let gain = acc.gain.estimate();
    let cost_scale = 1.0 + dot(b, b) + source.total_variance();

    let checks = CheckVerdicts {
        geo_slack: min_slack >= -GEO_SLACK_TOL,
        centroid: centroids.iter().all(|c| c.passed),
        deviation: gain.value <= STDERR_MULTIPLIER * gain.stderr + DEVIATION_TOL * cost_scale,
    };
    Ok(EquilibriumCertificate {
        policy_kind: policy.kind().to_string(),
        grid_levels: match policy {
            EncoderPolicy::Linear(p) => p.grid_levels(),
            EncoderPolicy::Quantizer { .. } => None,
        },
        min_pairwise_geo_slack: min_slack,
        pairs_checked: pairs,
        centroids,
        max_centroid_residual: worst,
        encoder_deviation_gain: gain,
        distortions: distortion_report(&acc, source.dim()),
        passed: checks.geo_slack && checks.centroid && checks.deviation,
        checks,
    })
}
