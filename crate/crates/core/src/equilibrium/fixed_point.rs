use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{assign_unchecked, dot, ActionSet};
use crate::sources::{map_chunks, substream, Budget, Marginal, SourceModel, WeightedCloud, SAMPLE_CHUNK};

/// Bins lighter than this are considered dead.
pub const MIN_BIN_MASS: f64 = 1e-12;
const CYCLE_WINDOW: usize = 8;
const CYCLE_DAMPING: f64 = 0.5;
const MAX_RESTARTS: usize = 3;
/// Restart jitter, in standard deviations of each coordinate.
const JITTER_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Centroids of equal-probability slabs ordered along the bias.
    #[default]
    BiasQuantiles,
    /// Seeded random draws from the source.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once no action coordinate moves by this much.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step toward the new centroids, in (0, 1].
    pub damping: f64,
    pub budget: Budget,
    pub init: InitScheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 1000, damping: 1.0, budget: Budget::default(), init: InitScheme::default() }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Sup-norm distance between consecutive action sets.
    pub movement: f64,
    pub damping: f64,
}

/// A candidate equilibrium; it still has to pass verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOutcome {
    pub actions: ActionSet,
    pub status: ConvergenceStatus,
    pub iterations: usize,
    pub restarts: usize,
    pub trace: Vec<IterationRecord>,
}

/// What a best-response sweep integrates against.
pub(crate) enum Law {
    /// One dimension: bins are intervals, handled in closed form.
    Line(Marginal),
    Cloud(WeightedCloud),
}

impl Law {
    pub(crate) fn new(source: &SourceModel, budget: &Budget) -> Result<Self> {
        if source.dim() == 1 {
            Ok(Law::Line(source.marginal(0)))
        } else {
            Ok(Law::Cloud(WeightedCloud::for_source(source, budget)?))
        }
    }

    /// Bin masses and centroids induced by the encoder's best response to
    /// `actions`.
    fn bins(&self, actions: &ActionSet, b: &[f64]) -> Vec<(f64, Vec<f64>)> {
        match self {
            Law::Line(law) => line_bins(law, actions, b[0]),
            Law::Cloud(cloud) => cloud_bins(cloud, actions, b),
        }
    }
}

fn line_bins(law: &Marginal, actions: &ActionSet, b: f64) -> Vec<(f64, Vec<f64>)> {
    let k = actions.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| actions.get(i)[0].total_cmp(&actions.get(j)[0]));
    let mut out = vec![(0.0, vec![f64::NAN]); k];
    for (rank, &i) in order.iter().enumerate() {
        let u = actions.get(i)[0];
        // The encoder reports the action nearest to m − b.
        let lo = if rank == 0 { f64::NEG_INFINITY } else { 0.5 * (actions.get(order[rank - 1])[0] + u) + b };
        let hi = if rank + 1 == k { f64::INFINITY } else { 0.5 * (u + actions.get(order[rank + 1])[0]) + b };
        let (mass, mean) = law.interval_stats(lo, hi);
        out[i] = (mass, vec![mean]);
    }
    out
}

fn cloud_bins(cloud: &WeightedCloud, actions: &ActionSet, b: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let (k, n) = (actions.len(), cloud.dim());
    let parts = map_chunks(cloud.len().div_ceil(SAMPLE_CHUNK), |c| {
        let mut mass = vec![0.0; k];
        let mut sum = vec![0.0; k * n];
        for i in c * SAMPLE_CHUNK..((c + 1) * SAMPLE_CHUNK).min(cloud.len()) {
            let p = cloud.point(i);
            let w = cloud.weight(i);
            let j = assign_unchecked(p, actions, b);
            mass[j] += w;
            sum[j * n..(j + 1) * n].iter_mut().zip(p).for_each(|(s, x)| *s += w * x);
        }
        (mass, sum)
    });
    let mut mass = vec![0.0; k];
    let mut sum = vec![0.0; k * n];
    for (m, s) in &parts {
        mass.iter_mut().zip(m).for_each(|(a, b)| *a += b);
        sum.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    (0..k)
        .map(|j| (mass[j], sum[j * n..(j + 1) * n].iter().map(|s| s / mass[j]).collect()))
        .collect()
}

pub(crate) fn step_on(law: &Law, actions: &ActionSet, b: &[f64], damping: f64) -> Result<ActionSet> {
    let bins = law.bins(actions, b);
    let mut next = Vec::with_capacity(actions.len());
    for (i, (mass, centroid)) in bins.into_iter().enumerate() {
        if !(mass >= MIN_BIN_MASS) {
            return Err(Error::BinDeath { index: i, mass });
        }
        let u = actions.get(i);
        next.push(u.iter().zip(&centroid).map(|(a, c)| a + damping * (c - a)).collect());
    }
    ActionSet::new(next)
}

fn check_inputs(source: &SourceModel, b: &[f64], dim: usize) -> Result<()> {
    if b.len() != source.dim() {
        return Err(Error::DimensionMismatch { expected: source.dim(), found: b.len() });
    }
    if dim != source.dim() {
        return Err(Error::DimensionMismatch { expected: source.dim(), found: dim });
    }
    Ok(())
}

/// One simultaneous best-response sweep: the encoder assigns each source
/// point to its cheapest action, then every action moves to its bin's
/// conditional mean.
pub fn best_response_step(actions: &ActionSet, source: &SourceModel, b: &[f64], budget: &Budget) -> Result<ActionSet> {
    check_inputs(source, b, actions.dim())?;
    step_on(&Law::new(source, budget)?, actions, b, 1.0)
}

fn initial_actions(law: &Law, source: &SourceModel, b: &[f64], k: usize, config: &SolverConfig) -> Result<ActionSet> {
    match config.init {
        InitScheme::Random => ActionSet::new(source.sample(k, config.budget.seed)?.iter().map(<[f64]>::to_vec).collect()),
        InitScheme::BiasQuantiles => match law {
            Law::Line(m) => ActionSet::from_scalars(
                &(0..k)
                    .map(|i| m.interval_stats(m.quantile(i as f64 / k as f64), m.quantile((i + 1) as f64 / k as f64)).1)
                    .collect::<Vec<_>>(),
            ),
            Law::Cloud(cloud) => {
                let norm = dot(b, b).sqrt();
                let dir: Vec<f64> = if norm > 0.0 {
                    b.iter().map(|x| x / norm).collect()
                } else {
                    let mut e = vec![0.0; b.len()];
                    e[0] = 1.0;
                    e
                };
                let mut order: Vec<(f64, usize)> = (0..cloud.len()).map(|i| (dot(cloud.point(i), &dir), i)).collect();
                order.sort_by(|a, b| a.0.total_cmp(&b.0));
                let n = cloud.dim();
                let mut slabs = vec![(0.0, vec![0.0; n]); k];
                let mut acc = 0.0;
                for &(_, i) in &order {
                    let w = cloud.weight(i);
                    let slab = ((acc + 0.5 * w) * k as f64).floor().clamp(0.0, (k - 1) as f64) as usize;
                    acc += w;
                    slabs[slab].0 += w;
                    slabs[slab].1.iter_mut().zip(cloud.point(i)).for_each(|(s, x)| *s += w * x);
                }
                ActionSet::new(slabs.into_iter().map(|(w, s)| s.into_iter().map(|x| x / w).collect()).collect())
            }
        },
    }
}

fn jitter(actions: &ActionSet, source: &SourceModel, seed: u64, restart: usize) -> Result<ActionSet> {
    let mut rng = substream(seed ^ 0x6a09_e667_f3bc_c908, restart);
    let sd: Vec<f64> = (0..source.dim()).map(|i| source.marginal(i).variance().sqrt()).collect();
    ActionSet::new(
        actions
            .iter()
            .map(|u| {
                u.iter()
                    .zip(&sd)
                    .map(|(x, s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x + JITTER_SCALE * s * z
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Iterates [`best_response_step`] from the configured initialization until
/// the actions stop moving. A bin death restarts from a jittered
/// initialization, at most three times.
pub fn solve_fixed_point(source: &SourceModel, b: &[f64], k: usize, config: &SolverConfig) -> Result<FixedPointOutcome> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter("bin count must be at least 1".into()));
    }
    check_inputs(source, b, source.dim())?;
    let law = Law::new(source, &config.budget)?;
    let base = initial_actions(&law, source, b, k, config)?;
    let mut last_err = None;
    for restart in 0..=MAX_RESTARTS {
        let init = if restart == 0 { base.clone() } else { jitter(&base, source, config.budget.seed, restart)? };
        match iterate(&law, init, b, config) {
            Ok((actions, status, trace)) => {
                return Ok(FixedPointOutcome { actions, status, iterations: trace.len(), restarts: restart, trace });
            }
            Err(e @ Error::BinDeath { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt ran"))
}

type Iterated = (ActionSet, ConvergenceStatus, Vec<IterationRecord>);

fn iterate(law: &Law, init: ActionSet, b: &[f64], config: &SolverConfig) -> Result<Iterated> {
    let mut current = init;
    let mut damping = config.damping;
    let mut history: VecDeque<ActionSet> = VecDeque::with_capacity(CYCLE_WINDOW);
    let mut trace = Vec::new();
    for iteration in 1..=config.max_iterations {
        let next = step_on(law, &current, b, damping)?;
        let movement = current.sup_distance(&next);
        trace.push(IterationRecord { iteration, movement, damping });
        if movement < config.tolerance {
            return Ok((next, ConvergenceStatus::Converged, trace));
        }
        // Returning near an earlier iterate (other than the last one) means
        // the sweep is cycling; halve the step.
        let cycling = history.iter().rev().skip(1).any(|h| h.sup_distance(&next) < config.tolerance);
        if cycling && damping > CYCLE_DAMPING {
            damping = CYCLE_DAMPING;
        }
        if history.len() == CYCLE_WINDOW {
            history.pop_front();
        }
        history.push_back(current);
        current = next;
    }
    Ok((current, ConvergenceStatus::MaxIterations, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_action_goes_to_mean() {
        let src = SourceModel::iid_uniform(2, 0.0, 2.0).unwrap();
        let out = solve_fixed_point(&src, &[0.3, -0.2], 1, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, ConvergenceStatus::Converged);
        assert!(out.iterations <= 2);
        for x in out.actions.get(0) {
            assert!((x - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_lloyd_step_moves_toward_optimum() {
        let src = SourceModel::iid_gaussian(1, 0.0, 1.0).unwrap();
        let a = (2.0 / std::f64::consts::PI).sqrt();
        let start = ActionSet::from_scalars(&[-1.0, 1.0]).unwrap();
        let next = best_response_step(&start, &src, &[0.0], &Budget::default()).unwrap();
        assert!((next.get(0)[0] + a).abs() < 1e-12);
        assert!((next.get(1)[0] - a).abs() < 1e-12);
    }

    #[test]
    fn uniform_three_bins_match_recursion() {
        let src = SourceModel::iid_uniform(1, 0.0, 1.0).unwrap();
        let out = solve_fixed_point(&src, &[0.05], 3, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, ConvergenceStatus::Converged);
        let mut u: Vec<f64> = out.actions.iter().map(|a| a[0]).collect();
        u.sort_by(f64::total_cmp);
        let expected = [4.0 / 15.0, 0.7, 14.0 / 15.0];
        for (a, e) in u.iter().zip(expected) {
            assert!((a - e).abs() < 1e-6, "{a} vs {e}");
        }
    }

    #[test]
    fn uniform_four_bins_die() {
        let src = SourceModel::iid_uniform(1, 0.0, 1.0).unwrap();
        let err = solve_fixed_point(&src, &[0.05], 4, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::BinDeath { .. }), "{err:?}");
    }

    #[test]
    fn empty_bin_is_reported_with_its_index() {
        let src = SourceModel::iid_uniform(1, 0.0, 1.0).unwrap();
        let actions = ActionSet::from_scalars(&[0.5, 5.0]).unwrap();
        let err = best_response_step(&actions, &src, &[0.0], &Budget::default()).unwrap_err();
        assert!(matches!(err, Error::BinDeath { index: 1, .. }));
    }
}
