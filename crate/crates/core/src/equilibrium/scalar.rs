use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ActionSet;
use crate::sources::{Marginal, SourceModel};

/// Bisection steps; enough to shrink any bracket to adjacent floats.
const BISECTION_STEPS: usize = 2000;
/// Largest admissible mismatch of the last centroid condition, relative to
/// the source scale.
const RESIDUAL_TOL: f64 = 1e-9;

/// A monotone scalar quantizer: bin `i` is `[l_{i−1}, l_i)` (outer bins
/// reach the ends of the support) and is decoded to `actions[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarQuantizer {
    pub boundaries: Vec<f64>,
    pub actions: Vec<f64>,
    /// Encoder bias the boundaries were built for.
    pub bias: f64,
}

impl ScalarQuantizer {
    /// The uninformative quantizer that always decodes to `action`.
    pub fn single(action: f64, bias: f64) -> Self {
        Self { boundaries: Vec::new(), actions: vec![action], bias }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Bin index of `x`; a point on a boundary goes to the lower bin.
    pub fn encode(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&l| l < x)
    }

    pub fn action_set(&self) -> ActionSet {
        ActionSet::from_scalars(&self.actions).expect("quantizer actions are finite and non-empty")
    }

    /// Bin widths, with the outer bins cut at `support`.
    pub fn bin_lengths(&self, support: (f64, f64)) -> Vec<f64> {
        let mut edges = vec![support.0];
        edges.extend_from_slice(&self.boundaries);
        edges.push(support.1);
        edges.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

enum Shot {
    /// The shooting parameter must move right.
    TooSmall,
    /// The shooting parameter must move left.
    TooLarge,
    Landed(ScalarQuantizer, f64),
}

/// Builds the quantizer forced by a first boundary `l1`: each further
/// action follows from `l_i = (u_i + u_{i+1})/2 + β` and each further
/// boundary from the centroid condition of the next bin. The returned
/// residual is `u_K − E[X | X ≥ l_{K−1}]`.
fn shoot(law: &Marginal, beta: f64, k: usize, l1: f64) -> Shot {
    let (lo, hi) = law.reach();
    let (mass, u1) = law.interval_stats(lo, l1);
    if !(mass > 0.0) {
        return Shot::TooSmall;
    }
    let mut boundaries = vec![l1];
    let mut actions = vec![u1];
    for i in 1..k {
        let l = boundaries[i - 1];
        let u_next = 2.0 * (l - beta) - actions[i - 1];
        if u_next <= l {
            return Shot::TooSmall;
        }
        let (tail_mass, tail_mean) = law.interval_stats(l, hi);
        if !(tail_mass > 0.0) {
            return Shot::TooLarge;
        }
        if i == k - 1 {
            actions.push(u_next);
            let residual = u_next - tail_mean;
            return Shot::Landed(ScalarQuantizer { boundaries, actions, bias: beta }, residual);
        }
        if u_next >= tail_mean {
            return Shot::TooLarge;
        }
        // E[X | l ≤ X ≤ x] increases from l to tail_mean as x runs over (l, hi).
        let (mut a, mut b) = (l, hi);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let (_, cm) = law.interval_stats(l, mid);
            if cm.is_nan() || cm < u_next {
                a = mid;
            } else {
                b = mid;
            }
        }
        boundaries.push(0.5 * (a + b));
        actions.push(u_next);
    }
    unreachable!("k ≥ 2 always lands on the last bin")
}

/// Builds the quantizer forced by a last boundary `last`, working down from
/// the top bin. The returned residual is `u_1 − E[X | X < l_1]`.
fn shoot_down(law: &Marginal, beta: f64, k: usize, last: f64) -> Shot {
    let (lo, hi) = law.reach();
    let (mass, top) = law.interval_stats(last, hi);
    if !(mass > 0.0) {
        return Shot::TooLarge;
    }
    let mut boundaries = vec![last];
    let mut actions = vec![top];
    for _ in 1..k {
        let l = *boundaries.last().unwrap();
        let u = 2.0 * (l - beta) - actions.last().unwrap();
        if u >= l {
            return Shot::TooLarge;
        }
        let (below_mass, below_mean) = law.interval_stats(lo, l);
        if !(below_mass > 0.0) {
            return Shot::TooSmall;
        }
        actions.push(u);
        if boundaries.len() == k - 1 {
            boundaries.reverse();
            actions.reverse();
            return Shot::Landed(ScalarQuantizer { boundaries, actions, bias: beta }, u - below_mean);
        }
        if u <= below_mean {
            return Shot::TooSmall;
        }
        // E[X | x ≤ X < l] increases from below_mean to l as x runs over (lo, l).
        let (mut a, mut b) = (lo, l);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let (_, cm) = law.interval_stats(mid, l);
            if cm.is_nan() || cm > u {
                b = mid;
            } else {
                a = mid;
            }
        }
        boundaries.push(0.5 * (a + b));
    }
    unreachable!("k ≥ 2 always lands on the first bin")
}

/// The `k`-bin equilibrium of the scalar game with encoder cost
/// `(x − y − β)²` and decoder cost `(x − y)²`, found by bisection on the
/// boundary at the light end: the last one for `β ≥ 0`, where the upper
/// bins can carry masses far below double precision, else the first.
pub fn scalar_equilibrium(law: &Marginal, beta: f64, k: usize) -> Result<ScalarQuantizer> {
    law.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter("bin count must be at least 1".into()));
    }
    if !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("bias {beta} is not finite")));
    }
    if k == 1 {
        return Ok(ScalarQuantizer::single(law.mean(), beta));
    }
    match try_scalar_equilibrium(law, beta, k) {
        Some(q) => Ok(q),
        None => {
            let max_feasible = (1..k).rev().find(|&j| j == 1 || try_scalar_equilibrium(law, beta, j).is_some());
            Err(Error::Infeasible { requested: k, max_feasible: max_feasible.unwrap_or(1) })
        }
    }
}

/// Shoots from one end of the support for a given first (or last) boundary.
type Shooter = fn(&Marginal, f64, usize, f64) -> Shot;

fn try_scalar_equilibrium(law: &Marginal, beta: f64, k: usize) -> Option<ScalarQuantizer> {
    let shooters: [Shooter; 2] =
        if beta >= 0.0 { [shoot_down, shoot] } else { [shoot, shoot_down] };
    shooters.into_iter().find_map(|f| bisect(law, beta, k, f))
}

fn bisect(law: &Marginal, beta: f64, k: usize, shoot: Shooter) -> Option<ScalarQuantizer> {
    let (mut a, mut b) = law.reach();
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        match shoot(law, beta, k, mid) {
            Shot::TooSmall => a = mid,
            Shot::TooLarge => b = mid,
            Shot::Landed(_, r) if r < 0.0 => a = mid,
            Shot::Landed(_, r) if r > 0.0 => b = mid,
            Shot::Landed(q, _) => return Some(q),
        }
    }
    let scale = law.variance().sqrt().max(1.0);
    [a, b, 0.5 * (a + b)].into_iter().find_map(|l1| match shoot(law, beta, k, l1) {
        Shot::Landed(q, r) if r.abs() <= RESIDUAL_TOL * scale => Some(q),
        _ => None,
    })
}

/// [`scalar_equilibrium`] for a one-dimensional source model.
pub fn solve_scalar_biased(source: &SourceModel, beta: f64, k: usize) -> Result<ScalarQuantizer> {
    if source.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: source.dim() });
    }
    scalar_equilibrium(&source.marginal(0), beta, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_two_level_lloyd_max() {
        let law = Marginal::Gaussian { mean: 0.0, sd: 1.0 };
        let q = scalar_equilibrium(&law, 0.0, 2).unwrap();
        let a = (2.0 / std::f64::consts::PI).sqrt();
        assert!(q.boundaries[0].abs() < 1e-12);
        assert!((q.actions[0] + a).abs() < 1e-12 && (q.actions[1] - a).abs() < 1e-12);
    }

    #[test]
    fn single_bin_is_the_mean() {
        let law = Marginal::Exponential { rate: 4.0 };
        let q = scalar_equilibrium(&law, 0.3, 1).unwrap();
        assert_eq!(q.actions, vec![0.25]);
        assert!(q.boundaries.is_empty());
    }

    #[test]
    fn uniform_recursion() {
        let law = Marginal::Uniform { lo: 0.0, hi: 1.0 };
        let q = scalar_equilibrium(&law, 0.05, 3).unwrap();
        assert!((q.boundaries[0] - 8.0 / 15.0).abs() < 1e-12);
        assert!((q.boundaries[1] - 13.0 / 15.0).abs() < 1e-12);
        assert_eq!(
            scalar_equilibrium(&law, 0.05, 4),
            Err(Error::Infeasible { requested: 4, max_feasible: 3 })
        );
    }

    #[test]
    fn boundary_rule_and_centroids_hold_in_the_gaussian_tail() {
        let law = Marginal::Gaussian { mean: 0.0, sd: 1.0 };
        let beta = std::f64::consts::SQRT_2;
        for k in 2..=4 {
            let q = scalar_equilibrium(&law, beta, k).unwrap();
            for (i, l) in q.boundaries.iter().enumerate() {
                let rule = 0.5 * (q.actions[i] + q.actions[i + 1]) + beta;
                assert!((l - rule).abs() < 1e-9, "k={k}: {l} vs {rule}");
            }
            let mut edges = vec![f64::NEG_INFINITY];
            edges.extend_from_slice(&q.boundaries);
            edges.push(f64::INFINITY);
            for (i, u) in q.actions.iter().enumerate() {
                let (_, cm) = law.interval_stats(edges[i], edges[i + 1]);
                assert!((cm - u).abs() < 1e-8, "k={k} bin {i}: {cm} vs {u}");
            }
        }
    }

    #[test]
    fn encode_uses_lower_bin_on_ties() {
        let q = ScalarQuantizer { boundaries: vec![0.0, 1.0], actions: vec![-1.0, 0.5, 2.0], bias: 0.0 };
        assert_eq!(q.encode(-0.1), 0);
        assert_eq!(q.encode(0.0), 0);
        assert_eq!(q.encode(0.5), 1);
        assert_eq!(q.encode(7.0), 2);
    }
}
