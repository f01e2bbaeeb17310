//! Pointwise costs, indifference hyperplanes, the pairwise geometric
//! condition on decoder actions, and bin assignment for a finite action set.
//!
//! Conventions: the encoder cost is `‖m − u − b‖²`, the decoder cost
//! `‖m − u‖²`. For two actions `u_first`, `u_second` the indifference value
//!
//! ```text
//! h(m) = (m − ((u_first + u_second)/2 + b))ᵀ (u_first − u_second)
//! ```
//!
//! is exactly half the encoder's cost saving from `u_first` over
//! `u_second`, so `u_first`'s bin is `{h ≥ 0}`.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};

/// A point of the source (or action) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("point has non-finite coordinates".into()));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// The encoder's bias vector `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BiasVector(Vec<f64>);

impl BiasVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("bias has non-finite entries".into()));
        }
        Ok(Self(coords))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }
}

impl Deref for BiasVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `{m : normalᵀ(m − anchor) = 0}`; `value` is positive on the side the
/// normal points to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    normal: Vec<f64>,
    anchor: Vec<f64>,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, anchor: Vec<f64>) -> Result<Self> {
        check_dims(normal.len(), anchor.len())?;
        if normal.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidParameter("hyperplane normal is zero".into()));
        }
        Ok(Self { normal, anchor })
    }

    /// The plane on which the encoder is indifferent between the two
    /// actions; `value` is positive where `u_first` is strictly preferred.
    pub fn indifference(u_first: &[f64], u_second: &[f64], b: &[f64]) -> Result<Self> {
        check_dims(u_first.len(), u_second.len())?;
        check_dims(u_first.len(), b.len())?;
        if u_first == u_second {
            return Err(Error::IdenticalActions);
        }
        let normal = u_first.iter().zip(u_second).map(|(a, c)| a - c).collect();
        let anchor = u_first
            .iter()
            .zip(u_second)
            .zip(b)
            .map(|((a, c), bi)| 0.5 * (a + c) + bi)
            .collect();
        Ok(Self { normal, anchor })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn value(&self, m: &[f64]) -> f64 {
        m.iter()
            .zip(&self.anchor)
            .zip(&self.normal)
            .map(|((mi, ai), ni)| (mi - ai) * ni)
            .sum()
    }

    pub fn contains(&self, m: &[f64]) -> bool {
        self.value(m) == 0.0
    }
}

/// A finite set of pairwise distinct decoder actions, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    dim: usize,
    coords: Vec<f64>,
}

impl ActionSet {
    /// Builds the set, merging exact duplicates (first occurrence kept).
    pub fn new(actions: Vec<Vec<f64>>) -> Result<Self> {
        let dim = actions.first().ok_or(Error::EmptyActionSet)?.len();
        if dim == 0 {
            return Err(Error::InvalidParameter("actions must have dimension ≥ 1".into()));
        }
        let mut coords: Vec<f64> = Vec::with_capacity(actions.len() * dim);
        for a in &actions {
            check_dims(dim, a.len())?;
            if a.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter("action has non-finite coordinates".into()));
            }
            if !coords.chunks_exact(dim).any(|e| e == a.as_slice()) {
                coords.extend_from_slice(a);
            }
        }
        Ok(Self { dim, coords })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    /// Largest coordinate-wise distance to another set of the same shape.
    pub fn sup_distance(&self, other: &ActionSet) -> f64 {
        if self.dim != other.dim || self.len() != other.len() {
            return f64::INFINITY;
        }
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `‖m − u − b‖²`.
pub fn encoder_cost(m: &[f64], u: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(m.len(), u.len())?;
    check_dims(m.len(), b.len())?;
    Ok(encoder_cost_unchecked(m, u, b))
}

#[inline]
pub(crate) fn encoder_cost_unchecked(m: &[f64], u: &[f64], b: &[f64]) -> f64 {
    m.iter()
        .zip(u)
        .zip(b)
        .map(|((mi, ui), bi)| {
            let d = mi - ui - bi;
            d * d
        })
        .sum()
}

/// `‖m − u‖²`.
pub fn decoder_cost(m: &[f64], u: &[f64]) -> Result<f64> {
    check_dims(m.len(), u.len())?;
    Ok(m.iter().zip(u).map(|(a, c)| (a - c) * (a - c)).sum())
}

/// Signed indifference value; positive iff the encoder strictly prefers
/// `u_first` at `m`.
pub fn h_value(m: &[f64], u_first: &[f64], u_second: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(m.len(), u_first.len())?;
    Ok(Hyperplane::indifference(u_first, u_second, b)?.value(m))
}

/// `‖u_b − u_a‖² − 2|(u_b − u_a)ᵀb|`; nonnegative iff the pair may
/// coexist at a Nash equilibrium.
pub fn geo_slack(u_a: &[f64], u_b: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(u_a.len(), u_b.len())?;
    check_dims(u_a.len(), b.len())?;
    Ok(geo_slack_unchecked(u_a, u_b, b))
}

#[inline]
pub(crate) fn geo_slack_unchecked(u_a: &[f64], u_b: &[f64], b: &[f64]) -> f64 {
    let mut dist_sq = 0.0;
    let mut proj = 0.0;
    for ((a, c), bi) in u_a.iter().zip(u_b).zip(b) {
        let d = c - a;
        dist_sq += d * d;
        proj += d * bi;
    }
    dist_sq - 2.0 * proj.abs()
}

/// Position `λ̄` of the indifference plane on the line
/// `λ u_b + (1 − λ) u_a`.
pub fn lambda_bar(u_a: &[f64], u_b: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(u_a.len(), u_b.len())?;
    check_dims(u_a.len(), b.len())?;
    let delta: Vec<f64> = u_b.iter().zip(u_a).map(|(x, y)| x - y).collect();
    let dist_sq = dot(&delta, &delta);
    if dist_sq == 0.0 {
        return Err(Error::IdenticalActions);
    }
    Ok(0.5 * (1.0 + 2.0 * dot(&delta, b) / dist_sq))
}

/// Geometric condition in the decoupled 2D coordinates, where all bias
/// sits on the second coordinate with magnitude `b_tilde`.
pub fn g_slack_transformed(y_a: &[f64], y_b: &[f64], b_tilde: f64) -> Result<f64> {
    if y_a.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: y_a.len() });
    }
    if y_b.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: y_b.len() });
    }
    if !(b_tilde > 0.0) {
        return Err(Error::InvalidParameter(format!("b_tilde must be positive, got {b_tilde}")));
    }
    let d1 = y_a[0] - y_b[0];
    let d2 = y_a[1] - y_b[1];
    Ok(d1 * d1 + d2 * d2 - 2.0 * b_tilde * d2.abs())
}

/// Index of the action minimizing the encoder cost; ties go to the lowest
/// index.
pub fn assign_action(m: &[f64], actions: &ActionSet, b: &[f64]) -> Result<usize> {
    if actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    check_dims(actions.dim(), m.len())?;
    check_dims(actions.dim(), b.len())?;
    Ok(assign_unchecked(m, actions, b))
}

#[inline]
pub(crate) fn assign_unchecked(m: &[f64], actions: &ActionSet, b: &[f64]) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (i, u) in actions.iter().enumerate() {
        let c = encoder_cost_unchecked(m, u, b);
        if c < best_cost {
            best_cost = c;
            best = i;
        }
    }
    best
}

/// The half-spaces `{h(m, u_i, u_j) ≥ 0 : j ≠ i}` whose intersection is
/// the bin of action `i`.
pub fn bin_halfspaces(actions: &ActionSet, i: usize, b: &[f64]) -> Result<Vec<Hyperplane>> {
    if i >= actions.len() {
        return Err(Error::InvalidParameter(format!("action index {i} out of range")));
    }
    (0..actions.len())
        .filter(|&j| j != i)
        .map(|j| Hyperplane::indifference(actions.get(i), actions.get(j), b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoder_cost_examples() {
        assert_eq!(encoder_cost(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(encoder_cost(&[1.5, 0.0], &[0.0, 0.0], &[0.5, 0.0]).unwrap(), 1.0);
        assert_eq!(encoder_cost(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert!(matches!(
            encoder_cost(&[1.0], &[1.0, 2.0], &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn decoder_cost_examples() {
        assert_eq!(decoder_cost(&[3.0, -1.0], &[3.0, -1.0]).unwrap(), 0.0);
        assert_eq!(decoder_cost(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(decoder_cost(&[1.0, 2.0], &[-1.0, 0.0]).unwrap(), 8.0);
        assert!(decoder_cost(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn h_value_examples() {
        let (u1, u2, b) = ([0.0, 0.0], [2.0, 0.0], [0.5, 0.0]);
        assert_eq!(h_value(&[1.5, 7.0], &u1, &u2, &b).unwrap(), 0.0);
        assert_eq!(h_value(&[2.0, 0.0], &u1, &u2, &b).unwrap(), -1.0);
        assert_eq!(h_value(&[0.0, 0.0], &u1, &u2, &b).unwrap(), 3.0);
        assert_eq!(h_value(&[0.0, 0.0], &u1, &u1, &b), Err(Error::IdenticalActions));
    }

    #[test]
    fn geo_slack_examples() {
        assert_eq!(geo_slack(&[0.0, 0.0], &[0.0, 2.0], &[1.0, 0.0]).unwrap(), 4.0);
        assert_eq!(geo_slack(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(geo_slack(&[0.3, 0.1], &[0.3, 0.1], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn lambda_bar_examples() {
        assert_eq!(lambda_bar(&[0.0, 0.0], &[0.0, 3.0], &[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(lambda_bar(&[0.0, 0.0], &[2.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(lambda_bar(&[0.0, 0.0], &[4.0, 0.0], &[1.0, 0.0]).unwrap(), 0.75);
        assert_eq!(lambda_bar(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 0.0]), Err(Error::IdenticalActions));
    }

    #[test]
    fn g_slack_examples() {
        assert_eq!(g_slack_transformed(&[0.4, 0.2], &[0.4, 0.2], 2.0).unwrap(), 0.0);
        assert_eq!(g_slack_transformed(&[-1.0, 0.5], &[2.0, 0.5], 2.0).unwrap(), 9.0);
        assert_eq!(g_slack_transformed(&[0.0, 0.0], &[0.0, 1.0], 2.0).unwrap(), -3.0);
        assert!(g_slack_transformed(&[0.0; 3], &[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn assign_action_examples() {
        let set = ActionSet::new(vec![vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let b = [0.5, 0.0];
        assert_eq!(assign_action(&[1.5, 0.0], &set, &b).unwrap(), 0);
        assert_eq!(assign_action(&[1.6, 0.0], &set, &b).unwrap(), 1);
        let single = ActionSet::new(vec![vec![4.0, -4.0]]).unwrap();
        assert_eq!(assign_action(&[-100.0, 3.0], &single, &b).unwrap(), 0);
        assert!(ActionSet::new(vec![]).is_err());
    }

    #[test]
    fn action_set_merges_duplicates() {
        let set = ActionSet::new(vec![vec![1.0], vec![2.0], vec![1.0]]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.to_vecs(), vec![vec![1.0], vec![2.0]]);
    }

    #[test]
    fn bin_halfspaces_select_own_action() {
        let set = ActionSet::new(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let b = [0.2, -0.1];
        for i in 0..set.len() {
            let planes = bin_halfspaces(&set, i, &b).unwrap();
            // The bias-shifted action itself always lies strictly inside its bin.
            let m: Vec<f64> = set.get(i).iter().zip(&b).map(|(u, bi)| u + bi).collect();
            assert!(planes.iter().all(|p| p.value(&m) > 0.0));
        }
    }
}
