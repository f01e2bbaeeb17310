//! Invertible changes of coordinates that push all of the bias onto a
//! single coordinate, decoupling the game into independent scalar problems
//! for Gaussian (and, for special biases, symmetric) sources.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::dot;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in &rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        Self { n, data }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Self { n, data }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub(crate) fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.rows()) {
            *o = dot(row, v);
        }
    }

    /// Largest absolute entry of `self − other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Inverse,
}

/// An invertible map `x = forward · m`, together with the image of the
/// bias. `scale` is the factor by which costs are multiplied when
/// expressed in the new coordinates (1 for orthonormal maps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTransform {
    pub forward: Matrix,
    pub inverse: Matrix,
    pub transformed_bias: Vec<f64>,
    pub scale: f64,
    pub orthonormal: bool,
}

impl LinearTransform {
    pub fn identity(n: usize) -> Self {
        Self {
            forward: Matrix::identity(n),
            inverse: Matrix::identity(n),
            transformed_bias: vec![0.0; n],
            scale: 1.0,
            orthonormal: true,
        }
    }

    pub(crate) fn orthonormal_from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let forward = Matrix::from_rows(rows)?;
        let n = forward.dim();
        Ok(Self {
            inverse: forward.transpose(),
            forward,
            transformed_bias: vec![0.0; n],
            scale: 1.0,
            orthonormal: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.forward.dim()
    }

    /// Recomputes `transformed_bias = forward · b`.
    pub fn with_bias(mut self, b: &[f64]) -> Result<Self> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: b.len() });
        }
        self.transformed_bias = self.forward.mul_vec(b);
        Ok(self)
    }

    pub fn apply(&self, p: &[f64], direction: Direction) -> Result<Vec<f64>> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: p.len() });
        }
        Ok(match direction {
            Direction::Forward => self.forward.mul_vec(p),
            Direction::Inverse => self.inverse.mul_vec(p),
        })
    }
}

/// Free-function form of [`LinearTransform::apply`].
pub fn apply(t: &LinearTransform, p: &[f64], direction: Direction) -> Result<Vec<f64>> {
    t.apply(p, direction)
}

/// The 2D map `X1 = b1·M2 − b2·M1`, `X2 = b1·M1 + b2·M2`. Not
/// orthonormal: costs in the new coordinates carry the factor
/// `b̃ = b1² + b2²`.
pub fn pair_transform_2d(b: &[f64]) -> Result<LinearTransform> {
    if b.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: b.len() });
    }
    let (b1, b2) = (b[0], b[1]);
    let b_tilde = b1 * b1 + b2 * b2;
    if b_tilde == 0.0 {
        return Err(Error::ZeroBias);
    }
    let forward = Matrix::from_rows(vec![vec![-b2, b1], vec![b1, b2]])?;
    Ok(LinearTransform {
        inverse: forward.scaled(1.0 / b_tilde),
        forward,
        transformed_bias: vec![0.0, b_tilde],
        scale: b_tilde,
        orthonormal: false,
    })
}

/// Helmert matrix: row k < n is `(1,…,1,−k,0,…,0)/√(k(k+1))` with k ones,
/// the last row is `(1,…,1)/√n`. Maps an equal bias `(c,…,c)` to
/// `(0,…,0,√n·c)`.
pub fn helmert_transform(n: usize) -> Result<LinearTransform> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("Helmert transform needs n ≥ 2, got {n}")));
    }
    let mut rows = Vec::with_capacity(n);
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        let mut row = vec![0.0; n];
        row[..k].iter_mut().for_each(|v| *v = 1.0 / norm);
        row[k] = -(k as f64) / norm;
        rows.push(row);
    }
    rows.push(vec![1.0 / (n as f64).sqrt(); n]);
    LinearTransform::orthonormal_from_rows(rows)
}

/// Orthonormal map whose last row is `b/‖b‖`, so the transformed bias is
/// `(0,…,0,‖b‖)`. Rows 1..n−1 follow the n = 3 closed form generalized to
/// any n; when `b1 = b2 = 0` a Householder reflection is used instead.
pub fn bias_aligning_transform(b: &[f64]) -> Result<LinearTransform> {
    let n = b.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("bias-aligning transform needs n ≥ 2, got {n}")));
    }
    let norm = dot(b, b).sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroBias);
    }
    let s2 = (b[0] * b[0] + b[1] * b[1]).sqrt();
    let rows = if s2 > 0.0 {
        closed_form_rows(b, norm)
    } else {
        householder_rows(b, norm)
    };
    LinearTransform::orthonormal_from_rows(rows)?.with_bias(b)
}

fn closed_form_rows(b: &[f64], norm: f64) -> Vec<Vec<f64>> {
    let n = b.len();
    let mut rows = Vec::with_capacity(n);
    let mut partial_sq = b[0] * b[0] + b[1] * b[1];
    let mut first = vec![0.0; n];
    first[0] = b[1] / partial_sq.sqrt();
    first[1] = -b[0] / partial_sq.sqrt();
    rows.push(first);
    // Row j is b_{j+1}·(b_1..b_j) − s_j²·e_{j+1}, normalized by s_j·s_{j+1}.
    for j in 2..n {
        let s_j = partial_sq.sqrt();
        let next_sq = partial_sq + b[j] * b[j];
        let denom = s_j * next_sq.sqrt();
        let mut row = vec![0.0; n];
        for i in 0..j {
            row[i] = b[i] * b[j] / denom;
        }
        row[j] = -partial_sq / denom;
        rows.push(row);
        partial_sq = next_sq;
    }
    rows.push(b.iter().map(|v| v / norm).collect());
    rows
}

fn householder_rows(b: &[f64], norm: f64) -> Vec<Vec<f64>> {
    let n = b.len();
    // H = I − 2vvᵀ/‖v‖² with v = e_n − b̂ maps e_n to b̂ and is symmetric.
    let mut v: Vec<f64> = b.iter().map(|x| -x / norm).collect();
    v[n - 1] += 1.0;
    let vv = dot(&v, &v);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    if vv == 0.0 {
                        id
                    } else {
                        id - 2.0 * v[i] * v[j] / vv
                    }
                })
                .collect()
        })
        .collect();
    // Round-off guard: make the last row exactly b̂.
    rows[n - 1] = b.iter().map(|x| x / norm).collect();
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn pair_transform_examples() {
        let t = pair_transform_2d(&[1.0, 1.0]).unwrap();
        assert_eq!(t.forward.row(0), &[-1.0, 1.0]);
        assert_eq!(t.forward.row(1), &[1.0, 1.0]);
        assert_eq!(t.transformed_bias, vec![0.0, 2.0]);
        assert_eq!(t.scale, 2.0);

        let t = pair_transform_2d(&[0.0, 1.0]).unwrap();
        assert_eq!(t.forward.row(0), &[-1.0, 0.0]);
        assert_eq!(t.forward.row(1), &[0.0, 1.0]);
        assert_eq!(t.transformed_bias, vec![0.0, 1.0]);

        let t = pair_transform_2d(&[3.0, 4.0]).unwrap();
        assert_eq!(t.transformed_bias, vec![0.0, 25.0]);
        assert!(t.inverse.max_abs_diff(&t.forward.scaled(1.0 / 25.0)) < 1e-15);
        assert!(t.forward.matmul(&t.inverse).max_abs_diff(&Matrix::identity(2)) < 1e-12);
        assert_eq!(pair_transform_2d(&[0.0, 0.0]), Err(Error::ZeroBias));
    }

    #[test]
    fn helmert_examples() {
        let h = 1.0 / 2f64.sqrt();
        let t = helmert_transform(2).unwrap();
        assert!(t.forward.max_abs_diff(&Matrix::from_rows(vec![vec![h, -h], vec![h, h]]).unwrap()) < 1e-15);
        let t = helmert_transform(3).unwrap();
        let s6 = 6f64.sqrt();
        for (a, b) in t.forward.row(1).iter().zip([1.0 / s6, 1.0 / s6, -2.0 / s6]) {
            assert_close(*a, b, 1e-15);
        }
        let t = helmert_transform(5).unwrap().with_bias(&[0.7; 5]).unwrap();
        for v in &t.transformed_bias[..4] {
            assert_close(*v, 0.0, 1e-12);
        }
        assert_close(t.transformed_bias[4], 5f64.sqrt() * 0.7, 1e-12);
        assert!(helmert_transform(1).is_err());
    }

    #[test]
    fn bias_aligning_examples() {
        let t = bias_aligning_transform(&[3.0, 4.0, 0.0]).unwrap();
        let expected = Matrix::from_rows(vec![
            vec![0.8, -0.6, 0.0],
            vec![0.0, 0.0, -1.0],
            vec![0.6, 0.8, 0.0],
        ])
        .unwrap();
        assert!(t.forward.max_abs_diff(&expected) < 1e-15);

        let t = bias_aligning_transform(&[0.0, 0.0, 2.5]).unwrap();
        assert_eq!(t.forward.row(2), &[0.0, 0.0, 1.0]);
        assert!(t.transformed_bias.iter().zip([0.0, 0.0, 2.5]).all(|(a, b)| (a - b).abs() < 1e-15));

        let t = bias_aligning_transform(&[0.0, 0.0, -2.5]).unwrap();
        assert_close(t.transformed_bias[2], 2.5, 1e-15);
        assert!(t.forward.matmul(&t.inverse).max_abs_diff(&Matrix::identity(3)) < 1e-12);

        assert_eq!(bias_aligning_transform(&[0.0, 0.0]), Err(Error::ZeroBias));
    }

    #[test]
    fn apply_examples() {
        let id = LinearTransform::identity(3);
        assert_eq!(apply(&id, &[1.0, -2.0, 3.0], Direction::Forward).unwrap(), vec![1.0, -2.0, 3.0]);
        let t = pair_transform_2d(&[1.0, 1.0]).unwrap();
        assert_eq!(t.apply(&[1.0, 0.0], Direction::Forward).unwrap(), vec![-1.0, 1.0]);
        let back = t.apply(&[-1.0, 1.0], Direction::Inverse).unwrap();
        assert_close(back[0], 1.0, 1e-15);
        assert_close(back[1], 0.0, 1e-15);
        assert!(t.apply(&[1.0], Direction::Forward).is_err());
    }
}
