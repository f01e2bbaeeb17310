use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

use super::marginal::PiecewiseConstant;
use crate::error::{Error, Result};

/// Relative tolerance on grid spacing when reading a table.
const SPACING_TOL: f64 = 1e-6;
/// A joint table counts as a product of identical marginals when every cell
/// matches the product within this fraction of the peak density.
const FACTOR_TOL: f64 = 1e-6;

/// A density given on a uniform grid, either as a marginal shared by every
/// coordinate or as a 2D joint table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "kebab-case")]
pub enum TabulatedDensity {
    Marginal(PiecewiseConstant),
    Joint(JointGrid),
}

/// Piecewise-constant 2D density; `density[i * shape[1] + j]` is the
/// value on cell `(i, j)` with `i` indexing the first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint", into = "RawJoint")]
pub struct JointGrid {
    start: [f64; 2],
    width: [f64; 2],
    shape: [usize; 2],
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawJoint {
    start: [f64; 2],
    width: [f64; 2],
    shape: [usize; 2],
    density: Vec<f64>,
}

impl TryFrom<RawJoint> for JointGrid {
    type Error = Error;
    fn try_from(r: RawJoint) -> Result<Self> {
        JointGrid::new(r.start, r.width, r.shape, r.density)
    }
}

impl From<JointGrid> for RawJoint {
    fn from(g: JointGrid) -> Self {
        RawJoint { start: g.start, width: g.width, shape: g.shape, density: g.density }
    }
}

impl JointGrid {
    pub fn new(start: [f64; 2], width: [f64; 2], shape: [usize; 2], density: Vec<f64>) -> Result<Self> {
        if start.iter().any(|s| !s.is_finite()) || width.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Table(format!("bad grid: start {start:?}, width {width:?}")));
        }
        if shape[0] == 0 || shape[1] == 0 || density.len() != shape[0] * shape[1] {
            return Err(Error::Table(format!("{} values do not fill a {:?} grid", density.len(), shape)));
        }
        if let Some(d) = density.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::Table(format!("density value {d} is negative or non-finite")));
        }
        let area = width[0] * width[1];
        let mut cumulative = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        for d in &density {
            acc += d * area;
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > 1e-6 {
            return Err(Error::Table(format!("density integrates to {acc}, not 1")));
        }
        cumulative.iter_mut().for_each(|c| *c /= acc);
        let density = density.into_iter().map(|d| d / acc).collect();
        Ok(Self { start, width, shape, density, cumulative })
    }

    pub fn start(&self) -> [f64; 2] {
        self.start
    }

    pub fn width(&self) -> [f64; 2] {
        self.width
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn end(&self) -> [f64; 2] {
        [
            self.start[0] + self.width[0] * self.shape[0] as f64,
            self.start[1] + self.width[1] * self.shape[1] as f64,
        ]
    }

    pub fn pdf(&self, m: &[f64]) -> f64 {
        let end = self.end();
        let mut idx = [0usize; 2];
        for k in 0..2 {
            if m[k] < self.start[k] || m[k] >= end[k] {
                return 0.0;
            }
            idx[k] = (((m[k] - self.start[k]) / self.width[k]) as usize).min(self.shape[k] - 1);
        }
        self.density[idx[0] * self.shape[1] + idx[1]]
    }

    /// Marginal density of coordinate `axis` (0 or 1).
    pub fn marginal(&self, axis: usize) -> PiecewiseConstant {
        let [n0, n1] = self.shape;
        let other = self.width[1 - axis];
        let values = if axis == 0 {
            (0..n0).map(|i| self.density[i * n1..(i + 1) * n1].iter().sum::<f64>() * other).collect()
        } else {
            (0..n1).map(|j| (0..n0).map(|i| self.density[i * n1 + j]).sum::<f64>() * other).collect()
        };
        PiecewiseConstant::new(self.start[axis], self.width[axis], values)
            .expect("marginal of a normalized joint table is normalized")
    }

    /// The shared marginal when the table is the product of two identical
    /// marginals.
    pub fn as_iid(&self) -> Option<PiecewiseConstant> {
        if self.shape[0] != self.shape[1]
            || (self.start[0] - self.start[1]).abs() > SPACING_TOL * self.width[0]
            || (self.width[0] - self.width[1]).abs() > SPACING_TOL * self.width[0]
        {
            return None;
        }
        let (p, q) = (self.marginal(0), self.marginal(1));
        let peak = self.density.iter().cloned().fold(0.0, f64::max);
        let n = self.shape[1];
        let marginal_peak = p.density().iter().cloned().fold(0.0, f64::max);
        let same = p.density().iter().zip(q.density()).all(|(a, b)| (a - b).abs() <= FACTOR_TOL * marginal_peak);
        let product = self
            .density
            .iter()
            .enumerate()
            .all(|(k, d)| (d - p.density()[k / n] * q.density()[k % n]).abs() <= FACTOR_TOL * peak);
        (same && product).then_some(p)
    }

    pub fn mean(&self) -> [f64; 2] {
        let [n0, n1] = self.shape;
        let area = self.width[0] * self.width[1];
        let mut acc = [0.0; 2];
        for i in 0..n0 {
            for j in 0..n1 {
                let w = self.density[i * n1 + j] * area;
                acc[0] += w * (self.start[0] + (i as f64 + 0.5) * self.width[0]);
                acc[1] += w * (self.start[1] + (j as f64 + 0.5) * self.width[1]);
            }
        }
        acc
    }

    /// Bounding box of the cells with positive density.
    pub fn support_box(&self) -> [(f64, f64); 2] {
        let [n0, n1] = self.shape;
        let (mut lo, mut hi) = ([usize::MAX; 2], [0usize; 2]);
        for i in 0..n0 {
            for j in 0..n1 {
                if self.density[i * n1 + j] > 0.0 {
                    lo = [lo[0].min(i), lo[1].min(j)];
                    hi = [hi[0].max(i), hi[1].max(j)];
                }
            }
        }
        let edge = |k: usize, c: usize| self.start[k] + c as f64 * self.width[k];
        [(edge(0, lo[0]), edge(0, hi[0] + 1)), (edge(1, lo[1]), edge(1, hi[1] + 1))]
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|&c| c < u).min(self.density.len() - 1);
        let n1 = self.shape[1];
        let (i, j) = (k / n1, k % n1);
        out[0] = self.start[0] + (i as f64 + rng.random::<f64>()) * self.width[0];
        out[1] = self.start[1] + (j as f64 + rng.random::<f64>()) * self.width[1];
    }
}

impl TabulatedDensity {
    /// Reads `x,density` (shared marginal) or `x1,x2,density` (2D joint)
    /// rows on a uniform grid of cell centres.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Table(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let columns = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["x", "density"] => 2,
            ["x1", "x2", "density"] => 3,
            other => return Err(Error::Table(format!("unexpected header {other:?}"))),
        };
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Table(e.to_string()))?;
            let row = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Table(format!("row {}: {e}", line + 2)))?;
            if row.len() != columns {
                return Err(Error::Table(format!("row {} has {} fields", line + 2, row.len())));
            }
            rows.push(row);
        }
        if columns == 2 {
            Self::from_rows_1d(&rows)
        } else {
            Self::from_rows_2d(&rows)
        }
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    fn from_rows_1d(rows: &[Vec<f64>]) -> Result<Self> {
        let mut rows: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let width = uniform_spacing(&xs, "x")?;
        let density = rows.into_iter().map(|r| r.1).collect();
        Ok(TabulatedDensity::Marginal(PiecewiseConstant::new(xs[0] - width / 2.0, width, density)?))
    }

    fn from_rows_2d(rows: &[Vec<f64>]) -> Result<Self> {
        let axis_values = |k: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (x1, x2) = (axis_values(0), axis_values(1));
        let w1 = uniform_spacing(&x1, "x1")?;
        let w2 = uniform_spacing(&x2, "x2")?;
        let shape = [x1.len(), x2.len()];
        if rows.len() != shape[0] * shape[1] {
            return Err(Error::Table(format!(
                "{} rows do not form a full {}×{} grid",
                rows.len(),
                shape[0],
                shape[1]
            )));
        }
        let mut density = vec![f64::NAN; rows.len()];
        for r in rows {
            let i = ((r[0] - x1[0]) / w1).round() as usize;
            let j = ((r[1] - x2[0]) / w2).round() as usize;
            let slot = &mut density[i * shape[1] + j];
            if !slot.is_nan() {
                return Err(Error::Table(format!("duplicate grid point ({}, {})", r[0], r[1])));
            }
            *slot = r[2];
        }
        let grid = JointGrid::new([x1[0] - w1 / 2.0, x2[0] - w2 / 2.0], [w1, w2], shape, density)?;
        Ok(TabulatedDensity::Joint(grid))
    }

    /// The marginal shared by all coordinates, if the table is i.i.d.
    pub fn iid_marginal(&self) -> Option<PiecewiseConstant> {
        match self {
            TabulatedDensity::Marginal(p) => Some(p.clone()),
            TabulatedDensity::Joint(g) => g.as_iid(),
        }
    }
}

fn uniform_spacing(xs: &[f64], name: &str) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::Table(format!("{name} needs at least two grid points")));
    }
    let width = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    if !(width > 0.0) {
        return Err(Error::Table(format!("{name} grid has repeated points")));
    }
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - width).abs() > SPACING_TOL * width {
            return Err(Error::Table(format!("{name} grid is not uniform near {}", w[0])));
        }
    }
    Ok(width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_marginal_table() {
        let csv = "x,density\n0.25,0.5\n0.75,1.5\n";
        let t = TabulatedDensity::from_csv_reader(csv.as_bytes()).unwrap();
        let p = t.iid_marginal().unwrap();
        assert_eq!(p.start(), 0.0);
        assert_eq!(p.width(), 0.5);
        assert_eq!(p.density(), &[0.5, 1.5]);
    }

    #[test]
    fn reads_joint_table_and_detects_product() {
        let mut csv = String::from("x1,x2,density\n");
        let marg = [0.5, 1.5];
        for (i, a) in marg.iter().enumerate() {
            for (j, b) in marg.iter().enumerate() {
                csv.push_str(&format!("{},{},{}\n", 0.25 + 0.5 * i as f64, 0.25 + 0.5 * j as f64, a * b));
            }
        }
        let t = TabulatedDensity::from_csv_reader(csv.as_bytes()).unwrap();
        let TabulatedDensity::Joint(g) = &t else { panic!("expected a joint table") };
        assert_eq!(g.shape(), [2, 2]);
        assert_eq!(g.pdf(&[0.1, 0.9]), 0.75);
        assert_eq!(t.iid_marginal().unwrap().density(), &[0.5, 1.5]);
    }

    #[test]
    fn non_product_joint_is_not_iid() {
        let csv = "x1,x2,density\n0.25,0.25,2\n0.25,0.75,0\n0.75,0.25,0\n0.75,0.75,2\n";
        let t = TabulatedDensity::from_csv_reader(csv.as_bytes()).unwrap();
        assert!(t.iid_marginal().is_none());
    }

    #[test]
    fn rejects_bad_tables() {
        let bad = [
            "x,density\n0,0.5\n1,0.6\n",
            "x,density\n0,0.5\n1,0.5\n3,0.0\n",
            "x,density\n0,-1\n1,2\n",
            "x,pdf\n0,0.5\n1,0.5\n",
            "x1,x2,density\n0,0,1\n1,1,0\n",
            "x,density\n0,abc\n1,1\n",
        ];
        for csv in bad {
            assert!(TabulatedDensity::from_csv_reader(csv.as_bytes()).is_err(), "{csv}");
        }
    }
}
