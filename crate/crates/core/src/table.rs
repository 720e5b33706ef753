//! Piecewise-linear lookup tables, clamped at the end nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-dimensional table `x -> y` with strictly increasing abscissae.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Table1D {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table1D {
    pub fn new(points: &[[f64; 2]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("table has no nodes".into()));
        }
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Config("table contains non-finite values".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        Ok(Self { xs, ys })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            xs: vec![0.0],
            ys: vec![value],
        }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.ys.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, w) = bracket(&self.xs, x);
        if w == 0.0 {
            self.ys[i]
        } else {
            self.ys[i] + w * (self.ys[i + 1] - self.ys[i])
        }
    }
}

impl TryFrom<Vec<[f64; 2]>> for Table1D {
    type Error = Error;

    fn try_from(points: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(&points)
    }
}

impl From<Table1D> for Vec<[f64; 2]> {
    fn from(t: Table1D) -> Self {
        t.xs.iter().zip(&t.ys).map(|(&x, &y)| [x, y]).collect()
    }
}

/// Two-dimensional table `(x, y) -> z` on a full tensor grid, bilinear inside
/// and clamped outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct Table2D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major, `values[i * ys.len() + j]` is the value at `(xs[i], ys[j])`.
    values: Vec<f64>,
}

impl Table2D {
    /// Builds the table from scattered `[x, y, z]` triples that must cover
    /// every combination of the distinct `x` and `y` values exactly once.
    pub fn new(points: &[[f64; 3]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("table has no nodes".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("table contains non-finite values".into()));
        }
        let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        if xs.len() * ys.len() != points.len() {
            return Err(Error::Config(format!(
                "2-D table needs a full {}x{} grid, got {} nodes",
                xs.len(),
                ys.len(),
                points.len()
            )));
        }
        let mut values = vec![f64::NAN; xs.len() * ys.len()];
        for p in points {
            let i = xs.partition_point(|&x| x < p[0]);
            let j = ys.partition_point(|&y| y < p[1]);
            let slot = &mut values[i * ys.len() + j];
            if !slot.is_nan() {
                return Err(Error::Config(format!(
                    "duplicate 2-D table node ({}, {})",
                    p[0], p[1]
                )));
            }
            *slot = p[2];
        }
        Ok(Self { xs, ys, values })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            xs: vec![0.0],
            ys: vec![0.0],
            values: vec![value],
        }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (i, wx) = bracket(&self.xs, x);
        let (j, wy) = bracket(&self.ys, y);
        let ny = self.ys.len();
        let at = |a: usize, b: usize| self.values[a * ny + b];
        let i1 = (i + 1).min(self.xs.len() - 1);
        let j1 = (j + 1).min(ny - 1);
        let lo = at(i, j) + wy * (at(i, j1) - at(i, j));
        let hi = at(i1, j) + wy * (at(i1, j1) - at(i1, j));
        lo + wx * (hi - lo)
    }
}

impl TryFrom<Vec<[f64; 3]>> for Table2D {
    type Error = Error;

    fn try_from(points: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(&points)
    }
}

impl From<Table2D> for Vec<[f64; 3]> {
    fn from(t: Table2D) -> Self {
        let ny = t.ys.len();
        let mut out = Vec::with_capacity(t.values.len());
        for (i, &x) in t.xs.iter().enumerate() {
            for (j, &y) in t.ys.iter().enumerate() {
                out.push([x, y, t.values[i * ny + j]]);
            }
        }
        out
    }
}

/// Returns `(i, w)` such that the interpolant is `(1 - w) * f[i] + w * f[i + 1]`.
/// Outside the node range `w` is zero and `i` is the nearest end node.
pub(crate) fn bracket(xs: &[f64], x: f64) -> (usize, f64) {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return (0, 0.0);
    }
    if x >= xs[n - 1] {
        return (n - 1, 0.0);
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    (i, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_nodes_and_clamped_outside() {
        let t = Table1D::new(&[[0.0, 3.0], [0.5, 3.7], [1.0, 4.2]]).unwrap();
        assert_eq!(t.eval(0.0), 3.0);
        assert_eq!(t.eval(0.5), 3.7);
        assert_eq!(t.eval(1.0), 4.2);
        assert_eq!(t.eval(-1.0), 3.0);
        assert_eq!(t.eval(2.0), 4.2);
    }

    #[test]
    fn rejects_unsorted_nodes() {
        assert!(Table1D::new(&[[0.5, 1.0], [0.5, 2.0]]).is_err());
        assert!(Table1D::new(&[]).is_err());
    }

    #[test]
    fn bilinear_center_is_mean_of_corners() {
        let t = Table2D::new(&[
            [0.0, 270.0, 1.0],
            [0.0, 310.0, 2.0],
            [1.0, 270.0, 3.0],
            [1.0, 310.0, 6.0],
        ])
        .unwrap();
        assert!((t.eval(0.5, 290.0) - 3.0).abs() < 1e-15);
        assert_eq!(t.eval(1.0, 310.0), 6.0);
        assert_eq!(t.eval(5.0, 400.0), 6.0);
    }

    #[test]
    fn incomplete_grid_is_rejected() {
        let err = Table2D::new(&[[0.0, 270.0, 1.0], [1.0, 310.0, 2.0]]);
        assert!(err.is_err());
    }
}
