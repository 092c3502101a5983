use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// An `n × r` configuration of points in `R^r`, one point per row.
///
/// `is_centered` reports whether every column sums to zero within
/// `1e-10 · n · max|coord|`; it is recomputed whenever a point set is built.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: DMatrix<f64>,
    centered: bool,
}

impl PointSet {
    pub fn new(coords: DMatrix<f64>) -> Result<Self> {
        let (n, r) = coords.shape();
        if n == 0 || r == 0 {
            return Err(invalid(format!("point set must be nonempty, got {n}x{r}")));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        let centered = columns_centered(&coords);
        Ok(Self { coords, centered })
    }

    /// Builds a point set after subtracting column means.
    pub fn centered(mut coords: DMatrix<f64>) -> Result<Self> {
        super::center_columns(&mut coords);
        let mut out = Self::new(coords)?;
        out.centered = true;
        Ok(out)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != r) {
            return Err(invalid("ragged point rows"));
        }
        Self::new(DMatrix::from_fn(n, r, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn r(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DMatrix<f64> {
        self.coords
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn to_centered(&self) -> Self {
        let mut coords = self.coords.clone();
        super::center_columns(&mut coords);
        Self {
            coords,
            centered: true,
        }
    }

    /// Dense Gram matrix `PPᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.coords * self.coords.transpose()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.coords.row(i).norm()
    }

    /// `‖P‖_{2,∞}`, the largest row norm.
    pub fn max_row_norm(&self) -> f64 {
        (0..self.n()).map(|i| self.row_norm(i)).fold(0.0, f64::max)
    }

    /// Squared distance between points `i` and `j`.
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        let r = self.r();
        let mut s = 0.0;
        for k in 0..r {
            let d = self.coords[(i, k)] - self.coords[(j, k)];
            s += d * d;
        }
        s
    }
}

fn columns_centered(coords: &DMatrix<f64>) -> bool {
    let n = coords.nrows() as f64;
    let scale = coords.amax();
    let tol = 1e-10 * n * scale;
    coords.column_iter().all(|c| c.sum().abs() <= tol)
}
