use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// A square linear map available only through matrix-vector products.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// Writes `A x` into `y`; both slices have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Borrowed dense square matrix as an operator.
pub struct DenseOperator<'a>(pub &'a DMatrix<f64>);

impl LinearOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        dense_matvec(self.0, x, y);
    }
}

fn dense_matvec(a: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    // column-major: accumulate a column at a time
    for (j, col) in a.column_iter().enumerate() {
        let xj = x[j];
        if xj != 0.0 {
            for (yi, aij) in y.iter_mut().zip(col.iter()) {
                *yi += aij * xj;
            }
        }
    }
}

/// Sparse symmetric matrix in compressed-row form, both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Builds from upper-triangular entries `(i, j, v)` with `i ≤ j`; each
    /// off-diagonal entry is mirrored. Duplicate coordinates are summed.
    pub fn from_upper<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let entries: Vec<_> = entries.into_iter().collect();
        let mut degree = vec![0usize; n];
        for &(i, j, _) in &entries {
            if i > j || j >= n {
                return Err(invalid(format!("entry ({i}, {j}) outside upper triangle of {n}x{n}")));
            }
            degree[i] += 1;
            if i != j {
                degree[j] += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for d in &degree {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let nnz = *row_ptr.last().unwrap();
        let mut cols = vec![0u32; nnz];
        let mut vals = vec![0.0; nnz];
        let mut fill = row_ptr[..n].to_vec();
        for &(i, j, v) in &entries {
            cols[fill[i]] = j as u32;
            vals[fill[i]] = v;
            fill[i] += 1;
            if i != j {
                cols[fill[j]] = i as u32;
                vals[fill[j]] = v;
                fill[j] += 1;
            }
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries, counting both triangles.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Iterates the stored entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `S · X` for a dense `n × k` matrix.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let k = x.ncols();
        let mut out = DMatrix::zeros(self.n, k);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                for c in 0..k {
                    out[(i, c)] += v * x[(j, c)];
                }
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[(i, j)] += v;
            }
        }
        out
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum()
    }
}

/// A real symmetric matrix, either dense or an implicit sparse-plus-low-rank
/// form `scale · S` / `scale · J S J` with `S` sparse and `J = I − 11ᵀ/n`.
///
/// The centered form expands to `S` plus rank-two corrections built from
/// `S1`; it is never materialized.
#[derive(Debug, Clone, PartialEq)]
pub enum SymMatrix {
    Dense(DMatrix<f64>),
    Sparse {
        s: SparseSym,
        scale: f64,
        centered: bool,
    },
}

impl SymMatrix {
    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(invalid(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
        }
        Ok(SymMatrix::Dense(m))
    }

    pub fn sparse(s: SparseSym) -> Self {
        SymMatrix::Sparse {
            s,
            scale: 1.0,
            centered: false,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SymMatrix::Dense(m) => m.nrows(),
            SymMatrix::Sparse { s, .. } => s.n(),
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        match self {
            SymMatrix::Dense(m) => SymMatrix::Dense(m * factor),
            SymMatrix::Sparse { s, scale, centered } => SymMatrix::Sparse {
                s,
                scale: scale * factor,
                centered,
            },
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        match self {
            SymMatrix::Dense(m) => dense_matvec(m, x, y),
            SymMatrix::Sparse { s, scale, centered } => {
                if *centered {
                    let mut xc = x.to_vec();
                    super::center_vec(&mut xc);
                    s.matvec(&xc, y);
                    super::center_vec(y);
                } else {
                    s.matvec(x, y);
                }
                y.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SymMatrix::Dense(m) => m.clone(),
            SymMatrix::Sparse { s, scale, centered } => {
                let mut d = s.to_dense();
                if *centered {
                    d = dense_double_center(&d);
                }
                d * *scale
            }
        }
    }
}

impl LinearOperator for SymMatrix {
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

/// `J A J` for a dense square `A`: subtract row means and column means, add
/// back the grand mean.
pub fn dense_double_center(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = a.row_iter().map(|r| r.sum() / nf).collect();
    let col_means: Vec<f64> = a.column_iter().map(|c| c.sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// `J A J`. For the sparse form this only flips the centering flag, which
/// makes the operation O(1) and idempotent.
pub fn double_center(a: &SymMatrix) -> Result<SymMatrix> {
    let n = a.n();
    if n < 2 {
        return Err(invalid(format!("double centering needs n >= 2, got {n}")));
    }
    Ok(match a {
        SymMatrix::Dense(m) => SymMatrix::Dense(dense_double_center(m)),
        SymMatrix::Sparse { s, scale, .. } => SymMatrix::Sparse {
            s: s.clone(),
            scale: *scale,
            centered: true,
        },
    })
}
