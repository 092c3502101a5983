//! Dense and matrix-free linear algebra used throughout the crate.

mod eigen;
mod points;
mod procrustes;
mod sym;

pub use eigen::{
    lanczos, spectral_norm, sym_eigen_desc, truncated_psd_factor, RitzPairs, Spectrum,
    DENSE_EIGEN_LIMIT,
};
pub use points::PointSet;
pub use procrustes::{procrustes_align, Alignment};
pub use sym::{
    dense_double_center, double_center, DenseOperator, FnOperator, LinearOperator, SparseSym,
    SymMatrix,
};

use nalgebra::DMatrix;

/// Frobenius inner product `⟨A, B⟩ = tr(AᵀB)`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the mean from a vector in place (applies `J = I − 11ᵀ/n`).
pub(crate) fn center_vec(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

/// Removes column means from a matrix in place (left-multiplies by `J`).
pub(crate) fn center_columns(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return;
    }
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
}
