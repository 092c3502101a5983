use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, norm2, LinearOperator, PointSet, SymMatrix};
use crate::error::{invalid, Error, Result};

/// Below this dimension [`truncated_psd_factor`] uses a dense eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 500;

/// Extra Ritz pairs requested beyond the target rank on the Lanczos path.
const EIG_BUFFER: usize = 4;

const START_SEED: u64 = 0x1a2c_05ee_d5ee_d001;

/// Which end of the spectrum Lanczos should resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spectrum {
    /// Algebraically largest eigenvalues.
    Largest,
    /// Largest in absolute value.
    Magnitude,
}

/// Converged Ritz values (ordered per [`Spectrum`]) with their vectors as columns.
#[derive(Debug, Clone)]
pub struct RitzPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Largest residual norm `‖A y − θ y‖` over the returned pairs.
    pub residual: f64,
    pub steps: usize,
}

/// Full symmetric eigendecomposition with eigenvalues sorted descending.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn select(values: &[f64], want: usize, which: Spectrum) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    match which {
        Spectrum::Largest => idx.sort_by(|&i, &j| values[j].total_cmp(&values[i])),
        Spectrum::Magnitude => idx.sort_by(|&i, &j| values[j].abs().total_cmp(&values[i].abs())),
    }
    idx.truncate(want);
    idx
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..4 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, basis);
        let nv = norm2(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Symmetric Lanczos with full reorthogonalization.
///
/// Runs until the `want` selected Ritz pairs have residual at most
/// `tol · max|θ|`, the Krylov space is exhausted, or `max_steps` is reached
/// (which is a [`Error::NoConvergence`]). On breakdown the recurrence is
/// restarted from a fresh vector orthogonal to the current basis, so low-rank
/// operators are handled.
pub fn lanczos(
    op: &dyn LinearOperator,
    want: usize,
    which: Spectrum,
    tol: f64,
    max_steps: usize,
) -> Result<RitzPairs> {
    let n = op.dim();
    if n == 0 || want == 0 {
        return Err(invalid("lanczos needs a nonempty operator and want >= 1"));
    }
    let want = want.min(n);
    let max_steps = max_steps.clamp(want, n);
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_steps.min(256));
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut v = random_unit(&mut rng, n, &[]).expect("nonzero start vector");
    let mut w = vec![0.0; n];
    let mut anorm: f64 = 0.0;
    let mut last_residual = f64::INFINITY;

    loop {
        op.apply(&v, &mut w);
        let alpha = dot(&v, &w);
        w.iter_mut().zip(&v).for_each(|(wi, vi)| *wi -= alpha * vi);
        if let (Some(prev), Some(&beta)) = (basis.last(), betas.last()) {
            w.iter_mut().zip(prev).for_each(|(wi, pi)| *wi -= beta * pi);
        }
        basis.push(std::mem::take(&mut v));
        alphas.push(alpha);
        orthogonalize(&mut w, &basis);
        let beta = norm2(&w);
        anorm = anorm.max(alpha.abs() + beta + betas.last().copied().unwrap_or(0.0));
        let m = basis.len();
        let breakdown = beta <= 1e-13 * anorm.max(f64::MIN_POSITIVE);
        let exhausted = m == n;

        if m >= want && (m % 4 == 0 || breakdown || exhausted || m == max_steps) {
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j {
                    betas[i]
                } else if j + 1 == i {
                    betas[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            let picked = select(&vals, want, which);
            let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let residual = picked
                .iter()
                .map(|&k| (beta * eig.eigenvectors[(m - 1, k)]).abs())
                .fold(0.0, f64::max);
            last_residual = residual;
            if scale == 0.0 || exhausted || residual <= tol * scale {
                let values: Vec<f64> = picked.iter().map(|&k| vals[k]).collect();
                let mut vectors = DMatrix::zeros(n, want);
                for (c, &k) in picked.iter().enumerate() {
                    for (row, q) in basis.iter().enumerate() {
                        let s = eig.eigenvectors[(row, k)];
                        if s != 0.0 {
                            for i in 0..n {
                                vectors[(i, c)] += s * q[i];
                            }
                        }
                    }
                }
                return Ok(RitzPairs {
                    values,
                    vectors,
                    residual,
                    steps: m,
                });
            }
        }
        if exhausted || m >= max_steps {
            return Err(Error::NoConvergence {
                residual: last_residual,
            });
        }
        if breakdown {
            match random_unit(&mut rng, n, &basis) {
                Some(fresh) => {
                    v = fresh;
                    betas.push(0.0);
                }
                None => {
                    return Err(Error::NoConvergence {
                        residual: last_residual,
                    })
                }
            }
        } else {
            v = w.iter().map(|x| x / beta).collect();
            betas.push(beta);
        }
    }
}

/// Spectral norm `‖A‖ = max|λ|` of a symmetric operator, to `1e-8` relative.
pub fn spectral_norm(op: &dyn LinearOperator) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Err(invalid("spectral norm of an empty operator"));
    }
    let pairs = lanczos(op, 1, Spectrum::Magnitude, 1e-10, n)?;
    Ok(pairs.values[0].abs())
}

/// Best rank-`r` PSD factor of a symmetric matrix: the `r` algebraically
/// largest eigenpairs with negative eigenvalues clamped to zero, columns in
/// descending eigenvalue order.
pub fn truncated_psd_factor(s: &SymMatrix, r: usize) -> Result<PointSet> {
    let n = s.n();
    if r == 0 || r > n {
        return Err(invalid(format!("rank {r} outside [1, {n}]")));
    }
    let (values, vectors) = if n < DENSE_EIGEN_LIMIT {
        let (vals, vecs) = sym_eigen_desc(&s.to_dense());
        (vals[..r].to_vec(), vecs.columns(0, r).into_owned())
    } else {
        let want = (r + EIG_BUFFER).min(n);
        let pairs = lanczos(s, want, Spectrum::Largest, 1e-10, n.min(1500))?;
        (pairs.values[..r].to_vec(), pairs.vectors.columns(0, r).into_owned())
    };
    let mut factor = vectors;
    for (c, &lambda) in values.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        factor.column_mut(c).scale_mut(root);
    }
    PointSet::new(factor)
}
