//! Success criteria and ground-truth statistics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{
    procrustes_align, spectral_norm, sym_eigen_desc, Alignment, FnOperator, PointSet, SymMatrix,
};

/// Extreme Gram eigenvalues, condition number and coherence of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthStats {
    pub sigma1: f64,
    pub sigma_r: f64,
    pub kappa: f64,
    pub mu: f64,
}

/// `min_{ψ ∈ O(r)} ‖P − P⋆ψ‖_F`.
pub fn quotient_dist(p: &PointSet, target: &PointSet) -> Result<f64> {
    Ok(procrustes_align(p, target)?.dist)
}

/// `‖Ĝ − G⋆‖ / ‖G⋆‖` in spectral norm.
pub fn spectral_error(g_hat: &SymMatrix, g_star: &SymMatrix) -> Result<f64> {
    let n = g_star.n();
    if g_hat.n() != n {
        return Err(invalid("spectral_error: dimension mismatch"));
    }
    let denom = spectral_norm(g_star)?;
    if denom == 0.0 {
        return Err(invalid("spectral_error: zero reference matrix"));
    }
    let diff = FnOperator::new(n, |x: &[f64], y: &mut [f64]| {
        let mut tmp = vec![0.0; n];
        g_hat.matvec(x, y);
        g_star.matvec(x, &mut tmp);
        y.iter_mut().zip(&tmp).for_each(|(a, b)| *a -= b);
    });
    Ok(spectral_norm(&diff)? / denom)
}

/// Spectral error between two Gram matrices given by their factors, without
/// forming either `n × n` matrix.
pub fn spectral_error_factors(p_hat: &PointSet, p_star: &PointSet) -> Result<f64> {
    let n = p_star.n();
    if p_hat.n() != n {
        return Err(invalid("spectral_error: dimension mismatch"));
    }
    let (vals, _) = sym_eigen_desc(&(p_star.coords().transpose() * p_star.coords()));
    let denom = vals[0];
    if denom <= 0.0 {
        return Err(invalid("spectral_error: zero reference matrix"));
    }
    let a = p_hat.coords();
    let b = p_star.coords();
    let diff = FnOperator::new(n, |x: &[f64], y: &mut [f64]| {
        let xv = nalgebra::DVector::from_column_slice(x);
        let out = a * (a.transpose() * &xv) - b * (b.transpose() * &xv);
        y.copy_from_slice(out.as_slice());
    });
    Ok(spectral_norm(&diff)? / denom)
}

/// `‖D̄ − D⋆‖_F / ‖D⋆‖_F`.
pub fn recovery_error(d_bar: &DMatrix<f64>, d_star: &DMatrix<f64>) -> Result<f64> {
    if d_bar.shape() != d_star.shape() {
        return Err(invalid("recovery_error: shape mismatch"));
    }
    let denom = d_star.norm();
    if denom == 0.0 {
        return Err(invalid("recovery_error: zero reference EDM"));
    }
    Ok((d_bar - d_star).norm() / denom)
}

/// Recovery error of the EDM of `p` against the EDM of `p_star`, evaluated
/// pair by pair in `O(n² r)` time and `O(1)` extra memory.
pub fn recovery_error_points(p: &PointSet, p_star: &PointSet) -> Result<f64> {
    if p.n() != p_star.n() {
        return Err(invalid("recovery_error: point count mismatch"));
    }
    let n = p.n();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let ds = p_star.sq_dist(i, j);
            let e = p.sq_dist(i, j) - ds;
            num += e * e;
            den += ds * ds;
        }
    }
    if den == 0.0 {
        return Err(invalid("recovery_error: zero reference EDM"));
    }
    Ok((num / den).sqrt())
}

/// `‖PPᵀ − P⋆P⋆ᵀ‖_F / ‖P⋆P⋆ᵀ‖_F`.
///
/// Evaluated through the aligned residual `Δ = P − P⋆ψ⋆`, using
/// `PPᵀ − QQᵀ = ΔPᵀ + QΔᵀ` with `Q = P⋆ψ⋆`, so the result keeps full relative
/// accuracy as `P` approaches the orbit of `P⋆`.
pub fn relative_gram_error(p: &PointSet, p_star: &PointSet) -> Result<f64> {
    let align = procrustes_align(p, p_star)?;
    Ok(relative_gram_error_aligned(p, p_star, &align))
}

pub(crate) fn relative_gram_error_aligned(p: &PointSet, p_star: &PointSet, align: &Alignment) -> f64 {
    let q = p_star.coords() * &align.rotation;
    let d = &align.delta;
    let pp = p.coords();
    let dtd = d.transpose() * d;
    let ptp = pp.transpose() * pp;
    let qtq = q.transpose() * &q;
    let dtq = d.transpose() * &q;
    let ptd = pp.transpose() * d;
    // ‖ΔPᵀ + QΔᵀ‖² = ⟨ΔᵀΔ, PᵀP⟩ + 2⟨ΔᵀQ, PᵀΔ⟩ + ⟨QᵀQ, ΔᵀΔ⟩
    let num = dtd.dot(&ptp) + 2.0 * dtq.dot(&ptd) + qtq.dot(&dtd);
    let g_star = p_star.coords().transpose() * p_star.coords();
    let den = g_star.norm();
    num.max(0.0).sqrt() / den
}

/// `σ₁⋆`, `σ_r⋆`, `κ` and the coherence
/// `μ = (n/r) · max(‖U⋆‖²_{2,∞}, ‖P⋆‖²_{2,∞}/σ₁⋆)`, the smallest value for
/// which both incoherence bounds hold.
pub fn ground_truth_stats(p_star: &PointSet, r: usize) -> Result<GroundTruthStats> {
    let n = p_star.n();
    if r == 0 || r > p_star.r() {
        return Err(invalid(format!("rank {r} outside [1, {}]", p_star.r())));
    }
    if !p_star.is_centered() {
        return Err(invalid("ground truth must be centered"));
    }
    let coords = p_star.coords();
    let (vals, vecs) = sym_eigen_desc(&(coords.transpose() * coords));
    let sigma1 = vals[0];
    let sigma_r = vals[r - 1];
    if !(sigma1 > 0.0) || sigma_r <= 1e-12 * sigma1 {
        return Err(invalid(format!("ground truth is rank deficient (σ_r = {sigma_r:e}, σ₁ = {sigma1:e})")));
    }
    // U⋆ = P⋆ V Σ^{-1/2}: left singular vectors of P⋆ = eigenvectors of the Gram
    let mut u = coords * vecs.columns(0, r);
    for (c, &s) in vals[..r].iter().enumerate() {
        u.column_mut(c).scale_mut(1.0 / s.sqrt());
    }
    let u_rows = (0..n).map(|i| u.row(i).norm_squared()).fold(0.0, f64::max);
    let p_rows = (0..n).map(|i| coords.row(i).norm_squared()).fold(0.0, f64::max);
    let mu = n as f64 / r as f64 * u_rows.max(p_rows / sigma1);
    Ok(GroundTruthStats {
        sigma1,
        sigma_r,
        kappa: sigma1 / sigma_r,
        mu,
    })
}
