use nalgebra::DMatrix;

use super::PointSet;
use crate::error::{invalid, Result};

/// Optimal orthogonal alignment of `P` onto `P⋆`.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// `ψ⋆ = argmin_{ψ ∈ O(r)} ‖P − P⋆ψ‖_F`.
    pub rotation: DMatrix<f64>,
    /// `Δ = P − P⋆ψ⋆`.
    pub delta: DMatrix<f64>,
    /// `‖Δ‖_F`.
    pub dist: f64,
}

/// Solves the orthogonal Procrustes problem through the polar factor of
/// `P⋆ᵀP`: with `PᵀP⋆ = UΣVᵀ`, `ψ⋆ = VUᵀ` and `PᵀP⋆ψ⋆ = UΣUᵀ ⪰ 0`.
pub fn procrustes_align(p: &PointSet, target: &PointSet) -> Result<Alignment> {
    if p.n() != target.n() || p.r() != target.r() {
        return Err(invalid(format!(
            "shape mismatch: {}x{} vs {}x{}",
            p.n(),
            p.r(),
            target.n(),
            target.r()
        )));
    }
    let cross = p.coords().transpose() * target.coords();
    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let rotation = v_t.transpose() * u.transpose();
    let delta = p.coords() - target.coords() * &rotation;
    let dist = delta.norm();
    Ok(Alignment {
        rotation,
        delta,
        dist,
    })
}
