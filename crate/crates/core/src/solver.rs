//! OS-MDS initialization, incoherence trimming, APGD and the s-stress baseline.
//!
//! Everything on the solve path touches only the sampled pairs: residuals are
//! evaluated pair by pair and `J S J X` is applied as a sparse product between
//! two column centerings. Nothing `n × n` is ever formed.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::edm::DistanceData;
use crate::error::{invalid, Error, Result};
use crate::linalg::{
    center_columns, frob_dot, procrustes_align, sym_eigen_desc, truncated_psd_factor, PointSet,
    SymMatrix,
};
use crate::metrics::relative_gram_error_aligned;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    Fixed {
        eta: f64,
    },
    /// Barzilai-Borwein steps alternating BB1/BB2, capped above by `eta_max`
    /// and, when given, clamped below by `eta_min`.
    Bb {
        eta_max: f64,
        #[serde(default)]
        eta_min: Option<f64>,
    },
}

/// Incoherence projection: rows are capped at `c_ip · √(μ r σ₁⋆ / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trimming {
    pub mu: f64,
    pub sigma1: f64,
    #[serde(default = "one")]
    pub c_ip: f64,
}

fn one() -> f64 {
    1.0
}

impl Trimming {
    pub fn radius(&self, n: usize, r: usize) -> f64 {
        self.c_ip * (self.mu * r as f64 * self.sigma1 / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub rank: usize,
    pub step: StepRule,
    #[serde(default)]
    pub trim: Option<Trimming>,
    #[serde(default = "default_tol")]
    pub tol_grad: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub record_oracle: bool,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iters() -> usize {
    1000
}

impl SolverConfig {
    pub fn bb(rank: usize, eta_max: f64) -> Self {
        Self {
            rank,
            step: StepRule::Bb { eta_max, eta_min: None },
            trim: None,
            tol_grad: default_tol(),
            max_iters: default_max_iters(),
            record_oracle: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(invalid("rank must be at least 1"));
        }
        if !(self.tol_grad > 0.0) {
            return Err(invalid(format!("tol_grad must be positive, got {}", self.tol_grad)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        match self.step {
            StepRule::Fixed { eta } if !(eta > 0.0 && eta.is_finite()) => {
                return Err(invalid(format!("fixed step must be positive, got {eta}")));
            }
            StepRule::Bb { eta_max, eta_min } => {
                if !(eta_max > 0.0 && eta_max.is_finite()) {
                    return Err(invalid(format!("eta_max must be positive, got {eta_max}")));
                }
                if let Some(lo) = eta_min {
                    if !(lo > 0.0 && lo <= eta_max) {
                        return Err(invalid(format!("eta_min must lie in (0, eta_max], got {lo}")));
                    }
                }
            }
            _ => {}
        }
        if let Some(t) = &self.trim {
            if !(t.c_ip >= 1.0 && t.mu > 0.0 && t.sigma1 > 0.0) || !t.mu.is_finite() || !t.sigma1.is_finite() {
                return Err(invalid("trimming needs c_ip ≥ 1 and positive finite mu, sigma1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// `2‖R_Ω(PPᵀ − G⋆)P‖_F`, computable from samples alone.
    pub g1: f64,
    pub g2: Option<f64>,
    pub r: Option<f64>,
    pub dist: Option<f64>,
    /// Step taken from this iterate; absent on the final one.
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTol,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<IterRecord>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::GradientTol
    }

    /// Writes `iter,g1,g2,r,dist,eta`, leaving absent values empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:e}")).unwrap_or_default()
        }
        writeln!(out, "iter,g1,g2,r,dist,eta")?;
        for (k, rec) in self.records.iter().enumerate() {
            writeln!(
                out,
                "{k},{:e},{},{},{},{}",
                rec.g1,
                opt(rec.g2),
                opt(rec.r),
                opt(rec.dist),
                opt(rec.eta)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub points: PointSet,
    pub trajectory: Trajectory,
    /// Number of recorded iterates, the initial point included.
    pub iterations: usize,
}

/// `P̂` with `P̂P̂ᵀ = T_r[−(1/2p) J P_Ω(D⋆) J]`.
pub fn osmds_init(data: &DistanceData, r: usize) -> Result<PointSet> {
    if data.is_empty() {
        return Err(invalid("no sampled distances"));
    }
    let op = SymMatrix::Sparse {
        s: data.to_sparse(),
        scale: -0.5 / data.p(),
        centered: true,
    };
    Ok(truncated_psd_factor(&op, r)?.to_centered())
}

/// Rescales every row longer than the trimming radius back onto the sphere.
pub fn trim(p: &PointSet, t: &Trimming) -> PointSet {
    let mut coords = p.coords().clone();
    trim_rows(&mut coords, t.radius(p.n(), p.r()));
    PointSet::new(coords).expect("row rescaling keeps coordinates finite")
}

fn trim_rows(m: &mut DMatrix<f64>, tau: f64) {
    for i in 0..m.nrows() {
        let norm = m.row(i).norm();
        if norm > tau {
            m.row_mut(i).scale_mut(tau / norm);
        }
    }
}

fn check_shape(p: &DMatrix<f64>, data: &DistanceData) -> Result<()> {
    if p.nrows() != data.n() {
        return Err(invalid(format!("{} points but data on {}", p.nrows(), data.n())));
    }
    Ok(())
}

/// `‖P_i − P_j‖² − D_ij` on every sampled pair.
fn residuals(p: &DMatrix<f64>, data: &DistanceData) -> Vec<f64> {
    let r = p.ncols();
    data.iter()
        .map(|(i, j, d)| {
            let mut s = 0.0;
            for c in 0..r {
                let t = p[(i, c)] - p[(j, c)];
                s += t * t;
            }
            s - d
        })
        .collect()
}

/// `S X` with `S` symmetric and supported on the sampled pairs.
fn pair_mul(data: &DistanceData, vals: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for ((i, j), &v) in data.mask().iter().zip(vals) {
        for c in 0..x.ncols() {
            out[(i, c)] += v * x[(j, c)];
            out[(j, c)] += v * x[(i, c)];
        }
    }
    out
}

/// `2 g*(S) X = 4(diag(S1) X − S X)`.
fn twice_adjoint_mul(data: &DistanceData, vals: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for ((i, j), &v) in data.mask().iter().zip(vals) {
        for c in 0..x.ncols() {
            let t = 4.0 * v * (x[(i, c)] - x[(j, c)]);
            out[(i, c)] += t;
            out[(j, c)] -= t;
        }
    }
    out
}

/// `2 g⁺(S) P = −J S J P` for the sampled residual `S`.
fn sampled_gradient_from(data: &DistanceData, res: &[f64], p: &DMatrix<f64>) -> DMatrix<f64> {
    let mut jp = p.clone();
    center_columns(&mut jp);
    let mut out = pair_mul(data, res, &jp);
    center_columns(&mut out);
    out.neg_mut();
    out
}

/// `p · ∇̂f(P) = 2 g⁺(P_Ω(g(PPᵀ) − D⋆)) P`, the direction the BB iteration
/// steps along and whose norm is the stopping statistic.
pub fn sampled_gradient(p: &PointSet, data: &DistanceData) -> Result<DMatrix<f64>> {
    check_shape(p.coords(), data)?;
    Ok(sampled_gradient_from(data, &residuals(p.coords(), data), p.coords()))
}

/// `∇̂f(P) = (2/p) g⁺(P_Ω(g(PPᵀ) − D⋆)) P`.
pub fn pseudo_gradient(p: &PointSet, data: &DistanceData) -> Result<DMatrix<f64>> {
    Ok(sampled_gradient(p, data)? / data.p())
}

/// `h(P) = Σ_{(i,j) ∈ Ω} (‖P_i − P_j‖² − D_ij)²`, one term per sampled pair.
pub fn sstress(p: &PointSet, data: &DistanceData) -> Result<f64> {
    check_shape(p.coords(), data)?;
    Ok(residuals(p.coords(), data).iter().map(|v| v * v).sum())
}

/// `∇h(P) = 2 g*(P_Ω(g(PPᵀ) − D⋆)) P`.
pub fn sstress_gradient(p: &PointSet, data: &DistanceData) -> Result<DMatrix<f64>> {
    check_shape(p.coords(), data)?;
    Ok(twice_adjoint_mul(data, &residuals(p.coords(), data), p.coords()))
}

/// One Barzilai-Borwein step: BB1 `‖S‖²/⟨S,Dg⟩` on even `k`, BB2
/// `⟨S,Dg⟩/‖Dg‖²` on odd `k`, capped at `eta_max` and clamped below by
/// `eta_min` when present. `None` flags a vanishing denominator.
pub fn bb_step(s: &DMatrix<f64>, dg: &DMatrix<f64>, k: usize, eta_max: f64, eta_min: Option<f64>) -> Option<f64> {
    let sd = frob_dot(s, dg);
    let raw = if k % 2 == 0 {
        if sd == 0.0 {
            return None;
        }
        s.norm_squared() / sd
    } else {
        let dd = dg.norm_squared();
        if dd == 0.0 {
            return None;
        }
        sd / dd
    };
    if !raw.is_finite() {
        return None;
    }
    let eta = raw.min(eta_max);
    Some(match eta_min {
        Some(lo) => eta.max(lo),
        None => eta,
    })
}

/// `σ̂₁⋆ = c1 · σ₁(P̂P̂ᵀ)` and `μ̂ = c2 · n/(r σ̂₁⋆) · max_Ω D_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub sigma1: f64,
    pub mu: f64,
}

pub fn estimate_params(data: &DistanceData, p_hat: &PointSet, c1: f64, c2: f64) -> Result<ParamEstimate> {
    if data.is_empty() {
        return Err(invalid("no sampled distances"));
    }
    check_shape(p_hat.coords(), data)?;
    let sigma1 = c1 * top_gram_eigenvalue(p_hat.coords());
    if !(sigma1 > 0.0) {
        return Err(invalid("initial estimate has zero Gram matrix"));
    }
    let d_max = data.values().iter().copied().fold(0.0, f64::max);
    let mu = c2 * data.n() as f64 / (p_hat.r() as f64 * sigma1) * d_max;
    Ok(ParamEstimate { sigma1, mu })
}

fn top_gram_eigenvalue(p: &DMatrix<f64>) -> f64 {
    sym_eigen_desc(&(p.transpose() * p)).0[0]
}

#[derive(Clone, Copy, PartialEq)]
enum Descent {
    Pseudo,
    SStress,
}

/// APGD from the trimmed OS-MDS estimate.
pub fn apgd(data: &DistanceData, cfg: &SolverConfig, oracle: Option<&PointSet>) -> Result<SolveResult> {
    cfg.validate()?;
    let init = osmds_init(data, cfg.rank)?;
    iterate(data, cfg, init, oracle, Descent::Pseudo)
}

/// APGD from a caller-supplied starting point (trimmed first when enabled).
pub fn apgd_from(data: &DistanceData, cfg: &SolverConfig, init: PointSet, oracle: Option<&PointSet>) -> Result<SolveResult> {
    cfg.validate()?;
    iterate(data, cfg, init, oracle, Descent::Pseudo)
}

/// Gradient descent on the s-stress from the OS-MDS estimate.
pub fn sstress_gd(data: &DistanceData, cfg: &SolverConfig, oracle: Option<&PointSet>) -> Result<SolveResult> {
    cfg.validate()?;
    let init = osmds_init(data, cfg.rank)?;
    iterate(data, cfg, init, oracle, Descent::SStress)
}

struct Evaluated {
    /// Stopping statistic and the recorded `g1`.
    norm: f64,
    /// What the step multiplies.
    direction: DMatrix<f64>,
}

fn evaluate(data: &DistanceData, p: &DMatrix<f64>, descent: Descent, step: &StepRule) -> Evaluated {
    let res = residuals(p, data);
    match descent {
        Descent::Pseudo => {
            let g = sampled_gradient_from(data, &res, p);
            let norm = g.norm();
            let direction = match step {
                StepRule::Fixed { .. } => g / data.p(),
                StepRule::Bb { .. } => g,
            };
            Evaluated { norm, direction }
        }
        Descent::SStress => {
            let g = twice_adjoint_mul(data, &res, p);
            Evaluated { norm: g.norm(), direction: g }
        }
    }
}

struct Oracle {
    target: PointSet,
}

impl Oracle {
    /// `(g2, r, dist)` at `p`.
    ///
    /// Trimming moves the centroid and the centered gradient never moves it
    /// back, so `r` and `dist` are taken on `J P`, the configuration the
    /// iterate's distances actually determine.
    fn measure(&self, data: &DistanceData, p: &DMatrix<f64>) -> Result<(f64, f64, f64)> {
        let mut pc = p.clone();
        center_columns(&mut pc);
        let ps = PointSet::new(pc.clone())?;
        let align = procrustes_align(&ps, &self.target)?;
        let r = relative_gram_error_aligned(&ps, &self.target, &align);
        // entries of g⁺(PPᵀ − G⋆) on Ω from the centered factors
        let q = self.target.coords();
        let vals: Vec<f64> = data
            .mask()
            .iter()
            .map(|(i, j)| {
                let mut e = 0.0;
                for c in 0..p.ncols() {
                    e += pc[(i, c)] * pc[(j, c)];
                }
                for c in 0..q.ncols() {
                    e -= q[(i, c)] * q[(j, c)];
                }
                -0.5 * e
            })
            .collect();
        let g2 = twice_adjoint_mul(data, &vals, p).norm();
        Ok((g2, r, align.dist))
    }
}

fn iterate(
    data: &DistanceData,
    cfg: &SolverConfig,
    init: PointSet,
    oracle: Option<&PointSet>,
    descent: Descent,
) -> Result<SolveResult> {
    let n = data.n();
    if init.n() != n || init.r() != cfg.rank {
        return Err(invalid(format!(
            "initial point is {}x{}, expected {n}x{}",
            init.n(),
            init.r(),
            cfg.rank
        )));
    }
    let oracle = match (cfg.record_oracle, oracle) {
        (true, Some(o)) => {
            if o.n() != n || o.r() != cfg.rank {
                return Err(invalid("oracle shape does not match the problem"));
            }
            Some(Oracle { target: o.to_centered() })
        }
        (true, None) => return Err(invalid("record_oracle is set but no oracle was supplied")),
        (false, _) => None,
    };
    let tau = cfg.trim.map(|t| t.radius(n, cfg.rank));

    let mut p = init.into_coords();
    if let Some(tau) = tau {
        trim_rows(&mut p, tau);
    }
    let sigma_hat = top_gram_eigenvalue(&p);
    let sigma_ref = cfg.trim.map_or(sigma_hat, |t| t.sigma1);
    let guard = if sigma_ref > 0.0 { 1e12 * sigma_ref.sqrt() } else { f64::INFINITY };

    let mut eta = match cfg.step {
        StepRule::Fixed { eta } => eta,
        StepRule::Bb { eta_max, .. } => {
            if sigma_hat > 0.0 {
                (1.0 / sigma_hat).min(eta_max)
            } else {
                eta_max
            }
        }
    };

    let mut records = Vec::new();
    let mut cur = evaluate(data, &p, descent, &cfg.step);
    let mut k = 0;
    let termination = loop {
        let mut rec = IterRecord {
            g1: cur.norm,
            g2: None,
            r: None,
            dist: None,
            eta: None,
        };
        if let Some(o) = &oracle {
            let (g2, r, dist) = o.measure(data, &p)?;
            rec.g2 = Some(g2);
            rec.r = Some(r);
            rec.dist = Some(dist);
        }
        if cur.norm <= cfg.tol_grad {
            records.push(rec);
            break Termination::GradientTol;
        }
        if k == cfg.max_iters {
            records.push(rec);
            break Termination::MaxIters;
        }
        rec.eta = Some(eta);
        records.push(rec);

        let mut next = &p - &cur.direction * eta;
        if let Some(tau) = tau {
            trim_rows(&mut next, tau);
        }
        if next.iter().any(|v| !v.is_finite() || v.abs() > guard) {
            return Err(Error::Divergence {
                iteration: k + 1,
                last_finite: Box::new(PointSet::new(p)?),
            });
        }
        let nxt = evaluate(data, &next, descent, &cfg.step);
        if let StepRule::Bb { eta_max, eta_min } = cfg.step {
            let s = &next - &p;
            let dg = &nxt.direction - &cur.direction;
            eta = bb_step(&s, &dg, k, eta_max, eta_min).unwrap_or(eta_max);
        }
        p = next;
        cur = nxt;
        k += 1;
    };

    let iterations = records.len();
    Ok(SolveResult {
        points: PointSet::centered(p)?,
        trajectory: Trajectory { records, termination },
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edm::{draw_mask, forward_edm, gram_from_edm, sample_distances, SampleMask};
    use crate::metrics::{ground_truth_stats, recovery_error_points};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, r: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointSet::centered(DMatrix::from_fn(n, r, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    fn random_matrix(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, r, |_, _| rng.sample(StandardNormal))
    }

    /// `(2/p) g⁺(P_Ω(g(PPᵀ) − D⋆)) P` with every operator applied densely.
    fn dense_pseudo_gradient(p: &DMatrix<f64>, data: &DistanceData) -> DMatrix<f64> {
        let n = data.n();
        let gp = forward_edm(&(p * p.transpose())).unwrap();
        let mut res = DMatrix::zeros(n, n);
        for (i, j, d) in data.iter() {
            res[(i, j)] = gp[(i, j)] - d;
            res[(j, i)] = gp[(j, i)] - d;
        }
        gram_from_edm(&res).unwrap() * p * (2.0 / data.p())
    }

    #[test]
    fn osmds_exact_at_full_sampling() {
        let star = gaussian(40, 2, 1);
        let data = sample_distances(&star, &SampleMask::full(40)).unwrap();
        let p = osmds_init(&data, 2).unwrap();
        let err = (p.gram() - star.gram()).norm() / star.gram().norm();
        assert!(err < 1e-9, "{err:e}");
        assert!(p.is_centered());
    }

    #[test]
    fn osmds_of_zero_distances_is_zero() {
        let mask = SampleMask::full(6);
        let data = DistanceData::new(mask, vec![0.0; 15]).unwrap();
        assert!(osmds_init(&data, 2).unwrap().coords().amax() < 1e-15);
        let empty = DistanceData::new(SampleMask::from_pairs(6, 0.5, 0, vec![]).unwrap(), vec![]).unwrap();
        assert!(osmds_init(&empty, 2).is_err());
    }

    #[test]
    fn trim_cases() {
        let t = Trimming { mu: 1.0, sigma1: 4.0, c_ip: 1.0 };
        let tau = t.radius(4, 1);
        assert!((tau - 1.0).abs() < 1e-15);
        let under = PointSet::new(DMatrix::from_column_slice(4, 1, &[0.5, -0.5, 0.2, -0.2])).unwrap();
        assert_eq!(trim(&under, &t), under);
        let over = PointSet::new(DMatrix::from_column_slice(4, 1, &[2.0, -0.5, 0.2, -0.2])).unwrap();
        let out = trim(&over, &t);
        assert_eq!(out.coords()[(0, 0)], 1.0);
        assert_eq!(&out.coords().rows(1, 3), &over.coords().rows(1, 3));

        let p = PointSet::new(random_matrix(50, 3, 2)).unwrap();
        let t = Trimming { mu: 1.2, sigma1: 10.0, c_ip: 1.5 };
        let tau = t.radius(50, 3);
        let out = trim(&p, &t);
        for i in 0..50 {
            let row = p.coords().row(i);
            let proj = if row.norm() > tau { row * (tau / row.norm()) } else { row.into_owned() };
            assert!((out.coords().row(i) - proj).amax() < 1e-14);
            assert!(out.row_norm(i) <= tau * (1.0 + 1e-12));
        }
    }

    #[test]
    fn pseudo_gradient_vanishes_at_truth() {
        let star = gaussian(30, 2, 3);
        let data = sample_distances(&star, &draw_mask(30, 0.4, 9).unwrap()).unwrap();
        assert!(pseudo_gradient(&star, &data).unwrap().amax() < 1e-12);
        assert!(sstress_gradient(&star, &data).unwrap().amax() < 1e-12);
    }

    #[test]
    fn pseudo_gradient_matches_population_gradient_at_full_mask() {
        let star = gaussian(25, 2, 4);
        let data = sample_distances(&star, &SampleMask::full(25)).unwrap();
        let p = PointSet::centered(random_matrix(25, 2, 5)).unwrap();
        let got = pseudo_gradient(&p, &data).unwrap();
        let pop = (p.gram() - star.gram()) * p.coords() * 2.0;
        assert!((&got - &pop).norm() <= 1e-10 * pop.norm());
    }

    #[test]
    fn pseudo_gradient_matches_dense_path() {
        for seed in 0..5 {
            let star = gaussian(60, 3, seed);
            let data = sample_distances(&star, &draw_mask(60, 0.3, seed + 100).unwrap()).unwrap();
            // uncentered P exercises both centerings
            let p = PointSet::new(random_matrix(60, 3, seed + 200)).unwrap();
            let got = pseudo_gradient(&p, &data).unwrap();
            let want = dense_pseudo_gradient(p.coords(), &data);
            assert!((&got - &want).norm() <= 1e-10 * want.norm());
        }
    }

    #[test]
    fn sstress_gradient_matches_finite_differences() {
        let star = gaussian(15, 2, 6);
        let data = sample_distances(&star, &draw_mask(15, 0.5, 7).unwrap()).unwrap();
        let p = random_matrix(15, 2, 8);
        let grad = sstress_gradient(&PointSet::new(p.clone()).unwrap(), &data).unwrap();
        let h = 1e-5;
        let mut fd = DMatrix::zeros(15, 2);
        for i in 0..15 {
            for c in 0..2 {
                let mut a = p.clone();
                let mut b = p.clone();
                a[(i, c)] += h;
                b[(i, c)] -= h;
                let fa = sstress(&PointSet::new(a).unwrap(), &data).unwrap();
                let fb = sstress(&PointSet::new(b).unwrap(), &data).unwrap();
                fd[(i, c)] = (fa - fb) / (2.0 * h);
            }
        }
        assert!((&grad - &fd).norm() <= 1e-5 * grad.norm());

        let empty = DistanceData::new(SampleMask::from_pairs(15, 0.5, 0, vec![]).unwrap(), vec![]).unwrap();
        assert_eq!(sstress_gradient(&PointSet::new(p).unwrap(), &empty).unwrap().amax(), 0.0);
    }

    #[test]
    fn bb_step_cases() {
        let s = random_matrix(10, 2, 1);
        assert!((bb_step(&s, &s, 0, 5.0, None).unwrap() - 1.0).abs() < 1e-15);
        assert!((bb_step(&s, &s, 1, 5.0, None).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(bb_step(&s, &s, 0, 0.5, None), Some(0.5));
        let neg = -&s;
        assert!(bb_step(&s, &neg, 0, 5.0, None).unwrap() < 0.0);
        assert!(bb_step(&s, &neg, 1, 5.0, None).unwrap() < 0.0);
        assert_eq!(bb_step(&s, &neg, 0, 5.0, Some(0.1)), Some(0.1));
        let tiny = &s * 1e3;
        assert_eq!(bb_step(&s, &tiny, 1, 5.0, Some(0.01)), Some(0.01));
        let zero = DMatrix::zeros(10, 2);
        assert_eq!(bb_step(&s, &zero, 0, 5.0, None), None);
        assert_eq!(bb_step(&s, &zero, 1, 5.0, None), None);
    }

    #[test]
    fn estimate_params_cases() {
        let star = gaussian(60, 2, 11);
        let data = sample_distances(&star, &SampleMask::full(60)).unwrap();
        let p_hat = osmds_init(&data, 2).unwrap();
        let est = estimate_params(&data, &p_hat, 1.0, 1.0).unwrap();
        let truth = ground_truth_stats(&star, 2).unwrap();
        assert!((est.sigma1 - truth.sigma1).abs() <= 1e-9 * truth.sigma1);

        let scaled = data.scaled(9.0).unwrap();
        let p_scaled = osmds_init(&scaled, 2).unwrap();
        let est_s = estimate_params(&scaled, &p_scaled, 1.0, 1.0).unwrap();
        assert!((est_s.sigma1 / est.sigma1 - 9.0).abs() < 1e-9);
        assert!((est_s.mu / est.mu - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_sampling_fixed_step_converges() {
        let star = gaussian(100, 2, 12);
        let data = sample_distances(&star, &SampleMask::full(100)).unwrap();
        let sigma1 = ground_truth_stats(&star, 2).unwrap().sigma1;
        let cfg = SolverConfig {
            rank: 2,
            step: StepRule::Fixed { eta: 0.1 / sigma1 },
            trim: None,
            tol_grad: 1e-9,
            max_iters: 2000,
            record_oracle: true,
        };
        let out = apgd(&data, &cfg, Some(&star)).unwrap();
        assert_eq!(out.iterations, out.trajectory.len());
        assert!(out.trajectory.records.last().unwrap().r.unwrap() < 1e-6);
        assert!(out.trajectory.records.iter().all(|r| r.g1 >= 0.0));
    }

    #[test]
    fn bb_recovers_moderate_problem() {
        let star = gaussian(200, 2, 13);
        let data = sample_distances(&star, &draw_mask(200, 0.3, 14).unwrap()).unwrap();
        let stats = ground_truth_stats(&star, 2).unwrap();
        let mut cfg = SolverConfig::bb(2, 10.0);
        cfg.trim = Some(Trimming { mu: stats.mu, sigma1: stats.sigma1, c_ip: 1.0 });
        cfg.record_oracle = true;
        let out = apgd(&data, &cfg, Some(&star)).unwrap();
        assert!(out.trajectory.converged());
        assert!(recovery_error_points(&out.points, &star).unwrap() < 1e-6);
        let last = out.trajectory.records.last().unwrap();
        assert!(last.g1 <= 1e-6 && last.eta.is_none());
    }

    #[test]
    fn sstress_gd_at_full_sampling() {
        let star = gaussian(60, 2, 15);
        let data = sample_distances(&star, &SampleMask::full(60)).unwrap();
        let cfg = SolverConfig::bb(2, 10.0);
        let out = sstress_gd(&data, &cfg, None).unwrap();
        assert!(out.trajectory.converged());
        assert!(recovery_error_points(&out.points, &star).unwrap() < 1e-6);
        let g = sstress_gradient(&out.points, &data).unwrap();
        assert!(g.norm() <= cfg.tol_grad);
    }

    #[test]
    fn oracle_requirement_and_config_validation() {
        let star = gaussian(20, 2, 16);
        let data = sample_distances(&star, &SampleMask::full(20)).unwrap();
        let mut cfg = SolverConfig::bb(2, 10.0);
        cfg.record_oracle = true;
        assert!(apgd(&data, &cfg, None).is_err());
        cfg.record_oracle = false;
        cfg.step = StepRule::Bb { eta_max: 1.0, eta_min: Some(2.0) };
        assert!(apgd(&data, &cfg, None).is_err());
        cfg.step = StepRule::Fixed { eta: 0.0 };
        assert!(cfg.validate().is_err());
        let json = r#"{"rank":2,"step":{"rule":"bb","eta_max":10},"bogus":1}"#;
        assert!(serde_json::from_str::<SolverConfig>(json).is_err());
        let json = r#"{"rank":2,"step":{"rule":"bb","eta_max":10}}"#;
        let parsed: SolverConfig = serde_json::from_str(json).unwrap();
        assert_eq!(parsed, SolverConfig::bb(2, 10.0));
    }

    #[test]
    fn divergence_is_reported_with_last_finite_iterate() {
        let star = gaussian(30, 2, 17);
        let data = sample_distances(&star, &SampleMask::full(30)).unwrap();
        let cfg = SolverConfig {
            rank: 2,
            step: StepRule::Fixed { eta: 10.0 },
            trim: None,
            tol_grad: 1e-9,
            max_iters: 500,
            record_oracle: false,
        };
        let init = PointSet::new(star.coords() * 1.5).unwrap();
        match apgd_from(&data, &cfg, init, None) {
            Err(Error::Divergence { last_finite, .. }) => {
                assert!(last_finite.coords().iter().all(|v| v.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn oracle_gradients_coincide_at_full_sampling() {
        let star = gaussian(30, 2, 20);
        let data = sample_distances(&star, &SampleMask::full(30)).unwrap();
        let p = random_matrix(30, 2, 21);
        let g1 = sampled_gradient(&PointSet::new(p.clone()).unwrap(), &data).unwrap().norm();
        let oracle = Oracle { target: star.clone() };
        let (g2, r, _) = oracle.measure(&data, &p).unwrap();
        assert!((g1 - g2).abs() <= 1e-10 * g1, "{g1} vs {g2}");
        // r ignores translation of the iterate
        let shifted = p.map(|v| v + 3.0);
        let (_, r_shift, _) = oracle.measure(&data, &shifted).unwrap();
        assert!((r - r_shift).abs() <= 1e-12 * r);
    }

    #[test]
    fn trajectory_csv_layout() {
        let t = Trajectory {
            records: vec![
                IterRecord { g1: 1.0, g2: None, r: None, dist: None, eta: Some(0.5) },
                IterRecord { g1: 0.5, g2: Some(0.4), r: Some(0.1), dist: Some(0.2), eta: None },
            ],
            termination: Termination::GradientTol,
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "iter,g1,g2,r,dist,eta");
        assert_eq!(lines[1], "0,1e0,,,,5e-1");
        assert_eq!(lines[2].split(',').count(), 6);
    }

    #[test]
    fn sequential_solves_are_bitwise_reproducible() {
        let star = gaussian(80, 2, 18);
        let data = sample_distances(&star, &draw_mask(80, 0.4, 19).unwrap()).unwrap();
        let cfg = SolverConfig::bb(2, 10.0);
        let a = apgd(&data, &cfg, None).unwrap();
        let b = apgd(&data, &cfg, None).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.points, b.points);
    }
}
