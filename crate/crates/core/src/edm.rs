//! EDM operator algebra.
//!
//! `g(G) = diag(G)1ᵀ + 1diag(G)ᵀ − 2G` maps a Gram matrix to its EDM,
//! `g⁺(D) = −½ J D J` inverts it on centered matrices, and
//! `g*(D) = 2(diag(D1) − D)` is the adjoint of `g`. Sampling is over
//! unordered pairs `i < j` under an i.i.d. Bernoulli(`p`) rule; `P_Ω` keeps
//! both `(i, j)` and `(j, i)` for each sampled pair.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dense_double_center, PointSet, SparseSym};

fn require_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if !m.is_square() {
        return Err(invalid(format!("{what}: expected square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(m.nrows())
}

/// `g(G) = diag(G)1ᵀ + 1diag(G)ᵀ − 2G`.
pub fn forward_edm(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = require_square(g, "forward_edm")?;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)]
        }
    }))
}

/// `g⁺(D) = −½ J D J`.
pub fn gram_from_edm(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_square(d, "gram_from_edm")?;
    Ok(dense_double_center(d) * -0.5)
}

/// `g*(D) = 2(diag(D1) − D)`.
pub fn adjoint_g(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = require_square(d, "adjoint_g")?;
    let mut out = d * -2.0;
    for i in 0..n {
        out[(i, i)] += 2.0 * d.row(i).sum();
    }
    Ok(out)
}

/// `g*(S) X = 2(diag(S1) X − S X)` for sparse symmetric `S`.
pub fn adjoint_g_sparse_mul(s: &SparseSym, x: &DMatrix<f64>) -> DMatrix<f64> {
    let sums = s.row_sums();
    let mut out = s.mul_dense(x) * -2.0;
    for (i, rs) in sums.iter().enumerate() {
        for c in 0..x.ncols() {
            out[(i, c)] += 2.0 * rs * x[(i, c)];
        }
    }
    out
}

/// Position of the pair `(i, j)`, `i < j`, in the lexicographic order of
/// `{(i, j) : 0 ≤ i < j < n}`.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Number of unordered pairs `L = n(n − 1)/2`.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// The sampled index set `Ω` together with how it was drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMask {
    n: usize,
    p: f64,
    seed: u64,
    /// Sorted 0-based pairs `(i, j)` with `i < j`.
    pairs: Vec<(u32, u32)>,
}

impl SampleMask {
    /// Builds a mask from explicit pairs; they are validated, sorted and
    /// must not repeat.
    pub fn from_pairs(n: usize, p: f64, seed: u64, mut pairs: Vec<(u32, u32)>) -> Result<Self> {
        check_rate(p)?;
        for &(i, j) in &pairs {
            if i >= j || j as usize >= n {
                return Err(invalid(format!("pair ({i}, {j}) is not 0 <= i < j < {n}")));
            }
        }
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate pair in mask"));
        }
        Ok(Self { n, p, seed, pairs })
    }

    /// Every pair, as drawn at `p = 1`.
    pub fn full(n: usize) -> Self {
        let pairs = (0..n as u32)
            .flat_map(|i| ((i + 1)..n as u32).map(move |j| (i, j)))
            .collect();
        Self {
            n,
            p: 1.0,
            seed: 0,
            pairs,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i as u32, j as u32) } else { (j as u32, i as u32) };
        self.pairs.binary_search(&key).is_ok()
    }

    /// Iterates `(i, j)` as `usize`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(i, j)| (i as usize, j as usize))
    }

    /// `P_Ω(M)` as a sparse symmetric matrix with entries `vals[k]` on pair `k`.
    pub fn sparse_with(&self, vals: &[f64]) -> SparseSym {
        debug_assert_eq!(vals.len(), self.len());
        SparseSym::from_upper(self.n, self.iter().zip(vals).map(|((i, j), &v)| (i, j, v)))
            .expect("mask pairs are upper-triangular and in range")
    }
}

fn check_rate(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("sampling rate {p} outside (0, 1]")));
    }
    Ok(())
}

fn draw_row(n: usize, p: f64, seed: u64, i: usize) -> Vec<(u32, u32)> {
    if p >= 1.0 {
        return ((i + 1)..n).map(|j| (i as u32, j as u32)).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    ((i + 1)..n)
        .filter(|_| rng.random::<f64>() < p)
        .map(|j| (i as u32, j as u32))
        .collect()
}

/// Draws `Ω` under the symmetric Bernoulli rule.
///
/// Row `i` uses its own ChaCha stream keyed by `(seed, i)`, so membership of
/// a pair does not depend on how rows are scheduled.
pub fn draw_mask(n: usize, p: f64, seed: u64) -> Result<SampleMask> {
    if n < 2 {
        return Err(invalid(format!("need at least 2 points, got {n}")));
    }
    check_rate(p)?;
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<(u32, u32)>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(|i| draw_row(n, p, seed, i)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<(u32, u32)>> = (0..n).map(|i| draw_row(n, p, seed, i)).collect();
    Ok(SampleMask {
        n,
        p,
        seed,
        pairs: rows.concat(),
    })
}

/// Observed squared distances on `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceData {
    mask: SampleMask,
    values: Vec<f64>,
}

impl DistanceData {
    pub fn new(mask: SampleMask, values: Vec<f64>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(invalid(format!(
                "{} values for {} sampled pairs",
                values.len(),
                mask.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("squared distance {bad} is not a finite nonnegative value")));
        }
        Ok(Self { mask, values })
    }

    pub fn mask(&self) -> &SampleMask {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.mask.n()
    }

    pub fn p(&self) -> f64 {
        self.mask.p()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(i, j, D⋆_ij)` over the sample.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.mask.iter().zip(&self.values).map(|((i, j), &v)| (i, j, v))
    }

    /// `P_Ω(D⋆)` as a sparse symmetric matrix.
    pub fn to_sparse(&self) -> SparseSym {
        self.mask.sparse_with(&self.values)
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.mask.clone(), self.values.iter().map(|v| v * factor).collect())
    }

    /// Writes the text table: a header `n p seed`, then `i j value` per
    /// observation with 1-based indices.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(32 * (self.len() + 1));
        writeln!(buf, "{} {} {}", self.n(), self.p(), self.mask.seed()).unwrap();
        for (i, j, v) in self.iter() {
            writeln!(buf, "{} {} {}", i + 1, j + 1, v).unwrap();
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (n, p, seed) = loop {
            let Some((idx, line)) = lines.next() else {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing header `n p seed`".into(),
                });
            };
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            let bad = |m: &str| Error::Parse {
                line: idx + 1,
                message: m.to_string(),
            };
            if f.len() != 3 {
                return Err(bad("header must be `n p seed`"));
            }
            let n: usize = f[0].parse().map_err(|_| bad("bad point count"))?;
            let p: f64 = f[1].parse().map_err(|_| bad("bad sampling rate"))?;
            let seed: u64 = f[2].parse().map_err(|_| bad("bad seed"))?;
            break (n, p, seed);
        };
        let mut obs: Vec<(u32, u32, f64)> = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                line: idx + 1,
                message: m.to_string(),
            };
            let f: Vec<&str> = t.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("observation must be `i j value`"));
            }
            let i: usize = f[0].parse().map_err(|_| bad("bad index i"))?;
            let j: usize = f[1].parse().map_err(|_| bad("bad index j"))?;
            let v: f64 = f[2].parse().map_err(|_| bad("bad value"))?;
            if i == 0 || j == 0 || i > n || j > n || i == j {
                return Err(bad("indices must be distinct and within 1..=n"));
            }
            let (a, b) = if i < j { (i - 1, j - 1) } else { (j - 1, i - 1) };
            obs.push((a as u32, b as u32, v));
        }
        obs.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let mask = SampleMask::from_pairs(n, p, seed, obs.iter().map(|o| (o.0, o.1)).collect())?;
        Self::new(mask, obs.into_iter().map(|o| o.2).collect())
    }
}

/// `D⋆_ij = ‖p_i − p_j‖²` for every `(i, j) ∈ Ω`.
pub fn sample_distances(points: &PointSet, mask: &SampleMask) -> Result<DistanceData> {
    if points.n() != mask.n() {
        return Err(invalid(format!("mask over {} points, point set has {}", mask.n(), points.n())));
    }
    let values = mask.iter().map(|(i, j)| points.sq_dist(i, j)).collect();
    DistanceData::new(mask.clone(), values)
}

/// `P_Ω(M)`: entries of `M` on `Ω ∪ Ωᵀ`, zero elsewhere (including the diagonal).
pub fn apply_pomega(m: &DMatrix<f64>, mask: &SampleMask) -> Result<SparseSym> {
    let n = require_square(m, "apply_pomega")?;
    if n != mask.n() {
        return Err(invalid("mask and matrix sizes differ"));
    }
    let vals: Vec<f64> = mask.iter().map(|(i, j)| m[(i, j)]).collect();
    Ok(mask.sparse_with(&vals))
}

/// `R_Ω(M) = g⁺ P_Ω g(M)`.
pub fn apply_romega(m: &DMatrix<f64>, mask: &SampleMask) -> Result<DMatrix<f64>> {
    let n = require_square(m, "apply_romega")?;
    if n != mask.n() {
        return Err(invalid("mask and matrix sizes differ"));
    }
    let vals: Vec<f64> = mask
        .iter()
        .map(|(i, j)| m[(i, i)] + m[(j, j)] - 2.0 * m[(i, j)])
        .collect();
    let s = mask.sparse_with(&vals).to_dense();
    Ok(dense_double_center(&s) * -0.5)
}

/// `R_Ω*(M) = g* P_Ω g⁺(M)`.
pub fn apply_romega_adjoint(m: &DMatrix<f64>, mask: &SampleMask) -> Result<DMatrix<f64>> {
    let n = require_square(m, "apply_romega_adjoint")?;
    if n != mask.n() {
        return Err(invalid("mask and matrix sizes differ"));
    }
    let centered = dense_double_center(m);
    let vals: Vec<f64> = mask.iter().map(|(i, j)| -0.5 * centered[(i, j)]).collect();
    adjoint_g(&mask.sparse_with(&vals).to_dense())
}

/// Which correlation matrix [`build_hw`] produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// `[H_ω]_αβ = ⟨ω_α, ω_β⟩` with `ω_α = (e_i − e_j)(e_i − e_j)ᵀ`.
    Primal,
    /// `[H_ω⁻¹]_αβ = ⟨ν_α, ν_β⟩` with `ν_α = −½ J(e_ie_jᵀ + e_je_iᵀ)J`.
    Dual,
}

/// Largest `n` accepted by [`build_hw`]; the matrix has `L²` entries.
pub const HW_MAX_N: usize = 200;

/// An `L × L` basis correlation matrix over pairs in lexicographic order.
#[derive(Debug, Clone)]
pub struct DualBasisMatrix {
    pub n: usize,
    pub kind: BasisKind,
    pub h: DMatrix<f64>,
}

pub fn build_hw(n: usize, kind: BasisKind) -> Result<DualBasisMatrix> {
    if n > HW_MAX_N {
        return Err(Error::Resource(format!("basis correlation matrix for n = {n} exceeds n <= {HW_MAX_N}")));
    }
    if n < 2 {
        return Err(invalid("need at least 2 points"));
    }
    let pairs: Vec<(usize, usize)> = SampleMask::full(n).iter().collect();
    let l = pairs.len();
    let inv_n = 1.0 / n as f64;
    let jm = |a: usize, b: usize| if a == b { 1.0 - inv_n } else { -inv_n };
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let h = DMatrix::from_fn(l, l, |a, b| {
        let (i, j) = pairs[a];
        let (k, m) = pairs[b];
        match kind {
            BasisKind::Primal => {
                let c = delta(i, k) - delta(i, m) - delta(j, k) + delta(j, m);
                c * c
            }
            // ¼ tr(E_α J E_β J) with E_α = e_ie_jᵀ + e_je_iᵀ
            BasisKind::Dual => 0.5 * (jm(i, k) * jm(j, m) + jm(i, m) * jm(j, k)),
        }
    });
    Ok(DualBasisMatrix { n, kind, h })
}
