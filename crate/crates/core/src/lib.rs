//! Euclidean distance matrix completion from Bernoulli-sampled squared distances.
//!
//! The crate reconstructs an `n`-point configuration in `R^r` from a random
//! subset of its squared pairwise distances. The pipeline is a one-step MDS
//! spectral initializer followed by asymmetric projected gradient descent
//! (APGD) along the preconditioned pseudo-gradient `2 g⁺ P_Ω(g(PPᵀ) − D⋆) P`,
//! with either a fixed step or Barzilai-Borwein steps and an optional
//! row-norm trimming step that keeps iterates incoherent.
//!
//! Module map:
//!
//! - [`linalg`]: centering, truncated PSD factorization, Procrustes alignment,
//!   dense and matrix-free symmetric eigensolvers.
//! - [`edm`]: the Gram/EDM maps `g`, `g⁺`, `g*`, sampling masks and the sampled
//!   operators `P_Ω`, `R_Ω`, `R_Ω*`.
//! - [`solver`]: OS-MDS, trimming, APGD and the s-stress gradient baseline.
//! - [`metrics`]: quotient distance, spectral/recovery errors, coherence.
//! - [`verify`]: randomized checks of operator identities and concentration bounds.
//! - [`experiments`]: seeded Monte Carlo sweeps run over trials in parallel.
//! - [`pdb`]: fixed-column PDB coordinate ingest.
//!
//! With the default `parallel` feature, trial sweeps fan out over a rayon
//! pool; without it every sweep runs sequentially and produces identical
//! results.

pub mod edm;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod pdb;
pub mod seeding;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{PointSet, SymMatrix};
