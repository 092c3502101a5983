//! Monte Carlo experiment families: phase transition, perturbed
//! initialization, trajectory study and protein recovery.
//!
//! A grid is flattened into `(cell, trial)` jobs and handed to
//! [`Execution::map`]; each job derives its seeds from its grid coordinates
//! alone, and per-cell statistics are computed from the order-preserved
//! results. Reruns are therefore identical regardless of worker count.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::edm::{draw_mask, sample_distances};
use crate::error::{invalid, Error, Result};
use crate::exec::{stop_requested, Execution};
use crate::linalg::PointSet;
use crate::metrics::{ground_truth_stats, quotient_dist, recovery_error_points, GroundTruthStats};
use crate::pdb::{read_pdb_file, IngestStats};
use crate::seeding::TrialSeeds;
use crate::solver::{apgd, apgd_from, sstress_gd, SolveResult, SolverConfig, StepRule, Trajectory, Trimming};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Phase,
    Perturb,
    Trajectory,
    Protein,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Phase => "phase",
            Self::Perturb => "perturb",
            Self::Trajectory => "trajectory",
            Self::Protein => "protein",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase" => Ok(Self::Phase),
            "perturb" | "perturbation" => Ok(Self::Perturb),
            "trajectory" => Ok(Self::Trajectory),
            "protein" => Ok(Self::Protein),
            other => Err(invalid(format!("unknown experiment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    #[default]
    Gaussian,
    /// Uniform over `[−0.5, 0.5]^r`.
    UniformCube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Apgd,
    Sstress,
}

/// Step rule as written in a config; `safeguarded` derives
/// `η_max = 2/(pσ₁μrκ)` and `η_min = 1/(2pσ₁μrκ)` from the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepTemplate {
    Fixed {
        eta: f64,
    },
    Bb {
        eta_max: f64,
        #[serde(default)]
        eta_min: Option<f64>,
    },
    Safeguarded,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverTemplate {
    #[serde(default)]
    pub step: Option<StepTemplate>,
    /// Defaults to on for APGD and off for the s-stress baseline.
    #[serde(default)]
    pub trim: Option<bool>,
    #[serde(default)]
    pub c_ip: Option<f64>,
    #[serde(default)]
    pub tol_grad: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    #[serde(default)]
    pub sigma_n: Vec<f64>,
    #[serde(default)]
    pub rank: Option<usize>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub points: Option<PointKind>,
    #[serde(default)]
    pub method: Method,
    /// Success means RE at or below this value.
    #[serde(default)]
    pub success_re: Option<f64>,
    #[serde(default)]
    pub solver: SolverTemplate,
    #[serde(default)]
    pub proteins: Vec<PathBuf>,
    /// Reuse one ground truth per cell instead of drawing one per trial.
    #[serde(default)]
    pub fixed_ground_truth: bool,
}

impl GridSpec {
    pub fn rank(&self, kind: ExperimentKind) -> usize {
        self.rank.unwrap_or(if kind == ExperimentKind::Protein { 3 } else { 2 })
    }

    pub fn success_re(&self, kind: ExperimentKind) -> f64 {
        self.success_re.unwrap_or(if kind == ExperimentKind::Perturb { 1e-5 } else { 1e-3 })
    }

    pub fn points(&self, kind: ExperimentKind) -> PointKind {
        self.points.unwrap_or(if kind == ExperimentKind::Perturb {
            PointKind::UniformCube
        } else {
            PointKind::Gaussian
        })
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.p.is_empty() || self.p.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(invalid("p must be a nonempty list of rates in (0, 1]"));
        }
        let r = self.rank(kind);
        if r == 0 {
            return Err(invalid("rank must be at least 1"));
        }
        match kind {
            ExperimentKind::Protein => {
                if self.proteins.is_empty() {
                    return Err(invalid("protein experiment needs at least one PDB path"));
                }
            }
            _ => {
                if self.n.is_empty() || self.n.iter().any(|&n| n <= r) {
                    return Err(invalid(format!("n must be a nonempty list of sizes above the rank {r}")));
                }
            }
        }
        if kind == ExperimentKind::Perturb
            && (self.sigma_n.is_empty() || self.sigma_n.iter().any(|s| !(*s >= 0.0 && s.is_finite())))
        {
            return Err(invalid("perturbation experiment needs nonnegative sigma_n values"));
        }
        if let Some(s) = self.success_re {
            if !(s > 0.0) {
                return Err(invalid("success_re must be positive"));
            }
        }
        // surface solver-level errors before any trial runs
        let probe = GroundTruthStats {
            sigma1: 1.0,
            sigma_r: 1.0,
            kappa: 1.0,
            mu: 1.0,
        };
        self.solver_config(kind, &probe, self.p[0])?.validate()
    }

    /// Concrete solver configuration for one trial.
    pub fn solver_config(&self, kind: ExperimentKind, truth: &GroundTruthStats, p: f64) -> Result<SolverConfig> {
        let r = self.rank(kind);
        let t = &self.solver;
        let default_step = if kind == ExperimentKind::Trajectory {
            StepTemplate::Safeguarded
        } else {
            StepTemplate::Bb {
                eta_max: 10.0,
                eta_min: None,
            }
        };
        let step = match t.step.unwrap_or(default_step) {
            StepTemplate::Fixed { eta } => StepRule::Fixed { eta },
            StepTemplate::Bb { eta_max, eta_min } => StepRule::Bb { eta_max, eta_min },
            StepTemplate::Safeguarded => {
                let base = p * truth.sigma1 * truth.mu * r as f64 * truth.kappa;
                StepRule::Bb {
                    eta_max: 2.0 / base,
                    eta_min: Some(0.5 / base),
                }
            }
        };
        let trim_on = t.trim.unwrap_or(self.method == Method::Apgd);
        let c_ip = t.c_ip.unwrap_or(1.0);
        if c_ip < 1.0 {
            return Err(invalid("c_ip must be at least 1"));
        }
        Ok(SolverConfig {
            rank: r,
            step,
            trim: trim_on.then_some(Trimming {
                mu: truth.mu,
                sigma1: truth.sigma1,
                c_ip,
            }),
            tol_grad: t.tol_grad.unwrap_or(if kind == ExperimentKind::Perturb { 1e-8 } else { 1e-6 }),
            max_iters: t.max_iters.unwrap_or(1000),
            record_oracle: kind == ExperimentKind::Trajectory,
        })
    }

    fn trial_seeds(&self, cell: &[u64], trial: usize) -> TrialSeeds {
        let mut seeds = TrialSeeds::new(self.seed, cell, trial as u64);
        if self.fixed_ground_truth {
            seeds.points = TrialSeeds::new(self.seed, cell, 0).points;
        }
        seeds
    }
}

/// Draws `n` points in `R^r` and removes the column means.
pub fn gen_pointset(kind: PointKind, n: usize, r: usize, seed: u64) -> Result<PointSet> {
    if n <= r || r == 0 {
        return Err(invalid(format!("need n > r ≥ 1, got n = {n}, r = {r}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = match kind {
        PointKind::Gaussian => DMatrix::from_fn(n, r, |_, _| rng.sample(StandardNormal)),
        PointKind::UniformCube => DMatrix::from_fn(n, r, |_, _| rng.random_range(-0.5..=0.5)),
    };
    PointSet::centered(coords)
}

/// Outcome of a single solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub re: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub diverged: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub p: f64,
    pub sigma_n: Option<f64>,
    pub trials: usize,
    pub successes: usize,
    pub diverged: usize,
    pub mean_re: f64,
    pub median_re: f64,
    pub mean_iters: f64,
    pub mean_seconds: f64,
    /// Mean `‖Δ₀‖²_F / σ_r⋆` of the starting points (perturbation only).
    pub delta0_sq_over_sigma_r: Option<f64>,
}

impl CellResult {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, c) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if c == 0 { f64::NAN } else { s / c as f64 }
}

fn summarize(n: usize, p: f64, sigma_n: Option<f64>, outcomes: &[TrialOutcome]) -> CellResult {
    let mut res: Vec<f64> = outcomes.iter().map(|o| o.re).collect();
    CellResult {
        n,
        p,
        sigma_n,
        trials: outcomes.len(),
        successes: outcomes.iter().filter(|o| o.success).count(),
        diverged: outcomes.iter().filter(|o| o.diverged).count(),
        mean_re: mean(res.iter().copied()),
        median_re: median(&mut res),
        mean_iters: mean(outcomes.iter().map(|o| o.iterations as f64)),
        mean_seconds: mean(outcomes.iter().map(|o| o.seconds)),
        delta0_sq_over_sigma_r: None,
    }
}

/// Runs a solve and scores it; divergence becomes a failed trial scored on
/// the last finite iterate.
fn score(
    truth: &PointSet,
    threshold: f64,
    solve: impl FnOnce() -> Result<SolveResult>,
) -> Result<(TrialOutcome, Option<Trajectory>)> {
    let start = Instant::now();
    let outcome = solve();
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(out) => {
            let re = recovery_error_points(&out.points, truth)?;
            Ok((
                TrialOutcome {
                    re,
                    iterations: out.iterations,
                    seconds,
                    diverged: false,
                    success: re <= threshold,
                },
                Some(out.trajectory),
            ))
        }
        Err(Error::Divergence { iteration, last_finite }) => {
            let re = recovery_error_points(&last_finite, truth).unwrap_or(f64::INFINITY);
            Ok((
                TrialOutcome {
                    re,
                    iterations: iteration,
                    seconds,
                    diverged: true,
                    success: false,
                },
                None,
            ))
        }
        Err(e) => Err(e),
    }
}

/// Runs `trials` jobs per cell and regroups the results by cell, in cell
/// order. Once a stop has been requested, jobs that have not started are
/// skipped and any cell missing a trial is left out.
fn run_cells<C, R, F>(exec: Execution, cells: &[C], trials: usize, f: F) -> Result<Vec<(C, Vec<R>)>>
where
    C: Copy + Send + Sync,
    R: Send,
    F: Fn(C, usize) -> Result<R> + Send + Sync,
{
    let jobs: Vec<(C, usize)> = cells
        .iter()
        .flat_map(|&c| (0..trials).map(move |t| (c, t)))
        .collect();
    let results = exec.map(jobs, |(c, t)| (!stop_requested()).then(|| f(c, t)).transpose());
    let mut it = results.into_iter();
    let mut out = Vec::with_capacity(cells.len());
    for &c in cells {
        let chunk: Vec<Option<R>> = it.by_ref().take(trials).collect::<Result<_>>()?;
        if let Some(done) = chunk.into_iter().collect::<Option<Vec<R>>>() {
            out.push((c, done));
        }
    }
    Ok(out)
}

/// Reference edge `p = 10 log(n) / n`.
pub fn reference_edge(n: usize) -> f64 {
    10.0 * (n as f64).ln() / n as f64
}

/// Success rates over an `(n, p)` grid from OS-MDS-initialized solves.
pub fn run_phase_transition(spec: &GridSpec, exec: Execution) -> Result<Vec<CellResult>> {
    let kind = ExperimentKind::Phase;
    spec.validate(kind)?;
    let r = spec.rank(kind);
    let threshold = spec.success_re(kind);
    let cells: Vec<(usize, usize)> = (0..spec.n.len())
        .flat_map(|ni| (0..spec.p.len()).map(move |pi| (ni, pi)))
        .collect();
    let done = run_cells(exec, &cells, spec.trials, |(ni, pi), t| -> Result<TrialOutcome> {
        let (n, p) = (spec.n[ni], spec.p[pi]);
        let seeds = spec.trial_seeds(&[ni as u64, pi as u64], t);
        let truth = gen_pointset(spec.points(kind), n, r, seeds.points)?;
        let stats = ground_truth_stats(&truth, r)?;
        let data = sample_distances(&truth, &draw_mask(n, p, seeds.mask)?)?;
        let cfg = spec.solver_config(kind, &stats, p)?;
        Ok(score(&truth, threshold, || match spec.method {
            Method::Apgd => apgd(&data, &cfg, None),
            Method::Sstress => sstress_gd(&data, &cfg, None),
        })?
        .0)
    })?;
    Ok(done
        .iter()
        .map(|&((ni, pi), ref chunk)| summarize(spec.n[ni], spec.p[pi], None, chunk))
        .collect())
}

/// APGD from `J(P⋆ + σ_n E)` with Gaussian `E`, bypassing OS-MDS.
pub fn run_perturbation(spec: &GridSpec, exec: Execution) -> Result<Vec<CellResult>> {
    let kind = ExperimentKind::Perturb;
    spec.validate(kind)?;
    let r = spec.rank(kind);
    let threshold = spec.success_re(kind);
    let mut cells = Vec::new();
    for ni in 0..spec.n.len() {
        for pi in 0..spec.p.len() {
            for si in 0..spec.sigma_n.len() {
                cells.push((ni, pi, si));
            }
        }
    }
    let done = run_cells(exec, &cells, spec.trials, |(ni, pi, si), t| -> Result<(TrialOutcome, f64)> {
        let (n, p, sigma) = (spec.n[ni], spec.p[pi], spec.sigma_n[si]);
        let seeds = spec.trial_seeds(&[ni as u64, pi as u64, si as u64], t);
        let truth = gen_pointset(spec.points(kind), n, r, seeds.points)?;
        let stats = ground_truth_stats(&truth, r)?;
        let data = sample_distances(&truth, &draw_mask(n, p, seeds.mask)?)?;
        let cfg = spec.solver_config(kind, &stats, p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.noise);
        let noise = DMatrix::from_fn(n, r, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let init = PointSet::centered(truth.coords() + noise)?;
        let d0 = quotient_dist(&init, &truth)?;
        let (outcome, _) = score(&truth, threshold, || apgd_from(&data, &cfg, init, None))?;
        Ok((outcome, d0 * d0 / stats.sigma_r))
    })?;
    Ok(done
        .iter()
        .map(|&((ni, pi, si), ref chunk)| {
            let outcomes: Vec<TrialOutcome> = chunk.iter().map(|(o, _)| o.clone()).collect();
            let mut cell = summarize(spec.n[ni], spec.p[pi], Some(spec.sigma_n[si]), &outcomes);
            cell.delta0_sq_over_sigma_r = Some(mean(chunk.iter().map(|(_, d)| *d)));
            cell
        })
        .collect())
}

/// Least-squares line through `(k, ln r^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub slope: f64,
    pub r_squared: f64,
}

/// Fits `ln r^k` against `k` over the final third of a trace.
pub fn final_third_log_fit(r: &[f64]) -> Option<LogFit> {
    let start = r.len() - r.len() / 3;
    let pts: Vec<(f64, f64)> = r[start..]
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(k, v)| ((start + k) as f64, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LogFit { slope, r_squared })
}

/// How a failed trajectory failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureGroup {
    /// `g1` dropped by three orders of magnitude while `g2` stayed at least
    /// ten times larger.
    PseudoOnly,
    /// Neither quantity settled, or the run diverged.
    Neither,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryTrial {
    pub n: usize,
    pub p: f64,
    pub trial: usize,
    pub outcome: TrialOutcome,
    pub trajectory: Option<Trajectory>,
    pub fit: Option<LogFit>,
    pub group: Option<FailureGroup>,
    /// Median over iterations of `g1 / g2`.
    pub g_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub n: usize,
    pub p: f64,
    pub trials: usize,
    pub successes: usize,
    pub pseudo_only_failures: usize,
    pub other_failures: usize,
    pub linear_fits: usize,
    /// Median over succeeding trials of the per-trial median `g1 / g2`.
    pub median_g_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryBundle {
    pub trials: Vec<TrajectoryTrial>,
    pub summaries: Vec<TrajectorySummary>,
}

fn classify_failure(t: &Trajectory) -> FailureGroup {
    let (Some(first), Some(last)) = (t.records.first(), t.records.last()) else {
        return FailureGroup::Neither;
    };
    let g1_settled = last.g1 <= 1e-3 * first.g1;
    let g2_lags = last.g2.is_some_and(|g2| g2 >= 10.0 * last.g1);
    if g1_settled && g2_lags {
        FailureGroup::PseudoOnly
    } else {
        FailureGroup::Neither
    }
}

/// Oracle-recorded runs for trajectory plots and the succeed/fail split.
pub fn run_trajectory(spec: &GridSpec, exec: Execution) -> Result<TrajectoryBundle> {
    let kind = ExperimentKind::Trajectory;
    spec.validate(kind)?;
    let r = spec.rank(kind);
    let threshold = spec.success_re(kind);
    let cells: Vec<(usize, usize)> = (0..spec.n.len())
        .flat_map(|ni| (0..spec.p.len()).map(move |pi| (ni, pi)))
        .collect();
    let done = run_cells(exec, &cells, spec.trials, |(ni, pi), t| -> Result<TrajectoryTrial> {
        let (n, p) = (spec.n[ni], spec.p[pi]);
        let seeds = spec.trial_seeds(&[ni as u64, pi as u64], t);
        let truth = gen_pointset(spec.points(kind), n, r, seeds.points)?;
        let stats = ground_truth_stats(&truth, r)?;
        let data = sample_distances(&truth, &draw_mask(n, p, seeds.mask)?)?;
        let cfg = spec.solver_config(kind, &stats, p)?;
        let (outcome, trajectory) = score(&truth, threshold, || apgd(&data, &cfg, Some(&truth)))?;
        let fit = trajectory
            .as_ref()
            .and_then(|tr| final_third_log_fit(&tr.records.iter().filter_map(|x| x.r).collect::<Vec<_>>()));
        let group = (!outcome.success).then(|| trajectory.as_ref().map_or(FailureGroup::Neither, classify_failure));
        let g_ratio = trajectory.as_ref().map(|tr| {
            let mut ratios: Vec<f64> = tr
                .records
                .iter()
                .filter_map(|x| x.g2.filter(|g2| *g2 > 0.0).map(|g2| x.g1 / g2))
                .collect();
            median(&mut ratios)
        });
        Ok(TrajectoryTrial {
            n,
            p,
            trial: t,
            outcome,
            trajectory,
            fit,
            group,
            g_ratio,
        })
    })?;
    let summaries = done
        .iter()
        .map(|&((ni, pi), ref chunk)| {
            let ok: Vec<&TrajectoryTrial> = chunk.iter().filter(|t| t.outcome.success).collect();
            let mut ratios: Vec<f64> = ok.iter().filter_map(|t| t.g_ratio).collect();
            TrajectorySummary {
                n: spec.n[ni],
                p: spec.p[pi],
                trials: chunk.len(),
                successes: ok.len(),
                pseudo_only_failures: chunk.iter().filter(|t| t.group == Some(FailureGroup::PseudoOnly)).count(),
                other_failures: chunk.iter().filter(|t| t.group == Some(FailureGroup::Neither)).count(),
                linear_fits: ok
                    .iter()
                    .filter(|t| t.fit.is_some_and(|f| f.slope < 0.0 && f.r_squared >= 0.9))
                    .count(),
                median_g_ratio: median(&mut ratios),
            }
        })
        .collect();
    let trials = done.into_iter().flat_map(|(_, chunk)| chunk).collect();
    Ok(TrajectoryBundle { trials, summaries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinRow {
    pub protein: String,
    pub n: usize,
    pub mu: f64,
    pub kappa: f64,
    pub p: f64,
    pub trials: usize,
    pub successes: usize,
    pub mean_re: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinReport {
    pub rows: Vec<ProteinRow>,
    pub ingest: Vec<IngestStats>,
    /// Proteins that could not be ingested, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Sweeps `p` over each protein with `rank`-dimensional recovery.
pub fn run_protein(spec: &GridSpec, exec: Execution) -> Result<ProteinReport> {
    let kind = ExperimentKind::Protein;
    spec.validate(kind)?;
    let r = spec.rank(kind);
    let threshold = spec.success_re(kind);
    let mut loaded = Vec::new();
    let mut ingest = Vec::new();
    let mut skipped = Vec::new();
    for path in &spec.proteins {
        let name = path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let parsed = read_pdb_file(path).and_then(|(pts, st)| {
            ingest.push(st);
            ground_truth_stats(&pts, r).map(|s| (pts, s))
        });
        match parsed {
            Ok((pts, stats)) => loaded.push((name, pts, stats)),
            Err(e) => skipped.push((name, e.to_string())),
        }
    }
    let cells: Vec<(usize, usize)> = (0..loaded.len())
        .flat_map(|k| (0..spec.p.len()).map(move |pi| (k, pi)))
        .collect();
    let done = run_cells(exec, &cells, spec.trials, |(k, pi), t| -> Result<TrialOutcome> {
        let (_, truth, stats) = &loaded[k];
        let p = spec.p[pi];
        let seeds = spec.trial_seeds(&[k as u64, pi as u64], t);
        let data = sample_distances(truth, &draw_mask(truth.n(), p, seeds.mask)?)?;
        let cfg = spec.solver_config(kind, stats, p)?;
        Ok(score(truth, threshold, || match spec.method {
            Method::Apgd => apgd(&data, &cfg, None),
            Method::Sstress => sstress_gd(&data, &cfg, None),
        })?
        .0)
    })?;
    let rows = done
        .iter()
        .map(|&((k, pi), ref chunk)| {
            let (name, truth, stats) = &loaded[k];
            ProteinRow {
                protein: name.clone(),
                n: truth.n(),
                mu: stats.mu,
                kappa: stats.kappa,
                p: spec.p[pi],
                trials: chunk.len(),
                successes: chunk.iter().filter(|o| o.success).count(),
                mean_re: mean(chunk.iter().map(|o| o.re)),
            }
        })
        .collect();
    Ok(ProteinReport { rows, ingest, skipped })
}

pub fn write_phase_csv<W: Write>(rows: &[CellResult], mut out: W) -> std::io::Result<()> {
    // wall-clock time is left out so reruns are byte-identical
    writeln!(out, "n,p,trials,successes,diverged,mean_re,median_re,mean_iters,ref_edge")?;
    for c in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:e},{:e},{},{:.6}",
            c.n,
            c.p,
            c.trials,
            c.successes,
            c.diverged,
            c.mean_re,
            c.median_re,
            c.mean_iters,
            reference_edge(c.n)
        )?;
    }
    Ok(())
}

pub fn write_perturbation_csv<W: Write>(rows: &[CellResult], mut out: W) -> std::io::Result<()> {
    writeln!(out, "p,sigma_n,trials,successes,mean_re,delta0_sq_over_sigmar")?;
    for c in rows {
        writeln!(
            out,
            "{},{},{},{},{:e},{:e}",
            c.p,
            c.sigma_n.unwrap_or(f64::NAN),
            c.trials,
            c.successes,
            c.mean_re,
            c.delta0_sq_over_sigma_r.unwrap_or(f64::NAN)
        )?;
    }
    Ok(())
}

pub fn write_trajectory_summary_csv<W: Write>(rows: &[TrajectorySummary], mut out: W) -> std::io::Result<()> {
    writeln!(out, "n,p,trials,successes,pseudo_only_failures,other_failures,linear_fits,median_g_ratio")?;
    for s in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.n, s.p, s.trials, s.successes, s.pseudo_only_failures, s.other_failures, s.linear_fits, s.median_g_ratio
        )?;
    }
    Ok(())
}

pub fn write_protein_csv<W: Write>(rows: &[ProteinRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "protein,n,mu,kappa,p,mean_re")?;
    for r in rows {
        writeln!(out, "{},{},{:.4},{:.4},{},{:e}", r.protein, r.n, r.mu, r.kappa, r.p, r.mean_re)?;
    }
    Ok(())
}
