//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails. Criteria that need external data report NOT RUN when the
//! data is absent, unless `EDMC_REQUIRE_PDB=1`.

use std::path::PathBuf;
use std::time::Instant;

use edmc_core::edm::{draw_mask, sample_distances, DistanceData, SampleMask};
use edmc_core::exec::Execution;
use edmc_core::experiments::{gen_pointset, run_phase_transition, run_trajectory, GridSpec, PointKind};
use edmc_core::linalg::PointSet;
use edmc_core::metrics::{ground_truth_stats, spectral_error_factors};
use edmc_core::pdb::read_pdb_file;
use edmc_core::solver::{apgd, apgd_from, osmds_init, pseudo_gradient, sstress, sstress_gradient, SolverConfig, StepRule, Trimming};
use edmc_core::verify;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

enum Verdict {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn judge(ok: bool, details: String) -> Verdict {
    if ok { Verdict::Pass(details) } else { Verdict::Fail(details) }
}

fn gaussian(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, r, |_, _| rng.sample(StandardNormal))
}

fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// `(2/p) · (−½ J P_Ω(g(PPᵀ) − D⋆) J) · P`, every operator a dense matrix.
fn dense_pseudo_gradient(p: &DMatrix<f64>, data: &DistanceData) -> DMatrix<f64> {
    let n = p.nrows();
    let g = p * p.transpose();
    let mut s = DMatrix::zeros(n, n);
    for (i, j, d) in data.iter() {
        let v = g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)] - d;
        s[(i, j)] = v;
        s[(j, i)] = v;
    }
    let j = centering(n);
    (&j * s * &j) * (-0.5) * p * (2.0 / data.p())
}

fn operator_identities() -> Verdict {
    let mut reports = Vec::new();
    for n in [5, 50, 300] {
        reports.push(verify::check_dual_identity(n, 10, 1).unwrap());
        reports.push(verify::check_adjoint_pairings(n, 0.3, 5, 1).unwrap());
    }
    let worst = reports.iter().map(|r| r.measured).fold(0.0, f64::max);
    judge(
        reports.iter().all(|r| r.passed()),
        format!("g⁺g = I and adjoint pairings, n ∈ {{5, 50, 300}}: worst {worst:.2e} ≤ 1e-10"),
    )
}

fn dual_basis_spectrum() -> Verdict {
    let mut spec_worst: f64 = 0.0;
    let mut diag_worst: f64 = 0.0;
    let mut ok = true;
    for n in 3..=20 {
        let s = verify::check_hw_spectrum(n).unwrap();
        let d = verify::check_dual_diagonal(n).unwrap();
        ok &= s.passed() && d.passed();
        spec_worst = spec_worst.max(s.measured);
        diag_worst = diag_worst.max(d.measured);
    }
    judge(ok, format!("n = 3..20: spectrum dev {spec_worst:.2e} ≤ 1e-8, dual diagonal dev {diag_worst:.2e} ≤ 1e-10"))
}

fn gradient_correctness() -> Verdict {
    let (n, r, h) = (12, 2, 1e-5);
    let star = PointSet::centered(gaussian(n, r, 31)).unwrap();
    let p = PointSet::centered(gaussian(n, r, 32)).unwrap();
    let data = sample_distances(&star, &draw_mask(n, 0.5, 33).unwrap()).unwrap();
    let grad = sstress_gradient(&p, &data).unwrap();
    let mut fd = DMatrix::zeros(n, r);
    for i in 0..n {
        for c in 0..r {
            let mut a = p.coords().clone();
            let mut b = p.coords().clone();
            a[(i, c)] += h;
            b[(i, c)] -= h;
            let fa = sstress(&PointSet::new(a).unwrap(), &data).unwrap();
            let fb = sstress(&PointSet::new(b).unwrap(), &data).unwrap();
            fd[(i, c)] = (fa - fb) / (2.0 * h);
        }
    }
    let fd_err = (&grad - &fd).norm() / fd.norm();

    let full = sample_distances(&star, &SampleMask::full(n)).unwrap();
    let pg = pseudo_gradient(&p, &full).unwrap();
    let pop = (p.coords() * p.coords().transpose() - star.coords() * star.coords().transpose()) * p.coords() * 2.0;
    let pop_err = (&pg - &pop).norm() / pop.norm();
    judge(
        fd_err <= 1e-5 && pop_err <= 1e-8,
        format!("s-stress vs finite differences {fd_err:.2e} ≤ 1e-5; pseudo-gradient at p = 1 vs population {pop_err:.2e} ≤ 1e-8"),
    )
}

fn sparse_dense_equivalence() -> Verdict {
    let sizes = [10, 25, 40, 60, 80, 100, 130, 160, 200, 240, 280, 320, 360, 400, 420, 440, 460, 480, 490, 500];
    let mut worst: f64 = 0.0;
    for (k, &n) in sizes.iter().enumerate() {
        let seed = 100 + k as u64;
        let r = 2 + k % 2;
        let star = PointSet::centered(gaussian(n, r, seed)).unwrap();
        let rate = [0.1, 0.3, 0.7][k % 3];
        let data = sample_distances(&star, &draw_mask(n, rate, seed).unwrap()).unwrap();
        let p = PointSet::new(gaussian(n, r, seed + 1000)).unwrap();
        let fast = pseudo_gradient(&p, &data).unwrap();
        let dense = dense_pseudo_gradient(p.coords(), &data);
        worst = worst.max((&fast - &dense).norm() / dense.norm());
    }
    judge(worst <= 1e-10, format!("20 instances, n ≤ 500: worst relative gap {worst:.2e} ≤ 1e-10"))
}

fn phase_transition() -> Verdict {
    let spec: GridSpec = serde_json::from_value(serde_json::json!({
        "n": [500], "p": [0.02, 0.2], "trials": 50, "seed": 2024,
        "solver": {"c_ip": 1.0, "step": {"rule": "bb", "eta_max": 10.0}}
    }))
    .unwrap();
    let cells = run_phase_transition(&spec, Execution::Auto).unwrap();
    let low = cells[0].success_rate();
    let high = cells[1].success_rate();
    judge(
        high >= 0.9 && low <= 0.1,
        format!("n = 500: success {high:.2} at p = 0.2 (≥ 0.9), {low:.2} at p = 0.02 (≤ 0.1)"),
    )
}

fn osmds_quality() -> Verdict {
    let (n, p, trials) = (1000, 0.2, 100u64);
    let errors = Execution::Auto.map((0..trials).collect(), |t| {
        let star = gen_pointset(PointKind::Gaussian, n, 2, 5000 + t).unwrap();
        let data = sample_distances(&star, &draw_mask(n, p, 9000 + t).unwrap()).unwrap();
        let p_hat = osmds_init(&data, 2).unwrap();
        spectral_error_factors(&p_hat, &star).unwrap()
    });
    let good = errors.iter().filter(|&&e| e < 1.0).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    judge(good >= 95, format!("n = 1000, p = 0.2: SE < 1 in {good}/100 trials (≥ 95), worst SE {worst:.3}"))
}

fn linear_convergence() -> Verdict {
    let spec: GridSpec =
        serde_json::from_value(serde_json::json!({"n": [1500], "p": [0.1], "trials": 20, "seed": 77})).unwrap();
    let bundle = run_trajectory(&spec, Execution::Auto).unwrap();
    let ok: Vec<_> = bundle.trials.iter().filter(|t| t.outcome.success).collect();
    let linear = ok.iter().filter(|t| t.fit.is_some_and(|f| f.slope < 0.0 && f.r_squared >= 0.9)).count();
    let min_r2 = ok.iter().filter_map(|t| t.fit.map(|f| f.r_squared)).fold(1.0, f64::min);
    judge(
        ok.len() >= 16 && linear == ok.len(),
        format!(
            "n = 1500, p = 0.1, safeguarded BB: {}/20 succeed (≥ 16); {linear}/{} linear fits, min R² {min_r2:.4}",
            ok.len(),
            ok.len()
        ),
    )
}

fn contraction() -> Verdict {
    let (n, p, r, steps) = (300, 0.5, 2, 200);
    let c_c = 80.0 / 7.0;
    let outcomes = Execution::Auto.map((0..20u64).collect(), |t| {
        let star = gen_pointset(PointKind::Gaussian, n, r, 700 + t).unwrap();
        let stats = ground_truth_stats(&star, r).unwrap();
        let data = sample_distances(&star, &draw_mask(n, p, 800 + t).unwrap()).unwrap();
        // start inside the basin: ‖Δ‖²_F = σ_r / (2 c_c)
        let e = gaussian(n, r, 900 + t);
        let scale = (stats.sigma_r / (2.0 * c_c)).sqrt() / e.norm();
        let init = PointSet::centered(star.coords() + e * scale).unwrap();
        // largest step the per-step lemma admits, with c_I = 1
        let eta = 1.0 / (168.0 * stats.sigma1 * stats.mu * r as f64 * stats.kappa);
        let cfg = SolverConfig {
            rank: r,
            step: StepRule::Fixed { eta },
            trim: Some(Trimming { mu: stats.mu, sigma1: stats.sigma1, c_ip: 1.0 }),
            tol_grad: 1e-300,
            max_iters: steps,
            record_oracle: true,
        };
        let out = apgd_from(&data, &cfg, init, Some(&star)).unwrap();
        let dist: Vec<f64> = out.trajectory.records.iter().map(|x| x.dist.unwrap()).collect();
        let monotone = dist.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        (monotone, dist[0], *dist.last().unwrap(), dist.len() - 1)
    });
    let good = outcomes.iter().filter(|o| o.0).count();
    let shrink = outcomes.iter().map(|o| o.2 / o.1).fold(0.0, f64::max);
    let steps_run = outcomes.iter().map(|o| o.3).min().unwrap_or(0);
    judge(
        good >= 19 && steps_run == steps,
        format!("n = 300, p = 0.5, fixed step: monotone ‖Δ_k‖_F over {steps_run} steps in {good}/20 (≥ 19); worst final/initial {shrink:.4}"),
    )
}

fn pdb_dir() -> PathBuf {
    std::env::var_os("EDMC_PDB_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/pdb"))
}

fn find_pdb(id: &str) -> Option<PathBuf> {
    let dir = pdb_dir();
    let lower = id.to_lowercase();
    [format!("{id}.pdb"), format!("{lower}.pdb"), format!("pdb{lower}.ent"), format!("{id}.PDB")]
        .into_iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
}

/// Smallest p on a grid at which the mean RE over 3 trials drops below 1e-3.
fn transition_p(truth: &PointSet, seed: u64) -> Option<f64> {
    let stats = ground_truth_stats(truth, 3).ok()?;
    for (k, &p) in [0.01, 0.02, 0.03, 0.05, 0.08, 0.12, 0.2, 0.3].iter().enumerate() {
        let mut cfg = SolverConfig::bb(3, 10.0);
        cfg.trim = Some(Trimming { mu: stats.mu, sigma1: stats.sigma1, c_ip: 1.0 });
        let res: Vec<f64> = (0..3u64)
            .map(|t| {
                let data = sample_distances(truth, &draw_mask(truth.n(), p, seed + 10 * k as u64 + t).unwrap()).unwrap();
                match apgd(&data, &cfg, None) {
                    Ok(out) => edmc_core::metrics::recovery_error_points(&out.points, truth).unwrap(),
                    Err(_) => f64::INFINITY,
                }
            })
            .collect();
        if res.iter().sum::<f64>() / 3.0 < 1e-3 {
            return Some(p);
        }
    }
    None
}

fn protein_parameters() -> Verdict {
    let require = std::env::var("EDMC_REQUIRE_PDB").is_ok_and(|v| v == "1");
    let Some(path) = find_pdb("1AX8") else {
        let msg = format!("1AX8 not found in {} (set EDMC_PDB_DIR)", pdb_dir().display());
        return if require { Verdict::Fail(msg) } else { Verdict::NotRun(msg) };
    };
    let (pts, ingest) = match read_pdb_file(&path) {
        Ok(v) => v,
        Err(e) => return Verdict::Fail(format!("cannot parse {}: {e}", path.display())),
    };
    let stats = ground_truth_stats(&pts, 3).unwrap();
    let n_ok = (950..=1050).contains(&pts.n());
    let kappa_ok = (stats.kappa / 2.9567 - 1.0).abs() <= 0.05;
    let mu_ok = (stats.mu / 1.8653 - 1.0).abs() <= 0.10;
    let summary = format!(
        "1AX8: n = {} (dropped {} HETATM, {} altloc), κ = {:.4}, μ = {:.4}",
        pts.n(),
        ingest.n_dropped_hetatm,
        ingest.n_dropped_altloc,
        stats.kappa,
        stats.mu
    );
    if n_ok && kappa_ok && mu_ok {
        return Verdict::Pass(summary);
    }
    // out of band: the ordering claim must still hold
    match (find_pdb("1KDH"), find_pdb("1I7W")) {
        (Some(a), Some(b)) => {
            let (pa, _) = read_pdb_file(&a).unwrap();
            let (pb, _) = read_pdb_file(&b).unwrap();
            let ta = transition_p(&pa, 1);
            let tb = transition_p(&pb, 2);
            let ordered = matches!((ta, tb), (Some(x), Some(y)) if y > x) || (ta.is_some() && tb.is_none());
            judge(ordered, format!("{summary} outside bands; transition 1KDH {ta:?} vs 1I7W {tb:?}"))
        }
        _ => Verdict::Fail(format!("{summary} outside bands and 1KDH/1I7W absent for the ordering check")),
    }
}

fn probabilistic_bounds() -> Verdict {
    let graph = verify::check_random_graph_bound(500, 0.2, 20, 11).unwrap();
    let q = verify::check_qomega_bound(200, 0.3, 20, 12).unwrap();
    judge(
        graph.passed() && q.passed(),
        format!(
            "random graph (500, 0.2): {:.1} ≤ {:.1}; sensing bound (200, 0.3): max LHS/RHS {:.3} ≤ 1",
            graph.measured, graph.bound, q.measured
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("operator identities", operator_identities),
        ("dual-basis spectrum", dual_basis_spectrum),
        ("gradient correctness", gradient_correctness),
        ("sparse-path equivalence", sparse_dense_equivalence),
        ("phase transition", phase_transition),
        ("OS-MDS quality", osmds_quality),
        ("linear convergence", linear_convergence),
        ("contraction", contraction),
        ("protein parameters", protein_parameters),
        ("probabilistic bounds", probabilistic_bounds),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, details) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::NotRun(d) => ("NOT RUN", d),
        };
        println!("[{tag}] {name}: {details} ({secs:.1}s)");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
