//! `edmc`: run experiment grids, solve completion problems and run the
//! verification suite.
//!
//! Exit codes: 0 success, 1 a check or solve failed, 2 usage or config error.

mod output;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use edmc_core::edm::{forward_edm, DistanceData};
use edmc_core::exec::{self, Execution};
use edmc_core::experiments::{self, CellResult, ExperimentKind, FailureGroup, GridSpec, TrajectoryTrial};
use edmc_core::solver::{self, SolverConfig, StepRule, Trimming};
use edmc_core::verify::{self, Status};

use output::{config_hash, csv_writer};

#[derive(Parser)]
#[command(name = "edmc", version, about = "Euclidean distance matrix completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the operator-identity and bound checks.
    Verify {
        /// Smaller sizes and fewer trials.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run a single check group.
        #[arg(long)]
        only: Option<String>,
    },
    /// Run an experiment grid from a JSON config.
    Run {
        /// phase, perturb, trajectory or protein.
        experiment: String,
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to the config's `out` key.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 picks the number of cores.
        #[arg(long, env = "EDMC_WORKERS")]
        workers: Option<usize>,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Validate the config and print the plan without running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Complete a distance file and write the recovered points.
    Solve {
        /// Text file: header `n p seed`, then `i j d` lines (1-based).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rank: usize,
        /// Also write the completed EDM.
        #[arg(long)]
        emit_edm: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Apgd)]
        method: Method,
        /// Cap on Barzilai-Borwein steps.
        #[arg(long, default_value_t = 10.0)]
        eta_max: f64,
        /// Use this fixed step size instead of Barzilai-Borwein steps.
        #[arg(long, conflicts_with = "eta_max")]
        eta: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        /// Skip the incoherence projection.
        #[arg(long)]
        no_trim: bool,
        /// Multiplier on the estimated top Gram eigenvalue.
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        /// Multiplier on the estimated coherence.
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Apgd,
    Sstress,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Check(anyhow::Error),
    Usage(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Check(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Verify { quick, seed, only } => cmd_verify(quick, seed, only.as_deref()),
        Command::Run {
            experiment,
            config,
            out,
            workers,
            seed,
            dry_run,
        } => cmd_run(&experiment, &config, out.as_deref(), workers, seed, dry_run),
        Command::Solve {
            input,
            rank,
            emit_edm,
            out,
            method,
            eta_max,
            eta,
            tol,
            max_iters,
            no_trim,
            c1,
            c2,
        } => {
            let opts = SolveOpts { rank, emit_edm, method, eta_max, eta, tol, max_iters, trim: !no_trim, c1, c2 };
            cmd_solve(&input, &out, &opts)
        }
    };
    match result {
        Ok(code) => code,
        Err(Failure::Check(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_verify(quick: bool, seed: u64, only: Option<&str>) -> Result<ExitCode, Failure> {
    // accept `hw-spectrum` as well as `hw_spectrum`
    let only = only.map(|n| n.replace('-', "_"));
    let only = only.as_deref();
    if let Some(name) = only {
        if !verify::CHECK_NAMES.contains(&name) {
            return Err(usage(anyhow::anyhow!(
                "unknown check {name:?}; expected one of {}",
                verify::CHECK_NAMES.join(", ")
            )));
        }
    }
    let reports = verify::run_checks(only, quick, seed)?;
    println!("{:<26} {:<5} {:>12} {:>12}  details", "check", "status", "measured", "bound");
    for r in &reports {
        let status = match r.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Info => "info",
        };
        println!("{:<26} {:<6} {:>12.4e} {:>12.4e}  {}", r.name, status, r.measured, r.bound, r.details);
    }
    let failed = reports.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        eprintln!("{failed} check(s) failed");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

/// Keys a config may carry besides the grid itself.
const RUN_KEYS: [&str; 4] = ["experiment", "workers", "log_level", "out"];
const LOG_LEVELS: [&str; 4] = ["error", "warn", "info", "debug"];

struct RunConfig {
    grid: GridSpec,
    workers: Option<usize>,
    out: Option<PathBuf>,
    /// Progress messages on stderr.
    verbose: bool,
}

fn load_config(path: &Path, kind: ExperimentKind) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(usage)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| usage(anyhow::anyhow!("config must be a JSON object")))?;
    if let Some(exp) = obj.get("experiment") {
        let exp = exp.as_str().ok_or_else(|| usage(anyhow::anyhow!("`experiment` must be a string")))?;
        let declared: ExperimentKind = exp.parse().map_err(usage)?;
        if declared != kind {
            return Err(usage(anyhow::anyhow!(
                "config declares experiment {exp:?} but {:?} was requested",
                kind.name()
            )));
        }
    }
    let workers = match obj.get("workers") {
        None => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| usage(anyhow::anyhow!("`workers` must be a nonnegative integer")))? as usize,
        ),
    };
    let verbose = match obj.get("log_level") {
        None => true,
        Some(v) => match v.as_str() {
            Some(l) if LOG_LEVELS.contains(&l) => matches!(l, "info" | "debug"),
            _ => {
                return Err(usage(anyhow::anyhow!(
                    "`log_level` must be one of {}",
                    LOG_LEVELS.join(", ")
                )))
            }
        },
    };
    let out = match obj.get("out") {
        None => None,
        Some(v) => Some(PathBuf::from(
            v.as_str().ok_or_else(|| usage(anyhow::anyhow!("`out` must be a path string")))?,
        )),
    };
    for k in RUN_KEYS {
        obj.remove(k);
    }
    let mut grid: GridSpec = serde_json::from_value(value)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(usage)?;
    // protein paths are relative to the config file
    if let Some(base) = path.parent() {
        for p in &mut grid.proteins {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(RunConfig { grid, workers, out, verbose })
}

/// Result files of one run. Each starts with the provenance line; on an
/// interrupted run each also gets a `partial=true` footer.
struct Outputs {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn create(&mut self, rel: &str) -> io::Result<BufWriter<File>> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let w = csv_writer(&path, &self.hash)?;
        self.written.push(path);
        Ok(w)
    }

    fn mark_partial(&self) -> io::Result<()> {
        for path in &self.written {
            let mut f = fs::OpenOptions::new().append(true).open(path)?;
            writeln!(f, "# partial=true")?;
        }
        Ok(())
    }
}

fn cmd_run(
    experiment: &str,
    config: &Path,
    out: Option<&Path>,
    workers: Option<usize>,
    seed: Option<u64>,
    dry_run: bool,
) -> Result<ExitCode, Failure> {
    let kind: ExperimentKind = experiment.parse().map_err(usage)?;
    let RunConfig { mut grid, workers: config_workers, out: config_out, verbose } = load_config(config, kind)?;
    if let Some(s) = seed {
        grid.seed = s;
    }
    grid.validate(kind).map_err(usage)?;
    let out = out
        .map(Path::to_path_buf)
        .or(config_out)
        .ok_or_else(|| usage(anyhow::anyhow!("no output directory: pass --out or set `out` in the config")))?;
    if kind == ExperimentKind::Protein {
        if let Some(missing) = grid.proteins.iter().find(|p| !p.is_file()) {
            return Err(usage(anyhow::anyhow!("protein file {} not found", missing.display())));
        }
    }
    let workers = workers.or(config_workers).unwrap_or(0);
    let exec = Execution::Parallel { workers };
    let hash = config_hash(kind, &grid);

    let cells = match kind {
        ExperimentKind::Protein => grid.proteins.len() * grid.p.len(),
        ExperimentKind::Perturb => grid.n.len() * grid.p.len() * grid.sigma_n.len(),
        _ => grid.n.len() * grid.p.len(),
    };
    if dry_run {
        println!("experiment: {}", kind.name());
        println!("config hash: {hash}");
        println!("cells: {cells}, trials per cell: {}, total solves: {}", grid.trials, cells * grid.trials);
        println!("workers: {}", if workers == 0 { "auto".to_string() } else { workers.to_string() });
        println!("output: {}", out.display());
        return Ok(ExitCode::SUCCESS);
    }

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    if let Err(e) = ctrlc::set_handler(exec::request_stop) {
        eprintln!("warning: no interrupt handler ({e}); an interrupt will lose unfinished cells");
    }
    if verbose {
        eprintln!("running {} ({cells} cells x {} trials)", kind.name(), grid.trials);
    }
    let mut files = Outputs { dir: out.clone(), hash, written: Vec::new() };
    match kind {
        ExperimentKind::Phase => {
            let rows = experiments::run_phase_transition(&grid, exec)?;
            experiments::write_phase_csv(&rows, files.create("phase.csv")?)?;
            print_cells(&rows);
        }
        ExperimentKind::Perturb => {
            let rows = experiments::run_perturbation(&grid, exec)?;
            experiments::write_perturbation_csv(&rows, files.create("perturbation.csv")?)?;
            print_cells(&rows);
        }
        ExperimentKind::Trajectory => {
            let bundle = experiments::run_trajectory(&grid, exec)?;
            for t in &bundle.trials {
                if let Some(tr) = &t.trajectory {
                    tr.write_csv(files.create(&format!("trajectories/n{}_p{}_trial{:03}.csv", t.n, t.p, t.trial))?)?;
                }
            }
            experiments::write_trajectory_summary_csv(&bundle.summaries, files.create("trajectory_summary.csv")?)?;
            write_trajectory_trials(&bundle.trials, files.create("trajectory_trials.csv")?)?;
            println!("{:>6} {:>6} {:>10} {:>12} {:>12} {:>10}", "n", "p", "success", "pseudo-only", "linear fits", "g1/g2");
            for s in &bundle.summaries {
                println!(
                    "{:>6} {:>6} {:>10} {:>12} {:>12} {:>10.3}",
                    s.n,
                    s.p,
                    format!("{}/{}", s.successes, s.trials),
                    s.pseudo_only_failures,
                    format!("{}/{}", s.linear_fits, s.successes),
                    s.median_g_ratio
                );
            }
        }
        ExperimentKind::Protein => {
            let report = experiments::run_protein(&grid, exec)?;
            experiments::write_protein_csv(&report.rows, files.create("protein.csv")?)?;
            let mut log = BufWriter::new(File::create(out.join("pdb_ingest.jsonl"))?);
            for st in &report.ingest {
                writeln!(log, "{}", serde_json::to_string(st)?)?;
            }
            log.flush()?;
            for (name, why) in &report.skipped {
                eprintln!("skipped {name}: {why}");
            }
            println!("{:>8} {:>6} {:>7} {:>7} {:>6} {:>10} {:>12}", "protein", "n", "mu", "kappa", "p", "success", "mean RE");
            for r in &report.rows {
                println!(
                    "{:>8} {:>6} {:>7.4} {:>7.4} {:>6} {:>10} {:>12.3e}",
                    r.protein,
                    r.n,
                    r.mu,
                    r.kappa,
                    r.p,
                    format!("{}/{}", r.successes, r.trials),
                    r.mean_re
                );
            }
            if !report.skipped.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    if exec::stop_requested() {
        files.mark_partial()?;
        eprintln!("interrupted: wrote completed cells to {}", out.display());
        return Ok(ExitCode::from(1));
    }
    if verbose {
        eprintln!("wrote results to {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn print_cells(rows: &[CellResult]) {
    println!("{:>6} {:>6} {:>8} {:>10} {:>12} {:>10} {:>9}", "n", "p", "sigma_n", "success", "mean RE", "mean iters", "mean s");
    for c in rows {
        println!(
            "{:>6} {:>6} {:>8} {:>10} {:>12.3e} {:>10.1} {:>9.3}",
            c.n,
            c.p,
            c.sigma_n.map_or("-".to_string(), |s| s.to_string()),
            format!("{}/{}", c.successes, c.trials),
            c.mean_re,
            c.mean_iters,
            c.mean_seconds
        );
    }
}

fn write_trajectory_trials(trials: &[TrajectoryTrial], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "n,p,trial,success,re,iterations,slope,r_squared,group,g_ratio")?;
    for t in trials {
        let group = match t.group {
            Some(FailureGroup::PseudoOnly) => "pseudo_only",
            Some(FailureGroup::Neither) => "neither",
            None => "",
        };
        writeln!(
            w,
            "{},{},{},{},{:e},{},{},{},{},{}",
            t.n,
            t.p,
            t.trial,
            t.outcome.success,
            t.outcome.re,
            t.outcome.iterations,
            t.fit.map_or(String::new(), |f| f.slope.to_string()),
            t.fit.map_or(String::new(), |f| f.r_squared.to_string()),
            group,
            t.g_ratio.map_or(String::new(), |r| r.to_string()),
        )?;
    }
    w.flush()
}

struct SolveOpts {
    rank: usize,
    emit_edm: bool,
    method: Method,
    eta_max: f64,
    eta: Option<f64>,
    tol: f64,
    max_iters: usize,
    trim: bool,
    c1: f64,
    c2: f64,
}

fn cmd_solve(input: &Path, out: &Path, o: &SolveOpts) -> Result<ExitCode, Failure> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display())).map_err(usage)?;
    let data = DistanceData::read_text(BufReader::new(file))
        .with_context(|| format!("reading {}", input.display()))
        .map_err(usage)?;
    if o.rank == 0 || o.rank >= data.n() {
        return Err(usage(anyhow::anyhow!("rank must lie in [1, n) with n = {}", data.n())));
    }
    let mut cfg = SolverConfig {
        rank: o.rank,
        step: match o.eta {
            Some(eta) => StepRule::Fixed { eta },
            None => StepRule::Bb { eta_max: o.eta_max, eta_min: None },
        },
        trim: None,
        tol_grad: o.tol,
        max_iters: o.max_iters,
        record_oracle: false,
    };
    if o.trim && matches!(o.method, Method::Apgd) {
        let p_hat = solver::osmds_init(&data, o.rank)?;
        let est = solver::estimate_params(&data, &p_hat, o.c1, o.c2)?;
        cfg.trim = Some(Trimming { mu: est.mu, sigma1: est.sigma1, c_ip: 1.0 });
    }
    cfg.validate().map_err(usage)?;
    let hash = config_hash("solve", &cfg);
    let result = match o.method {
        Method::Apgd => solver::apgd(&data, &cfg, None),
        Method::Sstress => solver::sstress_gd(&data, &cfg, None),
    };
    let res = match result {
        Ok(r) => r,
        Err(e @ edmc_core::Error::Divergence { .. }) => return Err(Failure::Check(e.into())),
        Err(e) => return Err(e.into()),
    };
    fs::create_dir_all(out)?;
    let mut pts = csv_writer(&out.join("points.csv"), &hash)?;
    let header: Vec<String> = (1..=o.rank).map(|c| format!("x{c}")).collect();
    writeln!(pts, "i,{}", header.join(","))?;
    for i in 0..res.points.n() {
        let row: Vec<String> = res.points.coords().row(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(pts, "{},{}", i + 1, row.join(","))?;
    }
    pts.flush()?;
    res.trajectory.write_csv(csv_writer(&out.join("trajectory.csv"), &hash)?)?;
    if o.emit_edm {
        let edm = forward_edm(&res.points.gram())?;
        let mut w = csv_writer(&out.join("edm.csv"), &hash)?;
        for i in 0..edm.nrows() {
            let row: Vec<String> = edm.row(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
    }
    let last = res.trajectory.records.last().map_or(f64::NAN, |r| r.g1);
    let _ = writeln!(
        io::stderr(),
        "{} after {} iterates, gradient norm {last:e}",
        if res.trajectory.converged() { "converged" } else { "stopped at the iteration cap" },
        res.iterations
    );
    Ok(ExitCode::SUCCESS)
}
