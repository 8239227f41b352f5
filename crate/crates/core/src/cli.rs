//! Command-line front end. Exit codes: 0 success, 1 invariant or runtime
//! failure, 2 configuration or usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config_with_overrides, DatumSource, ModelSpec, RunConfig};
use crate::diagnostics::{check_invariants, diag_row, trajectory_wavefront, CheckStatus, InvariantReport};
use crate::ensemble::{run_ensemble, sample_initial_datum, sample_tree_datum, RandomDatumSpec};
use crate::integrator::{integrate, Trajectory};
use crate::io::{emit_timeseries, fmt_f64, write_json, Manifest};
use crate::model::ShellState;
use crate::tree::{picard_time, tree_diag_row, tree_sobolev_norm, TreeParams};
use crate::verify::run_suite;

pub const THREADS_ENV: &str = "DYADIC_CASCADE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dyadic-cascade", version, about = "Dyadic shell models of the 3D Euler equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one chain model and write time series and diagnostics.
    Simulate(RunArgs),
    /// Integrate many random data in parallel.
    Ensemble {
        #[command(flatten)]
        run: RunArgs,
        /// Number of runs (overrides ensemble.runs).
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Integrate a branched tree model.
    Tree(RunArgs),
    /// Print the guaranteed existence horizon of the branched system.
    Picard {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        s: f64,
        /// `||U_0||_{H^s}`
        #[arg(long)]
        norm: f64,
    },
    /// Run the built-in invariant suite.
    Verify {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the random datum (overrides datum.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to DYADIC_CASCADE_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Override any config key, e.g. `--set integration.t_end=2`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Config(String),
    Runtime(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) | Failure::Invariant(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let res = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Ensemble { run, runs } => ensemble(&run, runs),
        Command::Tree(a) => tree(&a),
        Command::Picard { d, lambda, s, norm } => match picard_time(norm, d, lambda, s) {
            Ok(t) => {
                println!("{t}");
                Ok(())
            }
            Err(e) => Err(Failure::Config(e.to_string())),
        },
        Command::Verify { inject_fault } => verify(inject_fault),
    };
    match res {
        Ok(()) => 0,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("config error", m),
                Failure::Runtime(m) => ("error", m),
                Failure::Invariant(m) => ("invariant failure", m),
            };
            eprintln!("dyadic-cascade: {kind}: {msg}");
            f.code()
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Failure::Config(format!("{THREADS_ENV} must be an integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn load(a: &RunArgs) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(&a.config).map_err(|e| Failure::Config(format!("{}: {e}", a.config.display())))?;
    let mut cfg = parse_config_with_overrides(&text, &a.overrides).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = a.seed {
        match &mut cfg.datum {
            DatumSource::Random(spec) => spec.seed = seed,
            _ => return Err(Failure::Config("--seed needs a random datum".into())),
        }
    }
    if let Some(out) = &a.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn seeds(cfg: &RunConfig, runs: usize) -> Vec<u64> {
    match &cfg.datum {
        DatumSource::Random(spec) => (0..runs as u64).map(|k| spec.seed.wrapping_add(k)).collect(),
        _ => Vec::new(),
    }
}

fn manifest(cfg: &RunConfig, command: &str, seeds: Vec<u64>, termination: serde_json::Value, start: Instant, files: Vec<String>) -> Manifest {
    Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: cfg.canonical_json(),
        config_hash: cfg.semantic_hash(),
        seeds,
        termination,
        wall_time_s: start.elapsed().as_secs_f64(),
        files,
    }
}

fn termination_json(traj: &Trajectory) -> serde_json::Value {
    json!({
        "kind": traj.termination.label(),
        "t_stop": traj.stats.t_stop,
        "accepted_steps": traj.stats.accepted,
        "rejected_steps": traj.stats.rejected,
    })
}

fn invariant_summary(report: &InvariantReport) -> Result<(), Failure> {
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "n/a",
        };
        println!("  {:<16} {status:<5} worst={}", c.name, fmt_f64(c.worst));
    }
    if report.all_pass() {
        Ok(())
    } else {
        let failed: Vec<&str> =
            report.checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| c.name.as_str()).collect();
        Err(Failure::Invariant(failed.join(", ")))
    }
}

fn chain_datum(cfg: &RunConfig, n: usize, lambda: f64) -> Result<ShellState, Failure> {
    Ok(match &cfg.datum {
        DatumSource::UnitMode(j) => ShellState::unit_mode(n, *j),
        DatumSource::Vector(v) => ShellState::new(0.0, v.clone()),
        DatumSource::Random(spec) => sample_initial_datum(spec, lambda).map_err(|e| Failure::Config(e.to_string()))?,
    })
}

fn simulate(a: &RunArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = load(a)?;
    resolve_threads(a.threads)?;
    let ModelSpec::Chain(p) = &cfg.model else {
        return Err(Failure::Config("simulate needs a chain model; use `tree` for branched models".into()));
    };
    let u0 = chain_datum(&cfg, p.n_shells(), p.lambda())?;
    let traj = integrate(p, &u0, &cfg.integration).map_err(|e| Failure::Config(e.to_string()))?;
    let d = &cfg.diagnostics;
    let rows: Vec<_> = traj.samples.iter().map(|s| diag_row(s, p.lambda(), d.hs, &d.sobolev)).collect();
    let dir = &cfg.output.dir;
    let mut files = emit_timeseries(dir, &traj, &rows, &d.sobolev).map_err(runtime)?;

    let report = if d.invariants {
        let r = check_invariants(&traj, p, &d.tolerances).map_err(runtime)?;
        write_json(&dir.join("invariants.json"), &r).map_err(runtime)?;
        files.push("invariants.json".into());
        Some(r)
    } else {
        None
    };
    if d.wavefront && !cfg.integration.event_levels.is_empty() {
        if let Ok(w) = trajectory_wavefront(&traj) {
            write_json(&dir.join("wavefront.json"), &w).map_err(runtime)?;
            files.push("wavefront.json".into());
        }
    }
    files.push(crate::io::MANIFEST_FILE.into());
    manifest(&cfg, "simulate", seeds(&cfg, 1), termination_json(&traj), start, files)
        .write(dir)
        .map_err(runtime)?;

    println!("{} at t={} ({} steps)", traj.termination.label(), fmt_f64(traj.stats.t_stop), traj.stats.accepted);
    match report {
        Some(r) => invariant_summary(&r),
        None => Ok(()),
    }
}

fn ensemble(a: &RunArgs, runs: Option<usize>) -> Result<(), Failure> {
    let start = Instant::now();
    let mut cfg = load(a)?;
    let threads = resolve_threads(a.threads)?;
    if let Some(n) = runs {
        if n == 0 {
            return Err(Failure::Config("--runs must be >= 1".into()));
        }
        cfg.ensemble.runs = n;
    }
    let ModelSpec::Chain(p) = &cfg.model else {
        return Err(Failure::Config("ensemble needs a chain model".into()));
    };
    let DatumSource::Random(spec) = &cfg.datum else {
        return Err(Failure::Config("ensemble needs a random datum".into()));
    };
    let summary = run_ensemble(p, spec, cfg.ensemble.runs, &cfg.integration, cfg.ensemble.r, threads)
        .map_err(|e| Failure::Config(e.to_string()))?;

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    write_ensemble_csv(&dir.join("ensemble.csv"), &summary.runs).map_err(runtime)?;
    write_json(&dir.join("summary.json"), &summary).map_err(runtime)?;
    let files = vec!["ensemble.csv".into(), "summary.json".into(), crate::io::MANIFEST_FILE.into()];
    let term = json!({
        "runs": summary.runs.len(),
        "blowups": summary.blowups,
        "non_completed": summary.non_completed,
    });
    manifest(&cfg, "ensemble", seeds(&cfg, cfg.ensemble.runs), term, start, files).write(dir).map_err(runtime)?;

    println!(
        "{} runs, {} blowups, {} not completed, max sup H^{} = {}",
        summary.runs.len(),
        summary.blowups,
        summary.non_completed,
        cfg.ensemble.r,
        fmt_f64(summary.max_sup_hr)
    );
    let tol = cfg.diagnostics.tolerances.energy_rel;
    let worst = summary.runs.iter().map(|r| r.max_rel_energy_drift).fold(0.0, f64::max);
    if cfg.diagnostics.invariants && worst > tol {
        return Err(Failure::Invariant(format!("energy drift {worst:e} exceeds {tol:e}")));
    }
    Ok(())
}

fn write_ensemble_csv(path: &Path, runs: &[crate::ensemble::RunRecord]) -> Result<(), crate::io::IoError> {
    let mut text = String::from(
        "seed,initial_hs,initial_hr,sup_hr,initial_u0_sq_ratio,final_u0_sq_ratio,u0_max_rise,max_rel_energy_drift,termination,t_stop\n",
    );
    for r in runs {
        let nums = [
            r.initial_hs,
            r.initial_hr,
            r.sup_hr,
            r.initial_u0_sq_ratio,
            r.final_u0_sq_ratio,
            r.u0_max_rise,
            r.max_rel_energy_drift,
        ]
        .map(fmt_f64)
        .join(",");
        text.push_str(&format!("{},{nums},{},{}\n", r.seed, r.termination.label(), fmt_f64(r.t_stop)));
    }
    fs::write(path, text).map_err(|source| crate::io::IoError::Io { path: path.to_path_buf(), source })
}

fn tree_datum(cfg: &RunConfig, p: &TreeParams) -> Result<ShellState, Failure> {
    Ok(match &cfg.datum {
        DatumSource::UnitMode(j) => ShellState::unit_mode(p.node_count(), *j),
        DatumSource::Vector(v) => ShellState::new(0.0, v.clone()),
        DatumSource::Random(spec) => {
            let spec = RandomDatumSpec { n_shells: p.node_count(), ..spec.clone() };
            sample_tree_datum(&spec, p).map_err(|e| Failure::Config(e.to_string()))?
        }
    })
}

fn tree(a: &RunArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = load(a)?;
    resolve_threads(a.threads)?;
    let ModelSpec::Tree(p) = &cfg.model else {
        return Err(Failure::Config("tree needs a branched model".into()));
    };
    let u0 = tree_datum(&cfg, p)?;
    let traj = integrate(p, &u0, &cfg.integration).map_err(|e| Failure::Config(e.to_string()))?;
    let d = &cfg.diagnostics;
    let rows: Vec<_> = traj.samples.iter().map(|s| tree_diag_row(p, s.t, &s.u, d.hs, &d.sobolev)).collect();
    let dir = &cfg.output.dir;
    let mut files = emit_timeseries(dir, &traj, &rows, &d.sobolev).map_err(runtime)?;

    let e0 = rows[0].energy;
    let drift = rows.iter().map(|r| (r.energy - e0).abs() / if e0 > 0.0 { e0 } else { 1.0 }).fold(0.0, f64::max);
    let norm = tree_sobolev_norm(p, &u0.u, d.hs);
    let horizon = picard_time(norm, p.d(), p.lambda(), d.hs).ok();
    let summary = json!({
        "max_rel_energy_drift": drift,
        "initial_hs": norm,
        "picard_time": horizon,
        "nodes": p.node_count(),
    });
    write_json(&dir.join("summary.json"), &summary).map_err(runtime)?;
    files.push("summary.json".into());
    files.push(crate::io::MANIFEST_FILE.into());
    manifest(&cfg, "tree", seeds(&cfg, 1), termination_json(&traj), start, files).write(dir).map_err(runtime)?;

    println!("{} at t={} ({} nodes)", traj.termination.label(), fmt_f64(traj.stats.t_stop), p.node_count());
    if let Some(t) = horizon {
        println!("picard horizon {}", fmt_f64(t));
    }
    let tol = d.tolerances.energy_rel;
    if d.invariants && drift > tol {
        return Err(Failure::Invariant(format!("energy drift {drift:e} exceeds {tol:e}")));
    }
    Ok(())
}

fn verify(inject_fault: bool) -> Result<(), Failure> {
    let out = run_suite(inject_fault);
    for c in &out {
        println!("{} {:<26} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = out.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(Failure::Invariant(format!("{failed} of {} checks failed", out.len())));
    }
    println!("all {} checks passed", out.len());
    Ok(())
}
