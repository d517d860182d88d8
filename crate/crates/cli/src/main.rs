//! Command-line front end for the chokesim workbench.
//!
//! Exit codes: 0 success, 2 validation failure, 3 solver failure.

use chokesim::analytic::{self, SteadyInput};
use chokesim::harness::{self, Scenario};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "chokesim", version, about = "CHOKe queue analysis and simulation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// Rates on the command line are always multiples of the link capacity C;
// absolute units appear only in scenario files.
#[derive(Subcommand)]
enum Command {
    /// Solve the steady-state operating point (mu0, h0) for a UDP rate.
    Steady(SteadyArgs),
    /// Emit the spatial distribution profile (y, rho0, v, tau) as CSV.
    Profile(ProfileArgs),
    /// Emit the transient utilization curve (dT, mu0) after a rate change.
    Transient(TransientArgs),
    /// Print the extreme (peak or dip) utilization after a rate change.
    Extreme(ExtremeArgs),
    /// Run a simulation scenario and write the aggregated trace.
    Simulate(SimulateArgs),
    /// Run a scenario and compare the simulation against the analytic models.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SteadyArgs {
    /// UDP arrival rate as a multiple of C.
    #[arg(long, required_unless_present = "sweep")]
    x0: Option<f64>,
    /// RED ambient drop probability.
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    /// Solver tolerance.
    #[arg(long, default_value_t = analytic::DEFAULT_TOL)]
    tol: f64,
    /// Sweep specification lo:hi:steps[:log] or lo:hi:log; writes CSV.
    #[arg(long)]
    sweep: Option<String>,
    /// Output directory for artifacts (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    /// UDP arrival rate as a multiple of C.
    #[arg(long)]
    x0: f64,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    /// Backlog in packets.
    #[arg(long, default_value_t = 1000)]
    b: u32,
    /// Link capacity, packets/second.
    #[arg(long, default_value_t = 2500.0)]
    c: f64,
    /// Number of profile samples.
    #[arg(long, default_value_t = 201)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransientArgs {
    /// UDP rate before the change, multiple of C.
    #[arg(long)]
    x0: f64,
    /// UDP rate after the change, multiple of C.
    #[arg(long)]
    x02: f64,
    #[arg(long, default_value_t = 1000)]
    b: u32,
    #[arg(long, default_value_t = 2500.0)]
    c: f64,
    /// Number of curve points over [0, tau_b].
    #[arg(long, default_value_t = 201)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtremeArgs {
    /// UDP rate before the change, multiple of C.
    #[arg(long)]
    x0: f64,
    /// Rate factor: new rate = alpha * old rate.
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    b: u32,
    #[arg(long, default_value_t = 2500.0)]
    c: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replications (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Write a line-delimited event log of the first replication here.
    #[arg(long)]
    debug_log: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Rate-change times to compare; defaults to every segment boundary
    /// where the rate actually changes.
    #[arg(long = "change-time")]
    change_times: Vec<f64>,
    /// Absolute tolerance on the extreme utilization model-vs-sim gap.
    #[arg(long, default_value_t = 0.05)]
    tol_extreme: f64,
    /// Steady rate-conservation residual bound, fraction of x0.
    #[arg(long, default_value_t = 0.05)]
    tol_residual: f64,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Solver(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<analytic::AnalyticError> for CliError {
    fn from(e: analytic::AnalyticError) -> Self {
        match e {
            analytic::AnalyticError::SolverFailure { .. } => CliError::Solver(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<harness::HarnessError> for CliError {
    fn from(e: harness::HarnessError) -> Self {
        match e {
            harness::HarnessError::Analytic(a) => a.into(),
            harness::HarnessError::Io(io) => CliError::Io(io),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Steady(a) => cmd_steady(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Transient(a) => cmd_transient(a),
        Command::Extreme(a) => cmd_extreme(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Io(e)) => {
            eprintln!("io error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Open `<dir>/<name>` if an output directory was given, stdout otherwise.
fn artifact(out: &Option<PathBuf>, name: &str) -> Result<Box<dyn Write>, CliError> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            let file = fs::File::create(&path)?;
            eprintln!("writing {}", path.display());
            Ok(Box::new(file))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn parse_sweep(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Validation(format!("bad sweep spec '{spec}', want lo:hi:steps[:log]"));
    if parts.len() < 2 || parts.len() > 4 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let (steps, log) = match parts.len() {
        2 => (200, false),
        3 if parts[2] == "log" => (200, true),
        3 => (parts[2].parse().map_err(|_| bad())?, false),
        _ => {
            if parts[3] != "log" {
                return Err(bad());
            }
            (parts[2].parse().map_err(|_| bad())?, true)
        }
    };
    if steps < 2 || !(hi > lo) || (log && lo <= 0.0) {
        return Err(bad());
    }
    let pts = (0..steps)
        .map(|i| {
            let f = i as f64 / (steps - 1) as f64;
            if log {
                lo * (hi / lo).powf(f)
            } else {
                lo + f * (hi - lo)
            }
        })
        .collect();
    Ok(pts)
}

fn check_finite(v: f64, what: &str) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("non-finite {what}: {v}")))
    }
}

fn cmd_steady(a: SteadyArgs) -> Result<(), CliError> {
    if let Some(spec) = &a.sweep {
        let xs = parse_sweep(spec)?;
        let mut w = artifact(&a.out, "steady_sweep.csv")?;
        writeln!(w, "x0,r,mu0,h0")?;
        for x0 in xs {
            let ss = analytic::solve_steady_state(SteadyInput::new(x0, a.r)?, a.tol)?;
            check_finite(ss.mu0, "mu0")?;
            check_finite(ss.h0, "h0")?;
            writeln!(w, "{},{},{},{}", x0, a.r, ss.mu0, ss.h0)?;
        }
        return Ok(());
    }
    let x0 = a.x0.expect("clap enforces x0 unless --sweep");
    let ss = analytic::solve_steady_state(SteadyInput::new(x0, a.r)?, a.tol)?;
    println!("mu0={} h0={}", ss.mu0, ss.h0);
    Ok(())
}

fn cmd_profile(a: ProfileArgs) -> Result<(), CliError> {
    let ss = analytic::solve_steady_state(SteadyInput::new(a.x0, a.r)?, analytic::DEFAULT_TOL)?;
    let profile = analytic::build_profile(&ss, a.b, a.c, a.samples)?;
    let mut w = artifact(&a.out, "profile.csv")?;
    profile.write_csv(&mut w)?;
    if let Some((y, rho)) = profile.critical {
        eprintln!("critical point: y={y} rho0={rho}");
    }
    eprintln!("closure gap: {} packets", profile.closure_gap);
    Ok(())
}

fn cmd_transient(a: TransientArgs) -> Result<(), CliError> {
    let ss = analytic::solve_steady_state(SteadyInput::new(a.x0, 0.0)?, analytic::DEFAULT_TOL)?;
    let coeff = analytic::derive_coefficients(ss, a.b, a.c)?;
    let x02_abs = a.x02 * a.c;
    let mut w = artifact(&a.out, "transient.csv")?;
    writeln!(w, "dT,mu0")?;
    for i in 0..a.steps.max(2) {
        let dt = coeff.tau_b * i as f64 / (a.steps.max(2) - 1) as f64;
        let mu0 = coeff.transient_utilization(x02_abs, dt)?;
        check_finite(mu0, "mu0")?;
        writeln!(w, "{dt},{mu0}")?;
    }
    let alpha = if a.x0 > 0.0 { a.x02 / a.x0 } else { 0.0 };
    eprintln!(
        "tau_b={} mu0_extreme={}",
        coeff.tau_b,
        coeff.extreme_utilization(alpha)?
    );
    Ok(())
}

fn cmd_extreme(a: ExtremeArgs) -> Result<(), CliError> {
    let ss = analytic::solve_steady_state(SteadyInput::new(a.x0, 0.0)?, analytic::DEFAULT_TOL)?;
    let coeff = analytic::derive_coefficients(ss, a.b, a.c)?;
    let extreme = coeff.extreme_utilization(a.alpha)?;
    println!(
        "{}",
        serde_json::json!({
            "x0": a.x0,
            "alpha": a.alpha,
            "mu0_steady": ss.mu0,
            "mu0_extreme": extreme,
            "tau_b": coeff.tau_b,
        })
    );
    Ok(())
}

fn configure_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(Scenario::from_json(&text)?)
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    configure_jobs(a.jobs)?;
    let sc = load_scenario(&a.scenario)?;
    if let Some(path) = &a.debug_log {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        harness::run_once_logged(&sc, sc.base_seed, &[], &mut f);
    }
    let agg = harness::run_replications(&sc)?;
    let mut w = artifact(&a.out, "trace.csv")?;
    agg.write_csv(&mut w)?;
    let summary = serde_json::json!({
        "scenario": sc,
        "replications": agg.replications,
        "steady_mu0": agg.steady_mu0(),
        "counters": agg.counters,
    });
    if let Some(dir) = &a.out {
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).unwrap())?;
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), CliError> {
    configure_jobs(a.jobs)?;
    let sc = load_scenario(&a.scenario)?;
    let agg = harness::run_replications(&sc)?;

    let mut change_times = a.change_times.clone();
    if change_times.is_empty() {
        for pair in sc.udp.segments.windows(2) {
            if pair[1].rate != pair[0].rate && pair[1].start < sc.duration {
                change_times.push(pair[1].start);
            }
        }
    }

    let mut failures: Vec<String> = Vec::new();
    let mut reports = Vec::new();
    for &ct in &change_times {
        let report = harness::compare_transient(&sc, &agg, ct)?;
        let gap = (report.model_extreme - report.sim_extreme).abs();
        if gap > a.tol_extreme {
            failures.push(format!(
                "change at {ct}: extreme gap {gap:.4} exceeds {}",
                a.tol_extreme
            ));
        }
        reports.push(report);
    }

    let residuals = harness::rate_conservation_residual(&agg, &sc);
    let steady: Vec<_> = residuals.iter().filter(|r| r.steady && r.x0 > 0.0).collect();
    let mut residual_summary = serde_json::Value::Null;
    if !steady.is_empty() {
        let mean_res = steady.iter().map(|r| r.residual).sum::<f64>() / steady.len() as f64;
        let x0 = steady.iter().map(|r| r.x0).sum::<f64>() / steady.len() as f64;
        if mean_res.abs() > a.tol_residual * x0 {
            failures.push(format!(
                "mean steady residual {mean_res:.2} pkt/s exceeds {}% of x0={x0:.0}",
                a.tol_residual * 100.0
            ));
        }
        residual_summary = serde_json::json!({
            "steady_windows": steady.len(),
            "mean_residual": mean_res,
            "x0": x0,
        });
    }

    let report_json = serde_json::json!({
        "scenario": sc,
        "steady_mu0": agg.steady_mu0(),
        "transients": reports,
        "residual": residual_summary,
        "failures": failures,
    });
    let text = serde_json::to_string_pretty(&report_json).unwrap();
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("validation.json"), &text)?;
        let mut w = fs::File::create(dir.join("trace.csv"))?;
        agg.write_csv(&mut w)?;
        for (i, r) in reports.iter().enumerate() {
            let mut w = fs::File::create(dir.join(format!("transient_{i}.csv")))?;
            r.write_curve_csv(&mut w)?;
        }
    } else {
        println!("{text}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        for f in &failures {
            eprintln!("validation failure: {f}");
        }
        Err(CliError::Validation(format!(
            "{} validation check(s) failed",
            failures.len()
        )))
    }
}
