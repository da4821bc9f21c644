//! Config-driven front end for the fracmech library.
//!
//! Subcommands: `simulate` (initial-value march), `bvp` (fixed endpoints),
//! `converge` (step-size sweep against a reference), `verify` (built-in
//! property suites), `plot` (gnuplot script for an existing CSV).
//!
//! Exit codes: 0 success, 2 config error, 3 solver failure, 4 I/O error,
//! 5 verify-suite failure. All artifacts are deterministic: the same config
//! and build produce byte-identical files.

mod config;
mod output;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracmech::diagnostics::{analytic_damped_oscillator, convergence_study, rk4_reference};
use fracmech::dynamics::{MechanicalSystem, Potential};
use fracmech::integrator::{integrate, solve_bvp, Trajectory};

use config::{ModeSpec, RunConfig};

/// Relative output paths are joined onto this directory when it is set.
const OUTPUT_DIR_VAR: &str = "FRACMECH_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "fracmech",
    version,
    about = "Variational time stepping for fractionally damped mechanical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March an initial-value run and write trajectory plus diagnostics.
    Simulate {
        /// Path to the JSON run configuration.
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the fixed-endpoint problem and write the same artifacts.
    Bvp {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep step sizes and report global error against a reference.
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// Step sizes; repeat the flag or separate values with commas.
        #[arg(long = "h", value_delimiter = ',')]
        step_sizes: Vec<f64>,
    },
    /// Run built-in property suites and print a pass/fail table.
    Verify {
        /// Suite names; with no selection every suite runs.
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
    /// Emit a gnuplot script for an existing trajectory CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(Vec<String>),
    Solver(String),
    Io(String),
    Verify,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 4,
            Failure::Verify => 5,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Config(errors) => {
                    for e in errors {
                        eprintln!("error: {e}");
                    }
                }
                Failure::Solver(msg) | Failure::Io(msg) => eprintln!("error: {msg}"),
                Failure::Verify => eprintln!("error: one or more verify suites failed"),
            }
            ExitCode::from(failure.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { config } => run_simulate(&load_config(&config)?),
        Command::Bvp { config } => run_bvp(&load_config(&config)?),
        Command::Converge { config, step_sizes } => {
            run_converge(&load_config(&config)?, &step_sizes)
        }
        Command::Verify { suites } => run_verify(&suites),
        Command::Plot { csv, out } => run_plot(&csv, &out),
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    config::parse_config(&text).map_err(Failure::Config)
}

fn resolve_out(path: &str) -> PathBuf {
    let p = PathBuf::from(path);
    if p.is_relative() {
        if let Ok(dir) = std::env::var(OUTPUT_DIR_VAR) {
            if !dir.is_empty() {
                return PathBuf::from(dir).join(p);
            }
        }
    }
    p
}

fn write_artifact(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn config_failure(error: fracmech::Error) -> Failure {
    Failure::Config(vec![error.to_string()])
}

fn build_system(cfg: &RunConfig) -> Result<MechanicalSystem, Failure> {
    cfg.build_system().map_err(|e| Failure::Config(vec![e]))
}

/// Step failures produce a machine-readable report at the diagnostics path
/// (best effort; the exit code already carries the outcome) plus a summary
/// on stderr. Any other library error this late is a config-level problem.
fn solver_failure(cfg: &RunConfig, error: fracmech::Error) -> Failure {
    match error {
        fracmech::Error::Step(failure) => {
            let msg = format!(
                "newton solve stalled at node {} ({} iterations, residual {:.3e})",
                failure.node, failure.iterations, failure.residual_norm
            );
            let report = output::to_json(&output::step_failure_report(&failure));
            let _ = std::fs::write(resolve_out(&cfg.output.diagnostics), report);
            Failure::Solver(msg)
        }
        other => config_failure(other),
    }
}

fn emit_run_outputs(
    cfg: &RunConfig,
    sys: &MechanicalSystem,
    traj: &Trajectory,
) -> Result<(), Failure> {
    if cfg.output.emit_trajectory {
        let csv = output::trajectory_csv(sys, traj);
        write_artifact(&resolve_out(&cfg.output.trajectory), &csv)?;
    }
    if cfg.output.emit_diagnostics {
        let report = output::diagnostics_report(sys, traj).map_err(config_failure)?;
        write_artifact(&resolve_out(&cfg.output.diagnostics), &output::to_json(&report))?;
    }
    if cfg.output.emit_plot_script {
        let csv_path = resolve_out(&cfg.output.trajectory);
        let script =
            output::plot_script(&csv_path.to_string_lossy(), 2 * sys.dim() + 2);
        write_artifact(&resolve_out(&cfg.output.plot_script), &script)?;
    }
    Ok(())
}

fn run_simulate(cfg: &RunConfig) -> Result<(), Failure> {
    if !matches!(cfg.integrator.mode, ModeSpec::InitialValue { .. }) {
        return Err(Failure::Config(vec![
            "integrator.mode: simulate requires initial_value mode".into(),
        ]));
    }
    let sys = build_system(cfg)?;
    let traj = integrate(&sys, &cfg.build_integrator())
        .map_err(|e| solver_failure(cfg, e))?;
    emit_run_outputs(cfg, &sys, &traj)
}

fn run_bvp(cfg: &RunConfig) -> Result<(), Failure> {
    if !matches!(cfg.integrator.mode, ModeSpec::BoundaryValue { .. }) {
        return Err(Failure::Config(vec![
            "integrator.mode: bvp requires boundary_value mode".into(),
        ]));
    }
    let sys = build_system(cfg)?;
    let (traj, _reversed) = solve_bvp(&sys, &cfg.build_integrator())
        .map_err(|e| solver_failure(cfg, e))?;
    emit_run_outputs(cfg, &sys, &traj)
}

fn run_converge(cfg: &RunConfig, step_sizes: &[f64]) -> Result<(), Failure> {
    let (q0, v0) = match &cfg.integrator.mode {
        ModeSpec::InitialValue { q0, v0 } => (q0.clone(), v0.clone()),
        ModeSpec::BoundaryValue { .. } => {
            return Err(Failure::Config(vec![
                "integrator.mode: converge requires initial_value mode".into(),
            ]));
        }
    };
    let sys = build_system(cfg)?;
    let base = cfg.build_integrator();
    if step_sizes.len() < 3 {
        return Err(Failure::Config(vec![format!(
            "need >= 3 step sizes for a convergence study, got {}",
            step_sizes.len()
        )]));
    }
    let total_time = base.h * base.steps as f64;
    let (reference, tag) = build_reference(&sys, &q0, &v0, step_sizes, total_time)?;
    let report = convergence_study(&sys, &base, reference, step_sizes)
        .map_err(config_failure)?;

    write_artifact(
        &resolve_out(&cfg.output.trajectory),
        &output::convergence_csv(&report),
    )?;
    write_artifact(
        &resolve_out(&cfg.output.diagnostics),
        &output::to_json(&output::convergence_json(&report, tag)),
    )?;
    match report.slope {
        Some(s) => println!("reference {tag}, slope {s:.3}"),
        None => println!("reference {tag}, slope undefined"),
    }
    if report.incomplete {
        return Err(Failure::Solver(
            "convergence sweep incomplete: a step size failed to converge".into(),
        ));
    }
    Ok(())
}

type Reference = Box<dyn Fn(f64) -> Vec<f64>>;

/// Per-axis closed form when every axis is an underdamped harmonic mode,
/// otherwise classical RK4 on a grid twenty times finer than the smallest
/// step in the sweep, evaluated by linear interpolation.
fn build_reference(
    sys: &MechanicalSystem,
    q0: &[f64],
    v0: &[f64],
    step_sizes: &[f64],
    total_time: f64,
) -> Result<(Reference, &'static str), Failure> {
    if let Potential::Harmonic { omega } = sys.potential() {
        let mut params = Vec::with_capacity(sys.dim());
        for i in 0..sys.dim() {
            let m = sys.mass()[i];
            let rho = sys.damping()[i];
            // Stiffness omega^2 against mass m: natural frequency omega/sqrt(m).
            let w = omega[i] / m.sqrt();
            if w > 0.0 && rho / (2.0 * m) < w {
                params.push((m, rho, w, q0[i], v0[i]));
            } else {
                params.clear();
                break;
            }
        }
        if params.len() == sys.dim() {
            let f = move |t: f64| -> Vec<f64> {
                params
                    .iter()
                    .map(|&(m, rho, w, q, v)| {
                        analytic_damped_oscillator(m, rho, w, q, v, t)
                            .expect("axis checked underdamped")
                            .0
                    })
                    .collect()
            };
            return Ok((Box::new(f), "analytic"));
        }
    }

    let h_min = step_sizes.iter().copied().fold(f64::INFINITY, f64::min);
    if !(h_min > 0.0) || !h_min.is_finite() {
        return Err(Failure::Config(vec![format!(
            "step sizes must be positive, got {h_min}"
        )]));
    }
    let steps = (20.0 * total_time / h_min).round().max(2.0) as usize;
    let h_ref = total_time / steps as f64;
    let fine = rk4_reference(sys, q0, v0, h_ref, steps).map_err(config_failure)?;
    let positions = fine.positions().to_vec();
    let d = sys.dim();
    let f = move |t: f64| -> Vec<f64> {
        let s = (t / h_ref).clamp(0.0, steps as f64);
        let j = (s.floor() as usize).min(steps - 1);
        let w = s - j as f64;
        (0..d)
            .map(|i| (1.0 - w) * positions[j][i] + w * positions[j + 1][i])
            .collect()
    };
    Ok((Box::new(f), "rk4"))
}

fn run_verify(selection: &[String]) -> Result<(), Failure> {
    let names: Vec<&str> = if selection.is_empty() {
        verify::SUITES.to_vec()
    } else {
        let mut names = Vec::with_capacity(selection.len());
        for s in selection {
            match verify::SUITES.iter().find(|known| **known == s.as_str()) {
                Some(known) => names.push(*known),
                None => {
                    return Err(Failure::Config(vec![format!(
                        "unknown verify suite \"{s}\" (available: {})",
                        verify::SUITES.join(", ")
                    )]));
                }
            }
        }
        names
    };

    println!("{:<12} {:<6} {:>13} {:>10}", "suite", "result", "deviation", "bound");
    let mut all_passed = true;
    for name in names {
        let result = verify::run_suite(name);
        let verdict = if result.pass() { "pass" } else { "FAIL" };
        println!(
            "{:<12} {:<6} {:>13.3e} {:>10.1e}",
            result.name, verdict, result.deviation, result.bound
        );
        all_passed &= result.pass();
    }
    if all_passed {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn run_plot(csv: &Path, out: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(csv)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", csv.display())))?;
    let header = text.lines().next().unwrap_or("");
    if !header.starts_with("t,") || !header.ends_with(",E") {
        return Err(Failure::Io(format!(
            "{} is not a trajectory table (header {header:?})",
            csv.display()
        )));
    }
    let columns = header.split(',').count();
    let script = output::plot_script(&csv.to_string_lossy(), columns);
    write_artifact(out, &script)
}
