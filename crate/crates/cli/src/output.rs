//! Deterministic file artifacts: trajectory CSV, diagnostics and report
//! JSON, step-failure reports, and the gnuplot script.
//!
//! Every artifact is built fully in memory and written in one call, so a
//! failed write never leaves a partial file behind. Floats in CSV output use
//! `{:.16e}` (17 significant digits); JSON floats use serde_json's shortest
//! round-trip form. Both reproduce the exact bit pattern on re-parse.

use fracmech::diagnostics::{first_integral_check, node_velocities, ConvergenceReport};
use fracmech::dynamics::{residuals, DiscretePath, MechanicalSystem};
use fracmech::integrator::{StepFailure, Trajectory};
use serde::Serialize;

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header `t,x_1..x_d,v_1..v_d,E`, then one row per node. Velocities are
/// central differences inside and second-order one-sided at the two ends;
/// the energy column uses those reconstructed velocities.
pub fn trajectory_csv(sys: &MechanicalSystem, traj: &Trajectory) -> String {
    let d = sys.dim();
    let points = traj.points();
    let vels = node_velocities(points, traj.h());
    let mut s = String::new();
    s.push('t');
    for i in 1..=d {
        s.push_str(&format!(",x_{i}"));
    }
    for i in 1..=d {
        s.push_str(&format!(",v_{i}"));
    }
    s.push_str(",E\n");
    for (k, (q, v)) in points.iter().zip(&vels).enumerate() {
        s.push_str(&fmt_float(k as f64 * traj.h()));
        for &value in q.iter().chain(v.iter()) {
            s.push(',');
            s.push_str(&fmt_float(value));
        }
        s.push(',');
        s.push_str(&fmt_float(sys.energy(q, v)));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
pub struct NewtonStatsReport {
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
}

#[derive(Serialize)]
pub struct DiagnosticsReport {
    pub format_version: u32,
    pub residual_max: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub first_integral_drift: f64,
    pub reversal_residual_max: f64,
    pub newton_stats: NewtonStatsReport,
}

/// Post-run health summary. `residual_max` is the worst forward-path
/// equation residual over interior nodes; `reversal_residual_max` the worst
/// residual of the reversed-path equations on the same trajectory.
pub fn diagnostics_report(
    sys: &MechanicalSystem,
    traj: &Trajectory,
) -> fracmech::Result<DiagnosticsReport> {
    let points = traj.points();
    let n = points.len() - 1;
    let vels = node_velocities(points, traj.h());
    let path = DiscretePath::with_reversed(traj.h(), traj.alpha(), points.to_vec())?;
    let res = residuals(sys, &path)?;
    let mut rx_max = 0.0_f64;
    let mut ry_max = 0.0_f64;
    for k in 1..n {
        for (&a, &b) in res.rx(k).iter().zip(res.ry(k)) {
            rx_max = rx_max.max(a.abs());
            ry_max = ry_max.max(b.abs());
        }
    }
    let stats = traj.stats();
    Ok(DiagnosticsReport {
        format_version: 1,
        residual_max: rx_max,
        energy_initial: sys.energy(&points[0], &vels[0]),
        energy_final: sys.energy(&points[n], &vels[n]),
        first_integral_drift: first_integral_check(sys, traj)?,
        reversal_residual_max: ry_max,
        newton_stats: NewtonStatsReport {
            solves: stats.solves,
            total_iterations: stats.total_iterations,
            max_iterations: stats.max_iterations,
        },
    })
}

#[derive(Serialize)]
pub struct StepFailureReport {
    pub format_version: u32,
    pub error: &'static str,
    pub node: usize,
    pub iterations: usize,
    pub residual_norm: f64,
}

pub fn step_failure_report(failure: &StepFailure) -> StepFailureReport {
    StepFailureReport {
        format_version: 1,
        error: "step_failure",
        node: failure.node,
        iterations: failure.iterations,
        residual_norm: failure.residual_norm,
    }
}

#[derive(Serialize)]
pub struct ConvergenceJson {
    pub format_version: u32,
    pub alpha: f64,
    pub final_time: f64,
    pub reference: &'static str,
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: Option<f64>,
    pub exact: bool,
    pub incomplete: bool,
}

pub fn convergence_json(report: &ConvergenceReport, reference: &'static str) -> ConvergenceJson {
    ConvergenceJson {
        format_version: 1,
        alpha: report.alpha,
        final_time: report.final_time,
        reference,
        step_sizes: report.step_sizes.clone(),
        errors: report.errors.clone(),
        slope: report.slope,
        exact: report.exact,
        incomplete: report.incomplete,
    }
}

pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut s = String::from("h,error\n");
    for (h, e) in report.step_sizes.iter().zip(&report.errors) {
        s.push_str(&fmt_float(*h));
        s.push(',');
        s.push_str(&fmt_float(*e));
        s.push('\n');
    }
    s
}

pub fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}

/// Gnuplot script with one stanza for the first position column and one for
/// the energy column (the last column, 2d + 2 for a d-dimensional run).
pub fn plot_script(csv_path: &str, columns: usize) -> String {
    let quoted = csv_path.replace('"', "\\\"");
    format!(
        "# Position and energy against time from a trajectory table.\n\
         set datafile separator \",\"\n\
         set key off\n\
         set xlabel \"t\"\n\
         \n\
         set ylabel \"x_1\"\n\
         plot \"{quoted}\" using 1:2 with lines\n\
         \n\
         set ylabel \"E\"\n\
         plot \"{quoted}\" using 1:{columns} with lines\n"
    )
}
