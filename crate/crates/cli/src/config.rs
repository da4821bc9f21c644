//! Run configuration: a strict JSON tree mirrored onto the library types.
//!
//! Parsing is strict (unknown keys are rejected) so a typo cannot silently
//! fall back to a default halfway through a long run. Validation does not
//! stop at the first problem; it collects every violation it can find, each
//! message prefixed with the dotted path of the offending field.

use fracmech::dynamics::{MechanicalSystem, Potential};
use fracmech::integrator::{IntegratorConfig, JacobianMode, Mode, NewtonSettings};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemBlock,
    pub integrator: IntegratorBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub dim: usize,
    pub masses: Vec<f64>,
    pub dampings: Vec<f64>,
    pub potential: PotentialSpec,
}

/// Potential selector. Externally tagged, so a config reads e.g.
/// `"potential": { "harmonic": { "omega": [1.0] } }` or `"potential": "free"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Harmonic { omega: Vec<f64> },
    Pendulum { g_over_l: f64 },
    DoubleWell { a: f64, b: f64 },
    /// One coefficient row per axis, constant term first.
    Polynomial { coeffs: Vec<Vec<f64>> },
    /// No potential force at all.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorBlock {
    pub alpha: f64,
    pub h: f64,
    pub steps: usize,
    pub mode: ModeSpec,
    #[serde(default)]
    pub newton: NewtonBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    InitialValue { q0: Vec<f64>, v0: Vec<f64> },
    BoundaryValue { x_a: Vec<f64>, x_b: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonBlock {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub jacobian: JacobianSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianSpec {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_trajectory_path")]
    pub trajectory: String,
    #[serde(default = "default_diagnostics_path")]
    pub diagnostics: String,
    #[serde(default = "default_plot_path")]
    pub plot_script: String,
    #[serde(default = "default_true")]
    pub emit_trajectory: bool,
    #[serde(default = "default_true")]
    pub emit_diagnostics: bool,
    #[serde(default)]
    pub emit_plot_script: bool,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    25
}

fn default_trajectory_path() -> String {
    "trajectory.csv".into()
}

fn default_diagnostics_path() -> String {
    "diagnostics.json".into()
}

fn default_plot_path() -> String {
    "plot.gp".into()
}

fn default_true() -> bool {
    true
}

impl Default for NewtonBlock {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            jacobian: JacobianSpec::default(),
        }
    }
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            trajectory: default_trajectory_path(),
            diagnostics: default_diagnostics_path(),
            plot_script: default_plot_path(),
            emit_trajectory: true,
            emit_diagnostics: true,
            emit_plot_script: false,
        }
    }
}

/// Parses and validates a config document. On failure returns every
/// violation found, not just the first.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<String>> {
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| vec![format!("config: {e}")])?;
    let errors = validate(&cfg);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

#[cfg(test)]
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serialization cannot fail");
    s.push('\n');
    s
}

fn check_len(errors: &mut Vec<String>, path: &str, got: usize, want: usize) -> bool {
    if got != want {
        errors.push(format!("{path}: expected {want} entries, got {got}"));
        return false;
    }
    true
}

fn check_finite(errors: &mut Vec<String>, path: &str, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            errors.push(format!("{path}[{i}]: must be finite (got {v})"));
        }
    }
}

pub fn validate(cfg: &RunConfig) -> Vec<String> {
    let mut errors = Vec::new();
    let d = cfg.system.dim;
    if d == 0 {
        errors.push("system.dim: dimension must be at least 1".into());
    }

    if check_len(&mut errors, "system.masses", cfg.system.masses.len(), d) {
        for (i, m) in cfg.system.masses.iter().enumerate() {
            if !m.is_finite() || *m <= 0.0 {
                errors.push(format!("system.masses[{i}]: mass must be positive (got {m})"));
            }
        }
    }
    if check_len(&mut errors, "system.dampings", cfg.system.dampings.len(), d) {
        for (i, r) in cfg.system.dampings.iter().enumerate() {
            if !r.is_finite() || *r < 0.0 {
                errors.push(format!(
                    "system.dampings[{i}]: damping must be nonnegative (got {r})"
                ));
            }
        }
    }

    match &cfg.system.potential {
        PotentialSpec::Harmonic { omega } => {
            let path = "system.potential.harmonic.omega";
            if check_len(&mut errors, path, omega.len(), d) {
                check_finite(&mut errors, path, omega);
            }
        }
        PotentialSpec::Pendulum { g_over_l } => {
            if !g_over_l.is_finite() {
                errors.push(format!(
                    "system.potential.pendulum.g_over_l: must be finite (got {g_over_l})"
                ));
            }
        }
        PotentialSpec::DoubleWell { a, b } => {
            for (name, v) in [("a", a), ("b", b)] {
                if !v.is_finite() {
                    errors.push(format!(
                        "system.potential.double_well.{name}: must be finite (got {v})"
                    ));
                }
            }
        }
        PotentialSpec::Polynomial { coeffs } => {
            let path = "system.potential.polynomial.coeffs";
            if coeffs.len() != d {
                errors.push(format!("{path}: expected {d} rows, got {}", coeffs.len()));
            } else {
                for (i, row) in coeffs.iter().enumerate() {
                    for (j, c) in row.iter().enumerate() {
                        if !c.is_finite() {
                            errors.push(format!("{path}[{i}][{j}]: must be finite (got {c})"));
                        }
                    }
                }
            }
        }
        PotentialSpec::Free => {}
    }

    let ib = &cfg.integrator;
    if !ib.alpha.is_finite() || !(0.0..=1.0).contains(&ib.alpha) {
        errors.push(format!(
            "integrator.alpha: alpha must lie in [0,1] (got {})",
            ib.alpha
        ));
    }
    if !ib.h.is_finite() || ib.h <= 0.0 {
        errors.push(format!(
            "integrator.h: step size must be positive (got {})",
            ib.h
        ));
    }
    if ib.steps < 2 {
        errors.push(format!(
            "integrator.steps: need at least 2 steps (got {})",
            ib.steps
        ));
    }
    if !ib.newton.tol.is_finite() || ib.newton.tol <= 0.0 {
        errors.push(format!(
            "integrator.newton.tol: tolerance must be positive (got {})",
            ib.newton.tol
        ));
    }
    if ib.newton.max_iter == 0 {
        errors.push("integrator.newton.max_iter: need at least 1 iteration".into());
    }

    match &ib.mode {
        ModeSpec::InitialValue { q0, v0 } => {
            for (name, vals) in [("q0", q0), ("v0", v0)] {
                let path = format!("integrator.mode.initial_value.{name}");
                if check_len(&mut errors, &path, vals.len(), d) {
                    check_finite(&mut errors, &path, vals);
                }
            }
        }
        ModeSpec::BoundaryValue { x_a, x_b } => {
            for (name, vals) in [("x_a", x_a), ("x_b", x_b)] {
                let path = format!("integrator.mode.boundary_value.{name}");
                if check_len(&mut errors, &path, vals.len(), d) {
                    check_finite(&mut errors, &path, vals);
                }
            }
        }
    }

    for (name, path) in [
        ("trajectory", &cfg.output.trajectory),
        ("diagnostics", &cfg.output.diagnostics),
        ("plot_script", &cfg.output.plot_script),
    ] {
        if path.is_empty() {
            errors.push(format!("output.{name}: path must not be empty"));
        }
    }

    errors
}

impl RunConfig {
    /// Assumes `validate` passed; residual library errors are reported
    /// verbatim as config errors.
    pub fn build_system(&self) -> Result<MechanicalSystem, String> {
        let potential = match &self.system.potential {
            PotentialSpec::Harmonic { omega } => Potential::Harmonic { omega: omega.clone() },
            PotentialSpec::Pendulum { g_over_l } => Potential::Pendulum { g_over_l: *g_over_l },
            PotentialSpec::DoubleWell { a, b } => Potential::DoubleWell { a: *a, b: *b },
            PotentialSpec::Polynomial { coeffs } => {
                Potential::Polynomial { coeffs: coeffs.clone() }
            }
            PotentialSpec::Free => {
                Potential::Polynomial { coeffs: vec![vec![]; self.system.dim] }
            }
        };
        MechanicalSystem::new(
            self.system.masses.clone(),
            self.system.dampings.clone(),
            potential,
        )
        .map_err(|e| format!("system: {e}"))
    }

    pub fn build_integrator(&self) -> IntegratorConfig {
        let ib = &self.integrator;
        IntegratorConfig {
            alpha: ib.alpha,
            h: ib.h,
            steps: ib.steps,
            mode: match &ib.mode {
                ModeSpec::InitialValue { q0, v0 } => {
                    Mode::InitialValue { q0: q0.clone(), v0: v0.clone() }
                }
                ModeSpec::BoundaryValue { x_a, x_b } => {
                    Mode::BoundaryValue { x_a: x_a.clone(), x_b: x_b.clone() }
                }
            },
            newton: NewtonSettings {
                tol: ib.newton.tol,
                max_iter: ib.newton.max_iter,
                jacobian: match ib.newton.jacobian {
                    JacobianSpec::Analytic => JacobianMode::Analytic,
                    JacobianSpec::FiniteDifference => JacobianMode::FiniteDifference,
                },
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "system": {
                "dim": 1,
                "masses": [1.0],
                "dampings": [0.2],
                "potential": { "harmonic": { "omega": [1.0] } }
            },
            "integrator": {
                "alpha": 0.5,
                "h": 0.01,
                "steps": 1000,
                "mode": { "initial_value": { "q0": [1.0], "v0": [0.0] } }
            }
        }"#
    }

    #[test]
    fn minimal_config_fills_documented_defaults() {
        let cfg = parse_config(minimal()).unwrap();
        assert_eq!(cfg.integrator.newton.tol, 1e-10);
        assert_eq!(cfg.integrator.newton.max_iter, 25);
        assert_eq!(cfg.integrator.newton.jacobian, JacobianSpec::Analytic);
        assert_eq!(cfg.output.trajectory, "trajectory.csv");
        assert!(cfg.output.emit_trajectory && cfg.output.emit_diagnostics);
        assert!(!cfg.output.emit_plot_script);
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = parse_config(minimal()).unwrap();
        let again = parse_config(&serialize_config(&cfg)).unwrap();
        assert_eq!(cfg, again);

        // A config exercising every optional corner.
        let full = RunConfig {
            system: SystemBlock {
                dim: 2,
                masses: vec![1.0, 2.0],
                dampings: vec![0.0, 0.3],
                potential: PotentialSpec::Polynomial {
                    coeffs: vec![vec![0.0, 0.0, 0.5], vec![1.0]],
                },
            },
            integrator: IntegratorBlock {
                alpha: 0.25,
                h: 0.05,
                steps: 40,
                mode: ModeSpec::BoundaryValue {
                    x_a: vec![0.0, 1.0],
                    x_b: vec![1.0, 0.0],
                },
                newton: NewtonBlock {
                    tol: 1e-12,
                    max_iter: 50,
                    jacobian: JacobianSpec::FiniteDifference,
                },
            },
            output: OutputBlock {
                trajectory: "out.csv".into(),
                diagnostics: "out.json".into(),
                plot_script: "out.gp".into(),
                emit_trajectory: true,
                emit_diagnostics: false,
                emit_plot_script: true,
            },
        };
        let again = parse_config(&serialize_config(&full)).unwrap();
        assert_eq!(full, again);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = minimal().replacen("\"dim\"", "\"dims\"", 1);
        assert!(parse_config(&text).is_err());
        let text = minimal().replacen(
            "\"alpha\": 0.5,",
            "\"alpha\": 0.5, \"order\": 2,",
            1,
        );
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn out_of_range_values_name_their_field() {
        let text = minimal()
            .replacen("\"alpha\": 0.5", "\"alpha\": 1.5", 1)
            .replacen("\"masses\": [1.0]", "\"masses\": [-1.0]", 1);
        let errors = parse_config(&text).unwrap_err();
        assert!(errors.iter().any(|e| e.contains("alpha must lie in [0,1]")), "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("system.masses[0]")), "{errors:?}");
        assert_eq!(errors.len(), 2, "{errors:?}");
    }

    #[test]
    fn dimension_mismatches_are_reported_per_field() {
        let text = minimal()
            .replacen("\"dampings\": [0.2]", "\"dampings\": [0.2, 0.1]", 1)
            .replacen("\"q0\": [1.0]", "\"q0\": [1.0, 2.0]", 1);
        let errors = parse_config(&text).unwrap_err();
        assert!(errors.iter().any(|e| e.starts_with("system.dampings:")), "{errors:?}");
        assert!(
            errors.iter().any(|e| e.starts_with("integrator.mode.initial_value.q0:")),
            "{errors:?}"
        );
    }

    #[test]
    fn free_potential_builds_a_zero_force_system() {
        let text = minimal().replacen(
            "{ \"harmonic\": { \"omega\": [1.0] } }",
            "\"free\"",
            1,
        );
        let cfg = parse_config(&text).unwrap();
        let sys = cfg.build_system().unwrap();
        assert_eq!(sys.potential().gradient(&[3.0]), vec![0.0]);
    }

    #[test]
    fn builders_mirror_the_parsed_values() {
        let cfg = parse_config(minimal()).unwrap();
        let sys = cfg.build_system().unwrap();
        assert_eq!(sys.dim(), 1);
        assert_eq!(sys.damping(), &[0.2]);
        let icfg = cfg.build_integrator();
        assert_eq!(icfg.steps, 1000);
        assert_eq!(icfg.newton.max_iter, 25);
    }
}
