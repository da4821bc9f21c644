//! Reference solutions and run diagnostics: the closed-form underdamped
//! oscillator, a fourth-order Runge-Kutta reference for the target ODE
//! M qdd + R qd + grad U(q) = 0, energy reconstruction along discrete
//! trajectories, an energy/work balance drift measure, and convergence-order
//! studies against a supplied reference solution.

use crate::accum::Neumaier;
use crate::dynamics::MechanicalSystem;
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Trajectory};

/// Closed-form underdamped oscillator for m qdd + rho qd + m w^2 q = 0
/// (w is the undamped natural frequency): returns (q(t), qd(t)) with
/// q(t) = e^{-lambda t} (q0 cos wd t + ((v0 + lambda q0)/wd) sin wd t),
/// lambda = rho/(2m), wd = sqrt(w^2 - lambda^2).
pub fn analytic_damped_oscillator(
    m: f64,
    rho: f64,
    omega: f64,
    q0: f64,
    v0: f64,
    t: f64,
) -> Result<(f64, f64)> {
    if !(m > 0.0) || !(rho >= 0.0) || !(omega > 0.0) {
        return Err(Error::domain(format!(
            "need m > 0, rho >= 0, omega > 0; got m = {m}, rho = {rho}, omega = {omega}"
        )));
    }
    let lambda = rho / (2.0 * m);
    if lambda >= omega {
        return Err(Error::domain(format!(
            "only the underdamped regime is covered: rho/(2m) = {lambda} >= omega = {omega}"
        )));
    }
    let wd = (omega * omega - lambda * lambda).sqrt();
    let a = q0;
    let b = (v0 + lambda * q0) / wd;
    let (sin, cos) = (wd * t).sin_cos();
    let g = a * cos + b * sin;
    let gd = wd * (b * cos - a * sin);
    let decay = (-lambda * t).exp();
    Ok((decay * g, decay * (gd - lambda * g)))
}

/// Analytic second derivative of the closed form above, for substitution
/// checks against the ODE without circular use of the ODE itself.
pub fn analytic_damped_oscillator_accel(
    m: f64,
    rho: f64,
    omega: f64,
    q0: f64,
    v0: f64,
    t: f64,
) -> Result<f64> {
    let lambda = rho / (2.0 * m);
    let (q, _) = analytic_damped_oscillator(m, rho, omega, q0, v0, t)?;
    let wd = (omega * omega - lambda * lambda).sqrt();
    let a = q0;
    let b = (v0 + lambda * q0) / wd;
    let (sin, cos) = (wd * t).sin_cos();
    let gd = wd * (b * cos - a * sin);
    let decay = (-lambda * t).exp();
    // q = e^{-lt} g: qdd = e^{-lt} ((l^2 - wd^2) g - 2 l gd).
    Ok(decay * ((lambda * lambda - wd * wd) * (q / decay) - 2.0 * lambda * gd))
}

/// Reference trajectory with explicit velocities, as produced by the
/// Runge-Kutta oracle.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    h: f64,
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
}

impl ReferenceTrajectory {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Vec<f64>] {
        &self.velocities
    }

    pub fn steps(&self) -> usize {
        self.positions.len() - 1
    }
}

/// Classical fourth-order Runge-Kutta on the first-order form
/// qd = v, vd = M^{-1} (-R v - grad U(q)).
pub fn rk4_reference(
    sys: &MechanicalSystem,
    q0: &[f64],
    v0: &[f64],
    h: f64,
    n: usize,
) -> Result<ReferenceTrajectory> {
    let d = sys.dim();
    if q0.len() != d || v0.len() != d {
        return Err(Error::size(format!(
            "initial data has dimensions {} and {}, system has {d}",
            q0.len(),
            v0.len()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::domain(format!("step size must be positive, got {h}")));
    }
    if q0.iter().chain(v0).any(|v| !v.is_finite()) {
        return Err(Error::domain("initial data must be finite"));
    }
    let accel = |q: &[f64], v: &[f64]| -> Vec<f64> {
        let g = sys.potential().gradient(q);
        (0..d)
            .map(|i| (-sys.damping()[i] * v[i] - g[i]) / sys.mass()[i])
            .collect()
    };
    let mut positions = Vec::with_capacity(n + 1);
    let mut velocities = Vec::with_capacity(n + 1);
    let mut q = q0.to_vec();
    let mut v = v0.to_vec();
    positions.push(q.clone());
    velocities.push(v.clone());
    for _ in 0..n {
        let a1 = accel(&q, &v);
        let q2: Vec<f64> = (0..d).map(|i| q[i] + 0.5 * h * v[i]).collect();
        let v2: Vec<f64> = (0..d).map(|i| v[i] + 0.5 * h * a1[i]).collect();
        let a2 = accel(&q2, &v2);
        let q3: Vec<f64> = (0..d).map(|i| q[i] + 0.5 * h * v2[i]).collect();
        let v3: Vec<f64> = (0..d).map(|i| v[i] + 0.5 * h * a2[i]).collect();
        let a3 = accel(&q3, &v3);
        let q4: Vec<f64> = (0..d).map(|i| q[i] + h * v3[i]).collect();
        let v4: Vec<f64> = (0..d).map(|i| v[i] + h * a3[i]).collect();
        let a4 = accel(&q4, &v4);
        for i in 0..d {
            let qi = q[i] + h / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
            let vi = v[i] + h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
            q[i] = qi;
            v[i] = vi;
        }
        positions.push(q.clone());
        velocities.push(v.clone());
    }
    Ok(ReferenceTrajectory { h, positions, velocities })
}

/// Energy samples along a trajectory's interior nodes.
#[derive(Debug, Clone)]
pub struct EnergySeries {
    times: Vec<f64>,
    values: Vec<f64>,
    velocity_tag: &'static str,
}

impl EnergySeries {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// How velocities were reconstructed from positions.
    pub fn velocity_tag(&self) -> &str {
        self.velocity_tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// E_k = v_k^T M v_k / 2 + U(x_k) on interior nodes, with v_k the central
/// difference (x_{k+1} - x_{k-1}) / 2h. Endpoints are excluded; the
/// second-order reconstruction keeps the diagnostic from masking the
/// scheme's own error.
pub fn energy_series(sys: &MechanicalSystem, traj: &Trajectory) -> Result<EnergySeries> {
    let pts = traj.points();
    if pts.len() < 3 {
        return Err(Error::size("energy series needs at least three nodes"));
    }
    if traj.dim() != sys.dim() {
        return Err(Error::size(format!(
            "system dimension {} does not match trajectory dimension {}",
            sys.dim(),
            traj.dim()
        )));
    }
    let h = traj.h();
    let d = sys.dim();
    let n = pts.len() - 1;
    let mut times = Vec::with_capacity(n - 1);
    let mut values = Vec::with_capacity(n - 1);
    for k in 1..n {
        let v: Vec<f64> = (0..d).map(|i| (pts[k + 1][i] - pts[k - 1][i]) / (2.0 * h)).collect();
        times.push(k as f64 * h);
        values.push(sys.energy(&pts[k], &v));
    }
    Ok(EnergySeries { times, values, velocity_tag: "central-difference-interior" })
}

/// Velocities at every node: central differences inside, second-order
/// one-sided stencils at the two ends.
pub fn node_velocities(points: &[Vec<f64>], h: f64) -> Vec<Vec<f64>> {
    let n = points.len() - 1;
    let d = points[0].len();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let v: Vec<f64> = (0..d)
            .map(|i| {
                if k == 0 {
                    (-3.0 * points[0][i] + 4.0 * points[1][i] - points[2][i]) / (2.0 * h)
                } else if k == n {
                    (3.0 * points[n][i] - 4.0 * points[n - 1][i] + points[n - 2][i]) / (2.0 * h)
                } else {
                    (points[k + 1][i] - points[k - 1][i]) / (2.0 * h)
                }
            })
            .collect();
        out.push(v);
    }
    out
}

/// Drift of the discrete energy/work balance I_k = E_k + W_k, where E_k is
/// the reconstructed mechanical energy at node k (one-sided velocity
/// stencils at the two ends) and W_k the trapezoidal cumulative dissipated
/// power sum h/2 (p_{j-1} + p_j) with p_j = v_j^T R v_j. The continuous flow
/// conserves E + W exactly, so the returned max_k |I_k - I_0| tends to zero
/// with h for trajectories solving the scheme; with R = 0 it reduces to the
/// midpoint rule's bounded energy oscillation.
pub fn first_integral_check(sys: &MechanicalSystem, traj: &Trajectory) -> Result<f64> {
    let pts = traj.points();
    if pts.len() < 3 {
        return Err(Error::size("balance check needs at least three nodes"));
    }
    if traj.dim() != sys.dim() {
        return Err(Error::size(format!(
            "system dimension {} does not match trajectory dimension {}",
            sys.dim(),
            traj.dim()
        )));
    }
    let h = traj.h();
    let d = sys.dim();
    let vels = node_velocities(pts, h);
    let power = |v: &[f64]| -> f64 {
        (0..d).map(|i| sys.damping()[i] * v[i] * v[i]).sum()
    };
    let base = sys.energy(&pts[0], &vels[0]);
    let mut work = Neumaier::new();
    let mut prev_p = power(&vels[0]);
    let mut worst = 0.0_f64;
    for k in 1..pts.len() {
        let p = power(&vels[k]);
        work.add(0.5 * h * (prev_p + p));
        prev_p = p;
        let balance = sys.energy(&pts[k], &vels[k]) + work.value();
        worst = worst.max((balance - base).abs());
    }
    Ok(worst)
}

/// Observed-order study: global errors of `integrate` against a reference
/// solution over a list of step sizes, with a least-squares slope fit of
/// log error against log step.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    /// Fitted observed order; absent when the errors sit at rounding level
    /// or the study is incomplete.
    pub slope: Option<f64>,
    /// All errors at rounding level (the scheme reproduces the reference).
    pub exact: bool,
    /// A run failed; recorded errors cover the completed step sizes only.
    pub incomplete: bool,
    pub alpha: f64,
    pub final_time: f64,
}

/// Runs `integrate` once per step size (the base config fixes mode, order,
/// Newton settings, and the final time T = h * steps) and measures
/// max_k |x_k - reference(t_k)|. Every step size must divide T exactly.
pub fn convergence_study<F>(
    sys: &MechanicalSystem,
    base: &IntegratorConfig,
    reference: F,
    h_list: &[f64],
) -> Result<ConvergenceReport>
where
    F: Fn(f64) -> Vec<f64>,
{
    if h_list.len() < 3 {
        return Err(Error::size(format!(
            "need >= 3 step sizes for a convergence study, got {}",
            h_list.len()
        )));
    }
    let total_time = base.h * base.steps as f64;
    let mut step_sizes = Vec::with_capacity(h_list.len());
    let mut errors = Vec::with_capacity(h_list.len());
    let mut incomplete = false;
    for &h in h_list {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::domain(format!("step sizes must be positive, got {h}")));
        }
        let steps_f = total_time / h;
        let steps = steps_f.round();
        if (steps_f - steps).abs() > 1e-9 * steps_f.max(1.0) || steps < 2.0 {
            return Err(Error::domain(format!(
                "step size {h} does not divide the final time {total_time} into >= 2 steps"
            )));
        }
        let config = IntegratorConfig { h, steps: steps as usize, ..base.clone() };
        match integrate(sys, &config) {
            Ok(traj) => {
                let mut worst = 0.0_f64;
                for (k, p) in traj.points().iter().enumerate() {
                    let want = reference(k as f64 * h);
                    for i in 0..p.len() {
                        worst = worst.max((p[i] - want[i]).abs());
                    }
                }
                step_sizes.push(h);
                errors.push(worst);
            }
            Err(Error::Step(_)) => {
                incomplete = true;
                break;
            }
            Err(other) => return Err(other),
        }
    }
    let exact = !incomplete && errors.iter().all(|&e| e <= 1e-11);
    let slope = if incomplete || exact || errors.len() < 2 {
        None
    } else {
        Some(fit_slope(&step_sizes, &errors))
    };
    Ok(ConvergenceReport {
        step_sizes,
        errors,
        slope,
        exact,
        incomplete,
        alpha: base.alpha,
        final_time: total_time,
    })
}

fn fit_slope(hs: &[f64], es: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|&h| h.ln()).collect();
    let ys: Vec<f64> = es.iter().map(|&e| e.max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Potential;
    use crate::integrator::{Mode, NewtonSettings};
    use std::sync::Arc;

    fn damped(m: f64, rho: f64, omega: f64) -> MechanicalSystem {
        MechanicalSystem::new(vec![m], vec![rho], Potential::Harmonic { omega: vec![omega] })
            .unwrap()
    }

    fn iv_config(alpha: f64, h: f64, steps: usize, q0: Vec<f64>, v0: Vec<f64>) -> IntegratorConfig {
        IntegratorConfig {
            alpha,
            h,
            steps,
            mode: Mode::InitialValue { q0, v0 },
            newton: NewtonSettings::default(),
        }
    }

    #[test]
    fn oscillator_reduces_to_undamped_form() {
        for &t in &[0.0, 0.4, 1.7, 6.0] {
            let (q, v) = analytic_damped_oscillator(1.0, 0.0, 2.0, 0.7, -0.3, t).unwrap();
            let want_q = 0.7 * (2.0 * t).cos() - 0.15 * (2.0 * t).sin();
            let want_v = -1.4 * (2.0 * t).sin() - 0.3 * (2.0 * t).cos();
            assert!((q - want_q).abs() <= 1e-14);
            assert!((v - want_v).abs() <= 1e-14);
        }
    }

    #[test]
    fn oscillator_initial_state() {
        let (q, v) = analytic_damped_oscillator(1.3, 0.4, 1.1, 0.9, -0.2, 0.0).unwrap();
        assert_eq!(q, 0.9);
        assert!((v + 0.2).abs() <= 1e-15);
    }

    #[test]
    fn oscillator_damped_frequency() {
        // lambda = 0.1, wd = sqrt(0.99): the first zero of the cos branch
        // falls at t = pi / (2 wd).
        let wd = 0.99_f64.sqrt();
        assert!((wd - 0.994987).abs() < 1e-6);
        let t = std::f64::consts::FRAC_PI_2 / wd;
        let (q, _) = analytic_damped_oscillator(1.0, 0.2, 1.0, 1.0, -0.1, t).unwrap();
        // v0 = -lambda q0 kills the sin branch entirely.
        assert!(q.abs() <= 1e-14, "got {q}");
    }

    #[test]
    fn oscillator_rejects_overdamped() {
        assert!(analytic_damped_oscillator(1.0, 2.0, 1.0, 1.0, 0.0, 0.5).is_err());
        assert!(analytic_damped_oscillator(1.0, 2.0, 0.9, 1.0, 0.0, 0.5).is_err());
        assert!(analytic_damped_oscillator(-1.0, 0.1, 1.0, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn oscillator_satisfies_its_ode() {
        let (m, rho, omega, q0, v0) = (1.4, 0.5, 1.3, 0.8, -0.6);
        for k in 0..40 {
            let t = 0.25 * k as f64;
            let (q, v) = analytic_damped_oscillator(m, rho, omega, q0, v0, t).unwrap();
            let a = analytic_damped_oscillator_accel(m, rho, omega, q0, v0, t).unwrap();
            let res = m * a + rho * v + omega * omega * m * q;
            assert!(res.abs() <= 1e-10, "t = {t}: residual {res}");
        }
    }

    #[test]
    fn rk4_free_particle_is_linear() {
        let sys = MechanicalSystem::new(
            vec![1.0],
            vec![0.0],
            Potential::Polynomial { coeffs: vec![vec![]] },
        )
        .unwrap();
        let r = rk4_reference(&sys, &[0.0], &[1.0], 0.25, 8).unwrap();
        for (k, p) in r.positions().iter().enumerate() {
            assert!((p[0] - 0.25 * k as f64).abs() <= 1e-14);
        }
        for v in r.velocities() {
            assert!((v[0] - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn rk4_matches_analytic_damped_oscillator() {
        let sys = damped(1.0, 0.2, 1.0);
        let h = 1e-3;
        let n = 10_000;
        let r = rk4_reference(&sys, &[1.0], &[0.0], h, n).unwrap();
        let mut worst = 0.0_f64;
        for k in (0..=n).step_by(100) {
            let (q, _) = analytic_damped_oscillator(1.0, 0.2, 1.0, 1.0, 0.0, k as f64 * h).unwrap();
            worst = worst.max((r.positions()[k][0] - q).abs());
        }
        assert!(worst <= 1e-8, "max deviation {worst}");
    }

    #[test]
    fn rk4_conserves_energy_without_damping() {
        let sys = damped(1.0, 0.0, 1.0);
        let h = 1e-3;
        let n = 10_000;
        let r = rk4_reference(&sys, &[1.0], &[0.0], h, n).unwrap();
        let e0 = sys.energy(&r.positions()[0], &r.velocities()[0]);
        for k in (0..=n).step_by(200) {
            let e = sys.energy(&r.positions()[k], &r.velocities()[k]);
            assert!((e - e0).abs() / e0 <= 1e-8, "node {k}: {e} vs {e0}");
        }
    }

    #[test]
    fn energy_series_constant_cases() {
        // Rest at an equilibrium: constant potential value.
        let well = MechanicalSystem::new(
            vec![1.0],
            vec![0.3],
            Potential::DoubleWell { a: 1.0, b: 2.0 },
        )
        .unwrap();
        let config = iv_config(0.5, 0.1, 10, vec![1.0], vec![0.0]);
        let t = integrate(&well, &config).unwrap();
        let es = energy_series(&well, &t).unwrap();
        assert_eq!(es.len(), 9);
        let u_star = well.potential().value(&[1.0]);
        for &e in es.values() {
            assert!((e - u_star).abs() <= 1e-13);
        }

        // Free particle: constant kinetic energy.
        let free = MechanicalSystem::new(
            vec![2.0],
            vec![0.0],
            Potential::Polynomial { coeffs: vec![vec![]] },
        )
        .unwrap();
        let t = integrate(&free, &iv_config(0.5, 0.25, 8, vec![0.0], vec![1.0])).unwrap();
        let es = energy_series(&free, &t).unwrap();
        for (&tk, &e) in es.times().iter().zip(es.values()) {
            assert!((e - 1.0).abs() <= 1e-13, "t = {tk}: {e}");
        }
        assert_eq!(es.velocity_tag(), "central-difference-interior");
    }

    #[test]
    fn energy_decreases_monotonically_under_damping() {
        // rho h / m = 0.04 <= 0.1.
        let sys = damped(1.0, 0.4, 1.0);
        let t = integrate(&sys, &iv_config(0.5, 0.1, 300, vec![1.0], vec![0.0])).unwrap();
        let es = energy_series(&sys, &t).unwrap();
        for w in es.values().windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn conservative_energy_has_no_secular_drift() {
        let sys = damped(1.0, 0.0, 1.0);
        let t = integrate(&sys, &iv_config(0.5, 0.05, 2000, vec![1.0], vec![0.0])).unwrap();
        let es = energy_series(&sys, &t).unwrap();
        let e0 = es.values()[0];
        let spread = es
            .values()
            .iter()
            .fold(0.0_f64, |acc, &e| acc.max((e - e0).abs()));
        // Midpoint-rule oscillation stays O(h^2) with no growth.
        assert!(spread <= 5e-3, "energy spread {spread}");
        let first_half = es.values()[..1000].iter().cloned().fold(0.0_f64, f64::max);
        let second_half = es.values()[1000..].iter().cloned().fold(0.0_f64, f64::max);
        assert!((second_half - first_half).abs() <= 1e-4);
    }

    #[test]
    fn balance_drift_zero_at_equilibrium() {
        let well = MechanicalSystem::new(
            vec![1.0],
            vec![0.5],
            Potential::DoubleWell { a: 1.0, b: 2.0 },
        )
        .unwrap();
        let t = integrate(&well, &iv_config(0.5, 0.1, 10, vec![1.0], vec![0.0])).unwrap();
        assert_eq!(first_integral_check(&well, &t).unwrap(), 0.0);
    }

    #[test]
    fn balance_drift_conservative_is_small() {
        let sys = damped(1.0, 0.0, 1.0);
        let coarse = integrate(&sys, &iv_config(0.5, 0.05, 200, vec![1.0], vec![0.0])).unwrap();
        let drift = first_integral_check(&sys, &coarse).unwrap();
        assert!(drift <= 5.0 * 0.05 * 0.05, "drift {drift}");
    }

    #[test]
    fn balance_drift_halves_with_step() {
        let sys = damped(1.0, 0.2, 1.0);
        let coarse = integrate(&sys, &iv_config(0.5, 0.02, 500, vec![1.0], vec![0.0])).unwrap();
        let fine = integrate(&sys, &iv_config(0.5, 0.01, 1000, vec![1.0], vec![0.0])).unwrap();
        let dc = first_integral_check(&sys, &coarse).unwrap();
        let df = first_integral_check(&sys, &fine).unwrap();
        let ratio = dc / df;
        assert!(
            (1.5..=4.5).contains(&ratio),
            "drift {dc} -> {df}, ratio {ratio}"
        );
    }

    #[test]
    fn convergence_conservative_midpoint_order_two() {
        let sys = damped(1.0, 0.0, 1.0);
        let base = iv_config(0.5, 0.1, 20, vec![1.0], vec![0.0]);
        let report = convergence_study(
            &sys,
            &base,
            |t| {
                let (q, _) = analytic_damped_oscillator(1.0, 0.0, 1.0, 1.0, 0.0, t).unwrap();
                vec![q]
            },
            &[0.1, 0.05, 0.025, 0.0125],
        )
        .unwrap();
        assert!(!report.incomplete && !report.exact);
        let slope = report.slope.unwrap();
        assert!((1.8..=2.2).contains(&slope), "observed order {slope}");
    }

    #[test]
    fn convergence_damped_order_at_least_one() {
        let sys = damped(1.0, 0.2, 1.0);
        let base = iv_config(0.5, 0.1, 20, vec![1.0], vec![0.0]);
        let report = convergence_study(
            &sys,
            &base,
            |t| {
                let (q, _) = analytic_damped_oscillator(1.0, 0.2, 1.0, 1.0, 0.0, t).unwrap();
                vec![q]
            },
            &[0.1, 0.05, 0.025, 0.0125],
        )
        .unwrap();
        let slope = report.slope.unwrap();
        assert!((0.9..=2.2).contains(&slope), "observed order {slope}");
        for w in report.errors.windows(2) {
            assert!(w[1] < w[0], "errors not decreasing: {:?}", report.errors);
        }
    }

    #[test]
    fn convergence_free_particle_reports_exact() {
        let sys = MechanicalSystem::new(
            vec![1.0],
            vec![0.0],
            Potential::Polynomial { coeffs: vec![vec![]] },
        )
        .unwrap();
        let base = iv_config(0.5, 0.1, 20, vec![0.0], vec![1.0]);
        let report = convergence_study(
            &sys,
            &base,
            |t| vec![t],
            &[0.1, 0.05, 0.025],
        )
        .unwrap();
        assert!(report.exact);
        assert!(report.slope.is_none());
    }

    #[test]
    fn convergence_marks_incomplete_on_step_failure() {
        let sys = MechanicalSystem::new(
            vec![1.0],
            vec![0.0],
            Potential::Custom {
                value: Arc::new(|q: &[f64]| 1e12 * q[0].powi(4)),
                gradient: Some(Arc::new(|q: &[f64]| vec![4e12 * q[0].powi(3)])),
            },
        )
        .unwrap();
        let mut base = iv_config(0.5, 0.1, 20, vec![1.0], vec![2.0]);
        base.newton.max_iter = 2;
        let report = convergence_study(&sys, &base, |_| vec![0.0], &[0.1, 0.05, 0.025]).unwrap();
        assert!(report.incomplete);
        assert!(report.slope.is_none());
    }

    #[test]
    fn convergence_validates_inputs() {
        let sys = damped(1.0, 0.0, 1.0);
        let base = iv_config(0.5, 0.1, 20, vec![1.0], vec![0.0]);
        assert!(convergence_study(&sys, &base, |_| vec![0.0], &[0.1, 0.05]).is_err());
        // 0.3 does not divide T = 2.
        assert!(convergence_study(&sys, &base, |_| vec![0.0], &[0.1, 0.05, 0.3]).is_err());
    }

    #[test]
    fn discrete_scheme_approaches_rk4_reference() {
        let sys = damped(1.0, 0.2, 1.0);
        let mut errors = Vec::new();
        for &h in &[0.1_f64, 0.05, 0.025, 0.0125] {
            let n = (2.0 / h).round() as usize;
            let t = integrate(&sys, &iv_config(0.5, h, n, vec![1.0], vec![0.0])).unwrap();
            let r = rk4_reference(&sys, &[1.0], &[0.0], h / 20.0, 20 * n).unwrap();
            let mut worst = 0.0_f64;
            for k in 0..=n {
                worst = worst.max((t.point(k)[0] - r.positions()[20 * k][0]).abs());
            }
            errors.push(worst);
        }
        for w in errors.windows(2) {
            assert!(w[1] < w[0], "errors not monotone: {errors:?}");
        }
    }
}
