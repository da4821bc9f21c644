//! Time steppers for the stationarity equations: a local marching scheme at
//! order one half (where the damping memory collapses to a first
//! difference), a full-history marching scheme for general order, a global
//! boundary-value solver, and the exact reversal that produces the
//! companion trajectory.
//!
//! Every accepted step solves residual_x(k) = 0 to the Newton tolerance, so
//! a marched trajectory is certified by re-evaluating the residuals through
//! the independent forms in `dynamics`.

use crate::dynamics::{residuals, DiscretePath, MechanicalSystem, Potential};
use crate::error::{Error, Result};
use crate::frac_ops::{gl_coefficients, CoeffTable};
use crate::linalg::Matrix;

/// How the Newton Jacobian is formed. Analytic uses the diagonal mass and
/// midpoint Hessian blocks; the finite-difference form perturbs the
/// residual directly (step 1e-7 (1 + |x_i|)) and is always used for custom
/// potentials, whose Hessian is not available in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

/// Newton solver settings shared by all steppers.
#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    /// Residual max-norm threshold; the step norm must drop below it too.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobian: JacobianMode,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 25, jacobian: JacobianMode::Analytic }
    }
}

/// Problem data: either an initial state or two-point boundary data.
#[derive(Debug, Clone)]
pub enum Mode {
    InitialValue { q0: Vec<f64>, v0: Vec<f64> },
    BoundaryValue { x_a: Vec<f64>, x_b: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub alpha: f64,
    pub h: f64,
    /// Number of steps N; the trajectory has N + 1 nodes.
    pub steps: usize,
    pub mode: Mode,
    pub newton: NewtonSettings,
}

impl IntegratorConfig {
    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::domain(format!("step size must be positive, got {}", self.h)));
        }
        if self.steps < 2 {
            return Err(Error::domain(format!("need at least 2 steps, got {}", self.steps)));
        }
        if !(self.newton.tol > 0.0) {
            return Err(Error::domain(format!(
                "Newton tolerance must be positive, got {}",
                self.newton.tol
            )));
        }
        if self.newton.max_iter < 1 {
            return Err(Error::domain("Newton needs max_iter >= 1"));
        }
        let pair = match &self.mode {
            Mode::InitialValue { q0, v0 } => (q0.len(), v0.len()),
            Mode::BoundaryValue { x_a, x_b } => (x_a.len(), x_b.len()),
        };
        if pair.0 != dim || pair.1 != dim {
            return Err(Error::size(format!(
                "mode data has dimensions {} and {}, system has {dim}",
                pair.0, pair.1
            )));
        }
        Ok(())
    }
}

/// Newton iteration counters for a completed run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NewtonStats {
    /// Number of nonlinear solves performed.
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
}

impl NewtonStats {
    fn record(&mut self, iterations: usize) {
        self.solves += 1;
        self.total_iterations += iterations;
        self.max_iterations = self.max_iterations.max(iterations);
    }
}

/// A completed run: nodes x_0..x_N with the grid and solver metadata.
#[derive(Debug, Clone)]
pub struct Trajectory {
    h: f64,
    alpha: f64,
    points: Vec<Vec<f64>>,
    system_hash: u64,
    stats: NewtonStats,
}

impl Trajectory {
    pub(crate) fn from_parts(
        h: f64,
        alpha: f64,
        points: Vec<Vec<f64>>,
        system_hash: u64,
        stats: NewtonStats,
    ) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::size("trajectory needs at least two nodes"));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::domain("trajectory contains non-finite entries"));
        }
        Ok(Self { h, alpha, points, system_hash, stats })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    /// Number of steps N (one less than the node count).
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Hash of the producing system's numerical content.
    pub fn system_hash(&self) -> u64 {
        self.system_hash
    }

    pub fn stats(&self) -> NewtonStats {
        self.stats
    }
}

/// Details of a Newton solve that did not converge.
#[derive(Debug, Clone)]
pub struct StepFailure {
    /// Index of the node being produced (or the unknown block for the
    /// boundary solver).
    pub node: usize,
    pub iterations: usize,
    pub residual_norm: f64,
    pub last_iterate: Vec<f64>,
    /// Nodes accepted before the failure.
    pub partial: Vec<Vec<f64>>,
}

/// FNV-1a over the system's numerical content. Custom potentials hash by
/// kind only; the built-ins fold in their parameters.
pub fn system_hash(sys: &MechanicalSystem) -> u64 {
    let mut state: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            state ^= u64::from(b);
            state = state.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&(sys.dim() as u64).to_le_bytes());
    for &m in sys.mass() {
        eat(&m.to_bits().to_le_bytes());
    }
    for &r in sys.damping() {
        eat(&r.to_bits().to_le_bytes());
    }
    match sys.potential() {
        Potential::Harmonic { omega } => {
            eat(&[1]);
            for &w in omega {
                eat(&w.to_bits().to_le_bytes());
            }
        }
        Potential::Pendulum { g_over_l } => {
            eat(&[2]);
            eat(&g_over_l.to_bits().to_le_bytes());
        }
        Potential::DoubleWell { a, b } => {
            eat(&[3]);
            eat(&a.to_bits().to_le_bytes());
            eat(&b.to_bits().to_le_bytes());
        }
        Potential::Polynomial { coeffs } => {
            eat(&[4]);
            for cs in coeffs {
                eat(&(cs.len() as u64).to_le_bytes());
                for &c in cs {
                    eat(&c.to_bits().to_le_bytes());
                }
            }
        }
        Potential::Custom { .. } => eat(&[5]),
    }
    state
}

/// Second-order-consistent start: x_0 = q0 and
/// x_1 = q0 + h v0 + (h^2/2) M^{-1} (-R v0 - grad U(q0)).
pub fn init_first_step(
    sys: &MechanicalSystem,
    q0: &[f64],
    v0: &[f64],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if q0.len() != sys.dim() || v0.len() != sys.dim() {
        return Err(Error::size(format!(
            "initial data has dimensions {} and {}, system has {}",
            q0.len(),
            v0.len(),
            sys.dim()
        )));
    }
    if q0.iter().chain(v0).any(|v| !v.is_finite()) {
        return Err(Error::domain("initial data must be finite"));
    }
    let grad = sys.potential().gradient(q0);
    let x1 = (0..sys.dim())
        .map(|i| {
            let a0 = (-sys.damping()[i] * v0[i] - grad[i]) / sys.mass()[i];
            q0[i] + h * v0[i] + 0.5 * h * h * a0
        })
        .collect();
    Ok((q0.to_vec(), x1))
}

enum SolveError {
    Hard(Error),
    Stalled { last: Vec<f64>, residual_norm: f64, iterations: usize },
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

/// Damped Newton iteration: full step first, halved up to 8 times while the
/// residual norm increases; converged when both the residual and the last
/// step are at tolerance in the max-norm.
fn newton_solve<R, J>(
    init: Vec<f64>,
    res: R,
    jac: J,
    settings: &NewtonSettings,
) -> std::result::Result<(Vec<f64>, usize), SolveError>
where
    R: Fn(&[f64]) -> Result<Vec<f64>>,
    J: Fn(&[f64]) -> Result<Matrix>,
{
    let mut u = init;
    let mut r = res(&u).map_err(SolveError::Hard)?;
    let mut rn = max_abs(&r);
    if rn <= settings.tol {
        return Ok((u, 0));
    }
    for it in 1..=settings.max_iter {
        let j = jac(&u).map_err(SolveError::Hard)?;
        let rhs: Vec<f64> = r.iter().map(|&v| -v).collect();
        let delta = match j.solve(&rhs) {
            Ok(d) => d,
            Err(_) => {
                return Err(SolveError::Stalled { last: u, residual_norm: rn, iterations: it })
            }
        };
        let mut scale = 1.0;
        let mut trial;
        let mut tr;
        let mut trn;
        loop {
            trial = u.iter().zip(&delta).map(|(&a, &d)| a + scale * d).collect::<Vec<f64>>();
            tr = res(&trial).map_err(SolveError::Hard)?;
            trn = max_abs(&tr);
            if trn.is_finite() && (trn < rn || scale <= 1.0 / 256.0) {
                break;
            }
            scale /= 2.0;
        }
        let step_norm = scale * max_abs(&delta);
        u = trial;
        r = tr;
        rn = trn;
        if rn <= settings.tol && step_norm <= settings.tol {
            return Ok((u, it));
        }
    }
    Err(SolveError::Stalled { last: u, residual_norm: rn, iterations: settings.max_iter })
}

fn fd_jacobian<R>(res: R, u: &[f64], step_of: impl Fn(f64) -> f64) -> Result<Matrix>
where
    R: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = u.len();
    let mut j = Matrix::zeros(n);
    let mut probe = u.to_vec();
    for c in 0..n {
        let step = step_of(u[c]);
        probe[c] = u[c] + step;
        let up = res(&probe)?;
        probe[c] = u[c] - step;
        let dn = res(&probe)?;
        probe[c] = u[c];
        for r in 0..n {
            j.set(r, c, (up[r] - dn[r]) / (2.0 * step));
        }
    }
    Ok(j)
}

/// Solves one implicit step: the unknown u = x_{k+1} enters through the
/// second difference and the upper midpoint gradient; everything else
/// (damping memory, lower midpoint gradient) is the constant `damp_const`
/// plus the cached lower gradient.
fn solve_step(
    sys: &MechanicalSystem,
    x_prev: &[f64],
    x_curr: &[f64],
    damp_const: &[f64],
    h: f64,
    newton: &NewtonSettings,
) -> std::result::Result<(Vec<f64>, usize), SolveError> {
    let d = sys.dim();
    let mid_dn: Vec<f64> = (0..d).map(|i| (x_curr[i] + x_prev[i]) / 2.0).collect();
    let grad_dn = sys.potential().gradient(&mid_dn);
    let res = |u: &[f64]| -> Result<Vec<f64>> {
        let mid_up: Vec<f64> = (0..d).map(|i| (u[i] + x_curr[i]) / 2.0).collect();
        let grad_up = sys.potential().gradient(&mid_up);
        Ok((0..d)
            .map(|i| {
                sys.mass()[i] * (u[i] - 2.0 * x_curr[i] + x_prev[i]) / (h * h)
                    + damp_const[i]
                    + 0.5 * grad_up[i]
                    + 0.5 * grad_dn[i]
            })
            .collect())
    };
    let use_fd = newton.jacobian == JacobianMode::FiniteDifference
        || matches!(sys.potential(), Potential::Custom { .. });
    let init: Vec<f64> = (0..d).map(|i| 2.0 * x_curr[i] - x_prev[i]).collect();
    if use_fd {
        newton_solve(init, res, |u| fd_jacobian(res, u, |x| 1e-7 * (1.0 + x.abs())), newton)
    } else {
        let jac = |u: &[f64]| -> Result<Matrix> {
            let mid_up: Vec<f64> = (0..d).map(|i| (u[i] + x_curr[i]) / 2.0).collect();
            let hess = sys.potential().hessian_diag(&mid_up);
            let mut j = Matrix::zeros(d);
            for i in 0..d {
                j.set(i, i, sys.mass()[i] / (h * h) + 0.25 * hess[i]);
            }
            Ok(j)
        };
        newton_solve(init, res, jac, newton)
    }
}

fn step_error(node: usize, partial: Vec<Vec<f64>>, err: SolveError) -> Error {
    match err {
        SolveError::Hard(e) => e,
        SolveError::Stalled { last, residual_norm, iterations } => {
            Error::Step(Box::new(StepFailure {
                node,
                iterations,
                residual_norm,
                last_iterate: last,
                partial,
            }))
        }
    }
}

/// One step of the order-one-half scheme: the damping memory collapses to
/// R (x_k - x_{k-1}) / h. Newton starts from the linear extrapolation
/// 2 x_k - x_{k-1}. Returns the new node and the iteration count.
pub fn step_half(
    sys: &MechanicalSystem,
    x_prev: &[f64],
    x_curr: &[f64],
    h: f64,
    newton: &NewtonSettings,
) -> Result<(Vec<f64>, usize)> {
    let damp: Vec<f64> = (0..sys.dim())
        .map(|i| sys.damping()[i] * (x_curr[i] - x_prev[i]) / h)
        .collect();
    solve_step(sys, x_prev, x_curr, &damp, h, newton)
        .map_err(|e| step_error(x_prev.len().max(1), vec![x_prev.to_vec(), x_curr.to_vec()], e))
}

/// One step of the full-history scheme at general order. The damping double
/// sum depends only on the known history x_0..x_k, so it enters the solve
/// as a constant. The weight table must cover index k.
pub fn step_general(
    sys: &MechanicalSystem,
    history: &[Vec<f64>],
    coeffs: &CoeffTable,
    h: f64,
    newton: &NewtonSettings,
) -> Result<(Vec<f64>, usize)> {
    if history.len() < 2 {
        return Err(Error::size("history needs at least two nodes"));
    }
    let k = history.len() - 1;
    let d = sys.dim();
    let scale = h.powf(-2.0 * coeffs.alpha());
    let c = coeffs.coeffs();
    if c.len() <= k {
        return Err(Error::size(format!(
            "weight table covers indices up to {}, history reaches {k}",
            c.len() - 1
        )));
    }
    let mut dbl = vec![0.0; d];
    for n in 0..=k {
        let mut inner = vec![0.0; d];
        for p in 0..=(k - n) {
            for i in 0..d {
                inner[i] += c[p] * history[k - n - p][i];
            }
        }
        for i in 0..d {
            dbl[i] += c[n] * inner[i];
        }
    }
    let damp: Vec<f64> = (0..d).map(|i| sys.damping()[i] * scale * dbl[i]).collect();
    solve_step(sys, &history[k - 1], &history[k], &damp, h, newton)
        .map_err(|e| step_error(k + 1, history.to_vec(), e))
}

/// Marches the initial-value problem: the order-one-half fast path when
/// alpha is exactly one half, otherwise the full-history scheme with the
/// inner convolution cached incrementally (each step costs O(k), the run
/// O(N^2), inherent to the non-local memory).
pub fn integrate(sys: &MechanicalSystem, config: &IntegratorConfig) -> Result<Trajectory> {
    config.validate(sys.dim())?;
    let (q0, v0) = match &config.mode {
        Mode::InitialValue { q0, v0 } => (q0, v0),
        Mode::BoundaryValue { .. } => {
            return Err(Error::domain("integrate requires initial-value mode"));
        }
    };
    let h = config.h;
    let n = config.steps;
    let d = sys.dim();
    let (x0, x1) = init_first_step(sys, q0, v0, h)?;
    let mut points = Vec::with_capacity(n + 1);
    points.push(x0);
    points.push(x1);
    let mut stats = NewtonStats::default();

    if config.alpha == 0.5 {
        for k in 1..n {
            let step = step_half(sys, &points[k - 1], &points[k], h, &config.newton);
            let (next, iters) = step.map_err(|e| attach_partial(e, &points, k + 1))?;
            stats.record(iters);
            points.push(next);
        }
    } else {
        let coeffs = gl_coefficients(config.alpha, n)?;
        let c = coeffs.coeffs();
        let scale = h.powf(-2.0 * config.alpha);
        // inner[j] = sum_p c_p x_{j-p}; extended as nodes are accepted.
        let mut inner: Vec<Vec<f64>> = Vec::with_capacity(n);
        let push_inner = |inner: &mut Vec<Vec<f64>>, points: &[Vec<f64>]| {
            let j = inner.len();
            let mut v = vec![0.0; d];
            for p in 0..=j {
                for i in 0..d {
                    v[i] += c[p] * points[j - p][i];
                }
            }
            inner.push(v);
        };
        push_inner(&mut inner, &points);
        push_inner(&mut inner, &points);
        for k in 1..n {
            let mut dbl = vec![0.0; d];
            for nn in 0..=k {
                for i in 0..d {
                    dbl[i] += c[nn] * inner[k - nn][i];
                }
            }
            let damp: Vec<f64> =
                (0..d).map(|i| sys.damping()[i] * scale * dbl[i]).collect();
            let step = solve_step(sys, &points[k - 1], &points[k], &damp, h, &config.newton)
                .map_err(|e| step_error(k + 1, points.clone(), e));
            let (next, iters) = step?;
            stats.record(iters);
            points.push(next);
            push_inner(&mut inner, &points);
        }
    }
    Trajectory::from_parts(h, config.alpha, points, system_hash(sys), stats)
}

fn attach_partial(err: Error, points: &[Vec<f64>], node: usize) -> Error {
    match err {
        Error::Step(mut f) => {
            f.node = node;
            f.partial = points.to_vec();
            Error::Step(f)
        }
        other => other,
    }
}

/// The companion trajectory y_k = x_{N-k}. The stationarity residual of the
/// companion at node k reproduces the forward residual at node N - k term
/// for term, so a converged forward run yields a converged companion for
/// every order.
pub fn reverse_trajectory(t: &Trajectory) -> Trajectory {
    let mut points = t.points.clone();
    points.reverse();
    Trajectory {
        h: t.h,
        alpha: t.alpha,
        points,
        system_hash: t.system_hash,
        stats: t.stats,
    }
}

/// Solves the two-point problem x_0 = x_a, x_N = x_b by global Newton on
/// the stacked interior residuals, starting from the straight line between
/// the boundary values. The companion trajectory is the exact reversal.
pub fn solve_bvp(
    sys: &MechanicalSystem,
    config: &IntegratorConfig,
) -> Result<(Trajectory, Trajectory)> {
    config.validate(sys.dim())?;
    let (x_a, x_b) = match &config.mode {
        Mode::BoundaryValue { x_a, x_b } => (x_a.clone(), x_b.clone()),
        Mode::InitialValue { .. } => {
            return Err(Error::domain("solve_bvp requires boundary-value mode"));
        }
    };
    let h = config.h;
    let n = config.steps;
    let d = sys.dim();
    let coeffs = gl_coefficients(config.alpha, n)?;
    let weights = coeffs.self_convolution();
    let scale = h.powf(-2.0 * config.alpha);

    let unknowns = (n - 1) * d;
    let assemble = |z: &[f64]| -> Vec<Vec<f64>> {
        let mut nodes = Vec::with_capacity(n + 1);
        nodes.push(x_a.clone());
        for k in 0..n - 1 {
            nodes.push(z[k * d..(k + 1) * d].to_vec());
        }
        nodes.push(x_b.clone());
        nodes
    };
    let res = |z: &[f64]| -> Result<Vec<f64>> {
        let nodes = assemble(z);
        let path = DiscretePath::with_reversed(h, config.alpha, nodes)?;
        let rv = residuals(sys, &path)?;
        let mut out = Vec::with_capacity(unknowns);
        for k in 1..n {
            out.extend_from_slice(rv.rx(k));
        }
        Ok(out)
    };

    let use_fd = config.newton.jacobian == JacobianMode::FiniteDifference
        || matches!(sys.potential(), Potential::Custom { .. });
    let jac = |z: &[f64]| -> Result<Matrix> {
        if use_fd {
            return fd_jacobian(res, z, |x| 1e-7 * (1.0 + x.abs()));
        }
        let nodes = assemble(z);
        let mut j = Matrix::zeros(unknowns);
        for k in 1..n {
            let row0 = (k - 1) * d;
            let mid_up: Vec<f64> =
                (0..d).map(|i| (nodes[k + 1][i] + nodes[k][i]) / 2.0).collect();
            let mid_dn: Vec<f64> =
                (0..d).map(|i| (nodes[k][i] + nodes[k - 1][i]) / 2.0).collect();
            let hu = sys.potential().hessian_diag(&mid_up);
            let hd = sys.potential().hessian_diag(&mid_dn);
            for i in 0..d {
                let row = row0 + i;
                // Unknown columns are nodes 1..N-1; node index c maps to
                // column (c-1)*d + i. Contributions per node:
                //   x_{k+1}: M/h^2 + Hess_up/4
                //   x_k:    -2M/h^2 + (Hess_up + Hess_dn)/4 + R w_0 scale
                //   x_{k-1}: M/h^2 + Hess_dn/4 + R w_1 scale
                //   x_{k-j}: R w_j scale (damping memory, j >= 2)
                if k + 1 <= n - 1 {
                    j.add_to(row, k * d + i, sys.mass()[i] / (h * h) + 0.25 * hu[i]);
                }
                j.add_to(
                    row,
                    (k - 1) * d + i,
                    -2.0 * sys.mass()[i] / (h * h)
                        + 0.25 * (hu[i] + hd[i])
                        + sys.damping()[i] * scale * weights[0],
                );
                if k >= 2 {
                    j.add_to(
                        row,
                        (k - 2) * d + i,
                        sys.mass()[i] / (h * h)
                            + 0.25 * hd[i]
                            + sys.damping()[i] * scale * weights[1],
                    );
                }
                for jj in 2..=k.saturating_sub(1) {
                    let cnode = k - jj;
                    if cnode >= 1 {
                        j.add_to(
                            row,
                            (cnode - 1) * d + i,
                            sys.damping()[i] * scale * weights[jj],
                        );
                    }
                }
            }
        }
        Ok(j)
    };

    let mut init = Vec::with_capacity(unknowns);
    for k in 1..n {
        let t = k as f64 / n as f64;
        for i in 0..d {
            init.push(x_a[i] + t * (x_b[i] - x_a[i]));
        }
    }

    let (z, iterations) = newton_solve(init, res, jac, &config.newton).map_err(|e| match e {
        SolveError::Hard(err) => err,
        SolveError::Stalled { last, residual_norm, iterations } => {
            let partial = assemble(&last);
            Error::Step(Box::new(StepFailure {
                node: 0,
                iterations,
                residual_norm,
                last_iterate: last,
                partial,
            }))
        }
    })?;
    let mut stats = NewtonStats::default();
    stats.record(iterations);
    let x = Trajectory::from_parts(h, config.alpha, assemble(&z), system_hash(sys), stats)?;
    let y = reverse_trajectory(&x);
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{residual_x, residual_y};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn free_1d() -> MechanicalSystem {
        MechanicalSystem::new(
            vec![1.0],
            vec![0.0],
            Potential::Polynomial { coeffs: vec![vec![]] },
        )
        .unwrap()
    }

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
    fn first_step_examples() {
        // Rest at an equilibrium stays put.
        let well = MechanicalSystem::new(
            vec![1.0],
            vec![0.5],
            Potential::DoubleWell { a: 1.0, b: 2.0 },
        )
        .unwrap();
        let (x0, x1) = init_first_step(&well, &[1.0], &[0.0], 0.1).unwrap();
        assert_eq!(x0, vec![1.0]);
        assert_eq!(x1, vec![1.0]);

        let (_, x1) = init_first_step(&free_1d(), &[0.0], &[1.0], 0.1).unwrap();
        assert_eq!(x1, vec![0.1]);

        let (_, x1) = init_first_step(&damped(1.0, 0.0, 1.0), &[1.0], &[0.0], 0.1).unwrap();
        assert!((x1[0] - 0.995).abs() < 1e-15);
    }

    #[test]
    fn half_step_free_particle_is_linear_extrapolation() {
        let sys = free_1d();
        let settings = NewtonSettings::default();
        let (next, iters) = step_half(&sys, &[0.25], &[0.5], 0.25, &settings).unwrap();
        assert_eq!(next, vec![0.75]);
        assert!(iters <= 1);
    }

    #[test]
    fn half_step_damped_closed_form() {
        let sys = MechanicalSystem::new(
            vec![1.0],
            vec![1.0],
            Potential::Polynomial { coeffs: vec![vec![]] },
        )
        .unwrap();
        let (next, _) = step_half(&sys, &[0.0], &[0.1], 0.1, &NewtonSettings::default()).unwrap();
        assert!((next[0] - 0.19).abs() <= 1e-12, "got {}", next[0]);
    }

    #[test]
    fn half_step_harmonic_matches_direct_linear_solve() {
        let sys = damped(1.0, 0.0, 1.0);
        let h = 0.1;
        let (x0, x1) = (1.0, 0.995);
        let (next, _) = step_half(&sys, &[x0], &[x1], h, &NewtonSettings::default()).unwrap();
        // Scalar linear system: (m/h^2 + w^2/4) x2 = m(2x1 - x0)/h^2 - w^2(2x1 + x0)/4.
        let a = 1.0 / (h * h) + 0.25;
        let b = (2.0 * x1 - x0) / (h * h) - 0.25 * (2.0 * x1 + x0);
        assert!((next[0] - b / a).abs() <= 1e-11, "{} vs {}", next[0], b / a);
    }

    #[test]
    fn general_step_at_half_matches_fast_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sys = damped(1.0, 0.6, 1.3);
        let settings = NewtonSettings::default();
        for _ in 0..10 {
            let n = rng.gen_range(5..40);
            let coeffs = gl_coefficients(0.5, n + 1).unwrap();
            let mut hist: Vec<Vec<f64>> =
                vec![vec![rng.gen_range(-1.0..1.0)], vec![rng.gen_range(-1.0..1.0)]];
            for _ in 1..n {
                let k = hist.len() - 1;
                let (a, _) = step_half(&sys, &hist[k - 1], &hist[k], 0.05, &settings).unwrap();
                let (b, _) = step_general(&sys, &hist, &coeffs, 0.05, &settings).unwrap();
                assert!((a[0] - b[0]).abs() <= 1e-11, "{} vs {}", a[0], b[0]);
                hist.push(a);
            }
        }
    }

    #[test]
    fn general_step_order_one_second_difference() {
        // At order 1 the damping weights self-convolve to [1, -2, 1]: the
        // memory term is R (x_k - 2x_{k-1} + x_{k-2}) / h^2 = -1 here, so
        // x_3 = 0.38 - 0.1 + 0.01 = 0.29.
        let sys = MechanicalSystem::new(
            vec![1.0],
            vec![1.0],
            Potential::Polynomial { coeffs: vec![vec![]] },
        )
        .unwrap();
        let coeffs = gl_coefficients(1.0, 5).unwrap();
        let hist = vec![vec![0.0], vec![0.1], vec![0.19]];
        let (next, _) = step_general(&sys, &hist, &coeffs, 0.1, &NewtonSettings::default()).unwrap();
        assert!((next[0] - 0.29).abs() <= 1e-12, "got {}", next[0]);
    }

    #[test]
    fn general_step_without_damping_is_midpoint_rule() {
        let sys = damped(1.0, 0.0, 2.0);
        let coeffs = gl_coefficients(0.3, 10).unwrap();
        let hist = vec![vec![0.9], vec![0.7], vec![0.4]];
        let settings = NewtonSettings::default();
        let (a, _) = step_general(&sys, &hist, &coeffs, 0.2, &settings).unwrap();
        let (b, _) = step_half(&sys, &hist[1], &hist[2], 0.2, &settings).unwrap();
        assert!((a[0] - b[0]).abs() <= 1e-13);
    }

    #[test]
    fn integrate_free_particle_is_exact_line() {
        let sys = free_1d();
        let config = iv_config(0.5, 0.25, 8, vec![0.0], vec![1.0]);
        let t = integrate(&sys, &config).unwrap();
        assert_eq!(t.points().len(), 9);
        for (k, p) in t.points().iter().enumerate() {
            assert_eq!(p[0], 0.25 * k as f64, "node {k}");
        }
    }

    #[test]
    fn integrate_damped_baseline_matches_analytic() {
        let sys = damped(1.0, 0.2, 1.0);
        let config = iv_config(0.5, 0.01, 1000, vec![1.0], vec![0.0]);
        let t = integrate(&sys, &config).unwrap();
        // Underdamped closed form at t = 10: lambda = rho / 2m.
        let lambda = 0.1;
        let wd = (1.0_f64 - lambda * lambda).sqrt();
        let tt = 10.0;
        let q = (-lambda * tt).exp() * ((wd * tt).cos() + lambda / wd * (wd * tt).sin());
        let err = (t.point(1000)[0] - q).abs();
        assert!(err <= 2e-2, "final-point error {err}");
    }

    #[test]
    fn integrate_quarter_order_newton_stays_cheap() {
        let sys = damped(1.0, 0.2, 1.0);
        let config = iv_config(0.25, 0.05, 200, vec![1.0], vec![0.0]);
        let t = integrate(&sys, &config).unwrap();
        assert!(t.stats().max_iterations <= 5, "stats {:?}", t.stats());
        assert_eq!(t.stats().solves, 199);
    }

    #[test]
    fn accepted_trajectories_certify_against_independent_residuals() {
        for &alpha in &[0.25, 0.5, 0.75] {
            let sys = damped(1.0, 0.4, 1.1);
            let config = iv_config(alpha, 0.05, 60, vec![0.8], vec![-0.1]);
            let t = integrate(&sys, &config).unwrap();
            let path =
                DiscretePath::with_reversed(t.h(), alpha, t.points().to_vec()).unwrap();
            let rv = residuals(&sys, &path).unwrap();
            let mut worst = 0.0_f64;
            for k in 1..60 {
                worst = worst.max(rv.rx(k)[0].abs());
            }
            assert!(worst <= 1e-10, "alpha {alpha}: residual {worst}");
        }
    }

    #[test]
    fn reversal_of_palindrome_is_identity() {
        let sys = free_1d();
        let config = iv_config(0.5, 0.1, 6, vec![0.7], vec![0.0]);
        let t = integrate(&sys, &config).unwrap();
        let y = reverse_trajectory(&t);
        assert_eq!(t.points(), y.points());
    }

    #[test]
    fn reversal_residuals_stay_at_tolerance() {
        for &alpha in &[0.25, 0.5, 0.75] {
            let sys = damped(1.0, 0.3, 1.0);
            let n = if alpha == 0.5 { 400 } else { 100 };
            let config = iv_config(alpha, 0.02, n, vec![1.0], vec![0.0]);
            let x = integrate(&sys, &config).unwrap();
            let y = reverse_trajectory(&x);
            let path = DiscretePath::new(
                x.h(),
                alpha,
                x.points().to_vec(),
                y.points().to_vec(),
            )
            .unwrap();
            let mut worst_x = 0.0_f64;
            let mut worst_y = 0.0_f64;
            for k in 1..n {
                worst_x = worst_x.max(residual_x(&sys, &path, k).unwrap()[0].abs());
                worst_y = worst_y.max(residual_y(&sys, &path, k).unwrap()[0].abs());
            }
            assert!(worst_y <= 1e-9, "alpha {alpha}: reversal residual {worst_y}");
            assert!(
                worst_y <= 10.0 * worst_x.max(1e-300),
                "alpha {alpha}: {worst_y} vs 10 x {worst_x}"
            );
        }
    }

    #[test]
    fn bvp_free_particle_is_straight_line() {
        let sys = free_1d();
        let config = IntegratorConfig {
            alpha: 0.5,
            h: 0.1,
            steps: 10,
            mode: Mode::BoundaryValue { x_a: vec![0.0], x_b: vec![1.0] },
            newton: NewtonSettings::default(),
        };
        let (x, y) = solve_bvp(&sys, &config).unwrap();
        for k in 0..=10 {
            assert!((x.point(k)[0] - k as f64 / 10.0).abs() <= 1e-12, "node {k}");
            assert!((y.point(k)[0] - (10 - k) as f64 / 10.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn bvp_conservative_harmonic_matches_analytic() {
        let sys = damped(1.0, 0.0, 1.0);
        let (x_a, x_b, tt) = (1.0, 0.8, 1.0);
        let n = 100;
        let config = IntegratorConfig {
            alpha: 0.5,
            h: tt / n as f64,
            steps: n,
            mode: Mode::BoundaryValue { x_a: vec![x_a], x_b: vec![x_b] },
            newton: NewtonSettings::default(),
        };
        let (x, _) = solve_bvp(&sys, &config).unwrap();
        let bcoef = (x_b - x_a * tt.cos()) / tt.sin();
        let mut worst = 0.0_f64;
        for k in 0..=n {
            let t = k as f64 * config.h;
            let exact = x_a * t.cos() + bcoef * t.sin();
            worst = worst.max((x.point(k)[0] - exact).abs());
        }
        assert!(worst <= 1e-3, "max deviation {worst}");
    }

    #[test]
    fn bvp_damped_agrees_with_marching() {
        for &alpha in &[0.5, 0.35] {
            let sys = damped(1.0, 0.3, 1.0);
            let n = 50;
            let h = 0.02;
            let config = IntegratorConfig {
                alpha,
                h,
                steps: n,
                mode: Mode::BoundaryValue { x_a: vec![1.0], x_b: vec![0.5] },
                newton: NewtonSettings::default(),
            };
            let (x, _) = solve_bvp(&sys, &config).unwrap();
            let coeffs = gl_coefficients(alpha, n).unwrap();
            let settings = NewtonSettings::default();
            let mut hist = vec![x.point(0).to_vec(), x.point(1).to_vec()];
            for k in 2..=n {
                let next = if alpha == 0.5 {
                    step_half(&sys, &hist[k - 2], &hist[k - 1], h, &settings).unwrap().0
                } else {
                    step_general(&sys, &hist, &coeffs, h, &settings).unwrap().0
                };
                assert!(
                    (next[0] - x.point(k)[0]).abs() <= 1e-9,
                    "alpha {alpha} node {k}: {} vs {}",
                    next[0],
                    x.point(k)[0]
                );
                hist.push(next);
            }
        }
    }

    #[test]
    fn bvp_two_steps_single_unknown() {
        let sys = free_1d();
        let config = IntegratorConfig {
            alpha: 0.5,
            h: 0.5,
            steps: 2,
            mode: Mode::BoundaryValue { x_a: vec![0.0], x_b: vec![1.0] },
            newton: NewtonSettings::default(),
        };
        let (x, _) = solve_bvp(&sys, &config).unwrap();
        assert!((x.point(1)[0] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn config_and_mode_validation() {
        let sys = free_1d();
        let mut config = iv_config(0.5, 0.1, 5, vec![0.0], vec![0.0]);
        config.h = -1.0;
        assert!(integrate(&sys, &config).is_err());
        let mut config = iv_config(0.5, 0.1, 1, vec![0.0], vec![0.0]);
        assert!(integrate(&sys, &config).is_err());
        config.steps = 5;
        config.newton.tol = 0.0;
        assert!(integrate(&sys, &config).is_err());
        let bv = IntegratorConfig {
            alpha: 0.5,
            h: 0.1,
            steps: 5,
            mode: Mode::BoundaryValue { x_a: vec![0.0], x_b: vec![1.0] },
            newton: NewtonSettings::default(),
        };
        assert!(integrate(&sys, &bv).is_err());
        assert!(solve_bvp(&sys, &iv_config(0.5, 0.1, 5, vec![0.0], vec![0.0])).is_err());
    }

    #[test]
    fn newton_failure_carries_partial_trajectory() {
        // A hostile potential whose gradient explodes: Newton cannot reach
        // the tolerance within two iterations.
        let sys = MechanicalSystem::new(
            vec![1.0],
            vec![0.0],
            Potential::Custom {
                value: Arc::new(|q: &[f64]| 1e12 * q[0].powi(4)),
                gradient: Some(Arc::new(|q: &[f64]| vec![4e12 * q[0].powi(3)])),
            },
        )
        .unwrap();
        let mut config = iv_config(0.5, 0.5, 6, vec![1.0], vec![2.0]);
        config.newton.max_iter = 2;
        match integrate(&sys, &config) {
            Err(Error::Step(f)) => {
                assert!(f.node >= 2);
                assert!(f.partial.len() >= 2);
                assert!(f.residual_norm > config.newton.tol);
            }
            other => panic!("expected step failure, got {other:?}"),
        }
    }

    #[test]
    fn fd_jacobian_mode_matches_analytic_solution() {
        let sys = damped(1.0, 0.2, 1.0);
        let mut config = iv_config(0.5, 0.05, 40, vec![1.0], vec![0.0]);
        let a = integrate(&sys, &config).unwrap();
        config.newton.jacobian = JacobianMode::FiniteDifference;
        let b = integrate(&sys, &config).unwrap();
        for k in 0..=40 {
            assert!((a.point(k)[0] - b.point(k)[0]).abs() <= 1e-9, "node {k}");
        }
    }

    #[test]
    fn hash_tracks_system_content() {
        let a = damped(1.0, 0.2, 1.0);
        let b = damped(1.0, 0.2, 1.0);
        let c = damped(1.0, 0.3, 1.0);
        assert_eq!(system_hash(&a), system_hash(&b));
        assert_ne!(system_hash(&a), system_hash(&c));
        let t = integrate(&a, &iv_config(0.5, 0.1, 5, vec![1.0], vec![0.0])).unwrap();
        assert_eq!(t.system_hash(), system_hash(&a));
    }
}
