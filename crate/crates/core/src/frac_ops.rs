//! Discrete difference operators on uniform time grids.
//!
//! Provides the Grünwald–Letnikov weight table, the shift/average and
//! first-order difference operators, left and right fractional differences,
//! their composed (double-convolution) forms, the boundary coefficients
//! `beta_coefficient` built from the weights, and a discrete
//! integration-by-parts checker used throughout the test suite.
//!
//! Sign conventions, fixed once here and relied on everywhere else:
//! backward difference `(z_k - z_{k-1}) / h` with the k = 0 value defined as
//! zero, forward difference `-(z_{k+1} - z_k) / h` (note the leading minus),
//! left fractional difference summing into the past, right fractional
//! difference summing into the future.

use crate::accum::Neumaier;
use crate::error::{Error, Result};

/// Grünwald–Letnikov weights c_0..c_n for a fractional order in [0, 1].
///
/// c_0 = 1 and c_n = c_{n-1} (n - 1 - alpha) / n. For alpha strictly inside
/// (0, 1) every weight past c_0 is negative and the partial sums stay
/// nonnegative; alpha = 1 gives [1, -1, 0, 0, ...] and alpha = 0 gives
/// [1, 0, 0, ...], so the fractional operators collapse to the classical
/// ones at the endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    alpha: f64,
    coeffs: Vec<f64>,
}

/// Builds the weight table up to index `n_max` via the stable recurrence.
pub fn gl_coefficients(alpha: f64, n_max: usize) -> Result<CoeffTable> {
    if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!(
            "fractional order alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let mut coeffs = Vec::with_capacity(n_max + 1);
    coeffs.push(1.0);
    for n in 1..=n_max {
        let nf = n as f64;
        let prev = coeffs[n - 1];
        coeffs.push(prev * ((nf - 1.0 - alpha) / nf));
    }
    Ok(CoeffTable { alpha, coeffs })
}

impl CoeffTable {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Number of stored weights (n_max + 1).
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn get(&self, n: usize) -> Result<f64> {
        self.coeffs
            .get(n)
            .copied()
            .ok_or_else(|| table_too_short(n, self.coeffs.len()))
    }

    /// Self-convolution g_m = sum_{i=0}^m c_i c_{m-i} of the weights.
    ///
    /// For alpha = 1/2 this is exactly [1, -1, 0, 0, ...]: composing the
    /// half-order difference with itself yields the first difference.
    pub fn self_convolution(&self) -> Vec<f64> {
        let n = self.coeffs.len();
        let mut out = Vec::with_capacity(n);
        for m in 0..n {
            let mut acc = Neumaier::new();
            for i in 0..=m {
                acc.add(self.coeffs[i] * self.coeffs[m - i]);
            }
            out.push(acc.value());
        }
        out
    }

    fn require(&self, n: usize) -> Result<()> {
        if n < self.coeffs.len() {
            Ok(())
        } else {
            Err(table_too_short(n, self.coeffs.len()))
        }
    }
}

fn table_too_short(n: usize, len: usize) -> Error {
    Error::size(format!(
        "coefficient table holds indices 0..={}, need index {n}",
        len.saturating_sub(1)
    ))
}

/// Boundary coefficient beta_l^j = 2 c_{l+j} + sum_{i=1}^{j-1} c_i c_{l+j-i}.
///
/// Defined for j >= 2. At alpha = 1/2 the l = 0 value vanishes identically
/// because it equals the self-convolution entry g_j.
pub fn beta_coefficient(l: usize, j: usize, coeffs: &CoeffTable) -> Result<f64> {
    if j < 2 {
        return Err(Error::domain(format!(
            "beta coefficient requires j >= 2, got j = {j}"
        )));
    }
    coeffs.require(l + j)?;
    let c = coeffs.coeffs();
    let mut acc = 2.0 * c[l + j];
    for i in 1..j {
        acc += c[i] * c[l + j - i];
    }
    Ok(acc)
}

/// A d-dimensional sequence z_0..z_N on a uniform grid of step h > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSequence {
    h: f64,
    dim: usize,
    values: Vec<Vec<f64>>,
}

impl GridSequence {
    pub fn new(h: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::domain(format!("grid step must be positive, got {h}")));
        }
        if values.is_empty() {
            return Err(Error::size("grid sequence needs at least one node"));
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(Error::size("grid sequence values must have dimension >= 1"));
        }
        if let Some(bad) = values.iter().position(|v| v.len() != dim) {
            return Err(Error::size(format!(
                "node {bad} has dimension {}, expected {dim}",
                values[bad].len()
            )));
        }
        Ok(Self { h, dim, values })
    }

    /// Convenience constructor for scalar sequences.
    pub fn scalar(h: f64, values: &[f64]) -> Result<Self> {
        Self::new(h, values.iter().map(|&v| vec![v]).collect())
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes, N + 1.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest node index N.
    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn value(&self, k: usize) -> Result<&[f64]> {
        self.values
            .get(k)
            .map(|v| v.as_slice())
            .ok_or_else(|| self.bad_index(k, self.last_index()))
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    fn bad_index(&self, k: usize, max: usize) -> Error {
        Error::index(format!("node index {k} out of range 0..={max}"))
    }

    /// Midpoint shift (z_k + z_{k+1}) / 2, defined for 0 <= k <= N-1.
    pub fn shift_average(&self, k: usize) -> Result<Vec<f64>> {
        if k + 1 > self.last_index() {
            return Err(self.bad_index(k, self.last_index() - 1));
        }
        Ok(pairwise(&self.values[k], &self.values[k + 1], |a, b| {
            (a + b) / 2.0
        }))
    }

    /// Backward difference (z_k - z_{k-1}) / h, with the k = 0 value zero.
    pub fn backward_diff(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.last_index() {
            return Err(self.bad_index(k, self.last_index()));
        }
        if k == 0 {
            return Ok(vec![0.0; self.dim]);
        }
        let h = self.h;
        Ok(pairwise(&self.values[k], &self.values[k - 1], |a, b| {
            (a - b) / h
        }))
    }

    /// Forward difference -(z_{k+1} - z_k) / h, defined for 0 <= k <= N-1.
    ///
    /// The sign makes it the formal adjoint of `backward_diff` under the
    /// discrete integration-by-parts identity checked below.
    pub fn forward_diff_neg(&self, k: usize) -> Result<Vec<f64>> {
        if k + 1 > self.last_index() {
            return Err(self.bad_index(k, self.last_index() - 1));
        }
        let h = self.h;
        Ok(pairwise(&self.values[k + 1], &self.values[k], |a, b| {
            -(a - b) / h
        }))
    }

    /// Left fractional difference h^-alpha sum_{n=0}^k c_n z_{k-n}.
    pub fn frac_diff_minus(&self, coeffs: &CoeffTable, k: usize) -> Result<Vec<f64>> {
        if k > self.last_index() {
            return Err(self.bad_index(k, self.last_index()));
        }
        coeffs.require(k)?;
        let c = coeffs.coeffs();
        let mut out = vec![0.0; self.dim];
        for n in 0..=k {
            axpy(&mut out, c[n], &self.values[k - n]);
        }
        let scale = h_power(self.h, coeffs.alpha);
        for v in &mut out {
            *v /= scale;
        }
        Ok(out)
    }

    /// Right fractional difference h^-alpha sum_{n=0}^{N-k} c_n z_{k+n}.
    pub fn frac_diff_plus(&self, coeffs: &CoeffTable, k: usize) -> Result<Vec<f64>> {
        let nn = self.last_index();
        if k > nn {
            return Err(self.bad_index(k, nn));
        }
        coeffs.require(nn - k)?;
        let c = coeffs.coeffs();
        let mut out = vec![0.0; self.dim];
        for n in 0..=(nn - k) {
            axpy(&mut out, c[n], &self.values[k + n]);
        }
        let scale = h_power(self.h, coeffs.alpha);
        for v in &mut out {
            *v /= scale;
        }
        Ok(out)
    }

    /// Composed left difference h^-2alpha sum_n c_n sum_p c_p z_{k-n-p},
    /// defined for 1 <= k <= N. Literal nested sums, increasing indices.
    pub fn double_frac_minus(&self, coeffs: &CoeffTable, k: usize) -> Result<Vec<f64>> {
        let nn = self.last_index();
        if k == 0 || k > nn {
            return Err(Error::index(format!(
                "composed left difference needs 1 <= k <= {nn}, got {k}"
            )));
        }
        coeffs.require(k)?;
        let c = coeffs.coeffs();
        let mut out = vec![0.0; self.dim];
        for n in 0..=k {
            let mut inner = vec![0.0; self.dim];
            for p in 0..=(k - n) {
                axpy(&mut inner, c[p], &self.values[k - n - p]);
            }
            axpy(&mut out, c[n], &inner);
        }
        let scale = h_power(self.h, 2.0 * coeffs.alpha);
        for v in &mut out {
            *v /= scale;
        }
        Ok(out)
    }

    /// Composed right difference h^-2alpha sum_n c_n sum_p c_p z_{k+n+p},
    /// defined for 0 <= k <= N-1.
    pub fn double_frac_plus(&self, coeffs: &CoeffTable, k: usize) -> Result<Vec<f64>> {
        let nn = self.last_index();
        if k >= nn {
            return Err(Error::index(format!(
                "composed right difference needs 0 <= k <= {}, got {k}",
                nn - 1
            )));
        }
        coeffs.require(nn - k)?;
        let c = coeffs.coeffs();
        let mut out = vec![0.0; self.dim];
        for n in 0..=(nn - k) {
            let mut inner = vec![0.0; self.dim];
            for p in 0..=(nn - k - n) {
                axpy(&mut inner, c[p], &self.values[k + n + p]);
            }
            axpy(&mut out, c[n], &inner);
        }
        let scale = h_power(self.h, 2.0 * coeffs.alpha);
        for v in &mut out {
            *v /= scale;
        }
        Ok(out)
    }
}

/// h^p with the integer orders kept exact so the alpha = 0 and alpha = 1
/// limits of the fractional operators reproduce the classical ones bit for
/// bit.
fn h_power(h: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p == 1.0 {
        h
    } else if p == 2.0 {
        h * h
    } else {
        h.powf(p)
    }
}

fn pairwise(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Unscaled left convolutions sum_{n=0}^k c_n z_{k-n} for every k at once,
/// with compensated accumulation. Building block for residual series and
/// the marching integrator.
pub fn conv_minus_series(values: &[Vec<f64>], coeffs: &CoeffTable) -> Result<Vec<Vec<f64>>> {
    let nn = values.len().saturating_sub(1);
    if values.is_empty() {
        return Err(Error::size("convolution needs at least one node"));
    }
    coeffs.require(nn)?;
    let c = coeffs.coeffs();
    let dim = values[0].len();
    let mut out = Vec::with_capacity(values.len());
    let mut acc: Vec<Neumaier> = Vec::new();
    for k in 0..values.len() {
        acc.clear();
        acc.resize(dim, Neumaier::new());
        for n in 0..=k {
            for (a, &v) in acc.iter_mut().zip(&values[k - n]) {
                a.add(c[n] * v);
            }
        }
        out.push(acc.iter().map(|a| a.value()).collect());
    }
    Ok(out)
}

/// Unscaled composed left convolutions for every k, computed by convolving
/// the weight table with `conv_minus_series`.
pub fn double_conv_minus_series(values: &[Vec<f64>], coeffs: &CoeffTable) -> Result<Vec<Vec<f64>>> {
    let inner = conv_minus_series(values, coeffs)?;
    conv_minus_series(&inner, coeffs)
}

/// Unscaled composed right convolutions for every k. Equals the composed
/// left convolution of the index-reversed sequence, evaluated at N - k; the
/// implementation reverses so both directions share one code path.
pub fn double_conv_plus_series(values: &[Vec<f64>], coeffs: &CoeffTable) -> Result<Vec<Vec<f64>>> {
    let mut rev: Vec<Vec<f64>> = values.to_vec();
    rev.reverse();
    let mut out = double_conv_minus_series(&rev, coeffs)?;
    out.reverse();
    Ok(out)
}

/// Residuals of the summation-by-parts identities for the classical and
/// fractional difference pairs on scalar sequences F, G of equal length.
///
/// Classical: sum_{k=0}^{N-1} F_k (forward diff of G)_k equals
/// sum_{k=1}^N (backward diff of F)_k G_k plus (F_0 G_0 - F_N G_N) / h.
/// Fractional: same shape with the right/left fractional differences and
/// boundary weight h^-alpha. Both sides are accumulated in the common
/// scaled form (multiplied through by h, respectively h^alpha) with
/// compensated sums, then divided back, so the returned residuals reflect
/// the identity rather than the conditioning of the scale factor.
pub fn check_discrete_ibp(
    f: &GridSequence,
    g: &GridSequence,
    coeffs: &CoeffTable,
) -> Result<(f64, f64)> {
    if f.dim() != 1 || g.dim() != 1 {
        return Err(Error::size(
            "summation-by-parts checker expects scalar sequences",
        ));
    }
    if f.len() != g.len() {
        return Err(Error::size(format!(
            "sequence lengths differ: {} vs {}",
            f.len(),
            g.len()
        )));
    }
    if f.h() != g.h() {
        return Err(Error::domain(format!(
            "grid steps differ: {} vs {}",
            f.h(),
            g.h()
        )));
    }
    let nn = f.last_index();
    if nn == 0 {
        return Err(Error::size("summation-by-parts needs at least two nodes"));
    }
    coeffs.require(nn)?;
    let fv: Vec<f64> = f.values().iter().map(|v| v[0]).collect();
    let gv: Vec<f64> = g.values().iter().map(|v| v[0]).collect();
    let c = coeffs.coeffs();
    let boundary = fv[0] * gv[0] - fv[nn] * gv[nn];

    // Classical pair, scaled by h.
    let mut classical = Neumaier::new();
    for k in 0..nn {
        classical.add(fv[k] * (gv[k] - gv[k + 1]));
    }
    for k in 1..=nn {
        classical.add(-(fv[k] - fv[k - 1]) * gv[k]);
    }
    classical.add(-boundary);
    let classical_residual = classical.value().abs() / f.h();

    // Fractional pair, scaled by h^alpha.
    let mut fractional = Neumaier::new();
    for k in 0..nn {
        let mut conv = Neumaier::new();
        for n in 0..=(nn - k) {
            conv.add(c[n] * gv[k + n]);
        }
        fractional.add(fv[k] * conv.value());
    }
    for k in 1..=nn {
        let mut conv = Neumaier::new();
        for n in 0..=k {
            conv.add(c[n] * fv[k - n]);
        }
        fractional.add(-conv.value() * gv[k]);
    }
    fractional.add(-boundary);
    let fractional_residual = fractional.value().abs() / h_power(f.h(), coeffs.alpha);

    Ok((classical_residual, fractional_residual))
}
