//! Built-in property suites behind `fracmech verify`.
//!
//! Each suite exercises one identity the discrete theory promises and
//! reports the worst deviation it observed together with the acceptance
//! bound. Inputs are drawn from fixed-seed generators, so repeated runs
//! print byte-identical tables.

use fracmech::dynamics::{
    residual_general, residual_x, residual_y, residuals, transform_system, DiscretePath,
    MechanicalSystem, Potential,
};
use fracmech::frac_ops::{
    beta_coefficient, check_discrete_ibp, double_conv_minus_series, gl_coefficients, GridSequence,
};
use fracmech::integrator::{integrate, IntegratorConfig, Mode, NewtonSettings};
use fracmech::linalg::Matrix;
use fracmech::rl_continuous::{check_frac_ibp_continuous, check_half_composition, SampledFunction};
use fracmech::dynamics::action_gradient_check;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct SuiteResult {
    pub name: &'static str,
    pub deviation: f64,
    pub bound: f64,
}

impl SuiteResult {
    pub fn pass(&self) -> bool {
        self.deviation.is_finite() && self.deviation <= self.bound
    }
}

pub const SUITES: [&str; 8] = [
    "coeffs",
    "ibp",
    "lemma4",
    "beta",
    "continuous",
    "gradient",
    "reversal",
    "covariance",
];

pub fn run_suite(name: &str) -> SuiteResult {
    match name {
        "coeffs" => coeffs_suite(),
        "ibp" => ibp_suite(),
        "lemma4" => lemma4_suite(),
        "beta" => beta_suite(),
        "continuous" => continuous_suite(),
        "gradient" => gradient_suite(),
        "reversal" => reversal_suite(),
        "covariance" => covariance_suite(),
        other => unreachable!("suite names are validated before dispatch: {other}"),
    }
}

/// Coefficient table sanity: frozen low-order values, the order-one limit,
/// the sign/partial-sum structure, and the half-order self-convolution
/// collapsing to the first-difference stencil.
fn coeffs_suite() -> SuiteResult {
    let mut dev = 0.0_f64;
    for alpha in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let table = gl_coefficients(alpha, 400).unwrap();
        let c = table.coeffs();
        dev = dev.max((c[0] - 1.0).abs());
        let mut partial = c[0];
        for &cn in &c[1..] {
            // Weights after the leading one are negative; their running sum
            // stays nonnegative and never increases.
            if cn >= 0.0 {
                dev = dev.max(1.0);
            }
            let prev = partial;
            partial += cn;
            if partial < -1e-15 || partial > prev + 1e-15 {
                dev = dev.max(1.0);
            }
        }
    }

    let half = gl_coefficients(0.5, 400).unwrap();
    for (n, want) in [(1, -0.5), (2, -0.125), (3, -0.0625)] {
        dev = dev.max((half.get(n).unwrap() - want).abs());
    }
    let g = half.self_convolution();
    dev = dev.max((g[0] - 1.0).abs());
    dev = dev.max((g[1] + 1.0).abs());
    for &gn in &g[2..] {
        dev = dev.max(gn.abs());
    }

    let one = gl_coefficients(1.0, 400).unwrap();
    dev = dev.max((one.get(0).unwrap() - 1.0).abs());
    dev = dev.max((one.get(1).unwrap() + 1.0).abs());
    for n in 2..one.len() {
        dev = dev.max(one.get(n).unwrap().abs());
    }

    SuiteResult { name: "coeffs", deviation: dev, bound: 1e-13 }
}

/// Both discrete summation-by-parts identities over random scalar pairs.
fn ibp_suite() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut dev = 0.0_f64;
    for _ in 0..100 {
        let n = rng.gen_range(8..=200);
        let h = rng.gen_range(0.01..0.25);
        let alpha = rng.gen_range(0.05..0.95);
        let fv: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gv: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = GridSequence::scalar(h, &fv).unwrap();
        let g = GridSequence::scalar(h, &gv).unwrap();
        let coeffs = gl_coefficients(alpha, n).unwrap();
        let (r1, r2) = check_discrete_ibp(&f, &g, &coeffs).unwrap();
        dev = dev.max(r1).max(r2);
    }
    SuiteResult { name: "ibp", deviation: dev, bound: 1e-12 }
}

/// Half-order collapse: the raw double backward convolution of any sequence
/// equals its first backward difference.
fn lemma4_suite() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut dev = 0.0_f64;
    for _ in 0..200 {
        let n = rng.gen_range(50..=500);
        let zv: Vec<Vec<f64>> = (0..=n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let coeffs = gl_coefficients(0.5, n).unwrap();
        let series = double_conv_minus_series(&zv, &coeffs).unwrap();
        for k in 1..=n {
            dev = dev.max((series[k][0] - (zv[k][0] - zv[k - 1][0])).abs());
        }
    }
    SuiteResult { name: "lemma4", deviation: dev, bound: 1e-11 }
}

/// The interior boundary-coupling weights vanish identically at half order.
fn beta_suite() -> SuiteResult {
    let coeffs = gl_coefficients(0.5, 60).unwrap();
    let mut dev = 0.0_f64;
    for j in 2..=50 {
        dev = dev.max(beta_coefficient(0, j, &coeffs).unwrap().abs());
    }
    SuiteResult { name: "beta", deviation: dev, bound: 1e-12 }
}

/// Continuous quadrature oracles: half-order composition lands on the first
/// derivative, and the continuous integration-by-parts pairing balances.
fn continuous_suite() -> SuiteResult {
    let m = 1 << 12;
    let square = SampledFunction::from_fn(|t| t * t, 0.0, 1.0, m).unwrap();
    let comp = check_half_composition(&square).unwrap();
    let f = SampledFunction::from_fn(|t| t, 0.0, 1.0, m).unwrap();
    let g = SampledFunction::from_fn(|t| 1.0 - t, 0.0, 1.0, m).unwrap();
    let ibp = check_frac_ibp_continuous(&f, &g, 0.5).unwrap();
    SuiteResult { name: "continuous", deviation: comp.max(ibp), bound: 1.2e-2 }
}

fn random_system(rng: &mut ChaCha8Rng, d: usize) -> MechanicalSystem {
    let masses: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..2.0)).collect();
    let dampings: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..0.5)).collect();
    let omega: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..2.0)).collect();
    MechanicalSystem::new(masses, dampings, Potential::Harmonic { omega }).unwrap()
}

fn random_nodes(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..=n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// Finite-difference check of the exact discrete action gradient on random
/// paths and directions.
fn gradient_suite() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut dev = 0.0_f64;
    for trial in 0..30 {
        let d = 1 + trial % 3;
        let n = [5, 12, 20][trial % 3];
        let alpha = [0.25, 0.5, 0.75][(trial / 3) % 3];
        let h = rng.gen_range(0.05..0.15);
        let sys = random_system(&mut rng, d);
        let path =
            DiscretePath::with_reversed(h, alpha, random_nodes(&mut rng, n, d)).unwrap();
        let direction = random_nodes(&mut rng, n - 2, d);
        dev = dev.max(action_gradient_check(&sys, &path, &direction).unwrap());
    }
    SuiteResult { name: "gradient", deviation: dev, bound: 1e-5 }
}

/// Reversed trajectories satisfy the mirrored equations to within ten times
/// the Newton tolerance, for orders below, at, and above one half.
fn reversal_suite() -> SuiteResult {
    let sys = MechanicalSystem::new(
        vec![1.0],
        vec![0.2],
        Potential::Harmonic { omega: vec![1.0] },
    )
    .unwrap();
    let mut dev = 0.0_f64;
    for alpha in [0.25, 0.5, 0.75] {
        let config = IntegratorConfig {
            alpha,
            h: 0.02,
            steps: 100,
            mode: Mode::InitialValue { q0: vec![1.0], v0: vec![0.0] },
            newton: NewtonSettings::default(),
        };
        let traj = integrate(&sys, &config).unwrap();
        let path =
            DiscretePath::with_reversed(config.h, alpha, traj.points().to_vec()).unwrap();
        let res = residuals(&sys, &path).unwrap();
        for k in 1..config.steps {
            for &r in res.ry(k) {
                dev = dev.max(r.abs());
            }
        }
    }
    SuiteResult { name: "reversal", deviation: dev, bound: 1e-9 }
}

/// Equations of motion transform contravariantly under a linear change of
/// variables: the pulled-back residual equals the transpose image of the
/// original one.
fn covariance_suite() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut dev = 0.0_f64;
    for trial in 0..10 {
        let d = 2 + trial % 2;
        let sys = random_system(&mut rng, d);
        let rows: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let v: f64 = rng.gen_range(-1.0..1.0);
                        if i == j {
                            v + 2.0
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        let lambda = Matrix::from_rows(&rows).unwrap();
        let derivs = transform_system(&sys, &lambda).unwrap();
        let n = 7;
        let znodes = random_nodes(&mut rng, n, d);
        let zpath = DiscretePath::with_reversed(0.1, 0.5, znodes.clone()).unwrap();
        let xnodes: Vec<Vec<f64>> = znodes.iter().map(|z| lambda.matvec(z)).collect();
        let ynodes: Vec<Vec<f64>> = xnodes.iter().rev().cloned().collect();
        let xpath = DiscretePath::new(0.1, 0.5, xnodes, ynodes).unwrap();
        let lt = lambda.transpose();
        for k in 1..n {
            let (ez, wy) = residual_general(&derivs, &zpath, k).unwrap();
            let want_x = lt.matvec(&residual_x(&sys, &xpath, k).unwrap());
            let want_y = lt.matvec(&residual_y(&sys, &xpath, k).unwrap());
            for i in 0..d {
                dev = dev.max((ez[i] - want_x[i]).abs() / want_x[i].abs().max(1.0));
                dev = dev.max((wy[i] - want_y[i]).abs() / want_y[i].abs().max(1.0));
            }
        }
    }
    SuiteResult { name: "covariance", deviation: dev, bound: 1e-10 }
}
