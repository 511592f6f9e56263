//! Self-checks run by `dropfact check`: each suite compares a library routine
//! against an independent computation on seeded random instances.

use rand::Rng;

use crate::dropout::{exact_expected_objective, frob_loss, lambda_d, omega, regularized_objective};
use crate::error::Result;
use crate::matrix::{rel_frob_dist, DenseMatrix, FactorPair};
use crate::quasinorm::{doubling_construction, quasi_norm, quasi_norm_eval};
use crate::rng::{self, DropRng};
use crate::solvers::{l1_squared_prox, svd};
use crate::trainers::grad_deterministic;

const CHECK_SEED: u64 = 0x00c4_ec4a;

/// Knobs for negative controls.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CheckOptions {
    /// Added to omega wherever a suite evaluates it directly.
    pub omega_fault: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Set when a routine returned an error instead of a value.
    pub failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.max_error <= self.tolerance
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn gauss(rows: usize, cols: usize, rng: &mut DropRng) -> DenseMatrix {
    DenseMatrix::random_gaussian(rows, cols, 1.0, rng)
}

fn pair(m: usize, n: usize, d: usize, rng: &mut DropRng) -> FactorPair {
    FactorPair::new(gauss(m, d, rng), gauss(n, d, rng)).expect("same width")
}

fn run_suite(
    name: &'static str,
    tolerance: f64,
    index: u64,
    cases: usize,
    mut case: impl FnMut(&mut DropRng) -> Result<f64>,
) -> SuiteReport {
    let mut rng = rng::stream(rng::derive_seed(CHECK_SEED, index), rng::TRAIN_STREAM);
    let mut max_error = 0.0_f64;
    for _ in 0..cases {
        match case(&mut rng) {
            Ok(e) => max_error = max_error.max(if e.is_nan() { f64::INFINITY } else { e }),
            Err(err) => {
                return SuiteReport {
                    name,
                    cases,
                    max_error,
                    tolerance,
                    failure: Some(err.to_string()),
                }
            }
        }
    }
    SuiteReport {
        name,
        cases,
        max_error,
        tolerance,
        failure: None,
    }
}

/// Mask enumeration against `||X - UV^T||^2 + (1-theta)/theta * omega`.
fn expectation_identity(opts: CheckOptions) -> SuiteReport {
    run_suite("expectation_identity", 1e-10, 0, 40, |rng| {
        let (m, n, d) = (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=8));
        let theta = [0.1, 0.5, 0.9][rng.random_range(0..3)];
        let x = gauss(m, n, rng);
        let f = pair(m, n, d, rng);
        let exact = exact_expected_objective(&x, &f, theta)?;
        let closed = frob_loss(&x, &f)? + (1.0 - theta) / theta * (omega(&f) + opts.omega_fault);
        Ok(rel(exact, closed))
    })
}

/// Analytic gradient against central differences of the objective.
fn gradient(opts: CheckOptions) -> SuiteReport {
    run_suite("gradient", 1e-5, 1, 10, |rng| {
        let (m, n, d) = (rng.random_range(2..=5), rng.random_range(2..=5), rng.random_range(1..=4));
        let lambda = [0.0, 0.5, 3.0][rng.random_range(0..3)];
        let x = gauss(m, n, rng);
        let f = pair(m, n, d, rng);
        let (gu, gv) = grad_deterministic(&x, &f, lambda)?;
        let obj = |f: &FactorPair| -> Result<f64> {
            Ok(regularized_objective(&x, f, lambda)? + lambda * opts.omega_fault)
        };
        let h = 1e-6;
        let mut num = Vec::new();
        let mut ana = Vec::new();
        for which in 0..2 {
            let (rows, g) = if which == 0 { (m, &gu) } else { (n, &gv) };
            for i in 0..rows {
                for k in 0..d {
                    let mut plus = f.clone();
                    let mut minus = f.clone();
                    if which == 0 {
                        plus = FactorPair::new(bump(plus.u(), i, k, h), plus.v().clone())?;
                        minus = FactorPair::new(bump(minus.u(), i, k, -h), minus.v().clone())?;
                    } else {
                        plus = FactorPair::new(plus.u().clone(), bump(plus.v(), i, k, h))?;
                        minus = FactorPair::new(minus.u().clone(), bump(minus.v(), i, k, -h))?;
                    }
                    num.push((obj(&plus)? - obj(&minus)?) / (2.0 * h));
                    ana.push(g[(i, k)]);
                }
            }
        }
        let diff: f64 = num.iter().zip(&ana).map(|(a, b)| (a - b) * (a - b)).sum();
        let scale: f64 = ana.iter().map(|a| a * a).sum();
        Ok((diff / scale.max(1e-300)).sqrt())
    })
}

fn bump(a: &DenseMatrix, i: usize, k: usize, h: f64) -> DenseMatrix {
    let mut b = a.clone();
    b[(i, k)] += h;
    b
}

/// Optimality conditions of the squared-l1 prox: active entries equal
/// `x_i - lambda ||a||_1`, inactive ones satisfy `x_i <= lambda ||a||_1`.
fn prox_kkt(_: CheckOptions) -> SuiteReport {
    run_suite("prox_kkt", 1e-10, 2, 100, |rng| {
        let r = rng.random_range(1..=8);
        let mut x: Vec<f64> = (0..r).map(|_| rng.random_range(0.01..5.0)).collect();
        x.sort_by(|a, b| b.total_cmp(a));
        let lambda = 10f64.powf(rng.random_range(-2.0..1.0));
        let a = l1_squared_prox(&x, lambda)?;
        let shift = lambda * a.iter().sum::<f64>();
        let scale = x[0];
        let mut worst = 0.0_f64;
        for (&xi, &ai) in x.iter().zip(&a) {
            if ai > 0.0 {
                worst = worst.max((ai - (xi - shift)).abs() / scale);
            } else {
                worst = worst.max((xi - shift).max(0.0) / scale);
            }
            if ai < 0.0 {
                worst = f64::INFINITY;
            }
        }
        Ok(worst)
    })
}

/// Reconstruction and orthogonality of the SVD.
fn svd_invariants(_: CheckOptions) -> SuiteReport {
    run_suite("svd", 1e-10, 3, 30, |rng| {
        let (m, n) = (rng.random_range(1..=9), rng.random_range(1..=9));
        let x = gauss(m, n, rng);
        let s = svd(&x)?;
        let recon = rel_frob_dist(&s.reconstruct(), &x)?;
        let r = m.min(n);
        let eye = DenseMatrix::identity(r);
        let ortho_l = s.left.t_matmul(&s.left)?.sub(&eye)?.max_abs();
        let ortho_r = s.right.t_matmul(&s.right)?.sub(&eye)?.max_abs();
        let sorted = s.singulars.windows(2).all(|w| w[0] >= w[1]) && s.singulars.iter().all(|&v| v >= 0.0);
        Ok(if sorted { recon.max(ortho_l).max(ortho_r) } else { f64::INFINITY })
    })
}

/// Homogeneity, the sqrt(2) triangle inequality, positivity, and the
/// construction value matching the convex envelope.
fn quasi_norm_axioms(opts: CheckOptions) -> SuiteReport {
    run_suite("quasi_norm_axioms", 1e-8, 4, 60, |rng| {
        let (m, n) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let theta_bar = [0.5, 0.9][rng.random_range(0..2)];
        let r = rng.random_range(1..=m.min(n));
        let y = gauss(m, r, rng).matmul_t(&gauss(n, r, rng))?;
        let z = gauss(m, n, rng);
        let eval = quasi_norm_eval(&y, theta_bar)?;
        let qy = eval.value;
        let qz = quasi_norm(&z, theta_bar)?;
        let alpha = rng.random_range(-3.0..3.0);
        let homog = rel(quasi_norm(&y.scale(alpha), theta_bar)?, alpha.abs() * qy);
        let tri = quasi_norm(&y.add(&z)?, theta_bar)? - 2f64.sqrt() * (qy + qz);
        let positive = if qy > 0.0 { 0.0 } else { f64::INFINITY };
        // The square of the quasi-norm, recomputed from its definition.
        let f = crate::quasinorm::equalized_factorization(&y, eval.rank, theta_bar)?.factors;
        let direct = lambda_d(eval.rank, theta_bar)? * (omega(&f) + opts.omega_fault);
        let envelope = (1.0 - theta_bar) / theta_bar * eval.nuclear * eval.nuclear;
        Ok(homog
            .max(tri.max(0.0) / qy.max(1e-300))
            .max(positive)
            .max(rel(direct, envelope)))
    })
}

/// `lambda_{kd} = k lambda_d` and the doubling construction halving omega.
fn rate_scaling(opts: CheckOptions) -> SuiteReport {
    run_suite("rate_scaling", 1e-12, 5, 20, |rng| {
        let theta_bar = rng.random_range(0.05..0.95);
        let d = rng.random_range(1..=10);
        let k = rng.random_range(1..=10);
        let lin = rel(lambda_d(k * d, theta_bar)?, k as f64 * lambda_d(d, theta_bar)?);
        let f = pair(4, 3, d, rng);
        let g = doubling_construction(&f);
        let half = rel(omega(&g) + opts.omega_fault, 0.5 * omega(&f));
        let same = rel_frob_dist(&g.product(), &f.product())?;
        Ok(lin.max(half).max(same))
    })
}

/// Runs every suite in a fixed order.
pub fn run_checks(opts: CheckOptions) -> Vec<SuiteReport> {
    vec![
        expectation_identity(opts),
        gradient(opts),
        prox_kkt(opts),
        svd_invariants(opts),
        quasi_norm_axioms(opts),
        rate_scaling(opts),
    ]
}
