//! The width-doubling construction, equal-energy factorizations, and the
//! quasi-norm induced by the adaptive retain rate.
//!
//! With `lambda_d = d (1 - theta_bar) / theta_bar`, the quasi-norm of `Y` is the
//! minimum of `sqrt(lambda_d * omega(U, V))` over all factorizations
//! `U V^T = Y`. Cauchy-Schwarz gives `omega >= ||Y||_*^2 / d` for width `d`,
//! and the bound is met by a factorization whose column products are all
//! equal. [`equalized_factorization`] builds one by rotating the balanced SVD
//! factors with an orthogonal matrix that equalizes the diagonal of the
//! (padded) singular value matrix. The resulting value `lambda_1 ||Y||_*^2`
//! coincides with the convex envelope `(1 - theta_bar)/theta_bar ||Y||_*^2`,
//! so each evaluation is certified from both sides.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::dropout::{lambda_d, omega};
use crate::error::{check_open_unit, Error, Result};
use crate::matrix::{rel_frob_dist, DenseMatrix, FactorPair};
use crate::solvers::{svd, SvdResult};

/// Singular values at or below this fraction of the largest count as zero.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Tolerance of the runtime certificates.
pub const CERT_TOL: f64 = 1e-8;
/// Equalization stops once `max - min <= EQUALIZE_TOL * trace`.
pub const EQUALIZE_TOL: f64 = 1e-12;

/// `A = [U, U] / sqrt(2)`, `B = [V, V] / sqrt(2)`: the same product with
/// half the regularizer.
pub fn doubling_construction(f: &FactorPair) -> FactorPair {
    let a = f.u().hstack(f.u()).expect("same rows").scale(FRAC_1_SQRT_2);
    let b = f.v().hstack(f.v()).expect("same rows").scale(FRAC_1_SQRT_2);
    FactorPair::new(a, b).expect("same width")
}

/// Orthogonal `W` such that `W^T diag(values) W` has constant diagonal
/// `sum(values) / d`.
///
/// Each Givens rotation acts on the current largest and smallest diagonal
/// entries and moves the largest one exactly onto the target, so at most
/// `d - 1` rotations are needed.
pub fn equalize_diagonal(values: &[f64]) -> Result<DenseMatrix> {
    let d = values.len();
    if d == 0 {
        return Err(Error::Parameter {
            name: "d",
            value: 0.0,
            reason: "need at least one diagonal entry".into(),
        });
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Contract(format!("diagonal entry {bad} is not nonnegative")));
    }
    let trace: f64 = values.iter().sum();
    let target = trace / d as f64;
    let mut m = DenseMatrix::from_diag(d, d, values);
    let mut w = DenseMatrix::identity(d);

    for _ in 0..d * d {
        let (hi, lo) = extremes(&m);
        if m[(hi, hi)] - m[(lo, lo)] <= EQUALIZE_TOL * trace {
            return Ok(w);
        }
        let (a, b, c) = (m[(hi, hi)], m[(lo, lo)], m[(hi, lo)]);
        // new (hi, hi) entry as a function of the angle:
        // (a + b)/2 + (a - b)/2 cos 2phi - c sin 2phi = radius cos(2phi + psi)
        let half_gap = 0.5 * (a - b);
        let radius = half_gap.hypot(c);
        let psi = c.atan2(half_gap);
        let cos_arg = ((target - 0.5 * (a + b)) / radius).clamp(-1.0, 1.0);
        let phi = 0.5 * (cos_arg.acos() - psi);
        let (s, co) = phi.sin_cos();
        apply_rotation(&mut m, &mut w, hi, lo, co, s);
        m[(hi, hi)] = target;
    }
    let (hi, lo) = extremes(&m);
    if m[(hi, hi)] - m[(lo, lo)] <= EQUALIZE_TOL * trace {
        Ok(w)
    } else {
        Err(Error::Numerical(format!(
            "diagonal equalization did not converge after {} rotations",
            d * d
        )))
    }
}

fn extremes(m: &DenseMatrix) -> (usize, usize) {
    let diag = m.diag();
    let mut hi = 0;
    let mut lo = 0;
    for (i, &v) in diag.iter().enumerate() {
        if v > diag[hi] {
            hi = i;
        }
        if v < diag[lo] {
            lo = i;
        }
    }
    (hi, lo)
}

/// `M <- G^T M G`, `W <- W G` with `G` the rotation in the `(i, j)` plane
/// taking `e_i -> c e_i - s e_j` and `e_j -> s e_i + c e_j`.
fn apply_rotation(m: &mut DenseMatrix, w: &mut DenseMatrix, i: usize, j: usize, c: f64, s: f64) {
    let d = m.rows();
    for k in 0..d {
        let (mi, mj) = (m[(k, i)], m[(k, j)]);
        m[(k, i)] = c * mi - s * mj;
        m[(k, j)] = s * mi + c * mj;
    }
    for k in 0..d {
        let (mi, mj) = (m[(i, k)], m[(j, k)]);
        m[(i, k)] = c * mi - s * mj;
        m[(j, k)] = s * mi + c * mj;
    }
    for k in 0..w.rows() {
        let (wi, wj) = (w[(k, i)], w[(k, j)]);
        w[(k, i)] = c * wi - s * wj;
        w[(k, j)] = s * wi + c * wj;
    }
}

/// Count of singular values above `RANK_REL_TOL * sigma_max`.
fn numerical_rank(singulars: &[f64]) -> usize {
    match singulars.first() {
        Some(&top) if top > 0.0 => singulars.iter().filter(|&&s| s > RANK_REL_TOL * top).count(),
        _ => 0,
    }
}

/// A factorization of `Y` whose column products are all equal.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualizedFactorization {
    pub factors: FactorPair,
    /// `lambda_d * omega(factors)`.
    pub achieved_value: f64,
}

/// Builds `U = L_r S^{1/2} P`, `V = R_r S^{1/2} P` of width `d`, where `P` is
/// the first `r` rows of [`equalize_diagonal`] applied to the singular values
/// padded with zeros to length `d`.
pub fn equalized_factorization(
    y: &DenseMatrix,
    d: usize,
    theta_bar: f64,
) -> Result<EqualizedFactorization> {
    check_open_unit("theta_bar", theta_bar)?;
    let dec = svd(y)?;
    equalized_from_svd(&dec, y.rows(), y.cols(), d, theta_bar)
}

fn equalized_from_svd(
    dec: &SvdResult,
    m: usize,
    n: usize,
    d: usize,
    theta_bar: f64,
) -> Result<EqualizedFactorization> {
    let lambda = lambda_d(d, theta_bar)?;
    let r = numerical_rank(&dec.singulars);
    if d < r {
        return Err(Error::Contract(format!(
            "width {d} is below the numerical rank {r}"
        )));
    }
    if r == 0 {
        return Ok(EqualizedFactorization {
            factors: FactorPair::zeros(m, n, d),
            achieved_value: 0.0,
        });
    }
    let mut padded = dec.singulars[..r].to_vec();
    padded.resize(d, 0.0);
    let w = equalize_diagonal(&padded)?;
    let roots: Vec<f64> = dec.singulars[..r].iter().map(|s| s.sqrt()).collect();
    let p = w.top_left(r, d);
    let u = dec.left.top_left(m, r).scale_columns(&roots)?.matmul(&p)?;
    let v = dec.right.top_left(n, r).scale_columns(&roots)?.matmul(&p)?;
    let factors = FactorPair::new(u, v)?;
    let achieved_value = lambda * omega(&factors);
    Ok(EqualizedFactorization {
        factors,
        achieved_value,
    })
}

/// `((1 - theta_bar) / theta_bar) ||Y||_*^2`, twice the convex envelope of
/// half the squared quasi-norm.
fn envelope_value(nuclear: f64, theta_bar: f64) -> f64 {
    (1.0 - theta_bar) / theta_bar * nuclear * nuclear
}

/// Quasi-norm value together with both certificates.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiNormEval {
    pub value: f64,
    pub rank: usize,
    pub nuclear: f64,
    /// `lambda_r * omega` of the equalized construction (upper bound on the square).
    pub upper: f64,
    /// Envelope value (lower bound on the square).
    pub lower: f64,
}

/// Evaluates the quasi-norm via the equalized construction at `d = rank(Y)`.
///
/// Fails with [`Error::Numerical`] when the construction does not reproduce
/// `Y` or its value is not within `CERT_TOL` of the envelope; the error
/// message carries the observed gap.
pub fn quasi_norm_eval(y: &DenseMatrix, theta_bar: f64) -> Result<QuasiNormEval> {
    check_open_unit("theta_bar", theta_bar)?;
    let dec = svd(y)?;
    let rank = numerical_rank(&dec.singulars);
    let nuclear = dec.nuclear_norm();
    if rank == 0 {
        return Ok(QuasiNormEval {
            value: 0.0,
            rank,
            nuclear,
            upper: 0.0,
            lower: 0.0,
        });
    }
    let eq = equalized_from_svd(&dec, y.rows(), y.cols(), rank, theta_bar)?;
    let recon = rel_frob_dist(&eq.factors.product(), y)?;
    if recon > CERT_TOL {
        return Err(Error::Numerical(format!(
            "equalized factorization misses the target by {recon:e} (relative)"
        )));
    }
    let lower = envelope_value(nuclear, theta_bar);
    let gap = (eq.achieved_value - lower) / lower;
    if gap.abs() > CERT_TOL {
        return Err(Error::Numerical(format!(
            "quasi-norm certificate failed: construction {} vs envelope {lower}, relative gap {gap:e}",
            eq.achieved_value
        )));
    }
    Ok(QuasiNormEval {
        value: eq.achieved_value.sqrt(),
        rank,
        nuclear,
        upper: eq.achieved_value,
        lower,
    })
}

pub fn quasi_norm(y: &DenseMatrix, theta_bar: f64) -> Result<f64> {
    Ok(quasi_norm_eval(y, theta_bar)?.value)
}

/// `1/2 ||Y||^2 - (1 - theta_bar)/(2 theta_bar) ||Y||_*^2`.
pub fn envelope_gap(y: &DenseMatrix, theta_bar: f64) -> Result<f64> {
    let eval = quasi_norm_eval(y, theta_bar)?;
    Ok(0.5 * eval.value * eval.value - 0.5 * envelope_value(eval.nuclear, theta_bar))
}
