//! SVD, the squared-l1 proximal map, and the closed-form minimizer of
//! `||X - Y||_F^2 + lambda ||Y||_*^2`.

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};

/// Sweep cap for the Jacobi iteration.
pub const SVD_MAX_SWEEPS: usize = 100;
const SVD_ORTH_TOL: f64 = 1e-15;

/// Entries at or below this margin over the threshold are left out of the
/// active set of the shrinkage.
pub const SHRINK_TIE_TOL: f64 = 1e-12;

/// Thin SVD `X = left * diag(singulars) * right^T` with `r = min(m, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdResult {
    pub left: DenseMatrix,
    pub singulars: Vec<f64>,
    pub right: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        self.left
            .scale_columns(&self.singulars)
            .expect("r columns")
            .matmul_t(&self.right)
            .expect("r columns")
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.singulars.iter().sum()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns are rotated pairwise until every pair is orthogonal to
/// `1e-15` relative, then normalized. Left vectors belonging to zero
/// singular values are completed to an orthonormal set.
pub fn svd(x: &DenseMatrix) -> Result<SvdResult> {
    if !x.is_finite() {
        return Err(Error::Contract("svd input has non-finite entries".into()));
    }
    if x.rows() < x.cols() {
        let t = svd(&x.transpose())?;
        return Ok(SvdResult {
            left: t.right,
            singulars: t.singulars,
            right: t.left,
        });
    }
    let (m, n) = x.shape();
    // column-major working copies
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| x.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = false;
    for _ in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= SVD_ORTH_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge in {SVD_MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let singulars: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut left_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > 0.0 {
            left_cols.push(a[j].iter().map(|x| x / norms[j]).collect());
        } else {
            left_cols.push(vec![0.0; m]);
            pending.push(k);
        }
    }
    for k in pending {
        left_cols[k] = orthonormal_complement(&left_cols, k, m)?;
    }

    let left = DenseMatrix::from_fn(m, n, |i, k| left_cols[k][i]);
    let right = DenseMatrix::from_fn(n, n, |i, k| v[order[k]][i]);
    Ok(SvdResult {
        left,
        singulars,
        right,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

/// A unit vector orthogonal to every nonzero column in `cols` except `skip`.
fn orthonormal_complement(cols: &[Vec<f64>], skip: usize, m: usize) -> Result<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..m {
        let mut w = vec![0.0; m];
        w[e] = 1.0;
        // two Gram-Schmidt passes
        for _ in 0..2 {
            for (k, c) in cols.iter().enumerate() {
                if k == skip {
                    continue;
                }
                let proj = dot(&w, c);
                for (wi, ci) in w.iter_mut().zip(c) {
                    *wi -= proj * ci;
                }
            }
        }
        let norm = dot(&w, &w).sqrt();
        if best.as_ref().is_none_or(|(b, _)| norm > *b) {
            best = Some((norm, w));
        }
    }
    match best {
        Some((norm, w)) if norm > 1e-8 => Ok(w.into_iter().map(|x| x / norm).collect()),
        _ => Err(Error::Numerical("could not complete left singular basis".into())),
    }
}

/// `||Y||_*`.
pub fn nuclear_norm(y: &DenseMatrix) -> Result<f64> {
    Ok(svd(y)?.nuclear_norm())
}

/// Active set and threshold of the squared-l1 shrinkage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShrinkagePlan {
    /// Number of entries that stay positive.
    pub d_active: usize,
    /// Amount subtracted from each active entry:
    /// `lambda d / (1 + lambda d) * mean_top`.
    pub mu: f64,
    /// Mean of the `d_active` largest entries.
    pub mean_top: f64,
}

fn check_sorted_positive(x: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::Contract(format!(
            "entry {i} = {} is not strictly positive",
            x[i]
        )));
    }
    if let Some(i) = x.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::Contract(format!(
            "input not sorted nonincreasingly at index {}",
            i + 1
        )));
    }
    Ok(())
}

fn check_lambda_nonneg(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "lambda",
            value: lambda,
            reason: "must be nonnegative".into(),
        })
    }
}

/// Largest `d` whose shrunken entries all stay positive.
///
/// Every candidate `d = 1..=r` is scanned and the largest feasible one kept;
/// `d = 1` is always feasible since `x_1 / (1 + lambda) > 0`.
pub fn shrinkage_plan(x: &[f64], lambda: f64) -> Result<ShrinkagePlan> {
    check_sorted_positive(x)?;
    check_lambda_nonneg(lambda)?;
    if x.is_empty() {
        return Ok(ShrinkagePlan {
            d_active: 0,
            mu: 0.0,
            mean_top: 0.0,
        });
    }
    let threshold = |d: usize, sum: f64| {
        let ld = lambda * d as f64;
        ld / (1.0 + ld) * (sum / d as f64)
    };
    let mut best = ShrinkagePlan {
        d_active: 1,
        mu: threshold(1, x[0]),
        mean_top: x[0],
    };
    let mut sum = x[0];
    for d in 2..=x.len() {
        sum += x[d - 1];
        let mu = threshold(d, sum);
        if x[d - 1] - mu > SHRINK_TIE_TOL {
            best = ShrinkagePlan {
                d_active: d,
                mu,
                mean_top: sum / d as f64,
            };
        }
    }
    Ok(best)
}

/// `argmin_a ||a - x||^2 + lambda ||a||_1^2` for positive nonincreasing `x`.
pub fn l1_squared_prox(x: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let plan = shrinkage_plan(x, lambda)?;
    if lambda == 0.0 {
        return Ok(x.to_vec());
    }
    Ok(x.iter()
        .enumerate()
        .map(|(i, &xi)| if i < plan.d_active { xi - plan.mu } else { 0.0 })
        .collect())
}

fn check_lambda_pos(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "lambda",
            value: lambda,
            reason: "must be positive".into(),
        })
    }
}

/// Closed-form minimizer of `||X - Y||_F^2 + lambda ||Y||_*^2`: shrink the
/// singular values of `X` with [`l1_squared_prox`] and keep its singular
/// vectors. Exact-zero singular values stay zero.
pub fn nuclear_squared_solve(x: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    check_lambda_pos(lambda)?;
    let dec = svd(x)?;
    let positive = dec.singulars.iter().take_while(|&&s| s > 0.0).count();
    let mut shrunk = l1_squared_prox(&dec.singulars[..positive], lambda)?;
    shrunk.resize(dec.singulars.len(), 0.0);
    let shrunk_dec = SvdResult {
        singulars: shrunk,
        ..dec
    };
    Ok(shrunk_dec.reconstruct())
}

/// `||X - Y||_F^2 + lambda ||Y||_*^2`.
pub fn objective_nuclear_squared(x: &DenseMatrix, y: &DenseMatrix, lambda: f64) -> Result<f64> {
    let fit = x.sub(y)?.frobenius_norm_sq();
    let nuc = nuclear_norm(y)?;
    Ok(fit + lambda * nuc * nuc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn svd_diagonal() {
        let x = DenseMatrix::from_diag(3, 3, &[1.0, 3.0, 2.0]);
        let s = svd(&x).unwrap();
        assert_close(&s.singulars, &[3.0, 2.0, 1.0], 1e-15);
    }

    #[test]
    fn svd_rank_one_and_zero() {
        let u = DenseMatrix::new(3, 1, vec![1.0, 2.0, 2.0]).unwrap();
        let v = DenseMatrix::new(2, 1, vec![3.0, 4.0]).unwrap();
        let s = svd(&u.matmul_t(&v).unwrap()).unwrap();
        assert!((s.singulars[0] - 15.0).abs() < 1e-12);
        assert!(s.singulars[1] < 1e-12);

        let z = svd(&DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(z.singulars, vec![0.0, 0.0]);
        let gram = z.left.t_matmul(&z.left).unwrap();
        assert!(gram.sub(&DenseMatrix::identity(2)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn svd_wide_input() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]]).unwrap();
        let s = svd(&x).unwrap();
        assert_eq!(s.left.shape(), (2, 2));
        assert_eq!(s.right.shape(), (3, 2));
        assert!(s.reconstruct().sub(&x).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn prox_examples() {
        let a = l1_squared_prox(&[3.0, 2.0, 1.0], 1.0).unwrap();
        assert_close(&a, &[4.0 / 3.0, 1.0 / 3.0, 0.0], 1e-12);
        let plan = shrinkage_plan(&[3.0, 2.0, 1.0], 1.0).unwrap();
        assert_eq!(plan.d_active, 2);
        assert!((plan.mu - 5.0 / 3.0).abs() < 1e-15);
        assert!((plan.mean_top - 2.5).abs() < 1e-15);

        assert_close(&l1_squared_prox(&[1.0], 1.0).unwrap(), &[0.5], 1e-15);
        assert_eq!(l1_squared_prox(&[3.0, 2.0], 0.0).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn prox_contract() {
        assert!(matches!(l1_squared_prox(&[1.0, 2.0], 1.0), Err(Error::Contract(_))));
        assert!(matches!(l1_squared_prox(&[1.0, 0.0], 1.0), Err(Error::Contract(_))));
        assert!(l1_squared_prox(&[1.0], -1.0).is_err());
    }

    #[test]
    fn prox_tie_is_excluded() {
        // x_2 sits exactly on the threshold for d = 2 when lambda = 1:
        // threshold(2) = 2/3 * (x1 + x2)/2 = x2  <=>  x1 = 2 x2
        let a = l1_squared_prox(&[2.0, 1.0], 1.0).unwrap();
        assert_close(&a, &[1.0, 0.0], 1e-15);
    }

    #[test]
    fn nuclear_squared_diag_case() {
        let x = DenseMatrix::from_diag(3, 3, &[3.0, 2.0, 1.0]);
        let y = nuclear_squared_solve(&x, 1.0).unwrap();
        let want = DenseMatrix::from_diag(3, 3, &[4.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert!(y.sub(&want).unwrap().max_abs() < 1e-12);
        assert!(nuclear_squared_solve(&x, 0.0).is_err());
    }

    #[test]
    fn objective_endpoints() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let nuc = nuclear_norm(&x).unwrap();
        let at_x = objective_nuclear_squared(&x, &x, 0.7).unwrap();
        assert!((at_x - 0.7 * nuc * nuc).abs() < 1e-12);
        let at_zero = objective_nuclear_squared(&x, &DenseMatrix::zeros(2, 2), 0.7).unwrap();
        assert_eq!(at_zero, 30.0);
        assert!(objective_nuclear_squared(&x, &DenseMatrix::zeros(2, 3), 0.7).is_err());
    }
}
