//! Reference computations written with plain index loops, independent of the
//! library's matrix routines.
#![allow(dead_code)]

use dropfact::rng::{self, DropRng};
use dropfact::{DenseMatrix, FactorPair};
use rand::Rng;

pub fn rng(seed: u64) -> DropRng {
    rng::stream(seed, 77)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut DropRng) -> DenseMatrix {
    DenseMatrix::random_gaussian(rows, cols, 1.0, rng)
}

pub fn random_pair(m: usize, n: usize, d: usize, rng: &mut DropRng) -> FactorPair {
    FactorPair::new(gaussian(m, d, rng), gaussian(n, d, rng)).unwrap()
}

pub fn random_shape(rng: &mut DropRng, max: usize) -> (usize, usize) {
    (rng.random_range(1..=max), rng.random_range(1..=max))
}

/// `sum_ij (X_ij - sum_k w_k U_ik V_jk)^2`.
pub fn weighted_loss(x: &DenseMatrix, f: &FactorPair, w: &[f64]) -> f64 {
    let (u, v) = (f.u(), f.v());
    let mut total = 0.0;
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let mut p = 0.0;
            for (k, wk) in w.iter().enumerate() {
                p += wk * u[(i, k)] * v[(j, k)];
            }
            total += (x[(i, j)] - p).powi(2);
        }
    }
    total
}

pub fn frob_loss_loop(x: &DenseMatrix, f: &FactorPair) -> f64 {
    weighted_loss(x, f, &vec![1.0; f.width()])
}

pub fn omega_loop(f: &FactorPair) -> f64 {
    let (u, v) = (f.u(), f.v());
    (0..f.width())
        .map(|k| {
            let a: f64 = (0..u.rows()).map(|i| u[(i, k)].powi(2)).sum();
            let b: f64 = (0..v.rows()).map(|j| v[(j, k)].powi(2)).sum();
            a * b
        })
        .sum()
}

pub fn objective_loop(x: &DenseMatrix, f: &FactorPair, lambda: f64) -> f64 {
    frob_loss_loop(x, f) + lambda * omega_loop(f)
}

/// Masked loss with dropped columns zeroed and survivors scaled by `1/theta`.
pub fn masked_loss_loop(x: &DenseMatrix, f: &FactorPair, bits: &[bool], theta: f64) -> f64 {
    let w: Vec<f64> = bits.iter().map(|&b| if b { 1.0 / theta } else { 0.0 }).collect();
    weighted_loss(x, f, &w)
}

/// Expected masked loss by summing over all `2^d` masks.
pub fn enumerate_expectation(x: &DenseMatrix, f: &FactorPair, theta: f64) -> f64 {
    let d = f.width();
    let mut total = 0.0;
    for code in 0u64..(1 << d) {
        let bits: Vec<bool> = (0..d).map(|k| code >> k & 1 == 1).collect();
        let kept = bits.iter().filter(|&&b| b).count() as i32;
        let p = theta.powi(kept) * (1.0 - theta).powi(d as i32 - kept);
        total += p * masked_loss_loop(x, f, &bits, theta);
    }
    total
}

pub fn matmul_loop(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.cols(), b.rows());
    DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
    })
}

pub fn transpose_loop(a: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)])
}

/// Random orthogonal matrix from modified Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal(n: usize, rng: &mut DropRng) -> DenseMatrix {
    let g = gaussian(n, n, rng);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut c: Vec<f64> = (0..n).map(|i| g[(i, j)]).collect();
        for q in &cols {
            let dot: f64 = q.iter().zip(&c).map(|(a, b)| a * b).sum();
            for (ci, qi) in c.iter_mut().zip(q) {
                *ci -= dot * qi;
            }
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        c.iter_mut().for_each(|v| *v /= norm);
        cols.push(c);
    }
    DenseMatrix::from_fn(n, n, |i, j| cols[j][i])
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Nelder-Mead minimization from `start` with initial simplex edge `scale`.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], scale: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += scale;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..iters {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n).map(|k| centroid[k] + t * (simplex[n][k] - centroid[k])).collect()
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = along(0.5);
            let fc = f(&contracted);
            if fc < values[n] {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n)
                        .map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]))
                        .collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best].clone(), values[best])
}
