//! Dense row-major matrices and the factor pair `(U, V)`.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand_distr::{Distribution, Normal};

use crate::error::{dim_err, Error, Result};
use crate::rng::DropRng;

/// Row-major real matrix.
///
/// Construction through [`DenseMatrix::new`] rejects non-finite entries.
/// Arithmetic results are not re-validated; the trainers check their
/// objectives for divergence instead.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(dim_err("DenseMatrix::new", "positive shape", format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(dim_err("DenseMatrix::new", rows * cols, data.len()));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(dim_err("DenseMatrix::from_rows", c, bad.len()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// `rows x cols` matrix with `diag` on the leading diagonal.
    pub fn from_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Entries i.i.d. `N(0, std^2)`, drawn in row-major order.
    pub fn random_gaussian(rows: usize, cols: usize, std: f64, rng: &mut DropRng) -> Self {
        let normal = Normal::new(0.0, std).expect("standard deviation must be finite and >= 0");
        Self::from_fn(rows, cols, |_, _| normal.sample(rng))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, k)]).collect()
    }

    /// `||column k||^2`, summed top to bottom.
    pub fn column_norm_sq(&self, k: usize) -> f64 {
        (0..self.rows).map(|i| self[(i, k)] * self[(i, k)]).sum()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(dim_err(
                "matmul",
                format!("lhs cols == rhs rows ({})", self.cols),
                rhs.rows,
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs^T` without materializing the transpose.
    pub fn matmul_t(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(dim_err("matmul_t", format!("{} shared columns", self.cols), rhs.cols));
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                out.data[i * rhs.rows + j] = dot(a, rhs.row(j));
            }
        }
        Ok(out)
    }

    /// `self^T * rhs`.
    pub fn t_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(dim_err("t_matmul", format!("{} shared rows", self.rows), rhs.rows));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = rhs.row(k);
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &bj) in orow.iter_mut().zip(b) {
                    *o += ai * bj;
                }
            }
        }
        Ok(out)
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(dim_err(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|x| alpha * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Multiplies column k by `weights[k]` (right multiplication by a diagonal).
    pub fn scale_columns(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.cols {
            return Err(dim_err("scale_columns", self.cols, weights.len()));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.cols) {
            for (x, &w) in row.iter_mut().zip(weights) {
                *x *= w;
            }
        }
        Ok(out)
    }

    /// Squared Frobenius norm, accumulated in row-major order.
    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, &x| acc + x * x)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
    }

    /// `[self, other]` side by side.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(dim_err("hstack", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        Ok(Self::from_fn(self.rows, cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        }))
    }

    /// Leading `rows x cols` block.
    pub fn top_left(&self, rows: usize, cols: usize) -> Self {
        assert!(rows <= self.rows && cols <= self.cols);
        Self::from_fn(rows, cols, |i, j| self[(i, j)])
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (&x, &y)| acc + x * y)
}

/// Relative Frobenius distance `||a - b|| / ||b||`; falls back to the
/// absolute distance when `b` is zero.
pub fn rel_frob_dist(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let diff = a.sub(b)?.frobenius_norm();
    let scale = b.frobenius_norm();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// The optimization variable: `U` is `m x d`, `V` is `n x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    u: DenseMatrix,
    v: DenseMatrix,
}

impl FactorPair {
    pub fn new(u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        if u.cols() != v.cols() {
            return Err(dim_err("FactorPair::new", format!("U and V widths equal ({})", u.cols()), v.cols()));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(m: usize, n: usize, d: usize) -> Self {
        Self {
            u: DenseMatrix::zeros(m, d),
            v: DenseMatrix::zeros(n, d),
        }
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn into_parts(self) -> (DenseMatrix, DenseMatrix) {
        (self.u, self.v)
    }

    /// Factorization width `d`.
    pub fn width(&self) -> usize {
        self.u.cols()
    }

    /// Column `k` of `U` (zero-based).
    pub fn u_col(&self, k: usize) -> Vec<f64> {
        self.u.column(k)
    }

    /// Column `k` of `V` (zero-based).
    pub fn v_col(&self, k: usize) -> Vec<f64> {
        self.v.column(k)
    }

    /// `U V^T`.
    pub fn product(&self) -> DenseMatrix {
        self.u.matmul_t(&self.v).expect("factor widths agree by construction")
    }

    /// Checks the pair against an `m x n` target.
    pub fn check_target(&self, x: &DenseMatrix, op: &'static str) -> Result<()> {
        if self.u.rows() != x.rows() || self.v.rows() != x.cols() {
            return Err(dim_err(
                op,
                format!("factors for a {}x{} target", x.rows(), x.cols()),
                format!("U {}x{}, V {}x{}", self.u.rows(), self.u.cols(), self.v.rows(), self.v.cols()),
            ));
        }
        Ok(())
    }

    /// Column products `||u_k||^2 ||v_k||^2`.
    pub fn column_energies(&self) -> Vec<f64> {
        (0..self.width())
            .map(|k| self.u.column_norm_sq(k) * self.v.column_norm_sq(k))
            .collect()
    }
}
