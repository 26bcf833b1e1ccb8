//! Dense row-major matrices and the least-squares kernels used by EDMD.

pub mod scalar;

pub use scalar::Scalar;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for the pseudo-inverse path.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Condition number of `A Aᵀ` above which the normal equations are abandoned.
pub const MAX_NORMAL_CONDITION: f64 = 1e12;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(format!("row {i} has {} entries, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Matrix { rows: 1, cols: v.len(), data: v.to_vec() }
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Matrix { rows: v.len(), cols: 1, data: v.to_vec() }
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_bt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_bt inner dimension");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn matmul_at(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_at inner dimension");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, bj) in orow.iter_mut().zip(b) {
                    *o += ai * bj;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|a| a * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| f(a)).collect() }
    }

    pub fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "elementwise shape");
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    /// Horizontal concatenation `[a b ...]`.
    pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::shape("hstack row counts differ"));
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for b in blocks {
                out.row_mut(r)[off..off + b.cols].copy_from_slice(b.row(r));
                off += b.cols;
            }
        }
        Ok(out)
    }

    /// Columns `start..start + len` as a new matrix.
    pub fn col_block(&self, start: usize, len: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, len);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..start + len]);
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(self.row(i));
        }
        out
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
        let mut out = Matrix::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out[(r, c)] = m[(r, c)];
            }
        }
        out
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let sv = self.to_nalgebra().singular_values();
        sv.iter().cloned().fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The column `(1; u) ⊗ z`, i.e. `[z; u_1 z; ...; u_m z]`.
pub fn kron_feature(u: &[f64], z: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity((u.len() + 1) * z.len());
    out.extend_from_slice(z);
    for &ui in u {
        out.extend(z.iter().map(|zj| ui * zj));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LstsqPath {
    NormalEquations,
    PseudoInverse,
}

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: Matrix,
    pub path: LstsqPath,
    /// Set when the normal equations were rejected as ill-conditioned.
    pub fell_back: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LstsqOptions {
    /// Skip the normal equations and go straight to the pseudo-inverse.
    pub force_pseudo_inverse: bool,
    /// Tikhonov term added to `A Aᵀ` as `ridge · trace(A Aᵀ) / rows`.
    pub ridge: Option<f64>,
}

/// Solves `min ‖X·A − B‖_F` for `X`, where columns of `A` and `B` are samples.
pub fn solve_least_squares(a: &Matrix, b: &Matrix) -> Result<LstsqSolution> {
    solve_least_squares_with(a, b, LstsqOptions::default())
}

pub fn solve_least_squares_with(a: &Matrix, b: &Matrix, opts: LstsqOptions) -> Result<LstsqSolution> {
    if a.cols != b.cols {
        return Err(Error::shape(format!("least squares needs matching sample counts, got A {:?} and B {:?}", a.shape(), b.shape())));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::shape("least squares inputs contain non-finite entries"));
    }
    if !opts.force_pseudo_inverse {
        if let Some(x) = normal_equations(a, b, opts.ridge) {
            return Ok(LstsqSolution { x, path: LstsqPath::NormalEquations, fell_back: false });
        }
    }
    let x = pseudo_inverse_solve(a, b);
    Ok(LstsqSolution { x, path: LstsqPath::PseudoInverse, fell_back: !opts.force_pseudo_inverse })
}

fn normal_equations(a: &Matrix, b: &Matrix, ridge: Option<f64>) -> Option<Matrix> {
    let k = a.rows;
    if k == 0 {
        return None;
    }
    let mut gram = a.matmul_bt(a);
    if let Some(r) = ridge {
        let tr: f64 = (0..k).map(|i| gram[(i, i)]).sum();
        let lam = r * tr / k as f64;
        for i in 0..k {
            gram[(i, i)] += lam;
        }
    }
    let g = gram.to_nalgebra();
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || max / min > MAX_NORMAL_CONDITION {
        return None;
    }
    let chol = g.cholesky()?;
    // X G = B Aᵀ  ⇔  G Xᵀ = A Bᵀ (G symmetric)
    let rhs = a.matmul_bt(b).to_nalgebra();
    let xt = chol.solve(&rhs);
    Some(Matrix::from_nalgebra(&xt.transpose()))
}

/// Number of singular values above `RANK_TOLERANCE · σ_max`.
pub fn numerical_rank(a: &Matrix) -> usize {
    if a.rows == 0 || a.cols == 0 {
        return 0;
    }
    let sv = a.to_nalgebra().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax && s > 0.0).count()
}

/// `B · A⁺` with singular values below `RANK_TOLERANCE · σ_max` discarded.
fn pseudo_inverse_solve(a: &Matrix, b: &Matrix) -> Matrix {
    if a.rows == 0 || a.cols == 0 {
        return Matrix::zeros(b.rows, a.rows);
    }
    let svd = a.to_nalgebra().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_TOLERANCE * smax;
    // A = U S Vᵀ, A⁺ = V S⁺ Uᵀ, X = B V S⁺ Uᵀ
    let bn = b.to_nalgebra();
    let bv = &bn * vt.transpose();
    let mut scaled = bv;
    for (j, &s) in svd.singular_values.iter().enumerate() {
        let inv = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        for r in 0..scaled.nrows() {
            scaled[(r, j)] *= inv;
        }
    }
    Matrix::from_nalgebra(&(scaled * u.transpose()))
}
