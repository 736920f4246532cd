//! Dense row-major `f64` matrices.
//!
//! Only the handful of kernels the filters and recurrent cells need: products,
//! transposes, an LU factorization with partial pivoting and a Cholesky factor.

use std::fmt;

use crate::error::{Error, Result};

/// Pivot threshold, relative to the largest entry of the pivot's column in the
/// original matrix, below which a matrix is reported singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, PartialEq)]
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
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.data.fill(value);
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "cannot build {rows}x{cols} matrix from {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(
            r,
            c,
            rows.iter().flat_map(|row| row.iter().copied()).collect(),
        )
    }

    pub fn column(values: &[f64]) -> Self {
        Self::from_vec(values.len(), 1, values.to_vec()).expect("non-empty column")
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a 1×1 matrix.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · other`. Panics on inner-dimension mismatch; use the tape ops for
    /// checked products.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        gemm_acc(self, other, &mut out);
        out
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dimension");
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dimension");
        let mut out = Self::zeros(self.cols, other.cols);
        let n = other.cols;
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for (i, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &bv) in dst.iter_mut().zip(b) {
                    *d += aik * bv;
                }
            }
        }
        out
    }

    pub fn symmetrized(&self) -> Self {
        debug_assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Self {
        let w = end - start;
        let mut data = Vec::with_capacity(self.rows * w);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Self {
            rows: self.rows,
            cols: w,
            data,
        }
    }

    pub fn vstack(top: &Self, bottom: &Self) -> Self {
        debug_assert_eq!(top.cols, bottom.cols);
        let mut data = Vec::with_capacity(top.data.len() + bottom.data.len());
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Self {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        }
    }

    pub fn hstack(left: &Self, right: &Self) -> Self {
        debug_assert_eq!(left.rows, right.rows);
        let cols = left.cols + right.cols;
        let mut data = Vec::with_capacity(left.rows * cols);
        for r in 0..left.rows {
            data.extend_from_slice(left.row(r));
            data.extend_from_slice(right.row(r));
        }
        Self {
            rows: left.rows,
            cols,
            data,
        }
    }

    /// Same data, new shape.
    pub fn reshaped(&self, rows: usize, cols: usize) -> Self {
        assert_eq!(rows * cols, self.data.len());
        Self {
            rows,
            cols,
            data: self.data.clone(),
        }
    }

    pub fn lu(&self) -> Result<Lu> {
        Lu::factor(self)
    }

    /// Solves `self · x = b`.
    pub fn solve(&self, b: &Self) -> Result<Self> {
        self.lu()?.solve(b)
    }

    /// Lower-triangular `L` with `self = L·Lᵀ`, after adding `jitter` to the diagonal.
    pub fn cholesky(&self, jitter: f64) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Dimension("cholesky of non-square matrix".into()));
        }
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self.get(j, j) + jitter;
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let d = d.sqrt();
            l.set(j, j, d);
            for i in (j + 1)..n {
                let mut s = 0.5 * (self.get(i, j) + self.get(j, i));
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / d);
            }
        }
        Ok(l)
    }

    /// Extreme eigenvalues of a symmetric matrix via cyclic Jacobi sweeps.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let n = self.rows;
        let mut a = self.symmetrized();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a.get(i, j) * a.get(i, j);
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        a.diag()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += a · b`
fn gemm_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    let n = b.cols;
    for i in 0..a.rows {
        let arow = a.row(i);
        let dst = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for (d, &bv) in dst.iter_mut().zip(brow) {
                *d += aik * bv;
            }
        }
    }
}

/// LU factorization `P·A = L·U` with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::Dimension(format!(
                "solve needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let scale = a.max_abs();
        if !scale.is_finite() {
            return Err(Error::NonFinite("matrix passed to LU".into()));
        }
        let col_scale: Vec<f64> = (0..n)
            .map(|c| (0..n).map(|r| a.get(r, c).abs()).fold(0.0, f64::max))
            .collect();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu.get(i, k).abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            let threshold = PIVOT_TOLERANCE * col_scale[k];
            if pmax <= threshold || col_scale[k] == 0.0 {
                return Err(Error::Singular {
                    pivot: pmax,
                    threshold,
                });
            }
            if p != k {
                perm.swap(p, k);
                for c in 0..n {
                    lu.data.swap(p * n + c, k * n + c);
                }
            }
            let pivot = lu.get(k, k);
            for i in (k + 1)..n {
                let f = lu.get(i, k) / pivot;
                lu.set(i, k, f);
                if f != 0.0 {
                    for c in (k + 1)..n {
                        let v = lu.get(i, c) - f * lu.get(k, c);
                        lu.set(i, c, v);
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    /// Solves `A·x = b`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows != n {
            return Err(Error::Dimension(format!(
                "solve: matrix is {n}x{n} but right-hand side has {} rows",
                b.rows
            )));
        }
        let m = b.cols;
        let mut x = Matrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        // forward substitution with unit-diagonal L
        for i in 0..n {
            for k in 0..i {
                let l = self.lu.get(i, k);
                if l != 0.0 {
                    for c in 0..m {
                        x.data[i * m + c] -= l * x.data[k * m + c];
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let u = self.lu.get(i, k);
                if u != 0.0 {
                    for c in 0..m {
                        x.data[i * m + c] -= u * x.data[k * m + c];
                    }
                }
            }
            let d = self.lu.get(i, i);
            for c in 0..m {
                x.data[i * m + c] /= d;
            }
        }
        Ok(x)
    }

    /// Solves `Aᵀ·x = b`.
    pub fn solve_transpose(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows != n {
            return Err(Error::Dimension("solve_transpose: row mismatch".into()));
        }
        let m = b.cols;
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, Lᵀ v = w, x = Pᵀ v.
        let mut w = b.clone();
        for i in 0..n {
            for k in 0..i {
                let u = self.lu.get(k, i);
                if u != 0.0 {
                    for c in 0..m {
                        w.data[i * m + c] -= u * w.data[k * m + c];
                    }
                }
            }
            let d = self.lu.get(i, i);
            for c in 0..m {
                w.data[i * m + c] /= d;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let l = self.lu.get(k, i);
                if l != 0.0 {
                    for c in 0..m {
                        w.data[i * m + c] -= l * w.data[k * m + c];
                    }
                }
            }
        }
        let mut x = Matrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(p).copy_from_slice(w.row(i));
        }
        Ok(x)
    }
}
