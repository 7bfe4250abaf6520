//! Dense linear algebra for the small matrices that appear in the model.
//!
//! Everything here works on matrices of dimension at most [`MAX_DIM`]; the
//! algorithms are plain O(d³) loops. The symmetric eigensolver is a cyclic
//! Jacobi method with a fixed rotation order, so identical inputs produce
//! bit-identical outputs.

use serde::ser::{Serialize, SerializeSeq, Serializer};

use crate::error::{Error, Result};

/// Largest supported matrix dimension (k ≤ 9 communities).
pub const MAX_DIM: usize = 9;

/// Eigenvalues within this relative distance below zero are treated as roundoff.
pub const TOL_PSD: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(l, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A real symmetric matrix. Entry `(i, j)` and `(j, i)` are always bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Builds a symmetric matrix from row-major data. Asymmetry beyond roundoff
    /// is rejected; otherwise the two triangles are averaged.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        let m = Matrix::from_row_major(dim, dim, data)?;
        Self::from_matrix(&m)
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch { expected: m.rows, got: m.cols });
        }
        check_dim(m.rows)?;
        let scale = m.max_abs().max(1.0);
        let mut asym = 0.0_f64;
        for i in 0..m.rows {
            for j in 0..i {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > 1e-9 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetric part `(m + mᵀ)/2` of a square matrix.
    pub fn symmetrize(m: &Matrix) -> Self {
        assert_eq!(m.rows, m.cols);
        let mut out = m.clone();
        for i in 0..m.rows {
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Self(out)
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Matrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim))
    }

    pub fn diag(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// `v vᵀ`
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).to_vec()).collect()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix::from_fn(self.dim(), |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix::from_fn(self.dim(), |i, j| self.get(i, j) - other.get(i, j))
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix::from_fn(self.dim(), |i, j| s * self.get(i, j))
    }

    /// `a·self + b·other`
    pub fn lincomb(&self, a: f64, other: &SymMatrix, b: f64) -> SymMatrix {
        SymMatrix::from_fn(self.dim(), |i, j| a * self.get(i, j) + b * other.get(i, j))
    }

    /// `self · m · self`, symmetric whenever `m` is.
    pub fn sandwich(&self, m: &SymMatrix) -> SymMatrix {
        SymMatrix::symmetrize(&self.0.matmul(&m.0).matmul(&self.0))
    }

    /// `xᵀ self y`
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.0.mul_vec(y))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.0.mul_vec(v)
    }

    pub fn matmul(&self, other: &SymMatrix) -> Matrix {
        self.0.matmul(&other.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.0.sub(&other.0).max_abs()
    }

    /// Inverse via the eigendecomposition; fails when any |eigenvalue| ≤ `tol`.
    pub fn inverse(&self, tol: f64) -> Result<SymMatrix> {
        let e = eig(self);
        let smallest = e.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
        if smallest <= tol {
            return Err(Error::SingularR(smallest));
        }
        Ok(e.map(|l| 1.0 / l))
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.dim()))?;
        for i in 0..self.dim() {
            seq.serialize_element(self.0.row(i))?;
        }
        seq.end()
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    if dim > MAX_DIM {
        return Err(Error::DimensionTooLarge(dim));
    }
    Ok(())
}

/// A symmetric matrix whose eigenvalues are all nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(SymMatrix);

impl PsdMatrix {
    /// Certifies `m` as PSD. Eigenvalues in `[-TOL_PSD·scale, 0)` are clamped to
    /// zero; anything more negative is an error.
    pub fn new(m: SymMatrix) -> Result<Self> {
        let e = eig(&m);
        let scale = e.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
        let min = *e.eigenvalues.last().expect("dim >= 1");
        if min >= 0.0 {
            return Ok(Self(m));
        }
        if min < -TOL_PSD * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPsd(min));
        }
        Ok(Self(e.map(|l| l.max(0.0))))
    }

    /// Projection onto the PSD cone: negative eigenvalues are set to zero.
    pub fn project(m: &SymMatrix) -> Self {
        let e = eig(m);
        if e.eigenvalues.iter().all(|&l| l >= 0.0) {
            return Self(m.clone());
        }
        Self(e.map(|l| l.max(0.0)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(SymMatrix::zeros(dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(SymMatrix::identity(dim))
    }

    /// `s·I` for `s ≥ 0`.
    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        assert!(s >= 0.0, "scaled_identity needs s >= 0");
        Self(SymMatrix::identity(dim).scale(s))
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn add(&self, other: &PsdMatrix) -> PsdMatrix {
        // sums of PSD matrices stay PSD up to roundoff
        Self::project(&self.0.add(&other.0))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *eig(&self.0).eigenvalues.last().expect("dim >= 1")
    }
}

impl Serialize for PsdMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

/// `m = U diag(λ) Uᵀ` with eigenvalues in descending order and eigenvectors
/// stored as the columns of `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    /// `U diag(f(λ)) Uᵀ`
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let dim = self.eigenvalues.len();
        let vals: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let u = &self.eigenvectors;
        SymMatrix::from_fn(dim, |i, j| (0..dim).map(|l| u[(i, l)] * vals[l] * u[(j, l)]).sum())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|l| l)
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues are sorted in descending order; each eigenvector is flipped so
/// that its first nonzero component is positive.
pub fn eig(m: &SymMatrix) -> EigenDecomposition {
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let total = a.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the Jacobi order for exact ties
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let lead = (0..n).map(|k| v[(k, src)]).find(|x| x.abs() > 1e-13).unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            eigenvectors[(k, col)] = sign * v[(k, src)];
        }
    }
    EigenDecomposition { eigenvalues, eigenvectors }
}

/// The unique PSD square root.
pub fn psd_sqrt(m: &PsdMatrix) -> PsdMatrix {
    let e = eig(m.as_sym());
    PsdMatrix(e.map(|l| l.max(0.0).sqrt()))
}

/// `a ⪯ b` up to `tol`: the smallest eigenvalue of `b - a` is at least `-tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let e = eig(&b.sub(a));
    Ok(*e.eigenvalues.last().expect("dim >= 1") >= -tol)
}
