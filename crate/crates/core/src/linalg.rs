//! Thin helpers over nalgebra for the small dense matrices used here.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetric_from_upper(n: usize, upper: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = upper[k];
            m[(j, i)] = upper[k];
            k += 1;
        }
    }
    m
}

/// Index of `(i, j)` with `i <= j` in row-major upper-triangular storage.
pub fn upper_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub fn quadratic_form(m: &Matrix, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += m[(i, j)] * a[i] * b[j];
        }
    }
    s
}

/// Row-major nested vectors, the layout used in reports.
pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn serialize_rows<S: serde::Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&rows(m), s)
}

/// Symmetric square root and its inverse of a positive definite matrix.
pub fn sqrt_and_inverse(m: &Matrix) -> Option<(Matrix, Matrix)> {
    let eig = ((m + m.transpose()) * 0.5).symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return None;
    }
    let q = &eig.eigenvectors;
    let root = Vector::from_iterator(m.nrows(), eig.eigenvalues.iter().map(|l| l.sqrt()));
    let inv_root = root.map(|r| 1.0 / r);
    Some((
        q * Matrix::from_diagonal(&root) * q.transpose(),
        q * Matrix::from_diagonal(&inv_root) * q.transpose(),
    ))
}

pub fn max_abs_entry(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
