use crate::error::{Error, Result};

use super::tensor::{Matrix, Real};

/// Inputs with `‖x‖ ≤ NORM_EPS` cannot be normalized.
pub const NORM_EPS: f64 = 1e-12;

/// Row-wise l2 normalization of a batch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct RowNormalization<T> {
    pub output: Matrix<T>,
    pub norms: Vec<T>,
    /// `false` where the row norm fell below [`NORM_EPS`]; such rows are
    /// replaced by the first basis vector and receive zero gradient.
    pub valid: Vec<bool>,
}

pub fn normalize_rows<T: Real>(x: &Matrix<T>) -> RowNormalization<T> {
    let eps = T::of(NORM_EPS);
    let mut output = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    let mut valid = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = output.row_mut(i);
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        let ok = norm > eps && norm.is_finite();
        if ok {
            for v in row.iter_mut() {
                *v = *v / norm;
            }
        } else {
            for v in row.iter_mut() {
                *v = T::zero();
            }
            if let Some(first) = row.first_mut() {
                *first = T::one();
            }
        }
        norms.push(norm);
        valid.push(ok);
    }
    RowNormalization { output, norms, valid }
}

/// `dx = (dy − y (y·dy)) / ‖x‖`: the radial component is projected out.
pub fn normalize_rows_backward<T: Real>(n: &RowNormalization<T>, dy: &Matrix<T>) -> Matrix<T> {
    let mut dx = Matrix::zeros(dy.rows(), dy.cols());
    for i in 0..dy.rows() {
        if !n.valid[i] {
            continue;
        }
        let y = n.output.row(i);
        let g = dy.row(i);
        let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
        let inv = T::one() / n.norms[i];
        for ((d, &yy), &gg) in dx.row_mut(i).iter_mut().zip(y).zip(g) {
            *d = (gg - yy * dot) * inv;
        }
    }
    dx
}

/// Strict single-vector normalization.
pub fn l2_normalize<T: Real>(x: &[T]) -> Result<Vec<T>> {
    let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
    if !(norm > T::of(NORM_EPS)) {
        return Err(Error::Domain(format!("cannot normalize a vector of norm {norm}")));
    }
    Ok(x.iter().map(|&v| v / norm).collect())
}
