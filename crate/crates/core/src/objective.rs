//! Distance-matrix softmax loss over two-view feature pairs and the
//! last-layer absolute-value regularizer.
//!
//! For `k` points with features `h¹_i` (view 1) and `h²_j` (view 2) the loss
//! takes `d_ij = ‖h¹_i − h²_j‖`, turns every row and every column of `D`
//! into a softmax over `exp(−d)`, and sums the negative log of the diagonal
//! probabilities, halved.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::netcore::{Matrix, Real};

/// Default weight of the regularizer.
pub const DEFAULT_LAMBDA: f64 = 3.0;

/// Sign of the distance inside the softmax exponent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// `exp(−d)`: small distances get high probability.
    #[default]
    Similarity,
    /// `exp(+d)`, the literal printed form; minimizing it pushes matching
    /// pairs apart.
    Printed,
}

impl SignConvention {
    fn factor(self) -> f64 {
        match self {
            SignConvention::Similarity => -1.0,
            SignConvention::Printed => 1.0,
        }
    }
}

/// `d_ij = ‖a_i − b_j‖₂` for all row pairs.
pub fn distance_matrix<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.shape() != b.shape() {
        return Err(contract(format!(
            "feature batches differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let k = a.rows();
    let mut d = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let s = a
                .row(i)
                .iter()
                .zip(b.row(j))
                .fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y));
            d[(i, j)] = s.sqrt();
        }
    }
    Ok(d)
}

/// Value and intermediate results of the main loss.
#[derive(Debug, Clone)]
pub struct MainLoss {
    pub value: f64,
    /// Row-wise softmax; each row sums to 1.
    pub s_row: Matrix<f64>,
    /// Column-wise softmax; each column sums to 1.
    pub s_col: Matrix<f64>,
    /// `∂L/∂d_ij`.
    pub grad: Matrix<f64>,
}

impl MainLoss {
    pub fn grad_as<T: Real>(&self) -> Matrix<T> {
        self.grad.cast()
    }
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Main loss and its gradient with respect to the distance matrix.
/// Evaluated in double precision regardless of `T`.
pub fn loss_main<T: Real>(d: &Matrix<T>, sign: SignConvention) -> Result<MainLoss> {
    let k = d.rows();
    if k == 0 || d.cols() != k {
        return Err(contract(format!(
            "distance matrix must be square and non-empty, got {:?}",
            d.shape()
        )));
    }
    if !d.is_finite() {
        return Err(contract("distance matrix has non-finite entries"));
    }
    let z = d.cast::<f64>().map(|v| sign.factor() * v);
    let row_lse: Vec<f64> = (0..k).map(|i| log_sum_exp(z.row(i).iter().copied())).collect();
    let col_lse: Vec<f64> = (0..k).map(|j| log_sum_exp((0..k).map(|i| z[(i, j)]))).collect();

    let mut s_row = Matrix::zeros(k, k);
    let mut s_col = Matrix::zeros(k, k);
    let mut value = 0.0;
    for i in 0..k {
        for j in 0..k {
            s_row[(i, j)] = (z[(i, j)] - row_lse[i]).exp();
            s_col[(i, j)] = (z[(i, j)] - col_lse[j]).exp();
        }
        value -= 0.5 * ((z[(i, i)] - row_lse[i]) + (z[(i, i)] - col_lse[i]));
    }
    // ∂L/∂z_ij = −½[(δ_ij − s_row_ij) + (δ_ij − s_col_ij)], then chain through z = ±d.
    let mut grad = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let delta = if i == j { 1.0 } else { 0.0 };
            let dz = -0.5 * ((delta - s_row[(i, j)]) + (delta - s_col[(i, j)]));
            grad[(i, j)] = sign.factor() * dz;
        }
    }
    Ok(MainLoss {
        value,
        s_row,
        s_col,
        grad,
    })
}

/// Back-propagates `∂L/∂D` to both feature batches. Pairs at zero distance
/// receive a zero subgradient.
pub fn distance_backward<T: Real>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    d: &Matrix<T>,
    dd: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let k = a.rows();
    let mut w = Matrix::zeros(k, k);
    let tiny = T::of(1e-20);
    for i in 0..k {
        for j in 0..k {
            if d[(i, j)] > tiny {
                w[(i, j)] = dd[(i, j)] / d[(i, j)];
            }
        }
    }
    // da_i = Σ_j w_ij (a_i − b_j), db_j = −Σ_i w_ij (a_i − b_j)
    let mut da = w.matmul(b)?.map(|v| -v);
    let mut db = w.matmul_tn(a)?.map(|v| -v);
    for i in 0..k {
        let rs = w.row(i).iter().fold(T::zero(), |s, v| s + *v);
        let cs = (0..k).fold(T::zero(), |s, r| s + w[(r, i)]);
        for (x, y) in da.row_mut(i).iter_mut().zip(a.row(i)) {
            *x = *x + rs * *y;
        }
        for (x, y) in db.row_mut(i).iter_mut().zip(b.row(i)) {
            *x = *x + cs * *y;
        }
    }
    Ok((da, db))
}

/// `Σ |w|` over the weights.
pub fn loss_reg<T: Real>(weights: &Matrix<T>) -> f64 {
    weights.as_slice().iter().map(|w| w.abs().to_f64_lossy()).sum()
}

/// Subgradient of [`loss_reg`]: `sign(w)`, with 0 at 0.
pub fn loss_reg_backward<T: Real>(weights: &Matrix<T>) -> Matrix<T> {
    weights.map(|w| {
        if w > T::zero() {
            T::one()
        } else if w < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = stream_rng(seed, Stream::Sample, 0, 0);
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_views_have_zero_diagonal() {
        let a = random(5, 4, 1);
        let d = distance_matrix(&a, &a).unwrap();
        for i in 0..5 {
            assert_eq!(d[(i, i)], 0.0);
        }
    }

    #[test]
    fn orthonormal_pair_distances() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let d = distance_matrix(&e, &e).unwrap();
        assert_eq!(d[(0, 1)], 2f64.sqrt());
        assert_eq!(d[(1, 0)], 2f64.sqrt());
    }

    #[test]
    fn distances_match_double_loop() {
        let (a, b) = (random(7, 3, 2), random(7, 3, 3));
        let d = distance_matrix(&a, &b).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let mut s = 0.0;
                for c in 0..3 {
                    s += (a[(i, c)] - b[(j, c)]).powi(2);
                }
                assert_eq!(d[(i, j)], s.sqrt());
            }
        }
    }

    #[test]
    fn single_point_loss_is_zero() {
        let d = Matrix::from_vec(1, 1, vec![0.7]).unwrap();
        assert_eq!(loss_main(&d, SignConvention::Similarity).unwrap().value, 0.0);
    }

    #[test]
    fn two_point_value() {
        let r = 2f64.sqrt();
        let d = Matrix::from_rows(&[vec![0.0, r], vec![r, 0.0]]).unwrap();
        let loss = loss_main(&d, SignConvention::Similarity).unwrap();
        let s = 1.0 / (1.0 + (-r).exp());
        assert!((s - 0.8044).abs() < 1e-4);
        assert!((loss.value - (-2.0 * s.ln())).abs() < 1e-12);
        assert!((loss.value - 0.4353).abs() < 1e-4);
    }

    #[test]
    fn printed_convention_flips_the_preference() {
        let r = 2f64.sqrt();
        let d = Matrix::from_rows(&[vec![0.0, r], vec![r, 0.0]]).unwrap();
        let loss = loss_main(&d, SignConvention::Printed).unwrap();
        let s = 1.0 / (1.0 + r.exp());
        assert!((loss.value + 2.0 * s.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let d = Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(loss_main(&d, SignConvention::Similarity).is_err());
    }

    #[test]
    fn regularizer_values() {
        assert_eq!(loss_reg(&Matrix::<f64>::zeros(3, 4)), 0.0);
        assert_eq!(loss_reg(&Matrix::from_vec(1, 1, vec![-2.0]).unwrap()), 2.0);
        let w = random(4, 6, 9);
        let oracle: f64 = (0..4)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)].abs())
            .sum();
        assert!((loss_reg(&w) - oracle).abs() < 1e-12);
    }

    fn loss_of(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
        loss_main(&distance_matrix(a, b).unwrap(), SignConvention::Similarity)
            .unwrap()
            .value
    }

    #[test]
    fn feature_gradient_matches_finite_differences() {
        let (a, b) = (random(6, 4, 20), random(6, 4, 21));
        let d = distance_matrix(&a, &b).unwrap();
        let loss = loss_main(&d, SignConvention::Similarity).unwrap();
        let (da, db) = distance_backward(&a, &b, &d, &loss.grad).unwrap();
        let h = 1e-6;
        for (m, g, is_a) in [(&a, &da, true), (&b, &db, false)] {
            for idx in 0..m.as_slice().len() {
                let mut p = m.clone();
                p.as_mut_slice()[idx] += h;
                let mut q = m.clone();
                q.as_mut_slice()[idx] -= h;
                let (lp, lq) = if is_a {
                    (loss_of(&p, &b), loss_of(&q, &b))
                } else {
                    (loss_of(&a, &p), loss_of(&a, &q))
                };
                let num = (lp - lq) / (2.0 * h);
                let ana = g.as_slice()[idx];
                assert!((num - ana).abs() <= 1e-6 * num.abs().max(ana.abs()).max(1e-3));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn distance_gradient_matches_finite_differences(k in 1usize..=8, seed in 0u64..1000) {
            let d = random(k, k, seed).map(|v| v.abs() * 2.0);
            let loss = loss_main(&d, SignConvention::Similarity).unwrap();
            let h = 1e-6;
            for idx in 0..k * k {
                let mut p = d.clone();
                p.as_mut_slice()[idx] += h;
                let mut q = d.clone();
                q.as_mut_slice()[idx] -= h;
                let lp = loss_main(&p, SignConvention::Similarity).unwrap().value;
                let lq = loss_main(&q, SignConvention::Similarity).unwrap().value;
                let num = (lp - lq) / (2.0 * h);
                let ana = loss.grad.as_slice()[idx];
                prop_assert!((num - ana).abs() <= 1e-5 * num.abs().max(ana.abs()).max(1e-4));
            }
        }

        #[test]
        fn monotone_in_distances(k in 2usize..=8, seed in 0u64..1000) {
            let d = random(k, k, seed).map(|v| v.abs() * 2.0);
            let base = loss_main(&d, SignConvention::Similarity).unwrap().value;
            for i in 0..k {
                for j in 0..k {
                    let mut p = d.clone();
                    p[(i, j)] += 1e-3;
                    let v = loss_main(&p, SignConvention::Similarity).unwrap().value;
                    if i == j {
                        prop_assert!(v >= base);
                    } else {
                        prop_assert!(v <= base);
                    }
                }
            }
        }

        #[test]
        fn softmaxes_sum_to_one_and_loss_is_permutation_invariant(k in 1usize..=8, seed in 0u64..1000) {
            let d = random(k, k, seed).map(|v| v.abs() * 3.0);
            let loss = loss_main(&d, SignConvention::Similarity).unwrap();
            prop_assert!(loss.value >= 0.0);
            for i in 0..k {
                let r: f64 = loss.s_row.row(i).iter().sum();
                let c: f64 = (0..k).map(|r| loss.s_col[(r, i)]).sum();
                prop_assert!((r - 1.0).abs() < 1e-6 && (c - 1.0).abs() < 1e-6);
            }
            // Relabel points: rows and columns permuted together.
            let perm: Vec<usize> = (0..k).map(|i| (2 * k - 1 - i + 3) % k).collect();
            let mut pd = Matrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    pd[(i, j)] = d[(perm[i], perm[j])];
                }
            }
            let v = loss_main(&pd, SignConvention::Similarity).unwrap().value;
            prop_assert!((v - loss.value).abs() < 1e-12 * loss.value.max(1.0));
        }
    }
}
