use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract, Result};

use super::tensor::{Matrix, Real};

/// Fully connected layer `y = W x + b` applied to each row of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `out × in`
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

/// Gradients of a [`DenseLayer`]; same shapes as the layer.
pub type DenseGrad<T> = DenseLayer<T>;

impl<T: Real> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn new(weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(contract(format!(
                "bias has {} entries for {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias })
    }

    /// Zero bias, weights ~ N(0, 2 / fan_in).
    pub fn he_init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..inputs * outputs).map(|_| T::of(normal.sample(rng))).collect();
        Self {
            weights: Matrix::from_vec(outputs, inputs, data).expect("sized"),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.inputs() {
            return Err(contract(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            )));
        }
        let mut y = x.matmul_nt(&self.weights)?;
        for i in 0..y.rows() {
            for (v, b) in y.row_mut(i).iter_mut().zip(&self.bias) {
                *v = *v + *b;
            }
        }
        Ok(y)
    }

    /// Returns `(dx, grad)` for upstream gradient `dy` at input `x`.
    pub fn backward(&self, x: &Matrix<T>, dy: &Matrix<T>) -> Result<(Matrix<T>, DenseGrad<T>)> {
        if x.cols() != self.inputs() || dy.cols() != self.outputs() || x.rows() != dy.rows() {
            return Err(contract(format!(
                "dense backward shape mismatch: x {:?}, dy {:?}, layer {}→{}",
                x.shape(),
                dy.shape(),
                self.inputs(),
                self.outputs()
            )));
        }
        let dx = dy.matmul(&self.weights)?;
        let dw = dy.matmul_tn(x)?;
        let mut db = vec![T::zero(); self.outputs()];
        for i in 0..dy.rows() {
            for (acc, g) in db.iter_mut().zip(dy.row(i)) {
                *acc = *acc + *g;
            }
        }
        Ok((dx, DenseLayer { weights: dw, bias: db }))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.outputs())
    }

    pub fn cast<U: Real>(&self) -> DenseLayer<U> {
        DenseLayer {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|&b| U::of(b.to_f64_lossy())).collect(),
        }
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.weights.as_mut_slice().iter_mut().zip(other.weights.as_slice()) {
            *a = *a + *b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a = *a + *b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn layer_3x2() -> DenseLayer<f64> {
        let w = Matrix::from_vec(3, 2, vec![0.5, -1.2, 0.3, 0.8, -0.7, 0.1]).unwrap();
        DenseLayer::new(w, vec![0.1, -0.2, 0.05]).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(Matrix::<f64>::identity(3), vec![0.0; 3]).unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -0.5]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let layer = layer_3x2();
        let x = Matrix::from_vec(4, 2, vec![1.0, 2.0, -1.0, 0.5, 0.3, 0.3, 2.0, -2.0]).unwrap();
        let (dx, g) = layer.backward(&x, &Matrix::zeros(4, 3)).unwrap();
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.weights.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_gradient_matches_central_differences() {
        let mut layer = layer_3x2();
        let mut rng = stream_rng(1, Stream::Init, 0, 0);
        let x = Matrix::from_vec(5, 2, (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let probe = Matrix::from_vec(5, 3, (0..15).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        // scalar objective: <probe, y>
        let objective = |l: &DenseLayer<f64>, x: &Matrix<f64>| -> f64 {
            let y = l.forward(x).unwrap();
            y.as_slice().iter().zip(probe.as_slice()).map(|(a, b)| a * b).sum()
        };
        let (dx, g) = layer.backward(&x, &probe).unwrap();
        let h = 1e-6;
        for idx in 0..6 {
            let orig = layer.weights.as_slice()[idx];
            layer.weights.as_mut_slice()[idx] = orig + h;
            let fp = objective(&layer, &x);
            layer.weights.as_mut_slice()[idx] = orig - h;
            let fm = objective(&layer, &x);
            layer.weights.as_mut_slice()[idx] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let an = g.weights.as_slice()[idx];
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
        }
        let mut xm = x.clone();
        for idx in 0..10 {
            let orig = xm.as_slice()[idx];
            xm.as_mut_slice()[idx] = orig + h;
            let fp = objective(&layer, &xm);
            xm.as_mut_slice()[idx] = orig - h;
            let fm = objective(&layer, &xm);
            xm.as_mut_slice()[idx] = orig;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - dx.as_slice()[idx]).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
        for o in 0..3 {
            let expect: f64 = (0..5).map(|i| probe[(i, o)]).sum();
            assert!((g.bias[o] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let layer = layer_3x2();
        assert!(layer.forward(&Matrix::zeros(1, 3)).is_err());
        assert!(layer.backward(&Matrix::zeros(1, 2), &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn he_init_has_expected_scale() {
        let mut rng = stream_rng(2, Stream::Init, 0, 0);
        let layer = DenseLayer::<f64>::he_init(50, 400, &mut rng);
        let w = layer.weights.as_slice();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 0.04).abs() < 0.004, "var = {var}");
        assert!(layer.bias.iter().all(|&b| b == 0.0));
    }
}
