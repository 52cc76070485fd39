use super::tensor::{Matrix, Real};

/// Leaky rectifier `max(x, slope·x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakyRelu {
    pub slope: f64,
}

impl Default for LeakyRelu {
    fn default() -> Self {
        Self { slope: 0.2 }
    }
}

impl LeakyRelu {
    #[inline]
    pub fn apply<T: Real>(&self, x: T) -> T {
        if x >= T::zero() {
            x
        } else {
            x * T::of(self.slope)
        }
    }

    pub fn forward<T: Real>(&self, z: &Matrix<T>) -> Matrix<T> {
        let s = T::of(self.slope);
        z.map(|x| if x >= T::zero() { x } else { x * s })
    }

    /// Gradient w.r.t. the pre-activation `z`.
    pub fn backward<T: Real>(&self, z: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
        let s = T::of(self.slope);
        let mut out = dy.clone();
        for (g, &x) in out.as_mut_slice().iter_mut().zip(z.as_slice()) {
            if x < T::zero() {
                *g = *g * s;
            }
        }
        out
    }
}
