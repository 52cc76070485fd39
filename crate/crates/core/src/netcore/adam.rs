use crate::error::{Error, Result};

use super::tensor::{Parameterized, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new<P: Parameterized<T>>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient anywhere rejects the whole
    /// step before any parameter or moment is touched.
    pub fn step<P: Parameterized<T>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.tensors();
        if grads.len() != self.first.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} tensors, got {} gradients",
                self.first.len(),
                grads.len()
            )));
        }
        for (g, m) in grads.iter().zip(&self.first) {
            if g.data.len() != m.len() {
                return Err(Error::Contract(format!("gradient `{}` has wrong size", g.name)));
            }
            if g.data.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient { param: g.name.clone() });
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr_t = c.learning_rate * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let lr_t = T::of(lr_t);
        // ε is applied to the bias-corrected second moment.
        let eps_hat = T::of(c.epsilon * (1.0 - c.beta2.powi(t)).sqrt());

        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(&grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((w, &gi), mi), vi) in p.data.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                *w = *w - lr_t * *mi / (vi.sqrt() + eps_hat);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::tensor::{TensorMut, TensorRef};

    #[derive(Clone, Debug, PartialEq)]
    struct Scalars(Vec<f64>);

    impl Parameterized<f64> for Scalars {
        fn tensors(&self) -> Vec<TensorRef<'_, f64>> {
            vec![TensorRef {
                name: "w".into(),
                dims: vec![self.0.len()],
                data: &self.0,
            }]
        }
        fn tensors_mut(&mut self) -> Vec<TensorMut<'_, f64>> {
            vec![TensorMut {
                name: "w".into(),
                data: &mut self.0,
            }]
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Scalars(vec![0.5, -1.0]);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        for _ in 0..10 {
            adam.step(&mut p, &Scalars(vec![0.0, 0.0])).unwrap();
        }
        assert_eq!(p.0, vec![0.5, -1.0]);
    }

    /// Plain scalar re-implementation of the update rule.
    fn scalar_oracle(w0: f64, lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        w
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Scalars(vec![1.0]);
        let config = AdamConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut adam = Adam::new(config, &p);
        for _ in 0..200 {
            let g = Scalars(vec![2.0 * p.0[0]]);
            adam.step(&mut p, &g).unwrap();
        }
        assert!(p.0[0].abs() < 1e-2, "w = {}", p.0[0]);
        let oracle = scalar_oracle(1.0, 0.1, 200);
        assert!((p.0[0] - oracle).abs() < 1e-9, "{} vs {oracle}", p.0[0]);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = Scalars(vec![1.0, -0.3, 2.0]);
            let mut adam = Adam::new(AdamConfig::default(), &p);
            for i in 0..50 {
                let g = Scalars(p.0.iter().map(|w| w * (i as f64).sin()).collect());
                adam.step(&mut p, &g).unwrap();
            }
            p.0.iter().map(|w| w.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = Scalars(vec![1.0, 2.0]);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let err = adam.step(&mut p, &Scalars(vec![f64::NAN, 1.0])).unwrap_err();
        match err {
            Error::NonFiniteGradient { param } => assert_eq!(param, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.0, vec![1.0, 2.0]);
        assert_eq!(adam.steps(), 0);
    }
}
