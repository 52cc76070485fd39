//! Analytic-versus-numeric gradient comparison.
//!
//! Numeric gradients use the fourth-order central stencil
//! `(8[f(x+h) − f(x−h)] − [f(x+2h) − f(x−2h)]) / 12h`, which keeps the
//! truncation error far below the double-precision tolerances used here.
//!
//! The error reported for a parameter group is the worst absolute deviation
//! `max_i |a_i − n_i|` divided by the group's gradient scale
//! `max_i max(|a_i|, |n_i|)`. The scale is floored at `scale_floor` times the
//! largest gradient magnitude over all groups, so a group whose true gradient
//! vanishes (a bias feeding only translation-invariant distances, say) is
//! judged against the model's gradient scale instead of against roundoff.

use serde::Serialize;

use super::tensor::{Parameterized, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on a group's scale, relative to the largest gradient.
    pub scale_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-7,
            scale_floor: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub count: usize,
    pub max_abs_error: f64,
    pub gradient_scale: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error <= self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GroupReport> {
        self.groups.iter().filter(|g| !(g.max_rel_error <= self.tolerance))
    }
}

/// Numeric gradient of `loss` w.r.t. every entry of `params`, grouped by tensor.
pub fn numeric_gradient<P, F>(params: &mut P, step: f64, mut loss: F) -> Vec<(String, Vec<f64>)>
where
    P: Parameterized<f64>,
    F: FnMut(&P) -> f64,
{
    let sizes: Vec<(String, usize)> = params
        .tensors()
        .iter()
        .map(|t| (t.name.clone(), t.data.len()))
        .collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (ti, (name, n)) in sizes.into_iter().enumerate() {
        let mut grad = vec![0.0; n];
        for (i, g) in grad.iter_mut().enumerate() {
            let mut eval_at = |delta: f64| {
                let orig = params.tensors_mut()[ti].data[i];
                params.tensors_mut()[ti].data[i] = orig + delta;
                let v = loss(params);
                params.tensors_mut()[ti].data[i] = orig;
                v
            };
            let f1 = eval_at(step) - eval_at(-step);
            let f2 = eval_at(2.0 * step) - eval_at(-2.0 * step);
            *g = (8.0 * f1 - f2) / (12.0 * step);
        }
        out.push((name, grad));
    }
    out
}

/// Compares analytic gradients (any precision) against numeric ones.
pub fn compare<T: Real, P: Parameterized<T>>(
    analytic: &P,
    numeric: &[(String, Vec<f64>)],
    tolerance: f64,
    scale_floor: f64,
) -> GradCheckReport {
    let tensors = analytic.tensors();
    let raw: Vec<(f64, f64)> = tensors
        .iter()
        .zip(numeric)
        .map(|(a, (name, n))| {
            debug_assert_eq!(&a.name, name);
            let mut max_abs = 0.0f64;
            let mut scale = 0.0f64;
            for (&ai, &ni) in a.data.iter().zip(n) {
                let ai = ai.to_f64_lossy();
                max_abs = max_abs.max((ai - ni).abs());
                scale = scale.max(ai.abs()).max(ni.abs());
                if !ai.is_finite() {
                    max_abs = f64::INFINITY;
                }
            }
            (max_abs, scale)
        })
        .collect();
    let floor = scale_floor * raw.iter().fold(0.0f64, |m, r| m.max(r.1));
    let groups = tensors
        .iter()
        .zip(raw)
        .map(|(a, (max_abs, scale))| {
            let denom = scale.max(floor);
            GroupReport {
                name: a.name.clone(),
                count: a.data.len(),
                max_abs_error: max_abs,
                gradient_scale: scale,
                max_rel_error: if denom > 0.0 { max_abs / denom } else { max_abs },
            }
        })
        .collect();
    GradCheckReport { groups, tolerance }
}

/// Numeric differentiation of `loss` followed by [`compare`].
pub fn grad_check<P, F>(params: &mut P, analytic: &P, loss: F, config: GradCheckConfig) -> GradCheckReport
where
    P: Parameterized<f64>,
    F: FnMut(&P) -> f64,
{
    let numeric = numeric_gradient(params, config.step, loss);
    compare(analytic, &numeric, config.tolerance, config.scale_floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{DenseLayer, Matrix, TensorMut, TensorRef};

    struct Linear(DenseLayer<f64>);

    impl Parameterized<f64> for Linear {
        fn tensors(&self) -> Vec<TensorRef<'_, f64>> {
            vec![
                TensorRef {
                    name: "w".into(),
                    dims: vec![self.0.outputs(), self.0.inputs()],
                    data: self.0.weights.as_slice(),
                },
                TensorRef {
                    name: "b".into(),
                    dims: vec![self.0.outputs()],
                    data: &self.0.bias,
                },
            ]
        }
        fn tensors_mut(&mut self) -> Vec<TensorMut<'_, f64>> {
            let DenseLayer { weights, bias } = &mut self.0;
            vec![
                TensorMut {
                    name: "w".into(),
                    data: weights.as_mut_slice(),
                },
                TensorMut {
                    name: "b".into(),
                    data: bias,
                },
            ]
        }
    }

    fn setup() -> (Linear, Matrix<f64>, Matrix<f64>) {
        let w = Matrix::from_vec(2, 3, vec![0.4, -0.3, 1.1, 0.7, 0.2, -0.5]).unwrap();
        let layer = Linear(DenseLayer::new(w, vec![0.1, -0.3]).unwrap());
        let x = Matrix::from_vec(4, 3, (0..12).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let t = Matrix::from_vec(4, 2, (0..8).map(|i| (i as f64 * 1.3).cos()).collect()).unwrap();
        (layer, x, t)
    }

    fn loss(l: &Linear, x: &Matrix<f64>, t: &Matrix<f64>) -> f64 {
        let y = l.0.forward(x).unwrap();
        0.5 * y
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
    }

    fn analytic(l: &Linear, x: &Matrix<f64>, t: &Matrix<f64>) -> Linear {
        let y = l.0.forward(x).unwrap();
        let mut dy = y.clone();
        for (d, tt) in dy.as_mut_slice().iter_mut().zip(t.as_slice()) {
            *d -= tt;
        }
        Linear(l.0.backward(x, &dy).unwrap().1)
    }

    #[test]
    fn linear_quadratic_is_exact() {
        let (mut layer, x, t) = setup();
        let grad = analytic(&layer, &x, &t);
        let report = grad_check(
            &mut layer,
            &grad,
            |l| loss(l, &x, &t),
            GradCheckConfig {
                step: 1e-3,
                tolerance: 1e-9,
                scale_floor: 0.0,
            },
        );
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_error() < 1e-9);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (mut layer, x, t) = setup();
        let mut grad = analytic(&layer, &x, &t);
        grad.0.bias[1] *= 1.01;
        let report = grad_check(&mut layer, &grad, |l| loss(l, &x, &t), GradCheckConfig::default());
        assert!(!report.passed());
        let failed: Vec<_> = report.failures().map(|g| g.name.as_str()).collect();
        assert_eq!(failed, vec!["b"]);
    }
}
