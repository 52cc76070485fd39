use serde::Serialize;

use crate::error::Result;
use crate::model::{NetInput, NetworkParams, Noise, Which};
use crate::netcore::{Matrix, Real};
use crate::objective::{distance_backward, distance_matrix, loss_main, loss_reg, loss_reg_backward, SignConvention};

use super::source::Batch;

/// What a training phase optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Main loss on one branch's unit features.
    Branch(Which),
    /// Main loss on combined features plus the weighted regularizer.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLoss {
    pub l_main: f64,
    /// Regularizer of the combining layer (before weighting).
    pub l_reg: f64,
}

impl StepLoss {
    pub fn is_finite(&self) -> bool {
        self.l_main.is_finite() && self.l_reg.is_finite()
    }
}

/// The minimized quantity under `objective`.
pub fn total_loss(loss: StepLoss, objective: Objective, lambda: f64) -> f64 {
    match objective {
        Objective::Branch(_) => loss.l_main,
        Objective::Joint => loss.l_main + lambda * loss.l_reg,
    }
}

fn features<T: Real>(
    params: &NetworkParams<T>,
    objective: Objective,
    batch: &Batch<T>,
    noise: Option<&Noise<T>>,
) -> Result<Matrix<T>> {
    let input = NetInput::Lumitexels(&batch.inputs);
    Ok(match objective {
        Objective::Branch(which) => params
            .forward_branch(which, input, &batch.views, noise)?
            .features()
            .clone(),
        Objective::Joint => params.forward(input, &batch.views, noise)?.output,
    })
}

/// Loss of one batch without gradients.
pub fn batch_loss<T: Real>(
    params: &NetworkParams<T>,
    objective: Objective,
    batch: &Batch<T>,
    noise: Option<&Noise<T>>,
    sign: SignConvention,
) -> Result<StepLoss> {
    let f = features(params, objective, batch, noise)?;
    let (a, b) = (f.slice_rows(0, batch.k), f.slice_rows(batch.k, 2 * batch.k));
    Ok(StepLoss {
        l_main: loss_main(&distance_matrix(&a, &b)?, sign)?.value,
        l_reg: loss_reg(&params.combine.weights),
    })
}

/// Loss of one batch and the gradient of [`total_loss`] w.r.t. all parameters.
pub fn loss_and_grad<T: Real>(
    params: &NetworkParams<T>,
    objective: Objective,
    batch: &Batch<T>,
    noise: Option<&Noise<T>>,
    lambda: f64,
    sign: SignConvention,
) -> Result<(StepLoss, NetworkParams<T>)> {
    let k = batch.k;
    let input = NetInput::Lumitexels(&batch.inputs);
    let backprop = |f: &Matrix<T>| -> Result<(f64, Matrix<T>)> {
        let (a, b) = (f.slice_rows(0, k), f.slice_rows(k, 2 * k));
        let d = distance_matrix(&a, &b)?;
        let loss = loss_main(&d, sign)?;
        let (da, db) = distance_backward(&a, &b, &d, &loss.grad_as())?;
        Ok((loss.value, da.vconcat(&db)?))
    };
    let l_reg = loss_reg(&params.combine.weights);
    match objective {
        Objective::Branch(which) => {
            let trace = params.forward_branch(which, input, &batch.views, noise)?;
            let (l_main, df) = backprop(trace.features())?;
            let grads = params.backward_branch(which, &trace, &df, input)?;
            Ok((StepLoss { l_main, l_reg }, grads))
        }
        Objective::Joint => {
            let trace = params.forward(input, &batch.views, noise)?;
            let (l_main, df) = backprop(&trace.output)?;
            let mut grads = params.backward(&trace, &df, input)?;
            let lam = T::of(lambda);
            let reg = loss_reg_backward(&params.combine.weights);
            for (g, s) in grads.combine.weights.as_mut_slice().iter_mut().zip(reg.as_slice()) {
                *g = *g + lam * *s;
            }
            Ok((StepLoss { l_main, l_reg }, grads))
        }
    }
}
