//! Finite-difference verification of the full network gradient.
//!
//! The parameters, batch and noise are rounded to single precision once, so
//! the same double-precision numeric gradient serves as reference for both
//! the double- and the single-precision analytic gradient.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NetInput, NetworkConfig, NetworkParams, Noise};
use crate::netcore::gradcheck::{compare, numeric_gradient};
use crate::netcore::{GradCheckConfig, GradCheckReport};
use crate::objective::SignConvention;
use crate::rng::{stream_rng, Stream};

use super::source::{batch_noise, Batch, BatchSource};
use super::step::{batch_loss, loss_and_grad, Objective};

/// Smallest accepted distance of any rectifier input from its kink.
const MIN_MARGIN: f64 = 2e-4;
const MAX_ATTEMPTS: u64 = 200;
const SINGLE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct ModelGradCheck {
    pub double: GradCheckReport,
    pub single: GradCheckReport,
    /// Index of the draw whose activations cleared the kink margin.
    pub attempt: u64,
    pub activation_margin: f64,
    pub parameters: usize,
    pub wall_time_s: f64,
}

impl ModelGradCheck {
    pub fn passed(&self) -> bool {
        self.double.passed() && self.single.passed()
    }
}

fn round_trip_f32(p: &NetworkParams<f64>) -> NetworkParams<f64> {
    p.cast::<f32>().cast()
}

/// Compares analytic against numeric gradients of the joint loss on a small
/// batch of `k` points. Tolerances: 1e-7 in double and 1e-4 in single
/// precision.
pub fn check_model_gradients<S: BatchSource + ?Sized>(
    config: NetworkConfig,
    source: &S,
    k: usize,
    sigma: f64,
    lambda: f64,
    seed: u64,
) -> Result<ModelGradCheck> {
    let start = Instant::now();
    let fd = GradCheckConfig::default();
    let sign = SignConvention::Similarity;

    let mut chosen = None;
    for attempt in 0..MAX_ATTEMPTS {
        let params = round_trip_f32(&NetworkParams::<f64>::init(
            config.clone(),
            &mut stream_rng(seed, Stream::Init, attempt, 1),
        )?);
        let batch: Batch<f64> = source.batch(attempt, k)?.cast::<f32>().cast();
        let noise = batch_noise::<f32>(&config, 2 * k, sigma, seed, attempt)?.map(|n| Noise {
            sensitive: n.sensitive.cast::<f64>(),
            insensitive: n.insensitive.cast::<f64>(),
        });
        let trace = params.forward(NetInput::Lumitexels(&batch.inputs), &batch.views, noise.as_ref())?;
        let weight_margin = params
            .combine
            .weights
            .as_slice()
            .iter()
            .fold(f64::INFINITY, |m, w| m.min(w.abs()));
        let margin = trace
            .sensitive
            .activation_margin()
            .min(trace.insensitive.activation_margin())
            .min(weight_margin);
        if margin >= MIN_MARGIN && trace.valid().iter().all(|&v| v) {
            chosen = Some((attempt, margin, params, batch, noise));
            break;
        }
    }
    let (attempt, margin, mut params, batch, noise) = chosen.ok_or_else(|| Error::Sampling {
        attempts: MAX_ATTEMPTS as usize,
        reason: "no draw kept every activation away from its kink".into(),
    })?;

    let (_, grad64) = loss_and_grad(&params, Objective::Joint, &batch, noise.as_ref(), lambda, sign)?;
    let params32 = params.cast::<f32>();
    let batch32 = batch.cast::<f32>();
    let noise32 = noise.as_ref().map(|n| Noise {
        sensitive: n.sensitive.cast::<f32>(),
        insensitive: n.insensitive.cast::<f32>(),
    });
    let (_, grad32) = loss_and_grad(&params32, Objective::Joint, &batch32, noise32.as_ref(), lambda, sign)?;

    // The regularizer is evaluated relative to the starting weights: only the
    // perturbed entry contributes, which keeps its summation roundoff out of
    // the difference quotients.
    let w0 = params.combine.weights.clone();
    let numeric = numeric_gradient(&mut params, fd.step, |p| {
        let reg: f64 = p
            .combine
            .weights
            .as_slice()
            .iter()
            .zip(w0.as_slice())
            .map(|(w, r)| w.abs() - r.abs())
            .sum();
        batch_loss(p, Objective::Joint, &batch, noise.as_ref(), sign)
            .map(|l| l.l_main + lambda * reg)
            .unwrap_or(f64::NAN)
    });
    Ok(ModelGradCheck {
        double: compare(&grad64, &numeric, fd.tolerance, fd.scale_floor),
        single: compare(&grad32, &numeric, SINGLE_TOLERANCE, fd.scale_floor),
        attempt,
        activation_margin: margin,
        parameters: params.parameter_count(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
