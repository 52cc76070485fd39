//! Running the trained transform over every pixel of a measurement stack.

use rayon::prelude::*;

use crate::error::{contract, Result};
use crate::model::{encode_views, Mode, NetInput, NetworkParams, Which};
use crate::netcore::Matrix;

use super::map::FeatureMap;
use super::stack::MeasurementStack;

/// Pixels per forward pass.
const CHUNK: usize = 1024;

/// Checks that the stack carries the measurements the network consumes.
pub fn check_compatible(stack: &MeasurementStack, params: &NetworkParams<f32>) -> Result<()> {
    let want = match params.config.mode {
        Mode::Lightstage => params.config.measurement_budget(),
        Mode::Pointlight => params.config.input_len,
    };
    if stack.measurements != want {
        return Err(contract(format!(
            "stack has {} measurements per channel, the {} network expects {want}",
            stack.measurements,
            params.config.mode.as_str()
        )));
    }
    Ok(())
}

/// Which network output a feature map holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureOutput {
    /// The final combined feature.
    #[default]
    Combined,
    /// One branch's unit feature.
    Branch(Which),
}

impl FeatureOutput {
    pub fn feature_len(self, params: &NetworkParams<f32>) -> usize {
        match self {
            Self::Combined => params.config.feature_len,
            Self::Branch(which) => params.branch_config(which).feature_len,
        }
    }
}

/// Per-channel final features of every valid pixel, concatenated in channel
/// order into F·C-long vectors. Pixels the network flags invalid in any
/// channel become invalid.
pub fn extract(stack: &MeasurementStack, params: &NetworkParams<f32>) -> Result<FeatureMap> {
    extract_with(stack, params, FeatureOutput::Combined)
}

/// [`extract`] for any network output.
pub fn extract_with(
    stack: &MeasurementStack,
    params: &NetworkParams<f32>,
    output: FeatureOutput,
) -> Result<FeatureMap> {
    stack.validate()?;
    check_compatible(stack, params)?;
    let f = output.feature_len(params);
    let c = stack.channels;
    let mut map = FeatureMap::new(stack.height, stack.width, f * c, stack.theta)?;
    let pixels: Vec<usize> = (0..stack.pixels()).filter(|&p| stack.mask[p]).collect();
    let views = encode_views::<f32>(&vec![stack.view(); CHUNK]);
    let chunks: Vec<Vec<(usize, Option<Vec<f32>>)>> = pixels
        .par_chunks(CHUNK)
        .map(|chunk| extract_chunk(stack, params, output, chunk, &views))
        .collect::<Result<_>>()?;
    for (p, feature) in chunks.into_iter().flatten() {
        if let Some(v) = feature {
            map.feature_mut(p).copy_from_slice(&v);
            map.mask[p] = true;
        }
    }
    Ok(map)
}

fn extract_chunk(
    stack: &MeasurementStack,
    params: &NetworkParams<f32>,
    output: FeatureOutput,
    pixels: &[usize],
    views: &Matrix<f32>,
) -> Result<Vec<(usize, Option<Vec<f32>>)>> {
    let n = pixels.len();
    let m = stack.measurements;
    let f = output.feature_len(params);
    let views = views.slice_rows(0, n);
    let mut out: Vec<(usize, Option<Vec<f32>>)> = pixels
        .iter()
        .map(|&p| (p, Some(Vec::with_capacity(f * stack.channels))))
        .collect();
    for ch in 0..stack.channels {
        let mut data = Vec::with_capacity(n * m);
        for &p in pixels {
            data.extend_from_slice(stack.channel(p, ch));
        }
        let x = Matrix::from_vec(n, m, data)?;
        let split;
        let input = match params.config.mode {
            Mode::Pointlight => NetInput::Lumitexels(&x),
            Mode::Lightstage => {
                split = x.hsplit(params.config.sensitive.measurements);
                NetInput::Measurements {
                    sensitive: &split.0,
                    insensitive: &split.1,
                }
            }
        };
        let (features, valid) = match output {
            FeatureOutput::Combined => params.forward_combined(input, &views)?,
            FeatureOutput::Branch(Which::Sensitive) => params.forward_sensitive(input, &views)?,
            FeatureOutput::Branch(Which::Insensitive) => params.forward_insensitive(input, &views)?,
        };
        for (i, slot) in out.iter_mut().enumerate() {
            let ok = valid[i] && features.row(i).iter().all(|v| v.is_finite());
            match (&mut slot.1, ok) {
                (Some(v), true) => v.extend_from_slice(features.row(i)),
                (s, _) => *s = None,
            }
        }
    }
    Ok(out)
}
