use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{contract, Error, Result};
use crate::lightstage::{build_layout, LightstageLayout, Vec3, ViewSpec};
use crate::model::{encode_views, Mode, NetworkConfig, Noise};
use crate::netcore::{Matrix, Real};
use crate::pointlight::{render_pointlight_vector, LightMask, PointLightRig};
use crate::rng::{stream_rng, Stream};
use crate::shading::{render_lumitexel, sample_training_point, Dataset, DatasetRecord, SamplingConfig};

/// `k` points seen from two views. Rows `0..k` hold the first view of each
/// point and rows `k..2k` the second view, in the same point order.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub inputs: Matrix<T>,
    pub views: Matrix<T>,
    pub k: usize,
}

impl<T: Real> Batch<T> {
    pub fn cast<U: Real>(&self) -> Batch<U> {
        Batch {
            inputs: self.inputs.cast(),
            views: self.views.cast(),
            k: self.k,
        }
    }

    fn from_pairs(k: usize, len: usize, pairs: Vec<((Vec<f64>, ViewSpec), (Vec<f64>, ViewSpec))>) -> Self {
        let mut data = Vec::with_capacity(2 * k * len);
        let mut views = Vec::with_capacity(2 * k);
        for (first, _) in &pairs {
            data.extend(first.0.iter().map(|&v| T::of(v)));
            views.push(first.1);
        }
        for (_, second) in &pairs {
            data.extend(second.0.iter().map(|&v| T::of(v)));
            views.push(second.1);
        }
        Self {
            inputs: Matrix::from_vec(2 * k, len, data).expect("sized"),
            views: encode_views(&views),
            k,
        }
    }
}

/// Supplies training batches. Batch `index` is a pure function of the
/// source and the index.
pub trait BatchSource: Sync {
    fn mode(&self) -> Mode;
    fn input_len(&self) -> usize;
    fn batch(&self, index: u64, k: usize) -> Result<Batch<f64>>;
}

/// Fresh GGX points rendered under the light-stage layout.
#[derive(Debug, Clone)]
pub struct SyntheticLightstage {
    pub layout: LightstageLayout,
    pub camera: Vec3,
    pub sampling: SamplingConfig,
    pub seed: u64,
}

impl SyntheticLightstage {
    pub fn new(layout: LightstageLayout, sampling: SamplingConfig, seed: u64) -> Result<Self> {
        sampling.validate()?;
        Ok(Self {
            camera: layout.camera_position(),
            layout,
            sampling,
            seed,
        })
    }

    pub fn from_network(config: &NetworkConfig, sampling: SamplingConfig, seed: u64) -> Result<Self> {
        let layout = config
            .layout
            .ok_or_else(|| contract("light-stage network has no layout"))?;
        Self::new(build_layout(&layout)?, sampling, seed)
    }
}

impl BatchSource for SyntheticLightstage {
    fn mode(&self) -> Mode {
        Mode::Lightstage
    }

    fn input_len(&self) -> usize {
        self.layout.len()
    }

    fn batch(&self, index: u64, k: usize) -> Result<Batch<f64>> {
        let pairs = (0..k)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(self.seed, Stream::Sample, index, i as u64);
                let tp = sample_training_point(&mut rng, &self.sampling, &self.camera)?;
                let render = |v: ViewSpec| {
                    render_lumitexel(&tp.sample, v, &self.layout, &self.camera, &tp.params).map(|lt| (lt.values, v))
                };
                Ok((render(tp.view1)?, render(tp.view2)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch::from_pairs(k, self.input_len(), pairs))
    }
}

/// Fresh GGX points observed under a point-light rig, optionally with some
/// lights switched off.
#[derive(Debug, Clone)]
pub struct SyntheticPointlight {
    pub rig: PointLightRig,
    pub mask: LightMask,
    pub camera: Vec3,
    pub sampling: SamplingConfig,
    pub seed: u64,
}

impl SyntheticPointlight {
    pub fn new(rig: PointLightRig, camera: Vec3, sampling: SamplingConfig, seed: u64) -> Result<Self> {
        sampling.validate()?;
        Ok(Self {
            mask: LightMask::all(rig.len()),
            rig,
            camera,
            sampling,
            seed,
        })
    }

    pub fn with_mask(mut self, mask: LightMask) -> Result<Self> {
        if mask.active.len() != self.rig.len() {
            return Err(contract("light mask length differs from the rig"));
        }
        self.mask = mask;
        Ok(self)
    }
}

impl BatchSource for SyntheticPointlight {
    fn mode(&self) -> Mode {
        Mode::Pointlight
    }

    fn input_len(&self) -> usize {
        self.rig.len()
    }

    fn batch(&self, index: u64, k: usize) -> Result<Batch<f64>> {
        let pairs = (0..k)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(self.seed, Stream::Sample, index, i as u64);
                let tp = sample_training_point(&mut rng, &self.sampling, &self.camera)?;
                let render = |v: ViewSpec| {
                    render_pointlight_vector(&tp.sample, v, &self.rig, &self.camera, &tp.params).map(|mut m| {
                        self.mask.apply(&mut m);
                        (m, v)
                    })
                };
                Ok((render(tp.view1)?, render(tp.view2)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch::from_pairs(k, self.input_len(), pairs))
    }
}

/// Batches drawn from a stored `LTX1` dataset whose records come in view
/// pairs of the same point.
#[derive(Debug, Clone)]
pub struct DatasetSource {
    pairs: Vec<(DatasetRecord, DatasetRecord)>,
    len: usize,
    seed: u64,
}

impl DatasetSource {
    pub fn new(dataset: Dataset, seed: u64) -> Result<Self> {
        if dataset.records.len() < 2 || dataset.records.len() % 2 != 0 {
            return Err(contract("dataset must hold an even number (>= 2) of records"));
        }
        let mut pairs = Vec::with_capacity(dataset.records.len() / 2);
        let mut it = dataset.records.into_iter();
        while let (Some(a), Some(b)) = (it.next(), it.next()) {
            if a.sample != b.sample || a.params != b.params {
                return Err(contract("consecutive dataset records are not views of one point"));
            }
            pairs.push((a, b));
        }
        Ok(Self {
            pairs,
            len: dataset.lumitexel_len,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl BatchSource for DatasetSource {
    fn mode(&self) -> Mode {
        Mode::Lightstage
    }

    fn input_len(&self) -> usize {
        self.len
    }

    fn batch(&self, index: u64, k: usize) -> Result<Batch<f64>> {
        if k > self.pairs.len() {
            return Err(Error::Config(format!(
                "batch size {k} exceeds the {} points in the dataset",
                self.pairs.len()
            )));
        }
        let mut rng = stream_rng(self.seed, Stream::Sample, index, 0);
        let picked = index::sample(&mut rng, self.pairs.len(), k);
        let pairs = picked
            .iter()
            .map(|i| {
                let (a, b) = &self.pairs[i];
                (
                    (a.lumitexel.values.clone(), a.view),
                    (b.lumitexel.values.clone(), b.view),
                )
            })
            .collect();
        Ok(Batch::from_pairs(k, self.len, pairs))
    }
}

/// Multiplies each entry by an independent draw from `Normal(1, sigma)`.
pub fn apply_noise<T: Real, R: Rng + ?Sized>(values: &mut [T], rng: &mut R, sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) {
        return Err(Error::Config("noise sigma must be >= 0".into()));
    }
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(1.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    for v in values {
        *v = *v * T::of(normal.sample(rng));
    }
    Ok(())
}

/// Noise factors for one batch of `rows` samples. In point-light mode both
/// branches see the same measurements and therefore the same factors.
pub fn batch_noise<T: Real>(
    config: &NetworkConfig,
    rows: usize,
    sigma: f64,
    seed: u64,
    index: u64,
) -> Result<Option<Noise<T>>> {
    if sigma == 0.0 {
        return Ok(None);
    }
    let mut rng = stream_rng(seed, Stream::Noise, index, 0);
    let mut factors = |cols: usize| -> Result<Matrix<T>> {
        let mut m = Matrix::from_vec(rows, cols, vec![T::one(); rows * cols])?;
        apply_noise(m.as_mut_slice(), &mut rng, sigma)?;
        Ok(m)
    };
    let sensitive = factors(config.sensitive.measurements)?;
    let insensitive = match config.mode {
        Mode::Pointlight => sensitive.clone(),
        Mode::Lightstage => factors(config.insensitive.measurements)?,
    };
    Ok(Some(Noise { sensitive, insensitive }))
}
