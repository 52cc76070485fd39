//! Principal-component reduction of feature vectors.
//!
//! `PCAM` layout (little-endian): magic, `u32` version, `u32` input dim F,
//! `u32` output dim D, then F `f64` mean values, D·F `f64` component values
//! (row per component) and D `f64` explained variances.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rayon::prelude::*;

use crate::binio::{checked_len, expect_magic, read_f64s, read_u32, write_f64s, write_magic, write_u32};
use crate::error::{contract, format_err, Error, Result};
use crate::rng::{stream_rng, Stream};

use super::map::FeatureMap;

pub const DEFAULT_COMPONENTS: usize = 4;
/// Upper bound on the vectors a fit looks at.
pub const DEFAULT_MAX_SAMPLES: usize = 1_000_000;

const MAGIC: &[u8; 4] = b"PCAM";
const VERSION: u32 = 1;
/// Rows per partial sum; fixes the reduction order independent of threads.
const BLOCK: usize = 4096;
/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, by descending explained variance. The entry of
    /// largest magnitude in each row is positive.
    pub components: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    /// Fits `d` components to `n = data.len() / dim` row-major samples.
    pub fn fit(data: &[f64], dim: usize, d: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(contract("sample buffer is not a whole number of vectors"));
        }
        let n = data.len() / dim;
        if d == 0 || d > dim {
            return Err(contract(format!("cannot reduce {dim}-long vectors to {d} components")));
        }
        if n <= d {
            return Err(contract(format!("{n} samples cannot support {d} components")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(contract("samples must be finite"));
        }
        let blocks: Vec<&[f64]> = data.chunks(BLOCK * dim).collect();
        let sums: Vec<Vec<f64>> = blocks
            .par_iter()
            .map(|b| {
                let mut s = vec![0.0; dim];
                for row in b.chunks(dim) {
                    for (a, v) in s.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                s
            })
            .collect();
        let mut mean = vec![0.0; dim];
        for s in &sums {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let partial: Vec<DMatrix<f64>> = blocks
            .par_iter()
            .map(|b| {
                let rows = b.len() / dim;
                let centered = DMatrix::from_fn(rows, dim, |i, j| b[i * dim + j] - mean[j]);
                centered.transpose() * &centered
            })
            .collect();
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for p in &partial {
            cov += p;
        }
        cov /= (n - 1) as f64;

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let largest = eig.eigenvalues[order[0]].max(0.0);
        let rank = order
            .iter()
            .filter(|&&i| largest > 0.0 && eig.eigenvalues[i] > RANK_TOLERANCE * largest)
            .count();
        if d > rank {
            return Err(Error::RankDeficient {
                requested: d,
                achievable: rank,
            });
        }
        let mut components = Vec::with_capacity(d);
        let mut variances = Vec::with_capacity(d);
        for &i in &order[..d] {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = (0..dim)
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
                .expect("dim > 0");
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(v);
            variances.push(eig.eigenvalues[i]);
        }
        Ok(Self {
            mean,
            components,
            variances,
        })
    }

    /// `(x − mean)` expressed in the component basis.
    pub fn project_vector(&self, x: &[f32]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x)
                    .zip(&self.mean)
                    .map(|((w, &v), m)| w * (v as f64 - m))
                    .sum()
            })
            .collect()
    }

    /// `mean + Σ y_i · component_i`.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, &yi) in self.components.iter().zip(y) {
            for (a, w) in x.iter_mut().zip(c) {
                *a += yi * w;
            }
        }
        x
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        let f = self.input_dim();
        if self.components.iter().any(|c| c.len() != f) || self.variances.len() != self.output_dim() {
            return Err(contract("PCA model buffers are inconsistent"));
        }
        write_magic(w, MAGIC)?;
        write_u32(w, VERSION)?;
        write_u32(w, f as u32)?;
        write_u32(w, self.output_dim() as u32)?;
        write_f64s(w, self.mean.iter().copied())?;
        write_f64s(w, self.components.iter().flatten().copied())?;
        write_f64s(w, self.variances.iter().copied())?;
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r, MAGIC, "PCAM")?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(format_err("PCAM", format!("unsupported version {version}")));
        }
        let f = read_u32(r)? as u64;
        let d = read_u32(r)? as u64;
        if f == 0 || d == 0 || d > f {
            return Err(format_err("PCAM", format!("invalid dimensions {f} -> {d}")));
        }
        let mean = read_f64s(r, f as usize)?;
        let flat = read_f64s(r, checked_len("PCAM", &[f, d])?)?;
        let variances = read_f64s(r, d as usize)?;
        Ok(Self {
            mean,
            components: flat.chunks(f as usize).map(<[f64]>::to_vec).collect(),
            variances,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }
}

/// Valid feature vectors pooled over all maps, uniformly subsampled to at
/// most `max_samples` (ascending pooled order).
pub fn pooled_samples(maps: &[&FeatureMap], max_samples: usize, seed: u64) -> Result<(Vec<f64>, usize)> {
    let dim = maps.first().ok_or_else(|| Error::Empty("no feature maps".into()))?.dim;
    if maps.iter().any(|m| m.dim != dim) {
        return Err(contract("feature maps differ in feature length"));
    }
    let pooled: Vec<(usize, usize)> = maps
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| m.valid_pixels().into_iter().map(move |p| (mi, p)))
        .collect();
    if pooled.is_empty() {
        return Err(Error::Empty("feature maps have no valid pixels".into()));
    }
    let picked: Vec<usize> = if pooled.len() > max_samples {
        let mut idx = index::sample(&mut stream_rng(seed, Stream::Pca, 0, 0), pooled.len(), max_samples).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..pooled.len()).collect()
    };
    let mut data = Vec::with_capacity(picked.len() * dim);
    for i in picked {
        let (mi, p) = pooled[i];
        data.extend(maps[mi].feature(p).iter().map(|&v| v as f64));
    }
    Ok((data, dim))
}

/// Fits `d` components to the valid features of all maps.
pub fn fit_pca(maps: &[&FeatureMap], d: usize, max_samples: usize, seed: u64) -> Result<PcaModel> {
    let (data, dim) = pooled_samples(maps, max_samples, seed)?;
    PcaModel::fit(&data, dim, d)
}

/// Reduces every valid pixel of `map` to the model's components.
pub fn project(map: &FeatureMap, pca: &PcaModel) -> Result<FeatureMap> {
    if map.dim != pca.input_dim() {
        return Err(contract(format!(
            "map has {}-long features, the PCA model expects {}",
            map.dim,
            pca.input_dim()
        )));
    }
    let d = pca.output_dim();
    let mut out = FeatureMap::new(map.height, map.width, d, map.theta)?;
    out.mask.clone_from(&map.mask);
    out.data
        .par_chunks_mut(d)
        .enumerate()
        .filter(|(p, _)| map.mask[*p])
        .for_each(|(p, dst)| {
            for (o, v) in dst.iter_mut().zip(pca.project_vector(map.feature(p))) {
                *o = v as f32;
            }
        });
    Ok(out)
}
