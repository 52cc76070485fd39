//! Per-pixel feature grids.
//!
//! `FMAP` layout (little-endian): magic, `u32` version, `u32` H, W, D,
//! `f32` θ, then H·W·D `f32` values row-major, then H·W mask bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{
    checked_len, expect_magic, read_bytes, read_f32, read_f32s, read_u32, write_f32, write_f32s, write_magic, write_u32,
};
use crate::error::{contract, format_err, Result};
use crate::lightstage::ViewSpec;

const MAGIC: &[u8; 4] = b"FMAP";
const VERSION: u32 = 1;

/// An H×W grid of D-long features. Invalid pixels hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub theta: f32,
    pub data: Vec<f32>,
    pub mask: Vec<bool>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, dim: usize, theta: f32) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(contract("feature map dimensions must be positive"));
        }
        Ok(Self {
            height,
            width,
            dim,
            theta,
            data: vec![0.0; height * width * dim],
            mask: vec![false; height * width],
        })
    }

    pub fn view(&self) -> ViewSpec {
        ViewSpec::new(self.theta as f64)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn feature(&self, p: usize) -> &[f32] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    pub fn feature_mut(&mut self, p: usize) -> &mut [f32] {
        &mut self.data[p * self.dim..(p + 1) * self.dim]
    }

    /// Indices of valid pixels, ascending.
    pub fn valid_pixels(&self) -> Vec<usize> {
        (0..self.pixels()).filter(|&p| self.mask[p]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pixels();
        if self.mask.len() != n || self.data.len() != n * self.dim {
            return Err(contract("feature map buffers do not match its dimensions"));
        }
        for p in 0..n {
            if self.mask[p] && self.feature(p).iter().any(|v| !v.is_finite()) {
                return Err(contract(format!("pixel {p} is valid but has a non-finite feature")));
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        self.validate()?;
        write_magic(w, MAGIC)?;
        write_u32(w, VERSION)?;
        for d in [self.height, self.width, self.dim] {
            write_u32(w, u32::try_from(d).map_err(|_| contract("map dimension exceeds u32"))?)?;
        }
        write_f32(w, self.theta)?;
        write_f32s(w, self.data.iter().copied())?;
        w.write_all(&self.mask.iter().map(|&m| m as u8).collect::<Vec<_>>())?;
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r, MAGIC, "FMAP")?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(format_err("FMAP", format!("unsupported version {version}")));
        }
        let dims: Vec<u64> = (0..3).map(|_| read_u32(r).map(u64::from)).collect::<Result<_>>()?;
        if dims.contains(&0) {
            return Err(format_err("FMAP", "zero dimension"));
        }
        let theta = read_f32(r)?;
        let data = read_f32s(r, checked_len("FMAP", &dims)?)?;
        let mask = read_bytes(r, checked_len("FMAP", &dims[..2])?)?
            .into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(format_err("FMAP", format!("mask byte {b}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let map = Self {
            height: dims[0] as usize,
            width: dims[1] as usize,
            dim: dims[2] as usize,
            theta,
            data,
            mask,
        };
        map.validate().map_err(|e| format_err("FMAP", e.to_string()))?;
        Ok(map)
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
