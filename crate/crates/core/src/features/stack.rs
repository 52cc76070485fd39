//! Per-pixel measurement stacks.
//!
//! `MSTK` layout (little-endian): magic, `u32` version, `u32` H, W, M, C,
//! `f32` θ, then H·W·C·M `f32` values ordered pixel-major (row, column), then
//! channel, then measurement, then H·W mask bytes (0 or 1).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{
    checked_len, expect_magic, read_bytes, read_f32, read_f32s, read_u32, write_f32, write_f32s, write_magic, write_u32,
};
use crate::error::{contract, format_err, Result};
use crate::lightstage::ViewSpec;

const MAGIC: &[u8; 4] = b"MSTK";
const VERSION: u32 = 1;

/// Recombined physical measurements of every pixel of one view.
///
/// For a light-stage network the `M` measurements of a pixel are the
/// sensitive-branch rows followed by the insensitive-branch rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStack {
    pub height: usize,
    pub width: usize,
    pub measurements: usize,
    pub channels: usize,
    pub theta: f32,
    pub data: Vec<f32>,
    pub mask: Vec<bool>,
}

impl MeasurementStack {
    /// An all-invalid stack of zeros.
    pub fn new(height: usize, width: usize, measurements: usize, channels: usize, theta: f32) -> Result<Self> {
        if height == 0 || width == 0 || measurements == 0 || channels == 0 {
            return Err(contract("measurement stack dimensions must be positive"));
        }
        Ok(Self {
            height,
            width,
            measurements,
            channels,
            theta,
            data: vec![0.0; height * width * channels * measurements],
            mask: vec![false; height * width],
        })
    }

    pub fn view(&self) -> ViewSpec {
        ViewSpec::new(self.theta as f64)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Values of pixel `p` (row-major index), channel-major.
    pub fn pixel(&self, p: usize) -> &[f32] {
        let n = self.channels * self.measurements;
        &self.data[p * n..(p + 1) * n]
    }

    pub fn pixel_mut(&mut self, p: usize) -> &mut [f32] {
        let n = self.channels * self.measurements;
        &mut self.data[p * n..(p + 1) * n]
    }

    pub fn channel(&self, p: usize, c: usize) -> &[f32] {
        let m = self.measurements;
        &self.pixel(p)[c * m..(c + 1) * m]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pixels();
        if self.mask.len() != n || self.data.len() != n * self.channels * self.measurements {
            return Err(contract("measurement stack buffers do not match its dimensions"));
        }
        for p in 0..n {
            if self.mask[p] && self.pixel(p).iter().any(|v| !v.is_finite()) {
                return Err(contract(format!("pixel {p} is valid but has non-finite measurements")));
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        self.validate()?;
        write_magic(w, MAGIC)?;
        write_u32(w, VERSION)?;
        for d in [self.height, self.width, self.measurements, self.channels] {
            write_u32(
                w,
                u32::try_from(d).map_err(|_| contract("stack dimension exceeds u32"))?,
            )?;
        }
        write_f32(w, self.theta)?;
        write_f32s(w, self.data.iter().copied())?;
        w.write_all(&self.mask.iter().map(|&m| m as u8).collect::<Vec<_>>())?;
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r, MAGIC, "MSTK")?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(format_err("MSTK", format!("unsupported version {version}")));
        }
        let dims: Vec<u64> = (0..4).map(|_| read_u32(r).map(u64::from)).collect::<Result<_>>()?;
        if dims.contains(&0) {
            return Err(format_err("MSTK", "zero dimension"));
        }
        let theta = read_f32(r)?;
        let values = checked_len("MSTK", &dims)?;
        let pixels = checked_len("MSTK", &dims[..2])?;
        let data = read_f32s(r, values)?;
        let mask = read_bytes(r, pixels)?
            .into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(format_err("MSTK", format!("mask byte {b}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let stack = Self {
            height: dims[0] as usize,
            width: dims[1] as usize,
            measurements: dims[2] as usize,
            channels: dims[3] as usize,
            theta,
            data,
            mask,
        };
        stack.validate().map_err(|e| format_err("MSTK", e.to_string()))?;
        Ok(stack)
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

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MeasurementStack {
        let mut s = MeasurementStack::new(2, 3, 4, 3, 0.7).unwrap();
        for (i, v) in s.data.iter_mut().enumerate() {
            *v = i as f32 * 0.37 - 5.0;
        }
        s.mask = vec![true, false, true, true, false, true];
        s
    }

    #[test]
    fn indexing() {
        let s = sample();
        assert_eq!(s.pixel(1).len(), 12);
        assert_eq!(s.channel(1, 2)[0], s.data[12 + 8]);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 16 + 4 + 72 * 4 + 6);
        let back = MeasurementStack::read(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(MeasurementStack::new(0, 1, 1, 1, 0.0).is_err());
        let mut buf = Vec::new();
        sample().write(&mut buf).unwrap();
        assert!(MeasurementStack::read(&mut &buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        *bad.last_mut().unwrap() = 7;
        assert!(MeasurementStack::read(&mut bad.as_slice()).is_err());
        bad = buf.clone();
        bad[0] = b'X';
        assert!(MeasurementStack::read(&mut bad.as_slice()).is_err());
        let mut s = sample();
        s.data[0] = f32::NAN;
        assert!(s.write(&mut Vec::new()).is_err());
    }
}
