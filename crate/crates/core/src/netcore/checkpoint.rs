//! `PFTC` named-tensor container.
//!
//! ```text
//! "PFTC" | u32 version | u32 tensor count
//! tensor: u32 name length | UTF-8 name | u32 rank | rank × u32 dims | f32 data
//! ```

use std::io::{Read, Write};

use crate::binio;
use crate::error::{format_err, Result};

const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            dims,
            data,
        }
    }
}

pub fn write_tensors<W: Write>(w: &mut W, tensors: &[NamedTensor]) -> Result<()> {
    binio::write_magic(w, b"PFTC")?;
    binio::write_u32(w, VERSION)?;
    binio::write_u32(w, tensors.len() as u32)?;
    for t in tensors {
        let expected: usize = t.dims.iter().product();
        if expected != t.data.len() {
            return Err(format_err(
                "PFTC",
                format!(
                    "tensor `{}` dims {:?} disagree with {} values",
                    t.name,
                    t.dims,
                    t.data.len()
                ),
            ));
        }
        binio::write_u32(w, t.name.len() as u32)?;
        w.write_all(t.name.as_bytes())?;
        binio::write_u32(w, t.dims.len() as u32)?;
        for &d in &t.dims {
            binio::write_u32(w, d as u32)?;
        }
        binio::write_f32s(w, t.data.iter().copied())?;
    }
    Ok(())
}

pub fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<NamedTensor>> {
    binio::expect_magic(r, b"PFTC", "PFTC")?;
    let version = binio::read_u32(r)?;
    if version != VERSION {
        return Err(format_err("PFTC", format!("unsupported version {version}")));
    }
    let count = binio::read_u32(r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = binio::read_u32(r)? as usize;
        if name_len > 4096 {
            return Err(format_err("PFTC", "tensor name too long"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| format_err("PFTC", e.to_string()))?;
        let rank = binio::read_u32(r)? as usize;
        if rank > 8 {
            return Err(format_err("PFTC", format!("tensor `{name}` has rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| binio::read_u32(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = binio::checked_len("PFTC", &dims.iter().map(|&d| d as u64).collect::<Vec<_>>())?;
        let data = binio::read_f32s(r, len)?;
        out.push(NamedTensor { name, dims, data });
    }
    Ok(out)
}
