//! Checkpoints: the network tensors plus a `manifest` tensor holding the
//! JSON-encoded [`NetworkConfig`], one byte per value.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{format_err, Result};
use crate::netcore::{read_tensors, write_tensors, NamedTensor, Parameterized};

use super::config::NetworkConfig;
use super::network::NetworkParams;

const MANIFEST: &str = "manifest";

pub fn write_checkpoint<W: Write>(w: &mut W, params: &NetworkParams<f32>) -> Result<()> {
    let json = serde_json::to_vec(&params.config)?;
    let mut tensors = vec![NamedTensor::new(
        MANIFEST,
        vec![json.len()],
        json.iter().map(|&b| f32::from(b)).collect(),
    )];
    tensors.extend(
        params
            .tensors()
            .into_iter()
            .map(|t| NamedTensor::new(t.name, t.dims, t.data.to_vec())),
    );
    write_tensors(w, &tensors)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<NetworkParams<f32>> {
    let tensors = read_tensors(r)?;
    let (manifest, rest) = tensors
        .split_first()
        .filter(|(m, _)| m.name == MANIFEST)
        .ok_or_else(|| format_err("PFTC", "checkpoint has no manifest"))?;
    let bytes: Vec<u8> = manifest
        .data
        .iter()
        .map(|&v| {
            if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                Ok(v as u8)
            } else {
                Err(format_err("PFTC", "manifest is not a byte string"))
            }
        })
        .collect::<Result<_>>()?;
    let config: NetworkConfig = serde_json::from_slice(&bytes)?;
    let mut params = NetworkParams::zeros(config)?;
    let mut slots = params.tensors_mut();
    if slots.len() != rest.len() {
        return Err(format_err(
            "PFTC",
            format!("expected {} tensors, found {}", slots.len(), rest.len()),
        ));
    }
    for (slot, t) in slots.iter_mut().zip(rest) {
        if slot.name != t.name || slot.data.len() != t.data.len() {
            return Err(format_err(
                "PFTC",
                format!("tensor `{}` does not fit slot `{}`", t.name, slot.name),
            ));
        }
        slot.data.copy_from_slice(&t.data);
    }
    drop(slots);
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &NetworkParams<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams<f32>> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
