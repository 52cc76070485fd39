//! Physical realization of learned lighting patterns.
//!
//! A learned pattern row is signed, but an emitter can only be driven with a
//! non-negative intensity. Each row is therefore shown as two non-negative
//! patterns whose measurements are subtracted and rescaled.
//!
//! Pattern files are CSV with header `pattern_id,kind,scale,w_0,…,w_{L−1}`.
//! Every learned row contributes a `pos` line followed by a `neg` line;
//! intensity-sensitive rows come first.

use std::io::{Read, Write};

use crate::error::{format_err, Error, Result};
use crate::model::NetworkParams;
use crate::netcore::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalPatternPair {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    pub scale: f64,
}

impl PhysicalPatternPair {
    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }

    /// `scale · (positive − negative)`.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.positive
            .iter()
            .zip(&self.negative)
            .map(|(p, n)| self.scale * (p - n))
            .collect()
    }
}

/// Splits a signed row into non-negative parts normalized by its largest
/// magnitude.
pub fn split_pattern(row: &[f64]) -> Result<PhysicalPatternPair> {
    let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Export(format!(
            "pattern row must have a finite non-zero entry (max |w| = {scale})"
        )));
    }
    Ok(PhysicalPatternPair {
        positive: row.iter().map(|&w| w.max(0.0) / scale).collect(),
        negative: row.iter().map(|&w| (-w).max(0.0) / scale).collect(),
        scale,
    })
}

/// The measurement obtained by capturing under both patterns and combining:
/// `scale · (⟨pos, c⟩ − ⟨neg, c⟩)`.
pub fn simulate_capture(lumitexel: &[f64], pair: &PhysicalPatternPair) -> Result<f64> {
    if lumitexel.len() != pair.len() {
        return Err(format_err(
            "pattern",
            format!("lumitexel has {} entries, pattern {}", lumitexel.len(), pair.len()),
        ));
    }
    let dot = |w: &[f64]| w.iter().zip(lumitexel).map(|(a, b)| a * b).sum::<f64>();
    Ok(pair.scale * (dot(&pair.positive) - dot(&pair.negative)))
}

/// Splits every pattern row of a light-stage network, sensitive rows first.
pub fn export_patterns<T: Real>(params: &NetworkParams<T>) -> Result<Vec<PhysicalPatternPair>> {
    let rows = params.pattern_rows();
    if rows.is_empty() {
        return Err(Error::Export("network has no pattern layers".into()));
    }
    rows.into_iter()
        .map(|(_, row)| {
            let row: Vec<f64> = row.iter().map(|v| v.to_f64_lossy()).collect();
            split_pattern(&row)
        })
        .collect()
}

pub fn write_patterns_csv<W: Write>(w: W, pairs: &[PhysicalPatternPair]) -> Result<()> {
    let l = pairs.first().map_or(0, PhysicalPatternPair::len);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["pattern_id".to_string(), "kind".into(), "scale".into()];
    header.extend((0..l).map(|i| format!("w_{i}")));
    out.write_record(&header).map_err(csv_err)?;
    for (id, pair) in pairs.iter().enumerate() {
        if pair.len() != l {
            return Err(Error::Export("patterns differ in length".into()));
        }
        for (kind, values) in [("pos", &pair.positive), ("neg", &pair.negative)] {
            let mut rec = vec![id.to_string(), kind.to_string(), pair.scale.to_string()];
            rec.extend(values.iter().map(f64::to_string));
            out.write_record(&rec).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_patterns_csv<R: Read>(r: R) -> Result<Vec<PhysicalPatternPair>> {
    let mut input = csv::Reader::from_reader(r);
    let header = input.headers().map_err(csv_err)?.clone();
    if header.len() < 3 || &header[0] != "pattern_id" || &header[1] != "kind" || &header[2] != "scale" {
        return Err(format_err("pattern CSV", "unexpected header"));
    }
    let l = header.len() - 3;
    let mut pairs: Vec<PhysicalPatternPair> = Vec::new();
    let mut pending: Option<(usize, f64, Vec<f64>)> = None;
    for rec in input.records() {
        let rec = rec.map_err(csv_err)?;
        let id: usize = parse(&rec[0])?;
        let scale: f64 = parse(&rec[2])?;
        let values = rec.iter().skip(3).map(parse::<f64>).collect::<Result<Vec<_>>>()?;
        if values.len() != l || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format_err("pattern CSV", format!("pattern {id} has invalid values")));
        }
        match (&rec[1], pending.take()) {
            ("pos", None) if id == pairs.len() => pending = Some((id, scale, values)),
            ("neg", Some((pid, pscale, positive))) if pid == id && pscale == scale => pairs.push(PhysicalPatternPair {
                positive,
                negative: values,
                scale,
            }),
            _ => {
                return Err(format_err(
                    "pattern CSV",
                    format!("pattern {id}: expected a pos line followed by its neg line"),
                ))
            }
        }
    }
    if pending.is_some() {
        return Err(format_err("pattern CSV", "last pattern has no neg line"));
    }
    Ok(pairs)
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| format_err("pattern CSV", format!("cannot parse `{s}`")))
}

fn csv_err(e: csv::Error) -> Error {
    format_err("pattern CSV", e.to_string())
}
