//! `LTX1` dataset container.
//!
//! ```text
//! "LTX1" | u32 version | u32 L | u64 record count
//! record: f32 θ, position[3], frame[9], rho_d, rho_s, alpha_x, alpha_y, L × f32 lumitexel
//! optional trailing "LAYT" layout section
//! ```
//!
//! All values are little-endian. The frame is stored column by column
//! (tangent, bitangent, normal). Files written by `synth` store each point as
//! two consecutive records, one per view.

use std::io::{Read, Write};

use crate::binio;
use crate::error::{format_err, Result};
use crate::lightstage::{LightstageLayout, Mat3, Vec3, ViewSpec};

use rayon::prelude::*;

use crate::rng::{stream_rng, Stream};

use super::brdf::GgxBrdfParams;
use super::render::{render_lumitexel, Lumitexel, SurfaceSample};
use super::sampling::{sample_training_point, SamplingConfig};

const VERSION: u32 = 1;
const RECORD_HEADER: usize = 1 + 3 + 9 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub view: ViewSpec,
    pub sample: SurfaceSample,
    pub params: GgxBrdfParams,
    pub lumitexel: Lumitexel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub lumitexel_len: usize,
    pub records: Vec<DatasetRecord>,
    pub layout: Option<LightstageLayout>,
}

pub fn write_dataset<W: Write>(
    w: &mut W,
    lumitexel_len: usize,
    records: &[DatasetRecord],
    layout: Option<&LightstageLayout>,
) -> Result<()> {
    binio::write_magic(w, b"LTX1")?;
    binio::write_u32(w, VERSION)?;
    binio::write_u32(w, lumitexel_len as u32)?;
    binio::write_u64(w, records.len() as u64)?;
    for rec in records {
        if rec.lumitexel.len() != lumitexel_len {
            return Err(format_err(
                "LTX1",
                format!(
                    "record has {} lumitexel entries, header says {lumitexel_len}",
                    rec.lumitexel.len()
                ),
            ));
        }
        binio::write_f32(w, rec.view.theta() as f32)?;
        binio::write_f32s(w, rec.sample.position.iter().map(|&x| x as f32))?;
        // nalgebra storage is column-major, which is the on-disk order.
        binio::write_f32s(w, rec.sample.frame.iter().map(|&x| x as f32))?;
        let p = &rec.params;
        binio::write_f32s(w, [p.rho_d, p.rho_s, p.alpha_x, p.alpha_y].map(|x| x as f32))?;
        binio::write_f32s(w, rec.lumitexel.values.iter().map(|&x| x as f32))?;
    }
    if let Some(layout) = layout {
        layout.write_section(w)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    binio::expect_magic(r, b"LTX1", "LTX1")?;
    let version = binio::read_u32(r)?;
    if version != VERSION {
        return Err(format_err("LTX1", format!("unsupported version {version}")));
    }
    let l = binio::read_u32(r)? as usize;
    let count = binio::read_u64(r)?;
    binio::checked_len("LTX1", &[count, (RECORD_HEADER + l) as u64])?;
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let head = binio::read_f32s(r, RECORD_HEADER)?;
        let lt = binio::read_f32s(r, l)?;
        let f = |i: usize| head[i] as f64;
        records.push(DatasetRecord {
            // The stored angle is already wrapped; keep it verbatim.
            view: ViewSpec::new(f(0)),
            sample: SurfaceSample {
                position: Vec3::new(f(1), f(2), f(3)),
                frame: Mat3::from_iterator((4..13).map(f)),
            },
            params: GgxBrdfParams {
                rho_d: f(13),
                rho_s: f(14),
                alpha_x: f(15),
                alpha_y: f(16),
            },
            lumitexel: Lumitexel {
                values: lt.into_iter().map(f64::from).collect(),
            },
        });
    }
    // Trailing layout section is optional.
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let layout = if rest.is_empty() {
        None
    } else {
        Some(LightstageLayout::read_section(&mut rest.as_slice())?)
    };
    Ok(Dataset {
        lumitexel_len: l,
        records,
        layout,
    })
}

/// Renders `points` fresh training points at two views each, as
/// consecutive record pairs. Point `i` draws from stream
/// `(seed, Sample, u64::MAX, i)`, apart from any training batch.
pub fn synthesize_dataset(
    layout: &LightstageLayout,
    sampling: &SamplingConfig,
    points: usize,
    seed: u64,
) -> Result<Dataset> {
    let camera = layout.camera_position();
    let pairs = (0..points)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, Stream::Sample, u64::MAX, i as u64);
            let tp = sample_training_point(&mut rng, sampling, &camera)?;
            let record = |view: ViewSpec| -> Result<DatasetRecord> {
                Ok(DatasetRecord {
                    view,
                    sample: tp.sample,
                    params: tp.params,
                    lumitexel: render_lumitexel(&tp.sample, view, layout, &camera, &tp.params)?,
                })
            };
            Ok([record(tp.view1)?, record(tp.view2)?])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        lumitexel_len: layout.len(),
        records: pairs.into_iter().flatten().collect(),
        layout: Some(layout.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightstage::{build_layout, LayoutConfig};
    use crate::rng::{stream_rng, Stream};
    use crate::shading::{render_lumitexel, sample_training_point, SamplingConfig};

    fn records(n: usize, layout: &LightstageLayout) -> Vec<DatasetRecord> {
        let camera = layout.camera_position();
        (0..n)
            .map(|i| {
                let mut rng = stream_rng(9, Stream::Sample, i as u64, 0);
                let tp = sample_training_point(&mut rng, &SamplingConfig::default(), &camera).unwrap();
                let lt = render_lumitexel(&tp.sample, tp.view1, layout, &camera, &tp.params).unwrap();
                DatasetRecord {
                    view: tp.view1,
                    sample: tp.sample,
                    params: tp.params,
                    lumitexel: lt,
                }
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let layout = build_layout(&LayoutConfig::desk()).unwrap();
        let recs = records(5, &layout);
        let mut buf = Vec::new();
        write_dataset(&mut buf, layout.len(), &recs, Some(&layout)).unwrap();
        assert_eq!(&buf[..4], b"LTX1");
        let ds = read_dataset(&mut buf.as_slice()).unwrap();
        assert_eq!(ds.records.len(), 5);
        assert_eq!(ds.layout.as_ref().unwrap().len(), 384);
        for (a, b) in recs.iter().zip(&ds.records) {
            for (x, y) in a.lumitexel.values.iter().zip(&b.lumitexel.values) {
                assert_eq!((*x as f32).to_bits(), (*y as f32).to_bits());
            }
        }
        let mut again = Vec::new();
        write_dataset(&mut again, ds.lumitexel_len, &ds.records, ds.layout.as_ref()).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let layout = build_layout(&LayoutConfig::desk()).unwrap();
        let recs = records(2, &layout);
        let mut buf = Vec::new();
        write_dataset(&mut buf, 384, &recs, None).unwrap();
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 384);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 20 + 2 * 4 * (17 + 384));
    }

    #[test]
    fn rejects_bad_magic_and_length() {
        assert!(read_dataset(&mut &b"XXXX\x01\0\0\0"[..]).is_err());
        let layout = build_layout(&LayoutConfig::desk()).unwrap();
        let recs = records(1, &layout);
        let mut buf = Vec::new();
        assert!(write_dataset(&mut buf, 10, &recs, None).is_err());
    }

    #[test]
    fn synthesized_records_come_in_view_pairs() {
        let layout = build_layout(&LayoutConfig::desk()).unwrap();
        let ds = synthesize_dataset(&layout, &SamplingConfig::default(), 6, 3).unwrap();
        assert_eq!(ds.records.len(), 12);
        for pair in ds.records.chunks(2) {
            assert_eq!(pair[0].sample, pair[1].sample);
            assert_ne!(pair[0].view, pair[1].view);
        }
        assert_eq!(
            synthesize_dataset(&layout, &SamplingConfig::default(), 6, 3).unwrap(),
            ds
        );
    }
}
