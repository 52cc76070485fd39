//! False-color rendering of feature maps.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};

use super::map::FeatureMap;
use super::pca::{pooled_samples, project, PcaModel};

/// Byte used for a channel that takes a single value over the valid pixels.
pub const MID_GRAY: u8 = 128;

/// Reduces a map to three channels with its own principal components (fewer
/// if the valid features span fewer dimensions; maps with at most three
/// channels are used as they are) and renders it with [`render_channels`].
pub fn visualize(map: &FeatureMap) -> Result<RgbImage> {
    if map.dim <= 3 {
        return render_channels(map);
    }
    let (data, dim) = pooled_samples(&[map], usize::MAX, 0)?;
    let n = data.len() / dim;
    let mut d = 3.min(n.saturating_sub(1));
    loop {
        if d == 0 {
            // No spread at all: every channel is constant.
            let mut flat = FeatureMap::new(map.height, map.width, 1, map.theta)?;
            flat.mask.clone_from(&map.mask);
            return render_channels(&flat);
        }
        match PcaModel::fit(&data, dim, d) {
            Ok(pca) => return render_channels(&project(map, &pca)?),
            Err(Error::RankDeficient { achievable, .. }) => d = achievable,
            Err(e) => return Err(e),
        }
    }
}

/// Renders a map through a shared basis, so several views use one coloring
/// basis (each image is still rescaled on its own).
pub fn visualize_with(map: &FeatureMap, pca: &PcaModel) -> Result<RgbImage> {
    let reduced = project(map, pca)?;
    if reduced.dim <= 3 {
        return render_channels(&reduced);
    }
    let mut first3 = FeatureMap::new(map.height, map.width, 3, map.theta)?;
    first3.mask.clone_from(&reduced.mask);
    for p in 0..reduced.pixels() {
        first3.feature_mut(p).copy_from_slice(&reduced.feature(p)[..3]);
    }
    render_channels(&first3)
}

/// Maps the first three channels to R, G, B, each min-max rescaled over the
/// valid pixels. Missing or constant channels render as [`MID_GRAY`];
/// invalid pixels are black.
pub fn render_channels(map: &FeatureMap) -> Result<RgbImage> {
    map.validate()?;
    let valid = map.valid_pixels();
    if valid.is_empty() {
        return Err(Error::Empty("feature map has no valid pixels".into()));
    }
    let ranges: Vec<Option<(f64, f64)>> = (0..3)
        .map(|c| {
            if c >= map.dim {
                return None;
            }
            let (lo, hi) = valid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                let v = map.feature(p)[c] as f64;
                (lo.min(v), hi.max(v))
            });
            (hi > lo).then_some((lo, hi))
        })
        .collect();
    let mut img = RgbImage::new(map.width as u32, map.height as u32);
    for &p in &valid {
        let f = map.feature(p);
        let mut px = [MID_GRAY; 3];
        for (c, r) in ranges.iter().enumerate() {
            if let Some((lo, hi)) = r {
                px[c] = ((f[c] as f64 - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        img.put_pixel((p % map.width) as u32, (p / map.width) as u32, Rgb(px));
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map_is_mid_gray() {
        let mut m = FeatureMap::new(2, 3, 5, 0.0).unwrap();
        m.mask = vec![true; 6];
        m.data.iter_mut().for_each(|v| *v = 0.3);
        let img = visualize(&m).unwrap();
        assert!(img.pixels().all(|p| p.0 == [MID_GRAY; 3]));
    }

    #[test]
    fn two_distinct_pixels_hit_the_extremes() {
        let mut m = FeatureMap::new(1, 3, 4, 0.0).unwrap();
        m.mask = vec![true, false, true];
        m.feature_mut(0).copy_from_slice(&[1.0, 0.0, 0.0, 2.0]);
        m.feature_mut(2).copy_from_slice(&[0.0, 1.0, -1.0, 0.5]);
        let img = visualize(&m).unwrap();
        let (a, b) = (img.get_pixel(0, 0).0, img.get_pixel(2, 0).0);
        assert_eq!([a[0].min(b[0]), a[0].max(b[0])], [0, 255]);
        assert_eq!(img.get_pixel(1, 0).0, [0, 0, 0]);
        // One direction of spread: the other channels are degenerate.
        assert_eq!(a[1], MID_GRAY);
        assert_eq!(b[2], MID_GRAY);
    }

    #[test]
    fn low_dimensional_maps_render_directly() {
        let mut m = FeatureMap::new(2, 1, 2, 0.0).unwrap();
        m.mask = vec![true, true];
        m.data = vec![0.0, 5.0, 1.0, 5.0];
        let img = render_channels(&m).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, [0, MID_GRAY, MID_GRAY]);
        assert_eq!(img.get_pixel(0, 1).0, [255, MID_GRAY, MID_GRAY]);
        let empty = FeatureMap::new(1, 1, 2, 0.0).unwrap();
        assert!(render_channels(&empty).is_err());
    }

    #[test]
    fn png_is_written() {
        let mut m = FeatureMap::new(4, 4, 6, 0.0).unwrap();
        for p in 0..16 {
            m.mask[p] = true;
            for (j, v) in m.feature_mut(p).iter_mut().enumerate() {
                *v = ((p * 7 + j * 3) % 11) as f32;
            }
        }
        let img = visualize(&m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        save_png(&img, &path).unwrap();
        let back = image::open(&path).unwrap().to_rgb8();
        assert_eq!(back, img);
    }
}
