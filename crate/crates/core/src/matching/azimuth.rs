//! How much features change around the viewing axis.
//!
//! Each visible sphere point is binned by the angle between its normal and
//! the direction to the camera. Points in one band differ only in azimuth
//! about that direction, so the mean feature distance inside bands measures
//! azimuthal variation. It is reported relative to the mean distance over
//! all pairs, which makes networks with different feature scales comparable.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::features::FeatureMap;

use super::scene::SyntheticScene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AzimuthVariation {
    /// Mean distance between features of points in the same polar band.
    pub within_band: f64,
    /// Mean distance over all pairs of visible points.
    pub overall: f64,
    /// `within_band / overall`.
    pub relative: f64,
}

pub fn azimuth_variation(map: &FeatureMap, scene: &SyntheticScene, bands: usize) -> Result<AzimuthVariation> {
    if bands == 0 {
        return Err(contract("need at least one polar band"));
    }
    let v = scene.truth.view_index(map.theta)?;
    let view = scene.config.views()[v];
    let mut entries: Vec<(usize, usize)> = Vec::new();
    for (tp, point) in scene.truth.points.iter().zip(&scene.points) {
        let Some(xy) = tp.pixels[v] else { continue };
        let pixel = scene.truth.pixel_index(xy);
        if !map.mask[pixel] {
            continue;
        }
        let s = point.sample.rotated(view);
        let to_camera = (scene.camera - s.position).normalize();
        let polar = s.normal().dot(&to_camera).clamp(-1.0, 1.0).acos();
        let band = ((polar / FRAC_PI_2 * bands as f64) as usize).min(bands - 1);
        entries.push((pixel, band));
    }
    let (mut within, mut nw, mut all, mut na) = (0.0, 0usize, 0.0, 0usize);
    for (i, &(p, bp)) in entries.iter().enumerate() {
        for &(q, bq) in &entries[i + 1..] {
            let d: f64 = map
                .feature(p)
                .iter()
                .zip(map.feature(q))
                .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            all += d;
            na += 1;
            if bp == bq {
                within += d;
                nw += 1;
            }
        }
    }
    if nw == 0 || all == 0.0 {
        return Err(Error::Empty("too few visible points to compare azimuths".into()));
    }
    let (within_band, overall) = (within / nw as f64, all / na as f64);
    Ok(AzimuthVariation {
        within_band,
        overall,
        relative: within_band / overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightstage::LayoutConfig;
    use crate::matching::scene::{build_synthetic_scene, Measurer, SceneConfig};
    use crate::model::{NetworkConfig, NetworkParams};
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    fn scene() -> SyntheticScene {
        let cfg = NetworkConfig::lightstage(LayoutConfig::desk(), 1, 1);
        let net = NetworkParams::<f32>::init(cfg, &mut stream_rng(1, Stream::Init, 0, 0)).unwrap();
        build_synthetic_scene(
            &SceneConfig::sphere(300, vec![0.0, 0.5], 2),
            &Measurer::for_network(&net).unwrap(),
        )
        .unwrap()
    }

    fn map_from(scene: &SyntheticScene, f: impl Fn(usize, f64) -> f32) -> FeatureMap {
        let mut m = FeatureMap::new(scene.truth.height, scene.truth.width, 1, 0.0).unwrap();
        for (tp, p) in scene.truth.points.iter().zip(&scene.points) {
            if let Some(xy) = tp.pixels[0] {
                let px = scene.truth.pixel_index(xy);
                let cos = p.sample.normal().dot(&(scene.camera - p.sample.position).normalize());
                m.feature_mut(px)[0] = f(tp.id, cos);
                m.mask[px] = true;
            }
        }
        m
    }

    #[test]
    fn polar_only_features_have_little_azimuthal_variation() {
        let s = scene();
        let polar = azimuth_variation(&map_from(&s, |_, c| c as f32), &s, 12).unwrap();
        let mut rng = stream_rng(3, Stream::Eval, 0, 0);
        let noise: Vec<f32> = (0..300).map(|_| rng.random_range(0.0..1.0)).collect();
        let random = azimuth_variation(&map_from(&s, |id, _| noise[id]), &s, 12).unwrap();
        assert!(polar.relative < 0.2, "{polar:?}");
        assert!((random.relative - 1.0).abs() < 0.15, "{random:?}");
        assert!(azimuth_variation(&map_from(&s, |_, _| 1.0), &s, 12).is_err());
    }
}
