use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightstage::{Mat3, Vec3, ViewSpec};

use super::brdf::GgxBrdfParams;
use super::render::SurfaceSample;

/// How training view angles are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewDistribution {
    /// `count` equally spaced turntable stops.
    Discrete { count: usize },
    /// Uniform on `[0, 2π)`.
    Continuous,
    /// An explicit list of admissible angles (radians).
    Values(Vec<f64>),
}

impl ViewDistribution {
    fn admissible_count(&self) -> Option<usize> {
        match self {
            ViewDistribution::Discrete { count } => Some(*count),
            ViewDistribution::Continuous => None,
            ViewDistribution::Values(v) => Some(v.len()),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ViewSpec {
        match self {
            ViewDistribution::Discrete { count } => ViewSpec::turntable_stop(rng.random_range(0..*count), *count),
            ViewDistribution::Continuous => ViewSpec::new(rng.random_range(0.0..TAU)),
            ViewDistribution::Values(v) => ViewSpec::new(v[rng.random_range(0..v.len())]),
        }
    }
}

/// Ranges for synthetic training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub rho_d: [f64; 2],
    pub rho_s: [f64; 2],
    /// Roughness bounds; drawn log-uniformly per axis.
    pub alpha: [f64; 2],
    /// Centre of the working-volume cube.
    pub center: [f64; 3],
    /// Half edge length of the working-volume cube.
    pub half_extent: f64,
    pub views: ViewDistribution,
    pub max_attempts: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            rho_d: [0.0, 1.0],
            rho_s: [0.0, 3.0],
            alpha: [0.01, 1.0],
            center: [0.0; 3],
            half_extent: 0.1,
            views: ViewDistribution::Discrete { count: 24 },
            max_attempts: 1000,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r[0].is_finite() && r[1].is_finite();
        if !ordered(self.rho_d) || self.rho_d[0] < 0.0 {
            return Err(Error::Config(format!("bad rho_d range {:?}", self.rho_d)));
        }
        if !ordered(self.rho_s) || self.rho_s[0] < 0.0 {
            return Err(Error::Config(format!("bad rho_s range {:?}", self.rho_s)));
        }
        if !ordered(self.alpha) || self.alpha[0] <= 0.0 || self.alpha[1] > 1.0 {
            return Err(Error::Config(format!("bad roughness range {:?}", self.alpha)));
        }
        if !(self.half_extent >= 0.0) {
            return Err(Error::Config("working volume extent must be >= 0".into()));
        }
        match &self.views {
            ViewDistribution::Discrete { count: 0 } => {
                return Err(Error::Config("view distribution has no angles".into()))
            }
            ViewDistribution::Values(v) if v.is_empty() => {
                return Err(Error::Config("view distribution has no angles".into()))
            }
            _ => {}
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sample_params<R: Rng + ?Sized>(&self, rng: &mut R) -> GgxBrdfParams {
        let uniform = |rng: &mut R, r: [f64; 2]| {
            if r[1] > r[0] {
                rng.random_range(r[0]..r[1])
            } else {
                r[0]
            }
        };
        let (la, lb) = (self.alpha[0].ln(), self.alpha[1].ln());
        let log_alpha = |rng: &mut R| uniform(rng, [la, lb]).exp().clamp(self.alpha[0], self.alpha[1]);
        GgxBrdfParams {
            rho_d: uniform(rng, self.rho_d),
            rho_s: uniform(rng, self.rho_s),
            alpha_x: log_alpha(rng),
            alpha_y: log_alpha(rng),
        }
    }

    pub fn sample_position<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let h = self.half_extent;
        let mut p = Vec3::from(self.center);
        if h > 0.0 {
            for k in 0..3 {
                p[k] += rng.random_range(-h..h);
            }
        }
        p
    }
}

/// A uniformly random right-handed orthonormal frame.
pub fn random_frame<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    let n = Vec3::from(UnitSphere.sample(rng));
    loop {
        let hint = Vec3::from(UnitSphere.sample(rng));
        let t = hint - n * n.dot(&hint);
        if t.norm() > 1e-3 {
            let t = t.normalize();
            let b = n.cross(&t);
            return Mat3::from_columns(&[t, b, n]);
        }
    }
}

/// One synthetic training point seen from two views.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPoint {
    pub params: GgxBrdfParams,
    pub sample: SurfaceSample,
    pub view1: ViewSpec,
    pub view2: ViewSpec,
}

/// Draws material, geometry and two views at which the rotated surface
/// faces the camera. The views differ unless only one angle is admissible.
pub fn sample_training_point<R: Rng + ?Sized>(
    rng: &mut R,
    config: &SamplingConfig,
    camera: &Vec3,
) -> Result<TrainingPoint> {
    config.validate()?;
    let single = config.views.admissible_count() == Some(1);
    for _ in 0..config.max_attempts {
        let params = config.sample_params(rng);
        let sample = SurfaceSample {
            position: config.sample_position(rng),
            frame: random_frame(rng),
        };
        let view1 = config.views.draw(rng);
        if !sample.visible_from(camera, view1) {
            continue;
        }
        if single {
            return Ok(TrainingPoint {
                params,
                sample,
                view1,
                view2: view1,
            });
        }
        let mut view2 = None;
        for _ in 0..config.max_attempts {
            let v = config.views.draw(rng);
            if v != view1 && sample.visible_from(camera, v) {
                view2 = Some(v);
                break;
            }
        }
        if let Some(view2) = view2 {
            return Ok(TrainingPoint {
                params,
                sample,
                view1,
                view2,
            });
        }
    }
    Err(Error::Sampling {
        attempts: config.max_attempts,
        reason: "no geometry with two visible views was found".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn camera() -> Vec3 {
        Vec3::new(0.0, -0.4, 0.0)
    }

    #[test]
    fn single_admissible_view_is_forced() {
        let config = SamplingConfig {
            views: ViewDistribution::Values(vec![1.25]),
            ..Default::default()
        };
        let mut rng = stream_rng(3, Stream::Sample, 0, 0);
        for _ in 0..50 {
            let tp = sample_training_point(&mut rng, &config, &camera()).unwrap();
            assert_eq!(tp.view1, tp.view2);
            assert!((tp.view1.theta() - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_stay_in_range_and_visible() {
        let config = SamplingConfig::default();
        let mut rng = stream_rng(4, Stream::Sample, 0, 0);
        for _ in 0..10_000 {
            let tp = sample_training_point(&mut rng, &config, &camera()).unwrap();
            let p = tp.params;
            assert!((0.0..=1.0).contains(&p.rho_d));
            assert!((0.0..=3.0).contains(&p.rho_s));
            assert!((0.01..=1.0).contains(&p.alpha_x) && (0.01..=1.0).contains(&p.alpha_y));
            assert!(tp.sample.position.iter().all(|c| c.abs() <= 0.1));
            assert_ne!(tp.view1, tp.view2);
            for v in [tp.view1, tp.view2] {
                assert!(tp.sample.visible_from(&camera(), v));
            }
            let f = tp.sample.frame;
            assert!((f.transpose() * f - Mat3::identity()).abs().max() < 1e-9);
            assert!((f.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn discrete_views_are_uniform() {
        let config = SamplingConfig::default();
        let mut rng = stream_rng(5, Stream::Sample, 0, 0);
        let n = 10_000;
        let mut counts = [0usize; 24];
        for _ in 0..n {
            let tp = sample_training_point(&mut rng, &config, &camera()).unwrap();
            let idx = (tp.view1.theta() / TAU * 24.0).round() as usize % 24;
            counts[idx] += 1;
        }
        // Pearson χ² against the uniform law, 23 degrees of freedom.
        // 0.999 quantile of χ²(23) is 49.73.
        let expected = n as f64 / 24.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 49.73, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn impossible_geometry_reports_sampling_error() {
        // Camera inside the (zero-size) working volume: never visible.
        let config = SamplingConfig {
            half_extent: 0.0,
            max_attempts: 20,
            ..Default::default()
        };
        let mut rng = stream_rng(6, Stream::Sample, 0, 0);
        let err = sample_training_point(&mut rng, &config, &Vec3::zeros());
        assert!(matches!(err, Err(Error::Sampling { .. })));
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        let config = SamplingConfig {
            alpha: [0.0, 1.0],
            ..Default::default()
        };
        assert!(config.validate().is_err());
        let config = SamplingConfig {
            rho_s: [2.0, 1.0],
            ..Default::default()
        };
        assert!(config.validate().is_err());
    }
}
