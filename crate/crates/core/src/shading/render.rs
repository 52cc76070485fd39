use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lightstage::{turntable_transform, LightstageLayout, Mat3, Vec3, ViewSpec};

use super::brdf::{specular_lobe, GgxBrdfParams};

/// A surface point with its local shading frame. Frame columns are
/// (tangent, bitangent, normal); local coordinates are `frameᵀ · v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub position: Vec3,
    pub frame: Mat3,
}

impl SurfaceSample {
    pub fn new(position: Vec3, frame: Mat3) -> Result<Self> {
        let ortho = (frame.transpose() * frame - Mat3::identity()).abs().max();
        if ortho > 1e-6 || (frame.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::Geometry(
                "surface frame must be orthonormal and right-handed".into(),
            ));
        }
        Ok(Self { position, frame })
    }

    /// Builds a frame around `normal` with the given tangent hint.
    pub fn from_normal(position: Vec3, normal: Vec3, tangent_hint: Vec3) -> Result<Self> {
        let n = normal.normalize();
        let t = tangent_hint - n * n.dot(&tangent_hint);
        if t.norm() < 1e-9 {
            return Err(Error::Geometry("tangent hint is parallel to the normal".into()));
        }
        let t = t.normalize();
        let b = n.cross(&t);
        Self::new(position, Mat3::from_columns(&[t, b, n]))
    }

    pub fn normal(&self) -> Vec3 {
        self.frame.column(2).into_owned()
    }

    /// The sample after rotating the turntable by `view`.
    pub fn rotated(&self, view: ViewSpec) -> Self {
        let (position, frame) = turntable_transform(&self.position, &self.frame, view.theta());
        Self { position, frame }
    }

    /// Whether the camera sees the front side of the surface at `view`.
    pub fn visible_from(&self, camera: &Vec3, view: ViewSpec) -> bool {
        let r = self.rotated(view);
        (camera - r.position).dot(&r.normal()) > 0.0
    }
}

/// Per-emitter response of one surface point, one emitter lit at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct Lumitexel {
    pub values: Vec<f64>,
}

impl Lumitexel {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Camera measurement under lighting pattern `pattern`: `Σ_l I(l) c(l)`.
    pub fn measure(&self, pattern: &[f64]) -> f64 {
        debug_assert_eq!(pattern.len(), self.values.len());
        self.values.iter().zip(pattern).map(|(c, i)| c * i).sum()
    }
}

/// Lumitexels of the two BRDF lobes at unit albedo. Any GGX lumitexel with
/// the same roughness is `rho_d · diffuse + rho_s · specular`.
#[derive(Debug, Clone, PartialEq)]
pub struct LobeLumitexels {
    pub diffuse: Vec<f64>,
    pub specular: Vec<f64>,
}

impl LobeLumitexels {
    pub fn combine(&self, rho_d: f64, rho_s: f64) -> Lumitexel {
        Lumitexel {
            values: self
                .diffuse
                .iter()
                .zip(&self.specular)
                .map(|(d, s)| rho_d * d + rho_s * s)
                .collect(),
        }
    }
}

/// Renders both lobes for the sample seen at `view`. Each entry carries the
/// geometric term `A Ψ ‖x_l − x_p‖⁻² (ω_i·n_p)⁺ (−ω_i·n_l)⁺` (visibility 1)
/// times the lobe value.
pub fn render_lobes(
    sample: &SurfaceSample,
    view: ViewSpec,
    layout: &LightstageLayout,
    camera: &Vec3,
    alpha_x: f64,
    alpha_y: f64,
) -> Result<LobeLumitexels> {
    let s = sample.rotated(view);
    let n = s.normal();
    let to_local = s.frame.transpose();
    let l = layout.len();
    let mut diffuse = vec![0.0; l];
    let mut specular = vec![0.0; l];

    let wo_world = camera - s.position;
    if wo_world.norm() < 1e-12 {
        return Err(Error::Geometry("surface point coincides with the camera".into()));
    }
    let wo = to_local * wo_world.normalize();
    let camera_visible = wo.z > 0.0;

    for (idx, src) in layout.sources().iter().enumerate() {
        let d = src.position - s.position;
        let r2 = d.norm_squared();
        if r2 < 1e-18 {
            return Err(Error::Geometry(format!("surface point coincides with emitter {idx}")));
        }
        if !camera_visible {
            continue;
        }
        let wi_world = d / r2.sqrt();
        let cos_p = wi_world.dot(&n);
        let cos_l = -wi_world.dot(&src.normal);
        if cos_p <= 0.0 || cos_l <= 0.0 {
            continue;
        }
        let geom = src.area * src.profile.eval(cos_l) / r2 * cos_p * cos_l;
        let wi = to_local * wi_world;
        if wi.z <= 0.0 {
            continue;
        }
        diffuse[idx] = geom / PI;
        specular[idx] = geom * specular_lobe(&wi, &wo, alpha_x, alpha_y);
    }
    Ok(LobeLumitexels { diffuse, specular })
}

/// Renders the lumitexel of `sample` under the turntable angle of `view`.
pub fn render_lumitexel(
    sample: &SurfaceSample,
    view: ViewSpec,
    layout: &LightstageLayout,
    camera: &Vec3,
    params: &GgxBrdfParams,
) -> Result<Lumitexel> {
    let lobes = render_lobes(sample, view, layout, camera, params.alpha_x, params.alpha_y)?;
    Ok(lobes.combine(params.rho_d, params.rho_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightstage::{build_layout, LayoutConfig, LightSource};
    use crate::rng::{stream_rng, Stream};
    use crate::shading::sampling::{sample_training_point, SamplingConfig};

    fn desk() -> LightstageLayout {
        build_layout(&LayoutConfig::desk()).unwrap()
    }

    #[test]
    fn back_facing_face_is_dark() {
        let layout = desk();
        // Normal along -x: the +x face (indices 0..64) lies entirely behind it.
        let sample = SurfaceSample::from_normal(Vec3::zeros(), -Vec3::x(), Vec3::y()).unwrap();
        let camera = Vec3::new(-0.4, -0.4, 0.0);
        let p = GgxBrdfParams::new(0.5, 1.0, 0.2, 0.2).unwrap();
        let lt = render_lumitexel(&sample, ViewSpec::new(0.0), &layout, &camera, &p).unwrap();
        assert!(lt.values[..64].iter().all(|&v| v == 0.0));
        assert!(lt.values.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn single_emitter_hand_evaluation() {
        let src = LightSource::new(Vec3::new(0.0, 0.0, 1.0), -Vec3::z(), 1e-4).unwrap();
        let layout = LightstageLayout::from_sources(vec![src]).unwrap();
        let sample = SurfaceSample::new(Vec3::zeros(), Mat3::identity()).unwrap();
        let camera = Vec3::new(0.3, 0.0, 1.0);
        let p = GgxBrdfParams::new(PI, 0.0, 0.5, 0.5).unwrap();
        let lt = render_lumitexel(&sample, ViewSpec::new(0.0), &layout, &camera, &p).unwrap();
        // A Ψ / r² · (ρ_d/π) · cos · cos = 1e-4 · 1 / 1 · 1 · 1 · 1
        assert!((lt.values[0] - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn diffuse_albedo_is_linear() {
        let layout = desk();
        let sample =
            SurfaceSample::from_normal(Vec3::new(0.02, -0.01, 0.03), Vec3::new(0.2, -1.0, 0.3), Vec3::z()).unwrap();
        let camera = layout.camera_position();
        let view = ViewSpec::new(0.3);
        let p1 = GgxBrdfParams::new(0.3, 0.0, 0.2, 0.4).unwrap();
        let p2 = GgxBrdfParams::new(0.6, 0.0, 0.2, 0.4).unwrap();
        let a = render_lumitexel(&sample, view, &layout, &camera, &p1).unwrap();
        let b = render_lumitexel(&sample, view, &layout, &camera, &p2).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((2.0 * x - y).abs() <= 1e-15 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn coincident_emitter_is_an_error() {
        let src = LightSource::new(Vec3::zeros(), -Vec3::z(), 1e-4).unwrap();
        let layout = LightstageLayout::from_sources(vec![src]).unwrap();
        let sample = SurfaceSample::new(Vec3::zeros(), Mat3::identity()).unwrap();
        let p = GgxBrdfParams::new(0.5, 0.0, 0.5, 0.5).unwrap();
        let err = render_lumitexel(&sample, ViewSpec::new(0.0), &layout, &Vec3::z(), &p);
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_non_orthonormal_frame() {
        let mut f = Mat3::identity();
        f[(0, 0)] = 2.0;
        assert!(SurfaceSample::new(Vec3::zeros(), f).is_err());
        let mirrored = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(SurfaceSample::new(Vec3::zeros(), mirrored).is_err());
    }

    #[test]
    fn randomized_render_invariants() {
        let layout = desk();
        let camera = layout.camera_position();
        let config = SamplingConfig::default();
        for i in 0..300u64 {
            let mut rng = stream_rng(11, Stream::Sample, i, 0);
            let tp = sample_training_point(&mut rng, &config, &camera).unwrap();
            for view in [tp.view1, tp.view2] {
                let lt = render_lumitexel(&tp.sample, view, &layout, &camera, &tp.params).unwrap();
                assert!(lt.values.iter().all(|&v| v >= 0.0 && v.is_finite()));

                // Scale equivariance in the albedos.
                let scaled = render_lumitexel(&tp.sample, view, &layout, &camera, &tp.params.scaled(2.5)).unwrap();
                for (a, b) in lt.values.iter().zip(&scaled.values) {
                    assert!((2.5 * a - b).abs() <= 1e-6 * b.abs() + 1e-300);
                }

                // Rotating the sample explicitly and rendering at θ = 0 agrees.
                let pre = tp.sample.rotated(view);
                let direct = render_lumitexel(&pre, ViewSpec::new(0.0), &layout, &camera, &tp.params).unwrap();
                for (a, b) in lt.values.iter().zip(&direct.values) {
                    assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()) + 1e-12);
                }
            }
        }
    }
}
