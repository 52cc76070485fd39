//! Synthetic multi-view scenes with known correspondences.
//!
//! Every scene point owns one pixel slot per view. Slots are laid out on a
//! `width × height` grid and shuffled independently for each view, so pixel
//! positions carry no information about identity. Points the camera cannot
//! see at a view leave their slot invalid.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::features::MeasurementStack;
use crate::lightstage::{build_layout, turntable_rotation, LightstageLayout, Vec3, ViewSpec};
use crate::model::{Mode, NetworkParams};
use crate::netcore::Real;
use crate::patterns::{export_patterns, simulate_capture, PhysicalPatternPair};
use crate::pointlight::{default_camera, render_pointlight_lobes, LightMask, PointLightRig};
use crate::rng::{stream_rng, Stream};
use crate::shading::{random_frame, render_lobes, LobeLumitexels, SamplingConfig, SurfaceSample};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneShape {
    /// Fibonacci points on a sphere; visibility by the hemisphere test.
    Sphere,
    /// Free-floating points with random frames, each facing the camera in
    /// every view.
    RandomCloud,
}

/// Per-channel GGX parameters sharing one roughness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgbBrdf {
    pub rho_d: [f64; CHANNELS],
    pub rho_s: [f64; CHANNELS],
    pub alpha_x: f64,
    pub alpha_y: f64,
}

impl RgbBrdf {
    /// A mildly glossy orange-ish dielectric.
    pub fn glossy_default() -> Self {
        Self {
            rho_d: [0.6, 0.35, 0.2],
            rho_s: [1.2; CHANNELS],
            alpha_x: 0.12,
            alpha_y: 0.12,
        }
    }

    /// Diffuse albedo drawn independently per channel, one specular albedo
    /// for all channels, roughness as in `sampling`.
    pub fn sample<R: Rng + ?Sized>(sampling: &SamplingConfig, rng: &mut R) -> Self {
        let base = sampling.sample_params(rng);
        let mut rho_d = [base.rho_d; CHANNELS];
        for v in rho_d.iter_mut().skip(1) {
            *v = sampling.sample_params(rng).rho_d;
        }
        Self {
            rho_d,
            rho_s: [base.rho_s; CHANNELS],
            alpha_x: base.alpha_x,
            alpha_y: base.alpha_y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneMaterial {
    Homogeneous(RgbBrdf),
    /// One independent draw per point.
    Mixed(SamplingConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub shape: SceneShape,
    pub n_points: usize,
    pub material: SceneMaterial,
    /// Turntable angles of the rendered views.
    pub thetas: Vec<f64>,
    /// Sphere radius or half edge of the cloud's cube, in metres.
    pub extent: f64,
    pub seed: u64,
}

impl SceneConfig {
    pub fn sphere(n_points: usize, thetas: Vec<f64>, seed: u64) -> Self {
        Self {
            shape: SceneShape::Sphere,
            n_points,
            material: SceneMaterial::Homogeneous(RgbBrdf::glossy_default()),
            thetas,
            extent: 0.08,
            seed,
        }
    }

    pub fn cloud(n_points: usize, thetas: Vec<f64>, seed: u64) -> Self {
        Self {
            shape: SceneShape::RandomCloud,
            n_points,
            material: SceneMaterial::Mixed(SamplingConfig::default()),
            thetas,
            extent: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::Config("a scene needs at least 2 points".into()));
        }
        if self.thetas.len() < 2 {
            return Err(Error::Config("a scene needs at least 2 views".into()));
        }
        if !(self.extent > 0.0) || self.thetas.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config(
                "scene extent and angles must be finite and positive".into(),
            ));
        }
        if let SceneMaterial::Mixed(s) = &self.material {
            s.validate()?;
        }
        Ok(())
    }

    pub fn views(&self) -> Vec<ViewSpec> {
        self.thetas.iter().map(|&t| ViewSpec::new(t)).collect()
    }
}

/// How a rendered point becomes the measurements stored in a stack.
#[derive(Debug, Clone)]
pub enum Measurer {
    /// Each learned row captured as a positive/negative pattern pair.
    Patterns {
        layout: LightstageLayout,
        pairs: Vec<PhysicalPatternPair>,
    },
    /// One measurement per rig light; masked lights read zero.
    PointLights {
        rig: PointLightRig,
        mask: LightMask,
        camera: Vec3,
    },
}

impl Measurer {
    /// The measurements a network consumes: its exported patterns for a
    /// light-stage network, the default rig for a point-light one.
    pub fn for_network<T: Real>(params: &NetworkParams<T>) -> Result<Self> {
        match params.config.mode {
            Mode::Lightstage => {
                let layout_cfg = params
                    .config
                    .layout
                    .ok_or_else(|| contract("light-stage network without a layout"))?;
                Ok(Self::Patterns {
                    layout: build_layout(&layout_cfg)?,
                    pairs: export_patterns(params)?,
                })
            }
            Mode::Pointlight => {
                let camera = default_camera();
                let rig = PointLightRig::hemispherical_default(camera);
                Ok(Self::PointLights {
                    mask: LightMask::all(rig.len()),
                    rig,
                    camera,
                })
            }
        }
    }

    pub fn measurements(&self) -> usize {
        match self {
            Self::Patterns { pairs, .. } => pairs.len(),
            Self::PointLights { rig, .. } => rig.len(),
        }
    }

    pub fn camera(&self) -> Vec3 {
        match self {
            Self::Patterns { layout, .. } => layout.camera_position(),
            Self::PointLights { camera, .. } => *camera,
        }
    }

    /// Per-channel measurements of one point at one view.
    pub fn measure(&self, sample: &SurfaceSample, view: ViewSpec, brdf: &RgbBrdf) -> Result<Vec<f64>> {
        let camera = self.camera();
        let (lobes, mask): (LobeLumitexels, Option<&LightMask>) = match self {
            Self::Patterns { layout, .. } => (
                render_lobes(sample, view, layout, &camera, brdf.alpha_x, brdf.alpha_y)?,
                None,
            ),
            Self::PointLights { rig, mask, .. } => (
                render_pointlight_lobes(sample, view, rig, &camera, brdf.alpha_x, brdf.alpha_y)?,
                Some(mask),
            ),
        };
        let (diffuse, specular) = match self {
            Self::Patterns { pairs, .. } => {
                let capture =
                    |c: &[f64]| -> Result<Vec<f64>> { pairs.iter().map(|p| simulate_capture(c, p)).collect() };
                (capture(&lobes.diffuse)?, capture(&lobes.specular)?)
            }
            Self::PointLights { .. } => (lobes.diffuse, lobes.specular),
        };
        let mut out = Vec::with_capacity(CHANNELS * diffuse.len());
        for c in 0..CHANNELS {
            let mut m: Vec<f64> = diffuse
                .iter()
                .zip(&specular)
                .map(|(d, s)| brdf.rho_d[c] * d + brdf.rho_s[c] * s)
                .collect();
            if let Some(mask) = mask {
                mask.apply(&mut m);
            }
            out.extend(m);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePoint {
    pub sample: SurfaceSample,
    pub brdf: RgbBrdf,
}

/// Ground truth of a scene: where each point landed in each view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub width: usize,
    pub height: usize,
    pub thetas: Vec<f64>,
    pub points: Vec<TruthPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub id: usize,
    /// `[x, y]` per view; `None` where the point is hidden.
    pub pixels: Vec<Option<[usize; 2]>>,
}

/// A ground-truth pair of pixels showing the same point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TruePair {
    pub point: usize,
    pub pixel_a: usize,
    pub pixel_b: usize,
}

impl SceneTruth {
    pub fn pixel_index(&self, xy: [usize; 2]) -> usize {
        xy[1] * self.width + xy[0]
    }

    /// Index of the view whose angle matches `theta` (compared at single
    /// precision, as stored in stacks and maps).
    pub fn view_index(&self, theta: f32) -> Result<usize> {
        let want = ViewSpec::new(theta as f64).theta();
        self.thetas
            .iter()
            .position(|&t| {
                let t = ViewSpec::new(t as f32 as f64).theta();
                (t - want).abs() < 1e-6 || (t - want).abs() > 2.0 * PI - 1e-6
            })
            .ok_or_else(|| contract(format!("no view of the scene has angle {theta}")))
    }

    /// Points visible in both views, by ascending id.
    pub fn correspondences(&self, view_a: usize, view_b: usize) -> Result<Vec<TruePair>> {
        if view_a >= self.thetas.len() || view_b >= self.thetas.len() {
            return Err(contract("view index out of range"));
        }
        let pairs: Vec<TruePair> = self
            .points
            .iter()
            .filter_map(|p| match (p.pixels[view_a], p.pixels[view_b]) {
                (Some(a), Some(b)) => Some(TruePair {
                    point: p.id,
                    pixel_a: self.pixel_index(a),
                    pixel_b: self.pixel_index(b),
                }),
                _ => None,
            })
            .collect();
        if pairs.is_empty() {
            return Err(Error::Empty("the two views share no visible point".into()));
        }
        Ok(pairs)
    }

    pub fn validate(&self) -> Result<()> {
        let mut used = vec![vec![false; self.width * self.height]; self.thetas.len()];
        for (i, p) in self.points.iter().enumerate() {
            if p.id != i || p.pixels.len() != self.thetas.len() {
                return Err(contract(format!("truth entry {i} is malformed")));
            }
            for (v, px) in p.pixels.iter().enumerate() {
                if let Some([x, y]) = *px {
                    if x >= self.width || y >= self.height || std::mem::replace(&mut used[v][y * self.width + x], true)
                    {
                        return Err(contract(format!("point {i} has a bad pixel in view {v}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub points: Vec<ScenePoint>,
    pub stacks: Vec<MeasurementStack>,
    pub truth: SceneTruth,
    pub camera: Vec3,
}

/// Unit directions of `n` points spread evenly over the sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn scene_points(config: &SceneConfig, camera: &Vec3) -> Result<Vec<ScenePoint>> {
    let views = config.views();
    let material = |rng: &mut rand_chacha::ChaCha8Rng| match &config.material {
        SceneMaterial::Homogeneous(b) => *b,
        SceneMaterial::Mixed(s) => RgbBrdf::sample(s, rng),
    };
    match config.shape {
        SceneShape::Sphere => fibonacci_sphere(config.n_points)
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                let mut rng = stream_rng(config.seed, Stream::Scene, 0, i as u64);
                // Tangent along the azimuthal direction about the vertical axis.
                let hint = if n.z.abs() < 0.999 {
                    Vec3::z().cross(&n)
                } else {
                    Vec3::x()
                };
                Ok(ScenePoint {
                    sample: SurfaceSample::from_normal(n * config.extent, n, hint)?,
                    brdf: material(&mut rng),
                })
            })
            .collect(),
        SceneShape::RandomCloud => (0..config.n_points)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(config.seed, Stream::Scene, 0, i as u64);
                let brdf = material(&mut rng);
                let h = config.extent;
                let position = Vec3::new(
                    rng.random_range(-h..h),
                    rng.random_range(-h..h),
                    rng.random_range(-h..h),
                );
                const ATTEMPTS: usize = 1000;
                for _ in 0..ATTEMPTS {
                    let sample = SurfaceSample {
                        position,
                        frame: random_frame(&mut rng),
                    };
                    if views.iter().all(|&v| sample.visible_from(camera, v)) {
                        return Ok(ScenePoint { sample, brdf });
                    }
                }
                Err(Error::Sampling {
                    attempts: ATTEMPTS,
                    reason: format!("point {i} faces away from the camera in some view"),
                })
            })
            .collect(),
    }
}

/// Places and renders every point of `config` at each view.
pub fn build_synthetic_scene(config: &SceneConfig, measurer: &Measurer) -> Result<SyntheticScene> {
    config.validate()?;
    let camera = measurer.camera();
    let points = scene_points(config, &camera)?;
    let n = config.n_points;
    let width = (n as f64).sqrt().ceil() as usize;
    let height = n.div_ceil(width);
    let m = measurer.measurements();
    let mut stacks = Vec::with_capacity(config.thetas.len());
    let mut pixels = vec![vec![None; config.thetas.len()]; n];
    for (v, view) in config.views().into_iter().enumerate() {
        let mut slots: Vec<usize> = (0..width * height).collect();
        slots.shuffle(&mut stream_rng(config.seed, Stream::Scene, 1, v as u64));
        let rendered: Vec<Option<Vec<f64>>> = points
            .par_iter()
            .map(|p| {
                if !p.sample.visible_from(&camera, view) {
                    return Ok(None);
                }
                measurer.measure(&p.sample, view, &p.brdf).map(Some)
            })
            .collect::<Result<_>>()?;
        let mut stack = MeasurementStack::new(height, width, m, CHANNELS, config.thetas[v] as f32)?;
        for (i, values) in rendered.into_iter().enumerate() {
            if let Some(values) = values {
                let slot = slots[i];
                for (dst, src) in stack.pixel_mut(slot).iter_mut().zip(&values) {
                    *dst = *src as f32;
                }
                stack.mask[slot] = true;
                pixels[i][v] = Some([slot % width, slot / width]);
            }
        }
        stacks.push(stack);
    }
    let truth = SceneTruth {
        width,
        height,
        thetas: config.thetas.clone(),
        points: pixels
            .into_iter()
            .enumerate()
            .map(|(id, pixels)| TruthPoint { id, pixels })
            .collect(),
    };
    Ok(SyntheticScene {
        config: config.clone(),
        points,
        stacks,
        truth,
        camera,
    })
}

/// A `resolution²` image of a homogeneous sphere at the origin seen along the
/// camera axis, for visualization. Pixels are mapped orthographically onto
/// the sphere's silhouette (up is +z); pixels off the sphere or on surface
/// the camera cannot see stay invalid.
pub fn render_sphere_image(
    resolution: usize,
    radius: f64,
    theta: f64,
    brdf: &RgbBrdf,
    measurer: &Measurer,
) -> Result<MeasurementStack> {
    if resolution == 0 || !(radius > 0.0) {
        return Err(Error::Config(
            "sphere image needs a positive resolution and radius".into(),
        ));
    }
    let camera = measurer.camera();
    let back = turntable_rotation(-theta);
    let view = ViewSpec::new(theta);
    let forward = (-camera).normalize();
    let right = if forward.z.abs() < 0.999 {
        forward.cross(&Vec3::z()).normalize()
    } else {
        Vec3::x()
    };
    let up = right.cross(&forward);
    let mut stack = MeasurementStack::new(resolution, resolution, measurer.measurements(), CHANNELS, theta as f32)?;
    let rows: Vec<Vec<Option<Vec<f64>>>> = (0..resolution)
        .into_par_iter()
        .map(|y| {
            (0..resolution)
                .map(|x| {
                    let u = 2.0 * (x as f64 + 0.5) / resolution as f64 - 1.0;
                    let v = 1.0 - 2.0 * (y as f64 + 0.5) / resolution as f64;
                    let w2 = 1.0 - u * u - v * v;
                    if w2 <= 0.0 {
                        return Ok(None);
                    }
                    let n_world = right * u + up * v - forward * w2.sqrt();
                    // Object-space point that the turntable carries to n_world.
                    let n = back * n_world;
                    let hint = if n.z.abs() < 0.999 {
                        Vec3::z().cross(&n)
                    } else {
                        Vec3::x()
                    };
                    let sample = SurfaceSample::from_normal(n * radius, n, hint)?;
                    if !sample.visible_from(&camera, view) {
                        return Ok(None);
                    }
                    measurer.measure(&sample, view, brdf).map(Some)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    for (y, row) in rows.into_iter().enumerate() {
        for (x, values) in row.into_iter().enumerate() {
            if let Some(values) = values {
                let p = y * resolution + x;
                for (dst, src) in stack.pixel_mut(p).iter_mut().zip(&values) {
                    *dst = *src as f32;
                }
                stack.mask[p] = true;
            }
        }
    }
    Ok(stack)
}

/// Multiplies every valid measurement by an independent `1 + N(0, σ²)`
/// factor.
pub fn perturb_stack(stack: &mut MeasurementStack, sigma: f64, seed: u64, view: u64) -> Result<()> {
    if !(sigma >= 0.0) {
        return Err(Error::Config("noise sigma must be >= 0".into()));
    }
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(1.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    for p in 0..stack.pixels() {
        if !stack.mask[p] {
            continue;
        }
        let mut rng = stream_rng(seed, Stream::Eval, view, p as u64);
        for v in stack.pixel_mut(p) {
            *v = (*v as f64 * normal.sample(&mut rng)) as f32;
        }
    }
    Ok(())
}
