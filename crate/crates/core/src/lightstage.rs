//! Capture rig geometry: the six-faced emitter box, the turntable and the
//! encoding of turntable angles fed to the network.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{format_err, Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Angular emission profile of an emitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AngularProfile {
    /// Constant intensity over the emitting hemisphere.
    #[default]
    Uniform,
}

impl AngularProfile {
    /// Profile value for an emission direction with cosine `cos_emit` to the
    /// emitter normal. Foreshortening is applied separately by the renderer.
    #[inline]
    pub fn eval(self, _cos_emit: f64) -> f64 {
        match self {
            AngularProfile::Uniform => 1.0,
        }
    }
}

/// One locally planar emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct LightSource {
    pub position: Vec3,
    /// Unit emission normal.
    pub normal: Vec3,
    /// Emitting area in m².
    pub area: f64,
    pub profile: AngularProfile,
}

impl LightSource {
    pub fn new(position: Vec3, normal: Vec3, area: f64) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "emitter normal must be unit length, got |n| = {}",
                normal.norm()
            )));
        }
        if !(area > 0.0) {
            return Err(Error::Config(format!("emitter area must be > 0, got {area}")));
        }
        Ok(Self {
            position,
            normal,
            area,
            profile: AngularProfile::Uniform,
        })
    }
}

/// Parameters of the box layout. Each of the six faces carries a centred
/// `per_side × per_side` grid of emitters spaced `pitch` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub per_side: usize,
    /// Box extent along x, y (horizontal) and z (vertical), in metres.
    pub box_dims: [f64; 3],
    pub pitch: f64,
}

impl LayoutConfig {
    /// 6 faces × 8×8 emitters (L = 384) in the full-size box.
    pub fn desk() -> Self {
        Self {
            per_side: 8,
            box_dims: [0.80, 0.80, 0.77],
            pitch: 0.1,
        }
    }

    /// The 24,576-emitter configuration: 64×64 per face at 1 cm pitch.
    pub fn full_scale() -> Self {
        Self {
            per_side: 64,
            box_dims: [0.80, 0.80, 0.77],
            pitch: 0.01,
        }
    }

    pub fn per_face(&self) -> usize {
        self.per_side * self.per_side
    }
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Ordered emitter set. Emitter index `l` is the lumitexel entry index.
#[derive(Debug, Clone, PartialEq)]
pub struct LightstageLayout {
    sources: Vec<LightSource>,
    /// `faces[f]` lists the emitter indices on face `f`; empty for custom layouts.
    faces: Vec<Vec<usize>>,
    config: Option<LayoutConfig>,
}

/// (outward axis, in-plane u, in-plane v) for the six faces, in index order
/// +x, −x, +y, −y, +z, −z.
const FACE_AXES: [([f64; 3], [f64; 3], [f64; 3]); 6] = [
    ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
    ([-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]),
    ([0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
    ([0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
    ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
    ([0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.0, -1.0, 0.0]),
];

/// Builds the box layout described by `config`.
pub fn build_layout(config: &LayoutConfig) -> Result<LightstageLayout> {
    if config.per_side == 0 {
        return Err(Error::Config("emitters per face side must be >= 1".into()));
    }
    if config.box_dims.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Config(format!(
            "box dimensions must be positive, got {:?}",
            config.box_dims
        )));
    }
    if !(config.pitch > 0.0) {
        return Err(Error::Config(format!("pitch must be positive, got {}", config.pitch)));
    }

    let n = config.per_side;
    let half = Vec3::from(config.box_dims) * 0.5;
    let span = (n - 1) as f64 * config.pitch;
    let area = config.pitch * config.pitch;
    let mut sources = Vec::with_capacity(6 * n * n);
    let mut faces = Vec::with_capacity(6);

    for (axis, u, v) in FACE_AXES {
        let axis = Vec3::from(axis);
        let u = Vec3::from(u);
        let v = Vec3::from(v);
        let extent_u = u.abs().dot(&half) * 2.0;
        let extent_v = v.abs().dot(&half) * 2.0;
        if span > extent_u + 1e-12 || span > extent_v + 1e-12 {
            return Err(Error::Config(format!(
                "{n}×{n} grid at pitch {} does not fit a {:.3}×{:.3} face",
                config.pitch, extent_u, extent_v
            )));
        }
        let center = axis.component_mul(&half);
        let offset = 0.5 * (n - 1) as f64;
        let mut face = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                let du = (col as f64 - offset) * config.pitch;
                let dv = (row as f64 - offset) * config.pitch;
                face.push(sources.len());
                sources.push(LightSource {
                    position: center + u * du + v * dv,
                    normal: -axis,
                    area,
                    profile: AngularProfile::Uniform,
                });
            }
        }
        faces.push(face);
    }

    Ok(LightstageLayout {
        sources,
        faces,
        config: Some(*config),
    })
}

impl LightstageLayout {
    /// A layout made of arbitrary emitters, without face grouping.
    pub fn from_sources(sources: Vec<LightSource>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::Config("layout needs at least one emitter".into()));
        }
        Ok(Self {
            sources,
            faces: Vec::new(),
            config: None,
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn sources(&self) -> &[LightSource] {
        &self.sources
    }

    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }

    pub fn config(&self) -> Option<&LayoutConfig> {
        self.config.as_ref()
    }

    /// Camera position: the centre of the −y face, looking into the box.
    pub fn camera_position(&self) -> Vec3 {
        match &self.config {
            Some(c) => Vec3::new(0.0, -0.5 * c.box_dims[1], 0.0),
            None => Vec3::new(0.0, -0.4, 0.0),
        }
    }

    const SECTION_VERSION: u32 = 1;

    /// Writes the `LAYT` section embedded in dataset files.
    pub(crate) fn write_section<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, b"LAYT")?;
        binio::write_u32(w, Self::SECTION_VERSION)?;
        binio::write_u32(w, self.sources.len() as u32)?;
        match &self.config {
            Some(c) => {
                binio::write_u32(w, c.per_side as u32)?;
                binio::write_f32s(w, c.box_dims.iter().map(|&d| d as f32))?;
                binio::write_f32(w, c.pitch as f32)?;
            }
            None => {
                binio::write_u32(w, 0)?;
                binio::write_f32s(w, [0.0; 4])?;
            }
        }
        for s in &self.sources {
            binio::write_f32s(w, s.position.iter().map(|&x| x as f32))?;
            binio::write_f32s(w, s.normal.iter().map(|&x| x as f32))?;
            binio::write_f32(w, s.area as f32)?;
        }
        Ok(())
    }

    pub(crate) fn read_section<R: Read>(r: &mut R) -> Result<Self> {
        binio::expect_magic(r, b"LAYT", "layout")?;
        let version = binio::read_u32(r)?;
        if version != Self::SECTION_VERSION {
            return Err(format_err("layout", format!("unsupported version {version}")));
        }
        let count = binio::read_u32(r)? as usize;
        let per_side = binio::read_u32(r)? as usize;
        let cfg = binio::read_f32s(r, 4)?;
        let raw = binio::read_f32s(r, binio::checked_len("layout", &[count as u64, 7])?)?;
        if per_side > 0 {
            // Grid layouts are rebuilt from their configuration. The shortest
            // decimal form of each f32 recovers the f64 it was written from
            // whenever that value has at most ~7 significant digits.
            let widen = |x: f32| x.to_string().parse::<f64>().unwrap_or(x as f64);
            let config = LayoutConfig {
                per_side,
                box_dims: [widen(cfg[0]), widen(cfg[1]), widen(cfg[2])],
                pitch: widen(cfg[3]),
            };
            let layout = build_layout(&config)?;
            if layout.len() != count {
                return Err(format_err("layout", "emitter count disagrees with configuration"));
            }
            return Ok(layout);
        }
        let sources = raw
            .chunks_exact(7)
            .map(|c| LightSource {
                position: Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64),
                normal: Vec3::new(c[3] as f64, c[4] as f64, c[5] as f64).normalize(),
                area: c[6] as f64,
                profile: AngularProfile::Uniform,
            })
            .collect();
        Self::from_sources(sources)
    }
}

/// A turntable angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    theta: f64,
}

impl ViewSpec {
    /// Wraps `theta` into `[0, 2π)`.
    pub fn new(theta: f64) -> Self {
        let mut t = theta.rem_euclid(TAU);
        if t >= TAU {
            t = 0.0;
        }
        Self { theta: t }
    }

    /// The `i`-th of `count` equally spaced turntable stops.
    pub fn turntable_stop(i: usize, count: usize) -> Self {
        Self::new(TAU * i as f64 / count as f64)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn encode(&self) -> [f64; 2] {
        encode_view(*self)
    }
}

/// Network encoding of a view: `[cos θ, sin θ]`.
pub fn encode_view(view: ViewSpec) -> [f64; 2] {
    let (s, c) = view.theta.sin_cos();
    [c, s]
}

/// Rotation by `theta` about the vertical turntable axis through the origin.
pub fn turntable_rotation(theta: f64) -> Mat3 {
    *Rotation3::from_axis_angle(&Vec3::z_axis(), theta).matrix()
}

/// Rotates a position and local frame (columns: tangent, bitangent, normal)
/// by the turntable angle `theta`.
pub fn turntable_transform(p: &Vec3, frame: &Mat3, theta: f64) -> (Vec3, Mat3) {
    let r = turntable_rotation(theta);
    (r * p, r * frame)
}
