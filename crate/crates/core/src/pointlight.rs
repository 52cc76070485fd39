//! Conventional photometric-stereo input: a fixed rig of distant lights,
//! one lit at a time, observed by the same camera.
//!
//! A rig file is a JSON list of `{"direction": [x, y, z], "intensity": i}`
//! with directions pointing from the object towards the light.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightstage::{Vec3, ViewSpec};
use crate::model::POINTLIGHT_INPUTS;
use crate::shading::{specular_lobe, GgxBrdfParams, LobeLumitexels, SurfaceSample};

/// Camera position used with point-light rigs, matching the desk light stage.
pub fn default_camera() -> Vec3 {
    Vec3::new(0.0, -0.4, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    pub direction: [f64; 3],
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointLightRig {
    lights: Vec<PointLight>,
}

impl PointLightRig {
    pub fn new(lights: Vec<PointLight>) -> Result<Self> {
        if lights.is_empty() {
            return Err(Error::Config("point-light rig has no lights".into()));
        }
        for (i, l) in lights.iter().enumerate() {
            let n = Vec3::from(l.direction).norm();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!("light {i} direction has length {n}")));
            }
            if !(l.intensity > 0.0) || !l.intensity.is_finite() {
                return Err(Error::Config(format!("light {i} intensity must be positive")));
            }
        }
        Ok(Self { lights })
    }

    /// 96 unit-intensity lights on 8 rings of 12 around the camera axis,
    /// polar angles spread over (0°, 70°), each ring rotated by half a step
    /// against the previous one.
    pub fn hemispherical_default(camera_axis: Vec3) -> Self {
        let axis = camera_axis.normalize();
        let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::z() };
        let u = (helper - axis * axis.dot(&helper)).normalize();
        let v = axis.cross(&u);
        let (rings, per_ring) = (8, 12);
        let mut lights = Vec::with_capacity(rings * per_ring);
        for r in 0..rings {
            let polar = (r as f64 + 0.5) / rings as f64 * 70f64.to_radians();
            for k in 0..per_ring {
                let phi = 2.0 * PI * (k as f64 + 0.5 * (r % 2) as f64) / per_ring as f64;
                let d = axis * polar.cos() + (u * phi.cos() + v * phi.sin()) * polar.sin();
                lights.push(PointLight {
                    direction: d.normalize().into(),
                    intensity: 1.0,
                });
            }
        }
        debug_assert_eq!(lights.len(), POINTLIGHT_INPUTS);
        Self { lights }
    }

    pub fn lights(&self) -> &[PointLight] {
        &self.lights
    }

    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rig: Self = serde_json::from_str(text)?;
        Self::new(rig.lights)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rig: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::new(rig.lights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.flush()?;
        Ok(())
    }
}

/// Unit-albedo diffuse and specular responses to each light.
pub fn render_pointlight_lobes(
    sample: &SurfaceSample,
    view: ViewSpec,
    rig: &PointLightRig,
    camera: &Vec3,
    alpha_x: f64,
    alpha_y: f64,
) -> Result<LobeLumitexels> {
    let s = sample.rotated(view);
    let to_local = s.frame.transpose();
    let wo_world = camera - s.position;
    if wo_world.norm() < 1e-12 {
        return Err(Error::Geometry("surface point coincides with the camera".into()));
    }
    let wo = to_local * wo_world.normalize();
    let mut diffuse = vec![0.0; rig.len()];
    let mut specular = vec![0.0; rig.len()];
    if wo.z > 0.0 {
        for (j, light) in rig.lights.iter().enumerate() {
            let wi = to_local * Vec3::from(light.direction);
            if wi.z <= 0.0 {
                continue;
            }
            let g = light.intensity * wi.z;
            diffuse[j] = g / PI;
            specular[j] = g * specular_lobe(&wi, &wo, alpha_x, alpha_y);
        }
    }
    Ok(LobeLumitexels { diffuse, specular })
}

/// `intensity_j · f(ω_j, ω_o) · (ω_j·n)⁺` for every light `j`.
pub fn render_pointlight_vector(
    sample: &SurfaceSample,
    view: ViewSpec,
    rig: &PointLightRig,
    camera: &Vec3,
    params: &GgxBrdfParams,
) -> Result<Vec<f64>> {
    let lobes = render_pointlight_lobes(sample, view, rig, camera, params.alpha_x, params.alpha_y)?;
    Ok(lobes.combine(params.rho_d, params.rho_s).values)
}

/// Which rig lights are switched on; inactive entries are zeroed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LightMask {
    pub active: Vec<bool>,
}

impl LightMask {
    pub fn all(n: usize) -> Self {
        Self { active: vec![true; n] }
    }

    /// `count` lights chosen by greedy farthest-point selection over the
    /// directions, starting from the light closest to the mean direction.
    pub fn spread(rig: &PointLightRig, count: usize) -> Result<Self> {
        let n = rig.len();
        if count == 0 || count > n {
            return Err(Error::Config(format!("cannot activate {count} of {n} lights")));
        }
        let dirs: Vec<Vec3> = rig.lights.iter().map(|l| Vec3::from(l.direction)).collect();
        let mean = dirs.iter().sum::<Vec3>();
        let first = (0..n)
            .max_by(|&a, &b| dirs[a].dot(&mean).total_cmp(&dirs[b].dot(&mean)).then(b.cmp(&a)))
            .expect("non-empty rig");
        let mut chosen = vec![first];
        let mut nearest: Vec<f64> = dirs.iter().map(|d| (d - dirs[first]).norm()).collect();
        while chosen.len() < count {
            let next = (0..n)
                .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
                .expect("non-empty rig");
            chosen.push(next);
            for (i, d) in dirs.iter().enumerate() {
                nearest[i] = nearest[i].min((d - dirs[next]).norm());
            }
        }
        let mut active = vec![false; n];
        for c in chosen {
            active[c] = true;
        }
        Ok(Self { active })
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn apply<T: Copy + Default>(&self, values: &mut [T]) {
        for (v, &on) in values.iter_mut().zip(&self.active) {
            if !on {
                *v = T::default();
            }
        }
    }
}
