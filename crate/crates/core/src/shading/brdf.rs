use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightstage::Vec3;

/// Normal-incidence reflectance of the Schlick Fresnel term.
pub const SCHLICK_F0: f64 = 0.04;

/// Anisotropic GGX parameters for one gray channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgxBrdfParams {
    pub rho_d: f64,
    pub rho_s: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
}

impl GgxBrdfParams {
    pub fn new(rho_d: f64, rho_s: f64, alpha_x: f64, alpha_y: f64) -> Result<Self> {
        let p = Self {
            rho_d,
            rho_s,
            alpha_x,
            alpha_y,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_alpha = |a: f64| a > 0.0 && a <= 1.0;
        if !(self.rho_d >= 0.0 && self.rho_s >= 0.0) {
            return Err(Error::Config(format!(
                "albedos must be non-negative, got rho_d={} rho_s={}",
                self.rho_d, self.rho_s
            )));
        }
        if !(ok_alpha(self.alpha_x) && ok_alpha(self.alpha_y)) {
            return Err(Error::Config(format!(
                "roughness must lie in (0, 1], got ({}, {})",
                self.alpha_x, self.alpha_y
            )));
        }
        Ok(())
    }

    /// Same lobe shapes with both albedos multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rho_d: self.rho_d * s,
            rho_s: self.rho_s * s,
            ..*self
        }
    }
}

/// GGX normal distribution for a local-frame half vector `h`.
#[inline]
pub fn ggx_ndf(h: &Vec3, alpha_x: f64, alpha_y: f64) -> f64 {
    if h.z <= 0.0 {
        return 0.0;
    }
    let t = (h.x / alpha_x).powi(2) + (h.y / alpha_y).powi(2) + h.z * h.z;
    1.0 / (PI * alpha_x * alpha_y * t * t)
}

/// Separable Smith masking for one direction.
#[inline]
pub fn smith_g1(v: &Vec3, alpha_x: f64, alpha_y: f64) -> f64 {
    let tan2 = ((alpha_x * v.x).powi(2) + (alpha_y * v.y).powi(2)) / (v.z * v.z);
    2.0 / (1.0 + (1.0 + tan2).sqrt())
}

#[inline]
pub fn schlick_fresnel(cos_theta: f64) -> f64 {
    let m = (1.0 - cos_theta).clamp(0.0, 1.0);
    let m2 = m * m;
    SCHLICK_F0 + (1.0 - SCHLICK_F0) * m2 * m2 * m
}

/// Specular lobe with unit specular albedo: `D G F / (4 cosθi cosθo)`.
/// Both directions must be above the local horizon.
#[inline]
pub fn specular_lobe(wi: &Vec3, wo: &Vec3, alpha_x: f64, alpha_y: f64) -> f64 {
    let h = (wi + wo).normalize();
    let d = ggx_ndf(&h, alpha_x, alpha_y);
    let g = smith_g1(wi, alpha_x, alpha_y) * smith_g1(wo, alpha_x, alpha_y);
    let f = schlick_fresnel(wi.dot(&h));
    d * g * f / (4.0 * wi.z * wo.z)
}

/// Evaluates `f(wi, wo)` for local-frame unit directions. Pairs with either
/// direction at or below the horizon evaluate to 0.
#[inline]
pub fn eval_brdf(wi: &Vec3, wo: &Vec3, params: &GgxBrdfParams) -> f64 {
    if wi.z <= 0.0 || wo.z <= 0.0 {
        return 0.0;
    }
    params.rho_d / PI + params.rho_s * specular_lobe(wi, wo, params.alpha_x, params.alpha_y)
}

/// Like [`eval_brdf`] but rejects below-horizon or non-unit directions.
pub fn eval_brdf_strict(wi: &Vec3, wo: &Vec3, params: &GgxBrdfParams) -> Result<f64> {
    for (name, v) in [("wi", wi), ("wo", wo)] {
        if (v.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("{name} is not unit length")));
        }
        if v.z <= 0.0 {
            return Err(Error::Domain(format!("{name} is below the local horizon")));
        }
    }
    Ok(eval_brdf(wi, wo, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dir(theta: f64, phi: f64) -> Vec3 {
        Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
    }

    #[test]
    fn lambertian_limit() {
        let p = GgxBrdfParams::new(PI, 0.0, 0.3, 0.3).unwrap();
        for (a, b) in [((0.1, 0.2), (0.7, 2.0)), ((1.2, 3.0), (0.0, 0.0))] {
            let v = eval_brdf(&dir(a.0, a.1), &dir(b.0, b.1), &p);
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn anisotropic_reciprocity() {
        let p = GgxBrdfParams::new(0.3, 1.5, 0.2, 0.05).unwrap();
        let wi = dir(0.6, 0.3);
        let wo = dir(1.1, 2.4);
        let a = eval_brdf(&wi, &wo, &p);
        let b = eval_brdf(&wo, &wi, &p);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn normal_incidence_matches_factorwise_evaluation() {
        let p = GgxBrdfParams::new(0.0, 1.0, 0.1, 0.1).unwrap();
        let n = Vec3::z();
        // Step-by-step oracle at h = n:
        // D = 1 / (π α²), G1 = 2 / (1 + sqrt(1 + 0)) = 1, F = F0.
        let d = 1.0 / (PI * 0.1 * 0.1);
        let g = 1.0;
        let f = 0.04;
        let expected = d * g * f / (4.0 * 1.0 * 1.0);
        let v = eval_brdf(&n, &n, &p);
        assert!((v - expected).abs() < 1e-9 * expected, "{v} vs {expected}");
    }

    #[test]
    fn horizon_handling() {
        let p = GgxBrdfParams::new(0.5, 0.5, 0.3, 0.3).unwrap();
        let below = Vec3::new(0.6, 0.0, -0.8);
        assert_eq!(eval_brdf(&below, &Vec3::z(), &p), 0.0);
        assert!(matches!(
            eval_brdf_strict(&below, &Vec3::z(), &p),
            Err(Error::Domain(_))
        ));
        assert!(eval_brdf_strict(&Vec3::z(), &Vec3::z(), &p).is_ok());
    }

    #[test]
    fn params_are_validated() {
        assert!(GgxBrdfParams::new(-0.1, 0.0, 0.5, 0.5).is_err());
        assert!(GgxBrdfParams::new(0.1, 0.0, 0.0, 0.5).is_err());
        assert!(GgxBrdfParams::new(0.1, 0.0, 0.5, 1.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn reciprocity_and_finiteness(
            t1 in 0.0f64..1.55, p1 in 0.0f64..6.28,
            t2 in 0.0f64..1.55, p2 in 0.0f64..6.28,
            ax in 0.01f64..1.0, ay in 0.01f64..1.0,
            rd in 0.0f64..1.0, rs in 0.0f64..3.0,
        ) {
            let p = GgxBrdfParams::new(rd, rs, ax, ay).unwrap();
            let (wi, wo) = (dir(t1, p1), dir(t2, p2));
            let a = eval_brdf(&wi, &wo, &p);
            let b = eval_brdf(&wo, &wi, &p);
            prop_assert!(a.is_finite() && a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
