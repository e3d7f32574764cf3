//! Forward brightness models: intensity of a surface element from its normal,
//! the light and viewer directions and material parameters.

use crate::error::{invalid, Result};
use crate::geom::Vec3;

const UNIT_TOL: f64 = 1e-9;

/// Light direction (towards the source) and viewer direction, both unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSetup {
    pub light: Vec3,
    pub viewer: Vec3,
}

impl LightSetup {
    /// Normalizes both vectors; the light must point above the surface.
    pub fn new(light: Vec3, viewer: Vec3) -> Result<Self> {
        let (Some(l), Some(v)) = (light.normalized(), viewer.normalized()) else {
            return invalid("light and viewer directions must be nonzero");
        };
        if l.z <= 0.0 {
            return invalid(format!("light must have positive third component, got {l:?}"));
        }
        Ok(LightSetup { light: l, viewer: v })
    }

    /// Light along `light`, camera looking down the vertical axis.
    pub fn with_light(light: Vec3) -> Result<Self> {
        LightSetup::new(light, Vec3::Z)
    }

    /// Vertical light and viewer.
    pub fn vertical() -> Self {
        LightSetup { light: Vec3::Z, viewer: Vec3::Z }
    }

    pub fn is_vertical_light(&self) -> bool {
        self.light.x.abs() < 1e-12 && self.light.y.abs() < 1e-12
    }

    pub fn is_vertical_viewer(&self) -> bool {
        self.viewer.x.abs() < 1e-12 && self.viewer.y.abs() < 1e-12
    }
}

/// Reflectance model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Lambertian,
    OrenNayar,
    Phong,
    BlinnPhong,
}

impl std::str::FromStr for Model {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lambert" | "lambertian" | "l" => Ok(Model::Lambertian),
            "oren" | "oren-nayar" | "orennayar" | "on" => Ok(Model::OrenNayar),
            "phong" | "ph" => Ok(Model::Phong),
            "blinn" | "blinn-phong" | "blinnphong" | "bp" => Ok(Model::BlinnPhong),
            _ => invalid(format!("unknown reflectance model '{s}'")),
        }
    }
}

/// Material parameters shared by all models; each model reads the ones it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectanceParams {
    pub model: Model,
    /// Diffuse albedo in `[0, 1]`.
    pub diffuse_albedo: f64,
    /// Specular albedo in `[0, 1]`.
    pub specular_albedo: f64,
    /// Oren-Nayar surface roughness, `>= 0`.
    pub roughness: f64,
    /// Phong specular exponent.
    pub phong_exponent: f64,
    /// Blinn-Phong shininess exponent.
    pub shininess: f64,
    pub k_ambient: f64,
    pub k_diffuse: f64,
    pub k_specular: f64,
    /// Ambient intensity in `[0, 1]`.
    pub ambient_intensity: f64,
}

impl Default for ReflectanceParams {
    fn default() -> Self {
        ReflectanceParams {
            model: Model::Lambertian,
            diffuse_albedo: 1.0,
            specular_albedo: 1.0,
            roughness: 0.0,
            phong_exponent: 1.0,
            shininess: 1.0,
            k_ambient: 0.0,
            k_diffuse: 1.0,
            k_specular: 0.0,
            ambient_intensity: 0.0,
        }
    }
}

impl ReflectanceParams {
    pub fn lambertian() -> Self {
        Self::default()
    }

    pub fn oren_nayar(roughness: f64) -> Self {
        ReflectanceParams { model: Model::OrenNayar, roughness, ..Self::default() }
    }

    pub fn phong(k_ambient: f64, k_diffuse: f64, k_specular: f64, exponent: f64) -> Self {
        ReflectanceParams {
            model: Model::Phong,
            k_ambient,
            k_diffuse,
            k_specular,
            phong_exponent: exponent,
            ..Self::default()
        }
    }

    pub fn blinn_phong(k_ambient: f64, k_diffuse: f64, k_specular: f64, shininess: f64) -> Self {
        ReflectanceParams { model: Model::BlinnPhong, shininess, ..Self::phong(k_ambient, k_diffuse, k_specular, 1.0) }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.diffuse_albedo) || !unit(self.specular_albedo) || !unit(self.ambient_intensity) {
            return invalid("albedos and ambient intensity must lie in [0, 1]");
        }
        if self.roughness < 0.0 || self.phong_exponent < 0.0 || self.shininess < 0.0 {
            return invalid("roughness and exponents must be nonnegative");
        }
        let k = [self.k_ambient, self.k_diffuse, self.k_specular];
        if k.iter().any(|&w| w < 0.0) || k.iter().sum::<f64>() > 1.0 + 1e-12 {
            return invalid("component weights must be nonnegative with sum at most 1");
        }
        Ok(())
    }
}

/// Oren-Nayar coefficients `(A, B)` for roughness `sigma`.
pub fn oren_nayar_coefficients(sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    (1.0 - 0.5 * s2 / (s2 + 0.33), 0.45 * s2 / (s2 + 0.09))
}

/// Mirror reflection of `light` about `normal`.
pub fn reflect(light: Vec3, normal: Vec3) -> Vec3 {
    2.0 * normal.dot(light) * normal - light
}

/// Azimuth of the horizontal projection of `v`, `None` when the projection vanishes.
fn azimuth(v: Vec3) -> Option<f64> {
    (v.x.hypot(v.y) > 1e-12).then(|| v.y.atan2(v.x))
}

/// Image intensity of a surface element with unit outward normal `n`, clamped to `[0, 1]`.
pub fn brightness(n: Vec3, params: &ReflectanceParams, light: &LightSetup) -> Result<f64> {
    if (n.norm() - 1.0).abs() > UNIT_TOL {
        return invalid(format!("normal {n:?} is not unit length"));
    }
    let l = light.light;
    let v = light.viewer;
    let cos_i = n.dot(l).max(0.0);
    let diffuse = params.diffuse_albedo * cos_i;
    let out = match params.model {
        Model::Lambertian => diffuse,
        Model::OrenNayar => {
            let (a, b) = oren_nayar_coefficients(params.roughness);
            let theta_i = n.dot(l).clamp(-1.0, 1.0).acos();
            let theta_r = n.dot(v).clamp(-1.0, 1.0).acos();
            let alpha = theta_i.max(theta_r);
            let beta = theta_i.min(theta_r);
            let azimuthal = match (azimuth(l), azimuth(v)) {
                (Some(pi), Some(pr)) => (pr - pi).cos().max(0.0),
                _ => 0.0,
            };
            let tan_beta = if beta < std::f64::consts::FRAC_PI_2 { beta.tan() } else { 0.0 };
            params.diffuse_albedo * cos_i * (a + b * alpha.sin() * tan_beta * azimuthal)
        }
        Model::Phong => {
            let cos_s = reflect(l, n).dot(v).max(0.0);
            params.k_ambient * params.ambient_intensity
                + params.k_diffuse * diffuse
                + params.k_specular * params.specular_albedo * cos_s.powf(params.phong_exponent)
        }
        Model::BlinnPhong => {
            let h = (v + l).normalized().unwrap_or(n);
            let cos_d = n.dot(h).max(0.0);
            params.k_ambient * params.ambient_intensity
                + params.k_diffuse * diffuse
                + params.k_specular * params.specular_albedo * cos_d.powf(params.shininess)
        }
    };
    Ok(out.clamp(0.0, 1.0))
}

/// Brightness as a function of the vertical normal component alone, when the
/// model depends on nothing else: vertical light, and for Phong-type models
/// also a vertical viewer. Returns `None` for other setups.
pub fn vertical_profile(params: &ReflectanceParams, light: &LightSetup) -> Option<impl Fn(f64) -> f64> {
    let ok = light.is_vertical_light()
        && match params.model {
            Model::Lambertian | Model::OrenNayar => true,
            Model::Phong | Model::BlinnPhong => light.is_vertical_viewer(),
        };
    let p = *params;
    let ls = *light;
    ok.then_some(move |n3: f64| {
        let n3 = n3.clamp(0.0, 1.0);
        let n = Vec3::new((1.0 - n3 * n3).max(0.0).sqrt(), 0.0, n3);
        brightness(n.normalized().unwrap_or(Vec3::Z), &p, &ls).unwrap_or(0.0)
    })
}
