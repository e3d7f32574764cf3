//! Shape from shading: synthesizes images of heightfields under orthographic
//! and perspective cameras, and recovers orthographic heightfields from a
//! single image by fast sweeping or by a semi-Lagrangian fixed point in the
//! bounded (Kruzkov) variable `v = (1 - exp(-mu u)) / mu`.

mod semilagrangian;
mod shading;
mod vertical;

pub use semilagrangian::{fixed_point_operator, solve_fixed_point, FixedPointOperator};
pub use vertical::solve_vertical;

use crate::error::{invalid, Result};
use crate::field::ScalarField2D;
use crate::geom::Vec3;
use crate::reflectance::{brightness, LightSetup, ReflectanceParams};

/// Intensities below this are raised to it before inversion.
pub const MIN_INTENSITY: f64 = 1e-3;

/// Number of control directions scanned by the fixed-point operator.
pub const CONTROL_DIRECTIONS: usize = 64;

/// Projection and light placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Orthographic,
    /// Pinhole camera, light at infinity.
    PerspectiveLightAtInfinity,
    /// Pinhole camera with a point light at the optical centre.
    PerspectiveLightAtCenter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub projection: Projection,
    /// Distance from the optical centre to the image plane; unused when orthographic.
    pub focal_length: f64,
}

impl CameraModel {
    pub fn orthographic() -> Self {
        CameraModel { projection: Projection::Orthographic, focal_length: 1.0 }
    }

    pub fn perspective(projection: Projection, focal_length: f64) -> Result<Self> {
        if !(focal_length > 0.0) {
            return invalid(format!("focal length must be positive, got {focal_length}"));
        }
        Ok(CameraModel { projection, focal_length })
    }
}

/// Prescribed heights on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    Constant(f64),
    /// Read at the boundary nodes and at ray exit points.
    Field(ScalarField2D),
}

/// An inverse problem: one image, its lighting and material, and solver settings.
///
/// With a mask on the image, nodes outside it carry the boundary data and
/// grid-edge nodes inside it are ordinary unknowns. Without a mask the grid
/// edge carries the boundary data.
#[derive(Debug, Clone)]
pub struct SfsProblem {
    pub image: ScalarField2D,
    pub light: LightSetup,
    pub params: ReflectanceParams,
    pub camera: CameraModel,
    pub boundary: Boundary,
    /// Kruzkov parameter.
    pub mu: f64,
    /// Minimum running cost of one semi-Lagrangian step; `None` means half
    /// the grid spacing.
    pub step: Option<f64>,
    pub tol: f64,
    pub max_iterations: usize,
    /// Treat pixels of intensity 1 as boundary nodes holding the boundary data.
    pub pin_maxima: bool,
}

impl SfsProblem {
    /// Vertical light, unit-albedo Lambertian surface, orthographic camera,
    /// zero boundary height, `mu = 1`, `tol = 1e-8`, at most `1e5` iterations.
    pub fn new(image: ScalarField2D) -> Self {
        SfsProblem {
            image,
            light: LightSetup::vertical(),
            params: ReflectanceParams::lambertian(),
            camera: CameraModel::orthographic(),
            boundary: Boundary::Constant(0.0),
            mu: 1.0,
            step: None,
            tol: 1e-8,
            max_iterations: 100_000,
            pin_maxima: false,
        }
    }

    pub fn with_light(mut self, light: LightSetup) -> Self {
        self.light = light;
        self
    }

    pub fn with_params(mut self, params: ReflectanceParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return invalid(format!("mu must be positive, got {}", self.mu));
        }
        if let Some(h) = self.step {
            if !(h > 0.0 && h.is_finite()) {
                return invalid(format!("step must be positive, got {h}"));
            }
        }
        if !(self.tol > 0.0) {
            return invalid("tolerance must be positive");
        }
        if self.camera.projection != Projection::Orthographic {
            return Err(crate::Error::Unsupported("inverse shading is implemented for orthographic cameras only".into()));
        }
        Ok(())
    }

    pub fn step_length(&self) -> f64 {
        self.step.unwrap_or(0.5 * self.image.grid.min_spacing())
    }

    pub(crate) fn boundary_values(&self) -> Result<Vec<f64>> {
        let grid = self.image.grid;
        match &self.boundary {
            Boundary::Constant(c) => Ok(vec![*c; grid.len()]),
            Boundary::Field(f) if f.grid == grid => Ok(f.values.clone()),
            Boundary::Field(_) => invalid("boundary field must share the image grid"),
        }
    }
}

/// A recovered surface.
#[derive(Debug, Clone)]
pub struct SfsSolution {
    pub height: ScalarField2D,
    /// Kruzkov variable, in `[0, 1/mu)`.
    pub kruzkov: ScalarField2D,
    pub iterations: usize,
    /// Sup-norm change of the last iteration.
    pub residual: f64,
    pub converged: bool,
    /// Domain pixels raised to [`MIN_INTENSITY`].
    pub clamped_pixels: usize,
}

impl SfsSolution {
    pub(crate) fn from_height(height: ScalarField2D, mu: f64, iterations: usize, residual: f64, converged: bool, clamped: usize) -> Self {
        let kruzkov = height.map(|u| kruzkov(u, mu));
        SfsSolution { height, kruzkov, iterations, residual, converged, clamped_pixels: clamped }
    }
}

/// `(1 - exp(-mu u)) / mu`.
pub fn kruzkov(u: f64, mu: f64) -> f64 {
    -(-mu * u).exp_m1() / mu
}

/// Inverse of [`kruzkov`]; infinite at `v >= 1/mu`.
pub fn inverse_kruzkov(v: f64, mu: f64) -> f64 {
    let t = mu * v;
    if t >= 1.0 {
        f64::INFINITY
    } else {
        -(-t).ln_1p() / mu
    }
}

/// Right-hand side of the vertical-light eikonal equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EikonalRhs {
    pub value: f64,
    /// The intensity was below [`MIN_INTENSITY`] and was raised to it.
    pub clamped: bool,
}

/// `sqrt(1/I^2 - 1)` for an intensity in `[0, 1]`.
pub fn eikonal_rhs(intensity: f64) -> Result<EikonalRhs> {
    if !(intensity <= 1.0) {
        return invalid(format!("intensity {intensity} above 1"));
    }
    let clamped = intensity < MIN_INTENSITY;
    let i = intensity.max(MIN_INTENSITY);
    Ok(EikonalRhs { value: ((1.0 - i) * (1.0 + i)).sqrt() / i, clamped })
}

/// Unit normal and light direction at a pixel, given height and height gradient.
fn pixel_geometry(camera: &CameraModel, light: &LightSetup, p: [f64; 2], u: f64, du: [f64; 2]) -> (Vec3, LightSetup) {
    let f = camera.focal_length;
    let [x, y] = p;
    let xg = x * du[0] + y * du[1];
    match camera.projection {
        Projection::Orthographic => (Vec3::new(-du[0], -du[1], 1.0), *light),
        Projection::PerspectiveLightAtInfinity => (Vec3::new(f * du[0], f * du[1], u + xg), *light),
        Projection::PerspectiveLightAtCenter => {
            let r2 = x * x + y * y + f * f;
            let c = f * u / r2;
            let n = Vec3::new(f * du[0] - c * x, f * du[1] - c * y, xg + c * f);
            let l = Vec3::new(-x, -y, f) / r2.sqrt();
            (n, LightSetup { light: l, viewer: l })
        }
    }
}

/// Synthesizes the image of the heightfield `u`. Gradients are central
/// differences (one-sided on the grid edge); the image carries `u`'s mask and
/// is zero outside it.
pub fn render(u: &ScalarField2D, light: &LightSetup, params: &ReflectanceParams, camera: &CameraModel) -> Result<ScalarField2D> {
    params.validate()?;
    if camera.projection != Projection::Orthographic {
        if let Some(k) = (0..u.values.len()).find(|&k| u.in_domain(k) && !(u.values[k] >= 1.0)) {
            return invalid(format!("perspective rendering needs u >= 1, got {} at node {k}", u.values[k]));
        }
    }
    let grid = u.grid;
    let mut out = ScalarField2D::constant(grid, 0.0);
    out.mask = u.mask.clone();
    for k in 0..grid.len() {
        if !u.in_domain(k) {
            continue;
        }
        let (i, j) = grid.coords(k);
        let (n, ls) = pixel_geometry(camera, light, grid.point(i, j), u.values[k], u.gradient_central(i, j));
        let n = n.normalized().unwrap_or(Vec3::Z);
        out.values[k] = brightness(n, params, &ls)?;
    }
    Ok(out)
}

/// Left minus right side of the Lambertian perspective equation written in
/// `v = ln u`, per pixel, with central-difference gradients of `v`. Zero on
/// every pixel for an exact, noise-free rendering of `exp(v)`.
pub fn perspective_residual(v: &ScalarField2D, image: &ScalarField2D, light: &LightSetup, camera: &CameraModel) -> Result<ScalarField2D> {
    if v.grid != image.grid {
        return invalid("log-height and image must share a grid");
    }
    let f = camera.focal_length;
    let grid = v.grid;
    let mut out = ScalarField2D::constant(grid, 0.0);
    out.mask = v.mask.clone();
    for k in 0..grid.len() {
        if !v.in_domain(k) {
            continue;
        }
        let (i, j) = grid.coords(k);
        let [x, y] = grid.point(i, j);
        let dv = v.gradient_central(i, j);
        let g2 = dv[0] * dv[0] + dv[1] * dv[1];
        let xg = x * dv[0] + y * dv[1];
        let intensity = image.values[k];
        out.values[k] = match camera.projection {
            Projection::Orthographic => {
                return invalid("the perspective residual needs a perspective camera");
            }
            Projection::PerspectiveLightAtInfinity => {
                let l = light.light;
                let num = (f * l.x + l.z * x) * dv[0] + (f * l.y + l.z * y) * dv[1] + l.z;
                num / (f * f * g2 + (1.0 + xg) * (1.0 + xg)).sqrt() - intensity
            }
            Projection::PerspectiveLightAtCenter => {
                let r2 = x * x + y * y + f * f;
                intensity * ((r2 / (f * f)) * (f * f * g2 + xg * xg) + 1.0).sqrt() - 1.0
            }
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid2D;
    use proptest::prelude::*;

    fn hemisphere(n: usize) -> ScalarField2D {
        let grid = Grid2D::square(-1.1, 1.1, n).unwrap();
        ScalarField2D::from_fn(grid, |x, y| (1.0 - x * x - y * y).max(0.0).sqrt()).with_mask_fn(|x, y| x * x + y * y < 1.0)
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(eikonal_rhs(1.0).unwrap().value, 0.0);
        assert!((eikonal_rhs(0.5).unwrap().value - 3f64.sqrt()).abs() < 1e-14);
        assert!((eikonal_rhs(0.5f64.sqrt()).unwrap().value - 1.0).abs() < 1e-14);
        let dark = eikonal_rhs(0.0).unwrap();
        assert!(dark.clamped && dark.value.is_finite());
        assert!(eikonal_rhs(1.5).is_err());
    }

    #[test]
    fn kruzkov_round_trip() {
        assert!((inverse_kruzkov(0.5, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(inverse_kruzkov(1.0, 1.0), f64::INFINITY);
        for &u in &[0.0, 1e-9, 0.3, 4.0] {
            assert!((inverse_kruzkov(kruzkov(u, 2.0), 2.0) - u).abs() < 1e-12 * (1.0 + u));
        }
    }

    #[test]
    fn flat_surface_renders_white() {
        let grid = Grid2D::square(0.0, 1.0, 9).unwrap();
        let u = ScalarField2D::constant(grid, 0.3);
        let img = render(&u, &LightSetup::vertical(), &ReflectanceParams::lambertian(), &CameraModel::orthographic()).unwrap();
        assert!(img.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn hemisphere_renders_its_height() {
        let u = hemisphere(201);
        let img = render(&u, &LightSetup::vertical(), &ReflectanceParams::lambertian(), &CameraModel::orthographic()).unwrap();
        // Central differences are second order away from the rim.
        let err = img.max_abs_diff(&u, |k| {
            let (i, j) = u.grid.coords(k);
            let [x, y] = u.grid.point(i, j);
            x * x + y * y < 0.8
        });
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn tilted_plane_under_oblique_light() {
        let grid = Grid2D::square(0.0, 1.0, 5).unwrap();
        let u = ScalarField2D::from_fn(grid, |x, _| x);
        let light = LightSetup::with_light(Vec3::new(0.6, 0.0, 0.8)).unwrap();
        let img = render(&u, &light, &ReflectanceParams::lambertian(), &CameraModel::orthographic()).unwrap();
        for &v in &img.values {
            assert!((v - 0.2 / 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn perspective_needs_height_above_one() {
        let grid = Grid2D::square(-0.5, 0.5, 5).unwrap();
        let u = ScalarField2D::constant(grid, 0.5);
        let cam = CameraModel::perspective(Projection::PerspectiveLightAtInfinity, 1.0).unwrap();
        assert!(render(&u, &LightSetup::vertical(), &ReflectanceParams::lambertian(), &cam).is_err());
        assert!(CameraModel::perspective(Projection::PerspectiveLightAtCenter, 0.0).is_err());
    }

    #[test]
    fn perspective_residual_vanishes_on_renderings() {
        let grid = Grid2D::square(-0.4, 0.4, 161).unwrap();
        let u = ScalarField2D::from_fn(grid, |x, y| 2.0 + 0.3 * (2.0 * x).sin() * (3.0 * y).cos());
        let v = u.map(f64::ln);
        let interior = |k: usize| {
            let (i, j) = grid.coords(k);
            i > 0 && j > 0 && i < 160 && j < 160
        };
        let light = LightSetup::with_light(Vec3::new(0.2, -0.1, 1.0)).unwrap();
        for proj in [Projection::PerspectiveLightAtInfinity, Projection::PerspectiveLightAtCenter] {
            let cam = CameraModel::perspective(proj, 1.5).unwrap();
            let img = render(&u, &light, &ReflectanceParams::lambertian(), &cam).unwrap();
            let res = perspective_residual(&v, &img, &light, &cam).unwrap();
            let worst = (0..grid.len()).filter(|&k| interior(k)).fold(0.0f64, |m, k| m.max(res.values[k].abs()));
            assert!(worst < 1e-3, "{proj:?}: {worst}");
            // A wrong image is detected.
            let dim = img.map(|x| 0.9 * x);
            let res = perspective_residual(&v, &dim, &light, &cam).unwrap();
            assert!(res.values.iter().any(|r| r.abs() > 0.01));
        }
    }

    proptest! {
        #[test]
        fn kruzkov_maps_into_bounded_range(u in 0.0f64..50.0, mu in 0.1f64..5.0) {
            let v = kruzkov(u, mu);
            prop_assert!(v >= 0.0 && v <= 1.0 / mu);
        }
    }
}
