//! Preprocessing shared by the orthographic solvers: the image is turned into
//! a field of squared vertical normal components, extended past the mask, and
//! the boundary nodes are classified.

use super::{SfsProblem, MIN_INTENSITY};
use crate::error::{invalid, Error, Result};
use crate::field::Grid2D;
use crate::geom::Vec3;
use crate::reflectance::{oren_nayar_coefficients, vertical_profile, Model};

/// How characteristics move through the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Flow {
    /// Vertical light: the cost depends only on the vertical normal component.
    Isotropic,
    /// Oblique light with a Lambertian-equivalent image.
    Oblique { light: Vec3 },
}

#[derive(Debug, Clone)]
pub(crate) struct Shading {
    pub grid: Grid2D,
    /// Node belongs to the image domain.
    pub domain: Vec<bool>,
    /// Node value is prescribed.
    pub dirichlet: Vec<bool>,
    /// Boundary data at every node.
    pub g: Vec<f64>,
    /// Squared vertical normal component (oblique: squared equivalent
    /// intensity) inside the domain, linear extension outside.
    pub q: Vec<f64>,
    /// Outside node whose extension stays positive: the domain ends there
    /// without a silhouette.
    pub open: Vec<bool>,
    pub flow: Flow,
    /// Domain pixels raised to the minimum intensity.
    pub clamped: usize,
}

/// `F(q) = sqrt(q(1-q)) + asin(sqrt q)`, whose derivative is the eikonal
/// right-hand side `sqrt((1-q)/q)` written in `q = n3^2`.
pub(crate) fn cost_primitive(q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    (q * (1.0 - q)).sqrt() + q.sqrt().asin()
}

/// Mean of `sqrt((1-q)/q)` over `[qa, qb]`, exact for `q` linear in arc length.
pub(crate) fn mean_slowness(qa: f64, qb: f64) -> f64 {
    if (qa - qb).abs() <= 1e-12 * (qa + qb) + 1e-300 {
        let q = (0.5 * (qa + qb)).max(1e-300);
        return ((1.0 - q).max(0.0) / q).sqrt();
    }
    (cost_primitive(qb) - cost_primitive(qa)) / (qb - qa)
}

impl Shading {
    pub fn new(problem: &SfsProblem) -> Result<Self> {
        let image = &problem.image;
        let grid = image.grid;
        let n = grid.len();
        if grid.dims[0] < 3 || grid.dims[1] < 3 {
            return invalid("image needs at least 3x3 pixels");
        }
        let domain: Vec<bool> = (0..n).map(|k| image.in_domain(k)).collect();
        if !domain.iter().any(|&b| b) {
            return invalid("image mask is empty");
        }
        for (k, &v) in image.values.iter().enumerate() {
            if domain[k] && !(0.0..=1.0).contains(&v) {
                return invalid(format!("intensity {v} at node {k} outside [0, 1]"));
            }
        }
        let g = problem.boundary_values()?;

        let (flow, normal_component) = normal_component_map(problem)?;
        let mut q = vec![0.0; n];
        let mut clamped = 0;
        for k in 0..n {
            if domain[k] {
                let mut p = normal_component(image.values[k]);
                if p < MIN_INTENSITY {
                    p = MIN_INTENSITY;
                    clamped += 1;
                }
                q[k] = p * p;
            }
        }

        let mut dirichlet: Vec<bool> = domain.iter().map(|&b| !b).collect();
        if image.mask.is_none() {
            let [nx, ny] = grid.dims;
            for (k, d) in dirichlet.iter_mut().enumerate() {
                let (i, j) = grid.coords(k);
                *d = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
            }
        }
        if problem.pin_maxima {
            for k in 0..n {
                if domain[k] && image.values[k] >= 1.0 - 1e-12 {
                    dirichlet[k] = true;
                }
            }
        }
        if dirichlet.iter().zip(&domain).all(|(&d, &m)| d || !m) {
            return invalid("no free nodes left in the domain");
        }

        let mut open = vec![false; n];
        let extension = extend_outside(&grid, &domain, &q);
        for k in 0..n {
            if !domain[k] {
                match extension[k] {
                    Some(v) if v > 0.0 => {
                        open[k] = true;
                        q[k] = v.min(1.0);
                    }
                    Some(v) => q[k] = v,
                    None => q[k] = -1.0,
                }
            }
        }
        Ok(Shading { grid, domain, dirichlet, g, q, open, flow, clamped })
    }

    /// Silhouette-type outside neighbour of a domain node along the four axes.
    pub fn silhouette_neighbours(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbours(k).filter(move |&nb| !self.domain[nb] && !self.open[nb])
    }

    pub fn neighbours(&self, k: usize) -> impl Iterator<Item = usize> {
        let [nx, ny] = self.grid.dims;
        let (i, j) = (k % nx, k / nx);
        [
            (i > 0).then(|| k - 1),
            (i + 1 < nx).then(|| k + 1),
            (j > 0).then(|| k - nx),
            (j + 1 < ny).then(|| k + nx),
        ]
        .into_iter()
        .flatten()
    }
}

type ScalarMap = Box<dyn Fn(f64) -> f64>;

/// Inverts the brightness model: maps an intensity to the vertical normal
/// component (isotropic case) or to the Lambertian-equivalent intensity
/// (oblique case).
fn normal_component_map(problem: &SfsProblem) -> Result<(Flow, ScalarMap)> {
    let params = problem.params;
    params.validate()?;
    let light = problem.light;
    if light.is_vertical_light() {
        if params.model == Model::Lambertian {
            let albedo = params.diffuse_albedo;
            if albedo <= 0.0 {
                return invalid("diffuse albedo must be positive");
            }
            return Ok((Flow::Isotropic, Box::new(move |i: f64| (i / albedo).min(1.0))));
        }
        if let Some(profile) = vertical_profile(&params, &light) {
            let (lo, hi) = (profile(0.0), profile(1.0));
            if hi <= lo {
                return invalid("brightness model does not depend on the surface normal");
            }
            let invert = move |i: f64| {
                if i <= lo {
                    return 0.0;
                }
                if i >= hi {
                    return 1.0;
                }
                let (mut a, mut b) = (0.0, 1.0);
                for _ in 0..64 {
                    let m = 0.5 * (a + b);
                    if profile(m) < i {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            };
            return Ok((Flow::Isotropic, Box::new(invert)));
        }
    }
    let scale = match params.model {
        Model::Lambertian => params.diffuse_albedo,
        Model::OrenNayar if light.is_vertical_viewer() => {
            params.diffuse_albedo * oren_nayar_coefficients(params.roughness).0
        }
        m => {
            return Err(Error::Unsupported(format!(
                "{m:?} inverse shading needs vertical light (and a vertical viewer)"
            )))
        }
    };
    if scale <= 0.0 {
        return invalid("diffuse albedo must be positive");
    }
    Ok((Flow::Oblique { light: light.light }, Box::new(move |i: f64| (i / scale).min(1.0))))
}

/// Least-squares plane through the domain values in the 5x5 window around each
/// outside node, evaluated at the node. `None` when the window holds no domain
/// node; the window mean when the points are collinear.
fn extend_outside(grid: &Grid2D, domain: &[bool], q: &[f64]) -> Vec<Option<f64>> {
    let [nx, ny] = grid.dims;
    let mut out = vec![None; grid.len()];
    for k in 0..grid.len() {
        if domain[k] {
            continue;
        }
        let (i, j) = (k % nx, k / nx);
        // Normal equations of v ~ c0 + c1 di + c2 dj.
        let mut m = [[0.0f64; 3]; 3];
        let mut r = [0.0f64; 3];
        let mut count = 0usize;
        for dj in -2i64..=2 {
            for di in -2i64..=2 {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                    continue;
                }
                let kk = b as usize * nx + a as usize;
                if !domain[kk] {
                    continue;
                }
                let basis = [1.0, di as f64, dj as f64];
                for s in 0..3 {
                    for t in 0..3 {
                        m[s][t] += basis[s] * basis[t];
                    }
                    r[s] += basis[s] * q[kk];
                }
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        out[k] = Some(solve3(m, r).map_or(r[0] / m[0][0], |c| c[0]));
    }
    out
}

/// Cramer's rule for a 3x3 system; `None` when nearly singular.
fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if d.abs() <= 1e-9 * scale.powi(3) {
        return None;
    }
    let mut x = [0.0; 3];
    for c in 0..3 {
        let mut a = m;
        for row in 0..3 {
            a[row][c] = r[row];
        }
        x[c] = det(a) / d;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_derivative_is_the_eikonal_rhs() {
        for &q in &[0.1, 0.3, 0.5, 0.9] {
            let e = 1e-6;
            let num = (cost_primitive(q + e) - cost_primitive(q - e)) / (2.0 * e);
            assert!((num - ((1.0 - q) / q).sqrt()).abs() < 1e-6);
        }
        assert_eq!(cost_primitive(0.0), 0.0);
        assert!((cost_primitive(1.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn mean_slowness_matches_quadrature() {
        let (qa, qb) = (0.2, 0.7);
        let n = 200_000;
        let quad: f64 = (0..n)
            .map(|k| {
                let q = qa + (qb - qa) * (k as f64 + 0.5) / n as f64;
                ((1.0 - q) / q).sqrt()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean_slowness(qa, qb) - quad).abs() < 1e-9);
        assert!((mean_slowness(0.5, 0.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_fit_reproduces_linear_data() {
        let grid = Grid2D::square(0.0, 1.0, 8).unwrap();
        let domain: Vec<bool> = (0..64).map(|k| k % 8 < 5).collect();
        let q: Vec<f64> = (0..64).map(|k| 0.1 * (k % 8) as f64 + 0.05 * (k / 8) as f64).collect();
        let ext = extend_outside(&grid, &domain, &q);
        for k in 0..64 {
            if domain[k] {
                assert!(ext[k].is_none());
            } else if k % 8 == 5 {
                assert!((ext[k].unwrap() - q[k]).abs() < 1e-12, "node {k}");
            } else if k % 8 == 6 {
                // Only one domain column in reach: the fit degenerates to a mean.
                assert!(ext[k].is_some());
            } else {
                assert!(ext[k].is_none());
            }
        }
    }
}
