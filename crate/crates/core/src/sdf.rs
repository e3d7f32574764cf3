//! Signed distance to a closed triangle mesh. The magnitude is the distance
//! to the nearest facet; the sign comes from the total solid angle the mesh
//! subtends, which is 4π inside and 0 outside.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::field::{Grid3D, ScalarField3D};
use crate::geom::Vec3;
use crate::mesh::{validate, Facet, TriangleMesh};

/// Points closer than this to the surface are on it and count as inside.
pub const ON_SURFACE: f64 = 1e-9;

/// Euclidean distance from `p` to the closed triangle.
pub fn point_triangle_distance(p: Vec3, facet: &Facet) -> f64 {
    (p - closest_point(p, facet.vertices)).norm()
}

/// Nearest point of triangle `[a, b, c]` to `p`, by Voronoi region of the
/// vertices, edges and face.
pub fn closest_point(p: Vec3, [a, b, c]: [Vec3; 3]) -> Vec3 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(ap), ac.dot(ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(bp), ac.dot(bp));
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(cp), ac.dot(cp));
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = va + vb + vc;
    a + ab * (vb / denom) + ac * (vc / denom)
}

/// Signed solid angle of the facet seen from `p`, positive when `p` is on
/// the side opposite the normal. `None` when `p` lies on the triangle, where
/// the angle jumps between -2π and 2π.
pub fn solid_angle(p: Vec3, facet: &Facet) -> Option<f64> {
    let [a, b, c] = facet.vertices.map(|v| v - p);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    let scale = la * lb * lc;
    if scale == 0.0 || (det.abs() <= 1e-12 * scale && den <= 0.0) {
        return None;
    }
    Some(2.0 * det.atan2(den))
}

/// Facets of a watertight mesh with their bounding boxes, ready for queries.
#[derive(Debug, Clone)]
pub struct SignedDistance {
    facets: Vec<Facet>,
    boxes: Vec<(Vec3, Vec3)>,
    bounds: (Vec3, Vec3),
}

impl SignedDistance {
    /// Errors unless every edge of the mesh has exactly two facets.
    pub fn new(mesh: &TriangleMesh) -> Result<Self> {
        let Some(bounds) = mesh.bounds() else {
            return invalid("signed distance of an empty mesh");
        };
        let report = validate(mesh);
        if !report.is_watertight() {
            return invalid(format!(
                "mesh is not watertight ({} open, {} non-manifold edges); the sign is undefined",
                report.open_edges.len(),
                report.nonmanifold_edges.len()
            ));
        }
        let boxes = mesh
            .facets
            .iter()
            .map(|f| {
                let [a, b, c] = f.vertices;
                (a.min(b).min(c), a.max(b).max(c))
            })
            .collect();
        Ok(SignedDistance { facets: mesh.facets.clone(), boxes, bounds })
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        self.bounds
    }

    /// Distance to the surface. Facets whose bounding box is already farther
    /// than the best distance found are skipped.
    pub fn unsigned(&self, p: Vec3) -> f64 {
        let box_dist2 = |(lo, hi): &(Vec3, Vec3)| {
            let d = (*lo - p).max(p - *hi).max(Vec3::ZERO);
            d.norm2()
        };
        // Seed with the facet whose box is nearest so the prefilter bites early.
        let seed = (0..self.facets.len())
            .min_by(|&i, &j| box_dist2(&self.boxes[i]).total_cmp(&box_dist2(&self.boxes[j])))
            .unwrap_or(0);
        let mut best = point_triangle_distance(p, &self.facets[seed]);
        let mut best2 = best * best;
        for (f, b) in self.facets.iter().zip(&self.boxes) {
            if box_dist2(b) < best2 {
                let d = point_triangle_distance(p, f);
                if d < best {
                    best = d;
                    best2 = d * d;
                }
            }
        }
        best
    }

    /// Sum of facet solid angles: 4π inside, 0 outside. `None` on the surface.
    pub fn total_solid_angle(&self, p: Vec3) -> Option<f64> {
        self.facets.iter().map(|f| solid_angle(p, f)).sum()
    }

    /// Negative inside, positive outside; on-surface points get `-distance`.
    pub fn eval(&self, p: Vec3) -> f64 {
        let d = self.unsigned(p);
        if d < ON_SURFACE {
            return -d;
        }
        let (lo, hi) = self.bounds;
        let outside_box = (0..3).any(|a| p[a] < lo[a] || p[a] > hi[a]);
        if outside_box {
            return d;
        }
        match self.total_solid_angle(p) {
            Some(omega) if omega > 2.0 * PI => -d,
            Some(_) => d,
            None => -d,
        }
    }
}

pub fn signed_distance(mesh: &TriangleMesh, p: Vec3) -> Result<f64> {
    Ok(SignedDistance::new(mesh)?.eval(p))
}

/// Signed distance at every node of `grid`, in parallel over nodes.
pub fn sample_sdf(mesh: &TriangleMesh, grid: Grid3D) -> Result<ScalarField3D> {
    let sdf = SignedDistance::new(mesh)?;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = grid.coords(idx);
            sdf.eval(Vec3::from_array(grid.point(i, j, k)))
        })
        .collect();
    ScalarField3D::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn facet(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Facet {
        Facet::new([Vec3::from_array(a), Vec3::from_array(b), Vec3::from_array(c)]).unwrap()
    }

    /// Minimum over a dense barycentric lattice of the triangle.
    fn sampled_distance(p: Vec3, f: &Facet, n: usize) -> f64 {
        let [a, b, c] = f.vertices;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n - i {
                let (s, t) = (i as f64 / n as f64, j as f64 / n as f64);
                best = best.min((a + (b - a) * s + (c - a) * t - p).norm());
            }
        }
        best
    }

    #[test]
    fn distance_simple_cases() {
        let f = facet([-1.0, -1.0, 0.0], [2.0, -1.0, 0.0], [-1.0, 2.0, 0.0]);
        assert!((point_triangle_distance(Vec3::new(0.0, 0.0, 1.0), &f) - 1.0).abs() < 1e-15);
        assert!(point_triangle_distance(Vec3::new(0.2, 0.3, 0.0), &f) < 1e-15);
    }

    #[test]
    fn distance_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = facet([0.0, 0.0, 0.0], [1.0, 0.2, 0.1], [0.3, 0.9, -0.2]);
        for _ in 0..6 {
            let p = Vec3::new(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..1.0));
            let exact = point_triangle_distance(p, &f);
            let sampled = sampled_distance(p, &f, 1400);
            // The lattice spacing bounds how far the sampled minimum can sit above.
            assert!(sampled >= exact - 1e-12 && sampled - exact < 1.5e-3, "{p:?} {exact} {sampled}");
        }
    }

    #[test]
    fn octant_subtends_an_eighth_of_the_sphere() {
        let f = facet([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
        let omega = solid_angle(Vec3::ZERO, &f).unwrap();
        assert!((omega - PI / 2.0).abs() < 1e-12, "{omega}");
        assert!((solid_angle(Vec3::ZERO, &f.flipped()).unwrap() + PI / 2.0).abs() < 1e-12);
        let far = solid_angle(Vec3::new(1e3, 1e3, 1e3), &f).unwrap();
        assert!(far.abs() < 1e-6);
        assert!(solid_angle(Vec3::new(0.3, 0.3, 0.4), &f).is_none());
    }

    #[test]
    fn solid_angle_matches_direction_lattice() {
        // Fraction of a low-discrepancy direction set whose ray from p hits the facet.
        let f = facet([0.2, -0.4, 1.0], [1.1, 0.3, 0.7], [-0.3, 0.8, 1.3]);
        let p = Vec3::new(0.1, 0.05, -0.2);
        let n = 10_000_000;
        let golden = PI * (3.0 - 5f64.sqrt());
        let [a, b, c] = f.vertices.map(|v| v - p);
        let normal = (b - a).cross(c - a);
        let hits = (0..n)
            .into_par_iter()
            .filter(|&k| {
                let z = 1.0 - (2 * k + 1) as f64 / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = k as f64 * golden;
                let d = Vec3::new(r * phi.cos(), r * phi.sin(), z);
                let dn = d.dot(normal);
                if dn.abs() < 1e-300 {
                    return false;
                }
                let x = d * (a.dot(normal) / dn);
                if a.dot(normal) / dn <= 0.0 {
                    return false;
                }
                let s1 = (b - a).cross(x - a).dot(normal);
                let s2 = (c - b).cross(x - b).dot(normal);
                let s3 = (a - c).cross(x - c).dot(normal);
                s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0
            })
            .count();
        let estimate = 4.0 * PI * hits as f64 / n as f64;
        let omega = solid_angle(p, &f).unwrap();
        assert!((omega.abs() - estimate).abs() < 1e-3, "{omega} {estimate}");
    }

    #[test]
    fn sphere_inside_and_outside() {
        let ball = icosphere(Vec3::ZERO, 1.0, 3, "ball").unwrap();
        assert_eq!(ball.len(), 1280);
        let sdf = SignedDistance::new(&ball).unwrap();
        assert!((sdf.eval(Vec3::ZERO) + 1.0).abs() < 0.01);
        assert!((sdf.eval(Vec3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 0.01);
        let vertex = ball.facets[17].vertices[1];
        let on = sdf.eval(vertex);
        assert!(on.abs() < 1e-9 && on <= 0.0);
        let omega = sdf.total_solid_angle(Vec3::new(0.1, -0.2, 0.3)).unwrap();
        assert!((omega - 4.0 * PI).abs() < 1e-6);
        assert!(sdf.total_solid_angle(Vec3::new(0.9, 0.9, 0.0)).unwrap().abs() < 1e-6);
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut ball = icosphere(Vec3::ZERO, 1.0, 1, "ball").unwrap();
        ball.facets.pop();
        assert!(signed_distance(&ball, Vec3::ZERO).is_err());
    }

    #[test]
    fn sampled_field_has_unit_gradient_away_from_surface_and_centre() {
        let ball = icosphere(Vec3::ZERO, 1.0, 3, "ball").unwrap();
        let grid = Grid3D::covering([-1.6; 3], [1.6; 3], 0.1).unwrap();
        let field = sample_sdf(&ball, grid).unwrap();
        let h = 0.1;
        let mut checked = 0;
        for idx in 0..grid.len() {
            let (i, j, k) = grid.coords(idx);
            if [i, j, k].iter().zip(grid.dims).any(|(&c, n)| c == 0 || c + 1 == n) {
                continue;
            }
            let d = field.values[idx];
            let r = Vec3::from_array(grid.point(i, j, k)).norm();
            // Medial axis of the ball is its centre.
            if d.abs() <= 2.0 * h + 0.01 || r <= 2.0 * h {
                continue;
            }
            let g = Vec3::from_array(field.gradient_central(i, j, k)).norm();
            assert!((g - 1.0).abs() < 0.05, "node {i},{j},{k}: {g}");
            checked += 1;
        }
        assert!(checked > 1000);
    }

    #[test]
    fn cube_sum_of_solid_angles_is_quantized() {
        let cube = crate::mesh::tests::cube(1.0, 1.0);
        let sdf = SignedDistance::new(&cube).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = Vec3::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
            let omega = sdf.total_solid_angle(p).unwrap();
            assert!(omega.abs() < 1e-6 || (omega - 4.0 * PI).abs() < 1e-6, "{omega}");
        }
    }

    proptest! {
        #[test]
        fn signed_distance_is_one_lipschitz(
            a in prop::array::uniform3(-2.0f64..2.0),
            b in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let ball = icosphere(Vec3::new(0.1, 0.0, -0.1), 0.9, 2, "ball").unwrap();
            let sdf = SignedDistance::new(&ball).unwrap();
            let (p, q) = (Vec3::from_array(a), Vec3::from_array(b));
            prop_assert!((sdf.eval(p) - sdf.eval(q)).abs() <= (p - q).norm() + 1e-12);
        }
    }
}
