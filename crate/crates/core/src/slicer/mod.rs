//! From a closed mesh to printer commands: horizontal slicing into layer
//! contours, infill curves, toolpath planning, G-code and print metrics.

mod gcode;
mod infill;
mod toolpath;

pub use gcode::{emit_gcode, parse_gcode, GCodeProgram, Linear, DEFAULT_FLOW};
pub use infill::{infill_eikonal, infill_square, Infill};
pub use toolpath::{metrics, plan_toolpath, Feeds, Metrics, Move, ToolPath};

use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::field::{dist, Polyline2D};
use crate::geom::Vec3;
use crate::mesh::{validate, TriangleMesh};

/// Contour points closer than this, relative to the coordinate magnitude, are merged.
pub const DUPLICATE_TOL: f64 = 1e-9;

/// Relative shift of a slicing plane that passes through a mesh vertex.
pub const PLANE_SHIFT: f64 = 1e-7;

/// Cross-section of the object at height `z`. Outer boundaries run
/// counter-clockwise and holes clockwise, so the material is on the left.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub z: f64,
    pub contours: Vec<Polyline2D>,
}

impl Layer {
    /// Even-odd membership over all contours.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.contours.iter().filter(|c| c.contains(p)).count() % 2 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.contours.is_empty()
    }

    /// Corner-wise bounds of all contour vertices.
    pub fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        let mut it = self.contours.iter().flat_map(|c| c.vertices.iter().copied());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])))
    }

    /// Total contour length.
    pub fn perimeter(&self) -> f64 {
        self.contours.iter().map(Polyline2D::length).sum()
    }
}

/// Cuts the mesh with the planes `z = z_lo + k * layer_height` up to the top
/// of the mesh. A plane through a vertex is raised by `PLANE_SHIFT * layer_height`
/// (repeatedly if needed). Layers with no cross-section are omitted.
pub fn slice(mesh: &TriangleMesh, layer_height: f64) -> Result<Vec<Layer>> {
    if !(layer_height > 0.0 && layer_height.is_finite()) {
        return invalid(format!("layer height must be positive, got {layer_height}"));
    }
    let (lo, hi) = mesh.bounds().ok_or_else(|| Error::InvalidInput("empty mesh".into()))?;
    let report = validate(mesh);
    if !report.is_watertight() {
        return invalid(format!("cannot slice a mesh with {} open edges", report.open_edges.len()));
    }
    let count = ((hi.z - lo.z) / layer_height).floor() as usize + 1;
    let mut layers = Vec::new();
    for k in 0..count {
        let mut z = lo.z + k as f64 * layer_height;
        while mesh.facets.iter().any(|f| f.vertices.iter().any(|v| v.z == z)) {
            z += PLANE_SHIFT * layer_height;
        }
        let layer = slice_at(mesh, z)?;
        if !layer.is_empty() {
            layers.push(layer);
        }
    }
    Ok(layers)
}

/// Cross-section at a height that passes through no vertex.
pub fn slice_at(mesh: &TriangleMesh, z: f64) -> Result<Layer> {
    type Key = [u64; 6];
    let key = |a: Vec3, b: Vec3| -> Key {
        let (a, b) = if (a.x, a.y, a.z) < (b.x, b.y, b.z) { (a, b) } else { (b, a) };
        [a.x, a.y, a.z, b.x, b.y, b.z].map(f64::to_bits)
    };
    let crossing = |a: Vec3, b: Vec3| -> [f64; 2] {
        // Canonical order gives neighbouring facets the same bits.
        let (a, b) = if (a.x, a.y, a.z) < (b.x, b.y, b.z) { (a, b) } else { (b, a) };
        let t = (z - a.z) / (b.z - a.z);
        [a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)]
    };
    // Segment from the edge where the cut enters the facet to the edge where it leaves.
    let mut next: HashMap<Key, (Key, [f64; 2])> = HashMap::new();
    let mut starts: Vec<Key> = Vec::new();
    for f in &mesh.facets {
        let v = f.vertices;
        if v.iter().any(|p| p.z == z) {
            return invalid(format!("slicing plane z = {z} passes through a vertex"));
        }
        let mut cuts: Vec<(Key, [f64; 2])> = Vec::with_capacity(2);
        for e in 0..3 {
            let (a, b) = (v[e], v[(e + 1) % 3]);
            if (a.z < z) != (b.z < z) {
                cuts.push((key(a, b), crossing(a, b)));
            }
        }
        if cuts.is_empty() {
            continue;
        }
        if cuts.len() != 2 {
            return invalid(format!("facet cut in {} points at z = {z}", cuts.len()));
        }
        // Material lies on the left of the direction up x normal.
        let dir = Vec3::Z.cross(f.normal);
        let (p, q) = (cuts[0].1, cuts[1].1);
        let forward = (q[0] - p[0]) * dir.x + (q[1] - p[1]) * dir.y >= 0.0;
        let (from, to) = if forward { (cuts[0], cuts[1]) } else { (cuts[1], cuts[0]) };
        if next.insert(from.0, (to.0, from.1)).is_some() {
            return invalid(format!("two cut segments start on the same edge at z = {z}"));
        }
        starts.push(from.0);
    }
    let mut contours = Vec::new();
    let mut used: HashMap<Key, bool> = HashMap::new();
    for s in starts {
        if used.contains_key(&s) {
            continue;
        }
        let mut loop_pts = Vec::new();
        let mut cur = s;
        loop {
            if used.insert(cur, true).is_some() {
                return invalid(format!("cut segments at z = {z} do not close into loops"));
            }
            let (to, p) = *next.get(&cur).ok_or_else(|| {
                Error::InvalidInput(format!("cut at z = {z} ends on an edge with no continuation ({} loops closed)", contours.len()))
            })?;
            loop_pts.push(p);
            cur = to;
            if cur == s {
                break;
            }
        }
        // Cuts through a facet corner region leave near-coincident points.
        let scale = loop_pts.iter().fold(1.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
        let tol = DUPLICATE_TOL * scale;
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(loop_pts.len());
        for p in loop_pts {
            if pts.last().is_none_or(|&q| dist(p, q) > tol) {
                pts.push(p);
            }
        }
        while pts.len() > 1 && dist(pts[0], pts[pts.len() - 1]) <= tol {
            pts.pop();
        }
        if pts.len() >= 3 {
            contours.push(Polyline2D::new(pts, true)?);
        }
    }
    Ok(Layer { z, contours })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{extract_contours, Grid2D, ScalarField2D};
    use crate::mesh::{heightfield_to_solid, icosphere};
    use std::f64::consts::PI;

    pub(crate) fn block(lo: [f64; 3], hi: [f64; 3]) -> TriangleMesh {
        let grid = Grid2D::new([lo[0], lo[1]], [hi[0] - lo[0], hi[1] - lo[1]], [2, 2]).unwrap();
        heightfield_to_solid(&ScalarField2D::constant(grid, hi[2]), lo[2], "block").unwrap()
    }

    #[test]
    fn cube_cross_section_is_its_square() {
        let cube = block([1.0; 3], [11.0; 3]);
        let layer = slice_at(&cube, 6.0).unwrap();
        assert_eq!(layer.contours.len(), 1);
        assert!((layer.perimeter() - 40.0).abs() < 1e-12);
        assert!(layer.contours[0].signed_area() > 0.0);
        assert!((layer.contours[0].signed_area() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_equator_is_a_circle() {
        let ball = icosphere(Vec3::new(5.0, 5.0, 5.0), 2.0, 3, "ball").unwrap();
        let layer = slice_at(&ball, 5.0 + 1e-9).unwrap();
        assert_eq!(layer.contours.len(), 1);
        let p = layer.perimeter();
        // Between the inscribed polygon and the true circle.
        assert!(p < 2.0 * PI * 2.0 && p > 0.99 * 2.0 * PI * 2.0, "{p}");
    }

    #[test]
    fn disjoint_blocks_give_two_contours_per_layer() {
        let mut m = block([1.0; 3], [2.0; 3]);
        m.facets.extend(block([3.0, 1.0, 1.0], [4.0, 2.0, 2.0]).facets);
        let layers = slice(&m, 0.25).unwrap();
        assert_eq!(layers.len(), 4);
        for l in &layers {
            assert_eq!(l.contours.len(), 2);
            assert!(l.contours.iter().all(|c| c.signed_area() > 0.0));
        }
        // The bottom plane is raised off the base facets.
        assert!(layers[0].z > 1.0 && layers[0].z < 1.0 + 1e-6);
    }

    #[test]
    fn hollow_box_has_a_clockwise_hole() {
        let outer = block([1.0; 3], [5.0; 3]);
        let inner = block([2.0; 3], [4.0; 3]);
        let mut m = outer.clone();
        m.facets.extend(inner.facets.iter().map(|f| f.flipped()));
        let layer = slice_at(&m, 3.0).unwrap();
        let mut areas: Vec<f64> = layer.contours.iter().map(|c| c.signed_area()).collect();
        areas.sort_by(f64::total_cmp);
        assert!((areas[0] + 4.0).abs() < 1e-9 && (areas[1] - 16.0).abs() < 1e-9);
        assert!(layer.contains([1.5, 1.5]) && !layer.contains([3.0, 3.0]));
    }

    /// Layer shaped like a phone holder seen from above: a base bar with two
    /// thin slanted arms, as the below-zero region of a union of capsules.
    pub(crate) fn two_branch_layer() -> Layer {
        let capsule = |p: [f64; 2], a: [f64; 2], b: [f64; 2], r: f64| {
            let d = [b[0] - a[0], b[1] - a[1]];
            let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
            (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1]) - r
        };
        let grid = Grid2D::new([-10.0, -5.0], [0.05, 0.05], [401, 401]).unwrap();
        let field = ScalarField2D::from_fn(grid, |x, y| {
            let p = [x, y];
            capsule(p, [-8.0, -3.0], [8.0, -3.0], 1.2)
                .min(capsule(p, [-6.0, -3.0], [-2.5, 13.0], 1.2))
                .min(capsule(p, [6.0, -3.0], [2.5, 13.0], 1.2))
        });
        let contours = extract_contours(&field, 0.0).into_iter().filter(|c| c.closed).collect();
        Layer { z: 0.2, contours }
    }

    #[test]
    fn eikonal_infill_travels_less_than_square_on_thin_branches() {
        let layer = two_branch_layer();
        assert_eq!(layer.contours.len(), 1);
        let feeds = Feeds::default();
        let plan = |fill: Infill| metrics(&plan_toolpath(std::slice::from_ref(&layer), &[fill], &feeds).unwrap());
        let eik = plan(infill_eikonal(&layer, 0.6).unwrap());
        let sq = plan(infill_square(&layer, 0.6).unwrap());
        assert!(eik.travel_moves < sq.travel_moves);
        assert!(eik.travel_length_mm < sq.travel_length_mm);
        assert!(eik.travel_length_mm + eik.material_length_mm < sq.travel_length_mm + sq.material_length_mm);
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut m = block([1.0; 3], [2.0; 3]);
        m.facets.pop();
        assert!(slice(&m, 0.1).is_err());
        assert!(slice(&block([1.0; 3], [2.0; 3]), 0.0).is_err());
    }
}
