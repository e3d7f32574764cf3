//! Triangle meshes: closed solids built from heightfields, STL input and
//! output, and validation against the printability rules (no vertex on
//! another facet's edge, strictly positive coordinates, outward orientation,
//! every edge shared by exactly two facets).

mod isosurface;
mod stl;
mod validate;

pub use isosurface::extract_isosurface;

pub use stl::{decode_stl, encode_ascii, encode_binary, read_stl, write_stl, StlFormat};
pub use validate::{validate, weld, OrientationIssue, ValidationReport, WeldedMesh};

use crate::error::{invalid, Result};
use crate::field::ScalarField2D;
use crate::geom::Vec3;

/// One triangle with its unit outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub vertices: [Vec3; 3],
    pub normal: Vec3,
}

impl Facet {
    /// Facet with the right-hand-rule normal `(v2 - v1) x (v3 - v2)`; errors on
    /// zero area.
    pub fn new(vertices: [Vec3; 3]) -> Result<Self> {
        match winding_normal(&vertices) {
            Some(normal) => Ok(Facet { vertices, normal }),
            None => invalid(format!("degenerate facet {vertices:?}")),
        }
    }

    pub fn area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * (b - a).cross(c - b).norm()
    }

    /// Same triangle traversed the other way, normal negated.
    pub fn flipped(&self) -> Facet {
        let [a, b, c] = self.vertices;
        Facet { vertices: [a, c, b], normal: -self.normal }
    }
}

/// Unit normal from the vertex order, `None` for a degenerate triangle.
pub fn winding_normal(v: &[Vec3; 3]) -> Option<Vec3> {
    let n = (v[1] - v[0]).cross(v[2] - v[1]);
    let scale = (v[1] - v[0]).norm() * (v[2] - v[1]).norm();
    if !(n.norm() > 1e-14 * scale) {
        return None;
    }
    n.normalized()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub name: String,
    pub facets: Vec<Facet>,
}

impl TriangleMesh {
    pub fn new(name: impl Into<String>, facets: Vec<Facet>) -> Self {
        TriangleMesh { name: name.into(), facets }
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    /// Enclosed volume by the divergence theorem; positive for outward
    /// orientation of a closed mesh.
    pub fn signed_volume(&self) -> f64 {
        self.facets.iter().map(|f| f.vertices[0].dot(f.vertices[1].cross(f.vertices[2]))).sum::<f64>() / 6.0
    }

    /// Corner-wise bounds of all vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.facets.iter().flat_map(|f| f.vertices);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn translated(&self, by: Vec3) -> TriangleMesh {
        let facets = self
            .facets
            .iter()
            .map(|f| Facet { vertices: f.vertices.map(|v| v + by), normal: f.normal })
            .collect();
        TriangleMesh { name: self.name.clone(), facets }
    }

    /// Translation making every coordinate strictly positive: each axis whose
    /// minimum is at most zero is moved so that its minimum becomes `margin`.
    /// Returns the moved mesh and the shift applied.
    pub fn shifted_positive(&self, margin: f64) -> (TriangleMesh, Vec3) {
        let Some((lo, _)) = self.bounds() else {
            return (self.clone(), Vec3::ZERO);
        };
        let axis = |m: f64| if m <= 0.0 { margin - m } else { 0.0 };
        let shift = Vec3::new(axis(lo.x), axis(lo.y), axis(lo.z));
        (self.translated(shift), shift)
    }
}

/// Closed solid over the heightfield `u`: the top follows `u` with two
/// triangles per cell, the bottom is the plane `z = base_z`, and vertical
/// walls close the boundary of the cell set. Cells are the grid cells whose
/// four corners lie in `u`'s mask; cells touching the rest only at a corner
/// are dropped so that every edge has exactly two facets.
pub fn heightfield_to_solid(u: &ScalarField2D, base_z: f64, name: &str) -> Result<TriangleMesh> {
    let grid = u.grid;
    let [nx, ny] = grid.dims;
    let (cx, cy) = (nx - 1, ny - 1);
    let mut solid = vec![false; cx * cy];
    for j in 0..cy {
        for i in 0..cx {
            let corners = [grid.index(i, j), grid.index(i + 1, j), grid.index(i, j + 1), grid.index(i + 1, j + 1)];
            solid[j * cx + i] = corners.iter().all(|&k| u.in_domain(k));
        }
    }
    remove_diagonal_pinches(&mut solid, cx, cy);
    if !solid.iter().any(|&s| s) {
        return invalid("heightfield mask contains no complete cell");
    }
    for j in 0..ny {
        for i in 0..nx {
            let used = [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j.wrapping_sub(1))]
                .iter()
                .any(|&(a, b)| a < cx && b < cy && solid[b * cx + a]);
            if used && !(u.get(i, j) > base_z) {
                return invalid(format!("height {} at node ({i}, {j}) is not above the base {base_z}", u.get(i, j)));
            }
        }
    }

    let top = |i: usize, j: usize| {
        let [x, y] = grid.point(i, j);
        Vec3::new(x, y, u.get(i, j))
    };
    let bottom = |i: usize, j: usize| {
        let [x, y] = grid.point(i, j);
        Vec3::new(x, y, base_z)
    };
    let is_solid = |i: isize, j: isize| i >= 0 && j >= 0 && (i as usize) < cx && (j as usize) < cy && solid[j as usize * cx + i as usize];
    let mut facets = Vec::new();
    let mut push = |v: [Vec3; 3]| -> Result<()> {
        facets.push(Facet::new(v)?);
        Ok(())
    };
    for j in 0..cy {
        for i in 0..cx {
            if !solid[j * cx + i] {
                continue;
            }
            push([top(i, j), top(i + 1, j), top(i + 1, j + 1)])?;
            push([top(i, j), top(i + 1, j + 1), top(i, j + 1)])?;
            push([bottom(i, j), bottom(i + 1, j + 1), bottom(i + 1, j)])?;
            push([bottom(i, j), bottom(i, j + 1), bottom(i + 1, j + 1)])?;
            // Walls on the cell sides facing a non-solid cell, each side
            // walked counterclockwise seen from above so the outside is on the right.
            let (si, sj) = (i as isize, j as isize);
            let sides = [
                (!is_solid(si, sj - 1), (i, j), (i + 1, j)),
                (!is_solid(si + 1, sj), (i + 1, j), (i + 1, j + 1)),
                (!is_solid(si, sj + 1), (i + 1, j + 1), (i, j + 1)),
                (!is_solid(si - 1, sj), (i, j + 1), (i, j)),
            ];
            for (open, a, b) in sides {
                if open {
                    push([bottom(a.0, a.1), bottom(b.0, b.1), top(b.0, b.1)])?;
                    push([bottom(a.0, a.1), top(b.0, b.1), top(a.0, a.1)])?;
                }
            }
        }
    }
    Ok(TriangleMesh::new(name, facets))
}

/// Sphere approximated by a subdivided icosahedron: `20 * 4^levels` facets,
/// vertices on the sphere, outward orientation.
pub fn icosphere(center: Vec3, radius: f64, levels: u32, name: &str) -> Result<TriangleMesh> {
    if !(radius > 0.0) || !center.is_finite() {
        return invalid(format!("icosphere needs a positive radius, got {radius}"));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z) / (1.0 + t * t).sqrt())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut midpoints = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalized().unwrap_or(Vec3::Z));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(4 * tris.len());
        for [a, b, c] in tris {
            let (ab, bc, ca) = (mid(a, b, &mut verts), mid(b, c, &mut verts), mid(c, a, &mut verts));
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    let facets = tris
        .iter()
        .map(|t| Facet::new(t.map(|k| center + verts[k] * radius)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TriangleMesh::new(name, facets))
}

/// Clears one cell of every 2x2 block whose solid cells touch only diagonally,
/// until no such block remains.
fn remove_diagonal_pinches(solid: &mut [bool], cx: usize, cy: usize) {
    loop {
        let mut changed = false;
        for j in 0..cy.saturating_sub(1) {
            for i in 0..cx.saturating_sub(1) {
                let s = |a: usize, b: usize| solid[(j + b) * cx + i + a];
                let (s00, s10, s01, s11) = (s(0, 0), s(1, 0), s(0, 1), s(1, 1));
                if s00 && s11 && !s10 && !s01 {
                    solid[(j + 1) * cx + i + 1] = false;
                    changed = true;
                } else if s10 && s01 && !s00 && !s11 {
                    solid[(j + 1) * cx + i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::field::Grid2D;

    /// Axis-aligned cube `[lo, lo + side]^3` as 12 outward facets.
    pub(crate) fn cube(lo: f64, side: f64) -> TriangleMesh {
        let grid = Grid2D::new([lo, lo], [side, side], [2, 2]).unwrap();
        heightfield_to_solid(&ScalarField2D::constant(grid, lo + side), lo, "cube").unwrap()
    }

    #[test]
    fn single_cell_is_a_box() {
        let m = cube(1.0, 1.0);
        assert_eq!(m.len(), 12);
        assert!((m.signed_volume() - 1.0).abs() < 1e-14);
        assert!(validate(&m).is_valid());
    }

    #[test]
    fn facet_count_of_a_plateau() {
        let n = 6;
        let grid = Grid2D::square(1.0, 2.0, n).unwrap();
        let m = heightfield_to_solid(&ScalarField2D::constant(grid, 3.0), 1.0, "plateau").unwrap();
        assert_eq!(m.len(), 4 * (n - 1) * (n - 1) + 2 * 4 * (n - 1));
        assert!((m.signed_volume() - 2.0).abs() < 1e-12);
        assert!(validate(&m).is_valid());
    }

    #[test]
    fn hemisphere_solid_is_watertight() {
        let grid = Grid2D::square(-1.1, 1.1, 41).unwrap();
        let u = ScalarField2D::from_fn(grid, |x, y| 0.1 + (1.0 - x * x - y * y).max(0.0).sqrt())
            .with_mask_fn(|x, y| x * x + y * y < 1.0);
        let m = heightfield_to_solid(&u, 0.0, "dome").unwrap();
        let (shifted, shift) = m.shifted_positive(0.5);
        assert!(shift.x > 0.0 && shift.z > 0.0);
        let report = validate(&shifted);
        assert!(report.is_valid(), "{report:?}");
        assert!(shifted.signed_volume() > 0.0);
    }

    #[test]
    fn diagonal_cells_are_separated() {
        let grid = Grid2D::square(1.0, 3.0, 3).unwrap();
        // Nodes of the lower-left and upper-right cells only.
        let keep = [true, true, false, true, true, true, false, true, true];
        let u = ScalarField2D::constant(grid, 2.0).with_mask(keep.to_vec()).unwrap();
        let m = heightfield_to_solid(&u, 1.0, "pinch").unwrap();
        assert_eq!(m.len(), 12);
        assert!(validate(&m).is_valid());
    }

    #[test]
    fn icosphere_is_closed_and_outward() {
        let m = icosphere(Vec3::new(2.0, 2.0, 2.0), 1.0, 3, "ball").unwrap();
        assert_eq!(m.len(), 1280);
        assert!(validate(&m).is_valid());
        let v = m.signed_volume();
        assert!(v > 0.0 && v < 4.0 / 3.0 * std::f64::consts::PI);
        assert!(4.0 / 3.0 * std::f64::consts::PI - v < 0.05);
    }

    #[test]
    fn height_below_base_is_rejected() {
        let grid = Grid2D::square(1.0, 2.0, 3).unwrap();
        assert!(heightfield_to_solid(&ScalarField2D::constant(grid, 0.5), 1.0, "x").is_err());
        assert!(Facet::new([Vec3::X, Vec3::X, Vec3::Z]).is_err());
    }
}
