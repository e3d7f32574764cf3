//! Mesh checks: vertex welding, T-junctions, non-positive coordinates,
//! orientation and watertightness.

use std::collections::HashMap;
use std::fmt;

use super::{winding_normal, TriangleMesh};
use crate::geom::Vec3;

/// Welding tolerance relative to the bounding-box diagonal.
pub const WELD_FRACTION: f64 = 1e-6;
/// Largest accepted distance between a stored unit normal and the winding normal.
pub const NORMAL_TOL: f64 = 1e-3;

/// Indexed form of a mesh with coincident vertices merged.
#[derive(Debug, Clone)]
pub struct WeldedMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub tolerance: f64,
}

type Cell = (i64, i64, i64);

fn cell_of(p: Vec3, size: f64) -> Cell {
    ((p.x / size).floor() as i64, (p.y / size).floor() as i64, (p.z / size).floor() as i64)
}

/// Merges vertices closer than `tolerance` (first come, first kept).
pub fn weld(mesh: &TriangleMesh, tolerance: f64) -> WeldedMesh {
    let size = tolerance.max(f64::MIN_POSITIVE);
    let mut buckets: HashMap<Cell, Vec<usize>> = HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::with_capacity(mesh.facets.len());
    for f in &mesh.facets {
        let mut tri = [0usize; 3];
        for (c, &p) in f.vertices.iter().enumerate() {
            let (cx, cy, cz) = cell_of(p, size);
            let mut found = None;
            'search: for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if let Some(ids) = buckets.get(&(cx + dx, cy + dy, cz + dz)) {
                            if let Some(&id) = ids.iter().find(|&&id| (vertices[id] - p).norm() <= tolerance) {
                                found = Some(id);
                                break 'search;
                            }
                        }
                    }
                }
            }
            tri[c] = found.unwrap_or_else(|| {
                vertices.push(p);
                buckets.entry((cx, cy, cz)).or_default().push(vertices.len() - 1);
                vertices.len() - 1
            });
        }
        triangles.push(tri);
    }
    WeldedMesh { vertices, triangles, tolerance }
}

/// A vertex lying inside another facet's edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TJunction {
    pub vertex: Vec3,
    pub edge: [Vec3; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrientationIssue {
    /// Stored normal disagrees with the vertex order.
    NormalMismatch { facet: usize },
    /// Two facets traverse a shared edge in the same direction.
    InconsistentWinding { edge: [Vec3; 2] },
    /// Closed and consistently wound, but enclosing negative volume.
    InwardFacing,
}

/// Itemized defects; empty lists mean the rule holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// Vertices lying inside another facet's edge.
    pub t_junctions: Vec<TJunction>,
    /// Distinct vertices with a coordinate at or below zero.
    pub non_positive: Vec<Vec3>,
    pub orientation: Vec<OrientationIssue>,
    /// Edges used by exactly one facet.
    pub open_edges: Vec<[Vec3; 2]>,
    /// Edges used by more than two facets.
    pub nonmanifold_edges: Vec<[Vec3; 2]>,
    /// Facets of zero area after welding.
    pub degenerate: Vec<usize>,
}

impl ValidationReport {
    pub fn defect_count(&self) -> usize {
        self.t_junctions.len()
            + self.non_positive.len()
            + self.orientation.len()
            + self.open_edges.len()
            + self.nonmanifold_edges.len()
            + self.degenerate.len()
    }

    pub fn is_valid(&self) -> bool {
        self.defect_count() == 0
    }

    pub fn is_watertight(&self) -> bool {
        self.open_edges.is_empty() && self.nonmanifold_edges.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        for t in &self.t_junctions {
            writeln!(f, "vertex on edge: {:?} lies on {:?}-{:?}", t.vertex, t.edge[0], t.edge[1])?;
        }
        for v in &self.non_positive {
            writeln!(f, "non-positive coordinate: {v:?}")?;
        }
        for o in &self.orientation {
            match o {
                OrientationIssue::NormalMismatch { facet } => writeln!(f, "orientation mismatch: facet {facet}")?,
                OrientationIssue::InconsistentWinding { edge } => {
                    writeln!(f, "inconsistent winding on edge {:?}-{:?}", edge[0], edge[1])?
                }
                OrientationIssue::InwardFacing => writeln!(f, "facets face inward")?,
            }
        }
        for e in &self.open_edges {
            writeln!(f, "open edge: {:?}-{:?}", e[0], e[1])?;
        }
        for e in &self.nonmanifold_edges {
            writeln!(f, "edge shared by more than two facets: {:?}-{:?}", e[0], e[1])?;
        }
        for d in &self.degenerate {
            writeln!(f, "degenerate facet {d}")?;
        }
        Ok(())
    }
}

/// Checks every rule on `mesh` after welding vertices within
/// `1e-6` of the bounding-box diagonal.
pub fn validate(mesh: &TriangleMesh) -> ValidationReport {
    let mut report = ValidationReport::default();
    let Some((lo, hi)) = mesh.bounds() else {
        return report;
    };
    let tol = WELD_FRACTION * (hi - lo).norm().max(f64::MIN_POSITIVE);
    let w = weld(mesh, tol);

    for (k, f) in mesh.facets.iter().enumerate() {
        match winding_normal(&f.vertices) {
            Some(n) if (n - f.normal).norm() <= NORMAL_TOL => {}
            _ => report.orientation.push(OrientationIssue::NormalMismatch { facet: k }),
        }
    }
    report.non_positive = w.vertices.iter().copied().filter(|v| v.x <= 0.0 || v.y <= 0.0 || v.z <= 0.0).collect();

    // Directed edge uses per undirected edge.
    let mut edges: HashMap<(usize, usize), Vec<bool>> = HashMap::new();
    for (k, t) in w.triangles.iter().enumerate() {
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            report.degenerate.push(k);
            continue;
        }
        for c in 0..3 {
            let (a, b) = (t[c], t[(c + 1) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default().push(a < b);
        }
    }
    let mut keys: Vec<&(usize, usize)> = edges.keys().collect();
    keys.sort_unstable();
    for &(a, b) in keys {
        let uses = &edges[&(a, b)];
        let seg = [w.vertices[a], w.vertices[b]];
        match uses.len() {
            1 => report.open_edges.push(seg),
            2 if uses[0] == uses[1] => report.orientation.push(OrientationIssue::InconsistentWinding { edge: seg }),
            2 => {}
            _ => report.nonmanifold_edges.push(seg),
        }
    }
    let consistent = !report.orientation.iter().any(|o| matches!(o, OrientationIssue::InconsistentWinding { .. }));
    if report.is_watertight() && consistent && mesh.signed_volume() < 0.0 {
        report.orientation.push(OrientationIssue::InwardFacing);
    }
    report.t_junctions = t_junctions(&w, edges.keys().copied());
    report
}

fn t_junctions(w: &WeldedMesh, edges: impl Iterator<Item = (usize, usize)>) -> Vec<TJunction> {
    let edges: Vec<(usize, usize)> = {
        let mut e: Vec<_> = edges.collect();
        e.sort_unstable();
        e
    };
    if edges.is_empty() {
        return vec![];
    }
    let mean_len = edges.iter().map(|&(a, b)| (w.vertices[a] - w.vertices[b]).norm()).sum::<f64>() / edges.len() as f64;
    let size = mean_len.max(w.tolerance).max(f64::MIN_POSITIVE);
    let mut buckets: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (id, &v) in w.vertices.iter().enumerate() {
        buckets.entry(cell_of(v, size)).or_default().push(id);
    }
    let tol = w.tolerance;
    let mut out = vec![];
    for (a, b) in edges {
        let (pa, pb) = (w.vertices[a], w.vertices[b]);
        let d = pb - pa;
        let len2 = d.norm2();
        if len2 == 0.0 {
            continue;
        }
        let pad = Vec3::new(tol, tol, tol);
        let (c0, c1) = (cell_of(pa.min(pb) - pad, size), cell_of(pa.max(pb) + pad, size));
        for cz in c0.2..=c1.2 {
            for cy in c0.1..=c1.1 {
                for cx in c0.0..=c1.0 {
                    let Some(ids) = buckets.get(&(cx, cy, cz)) else { continue };
                    for &c in ids {
                        if c == a || c == b {
                            continue;
                        }
                        let p = w.vertices[c];
                        let t = (p - pa).dot(d) / len2;
                        let margin = tol / len2.sqrt();
                        if t <= margin || t >= 1.0 - margin {
                            continue;
                        }
                        if (pa + d * t - p).norm() <= tol {
                            out.push(TJunction { vertex: p, edge: [pa, pb] });
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::tests::cube;
    use super::super::Facet;
    use super::*;

    #[test]
    fn cube_is_clean() {
        let r = validate(&cube(1.0, 2.0));
        assert!(r.is_valid(), "{r}");
    }

    #[test]
    fn missing_facet_opens_three_edges() {
        let mut m = cube(1.0, 1.0);
        m.facets.pop();
        let r = validate(&m);
        assert_eq!(r.open_edges.len(), 3);
        assert!(!r.is_watertight());
    }

    #[test]
    fn cube_at_origin_breaks_positivity() {
        let r = validate(&cube(0.0, 1.0));
        assert_eq!(r.non_positive.len(), 7);
        assert!(r.orientation.is_empty() && r.is_watertight());
    }

    #[test]
    fn negated_normal_is_an_orientation_mismatch() {
        let mut m = cube(1.0, 1.0);
        m.facets[3].normal = -m.facets[3].normal;
        let r = validate(&m);
        assert_eq!(r.orientation, vec![OrientationIssue::NormalMismatch { facet: 3 }]);
        assert!(r.to_string().contains("orientation mismatch"));
    }

    #[test]
    fn flipped_facet_breaks_winding() {
        let mut m = cube(1.0, 1.0);
        m.facets[5] = m.facets[5].flipped();
        let r = validate(&m);
        assert_eq!(
            r.orientation.iter().filter(|o| matches!(o, OrientationIssue::InconsistentWinding { .. })).count(),
            3
        );
    }

    #[test]
    fn inside_out_cube_faces_inward() {
        let c = cube(1.0, 1.0);
        let m = TriangleMesh::new("inv", c.facets.iter().map(Facet::flipped).collect());
        assert_eq!(validate(&m).orientation, vec![OrientationIssue::InwardFacing]);
    }

    #[test]
    fn vertex_on_edge_midpoint_is_a_t_junction() {
        // One big triangle next to two small ones splitting the shared side.
        let v = |x: f64, y: f64| Vec3::new(x, y, 1.0);
        let m = TriangleMesh::new(
            "t",
            vec![
                Facet::new([v(1.0, 1.0), v(3.0, 1.0), v(1.0, 3.0)]).unwrap(),
                Facet::new([v(3.0, 1.0), v(3.0, 3.0), v(2.0, 2.0)]).unwrap(),
                Facet::new([v(2.0, 2.0), v(3.0, 3.0), v(1.0, 3.0)]).unwrap(),
            ],
        );
        let r = validate(&m);
        assert_eq!(r.t_junctions.len(), 1);
        assert_eq!(r.t_junctions[0].vertex, v(2.0, 2.0));
    }

    #[test]
    fn welding_merges_close_points() {
        let a = Vec3::new(1.0, 1.0, 1.0);
        let m = TriangleMesh::new(
            "w",
            vec![
                Facet::new([a, Vec3::new(2.0, 1.0, 1.0), Vec3::new(1.0, 2.0, 1.0)]).unwrap(),
                Facet::new([a + Vec3::new(1e-9, 0.0, 0.0), Vec3::new(1.0, 2.0, 1.0), Vec3::new(1.0, 1.0, 2.0)]).unwrap(),
            ],
        );
        assert_eq!(weld(&m, 1e-6).vertices.len(), 4);
        assert_eq!(weld(&m, 1e-12).vertices.len(), 5);
    }
}
