//! Level-surface extraction by marching tetrahedra.
//!
//! Every grid cell is split into the six tetrahedra around its main diagonal;
//! the split is the same in every cell, so neighbouring cells agree on shared
//! faces and the output is closed. The grid is padded by one virtual layer
//! outside the level, so surfaces touching the grid edge are capped.

use std::collections::HashMap;

use super::{Facet, TriangleMesh};
use crate::error::{invalid, Result};
use crate::field::ScalarField3D;
use crate::geom::Vec3;

/// Crossings are kept at least this fraction of an edge away from its nodes,
/// so no two output vertices collapse onto one.
const EDGE_MARGIN: f64 = 0.01;

/// Closed mesh of `{field = level}`, oriented with normals toward larger values.
pub fn extract_isosurface(field: &ScalarField3D, level: f64, name: &str) -> Result<TriangleMesh> {
    let g = field.grid;
    if field.values.iter().any(|v| v.is_nan()) {
        return invalid("field contains NaN");
    }
    let [nx, ny, nz] = g.dims.map(|d| d as isize);
    let outside = level + g.min_spacing();
    // Padded node access: one layer beyond each face sits outside the level.
    let value = |i: isize, j: isize, k: isize| -> f64 {
        if i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz {
            outside
        } else {
            field.get(i as usize, j as usize, k as usize) - level
        }
    };
    let point = |i: isize, j: isize, k: isize| {
        Vec3::new(
            g.origin[0] + g.spacing[0] * i as f64,
            g.origin[1] + g.spacing[1] * j as f64,
            g.origin[2] + g.spacing[2] * k as f64,
        )
    };
    let key = |i: isize, j: isize, k: isize| ((k + 1) * (ny + 2) + (j + 1)) * (nx + 2) + (i + 1);

    let mut crossings: HashMap<(isize, isize), Vec3> = HashMap::new();
    let mut crossing = |a: [isize; 3], b: [isize; 3]| -> Vec3 {
        // Canonical endpoint order so both tetrahedra sharing an edge get the same bits.
        let (a, b) = if key(a[0], a[1], a[2]) < key(b[0], b[1], b[2]) { (a, b) } else { (b, a) };
        let ka = key(a[0], a[1], a[2]);
        let kb = key(b[0], b[1], b[2]);
        *crossings.entry((ka, kb)).or_insert_with(|| {
            let (sa, sb) = (value(a[0], a[1], a[2]), value(b[0], b[1], b[2]));
            let t = (sa / (sa - sb)).clamp(EDGE_MARGIN, 1.0 - EDGE_MARGIN);
            let (pa, pb) = (point(a[0], a[1], a[2]), point(b[0], b[1], b[2]));
            pa + (pb - pa) * t
        })
    };

    const PATHS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut facets = Vec::new();
    for k in -1..nz {
        for j in -1..ny {
            for i in -1..nx {
                let corner_inside = [0, 1].iter().any(|&dk| {
                    [0, 1].iter().any(|&dj| [0, 1].iter().any(|&di| value(i + di, j + dj, k + dk) < 0.0))
                });
                if !corner_inside {
                    continue;
                }
                for path in PATHS {
                    let mut tet = [[i, j, k]; 4];
                    for s in 0..3 {
                        tet[s + 1] = tet[s];
                        tet[s + 1][path[s]] += 1;
                    }
                    let s = tet.map(|n| value(n[0], n[1], n[2]));
                    let inside: Vec<usize> = (0..4).filter(|&m| s[m] < 0.0).collect();
                    let out: Vec<usize> = (0..4).filter(|&m| s[m] >= 0.0).collect();
                    let polygon: Vec<Vec3> = match inside.len() {
                        1 => out.iter().map(|&o| crossing(tet[inside[0]], tet[o])).collect(),
                        3 => inside.iter().map(|&m| crossing(tet[m], tet[out[0]])).collect(),
                        2 => {
                            let (a, b, c, d) = (tet[inside[0]], tet[inside[1]], tet[out[0]], tet[out[1]]);
                            vec![crossing(a, c), crossing(a, d), crossing(b, d), crossing(b, c)]
                        }
                        _ => continue,
                    };
                    let centroid = |ms: &[usize]| {
                        ms.iter().fold(Vec3::ZERO, |acc, &m| acc + point(tet[m][0], tet[m][1], tet[m][2])) / ms.len() as f64
                    };
                    let outward = centroid(&out) - centroid(&inside);
                    let tris: &[[usize; 3]] = if polygon.len() == 3 { &[[0, 1, 2]] } else { &[[0, 1, 2], [0, 2, 3]] };
                    for t in tris {
                        let mut v = t.map(|m| polygon[m]);
                        let n = (v[1] - v[0]).cross(v[2] - v[1]);
                        if n.dot(outward) < 0.0 {
                            v.swap(1, 2);
                        }
                        facets.push(Facet::new(v)?);
                    }
                }
            }
        }
    }
    Ok(TriangleMesh::new(name, facets))
}
