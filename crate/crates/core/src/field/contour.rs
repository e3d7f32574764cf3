//! Marching-squares iso-contours.

use std::collections::HashMap;

use super::ScalarField2D;
use crate::error::{invalid, Result};

/// Perturbation, in units of grid spacing, applied to node values equal to the level.
const DEGENERATE_EPS: f64 = 1e-12;

/// Ordered 2D vertex chain, optionally closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline2D {
    pub vertices: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline2D {
    /// Builds a polyline, dropping consecutive duplicates (and a closing duplicate).
    pub fn new(vertices: Vec<[f64; 2]>, closed: bool) -> Result<Self> {
        let mut v: Vec<[f64; 2]> = Vec::with_capacity(vertices.len());
        for p in vertices {
            if !p[0].is_finite() || !p[1].is_finite() {
                return invalid("polyline vertex is not finite");
            }
            if v.last().is_none_or(|q| dist(*q, p) > 1e-14) {
                v.push(p);
            }
        }
        if closed && v.len() > 1 && dist(v[0], v[v.len() - 1]) <= 1e-14 {
            v.pop();
        }
        let line = Polyline2D { vertices: v, closed };
        if closed && (line.vertices.len() < 3 || line.signed_area() == 0.0) {
            return invalid("closed polyline needs 3 vertices and nonzero area");
        }
        Ok(line)
    }

    /// Segments as vertex pairs, including the closing one.
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        let m = if self.closed { n } else { n.saturating_sub(1) };
        (0..m).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| dist(a, b)).sum()
    }

    /// Shoelace area; positive for counter-clockwise loops.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for k in 0..n {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            s += a[0] * b[1] - a[1] * b[0];
        }
        0.5 * s
    }

    pub fn reversed(&self) -> Polyline2D {
        let mut v = self.vertices.clone();
        v.reverse();
        Polyline2D { vertices: v, closed: self.closed }
    }

    /// Even-odd point-in-polygon test, treating the chain as closed.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n.wrapping_sub(1);
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Distance from `p` to the nearest segment.
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        if self.vertices.len() == 1 {
            return dist(self.vertices[0], p);
        }
        self.segments().map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

/// Iso-contours of `field` at `level` by marching squares.
///
/// Each polyline keeps the region where the field is below `level` on its left.
/// Cells touching a masked-out node are skipped, so curves reaching the mask
/// or the grid edge come back open. Saddle cells are split by the cell-centre average.
pub fn extract_contours(field: &ScalarField2D, level: f64) -> Vec<Polyline2D> {
    let g = &field.grid;
    let [nx, ny] = g.dims;
    let eps = DEGENERATE_EPS * g.min_spacing();
    let val = |i: usize, j: usize| {
        let v = field.get(i, j);
        if v == level {
            level + eps
        } else {
            v
        }
    };
    let below = |i: usize, j: usize| val(i, j) < level;

    // Edge key: 2*node for the +x edge, 2*node+1 for the +y edge.
    let mut points: HashMap<usize, [f64; 2]> = HashMap::new();
    let mut crossing = |a: (usize, usize), b: (usize, usize)| -> (usize, [f64; 2]) {
        let (lo, hi, axis) = if a.0 != b.0 {
            if a.0 < b.0 { (a, b, 0) } else { (b, a, 0) }
        } else if a.1 < b.1 {
            (a, b, 1)
        } else {
            (b, a, 1)
        };
        let key = 2 * g.index(lo.0, lo.1) + axis;
        let p = *points.entry(key).or_insert_with(|| {
            let (va, vb) = (val(lo.0, lo.1), val(hi.0, hi.1));
            let t = ((level - va) / (vb - va)).clamp(0.0, 1.0);
            let pa = g.point(lo.0, lo.1);
            let pb = g.point(hi.0, hi.1);
            [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
        });
        (key, p)
    };

    let mut segs: Vec<(usize, usize)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            if c.iter().any(|&(a, b)| !field.in_domain(g.index(a, b))) {
                continue;
            }
            let b: Vec<bool> = c.iter().map(|&(a, b)| below(a, b)).collect();
            let code = b.iter().enumerate().fold(0usize, |acc, (k, &x)| acc | ((x as usize) << k));
            if code == 0 || code == 15 {
                continue;
            }
            // Edge e_k joins corner k and corner k+1.
            let edge = |k: usize| (c[k], c[(k + 1) % 4]);
            let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(2);
            let cut: Vec<usize> = (0..4).filter(|&k| b[k] != b[(k + 1) % 4]).collect();
            if cut.len() == 2 {
                pairs.push((cut[0], cut[1]));
            } else {
                let centre = 0.25 * c.iter().map(|&(a, b)| val(a, b)).sum::<f64>();
                if (centre < level) == b[0] {
                    // Corners 0 and 2 are joined through the centre; isolate 1 and 3.
                    pairs.push((0, 1));
                    pairs.push((2, 3));
                } else {
                    pairs.push((3, 0));
                    pairs.push((1, 2));
                }
            }
            for (ea, eb) in pairs {
                let (a0, a1) = edge(ea);
                let (b0, b1) = edge(eb);
                let (ka, _) = crossing(a0, a1);
                let (kb, _) = crossing(b0, b1);
                // Corners run counter-clockwise, so the segment leaving the edge
                // whose first corner is below keeps the below side on its left.
                // Decided combinatorially: a geometric test is unreliable when
                // crossings sit on top of a node.
                if b[ea] {
                    segs.push((ka, kb));
                } else {
                    segs.push((kb, ka));
                }
            }
        }
    }
    stitch(&segs, &points)
}

fn stitch(segs: &[(usize, usize)], points: &HashMap<usize, [f64; 2]>) -> Vec<Polyline2D> {
    // Consistent orientation gives every crossing at most one successor and one predecessor.
    let next: HashMap<usize, usize> = segs.iter().cloned().collect();
    let targets: std::collections::HashSet<usize> = segs.iter().map(|s| s.1).collect();
    let mut starts: Vec<usize> = segs.iter().map(|s| s.0).collect();
    starts.sort_unstable();
    let (open, cyc): (Vec<usize>, Vec<usize>) = starts.into_iter().partition(|s| !targets.contains(s));
    let mut used = std::collections::HashSet::new();
    let mut out = Vec::new();
    for s in open.into_iter().chain(cyc) {
        if used.contains(&s) {
            continue;
        }
        let mut verts = vec![points[&s]];
        let mut cur = s;
        let mut closed = false;
        used.insert(s);
        while let Some(&n) = next.get(&cur) {
            if n == s {
                closed = true;
                break;
            }
            verts.push(points[&n]);
            if !used.insert(n) {
                break;
            }
            cur = n;
        }
        if let Ok(p) = Polyline2D::new(verts, closed) {
            out.push(p);
        }
    }
    out
}
