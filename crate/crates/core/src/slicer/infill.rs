//! Infill curves inside a layer: level sets of the distance to the layer
//! boundary, or the usual axis-aligned square grid as a baseline.

use super::Layer;
use crate::error::{invalid, Result};
use crate::field::{extract_contours, Grid2D, Polyline2D, ScalarField2D};
use crate::levelset::{solve_stationary_eikonal_2d, NodeKind};

/// Infill curves of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Infill {
    pub curves: Vec<Polyline2D>,
    /// Connected parts of the layer too thin for a single curve; they get
    /// walls only.
    pub thin_parts: usize,
    /// Raster spacing used for the distance field (zero for square infill).
    pub raster_spacing: f64,
}

fn check_spacing(spacing: f64) -> Result<()> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return invalid(format!("infill spacing must be positive, got {spacing}"));
    }
    Ok(())
}

/// Curves at distances `spacing, 2 spacing, ...` from the layer boundary.
///
/// The interior distance is the stationary unit-speed eikonal solution on a
/// raster of spacing `spacing / 4`: nodes next to the boundary hold their
/// exact distance to the contours and the rest are swept.
pub fn infill_eikonal(layer: &Layer, spacing: f64) -> Result<Infill> {
    check_spacing(spacing)?;
    let h = spacing / 4.0;
    let Some((lo, hi)) = layer.bounds() else {
        return Ok(Infill { curves: Vec::new(), thin_parts: 0, raster_spacing: h });
    };
    let origin = [lo[0] - 2.0 * h, lo[1] - 2.0 * h];
    let dims = [0, 1].map(|a| (((hi[a] - lo[a]) / h).ceil() as usize) + 5);
    let grid = Grid2D::new(origin, [h, h], dims)?;
    let inside: Vec<bool> = (0..grid.len())
        .map(|n| {
            let (i, j) = grid.coords(n);
            layer.contains(grid.point(i, j))
        })
        .collect();
    let neighbours = |n: usize| {
        let (i, j) = grid.coords(n);
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push(n - 1);
        }
        if i + 1 < dims[0] {
            out.push(n + 1);
        }
        if j > 0 {
            out.push(n - dims[0]);
        }
        if j + 1 < dims[1] {
            out.push(n + dims[0]);
        }
        out
    };
    let boundary_distance = |n: usize| {
        let (i, j) = grid.coords(n);
        let p = grid.point(i, j);
        layer.contours.iter().map(|c| c.distance_to(p)).fold(f64::INFINITY, f64::min)
    };
    let kinds: Vec<NodeKind> = (0..grid.len())
        .map(|n| {
            if !inside[n] {
                NodeKind::Blocked
            } else if neighbours(n).iter().any(|&m| !inside[m]) {
                NodeKind::Fixed(boundary_distance(n))
            } else {
                NodeKind::Free
            }
        })
        .collect();
    if !kinds.iter().any(|k| matches!(k, NodeKind::Fixed(_))) {
        return Ok(Infill { curves: Vec::new(), thin_parts: 0, raster_spacing: h });
    }
    let sol = solve_stationary_eikonal_2d(&grid, &kinds, &vec![1.0; grid.len()])?;
    let depth: Vec<f64> = (0..grid.len()).map(|n| if inside[n] { sol.arrival.values[n] } else { 0.0 }).collect();

    // Deepest point of each connected part decides whether it gets curves.
    let mut part = vec![usize::MAX; grid.len()];
    let mut thin_parts = 0;
    for seed in 0..grid.len() {
        if !inside[seed] || part[seed] != usize::MAX {
            continue;
        }
        let mut stack = vec![seed];
        part[seed] = seed;
        let mut deepest = 0.0f64;
        while let Some(n) = stack.pop() {
            deepest = deepest.max(depth[n]);
            for m in neighbours(n) {
                if inside[m] && part[m] == usize::MAX {
                    part[m] = seed;
                    stack.push(m);
                }
            }
        }
        if deepest < spacing {
            thin_parts += 1;
        }
    }

    let max_depth = depth.iter().fold(0.0f64, |m, &d| m.max(d));
    let field = ScalarField2D::new(grid, depth)?;
    let mut curves = Vec::new();
    let mut k = 1;
    // A level within half a raster cell of the deepest point degenerates to a point.
    while k as f64 * spacing <= max_depth - 0.5 * h {
        curves.extend(extract_contours(&field, k as f64 * spacing).into_iter().filter(|c| c.vertices.len() >= 2));
        k += 1;
    }
    Ok(Infill { curves, thin_parts, raster_spacing: h })
}

/// Axis-aligned lines `spacing` apart, anchored at the layer's lower bounds
/// and clipped to its interior by the even-odd rule.
pub fn infill_square(layer: &Layer, spacing: f64) -> Result<Infill> {
    check_spacing(spacing)?;
    let mut curves = Vec::new();
    let Some((lo, hi)) = layer.bounds() else {
        return Ok(Infill { curves, thin_parts: 0, raster_spacing: 0.0 });
    };
    for axis in 0..2 {
        let other = 1 - axis;
        let mut k = 1;
        loop {
            let c = lo[axis] + k as f64 * spacing;
            if c >= hi[axis] {
                break;
            }
            let mut hits: Vec<f64> = layer
                .contours
                .iter()
                .flat_map(|poly| poly.segments())
                .filter(|(a, b)| (a[axis] < c) != (b[axis] < c))
                .map(|(a, b)| a[other] + (c - a[axis]) / (b[axis] - a[axis]) * (b[other] - a[other]))
                .collect();
            hits.sort_by(f64::total_cmp);
            for pair in hits.chunks_exact(2) {
                if pair[1] > pair[0] {
                    let point = |t: f64| if axis == 0 { [c, t] } else { [t, c] };
                    curves.push(Polyline2D::new(vec![point(pair[0]), point(pair[1])], false)?);
                }
            }
            k += 1;
        }
    }
    Ok(Infill { curves, thin_parts: 0, raster_spacing: 0.0 })
}
