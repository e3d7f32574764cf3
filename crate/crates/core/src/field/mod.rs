//! Uniform node-centred grids in 2D and 3D, scalar fields sampled on them,
//! interpolation, finite differences and iso-contour extraction.
//!
//! Node `(i, j)` sits at `origin + spacing * (i, j)`. Values are stored with
//! the first index fastest. `dims` counts nodes, so a grid with `dims = [n, m]`
//! has `(n-1) * (m-1)` cells.

mod contour;
mod io;

pub use contour::{extract_contours, Polyline2D};
pub(crate) use contour::dist;
pub use io::{read_csv, read_pgm, read_raw3, write_csv, write_pgm, write_raw3, PgmFormat};

use crate::error::{invalid, Error, Result};

/// Relative slack, in cells, tolerated when a query point sits on the bounding box.
const BOX_SLACK: f64 = 1e-9;

/// Uniform 2D grid of nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub dims: [usize; 2],
}

impl Grid2D {
    pub fn new(origin: [f64; 2], spacing: [f64; 2], dims: [usize; 2]) -> Result<Self> {
        if !(spacing[0] > 0.0 && spacing[1] > 0.0) || !spacing.iter().all(|s| s.is_finite()) {
            return invalid(format!("grid spacing must be positive, got {spacing:?}"));
        }
        if dims[0] < 2 || dims[1] < 2 {
            return invalid(format!("grid needs at least 2 nodes per axis, got {dims:?}"));
        }
        Ok(Grid2D { origin, spacing, dims })
    }

    /// Square grid with `n` nodes per axis spanning `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return invalid("square grid needs n >= 2 and hi > lo");
        }
        let h = (hi - lo) / (n - 1) as f64;
        Grid2D::new([lo, lo], [h, h], [n, n])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.dims[0] + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.dims[0], idx / self.dims[0])
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + self.spacing[0] * i as f64,
            self.origin[1] + self.spacing[1] * j as f64,
        ]
    }

    pub fn upper(&self) -> [f64; 2] {
        self.point(self.dims[0] - 1, self.dims[1] - 1)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing[0].min(self.spacing[1])
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|a| {
            let t = (p[a] - self.origin[a]) / self.spacing[a];
            t >= -BOX_SLACK && t <= (self.dims[a] - 1) as f64 + BOX_SLACK
        })
    }

    /// Cell index and local coordinates in `[0, 1]^2`, clamped into the grid.
    pub fn locate(&self, p: [f64; 2]) -> ([usize; 2], [f64; 2]) {
        let mut cell = [0usize; 2];
        let mut t = [0f64; 2];
        for a in 0..2 {
            let f = (p[a] - self.origin[a]) / self.spacing[a];
            let c = (f.floor().max(0.0) as usize).min(self.dims[a] - 2);
            cell[a] = c;
            t[a] = (f - c as f64).clamp(0.0, 1.0);
        }
        (cell, t)
    }

    /// Bilinear weights of `p`: four `(node index, weight)` pairs, weights
    /// nonnegative and summing to one.
    pub fn bilinear_weights(&self, p: [f64; 2]) -> Result<[(usize, f64); 4]> {
        if !self.contains(p) {
            return Err(Error::Domain(format!("point {p:?} outside grid")));
        }
        let ([i, j], [tx, ty]) = self.locate(p);
        Ok([
            (self.index(i, j), (1.0 - tx) * (1.0 - ty)),
            (self.index(i + 1, j), tx * (1.0 - ty)),
            (self.index(i, j + 1), (1.0 - tx) * ty),
            (self.index(i + 1, j + 1), tx * ty),
        ])
    }
}

/// Uniform 3D grid of nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3D {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

impl Grid3D {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        if !spacing.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return invalid(format!("grid spacing must be positive, got {spacing:?}"));
        }
        if dims.iter().any(|&d| d < 2) {
            return invalid(format!("grid needs at least 2 nodes per axis, got {dims:?}"));
        }
        Ok(Grid3D { origin, spacing, dims })
    }

    /// Cubic grid with spacing `h` covering the box `[lo, hi]` (rounded up to whole cells).
    pub fn covering(lo: [f64; 3], hi: [f64; 3], h: f64) -> Result<Self> {
        let mut dims = [0usize; 3];
        for a in 0..3 {
            if !(hi[a] >= lo[a]) {
                return invalid("covering box has hi < lo");
            }
            dims[a] = ((hi[a] - lo[a]) / h - 1e-9).ceil().max(1.0) as usize + 1;
        }
        Grid3D::new(lo, [h, h, h], dims)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let nx = self.dims[0];
        let ny = self.dims[1];
        (idx % nx, (idx / nx) % ny, idx / (nx * ny))
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + self.spacing[0] * i as f64,
            self.origin[1] + self.spacing[1] * j as f64,
            self.origin[2] + self.spacing[2] * k as f64,
        ]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| {
            let t = (p[a] - self.origin[a]) / self.spacing[a];
            t >= -BOX_SLACK && t <= (self.dims[a] - 1) as f64 + BOX_SLACK
        })
    }
}

/// Scalar values on the nodes of a [`Grid2D`], with an optional domain mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    pub grid: Grid2D,
    pub values: Vec<f64>,
    /// `true` marks nodes of the computational domain; `None` means all nodes.
    pub mask: Option<Vec<bool>>,
}

impl ScalarField2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("{} values for {} nodes", values.len(), grid.len()));
        }
        Ok(ScalarField2D { grid, values, mask: None })
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        ScalarField2D { grid, values: vec![c; grid.len()], mask: None }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let [x, y] = grid.point(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField2D { grid, values, mask: None }
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.grid.len() {
            return invalid(format!("mask has {} entries for {} nodes", mask.len(), self.grid.len()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    /// Mask from a predicate on node coordinates.
    pub fn with_mask_fn(self, f: impl Fn(f64, f64) -> bool) -> Self {
        let g = self.grid;
        let mask = (0..g.len())
            .map(|idx| {
                let (i, j) = g.coords(idx);
                let [x, y] = g.point(i, j);
                f(x, y)
            })
            .collect();
        ScalarField2D { mask: Some(mask), ..self }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    #[inline]
    pub fn in_domain(&self, idx: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[idx])
    }

    pub fn domain_count(&self) -> usize {
        self.mask.as_ref().map_or(self.values.len(), |m| m.iter().filter(|&&b| b).count())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Bilinear interpolation of the nodal values at `p`.
    pub fn interp_bilinear(&self, p: [f64; 2]) -> Result<f64> {
        let w = self.grid.bilinear_weights(p)?;
        Ok(w.iter().map(|&(k, l)| l * self.values[k]).sum())
    }

    /// Second-order central gradient; one-sided first-order differences on the grid edge.
    pub fn gradient_central(&self, i: usize, j: usize) -> [f64; 2] {
        let g = &self.grid;
        let d = |a: usize, n: usize, h: f64, at: &dyn Fn(usize) -> f64| -> f64 {
            if a == 0 {
                (at(1) - at(0)) / h
            } else if a == n - 1 {
                (at(n - 1) - at(n - 2)) / h
            } else {
                (at(a + 1) - at(a - 1)) / (2.0 * h)
            }
        };
        [
            d(i, g.dims[0], g.spacing[0], &|ii| self.get(ii, j)),
            d(j, g.dims[1], g.spacing[1], &|jj| self.get(i, jj)),
        ]
    }

    /// First-order gradient whose stencil reaches upstream of `direction`:
    /// positive flow uses the backward difference, negative flow the forward one,
    /// and a zero component falls back to the central difference.
    pub fn gradient_upwind(&self, i: usize, j: usize, direction: [f64; 2]) -> [f64; 2] {
        let g = &self.grid;
        let central = self.gradient_central(i, j);
        let mut out = central;
        for a in 0..2 {
            let (n, h) = (g.dims[a], g.spacing[a]);
            let at = |s: usize| if a == 0 { self.get(s, j) } else { self.get(i, s) };
            let c = if a == 0 { i } else { j };
            if direction[a] > 0.0 && c > 0 {
                out[a] = (at(c) - at(c - 1)) / h;
            } else if direction[a] < 0.0 && c + 1 < n {
                out[a] = (at(c + 1) - at(c)) / h;
            }
        }
        out
    }

    /// Values mapped through `f`, keeping grid and mask.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField2D {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Largest absolute nodal difference over nodes where `keep` holds.
    pub fn max_abs_diff(&self, other: &ScalarField2D, keep: impl Fn(usize) -> bool) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(k, _)| keep(*k))
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Scalar values on the nodes of a [`Grid3D`], with an optional domain mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3D {
    pub grid: Grid3D,
    pub values: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

impl ScalarField3D {
    pub fn new(grid: Grid3D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("{} values for {} nodes", values.len(), grid.len()));
        }
        Ok(ScalarField3D { grid, values, mask: None })
    }

    pub fn constant(grid: Grid3D, c: f64) -> Self {
        ScalarField3D { grid, values: vec![c; grid.len()], mask: None }
    }

    pub fn from_fn(grid: Grid3D, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let (i, j, k) = grid.coords(idx);
                f(grid.point(i, j, k))
            })
            .collect();
        ScalarField3D { grid, values, mask: None }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    /// Trilinear interpolation at `p`.
    pub fn interp_trilinear(&self, p: [f64; 3]) -> Result<f64> {
        let g = &self.grid;
        if !g.contains(p) {
            return Err(Error::Domain(format!("point {p:?} outside grid")));
        }
        let mut c = [0usize; 3];
        let mut t = [0f64; 3];
        for a in 0..3 {
            let f = (p[a] - g.origin[a]) / g.spacing[a];
            c[a] = (f.floor().max(0.0) as usize).min(g.dims[a] - 2);
            t[a] = (f - c[a] as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w: f64 = (0..3).map(|a| if o[a] == 1 { t[a] } else { 1.0 - t[a] }).product();
            acc += w * self.get(c[0] + o[0], c[1] + o[1], c[2] + o[2]);
        }
        Ok(acc)
    }

    /// Largest absolute nodal difference, ignoring nodes infinite in either field.
    pub fn max_abs_diff_3d(&self, other: &ScalarField3D) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Central-difference gradient with one-sided differences on the grid edge.
    pub fn gradient_central(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let g = &self.grid;
        let idx = [i, j, k];
        let mut out = [0.0; 3];
        for a in 0..3 {
            let at = |s: usize| {
                let mut q = idx;
                q[a] = s;
                self.get(q[0], q[1], q[2])
            };
            let (n, h, c) = (g.dims[a], g.spacing[a], idx[a]);
            out[a] = if c == 0 {
                (at(1) - at(0)) / h
            } else if c == n - 1 {
                (at(n - 1) - at(n - 2)) / h
            } else {
                (at(c + 1) - at(c - 1)) / (2.0 * h)
            };
        }
        out
    }
}
