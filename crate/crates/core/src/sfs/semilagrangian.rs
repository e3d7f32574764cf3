//! Semi-Lagrangian fixed point in the Kruzkov variable.
//!
//! For each free node and each control, a characteristic is traced until its
//! accumulated running cost `c` reaches the step `h` (and it has moved at
//! least two cells), or until it leaves the domain. The operator is
//!
//! ```text
//! T(W)_i = min_k  exp(-mu c_k) W(foot_k) + (1 - exp(-mu c_k)) / mu
//! ```
//!
//! with `W(foot)` bilinear in `W` for interior feet and the transformed
//! boundary data for exits. Interior candidates have `c_k >= h`, so `T` is
//! monotone, maps `[0, 1/mu]` into itself and contracts by `exp(-mu h)`.

use super::shading::{mean_slowness, Flow, Shading};
use super::{inverse_kruzkov, kruzkov, SfsProblem, SfsSolution, CONTROL_DIRECTIONS};
use crate::error::{invalid, Result};
use crate::field::{Grid2D, ScalarField2D};
use crate::geom::{fibonacci_sphere, Vec3};

/// Characteristics are integrated in substeps of this fraction of the spacing.
const SUBSTEP: f64 = 0.25;
/// An interior foot must lie at least this many cells from its node.
const MIN_DISPLACEMENT_CELLS: f64 = 2.0;
/// Oblique controls whose vertical factor drops below this are discarded.
const MIN_VERTICAL_FACTOR: f64 = 0.05;

#[derive(Debug, Clone, Copy)]
enum Foot {
    /// Lower-left node of the cell and local coordinates in it.
    Interior { corner: u32, tx: f64, ty: f64 },
    /// Transformed boundary value where the characteristic left the domain.
    Exit { value: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    foot: Foot,
    /// `exp(-mu c)` for the running cost `c` along the characteristic.
    discount: f64,
}

enum Ray {
    Interior([f64; 2], f64),
    Exit([f64; 2], f64),
    Invalid,
}

/// The discrete fixed-point operator of one problem, with its characteristics
/// precomputed.
#[derive(Debug, Clone)]
pub struct FixedPointOperator {
    grid: Grid2D,
    mu: f64,
    step: f64,
    /// Transformed boundary value of Dirichlet nodes, `None` on free nodes.
    fixed: Vec<Option<f64>>,
    /// Candidates of node `k` are `candidates[offsets[k]..offsets[k + 1]]`.
    offsets: Vec<usize>,
    candidates: Vec<Candidate>,
    clamped: usize,
}

impl FixedPointOperator {
    pub fn new(problem: &SfsProblem) -> Result<Self> {
        problem.validate()?;
        let sh = Shading::new(problem)?;
        let mu = problem.mu;
        let step = problem.step_length();
        let grid = sh.grid;
        let n = grid.len();
        let marcher = Marcher {
            sh: &sh,
            step,
            sub: SUBSTEP * grid.min_spacing(),
            min_disp: MIN_DISPLACEMENT_CELLS * grid.min_spacing(),
            max_substeps: 16 * (grid.dims[0] + grid.dims[1]) * (1.0 / SUBSTEP) as usize,
        };
        let lattice = fibonacci_sphere(CONTROL_DIRECTIONS);
        let g_at = |p: [f64; 2]| -> f64 {
            let (cell, t) = grid.locate(p);
            let [i, j] = cell;
            let w = [(1.0 - t[0]) * (1.0 - t[1]), t[0] * (1.0 - t[1]), (1.0 - t[0]) * t[1], t[0] * t[1]];
            let k = [grid.index(i, j), grid.index(i + 1, j), grid.index(i, j + 1), grid.index(i + 1, j + 1)];
            (0..4).map(|c| w[c] * sh.g[k[c]]).sum()
        };

        let mut fixed = vec![None; n];
        let mut offsets = Vec::with_capacity(n + 1);
        let mut candidates = Vec::new();
        offsets.push(0);
        for k in 0..n {
            if sh.dirichlet[k] {
                fixed[k] = Some(kruzkov(sh.g[k], mu));
                offsets.push(candidates.len());
                continue;
            }
            let (i, j) = grid.coords(k);
            let x0 = grid.point(i, j);
            for a in &lattice {
                let ray = match sh.flow {
                    Flow::Isotropic => {
                        let d = [a.x, a.y];
                        let len = d[0].hypot(d[1]);
                        if len == 0.0 {
                            continue;
                        }
                        let dir = [d[0] / len, d[1] / len];
                        marcher.march(x0, sh.q[k], &|_, q| Some((dir, q)), mean_slowness)
                    }
                    Flow::Oblique { light } => {
                        marcher.march(x0, sh.q[k], &|_, q| oblique_dynamics(*a, light, q), |a, b| 0.5 * (a + b))
                    }
                };
                let (foot, cost) = match ray {
                    Ray::Invalid => continue,
                    Ray::Exit(p, c) => (Foot::Exit { value: kruzkov(g_at(p), mu) }, c),
                    Ray::Interior(p, c) => {
                        let ([ci, cj], [tx, ty]) = grid.locate(p);
                        (Foot::Interior { corner: grid.index(ci, cj) as u32, tx, ty }, c)
                    }
                };
                candidates.push(Candidate { foot, discount: (-mu * cost).exp() });
            }
            offsets.push(candidates.len());
        }
        Ok(FixedPointOperator { grid, mu, step, fixed, offsets, candidates, clamped: sh.clamped })
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// `exp(-mu h)`, the sup-norm contraction factor.
    pub fn contraction_factor(&self) -> f64 {
        (-self.mu * self.step).exp()
    }

    pub fn upper_bound(&self) -> f64 {
        1.0 / self.mu
    }

    pub fn is_free(&self, k: usize) -> bool {
        self.fixed[k].is_none()
    }

    /// Transformed boundary values on Dirichlet nodes, zero elsewhere.
    pub fn initial_iterate(&self) -> Vec<f64> {
        self.fixed.iter().map(|f| f.unwrap_or(0.0)).collect()
    }

    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.len() {
            return invalid(format!("iterate has {} entries for {} nodes", w.len(), self.len()));
        }
        let mut out = vec![0.0; w.len()];
        self.apply_into(w, &mut out);
        Ok(out)
    }

    fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        let nx = self.grid.dims[0];
        let top = 1.0 / self.mu;
        for k in 0..w.len() {
            if let Some(v) = self.fixed[k] {
                out[k] = v;
                continue;
            }
            let mut best = top;
            for c in &self.candidates[self.offsets[k]..self.offsets[k + 1]] {
                let at_foot = match c.foot {
                    Foot::Exit { value } => value,
                    Foot::Interior { corner, tx, ty } => {
                        let b = corner as usize;
                        (1.0 - ty) * ((1.0 - tx) * w[b] + tx * w[b + 1]) + ty * ((1.0 - tx) * w[b + nx] + tx * w[b + nx + 1])
                    }
                };
                // Written as a convex combination of the foot value and 1/mu.
                let val = c.discount * at_foot + (1.0 - c.discount) * top;
                best = best.min(val);
            }
            out[k] = best;
        }
    }
}

/// Velocity direction and time per unit length for an oblique Lambertian control.
fn oblique_dynamics(a: Vec3, light: Vec3, q: f64) -> Option<([f64; 2], f64)> {
    let p = q.max(0.0).sqrt();
    let b = [-(p * a.x + light.x) / light.z, -(p * a.y + light.y) / light.z];
    let factor = 1.0 - p * a.z / light.z;
    let speed = b[0].hypot(b[1]);
    if factor < MIN_VERTICAL_FACTOR || speed < 1e-12 {
        return None;
    }
    Some(([b[0] / speed, b[1] / speed], factor / speed))
}

struct Marcher<'a> {
    sh: &'a Shading,
    step: f64,
    sub: f64,
    min_disp: f64,
    max_substeps: usize,
}

impl Marcher<'_> {
    fn q_at(&self, p: [f64; 2]) -> f64 {
        let g = &self.sh.grid;
        let ([i, j], [tx, ty]) = g.locate(p);
        let q = &self.sh.q;
        let k = g.index(i, j);
        let nx = g.dims[0];
        (1.0 - ty) * ((1.0 - tx) * q[k] + tx * q[k + 1]) + ty * ((1.0 - tx) * q[k + nx] + tx * q[k + nx + 1])
    }

    /// All four corners of the cell holding `p` are domain nodes.
    fn cell_inside(&self, p: [f64; 2]) -> bool {
        let g = &self.sh.grid;
        let ([i, j], _) = g.locate(p);
        let k = g.index(i, j);
        let nx = g.dims[0];
        [k, k + 1, k + nx, k + nx + 1].iter().all(|&c| self.sh.domain[c])
    }

    fn nearest_is_open(&self, p: [f64; 2]) -> bool {
        let g = &self.sh.grid;
        let ([i, j], [tx, ty]) = g.locate(p);
        let k = g.index(i + (tx > 0.5) as usize, j + (ty > 0.5) as usize);
        self.sh.open[k]
    }

    /// Traces one characteristic from `x0`. `dynamics(p, q)` gives the unit
    /// direction and a state `s` whose segment mean `avg(s_a, s_b)` is the
    /// cost per unit length; `None` discards the control.
    fn march(
        &self,
        x0: [f64; 2],
        q0: f64,
        dynamics: &dyn Fn([f64; 2], f64) -> Option<([f64; 2], f64)>,
        avg: fn(f64, f64) -> f64,
    ) -> Ray {
        let grid = &self.sh.grid;
        let (mut x, mut qa) = (x0, q0);
        let mut acc = 0.0;
        for _ in 0..self.max_substeps {
            let Some((dir, sa)) = dynamics(x, qa) else {
                return Ray::Invalid;
            };
            let at = |t: f64| [x[0] + t * self.sub * dir[0], x[1] + t * self.sub * dir[1]];
            let xn = at(1.0);
            if !grid.contains(xn) {
                let t = fraction_inside(grid, x, xn);
                return Ray::Exit(at(t), acc + t * self.sub * avg(sa, sa));
            }
            let qb = self.q_at(xn);
            if qb <= 0.0 {
                // Linear crossing of the silhouette.
                let t = if qa > 0.0 { qa / (qa - qb) } else { 0.0 };
                let xc = at(t);
                let sc = dynamics(xc, 0.0).map_or(sa, |d| d.1);
                return Ray::Exit(xc, acc + t * self.sub * avg(sa, sc));
            }
            let Some((_, sb)) = dynamics(xn, qb) else {
                return Ray::Invalid;
            };
            let seg = self.sub * avg(sa, sb);
            if self.nearest_is_open(xn) {
                return Ray::Exit(xn, acc + seg);
            }
            let disp = (xn[0] - x0[0]).hypot(xn[1] - x0[1]);
            if acc + seg >= self.step && disp >= self.min_disp && self.cell_inside(xn) {
                if acc >= self.step {
                    return Ray::Interior(xn, acc + seg);
                }
                if self.cell_inside(x) {
                    // Land exactly on the step cost inside this substep.
                    let partial = |m: f64| m * self.sub * avg(sa, sa + m * (sb - sa));
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..50 {
                        let m = 0.5 * (lo + hi);
                        if acc + partial(m) < self.step {
                            lo = m;
                        } else {
                            hi = m;
                        }
                    }
                    let foot = at(hi);
                    if self.cell_inside(foot) {
                        return Ray::Interior(foot, acc + partial(hi));
                    }
                }
            }
            acc += seg;
            x = xn;
            qa = qb;
        }
        Ray::Invalid
    }
}

/// Largest `t` in `[0, 1]` with `a + t (b - a)` inside the grid box.
fn fraction_inside(grid: &Grid2D, a: [f64; 2], b: [f64; 2]) -> f64 {
    let hi = grid.upper();
    let mut t = 1.0f64;
    for ax in 0..2 {
        let d = b[ax] - a[ax];
        if d > 0.0 && b[ax] > hi[ax] {
            t = t.min((hi[ax] - a[ax]) / d);
        } else if d < 0.0 && b[ax] < grid.origin[ax] {
            t = t.min((grid.origin[ax] - a[ax]) / d);
        }
    }
    t.clamp(0.0, 1.0)
}

/// Applies the fixed-point operator of `problem` once to `w`.
pub fn fixed_point_operator(w: &[f64], problem: &SfsProblem) -> Result<Vec<f64>> {
    FixedPointOperator::new(problem)?.apply(w)
}

/// Iterates the fixed-point operator from zero (boundary data on Dirichlet
/// nodes) until the sup-norm update drops below the problem tolerance. Hitting
/// the iteration cap returns the last iterate with `converged == false`.
pub fn solve_fixed_point(problem: &SfsProblem) -> Result<SfsSolution> {
    let op = FixedPointOperator::new(problem)?;
    let mut w = op.initial_iterate();
    let mut next = w.clone();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < problem.max_iterations {
        op.apply_into(&w, &mut next);
        iterations += 1;
        residual = w.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut w, &mut next);
        if residual < problem.tol {
            break;
        }
    }
    let converged = residual < problem.tol;
    let mu = problem.mu;
    let mut height = ScalarField2D::new(op.grid, w.iter().map(|&v| inverse_kruzkov(v, mu)).collect())?;
    height.mask = problem.image.mask.clone();
    let kruzkov_field = ScalarField2D { values: w, ..height.clone() };
    Ok(SfsSolution { height, kruzkov: kruzkov_field, iterations, residual, converged, clamped_pixels: op.clamped })
}
