//! Level-set machinery: explicit upwind evolution of a front under advective,
//! normal and direction-dependent speeds, normals and mean curvature of the
//! level-set function, stationary eikonal solves and reinitialization.
//!
//! The front is the zero level of `phi`, negative inside the region it bounds.

mod sweep;

pub use sweep::{fast_sweep, godunov_update, LocalSlowness, NodeKind, NodeSpeed, SweepOptions, SweepResult, UniformSpeed};

use crate::error::{invalid, Error, Result};
use crate::field::{Grid2D, Grid3D, ScalarField2D, ScalarField3D};
use crate::geom::Vec3;

/// CFL number: `dt <= CFL * h / max speed`.
pub const CFL: f64 = 0.5;
/// Gradient magnitude below which normals are undefined.
pub const GRAD_EPS: f64 = 1e-10;

/// Level-set function with its current time.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetState {
    pub phi: ScalarField3D,
    pub time: f64,
}

impl LevelSetState {
    pub fn new(phi: ScalarField3D) -> Self {
        LevelSetState { phi, time: 0.0 }
    }
}

/// Velocity law driving [`evolve`].
pub enum SpeedLaw<'a> {
    /// `phi_t + V(x, t) . grad phi = 0`.
    Advective(&'a dyn Fn([f64; 3], f64) -> Vec3),
    /// `phi_t + v(x, t) |grad phi| = 0`.
    Normal(&'a dyn Fn([f64; 3], f64) -> f64),
    /// `phi_t + v(x, t, N) |grad phi| = 0` with `N = grad phi / |grad phi|`
    /// (the zero vector where the gradient vanishes).
    Anisotropic(&'a dyn Fn([f64; 3], f64, Vec3) -> f64),
}

/// One-sided differences `(backward, forward)` along `axis`, zero across the grid edge.
#[inline]
fn one_sided(phi: &ScalarField3D, idx: [usize; 3], axis: usize) -> (f64, f64) {
    let g = &phi.grid;
    let h = g.spacing[axis];
    let c = phi.get(idx[0], idx[1], idx[2]);
    let mut lo = idx;
    let mut hi = idx;
    let back = if idx[axis] > 0 {
        lo[axis] -= 1;
        (c - phi.get(lo[0], lo[1], lo[2])) / h
    } else {
        0.0
    };
    let fwd = if idx[axis] + 1 < g.dims[axis] {
        hi[axis] += 1;
        (phi.get(hi[0], hi[1], hi[2]) - c) / h
    } else {
        0.0
    };
    (back, fwd)
}

/// Godunov upwind `|grad phi|` for a front moving with normal speed of sign `speed`.
pub fn upwind_gradient_norm(phi: &ScalarField3D, idx: [usize; 3], speed: f64) -> f64 {
    let mut s = 0.0;
    for axis in 0..3 {
        let (b, f) = one_sided(phi, idx, axis);
        s += if speed >= 0.0 {
            b.max(0.0).powi(2).max(f.min(0.0).powi(2))
        } else {
            b.min(0.0).powi(2).max(f.max(0.0).powi(2))
        };
    }
    s.sqrt()
}

/// One explicit step of `phi_t + v |grad phi| = 0` with per-node speeds.
/// Nodes with zero speed keep their value bit-exactly.
pub fn step_normal_speed(state: &mut LevelSetState, speeds: &[f64], dt: f64) -> Result<()> {
    let g = state.phi.grid;
    check_cfl(g.min_spacing(), speeds.iter().fold(0.0f64, |m, v| m.max(v.abs())), dt)?;
    let old = &state.phi;
    let values: Vec<f64> = (0..g.len())
        .map(|n| {
            let v = speeds[n];
            if v == 0.0 {
                return old.values[n];
            }
            let (i, j, k) = g.coords(n);
            old.values[n] - dt * v * upwind_gradient_norm(old, [i, j, k], v)
        })
        .collect();
    state.phi.values = values;
    state.time += dt;
    Ok(())
}

fn check_cfl(h: f64, vmax: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return invalid(format!("time step must be positive, got {dt}"));
    }
    if !vmax.is_finite() {
        return invalid("speed is not finite");
    }
    if vmax > 0.0 && dt > CFL * h / vmax * (1.0 + 1e-12) {
        return invalid(format!("CFL violated: dt = {dt} exceeds {}", CFL * h / vmax));
    }
    Ok(())
}

/// Largest stable step for a speed bound.
pub fn cfl_dt(h: f64, vmax: f64) -> f64 {
    if vmax > 0.0 {
        CFL * h / vmax
    } else {
        f64::INFINITY
    }
}

/// Advances `state` by `steps` explicit upwind steps of size `dt`.
///
/// Neumann boundary: differences reaching outside the grid are zero.
pub fn evolve(state: &LevelSetState, law: &SpeedLaw, dt: f64, steps: usize) -> Result<LevelSetState> {
    let mut s = state.clone();
    let g = s.phi.grid;
    for _ in 0..steps {
        match law {
            SpeedLaw::Normal(f) => {
                let v: Vec<f64> = (0..g.len())
                    .map(|n| {
                        let (i, j, k) = g.coords(n);
                        f(g.point(i, j, k), s.time)
                    })
                    .collect();
                step_normal_speed(&mut s, &v, dt)?;
            }
            SpeedLaw::Anisotropic(f) => {
                let v: Vec<f64> = (0..g.len())
                    .map(|n| {
                        let (i, j, k) = g.coords(n);
                        let nrm = normal_at(&s.phi, [i, j, k]).unwrap_or(Vec3::ZERO);
                        f(g.point(i, j, k), s.time, nrm)
                    })
                    .collect();
                step_normal_speed(&mut s, &v, dt)?;
            }
            SpeedLaw::Advective(f) => {
                let vel: Vec<Vec3> = (0..g.len())
                    .map(|n| {
                        let (i, j, k) = g.coords(n);
                        f(g.point(i, j, k), s.time)
                    })
                    .collect();
                let vmax = vel.iter().fold(0.0f64, |m, v| m.max(v.norm()));
                check_cfl(g.min_spacing(), vmax, dt)?;
                let old = &s.phi;
                let values: Vec<f64> = (0..g.len())
                    .map(|n| {
                        let (i, j, k) = g.coords(n);
                        let mut adv = 0.0;
                        for axis in 0..3 {
                            let c = vel[n][axis];
                            if c != 0.0 {
                                let (b, fw) = one_sided(old, [i, j, k], axis);
                                adv += c * if c > 0.0 { b } else { fw };
                            }
                        }
                        old.values[n] - dt * adv
                    })
                    .collect();
                s.phi.values = values;
                s.time += dt;
            }
        }
    }
    Ok(s)
}

fn normal_at(phi: &ScalarField3D, idx: [usize; 3]) -> Option<Vec3> {
    let g = Vec3::from_array(phi.gradient_central(idx[0], idx[1], idx[2]));
    (g.norm() > GRAD_EPS).then(|| g / g.norm())
}

/// Unit normal `grad phi / |grad phi|` and curvature `div N` at an interior node,
/// from central differences.
pub fn normal_and_curvature(state: &LevelSetState, node: [usize; 3]) -> Result<(Vec3, f64)> {
    let phi = &state.phi;
    let g = &phi.grid;
    if (0..3).any(|a| node[a] == 0 || node[a] + 1 >= g.dims[a]) {
        return Err(Error::Domain(format!("node {node:?} is not interior")));
    }
    let [i, j, k] = node;
    let h = g.spacing;
    let at = |di: isize, dj: isize, dk: isize| {
        phi.get((i as isize + di) as usize, (j as isize + dj) as usize, (k as isize + dk) as usize)
    };
    let c = at(0, 0, 0);
    let px = (at(1, 0, 0) - at(-1, 0, 0)) / (2.0 * h[0]);
    let py = (at(0, 1, 0) - at(0, -1, 0)) / (2.0 * h[1]);
    let pz = (at(0, 0, 1) - at(0, 0, -1)) / (2.0 * h[2]);
    let grad = Vec3::new(px, py, pz);
    let norm = grad.norm();
    if !(norm > GRAD_EPS) {
        return Err(Error::Domain(format!("gradient vanishes at node {node:?}")));
    }
    let pxx = (at(1, 0, 0) - 2.0 * c + at(-1, 0, 0)) / (h[0] * h[0]);
    let pyy = (at(0, 1, 0) - 2.0 * c + at(0, -1, 0)) / (h[1] * h[1]);
    let pzz = (at(0, 0, 1) - 2.0 * c + at(0, 0, -1)) / (h[2] * h[2]);
    let pxy = (at(1, 1, 0) - at(1, -1, 0) - at(-1, 1, 0) + at(-1, -1, 0)) / (4.0 * h[0] * h[1]);
    let pxz = (at(1, 0, 1) - at(1, 0, -1) - at(-1, 0, 1) + at(-1, 0, -1)) / (4.0 * h[0] * h[2]);
    let pyz = (at(0, 1, 1) - at(0, 1, -1) - at(0, -1, 1) + at(0, -1, -1)) / (4.0 * h[1] * h[2]);
    let num = pxx * (py * py + pz * pz) + pyy * (px * px + pz * pz) + pzz * (px * px + py * py)
        - 2.0 * (px * py * pxy + px * pz * pxz + py * pz * pyz);
    Ok((grad / norm, num / norm.powi(3)))
}

/// Result of a stationary eikonal solve.
#[derive(Debug, Clone)]
pub struct EikonalSolution<F> {
    pub arrival: F,
    pub rounds: usize,
    /// Outer iterations of the direction-lagging loop (1 for isotropic solves).
    pub outer_iterations: usize,
    pub converged: bool,
}

fn check_speeds(kinds: &[NodeKind], speed: &[f64]) -> Result<()> {
    if speed.len() != kinds.len() {
        return invalid("speed field does not match the grid");
    }
    for (k, v) in kinds.iter().zip(speed) {
        if *k == NodeKind::Free && !(*v > 0.0 && v.is_finite()) {
            return invalid(format!("speed must be positive and finite on free nodes, got {v}"));
        }
    }
    Ok(())
}

/// Isotropic `v |grad T| = 1` on a 2D grid; `Fixed` nodes are the sources.
pub fn solve_stationary_eikonal_2d(grid: &Grid2D, kinds: &[NodeKind], speed: &[f64]) -> Result<EikonalSolution<ScalarField2D>> {
    check_speeds(kinds, speed)?;
    let r = fast_sweep(grid.dims, grid.spacing, kinds, None, &NodeSpeed(speed), SweepOptions::default());
    Ok(EikonalSolution {
        arrival: ScalarField2D::new(*grid, r.values)?,
        rounds: r.rounds,
        outer_iterations: 1,
        converged: r.converged,
    })
}

/// Isotropic `v |grad T| = 1` on a 3D grid; `Fixed` nodes are the sources.
pub fn solve_stationary_eikonal_3d(grid: &Grid3D, kinds: &[NodeKind], speed: &[f64]) -> Result<EikonalSolution<ScalarField3D>> {
    check_speeds(kinds, speed)?;
    let r = fast_sweep(grid.dims, grid.spacing, kinds, None, &NodeSpeed(speed), SweepOptions::default());
    Ok(EikonalSolution {
        arrival: ScalarField3D::new(*grid, r.values)?,
        rounds: r.rounds,
        outer_iterations: 1,
        converged: r.converged,
    })
}

/// Stopping rule for [`solve_anisotropic_eikonal_3d`].
#[derive(Debug, Clone, Copy)]
pub struct AnisotropicOptions {
    /// Cap on full rounds of sweeps.
    pub max_rounds: usize,
    /// A round changing no value by more than this ends the solve.
    pub tol: f64,
}

impl Default for AnisotropicOptions {
    fn default() -> Self {
        AnisotropicOptions { max_rounds: 200, tol: 1e-9 }
    }
}

/// Direction-dependent slowness evaluated inside the Godunov update: the
/// direction is the causal gradient built from the tentative value and the
/// upwind neighbours it actually uses.
struct DirectionalSlowness<'a> {
    grid: &'a Grid3D,
    speed: &'a dyn Fn([f64; 3], Vec3) -> f64,
}

impl LocalSlowness<3> for DirectionalSlowness<'_> {
    fn slowness(&self, node: usize, upwind: &[(f64, usize); 3], candidate: Option<f64>) -> f64 {
        let mut d = [0.0; 3];
        match candidate {
            Some(t) => {
                for a in 0..3 {
                    let (v, nb) = upwind[a];
                    if v < t {
                        let sign = if nb < node { 1.0 } else { -1.0 };
                        d[a] = sign * (t - v) / self.grid.spacing[a];
                    }
                }
            }
            None => {
                // Start from the single axis with the smallest neighbour.
                let a = (0..3).min_by(|&x, &y| upwind[x].0.total_cmp(&upwind[y].0)).unwrap_or(0);
                if upwind[a].0.is_finite() {
                    d[a] = if upwind[a].1 < node { 1.0 } else { -1.0 };
                }
            }
        }
        let dir = Vec3::from_array(d).normalized().unwrap_or(Vec3::ZERO);
        let (i, j, k) = self.grid.coords(node);
        let v = (self.speed)(self.grid.point(i, j, k), dir);
        if v > 0.0 && v.is_finite() {
            1.0 / v
        } else {
            f64::INFINITY
        }
    }

    fn refinements(&self) -> usize {
        4
    }
}

/// Anisotropic `v(x, N) |grad T| = 1`, `N = grad T / |grad T|`.
///
/// Each Godunov update re-evaluates the speed with `N` taken from the upwind
/// neighbours of the previous tentative value, so the sweep iteration itself
/// is the fixed-point iteration on `N`.
pub fn solve_anisotropic_eikonal_3d(
    grid: &Grid3D,
    kinds: &[NodeKind],
    speed: &dyn Fn([f64; 3], Vec3) -> f64,
    opts: AnisotropicOptions,
) -> Result<EikonalSolution<ScalarField3D>> {
    if kinds.len() != grid.len() {
        return invalid("node kinds do not match the grid");
    }
    let sweep = SweepOptions { max_rounds: opts.max_rounds, tol: opts.tol };
    let r = fast_sweep(grid.dims, grid.spacing, kinds, None, &DirectionalSlowness { grid, speed }, sweep);
    Ok(EikonalSolution { arrival: ScalarField3D::new(*grid, r.values)?, rounds: r.rounds, outer_iterations: 1, converged: r.converged })
}

/// Replaces `phi` by the signed distance to its own zero level.
///
/// Nodes next to a sign change get `phi / |grad phi|` and are frozen; each sign
/// region is then filled by unit-speed fast sweeping. Fails when the field has
/// no front or no coherent one (more than half the nodes sit on the front).
pub fn reinitialize(state: &LevelSetState) -> Result<LevelSetState> {
    let phi = &state.phi;
    let g = phi.grid;
    let n = g.len();
    let neg = |m: usize| phi.values[m] <= 0.0;
    let mut front = vec![None; n];
    let mut count = 0usize;
    for m in 0..n {
        let (i, j, k) = g.coords(m);
        let idx = [i, j, k];
        let mut crossing = false;
        for a in 0..3 {
            for off in [-1isize, 1] {
                let c = idx[a] as isize + off;
                if c >= 0 && (c as usize) < g.dims[a] {
                    let mut q = idx;
                    q[a] = c as usize;
                    crossing |= neg(g.index(q[0], q[1], q[2])) != neg(m);
                }
            }
        }
        if crossing {
            let grad = Vec3::from_array(phi.gradient_central(i, j, k)).norm();
            let d = if grad > GRAD_EPS { phi.values[m] / grad } else { 0.0 };
            let d = d.abs().min(g.min_spacing());
            front[m] = Some(if neg(m) { -d } else { d });
            count += 1;
        }
    }
    if count == 0 {
        return invalid("level-set function has no zero crossing");
    }
    if 2 * count > n {
        return invalid("level-set function has no coherent front");
    }
    let mut out = vec![0.0; n];
    for side_neg in [false, true] {
        let kinds: Vec<NodeKind> = (0..n)
            .map(|m| match front[m] {
                Some(d) if neg(m) == side_neg => NodeKind::Fixed(d.abs()),
                _ if neg(m) == side_neg => NodeKind::Free,
                _ => NodeKind::Blocked,
            })
            .collect();
        let r = fast_sweep(g.dims, g.spacing, &kinds, None, &UniformSpeed(1.0), SweepOptions::default());
        for m in 0..n {
            if neg(m) == side_neg {
                out[m] = if side_neg { -r.values[m] } else { r.values[m] };
            }
        }
    }
    Ok(LevelSetState { phi: ScalarField3D { grid: g, values: out, mask: phi.mask.clone() }, time: state.time })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(lo: f64, hi: f64, h: f64) -> Grid3D {
        Grid3D::covering([lo; 3], [hi; 3], h).unwrap()
    }

    fn sphere(g: Grid3D, r: f64, scale: f64) -> LevelSetState {
        LevelSetState::new(ScalarField3D::from_fn(g, |p| scale * (Vec3::from_array(p).norm() - r)))
    }

    /// Radius of the zero level along +x through the centre, by linear interpolation.
    fn radius_along_x(s: &LevelSetState) -> f64 {
        let g = s.phi.grid;
        let c = (g.dims[1] - 1) / 2;
        for i in c..g.dims[0] - 1 {
            let (a, b) = (s.phi.get(i, c, c), s.phi.get(i + 1, c, c));
            if a <= 0.0 && b > 0.0 {
                return g.point(i, c, c)[0] + g.spacing[0] * a / (a - b);
            }
        }
        f64::NAN
    }

    #[test]
    fn zero_speed_is_bitwise_identity() {
        let s = sphere(cube(-1.0, 1.0, 0.1), 0.5, 1.0);
        let zero = |_: [f64; 3], _: f64| 0.0;
        let out = evolve(&s, &SpeedLaw::Normal(&zero), 0.01, 5).unwrap();
        assert_eq!(out.phi.values, s.phi.values);
    }

    #[test]
    fn cfl_violation_is_reported_before_stepping() {
        let s = sphere(cube(-1.0, 1.0, 0.1), 0.5, 1.0);
        let one = |_: [f64; 3], _: f64| 1.0;
        assert!(evolve(&s, &SpeedLaw::Normal(&one), 0.06, 1).is_err());
        assert!(evolve(&s, &SpeedLaw::Normal(&one), 0.05, 1).is_ok());
    }

    #[test]
    fn unit_normal_speed_grows_sphere() {
        let h = 0.04;
        let s = sphere(cube(-1.2, 1.2, h), 0.4, 1.0);
        let one = |_: [f64; 3], _: f64| 1.0;
        let out = evolve(&s, &SpeedLaw::Normal(&one), 0.02, 25).unwrap();
        assert!((out.time - 0.5).abs() < 1e-12);
        assert!((radius_along_x(&out) - 0.9).abs() < 2.0 * h);
        // Outward motion never raises phi.
        assert!(out.phi.values.iter().zip(&s.phi.values).all(|(a, b)| a <= b));
    }

    #[test]
    fn advection_translates_front() {
        let h = 0.05;
        let s = sphere(cube(-1.0, 1.0, h), 0.3, 1.0);
        let vel = |_: [f64; 3], _: f64| Vec3::new(1.0, 0.0, 0.0);
        let out = evolve(&s, &SpeedLaw::Advective(&vel), 0.025, 16).unwrap();
        // Right-hand crossing moves from 0.3 to 0.7.
        assert!((radius_along_x(&out) - 0.7).abs() < 2.0 * h);
    }

    #[test]
    fn anisotropic_law_sees_normals() {
        let h = 0.05;
        let s = sphere(cube(-1.0, 1.0, h), 0.3, 1.0);
        // Only fronts facing +x move.
        let law = |_: [f64; 3], _: f64, n: Vec3| n.x.max(0.0);
        let out = evolve(&s, &SpeedLaw::Anisotropic(&law), 0.02, 10).unwrap();
        assert!((radius_along_x(&out) - 0.5).abs() < 2.0 * h);
    }

    #[test]
    fn sphere_curvature_and_scale_invariance() {
        let h = 0.02;
        let g = Grid3D::new([-1.1; 3], [h; 3], [111, 111, 111]).unwrap();
        let s = sphere(g, 1.0, 1.0);
        let node = [105, 55, 55]; // x = 1.0 on the axis
        let (n, k) = normal_and_curvature(&s, node).unwrap();
        assert!((k - 2.0).abs() < 0.1);
        assert!((n.x - 1.0).abs() < 1e-6);
        let s5 = sphere(g, 1.0, 5.0);
        let (n5, k5) = normal_and_curvature(&s5, node).unwrap();
        assert!((n5 - n).norm() < 1e-10 && (k5 - k).abs() < 1e-10);
    }

    #[test]
    fn flat_interface_has_zero_curvature() {
        let g = Grid3D::new([0.0; 3], [0.1; 3], [5, 5, 5]).unwrap();
        let s = LevelSetState::new(ScalarField3D::from_fn(g, |p| p[2]));
        let (n, k) = normal_and_curvature(&s, [2, 2, 2]).unwrap();
        assert!((n - Vec3::Z).norm() < 1e-12 && k.abs() < 1e-9);
        let flat = LevelSetState::new(ScalarField3D::constant(g, 1.0));
        assert!(normal_and_curvature(&flat, [2, 2, 2]).is_err());
    }

    #[test]
    fn point_source_distance_2d() {
        let g = Grid2D::square(0.0, 1.0, 101).unwrap();
        let mut kinds = vec![NodeKind::Free; g.len()];
        kinds[g.index(50, 50)] = NodeKind::Fixed(0.0);
        let one = vec![1.0; g.len()];
        let two = vec![2.0; g.len()];
        let t1 = solve_stationary_eikonal_2d(&g, &kinds, &one).unwrap();
        let t2 = solve_stationary_eikonal_2d(&g, &kinds, &two).unwrap();
        let exact = ScalarField2D::from_fn(g, |x, y| (x - 0.5).hypot(y - 0.5));
        assert!(t1.arrival.max_abs_diff(&exact, |_| true) <= 2.0 * 0.01);
        assert!(t1.arrival.values.iter().zip(&t2.arrival.values).all(|(a, b)| (a - 2.0 * b).abs() < 1e-12));
    }

    #[test]
    fn circle_boundary_inradius() {
        let g = Grid2D::square(-1.2, 1.2, 121).unwrap();
        let h = g.spacing[0];
        let kinds: Vec<NodeKind> = (0..g.len())
            .map(|m| {
                let (i, j) = g.coords(m);
                let [x, y] = g.point(i, j);
                if x.hypot(y) >= 1.0 { NodeKind::Fixed(0.0) } else { NodeKind::Free }
            })
            .collect();
        let t = solve_stationary_eikonal_2d(&g, &kinds, &vec![1.0; g.len()]).unwrap();
        assert!((t.arrival.get(60, 60) - 1.0).abs() < 2.0 * h);
    }

    #[test]
    fn non_positive_speed_is_rejected() {
        let g = Grid2D::square(0.0, 1.0, 5).unwrap();
        let mut kinds = vec![NodeKind::Free; g.len()];
        kinds[0] = NodeKind::Fixed(0.0);
        assert!(solve_stationary_eikonal_2d(&g, &kinds, &vec![0.0; g.len()]).is_err());
    }

    #[test]
    fn elliptic_anisotropy_from_point_source() {
        // Normal speed equal to the support function of an ellipsoid with
        // semi-axes (2, 1, 1) spreads the front as that ellipsoid.
        let h = 0.05;
        let g = Grid3D::new([0.0; 3], [h; 3], [21, 21, 21]).unwrap();
        let mut kinds = vec![NodeKind::Free; g.len()];
        kinds[0] = NodeKind::Fixed(0.0);
        let speed = |_: [f64; 3], n: Vec3| (4.0 * n.x * n.x + n.y * n.y + n.z * n.z).sqrt().max(1e-3);
        let t = solve_anisotropic_eikonal_3d(&g, &kinds, &speed, AnisotropicOptions::default()).unwrap();
        assert!(t.converged, "rounds {}", t.rounds);
        for (i, j, k) in [(20, 0, 0), (0, 20, 0), (10, 10, 10), (20, 5, 12)] {
            let [x, y, z] = g.point(i, j, k);
            let exact = ((x / 2.0).powi(2) + y * y + z * z).sqrt();
            assert!((t.arrival.get(i, j, k) - exact).abs() < 4.0 * h, "{i} {j} {k}: {} vs {exact}", t.arrival.get(i, j, k));
        }
    }

    #[test]
    fn reinitialize_restores_unit_gradient() {
        let h = 0.05;
        let g = cube(-1.5, 1.5, h);
        let steep = sphere(g, 1.0, 10.0);
        let r = reinitialize(&steep).unwrap();
        let exact = sphere(g, 1.0, 1.0);
        assert!(r.phi.max_abs_diff_3d(&exact.phi) <= 2.0 * h);
    }

    #[test]
    fn reinitialize_keeps_a_plane_distance() {
        let g = cube(-1.0, 1.0, 0.1);
        let n = Vec3::new(0.3, -0.5, 0.8).normalized().unwrap();
        let s = LevelSetState::new(ScalarField3D::from_fn(g, |p| Vec3::from_array(p).dot(n) - 0.1));
        let r = reinitialize(&s).unwrap();
        // Nodes whose box of dependence towards the front stays inside the grid.
        for m in 0..g.len() {
            let (i, j, k) = g.coords(m);
            let p = g.point(i, j, k);
            if p.iter().all(|c| c.abs() <= 0.7) && s.phi.values[m].abs() <= 0.3 {
                assert!((r.phi.values[m] - s.phi.values[m]).abs() < 1e-3, "{i} {j} {k} {} {}", r.phi.values[m], s.phi.values[m]);
            }
        }
    }

    #[test]
    fn reinitialize_rejects_checkerboard() {
        let g = cube(0.0, 1.0, 0.1);
        let s = LevelSetState::new(ScalarField3D::from_fn(g, |p| {
            let q = ((p[0] * 10.0).round() + (p[1] * 10.0).round() + (p[2] * 10.0).round()) as i64;
            if q % 2 == 0 { 1.0 } else { -1.0 }
        }));
        assert!(reinitialize(&s).is_err());
    }
}
