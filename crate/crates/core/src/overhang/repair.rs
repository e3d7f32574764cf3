//! Overhang repair: the object grows outward with a normal speed that is
//! positive only on downward-facing surface above the plate, until every
//! zero-level sample is printable or the time cap is reached.

use rayon::prelude::*;

use super::{gravity_angle, PrintConfig, PrintabilityReport};
use crate::error::{invalid, Result};
use crate::field::ScalarField3D;
use crate::geom::Vec3;
use crate::levelset::{cfl_dt, normal_and_curvature, step_normal_speed, LevelSetState};

/// Normal speed at a point with outward normal `normal`, curvature
/// `curvature` (positive on convex parts) and build height `height`:
/// `c1 (z_max - height) max(cos θ - cos α, 0) + c2 max(-κ, 0)` where the
/// normal points down and the point is above the plate, zero elsewhere.
pub fn repair_speed(normal: Vec3, curvature: f64, height: f64, config: &PrintConfig, z_max: f64, c1: f64, c2: f64) -> f64 {
    let n3 = normal.dot(config.build_direction);
    if !(n3 < 0.0 && height > config.z_min) {
        return 0.0;
    }
    let cos_theta = gravity_angle(normal, config.build_direction).cos();
    let unprintable = (cos_theta - config.alpha.cos()).max(0.0);
    let concave = (-curvature).max(0.0);
    c1 * (z_max - height).max(0.0) * unprintable + c2 * concave
}

#[derive(Debug, Clone)]
pub struct RepairReport {
    pub state: LevelSetState,
    pub steps: usize,
    /// `(time, printable fraction)` at every check, starting at time 0.
    pub trace: Vec<(f64, f64)>,
    /// Every zero-level sample of the final state is printable.
    pub printable: bool,
    pub z_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub final_report: PrintabilityReport,
}

/// Grows the object bounded by the zero level of `state.phi` (negative
/// inside) until it is printable. The top height `z_max` is taken from the
/// initial object and kept fixed. Nodes with zero speed, including every node
/// at or below the plate, keep their value bit-exactly; elsewhere the level-set
/// function can only decrease.
pub fn repair_overhangs(state: &LevelSetState, config: &PrintConfig) -> Result<RepairReport> {
    config.validate()?;
    let g = state.phi.grid;
    let h = g.min_spacing();
    let height_of = |n: usize| {
        let (i, j, k) = g.coords(n);
        config.height(Vec3::from_array(g.point(i, j, k)))
    };
    let mut report = PrintabilityReport::assess(&state.phi, config);
    let z_max = report
        .samples
        .iter()
        .map(|s| config.height(s.point))
        .chain((0..g.len()).filter(|&n| state.phi.values[n] <= 0.0).map(height_of))
        .fold(f64::NEG_INFINITY, f64::max);
    if !z_max.is_finite() {
        return invalid("level-set function has no interior");
    }
    if !(z_max > config.z_min) {
        return invalid("object lies entirely at or below the build plate");
    }
    let c1 = config.c1.unwrap_or(1.0 / (z_max - config.z_min));
    let c2 = config.c2.unwrap_or(h);

    let mut s = state.clone();
    let mut trace = vec![(s.time, report.printable_fraction)];
    let mut steps = 0usize;
    let t_end = state.time + config.t_final;
    while report.printable_fraction < 1.0 && s.time < t_end {
        let phi = &s;
        let speeds: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|n| {
                let (i, j, k) = g.coords(n);
                match normal_and_curvature(phi, [i, j, k]) {
                    Ok((normal, kappa)) => repair_speed(normal, kappa, height_of(n), config, z_max, c1, c2),
                    Err(_) => 0.0,
                }
            })
            .collect();
        let vmax = speeds.iter().fold(0.0f64, |m, &v| m.max(v));
        if vmax == 0.0 {
            // Nothing moves any more; further steps cannot change the verdict.
            break;
        }
        let dt = cfl_dt(h, vmax).min(t_end - s.time);
        step_normal_speed(&mut s, &speeds, dt)?;
        steps += 1;
        if steps.is_multiple_of(config.check_every) || s.time >= t_end {
            report = PrintabilityReport::assess(&s.phi, config);
            trace.push((s.time, report.printable_fraction));
        }
    }
    if trace.last().map(|t| t.0) != Some(s.time) {
        report = PrintabilityReport::assess(&s.phi, config);
        trace.push((s.time, report.printable_fraction));
    }
    Ok(RepairReport { printable: report.printable_fraction >= 1.0, state: s, steps, trace, z_max, c1, c2, final_report: report })
}

/// Level-set function of the material added by repair: inside the final
/// object and outside the initial one.
pub fn added_region(initial: &ScalarField3D, repaired: &ScalarField3D) -> Result<ScalarField3D> {
    if initial.grid != repaired.grid {
        return invalid("fields live on different grids");
    }
    let values = initial.values.iter().zip(&repaired.values).map(|(a, b)| b.max(-a)).collect();
    ScalarField3D::new(initial.grid, values)
}

#[cfg(test)]
mod tests {
    use super::super::Printability;
    use super::*;
    use crate::field::Grid3D;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn speed_terms() {
        let config = PrintConfig::default();
        // Flat downward face one unit below the top, unit weights, flat surface.
        let v1 = repair_speed(-Vec3::Z, 0.0, 1.0, &config, 2.0, 1.0, 1.0);
        assert!((v1 - (1.0 - FRAC_PI_4.cos())).abs() < 1e-15);
        assert!((v1 - 0.29289).abs() < 1e-5);
        let tilted = Vec3::new(0.0, 0.6, -0.8);
        // Curvature term alone: zero on convex, |κ| on concave parts.
        let side = Vec3::new(0.8, 0.0, -0.6);
        assert_eq!(repair_speed(side, 2.0, 1.0, &config, 1.0, 1.0, 1.0), 0.0);
        assert_eq!(repair_speed(side, -1.0, 1.0, &config, 1.0, 1.0, 1.0), 1.0);
        assert!(repair_speed(tilted, 0.0, 1.0, &config, 2.0, 1.0, 1.0) > 0.0);
        // Gates: upward normals and points on the plate never move.
        assert_eq!(repair_speed(Vec3::Z, -5.0, 1.0, &config, 2.0, 1.0, 1.0), 0.0);
        assert_eq!(repair_speed(-Vec3::Z, -5.0, 0.0, &config, 2.0, 1.0, 1.0), 0.0);
    }

    fn pyramid() -> LevelSetState {
        let grid = Grid3D::covering([-1.0, -1.0, -0.3], [1.0, 1.0, 1.0], 0.05).unwrap();
        // Square pyramid with 60° side walls standing on z = 0.
        let s = 3f64.sqrt();
        let phi = ScalarField3D::from_fn(grid, |[x, y, z]| {
            let side = (s * x.abs().max(y.abs()) + z - 0.7 * s) / 2.0;
            side.max(-z)
        });
        LevelSetState::new(phi)
    }

    #[test]
    fn printable_object_is_left_alone() {
        let s = pyramid();
        let r = repair_overhangs(&s, &PrintConfig::default()).unwrap();
        assert!(r.printable);
        assert_eq!(r.steps, 0);
        assert_eq!(r.state, s);
        assert_eq!(r.final_report.count(Printability::Unprintable), 0);
    }

    #[test]
    fn shelf_grows_until_printable() {
        // Column with a one-sided shelf.
        let grid = Grid3D::covering([-0.6, -0.4, -0.2], [0.9, 0.4, 1.0], 0.05).unwrap();
        let bx = |p: [f64; 3], lo: [f64; 3], hi: [f64; 3]| {
            (0..3).map(|a| (lo[a] - p[a]).max(p[a] - hi[a])).fold(f64::NEG_INFINITY, f64::max)
        };
        let phi = ScalarField3D::from_fn(grid, |p| {
            bx(p, [-0.2, -0.2, 0.0], [0.2, 0.2, 0.8]).min(bx(p, [-0.2, -0.2, 0.6], [0.6, 0.2, 0.8]))
        });
        let s0 = LevelSetState::new(phi);
        let config = PrintConfig { t_final: 40.0, ..PrintConfig::default() };
        let r = repair_overhangs(&s0, &config).unwrap();
        assert!(r.trace[0].1 < 1.0);
        assert!(r.printable, "trace {:?}", r.trace.last());
        for (n, (a, b)) in s0.phi.values.iter().zip(&r.state.phi.values).enumerate() {
            assert!(b <= a);
            let (_, _, k) = grid.coords(n);
            if grid.point(0, 0, k)[2] <= 0.0 {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        let added = added_region(&s0.phi, &r.state.phi).unwrap();
        assert!(added.values.iter().any(|&v| v < 0.0));
    }
}
