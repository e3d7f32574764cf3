//! Overhangs: classification of surface points by the angle between their
//! outward normal and gravity, detection by comparing two arrival times of a
//! front grown from the build plate, and repair by outward level-set growth.

mod repair;

pub use repair::{added_region, repair_overhangs, repair_speed, RepairReport};

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::error::{invalid, Error, Result};
use crate::field::{Grid3D, ScalarField3D};
use crate::geom::Vec3;
use crate::levelset::{solve_anisotropic_eikonal_3d, AnisotropicOptions, NodeKind};
use crate::mesh::TriangleMesh;
use crate::sdf::SignedDistance;

/// Printing parameters shared by detection and repair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrintConfig {
    /// Limit overhang angle in radians, in `(0, π/2)`.
    pub alpha: f64,
    /// Unit build direction; gravity is its opposite.
    pub build_direction: Vec3,
    /// Print rate: build height per unit time.
    pub v0: f64,
    /// Height of the build plate along the build direction.
    pub z_min: f64,
    /// Weight of the unprintable-point term; `None` means `1 / (z_max - z_min)`.
    pub c1: Option<f64>,
    /// Weight of the concave-curvature term; `None` means the grid spacing.
    pub c2: Option<f64>,
    /// Evolution time cap for repair.
    pub t_final: f64,
    /// Steps between printability checks during repair.
    pub check_every: usize,
}

impl Default for PrintConfig {
    fn default() -> Self {
        PrintConfig {
            alpha: FRAC_PI_4,
            build_direction: Vec3::Z,
            v0: 1.0,
            z_min: 0.0,
            c1: None,
            c2: None,
            t_final: 10.0,
            check_every: 10,
        }
    }
}

impl PrintConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < FRAC_PI_2) {
            return invalid(format!("overhang angle must lie in (0, π/2), got {}", self.alpha));
        }
        if ((self.build_direction.norm() - 1.0).abs() > 1e-9) || !self.build_direction.is_finite() {
            return invalid("build direction must be a unit vector");
        }
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return invalid(format!("print rate must be positive, got {}", self.v0));
        }
        for (name, c) in [("c1", self.c1), ("c2", self.c2)] {
            if let Some(c) = c {
                if !(c > 0.0 && c.is_finite()) {
                    return invalid(format!("{name} must be positive, got {c}"));
                }
            }
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) || !self.z_min.is_finite() {
            return invalid("final time and plate height must be finite, final time non-negative");
        }
        if self.check_every == 0 {
            return invalid("printability check interval must be at least 1 step");
        }
        Ok(())
    }

    pub fn height(&self, p: Vec3) -> f64 {
        p.dot(self.build_direction)
    }
}

/// Printability of a surface point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Printability {
    /// Hangs below the limit angle.
    Unprintable,
    /// Printable, but may be moved to support points above.
    Modifiable,
    /// Faces up or sideways.
    Safe,
}

impl Printability {
    pub fn is_printable(self) -> bool {
        self != Printability::Unprintable
    }
}

/// Angle between gravity and the outward normal, in `[0, π]`.
pub fn gravity_angle(normal: Vec3, build_direction: Vec3) -> f64 {
    (-normal.dot(build_direction)).clamp(-1.0, 1.0).acos()
}

/// Unprintable for angles in `[0, alpha)`, safe in `[π/2, π]`, modifiable between.
pub fn classify(normal: Vec3, alpha: f64) -> Printability {
    classify_along(normal, alpha, Vec3::Z)
}

pub fn classify_along(normal: Vec3, alpha: f64, build_direction: Vec3) -> Printability {
    let theta = gravity_angle(normal, build_direction);
    if theta < alpha {
        Printability::Unprintable
    } else if theta >= FRAC_PI_2 {
        Printability::Safe
    } else {
        Printability::Modifiable
    }
}

/// Front speed for propagation direction `a`:
/// `v0 / max(tan(alpha) |P a|, |h . a|)` with `P` the projection orthogonal to `h`.
/// A zero direction gets `v0`.
pub fn anisotropic_speed(a: Vec3, build_direction: Vec3, alpha: f64, v0: f64) -> f64 {
    let Some(a) = a.normalized() else {
        return v0;
    };
    let vertical = build_direction.dot(a);
    let horizontal = (a - build_direction * vertical).norm();
    let denom = (alpha.tan() * horizontal).max(vertical.abs());
    if denom > 0.0 {
        v0 / denom
    } else {
        v0
    }
}

/// Point of a zero level found on a grid edge, with its unit outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub normal: Vec3,
}

/// Zero-level samples of `phi` by linear interpolation along grid edges that
/// change sign. Normals interpolate the central-difference gradients of the
/// edge's end nodes; samples with vanishing gradient are skipped.
pub fn surface_samples(phi: &ScalarField3D) -> Vec<SurfaceSample> {
    let g = phi.grid;
    let grad = |n: usize| {
        let (i, j, k) = g.coords(n);
        Vec3::from_array(phi.gradient_central(i, j, k))
    };
    let mut out = Vec::new();
    for n in 0..g.len() {
        let (i, j, k) = g.coords(n);
        let idx = [i, j, k];
        for a in 0..3 {
            if idx[a] + 1 >= g.dims[a] {
                continue;
            }
            let mut q = idx;
            q[a] += 1;
            let m = g.index(q[0], q[1], q[2]);
            let (s0, s1) = (phi.values[n], phi.values[m]);
            if (s0 <= 0.0) == (s1 <= 0.0) {
                continue;
            }
            let t = s0 / (s0 - s1);
            let p0 = Vec3::from_array(g.point(i, j, k));
            let p1 = Vec3::from_array(g.point(q[0], q[1], q[2]));
            let n_vec = grad(n) * (1.0 - t) + grad(m) * t;
            if let Some(normal) = n_vec.normalized() {
                out.push(SurfaceSample { point: p0 + (p1 - p0) * t, normal });
            }
        }
    }
    out
}

/// Per-sample classification with the build plate treated as support:
/// samples within one grid step above `z_min` count as printable.
#[derive(Debug, Clone, PartialEq)]
pub struct PrintabilityReport {
    pub samples: Vec<SurfaceSample>,
    pub classes: Vec<Printability>,
    /// Fraction of printable samples; 1 when there are none.
    pub printable_fraction: f64,
}

impl PrintabilityReport {
    pub fn assess(phi: &ScalarField3D, config: &PrintConfig) -> Self {
        let samples = surface_samples(phi);
        let plate = config.z_min + phi.grid.spacing.iter().fold(0.0f64, |m, &h| m.max(h));
        let classes: Vec<Printability> = samples
            .iter()
            .map(|s| {
                if config.height(s.point) <= plate {
                    Printability::Safe
                } else {
                    classify_along(s.normal, config.alpha, config.build_direction)
                }
            })
            .collect();
        let printable = classes.iter().filter(|c| c.is_printable()).count();
        let printable_fraction = if classes.is_empty() { 1.0 } else { printable as f64 / classes.len() as f64 };
        PrintabilityReport { samples, classes, printable_fraction }
    }

    pub fn count(&self, class: Printability) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }
}

/// Arrival times of the two fronts and the overhang mask on the grid nodes.
#[derive(Debug, Clone)]
pub struct Detection {
    /// Height-only arrival `(h . x - z_min) / v0`, on every node.
    pub t1: ScalarField3D,
    /// Arrival under the direction-dependent speed, inside the object only
    /// (infinite elsewhere).
    pub t2: ScalarField3D,
    /// Nodes where `t2 - t1` exceeds the threshold.
    pub overhang: Vec<bool>,
    pub threshold: f64,
    pub report: PrintabilityReport,
    pub converged: bool,
}

impl Detection {
    pub fn overhang_count(&self) -> usize {
        self.overhang.iter().filter(|&&b| b).count()
    }
}

/// Overhang detection on a sampled signed distance (negative inside).
///
/// Sources are the interior nodes less than one grid step above the plate.
/// The lag threshold is `2h / v0`.
pub fn detect_overhangs(sdf: &ScalarField3D, config: &PrintConfig) -> Result<Detection> {
    config.validate()?;
    let g = sdf.grid;
    let h = g.spacing[0].max(g.spacing[1]).max(g.spacing[2]);
    let height = |n: usize| {
        let (i, j, k) = g.coords(n);
        config.height(Vec3::from_array(g.point(i, j, k)))
    };
    let t1_values: Vec<f64> = (0..g.len()).map(|n| (height(n) - config.z_min) / config.v0).collect();
    let kinds: Vec<NodeKind> = (0..g.len())
        .map(|n| {
            if sdf.values[n] > 0.0 {
                NodeKind::Blocked
            } else if height(n) - config.z_min < h {
                NodeKind::Fixed(t1_values[n])
            } else {
                NodeKind::Free
            }
        })
        .collect();
    if !kinds.iter().any(|k| matches!(k, NodeKind::Fixed(_))) {
        return Err(Error::InvalidInput("object does not touch the build plate".into()));
    }
    let speed = |_: [f64; 3], a: Vec3| anisotropic_speed(a, config.build_direction, config.alpha, config.v0);
    let sol = solve_anisotropic_eikonal_3d(&g, &kinds, &speed, AnisotropicOptions::default())?;
    let threshold = 2.0 * h / config.v0;
    let overhang: Vec<bool> = (0..g.len())
        .map(|n| sdf.values[n] <= 0.0 && sol.arrival.values[n] - t1_values[n] > threshold)
        .collect();
    Ok(Detection {
        t1: ScalarField3D::new(g, t1_values)?,
        t2: sol.arrival,
        overhang,
        threshold,
        report: PrintabilityReport::assess(sdf, config),
        converged: sol.converged,
    })
}

/// Grid with spacing `h` covering the mesh bounds plus `margin` cells on each side.
pub fn grid_around(mesh: &TriangleMesh, h: f64, margin: usize) -> Result<Grid3D> {
    let (lo, hi) = mesh.bounds().ok_or_else(|| Error::InvalidInput("empty mesh".into()))?;
    let pad = h * margin as f64;
    Grid3D::covering((lo - Vec3::new(pad, pad, pad)).to_array(), (hi + Vec3::new(pad, pad, pad)).to_array(), h)
}

/// [`detect_overhangs`] on the signed distance of `mesh` sampled with spacing `h`.
pub fn detect_overhangs_mesh(mesh: &TriangleMesh, config: &PrintConfig, h: f64) -> Result<Detection> {
    let grid = grid_around(mesh, h, 2)?;
    let sdf = SignedDistance::new(mesh)?;
    let values = {
        use rayon::prelude::*;
        (0..grid.len())
            .into_par_iter()
            .map(|n| {
                let (i, j, k) = grid.coords(n);
                sdf.eval(Vec3::from_array(grid.point(i, j, k)))
            })
            .collect()
    };
    detect_overhangs(&ScalarField3D::new(grid, values)?, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    use proptest::prelude::*;

    fn box_sdf(p: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> f64 {
        let mut out = [0.0; 3];
        let mut inside = f64::NEG_INFINITY;
        for a in 0..3 {
            let c = 0.5 * (lo[a] + hi[a]);
            let d = (p[a] - c).abs() - 0.5 * (hi[a] - lo[a]);
            out[a] = d.max(0.0);
            inside = inside.max(d);
        }
        Vec3::from_array(out).norm() + inside.min(0.0)
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify(-Vec3::Z, FRAC_PI_4), Printability::Unprintable);
        assert_eq!(classify(Vec3::Z, FRAC_PI_4), Printability::Safe);
        let theta = PI / 3.0;
        // Angle from gravity (0,0,-1).
        let n = Vec3::new(theta.sin(), 0.0, -theta.cos());
        assert_eq!(classify(n, FRAC_PI_4), Printability::Modifiable);
        assert_eq!(classify(Vec3::X, FRAC_PI_4), Printability::Safe);
    }

    #[test]
    fn speed_examples() {
        let v0 = 2.5;
        assert_eq!(anisotropic_speed(Vec3::Z, Vec3::Z, 0.3, v0), v0);
        assert!((anisotropic_speed(Vec3::X, Vec3::Z, FRAC_PI_4, v0) - v0).abs() < 1e-12);
        let diag = Vec3::new(FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2);
        assert!((anisotropic_speed(diag, Vec3::Z, FRAC_PI_4, v0) - SQRT_2 * v0).abs() < 1e-12);
    }

    #[test]
    fn column_has_no_overhang() {
        let grid = Grid3D::covering([-0.5, -0.5, -0.2], [0.5, 0.5, 1.2], 0.05).unwrap();
        let sdf = ScalarField3D::from_fn(grid, |p| box_sdf(p, [-0.25, -0.25, 0.0], [0.25, 0.25, 1.0]));
        let d = detect_overhangs(&sdf, &PrintConfig::default()).unwrap();
        assert_eq!(d.overhang_count(), 0);
        assert!(d.converged);
        // Vertical growth keeps pace with height.
        for n in 0..grid.len() {
            if d.t2.values[n].is_finite() {
                assert!((d.t2.values[n] - d.t1.values[n]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn floating_object_is_rejected() {
        let grid = Grid3D::covering([-0.5, -0.5, -0.2], [0.5, 0.5, 1.2], 0.1).unwrap();
        let sdf = ScalarField3D::from_fn(grid, |p| box_sdf(p, [-0.2; 3], [0.2, 0.2, 0.2]).max(0.5 - p[2]));
        assert!(detect_overhangs(&sdf, &PrintConfig::default()).is_err());
    }

    #[test]
    fn arrival_never_beats_height() {
        let grid = Grid3D::covering([-1.0, -0.3, -0.2], [1.0, 0.3, 1.2], 0.05).unwrap();
        let sdf = ScalarField3D::from_fn(grid, |p| {
            box_sdf(p, [-0.2, -0.2, 0.0], [0.2, 0.2, 0.7]).min(box_sdf(p, [-0.8, -0.2, 0.7], [0.8, 0.2, 1.0]))
        });
        let d = detect_overhangs(&sdf, &PrintConfig::default()).unwrap();
        let h = 0.05;
        for n in 0..grid.len() {
            if d.t2.values[n].is_finite() {
                assert!(d.t2.values[n] >= d.t1.values[n] - h);
            }
        }
        assert!(d.overhang_count() > 0);
    }

    #[test]
    fn plate_samples_count_as_supported() {
        let grid = Grid3D::covering([-0.5, -0.5, -0.2], [0.5, 0.5, 0.8], 0.05).unwrap();
        let sdf = ScalarField3D::from_fn(grid, |p| box_sdf(p, [-0.25, -0.25, 0.0], [0.25, 0.25, 0.5]));
        let r = PrintabilityReport::assess(&sdf, &PrintConfig::default());
        assert_eq!(r.printable_fraction, 1.0);
        assert!(r.count(Printability::Safe) > 0);
    }

    proptest! {
        #[test]
        fn classes_partition_the_sphere(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, alpha in 0.01f64..1.56,
        ) {
            prop_assume!(Vec3::new(x, y, z).norm() > 1e-3 && z.abs() > 1e-12);
            let n = Vec3::new(x, y, z).normalized().unwrap();
            let theta = gravity_angle(n, Vec3::Z);
            let expected = if theta < alpha {
                Printability::Unprintable
            } else if theta >= FRAC_PI_2 {
                Printability::Safe
            } else {
                Printability::Modifiable
            };
            prop_assert_eq!(classify(n, alpha), expected);
            prop_assert_eq!(classify(n, alpha) == Printability::Safe, n.z >= 0.0);
        }
    }
}
