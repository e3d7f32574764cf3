//! Photometric stereo with two (or three) Lambertian images under known,
//! non-parallel lights. Eliminating the albedo and the normalization between
//! two brightness equations leaves the linear transport equation
//! `b . grad u = f`, solved by first-order upwinding from the inflow boundary.

use crate::error::{invalid, Result};
use crate::field::ScalarField2D;
use crate::geom::Vec3;

/// Nodes with `|b|` below this fraction of `max |b|` are characteristic-degenerate.
const DEGENERATE_FRACTION: f64 = 1e-9;
/// Albedo is left undefined where `N . L` is at most this.
const ALBEDO_EPS: f64 = 1e-6;

/// Two images of one surface under two lights, plus the boundary heights.
#[derive(Debug, Clone)]
pub struct PsProblem {
    pub images: [ScalarField2D; 2],
    pub lights: [Vec3; 2],
    /// Heights read at the inflow boundary nodes.
    pub boundary: ScalarField2D,
}

impl PsProblem {
    /// Normalizes the lights and checks the invariants.
    pub fn new(images: [ScalarField2D; 2], lights: [Vec3; 2], boundary: ScalarField2D) -> Result<Self> {
        let lights = [unit_light(lights[0])?, unit_light(lights[1])?];
        if lights[0].cross(lights[1]).norm() < 1e-9 {
            return invalid("lights must not be parallel");
        }
        check_same_domain(&images[0], &images[1])?;
        if boundary.grid != images[0].grid {
            return invalid("boundary data must share the image grid");
        }
        Ok(PsProblem { images, lights, boundary })
    }
}

fn unit_light(l: Vec3) -> Result<Vec3> {
    match l.normalized() {
        Some(u) if u.z > 0.0 => Ok(u),
        _ => invalid(format!("light {l:?} must be nonzero with positive third component")),
    }
}

fn check_same_domain(a: &ScalarField2D, b: &ScalarField2D) -> Result<()> {
    if a.grid != b.grid || a.mask != b.mask {
        return invalid("images must share one grid and mask");
    }
    Ok(())
}

/// Transport field and right-hand side of `b . grad u = f` on the images' grid.
#[derive(Debug, Clone)]
pub struct Transport {
    pub b: Vec<[f64; 2]>,
    pub f: ScalarField2D,
}

/// `b = I2 l1' - I1 l1''` (horizontal parts), `f = I2 l3' - I1 l3''`, per node.
pub fn assemble_bf(problem: &PsProblem) -> Transport {
    let [i1, i2] = &problem.images;
    let [la, lb] = problem.lights;
    let b = i1
        .values
        .iter()
        .zip(&i2.values)
        .map(|(&p, &q)| [q * la.x - p * lb.x, q * la.y - p * lb.y])
        .collect();
    let mut f = i1.clone();
    for (k, v) in f.values.iter_mut().enumerate() {
        *v = i2.values[k] * la.z - i1.values[k] * lb.z;
    }
    Transport { b, f }
}

/// Three images under non-coplanar lights. Each of the three pairwise
/// equations `b_ij . p = f_ij` constrains the gradient `p`; their least-squares
/// normal equations `M p = r` are projected on the principal direction `d` of
/// `M`, giving one transport equation `(M d) . grad u = d . r`. The sign of
/// `d` follows the principal direction of the summed `M` so that neighbouring
/// nodes transport the same way.
pub fn assemble_bf_three(images: &[ScalarField2D; 3], lights: [Vec3; 3]) -> Result<Transport> {
    let lights = [unit_light(lights[0])?, unit_light(lights[1])?, unit_light(lights[2])?];
    if lights[0].cross(lights[1]).dot(lights[2]).abs() < 1e-9 {
        return invalid("the three lights must not be coplanar");
    }
    check_same_domain(&images[0], &images[1])?;
    check_same_domain(&images[0], &images[2])?;
    let pairs = [(0, 1), (1, 2), (0, 2)];
    let n = images[0].values.len();
    let mut normal = vec![[0.0f64; 3]; n];
    let mut rhs = vec![[0.0f64; 2]; n];
    let mut total = [0.0f64; 3];
    for k in 0..n {
        for &(s, t) in &pairs {
            let (is, it) = (images[s].values[k], images[t].values[k]);
            let b = [it * lights[s].x - is * lights[t].x, it * lights[s].y - is * lights[t].y];
            let f = it * lights[s].z - is * lights[t].z;
            normal[k][0] += b[0] * b[0];
            normal[k][1] += b[0] * b[1];
            normal[k][2] += b[1] * b[1];
            rhs[k][0] += b[0] * f;
            rhs[k][1] += b[1] * f;
        }
        for c in 0..3 {
            total[c] += normal[k][c];
        }
    }
    let reference = principal_direction(total);
    let mut b = Vec::with_capacity(n);
    let mut f = images[0].clone();
    for k in 0..n {
        let mut d = principal_direction(normal[k]);
        if d[0] * reference[0] + d[1] * reference[1] < 0.0 {
            d = [-d[0], -d[1]];
        }
        let [m00, m01, m11] = normal[k];
        b.push([m00 * d[0] + m01 * d[1], m01 * d[0] + m11 * d[1]]);
        f.values[k] = d[0] * rhs[k][0] + d[1] * rhs[k][1];
    }
    Ok(Transport { b, f })
}

/// Unit eigenvector of the largest eigenvalue of the symmetric matrix
/// `[[m00, m01], [m01, m11]]`.
fn principal_direction([m00, m01, m11]: [f64; 3]) -> [f64; 2] {
    let theta = 0.5 * (2.0 * m01).atan2(m00 - m11);
    [theta.cos(), theta.sin()]
}

/// Outcome of [`solve_transport`].
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub height: ScalarField2D,
    /// Nodes with `|b| <= 1e-9 max |b|`.
    pub degenerate: Vec<usize>,
    /// Nodes no characteristic reaches from the inflow boundary; filled by
    /// averaging their neighbours.
    pub unreachable: Vec<usize>,
    /// `max |b . grad u - f|` with central differences over domain nodes
    /// whose four neighbours are in the domain, excluding flagged nodes.
    pub residual: f64,
    pub sweeps: usize,
}

/// First-order upwind solution of `b . grad u = f`. A domain node whose
/// upwind neighbour along some axis is missing (outside the grid or mask) is
/// an inflow node and takes its value from `boundary`. Axes with `b_k = 0`
/// drop out of the stencil.
///
/// `(b, f)` and `(-b, -f)` state the same equation; the pair is first
/// oriented so that the domain sum of `b` points to positive `x` (positive
/// `y` on a tie), which makes the result independent of the sign.
pub fn solve_transport(transport: &Transport, boundary: &ScalarField2D) -> Result<TransportSolution> {
    let grid = transport.f.grid;
    let n = grid.len();
    if transport.b.len() != n || boundary.grid != grid {
        return invalid("transport field, right-hand side and boundary must share one grid");
    }
    let mut sum = [0.0f64; 2];
    for k in (0..n).filter(|&k| transport.f.in_domain(k)) {
        sum[0] += transport.b[k][0];
        sum[1] += transport.b[k][1];
    }
    let flip = sum[0] < 0.0 || (sum[0] == 0.0 && sum[1] < 0.0);
    let oriented;
    let transport = if flip {
        oriented = Transport {
            b: transport.b.iter().map(|b| [-b[0], -b[1]]).collect(),
            f: transport.f.map(|v| -v),
        };
        &oriented
    } else {
        transport
    };
    let f = &transport.f;
    let [nx, ny] = grid.dims;
    let bmax = transport.b.iter().fold(0.0f64, |m, b| m.max(b[0].hypot(b[1])));
    let eps = DEGENERATE_FRACTION * bmax;

    #[derive(Clone, Copy, PartialEq)]
    enum Role {
        Outside,
        Inflow,
        Degenerate,
        /// Coefficients over the upwind neighbours (at most two).
        Interior { up: [Option<(usize, f64)>; 2], diag: f64 },
    }
    let mut roles = vec![Role::Outside; n];
    let mut degenerate = vec![];
    for k in 0..n {
        if !f.in_domain(k) {
            continue;
        }
        let b = transport.b[k];
        if b[0].hypot(b[1]) <= eps {
            roles[k] = Role::Degenerate;
            degenerate.push(k);
            continue;
        }
        let (i, j) = grid.coords(k);
        let mut up = [None, None];
        let mut diag = 0.0;
        let mut inflow = false;
        for a in 0..2 {
            if b[a] == 0.0 {
                continue;
            }
            let (idx, len, stride) = if a == 0 { (i, nx, 1) } else { (j, ny, nx) };
            let nb = if b[a] > 0.0 {
                (idx > 0).then(|| k - stride)
            } else {
                (idx + 1 < len).then(|| k + stride)
            };
            match nb {
                Some(m) if f.in_domain(m) => {
                    let c = b[a].abs() / grid.spacing[a];
                    up[a] = Some((m, c));
                    diag += c;
                }
                _ => inflow = true,
            }
        }
        roles[k] = if inflow { Role::Inflow } else { Role::Interior { up, diag } };
    }

    let mut u = vec![f64::NAN; n];
    for k in 0..n {
        if roles[k] == Role::Inflow {
            u[k] = boundary.values[k];
        }
    }
    // Gauss-Seidel in the four axis orders; a node is set once all of its
    // upwind neighbours are, so sweeping ends when nothing new is set.
    let mut sweeps = 0;
    loop {
        let mut progress = false;
        for order in 0..4 {
            for jj in 0..ny {
                let j = if order & 2 == 0 { jj } else { ny - 1 - jj };
                for ii in 0..nx {
                    let i = if order & 1 == 0 { ii } else { nx - 1 - ii };
                    let k = grid.index(i, j);
                    if !u[k].is_nan() {
                        continue;
                    }
                    if let Role::Interior { up, diag } = roles[k] {
                        let mut acc = f.values[k];
                        let mut ready = true;
                        for &(m, c) in up.iter().flatten() {
                            if u[m].is_nan() {
                                ready = false;
                                break;
                            }
                            acc += c * u[m];
                        }
                        if ready {
                            u[k] = acc / diag;
                            progress = true;
                        }
                    }
                }
            }
        }
        sweeps += 1;
        if !progress {
            break;
        }
    }

    let mut unreachable: Vec<usize> =
        (0..n).filter(|&k| matches!(roles[k], Role::Interior { .. }) && u[k].is_nan()).collect();
    let mut holes: Vec<usize> = degenerate.iter().chain(&unreachable).copied().collect();
    fill_by_averaging(&grid, &mut u, &mut holes, |k| roles[k] != Role::Outside, boundary);
    for k in 0..n {
        if roles[k] == Role::Outside {
            u[k] = boundary.values[k];
        }
    }
    unreachable.sort_unstable();

    let mut height = ScalarField2D::new(grid, u)?;
    height.mask = f.mask.clone();
    let flagged = |k: usize| roles[k] == Role::Degenerate || unreachable.binary_search(&k).is_ok();
    let mut residual = 0.0f64;
    for k in 0..n {
        if roles[k] == Role::Outside || flagged(k) {
            continue;
        }
        let (i, j) = grid.coords(k);
        if i == 0 || j == 0 || i + 1 == nx || j + 1 == ny {
            continue;
        }
        if [k - 1, k + 1, k - nx, k + nx].iter().any(|&m| roles[m] == Role::Outside) {
            continue;
        }
        let g = height.gradient_central(i, j);
        let b = transport.b[k];
        residual = residual.max((b[0] * g[0] + b[1] * g[1] - f.values[k]).abs());
    }
    Ok(TransportSolution { height, degenerate, unreachable, residual, sweeps })
}

/// Repeatedly sets each hole to the mean of its already-known domain
/// neighbours; holes with no known neighbour at all take the boundary value.
fn fill_by_averaging(
    grid: &crate::field::Grid2D,
    u: &mut [f64],
    holes: &mut Vec<usize>,
    in_domain: impl Fn(usize) -> bool,
    boundary: &ScalarField2D,
) {
    let [nx, ny] = grid.dims;
    while !holes.is_empty() {
        let mut filled = vec![];
        for &k in holes.iter() {
            let (i, j) = grid.coords(k);
            let nbs = [
                (i > 0).then(|| k - 1),
                (i + 1 < nx).then(|| k + 1),
                (j > 0).then(|| k - nx),
                (j + 1 < ny).then(|| k + nx),
            ];
            let known: Vec<f64> = nbs.into_iter().flatten().filter(|&m| in_domain(m) && !u[m].is_nan()).map(|m| u[m]).collect();
            if !known.is_empty() {
                filled.push((k, known.iter().sum::<f64>() / known.len() as f64));
            }
        }
        if filled.is_empty() {
            for &k in holes.iter() {
                u[k] = boundary.values[k];
            }
            break;
        }
        for &(k, v) in &filled {
            u[k] = v;
        }
        holes.retain(|k| u[*k].is_nan());
    }
}

/// Per-node albedo recovered from a solved height.
#[derive(Debug, Clone)]
pub struct AlbedoMap {
    /// `I1 / (N . L')`; the mask marks nodes where it is defined.
    pub albedo: ScalarField2D,
    /// Largest `|I1/(N.L') - I2/(N.L'')|` over nodes where both are defined.
    pub discrepancy: f64,
}

/// Albedo from the first image and the unit normal of `height` (central
/// differences), cross-checked against the second image.
pub fn recover_albedo(problem: &PsProblem, height: &ScalarField2D) -> Result<AlbedoMap> {
    let [i1, i2] = &problem.images;
    let [la, lb] = problem.lights;
    let grid = i1.grid;
    if height.grid != grid {
        return invalid("height must share the image grid");
    }
    let mut albedo = ScalarField2D::constant(grid, 0.0);
    let mut mask = vec![false; grid.len()];
    let mut discrepancy = 0.0f64;
    for k in 0..grid.len() {
        if !i1.in_domain(k) {
            continue;
        }
        let (i, j) = grid.coords(k);
        let g = height.gradient_central(i, j);
        let Some(nrm) = Vec3::new(-g[0], -g[1], 1.0).normalized() else { continue };
        let (ca, cb) = (nrm.dot(la), nrm.dot(lb));
        if ca <= ALBEDO_EPS || i1.values[k] <= 0.0 {
            continue;
        }
        let a = i1.values[k] / ca;
        albedo.values[k] = a;
        mask[k] = true;
        if cb > ALBEDO_EPS {
            discrepancy = discrepancy.max((a - i2.values[k] / cb).abs());
        }
    }
    Ok(AlbedoMap { albedo: albedo.with_mask(mask)?, discrepancy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid2D;
    use proptest::prelude::*;

    const S2: f64 = std::f64::consts::SQRT_2;

    /// Lambertian images of `u` with analytic gradient `du`, albedo `gamma`.
    fn images(grid: Grid2D, du: impl Fn(f64, f64) -> [f64; 2], lights: [Vec3; 2], gamma: f64) -> [ScalarField2D; 2] {
        let shade = |l: Vec3| {
            ScalarField2D::from_fn(grid, |x, y| {
                let g = du(x, y);
                let n = Vec3::new(-g[0], -g[1], 1.0).normalized().unwrap();
                gamma * n.dot(l.normalized().unwrap()).max(0.0)
            })
        };
        [shade(lights[0]), shade(lights[1])]
    }

    fn lights() -> [Vec3; 2] {
        [Vec3::Z, Vec3::new(0.6, 0.0, 0.8)]
    }

    #[test]
    fn plane_coefficients_by_hand() {
        let grid = Grid2D::square(0.0, 1.0, 5).unwrap();
        let imgs = images(grid, |_, _| [1.0, 0.0], lights(), 1.0);
        assert!((imgs[0].values[0] - 1.0 / S2).abs() < 1e-15);
        assert!((imgs[1].values[0] - 0.2 / S2).abs() < 1e-15);
        let p = PsProblem::new(imgs, lights(), ScalarField2D::constant(grid, 0.0)).unwrap();
        let t = assemble_bf(&p);
        for k in 0..grid.len() {
            assert!((t.b[k][0] + 0.6 / S2).abs() < 1e-15 && t.b[k][1] == 0.0);
            assert!((t.f.values[k] + 0.6 / S2).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_lights_are_rejected_and_cancel() {
        let grid = Grid2D::square(0.0, 1.0, 5).unwrap();
        let l = [Vec3::new(0.1, 0.2, 1.0); 2];
        let imgs = images(grid, |x, _| [x, 0.0], l, 1.0);
        assert!(PsProblem::new(imgs.clone(), l, ScalarField2D::constant(grid, 0.0)).is_err());
        let p = PsProblem { images: imgs, lights: [l[0].normalized().unwrap(); 2], boundary: ScalarField2D::constant(grid, 0.0) };
        assert!(assemble_bf(&p).b.iter().all(|b| b[0].abs() < 1e-16 && b[1].abs() < 1e-16));
    }

    #[test]
    fn unit_flow_integrates_to_a_ramp() {
        let grid = Grid2D::square(0.0, 1.0, 11).unwrap();
        let t = Transport { b: vec![[1.0, 0.0]; grid.len()], f: ScalarField2D::constant(grid, 1.0) };
        let s = solve_transport(&t, &ScalarField2D::constant(grid, 0.0)).unwrap();
        let exact = ScalarField2D::from_fn(grid, |x, _| x);
        assert!(s.height.max_abs_diff(&exact, |_| true) < 1e-14);
        assert!(s.unreachable.is_empty() && s.degenerate.is_empty());
    }

    #[test]
    fn diagonal_flow_with_zero_source_is_constant() {
        let grid = Grid2D::square(0.0, 1.0, 11).unwrap();
        let t = Transport { b: vec![[S2 / 2.0, S2 / 2.0]; grid.len()], f: ScalarField2D::constant(grid, 0.0) };
        let s = solve_transport(&t, &ScalarField2D::constant(grid, 0.0)).unwrap();
        assert!(s.height.values.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn plane_is_recovered() {
        let grid = Grid2D::square(0.0, 1.0, 129).unwrap();
        let exact = ScalarField2D::from_fn(grid, |x, _| x);
        let p = PsProblem::new(images(grid, |_, _| [1.0, 0.0], lights(), 1.0), lights(), exact.clone()).unwrap();
        let s = solve_transport(&assemble_bf(&p), &p.boundary).unwrap();
        assert!(s.height.max_abs_diff(&exact, |_| true) < 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn albedo_is_recovered_and_height_is_albedo_free() {
        let grid = Grid2D::square(-1.0, 1.0, 65).unwrap();
        let u = |x: f64, y: f64| 0.3 * (-(x * x + y * y) * 2.0).exp();
        let du = |x: f64, y: f64| {
            let e = -4.0 * u(x, y);
            [e * x, e * y]
        };
        let exact = ScalarField2D::from_fn(grid, u);
        let p1 = PsProblem::new(images(grid, du, lights(), 1.0), lights(), exact.clone()).unwrap();
        let p2 = PsProblem::new(images(grid, du, lights(), 0.5), lights(), exact.clone()).unwrap();
        let s1 = solve_transport(&assemble_bf(&p1), &exact).unwrap();
        let s2 = solve_transport(&assemble_bf(&p2), &exact).unwrap();
        assert!(s1.height.max_abs_diff(&s2.height, |_| true) < 1e-12);
        // Albedo from the exact height is exact; from the solved height it is close.
        let a = recover_albedo(&p2, &exact).unwrap();
        assert!(a.albedo.values.iter().enumerate().all(|(k, &v)| !a.albedo.in_domain(k) || (v - 0.5).abs() < 1e-2));
        let interior = |k: usize| {
            let (i, j) = grid.coords(k);
            i > 0 && j > 0 && i < 64 && j < 64
        };
        let ex = recover_albedo(&p1, &ScalarField2D::from_fn(grid, u)).unwrap();
        for k in 0..grid.len() {
            if interior(k) {
                assert!((ex.albedo.values[k] - 1.0).abs() < 2e-3);
            }
        }
    }

    #[test]
    fn shadowed_node_has_no_albedo() {
        let grid = Grid2D::square(0.0, 1.0, 5).unwrap();
        let mut imgs = images(grid, |_, _| [0.0, 0.0], lights(), 1.0);
        imgs[0].values[12] = 0.0;
        imgs[1].values[12] = 0.0;
        let p = PsProblem::new(imgs, lights(), ScalarField2D::constant(grid, 0.0)).unwrap();
        let a = recover_albedo(&p, &ScalarField2D::constant(grid, 0.0)).unwrap();
        assert!(!a.albedo.in_domain(12) && a.albedo.in_domain(11));
    }

    #[test]
    fn swapping_images_leaves_the_solution() {
        let grid = Grid2D::square(-1.0, 1.0, 33).unwrap();
        let du = |x: f64, y: f64| [0.2 * x, -0.1 * y];
        let exact = ScalarField2D::from_fn(grid, |x, y| 0.1 * x * x - 0.05 * y * y);
        let p = PsProblem::new(images(grid, du, lights(), 1.0), lights(), exact.clone()).unwrap();
        let l = lights();
        let q = PsProblem::new([p.images[1].clone(), p.images[0].clone()], [l[1], l[0]], exact.clone()).unwrap();
        let (tp, tq) = (assemble_bf(&p), assemble_bf(&q));
        for k in 0..grid.len() {
            assert_eq!(tp.b[k][0], -tq.b[k][0]);
            assert_eq!(tp.f.values[k], -tq.f.values[k]);
        }
        let (sp, sq) = (solve_transport(&tp, &exact).unwrap(), solve_transport(&tq, &exact).unwrap());
        assert!(sp.height.max_abs_diff(&sq.height, |_| true) < 1e-12);
    }

    #[test]
    fn source_line_is_unreachable_and_filled() {
        // Flow away from x = 0.5 in both directions: nothing reaches the middle column.
        let grid = Grid2D::square(0.0, 1.0, 11).unwrap();
        let b = (0..grid.len()).map(|k| [if grid.coords(k).0 <= 4 { -1.0 } else { 1.0 }, 0.0]).collect();
        let t = Transport { b, f: ScalarField2D::constant(grid, 0.0) };
        let s = solve_transport(&t, &ScalarField2D::constant(grid, 2.0)).unwrap();
        assert!(!s.unreachable.is_empty());
        assert!(s.height.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn three_lights_recover_a_bump() {
        let grid = Grid2D::square(-1.0, 1.0, 65).unwrap();
        let u = |x: f64, y: f64| 0.2 * (-(x * x + y * y) * 3.0).exp();
        let du = |x: f64, y: f64| {
            let e = -6.0 * u(x, y);
            [e * x, e * y]
        };
        let ls = [Vec3::Z, Vec3::new(0.6, 0.0, 0.8), Vec3::new(0.0, 0.5, 0.9)];
        let a = images(grid, du, [ls[0], ls[1]], 1.0);
        let b = images(grid, du, [ls[2], ls[2]], 1.0);
        let t = assemble_bf_three(&[a[0].clone(), a[1].clone(), b[0].clone()], ls).unwrap();
        let exact = ScalarField2D::from_fn(grid, u);
        let s = solve_transport(&t, &exact).unwrap();
        assert!(s.height.max_abs_diff(&exact, |_| true) < 2e-2);
        assert!(assemble_bf_three(&[a[0].clone(), a[1].clone(), b[0].clone()], [ls[0], ls[1], ls[0] + ls[1]]).is_err());
    }

    proptest! {
        #[test]
        fn scaling_images_scales_coefficients(gamma in 0.01f64..10.0, x in -1.0f64..1.0) {
            let grid = Grid2D::square(0.0, 1.0, 4).unwrap();
            let base = images(grid, |_, _| [x, 0.3], lights(), 0.1);
            let scaled = [base[0].map(|v| v * gamma), base[1].map(|v| v * gamma)];
            let zero = ScalarField2D::constant(grid, 0.0);
            let t0 = assemble_bf(&PsProblem::new(base, lights(), zero.clone()).unwrap());
            let t1 = assemble_bf(&PsProblem::new(scaled, lights(), zero).unwrap());
            for k in 0..grid.len() {
                prop_assert!((t1.b[k][0] - gamma * t0.b[k][0]).abs() <= 1e-12 * (1.0 + gamma));
                prop_assert!((t1.f.values[k] - gamma * t0.f.values[k]).abs() <= 1e-12 * (1.0 + gamma));
            }
        }
    }
}
