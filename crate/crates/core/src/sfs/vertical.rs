//! Vertical-light reconstruction by fast sweeping on `|grad u| = sqrt(1/I^2 - 1)`.

use super::shading::{cost_primitive, mean_slowness, Flow, Shading};
use super::{SfsProblem, SfsSolution};
use crate::error::{Error, Result};
use crate::field::ScalarField2D;
use crate::levelset::{fast_sweep, LocalSlowness, NodeKind, SweepOptions};

/// A domain node next to the silhouette is fixed from the local linear model
/// of `q` when the silhouette is at most this many cells away.
const RIM_REACH: f64 = 1.5;

/// Slowness averaged over the segment to the upwind neighbours: with `q`
/// varying linearly between node and upwind point, the mean of
/// `sqrt((1-q)/q)` is exact, which removes the first-order error near the
/// silhouette where the slowness blows up.
struct SegmentSlowness<'a> {
    q: &'a [f64],
    floor: f64,
    /// Weight floor keeping the upwind average continuous when the
    /// candidate ties with every neighbour (flat tops).
    tie_weight: f64,
}

impl LocalSlowness<2> for SegmentSlowness<'_> {
    fn slowness(&self, node: usize, upwind: &[(f64, usize); 2], candidate: Option<f64>) -> f64 {
        let qi = self.q[node].max(self.floor);
        let Some(t) = candidate else {
            return mean_slowness(qi, qi);
        };
        let (mut wsum, mut qsum) = (0.0, 0.0);
        for &(a, nb) in upwind {
            if nb == usize::MAX || !a.is_finite() {
                continue;
            }
            let w = (t - a).max(0.0).powi(2) + self.tie_weight;
            wsum += w;
            qsum += w * self.q[nb].max(0.0);
        }
        mean_slowness(qi, (qsum / wsum).max(self.floor))
    }

    fn refinements(&self) -> usize {
        2
    }
}

/// Viscosity solution of the vertical-light eikonal equation with the
/// problem's boundary data. Brightness maxima are free nodes unless
/// `pin_maxima` is set.
pub fn solve_vertical(problem: &SfsProblem) -> Result<SfsSolution> {
    problem.validate()?;
    let sh = Shading::new(problem)?;
    if sh.flow != Flow::Isotropic {
        return Err(Error::Unsupported("fast sweeping needs a vertical light".into()));
    }
    let grid = sh.grid;
    let h = grid.min_spacing();
    let n = grid.len();
    let mut kinds: Vec<NodeKind> = (0..n)
        .map(|k| if sh.dirichlet[k] { NodeKind::Fixed(sh.g[k]) } else { NodeKind::Free })
        .collect();

    for k in 0..n {
        if kinds[k] != NodeKind::Free {
            continue;
        }
        let Some(g_rim) = sh.silhouette_neighbours(k).map(|nb| sh.g[nb]).reduce(f64::min) else {
            continue;
        };
        let grad = domain_gradient(&sh, k);
        let slope = grad[0].hypot(grad[1]);
        if slope > 0.0 && sh.q[k] / slope <= RIM_REACH * h {
            kinds[k] = NodeKind::Fixed(g_rim + cost_primitive(sh.q[k]) / slope);
        }
    }

    let slowness = SegmentSlowness {
        q: &sh.q,
        floor: super::MIN_INTENSITY * super::MIN_INTENSITY,
        tie_weight: (1e-6 * h).powi(2),
    };
    let opts = SweepOptions { max_rounds: 500, tol: 1e-12 };
    let r = fast_sweep(grid.dims, grid.spacing, &kinds, None, &slowness, opts);
    let mut height = ScalarField2D::new(grid, r.values)?;
    for k in 0..n {
        if !height.values[k].is_finite() {
            height.values[k] = sh.g[k];
        }
    }
    height.mask = problem.image.mask.clone();
    Ok(SfsSolution::from_height(height, problem.mu, r.rounds, 0.0, r.converged, sh.clamped))
}

/// Gradient of `q` from domain nodes only: central where both neighbours are
/// in the domain, one-sided otherwise, zero along an isolated axis.
fn domain_gradient(sh: &Shading, k: usize) -> [f64; 2] {
    let [nx, ny] = sh.grid.dims;
    let (i, j) = (k % nx, k / nx);
    let mut out = [0.0; 2];
    for (a, (idx, len, stride)) in [(i, nx, 1usize), (j, ny, nx)].into_iter().enumerate() {
        let h = sh.grid.spacing[a];
        let lo = (idx > 0 && sh.domain[k - stride]).then(|| k - stride);
        let hi = (idx + 1 < len && sh.domain[k + stride]).then(|| k + stride);
        out[a] = match (lo, hi) {
            (Some(l), Some(r)) => (sh.q[r] - sh.q[l]) / (2.0 * h),
            (None, Some(r)) => (sh.q[r] - sh.q[k]) / h,
            (Some(l), None) => (sh.q[k] - sh.q[l]) / h,
            (None, None) => 0.0,
        };
    }
    out
}
