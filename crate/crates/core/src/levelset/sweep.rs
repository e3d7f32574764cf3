//! Fast sweeping for `v |grad T| = 1` on uniform grids of any dimension.

/// Role of a node in a sweeping solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    /// Holds a prescribed value and feeds its neighbours.
    Fixed(f64),
    /// Unknown, updated by the sweeps.
    Free,
    /// Outside the computational region: neither read nor written.
    Blocked,
}

/// Local slowness `1 / v` seen by the Godunov update at one node.
///
/// `upwind[k]` is the smaller neighbour value along axis `k` with that
/// neighbour's index, or `(f64::INFINITY, usize::MAX)` when the axis has no
/// usable neighbour. `candidate` is `None` on the first evaluation and the
/// previous tentative value on each of the [`refinements`](Self::refinements)
/// re-evaluations.
pub trait LocalSlowness<const D: usize> {
    fn slowness(&self, node: usize, upwind: &[(f64, usize); D], candidate: Option<f64>) -> f64;

    fn refinements(&self) -> usize {
        0
    }
}

/// Same speed everywhere.
#[derive(Debug, Clone, Copy)]
pub struct UniformSpeed(pub f64);

impl<const D: usize> LocalSlowness<D> for UniformSpeed {
    fn slowness(&self, _: usize, _: &[(f64, usize); D], _: Option<f64>) -> f64 {
        1.0 / self.0
    }
}

/// One speed per node.
#[derive(Debug, Clone, Copy)]
pub struct NodeSpeed<'a>(pub &'a [f64]);

impl<const D: usize> LocalSlowness<D> for NodeSpeed<'_> {
    fn slowness(&self, node: usize, _: &[(f64, usize); D], _: Option<f64>) -> f64 {
        1.0 / self.0[node]
    }
}

/// Stopping rule for the sweeps.
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    /// Cap on full rounds of `2^D` sweeps.
    pub max_rounds: usize,
    /// A round changing no value by more than this ends the solve.
    pub tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { max_rounds: 200, tol: 1e-12 }
    }
}

/// Outcome of [`fast_sweep`].
#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Arrival times; `INFINITY` on unreachable free nodes and on blocked nodes.
    pub values: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
}

/// Godunov solution of `sum_k ((t - a_k)/h_k)^2 = f^2` over the active axes.
/// Entries are `(a_k, h_k)`; the slice is sorted in place.
pub fn godunov_update(a: &mut [(f64, f64)], f: f64) -> f64 {
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut t = f64::INFINITY;
    let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
    for &(ak, hk) in a.iter() {
        if !ak.is_finite() || ak >= t {
            break;
        }
        let w = 1.0 / (hk * hk);
        sa += w;
        sb += ak * w;
        sc += ak * ak * w;
        let disc = sb * sb - sa * (sc - f * f);
        if disc < 0.0 {
            break;
        }
        t = (sb + disc.sqrt()) / sa;
    }
    t
}

/// Solves the stationary eikonal equation by Gauss-Seidel sweeps in all `2^D`
/// axis orders, starting from `init` (or `+inf`) on free nodes. Values only
/// ever decrease, so `init` must be an upper bound of the solution.
pub fn fast_sweep<const D: usize, S: LocalSlowness<D> + ?Sized>(
    dims: [usize; D],
    spacing: [f64; D],
    kinds: &[NodeKind],
    init: Option<&[f64]>,
    slowness: &S,
    opts: SweepOptions,
) -> SweepResult {
    let n: usize = dims.iter().product();
    assert_eq!(kinds.len(), n, "node kinds must cover the grid");
    let mut stride = [1usize; D];
    for k in 1..D {
        stride[k] = stride[k - 1] * dims[k - 1];
    }
    let mut t: Vec<f64> = kinds
        .iter()
        .enumerate()
        .map(|(i, k)| match k {
            NodeKind::Fixed(v) => *v,
            NodeKind::Free => init.map_or(f64::INFINITY, |x| x[i]),
            NodeKind::Blocked => f64::INFINITY,
        })
        .collect();

    let mut rounds = 0;
    let mut converged = false;
    let refinements = slowness.refinements();
    while rounds < opts.max_rounds {
        rounds += 1;
        let mut change = 0.0f64;
        for order in 0..(1usize << D) {
            let mut idx = [0usize; D];
            for k in 0..D {
                idx[k] = if order >> k & 1 == 1 { dims[k] - 1 } else { 0 };
            }
            'nodes: loop {
                let node: usize = (0..D).map(|k| idx[k] * stride[k]).sum();
                if kinds[node] == NodeKind::Free {
                    let mut upwind = [(f64::INFINITY, usize::MAX); D];
                    for k in 0..D {
                        if idx[k] > 0 {
                            let nb = node - stride[k];
                            if kinds[nb] != NodeKind::Blocked && t[nb] < upwind[k].0 {
                                upwind[k] = (t[nb], nb);
                            }
                        }
                        if idx[k] + 1 < dims[k] {
                            let nb = node + stride[k];
                            if kinds[nb] != NodeKind::Blocked && t[nb] < upwind[k].0 {
                                upwind[k] = (t[nb], nb);
                            }
                        }
                    }
                    let mut cand = None;
                    let mut new = f64::INFINITY;
                    for _ in 0..=refinements {
                        let f = slowness.slowness(node, &upwind, cand);
                        let mut a: [(f64, f64); D] = [(0.0, 0.0); D];
                        for k in 0..D {
                            a[k] = (upwind[k].0, spacing[k]);
                        }
                        new = godunov_update(&mut a, f);
                        if !new.is_finite() {
                            break;
                        }
                        cand = Some(new);
                    }
                    if new < t[node] {
                        let d = if t[node].is_finite() { t[node] - new } else { f64::INFINITY };
                        change = change.max(d);
                        t[node] = new;
                    }
                }
                // Odometer step in this sweep's directions.
                let mut k = 0;
                loop {
                    if k == D {
                        break 'nodes;
                    }
                    let rev = order >> k & 1 == 1;
                    if rev && idx[k] > 0 {
                        idx[k] -= 1;
                        break;
                    } else if !rev && idx[k] + 1 < dims[k] {
                        idx[k] += 1;
                        break;
                    }
                    idx[k] = if rev { dims[k] - 1 } else { 0 };
                    k += 1;
                }
            }
        }
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    SweepResult { values: t, rounds, converged }
}
