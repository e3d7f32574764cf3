//! Nozzle path over all layers and its time and material totals.

use serde::Serialize;

use super::{Infill, Layer};
use crate::error::{invalid, Result};
use crate::field::{dist, Polyline2D};

/// Feed rates in mm/min.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feeds {
    pub perimeter: f64,
    pub infill: f64,
    pub travel: f64,
}

impl Default for Feeds {
    fn default() -> Self {
        Feeds { perimeter: 1800.0, infill: 2700.0, travel: 6000.0 }
    }
}

impl Feeds {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("perimeter", self.perimeter), ("infill", self.infill), ("travel", self.travel)] {
            if !(f > 0.0 && f.is_finite()) {
                return invalid(format!("{name} feed must be positive, got {f}"));
            }
        }
        Ok(())
    }
}

/// Straight move of the nozzle to `to` at `feed` mm/min, depositing material
/// or not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    pub to: [f64; 3],
    pub feed: f64,
    pub extrude: bool,
}

/// Moves in execution order from the `start` position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToolPath {
    pub start: [f64; 3],
    pub moves: Vec<Move>,
}

impl ToolPath {
    /// Start and end point of every move.
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 3], &Move)> + '_ {
        let froms = std::iter::once(self.start).chain(self.moves.iter().map(|m| m.to));
        froms.zip(&self.moves)
    }

    /// Finite coordinates and positive feeds.
    pub fn validate(&self) -> Result<()> {
        if self.start.iter().any(|c| !c.is_finite()) {
            return invalid("tool path start is not finite");
        }
        for (n, m) in self.moves.iter().enumerate() {
            if m.to.iter().any(|c| !c.is_finite()) {
                return invalid(format!("move {n} has a non-finite target"));
            }
            if !(m.feed > 0.0 && m.feed.is_finite()) {
                return invalid(format!("move {n} has feed {}", m.feed));
            }
        }
        Ok(())
    }
}

fn length3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt()
}

struct Planner {
    path: ToolPath,
    at: [f64; 3],
}

impl Planner {
    fn go(&mut self, to: [f64; 3], feed: f64, extrude: bool) {
        if to != self.at {
            self.path.moves.push(Move { to, feed, extrude });
            self.at = to;
        }
    }

    /// Vertices of `curve` in drawing order, entered at the point nearest
    /// to the nozzle. Closed curves end where they started.
    fn entry_order(&self, curve: &Polyline2D) -> Vec<[f64; 2]> {
        let here = [self.at[0], self.at[1]];
        let v = &curve.vertices;
        if curve.closed {
            let first = (0..v.len()).min_by(|&a, &b| dist(v[a], here).total_cmp(&dist(v[b], here))).unwrap_or(0);
            (0..=v.len()).map(|k| v[(first + k) % v.len()]).collect()
        } else if dist(v[v.len() - 1], here) < dist(v[0], here) {
            v.iter().rev().copied().collect()
        } else {
            v.clone()
        }
    }

    fn entry_distance(&self, curve: &Polyline2D) -> f64 {
        let here = [self.at[0], self.at[1]];
        if curve.closed {
            curve.vertices.iter().map(|&p| dist(p, here)).fold(f64::INFINITY, f64::min)
        } else {
            dist(curve.vertices[0], here).min(dist(curve.vertices[curve.vertices.len() - 1], here))
        }
    }

    /// Draws all `curves`, always continuing with the one whose entry point
    /// is nearest (ties go to the earlier curve).
    fn draw_greedy(&mut self, curves: &[Polyline2D], z: f64, feeds: &Feeds, feed: f64) {
        let mut left: Vec<&Polyline2D> = curves.iter().filter(|c| !c.vertices.is_empty()).collect();
        while !left.is_empty() {
            let best = (0..left.len())
                .min_by(|&a, &b| self.entry_distance(left[a]).total_cmp(&self.entry_distance(left[b])))
                .unwrap_or(0);
            let curve = left.remove(best);
            let pts = self.entry_order(curve);
            self.go([pts[0][0], pts[0][1], z], feeds.travel, false);
            for p in &pts[1..] {
                self.go([p[0], p[1], z], feed, true);
            }
        }
    }
}

/// Path over the layers bottom to top: each layer's contours first, then its
/// infill curves, each group in nearest-entry greedy order. Moves between
/// curves are travel moves. `infill` holds one entry per layer.
pub fn plan_toolpath(layers: &[Layer], infill: &[Infill], feeds: &Feeds) -> Result<ToolPath> {
    feeds.validate()?;
    if layers.len() != infill.len() {
        return invalid(format!("{} layers but {} infill sets", layers.len(), infill.len()));
    }
    let mut planner = Planner { path: ToolPath::default(), at: [0.0; 3] };
    for (layer, fill) in layers.iter().zip(infill) {
        if !layer.z.is_finite() {
            return invalid("layer height is not finite");
        }
        planner.draw_greedy(&layer.contours, layer.z, feeds, feeds.perimeter);
        planner.draw_greedy(&fill.curves, layer.z, feeds, feeds.infill);
    }
    planner.path.validate()?;
    Ok(planner.path)
}

/// Totals over a tool path. Times in seconds, lengths in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub print_time_s: f64,
    pub material_length_mm: f64,
    pub travel_length_mm: f64,
    pub move_count: usize,
    pub travel_moves: usize,
}

/// Time is the sum of length over feed; material is the extruded length.
pub fn metrics(path: &ToolPath) -> Metrics {
    let mut m = Metrics { print_time_s: 0.0, material_length_mm: 0.0, travel_length_mm: 0.0, move_count: path.moves.len(), travel_moves: 0 };
    for (from, mv) in path.segments() {
        let len = length3(from, mv.to);
        m.print_time_s += len / mv.feed * 60.0;
        if mv.extrude {
            m.material_length_mm += len;
        } else {
            m.travel_length_mm += len;
            m.travel_moves += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(lo: f64, hi: f64, ccw: bool) -> Polyline2D {
        let mut v = vec![[lo, lo], [hi, lo], [hi, hi], [lo, hi]];
        if !ccw {
            v.reverse();
        }
        Polyline2D::new(v, true).unwrap()
    }

    fn empty_fill() -> Infill {
        Infill { curves: vec![], thin_parts: 0, raster_spacing: 0.0 }
    }

    #[test]
    fn timing_arithmetic() {
        let two = ToolPath {
            start: [0.0; 3],
            moves: vec![
                Move { to: [10.0, 0.0, 0.0], feed: 1200.0, extrude: true },
                Move { to: [10.0, 10.0, 0.0], feed: 1200.0, extrude: true },
            ],
        };
        let m = metrics(&two);
        assert!((m.print_time_s - 1.0).abs() < 1e-12);
        assert_eq!(m.material_length_mm, 20.0);
        let one = ToolPath { start: [0.0; 3], moves: vec![Move { to: [0.0, 60.0, 0.0], feed: 3600.0, extrude: true }] };
        let m = metrics(&one);
        assert_eq!((m.print_time_s, m.material_length_mm), (1.0, 60.0));
        let travel = ToolPath { start: [0.0; 3], moves: vec![Move { to: [3.0, 4.0, 0.0], feed: 6000.0, extrude: false }] };
        let m = metrics(&travel);
        assert_eq!((m.material_length_mm, m.travel_length_mm, m.travel_moves), (0.0, 5.0, 1));
    }

    #[test]
    fn perimeter_then_nearest_infill() {
        let layer = Layer { z: 0.2, contours: vec![square(0.0, 10.0, true)] };
        let fill = Infill {
            curves: vec![
                Polyline2D::new(vec![[9.0, 5.0], [1.0, 5.0]], false).unwrap(),
                Polyline2D::new(vec![[1.0, 1.0], [9.0, 1.0]], false).unwrap(),
            ],
            thin_parts: 0,
            raster_spacing: 0.0,
        };
        let path = plan_toolpath(&[layer], &[fill], &Feeds::default()).unwrap();
        // Travel to the contour, 4 sides, travel, line, travel, line.
        let kinds: Vec<bool> = path.moves.iter().map(|m| m.extrude).collect();
        assert_eq!(kinds, [false, true, true, true, true, false, true, false, true]);
        assert_eq!(path.moves[0].to, [0.0, 0.0, 0.2]);
        assert_eq!(path.moves[4].to, [0.0, 0.0, 0.2]);
        assert!(path.moves[1..5].iter().all(|m| m.feed == 1800.0));
        // The nozzle is back at the origin, so the lower line comes first.
        assert_eq!(path.moves[5].to, [1.0, 1.0, 0.2]);
        assert_eq!(path.moves[7].to, [9.0, 5.0, 0.2]);
        assert_eq!(path.moves[6].feed, 2700.0);
        assert_eq!(path.moves[5].feed, 6000.0);
        let m = metrics(&path);
        assert!((m.material_length_mm - 56.0).abs() < 1e-12);
    }

    #[test]
    fn closed_loops_are_entered_at_the_nearest_vertex() {
        let layer = Layer { z: 1.0, contours: vec![square(0.0, 4.0, true)] };
        let mut planner = Planner { path: ToolPath::default(), at: [5.0, 5.0, 1.0] };
        planner.draw_greedy(&layer.contours, 1.0, &Feeds::default(), 1800.0);
        assert_eq!(planner.path.moves[0].to, [4.0, 4.0, 1.0]);
        assert_eq!(planner.path.moves.last().unwrap().to, [4.0, 4.0, 1.0]);
        // Orientation is kept.
        assert_eq!(planner.path.moves[1].to, [0.0, 4.0, 1.0]);
    }

    #[test]
    fn bad_inputs() {
        let layer = Layer { z: 0.0, contours: vec![square(0.0, 1.0, true)] };
        assert!(plan_toolpath(std::slice::from_ref(&layer), &[], &Feeds::default()).is_err());
        let bad = Feeds { travel: 0.0, ..Feeds::default() };
        assert!(plan_toolpath(std::slice::from_ref(&layer), &[empty_fill()], &bad).is_err());
        let nan = Layer { z: f64::NAN, ..layer };
        assert!(plan_toolpath(&[nan], &[empty_fill()], &Feeds::default()).is_err());
        assert!(plan_toolpath(&[], &[], &Feeds::default()).unwrap().moves.is_empty());
    }
}
