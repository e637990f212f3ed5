//! Nearest-sensor partitioning of measurement points.
//!
//! Sensor `m1` dominates `m2` at `x` when `x` is at least as close to `m1`
//! as to `m2`. A measurement point belongs to the sensor that dominates every
//! other sensor at its position; when several do (equal distance), the lowest
//! sensor id wins, so every point has exactly one owner.
//!
//! Assignment uses a uniform grid over the sensors and an expanding ring
//! search, so each point only inspects the sensors near it.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::campaign::{euclidean_distance, MeasurementPoint, Point2D, SensorNode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DominanceError {
    #[error("EmptySensorSet: at least one sensor is required")]
    EmptySensorSet,
}

/// Result of partitioning a point set among sensors.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DominanceAssignment {
    /// Point id to owning sensor id.
    pub owner: BTreeMap<u32, u32>,
    /// Sensor id to owned point ids, in input order. Every sensor appears,
    /// possibly with an empty list.
    pub per_sensor: BTreeMap<u32, Vec<u32>>,
}

impl DominanceAssignment {
    /// Assignment CSV with header `point_id,sensor_id`, rows in point-id order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point_id,sensor_id\n");
        for (p, s) in &self.owner {
            out.push_str(&format!("{p},{s}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionStats {
    pub counts: BTreeMap<u32, usize>,
    pub max_load: usize,
    pub min_load: usize,
}

pub fn dominates(m1: &SensorNode, m2: &SensorNode, x: Point2D) -> bool {
    euclidean_distance(x, m1.position) <= euclidean_distance(x, m2.position)
}

/// `(distance, id)` lexicographic comparison; lower is better.
fn better(d: f64, id: u32, best_d: f64, best_id: u32) -> bool {
    d < best_d || (d == best_d && id < best_id)
}

struct SensorGrid<'a> {
    sensors: &'a [SensorNode],
    min: Point2D,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> SensorGrid<'a> {
    fn build(sensors: &'a [SensorNode]) -> Self {
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for s in sensors {
            min_x = min_x.min(s.position.x);
            min_y = min_y.min(s.position.y);
            max_x = max_x.max(s.position.x);
            max_y = max_y.max(s.position.y);
        }
        let w = max_x - min_x;
        let h = max_y - min_y;
        // about one sensor per cell on average
        let side = (sensors.len() as f64).sqrt().ceil().max(1.0);
        let mut cell = w.max(h) / side;
        if !(cell.is_finite() && cell > 0.0) {
            cell = 1.0;
        }
        let cols = ((w / cell).floor() as usize + 1).max(1);
        let rows = ((h / cell).floor() as usize + 1).max(1);
        let mut grid = SensorGrid {
            sensors,
            min: Point2D::new(min_x, min_y),
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        };
        for (i, s) in sensors.iter().enumerate() {
            let (c, r) = grid.cell_of(s.position);
            grid.buckets[r * cols + c].push(i);
        }
        grid
    }

    fn cell_of(&self, p: Point2D) -> (usize, usize) {
        let clamp = |v: f64, n: usize| -> usize {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v.floor() as usize).min(n - 1)
            }
        };
        (
            clamp((p.x - self.min.x) / self.cell, self.cols),
            clamp((p.y - self.min.y) / self.cell, self.rows),
        )
    }

    fn nearest(&self, p: Point2D) -> u32 {
        let (pc, pr) = self.cell_of(p);
        let (pc, pr) = (pc as isize, pr as isize);
        let mut best_d = f64::INFINITY;
        let mut best_id = u32::MAX;
        let max_ring = self.cols.max(self.rows) as isize;
        for ring in 0..=max_ring {
            // Sensors in ring `ring` or beyond are at least `(ring - 1) * cell`
            // away. The relative margin absorbs rounding in the computed
            // distances so an exact tie in a farther ring is never skipped.
            if ring > 0 && best_d < ((ring - 1) as f64) * self.cell * (1.0 - 1e-9) {
                break;
            }
            for r in (pr - ring)..=(pr + ring) {
                if r < 0 || r >= self.rows as isize {
                    continue;
                }
                let on_edge_row = r == pr - ring || r == pr + ring;
                let step = if on_edge_row { 1 } else { (2 * ring).max(1) };
                let mut c = pc - ring;
                while c <= pc + ring {
                    if c >= 0 && c < self.cols as isize {
                        for &i in &self.buckets[r as usize * self.cols + c as usize] {
                            let s = &self.sensors[i];
                            let d = euclidean_distance(p, s.position);
                            if better(d, s.id, best_d, best_id) {
                                best_d = d;
                                best_id = s.id;
                            }
                        }
                    }
                    c += step;
                }
            }
        }
        best_id
    }
}

/// Assigns each point to its dominating sensor (nearest, ties to lowest id).
pub fn assign_dominances(
    sensors: &[SensorNode],
    points: &[MeasurementPoint],
) -> Result<DominanceAssignment, DominanceError> {
    if sensors.is_empty() {
        return Err(DominanceError::EmptySensorSet);
    }
    let grid = SensorGrid::build(sensors);
    let mut out = DominanceAssignment::default();
    for s in sensors {
        out.per_sensor.entry(s.id).or_default();
    }
    for p in points {
        let owner = grid.nearest(p.position);
        out.owner.insert(p.id, owner);
        out.per_sensor.entry(owner).or_default().push(p.id);
    }
    Ok(out)
}

pub fn partition_stats(a: &DominanceAssignment) -> PartitionStats {
    let counts: BTreeMap<u32, usize> = a.per_sensor.iter().map(|(s, ps)| (*s, ps.len())).collect();
    PartitionStats {
        max_load: counts.values().copied().max().unwrap_or(0),
        min_load: counts.values().copied().min().unwrap_or(0),
        counts,
    }
}

/// A sensor's dominance region clipped to the campaign rectangle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellPolygon {
    pub sensor_id: u32,
    /// Counter-clockwise ring, not closed; empty when the region has no area
    /// (e.g. a coincident sensor that loses every tie).
    pub ring: Vec<[f64; 2]>,
}

/// Dominance regions as polygons inside `[0, width] x [0, height]`, for
/// plotting. Each region is the rectangle clipped by one bisector half-plane
/// per other sensor, so this is quadratic in the number of sensors.
pub fn cell_polygons(sensors: &[SensorNode], width: f64, height: f64) -> Vec<CellPolygon> {
    let mut out = Vec::with_capacity(sensors.len());
    for s in sensors {
        let mut ring = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(width, 0.0),
            Point2D::new(width, height),
            Point2D::new(0.0, height),
        ];
        for other in sensors {
            if other.id == s.id {
                continue;
            }
            if other.position == s.position {
                if other.id < s.id {
                    ring.clear();
                }
                continue;
            }
            ring = clip_half_plane(&ring, s.position, other.position);
            if ring.is_empty() {
                break;
            }
        }
        out.push(CellPolygon { sensor_id: s.id, ring: ring.iter().map(|p| [p.x, p.y]).collect() });
    }
    out
}

/// Keeps the part of `poly` at least as close to `a` as to `b`.
fn clip_half_plane(poly: &[Point2D], a: Point2D, b: Point2D) -> Vec<Point2D> {
    // f(p) <= 0  <=>  |p - a| <= |p - b|
    let nx = b.x - a.x;
    let ny = b.y - a.y;
    let c = (b.x * b.x + b.y * b.y - a.x * a.x - a.y * a.y) / 2.0;
    let f = |p: Point2D| nx * p.x + ny * p.y - c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let fc = f(cur);
        let fn_ = f(next);
        if fc <= 0.0 {
            out.push(cur);
        }
        if (fc < 0.0 && fn_ > 0.0) || (fc > 0.0 && fn_ < 0.0) {
            let t = fc / (fc - fn_);
            out.push(Point2D::new(cur.x + t * (next.x - cur.x), cur.y + t * (next.y - cur.y)));
        }
    }
    if out.len() < 3 {
        out.clear();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn sensor(id: u32, x: f64, y: f64) -> SensorNode {
        SensorNode::new(id, Point2D::new(x, y), 1.0)
    }

    fn oracle(sensors: &[SensorNode], p: Point2D) -> u32 {
        let mut best: Option<&SensorNode> = None;
        for s in sensors {
            best = match best {
                None => Some(s),
                Some(b) => {
                    let (ds, db) = (euclidean_distance(p, s.position), euclidean_distance(p, b.position));
                    if ds < db || (ds == db && s.id < b.id) {
                        Some(s)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best.unwrap().id
    }

    #[test]
    fn dominance_examples() {
        let m1 = sensor(1, 0.0, 0.0);
        let m2 = sensor(2, 10.0, 0.0);
        assert!(dominates(&m1, &m2, Point2D::new(2.0, 0.0)));
        assert!(!dominates(&m2, &m1, Point2D::new(2.0, 0.0)));
        assert!(dominates(&m1, &m2, Point2D::new(5.0, 0.0)));
        assert!(dominates(&m2, &m1, Point2D::new(5.0, 0.0)));
    }

    #[test]
    fn dominates_matches_distance_comparison() {
        let mut rng = seeded(11);
        for _ in 0..1000 {
            let a = sensor(1, rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let b = sensor(2, rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let x = Point2D::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let da = ((x.x - a.position.x).powi(2) + (x.y - a.position.y).powi(2)).sqrt();
            let db = ((x.x - b.position.x).powi(2) + (x.y - b.position.y).powi(2)).sqrt();
            assert_eq!(dominates(&a, &b, x), da <= db);
        }
    }

    #[test]
    fn single_sensor_owns_everything() {
        let pts: Vec<_> = (0..7).map(|i| MeasurementPoint::new(i, Point2D::new(i as f64, 3.0))).collect();
        let a = assign_dominances(&[sensor(4, 1.0, 1.0)], &pts).unwrap();
        assert_eq!(a.per_sensor[&4], (0..7).collect::<Vec<_>>());
        let stats = partition_stats(&a);
        assert_eq!(stats.counts[&4], 7);
        assert_eq!((stats.max_load, stats.min_load), (7, 7));
    }

    #[test]
    fn tie_goes_to_lowest_id() {
        let sensors = [sensor(2, 10.0, 0.0), sensor(1, 0.0, 0.0)];
        let pts = [MeasurementPoint::new(0, Point2D::new(5.0, 0.0))];
        let a = assign_dominances(&sensors, &pts).unwrap();
        assert_eq!(a.owner[&0], 1);
    }

    #[test]
    fn coincident_sensors_resolve_to_lowest_id() {
        let sensors = [sensor(9, 3.0, 3.0), sensor(5, 3.0, 3.0)];
        let pts: Vec<_> = (0..5).map(|i| MeasurementPoint::new(i, Point2D::new(i as f64 * 7.0, 1.0))).collect();
        let a = assign_dominances(&sensors, &pts).unwrap();
        assert!(a.owner.values().all(|&s| s == 5));
        assert!(a.per_sensor[&9].is_empty());
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(assign_dominances(&[], &[]), Err(DominanceError::EmptySensorSet));
        let a = assign_dominances(&[sensor(1, 0.0, 0.0), sensor(2, 5.0, 5.0)], &[]).unwrap();
        let stats = partition_stats(&a);
        assert!(stats.counts.values().all(|&c| c == 0));
        assert_eq!(stats.counts.len(), 2);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = seeded(3);
        for _ in 0..50 {
            let k = rng.gen_range(1..40);
            let sensors: Vec<_> = (0..k)
                .map(|i| sensor(i * 3 + 1, rng.gen_range(0.0..5000.0), rng.gen_range(0.0..5000.0)))
                .collect();
            let pts: Vec<_> = (0..300)
                .map(|i| MeasurementPoint::new(i, Point2D::new(rng.gen_range(-500.0..5500.0), rng.gen_range(0.0..5000.0))))
                .collect();
            let a = assign_dominances(&sensors, &pts).unwrap();
            for p in &pts {
                assert_eq!(a.owner[&p.id], oracle(&sensors, p.position));
            }
            let total: usize = partition_stats(&a).counts.values().sum();
            assert_eq!(total, pts.len());
        }
    }

    #[test]
    fn csv_export() {
        let sensors = [sensor(1, 0.0, 0.0), sensor(2, 10.0, 0.0)];
        let pts = [MeasurementPoint::new(3, Point2D::new(9.0, 0.0)), MeasurementPoint::new(1, Point2D::new(1.0, 0.0))];
        let a = assign_dominances(&sensors, &pts).unwrap();
        assert_eq!(a.to_csv(), "point_id,sensor_id\n1,1\n3,2\n");
    }

    fn ring_area(ring: &[[f64; 2]]) -> f64 {
        let mut s = 0.0;
        for i in 0..ring.len() {
            let a = ring[i];
            let b = ring[(i + 1) % ring.len()];
            s += a[0] * b[1] - b[0] * a[1];
        }
        s / 2.0
    }

    #[test]
    fn polygons_tile_the_area() {
        let mut rng = seeded(8);
        let sensors: Vec<_> = (0..12)
            .map(|i| sensor(i, rng.gen_range(0.0..1000.0), rng.gen_range(0.0..800.0)))
            .collect();
        let polys = cell_polygons(&sensors, 1000.0, 800.0);
        let total: f64 = polys.iter().map(|p| ring_area(&p.ring)).sum();
        assert!((total - 800_000.0).abs() < 1e-6 * 800_000.0);
        for poly in &polys {
            let s = sensors.iter().find(|s| s.id == poly.sensor_id).unwrap();
            for v in &poly.ring {
                let v = Point2D::new(v[0], v[1]);
                assert_eq!(oracle_with_slack(&sensors, v, s), true);
            }
        }
    }

    fn oracle_with_slack(sensors: &[SensorNode], v: Point2D, owner: &SensorNode) -> bool {
        let d = euclidean_distance(v, owner.position);
        sensors.iter().all(|o| euclidean_distance(v, o.position) >= d - 1e-6)
    }

    #[test]
    fn coincident_polygon_is_empty() {
        let polys = cell_polygons(&[sensor(1, 5.0, 5.0), sensor(2, 5.0, 5.0)], 10.0, 10.0);
        assert_eq!(polys[0].ring.len(), 4);
        assert!(polys[1].ring.is_empty());
    }
}
