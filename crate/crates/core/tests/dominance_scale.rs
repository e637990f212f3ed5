use std::time::{Duration, Instant};

use rand::Rng;

use pcnm::campaign::{euclidean_distance, Point2D, SensorNode};
use pcnm::dominance::assign_dominances;
use pcnm::rng::seeded;
use pcnm::sim::generate_points;

// 1e5 points against 1e3 sensors must beat the quadratic scan comfortably.
#[test]
fn large_partition_is_subquadratic() {
    let side = 50_000.0;
    let mut rng = seeded(7);
    let sensors: Vec<SensorNode> = (0..1000)
        .map(|id| SensorNode::new(id, Point2D::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side)), 1.0))
        .collect();
    let points = generate_points(100_000, side, side, 8);

    let t = Instant::now();
    let a = assign_dominances(&sensors, &points).unwrap();
    let fast = t.elapsed();

    let t = Instant::now();
    let mut agree = 0usize;
    for p in &points {
        let mut best = (f64::INFINITY, u32::MAX);
        for s in &sensors {
            let d = euclidean_distance(p.position, s.position);
            if d < best.0 || (d == best.0 && s.id < best.1) {
                best = (d, s.id);
            }
        }
        agree += usize::from(a.owner[&p.id] == best.1);
    }
    let scan = t.elapsed();

    assert_eq!(agree, points.len());
    assert!(fast < Duration::from_secs(5), "partition took {fast:?}");
    assert!(fast * 3 < scan, "partition {fast:?} vs scan {scan:?}");
}
