//! Deterministic synthetic measurement sets.
//!
//! Every fixture is generated from closed-form coordinates and RTT rules so
//! tests, benches and the CLI can rebuild them without files. JSON copies
//! are kept under `fixtures/` in the crate root.

use std::f64::consts::PI;

use crate::geo::{great_circle_latency, GeoPoint};
use crate::netgraph::{LatencyMatrix, VantagePoint};

/// Residual given to every intended edge of a synthetic fixture.
pub const EDGE_RESIDUAL_MS: f64 = 1.0;
/// RTT assigned to toy-network pairs that must not become edges.
pub const TOY_NON_EDGE_RTT_MS: f64 = 50.0;
/// Threshold that recovers exactly the intended toy edges.
pub const TOY_EPSILON_MS: f64 = 5.0;

fn point(id: String, lat: f64, lon: f64) -> VantagePoint {
    VantagePoint {
        name: id.clone(),
        id,
        location: GeoPoint::new(lat, lon).expect("fixture coordinates are valid"),
    }
}

fn ring(prefix: char, center: [f64; 2], radius: f64, angles_deg: &[f64]) -> Vec<VantagePoint> {
    angles_deg
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let t = a * PI / 180.0;
            // center is [lat, lon]; angle measured from east
            point(format!("{prefix}{i}"), center[0] + radius * t.sin(), center[1] + radius * t.cos())
        })
        .collect()
}

/// Three five-node cliques around the vertices of a triangle, joined into
/// a cycle by single bridge links `a0-b0`, `b1-c0` and `c1-a1`.
///
/// Clique and bridge pairs have RTT `2 GCL + 1 ms`; all other pairs have
/// RTT 50 ms, so thresholding at [`TOY_EPSILON_MS`] under the default
/// residual recovers exactly the intended graph.
pub fn toy_network() -> LatencyMatrix {
    let a = [0.0, 0.0];
    let b = [0.0, 8.0];
    let c = [6.93, 4.0];
    // bridge nodes face the neighbouring cluster; the rest face outward
    let mut points = ring('a', a, 1.5, &[0.0, 60.0, 150.0, 210.0, 270.0]);
    points.extend(ring('b', b, 1.5, &[180.0, 120.0, 30.0, 330.0, 270.0]));
    points.extend(ring('c', c, 1.5, &[300.0, 240.0, 30.0, 90.0, 150.0]));

    let mut edges = toy_bridges();
    for cl in ['a', 'b', 'c'] {
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((format!("{cl}{i}"), format!("{cl}{j}")));
            }
        }
    }
    let mut m = LatencyMatrix::new(points.clone()).expect("distinct ids");
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let is_edge = edges.iter().any(|(x, y)| (x == &p.id && y == &q.id) || (x == &q.id && y == &p.id));
            let rtt = if is_edge {
                2.0 * great_circle_latency(p.location, q.location) + EDGE_RESIDUAL_MS
            } else {
                TOY_NON_EDGE_RTT_MS
            };
            m.insert(&p.id, &q.id, rtt).expect("known ids");
        }
    }
    m
}

/// Bridge links of [`toy_network`].
pub fn toy_bridges() -> Vec<(String, String)> {
    [("a0", "b0"), ("b1", "c0"), ("c1", "a1")]
        .iter()
        .map(|(x, y)| (x.to_string(), y.to_string()))
        .collect()
}

/// Pair whose traffic detours in [`detour_network`].
pub const DETOUR_PAIR: (&str, &str) = ("w0", "e0");

/// Two clusters (`w`, `e`) on either side of a gap, a cluster `g` inside
/// the gap, and a relay cluster (`n`) to the north.
///
/// `w`, `e` and `g` reach each other only through the relay: their pairs
/// pay the minimum over relay nodes of the two legs' RTTs. Every other pair
/// (within a cluster, or between a cluster and the relay) has RTT
/// `2 GCL + 1 ms`.
pub fn detour_network() -> LatencyMatrix {
    let mut points = ring('w', [0.0, 0.0], 0.8, &[0.0, 90.0, 180.0, 270.0]);
    points.extend(ring('e', [0.0, 10.0], 0.8, &[180.0, 90.0, 0.0, 270.0]));
    points.extend(ring('g', [0.0, 5.0], 0.8, &[0.0, 90.0, 180.0, 270.0]));
    points.extend(ring('n', [8.0, 5.0], 0.8, &[0.0, 90.0, 180.0, 270.0]));
    let direct = |p: &VantagePoint, q: &VantagePoint| 2.0 * great_circle_latency(p.location, q.location) + EDGE_RESIDUAL_MS;
    let cluster = |p: &VantagePoint| p.id.chars().next().expect("nonempty id");

    let mut m = LatencyMatrix::new(points.clone()).expect("distinct ids");
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let (cp, cq) = (cluster(p), cluster(q));
            let rtt = if cp != 'n' && cq != 'n' && cp != cq {
                points
                    .iter()
                    .filter(|r| cluster(r) == 'n')
                    .map(|r| direct(p, r) + direct(r, q))
                    .fold(f64::INFINITY, f64::min)
            } else {
                direct(p, q)
            };
            m.insert(&p.id, &q.id, rtt).expect("known ids");
        }
    }
    m
}

/// Twenty-one US metro locations.
pub const US_CITIES: [(&str, f64, f64); 21] = [
    ("atlanta", 33.749, -84.388),
    ("boston", 42.3601, -71.0589),
    ("chicago", 41.8781, -87.6298),
    ("dallas", 32.7767, -96.797),
    ("denver", 39.7392, -104.9903),
    ("detroit", 42.3314, -83.0458),
    ("houston", 29.7604, -95.3698),
    ("kansas-city", 39.0997, -94.5786),
    ("las-vegas", 36.1699, -115.1398),
    ("los-angeles", 34.0522, -118.2437),
    ("miami", 25.7617, -80.1918),
    ("minneapolis", 44.9778, -93.265),
    ("new-york", 40.7128, -74.006),
    ("philadelphia", 39.9526, -75.1652),
    ("phoenix", 33.4484, -112.074),
    ("pittsburgh", 40.4406, -79.9959),
    ("portland", 45.5152, -122.6784),
    ("salt-lake-city", 40.7608, -111.891),
    ("san-francisco", 37.7749, -122.4194),
    ("seattle", 47.6062, -122.3321),
    ("washington", 38.9072, -77.0369),
];

/// Deterministic value in `[0, 1)` from a pair of indices and a seed.
fn hash_unit(i: usize, j: usize, seed: u64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [i as u64, j as u64] {
        h ^= v.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Full-mesh RTTs between [`US_CITIES`]: path inflation of 1.2 to 1.6 over
/// the great-circle latency plus 0.5 to 3 ms of access delay, drawn from a
/// seeded hash.
pub fn us_sample(seed: u64) -> LatencyMatrix {
    let points: Vec<VantagePoint> = US_CITIES.iter().map(|&(id, lat, lon)| point(id.to_string(), lat, lon)).collect();
    let mut m = LatencyMatrix::new(points.clone()).expect("distinct ids");
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let gcl = great_circle_latency(points[i].location, points[j].location);
            let stretch = 1.2 + 0.4 * hash_unit(i, j, seed);
            let access = 0.5 + 2.5 * hash_unit(j, i, seed);
            m.insert(&points[i].id, &points[j].id, 2.0 * gcl * stretch + access).expect("known ids");
        }
    }
    m
}
