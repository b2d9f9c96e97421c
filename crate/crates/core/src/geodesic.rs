//! Approximate surface geodesics and latency-predictor regression.
//!
//! Geodesics are shortest paths in a Steiner graph: the mesh vertices plus
//! `s` points on every mesh edge, with every pair of points on a common
//! triangle joined by a straight segment across that triangle. Edge points
//! sit at the first `s` terms of the base-2 van der Corput sequence
//! (1/2, 1/4, 3/4, 1/8, ...), so the point set for `s` contains the set for
//! every smaller `s` and path length can only shrink as `s` grows.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::mesh::HalfEdgeMesh;
use crate::{Error, Result};

pub const DEFAULT_SUBDIVISION: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicResult {
    /// Length in normalized surface units.
    pub length: f64,
    pub polyline: Vec<[f64; 3]>,
    pub subdivision: usize,
}

/// Positions (as fractions of edge length from the lower-indexed vertex) of
/// the `s` Steiner points placed on each mesh edge.
pub fn steiner_fractions(s: usize) -> Vec<f64> {
    (1..=s)
        .map(|mut i| {
            let (mut t, mut base) = (0.0, 0.5);
            while i > 0 {
                if i & 1 == 1 {
                    t += base;
                }
                base /= 2.0;
                i >>= 1;
            }
            t
        })
        .collect()
}

struct SteinerGraph<'a> {
    mesh: &'a HalfEdgeMesh,
    z: &'a [f64],
    fractions: Vec<f64>,
    /// `(position, faces it touches)` for the two query points.
    queries: [([f64; 3], Vec<usize>); 2],
}

impl SteinerGraph<'_> {
    fn vertex_nodes(&self) -> usize {
        self.mesh.vertex_count()
    }

    fn query_node(&self, q: usize) -> usize {
        self.vertex_nodes() + self.mesh.edges().len() * self.fractions.len() + q
    }

    fn position(&self, node: usize) -> [f64; 3] {
        let n = self.vertex_nodes();
        let s = self.fractions.len();
        if node < n {
            self.mesh.position(node, self.z)
        } else if node < self.query_node(0) {
            let (e, k) = ((node - n) / s, (node - n) % s);
            let me = self.mesh.edges()[e];
            let (a, b) = (self.mesh.position(me.a, self.z), self.mesh.position(me.b, self.z));
            let t = self.fractions[k];
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
        } else {
            self.queries[node - self.query_node(0)].0
        }
    }

    /// Faces whose closure contains `node`.
    fn faces_of(&self, node: usize) -> Vec<usize> {
        let n = self.vertex_nodes();
        let s = self.fractions.len();
        if node < n {
            self.mesh.outgoing(node).iter().map(|&h| self.mesh.half_edges()[h].face).collect()
        } else if node < self.query_node(0) {
            let e = (node - n) / s;
            self.mesh.edges()[e].half_edges().map(|h| self.mesh.half_edges()[h].face).collect()
        } else {
            self.queries[node - self.query_node(0)].1.clone()
        }
    }

    /// Every node lying on face `f`.
    fn face_nodes(&self, f: usize, out: &mut Vec<usize>) {
        let n = self.vertex_nodes();
        let s = self.fractions.len();
        for h in 3 * f..3 * f + 3 {
            let he = self.mesh.half_edges()[h];
            out.push(he.from);
            for k in 0..s {
                out.push(n + he.edge * s + k);
            }
        }
        for q in 0..2 {
            if self.queries[q].1.contains(&f) {
                out.push(self.query_node(q));
            }
        }
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by node id
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Faces whose closed triangle contains the planar point `p`.
fn faces_containing(mesh: &HalfEdgeMesh, p: [f64; 2]) -> Result<Vec<usize>> {
    let (f0, _) = mesh.locate(p)?;
    let mut candidates: Vec<usize> = mesh.faces()[f0]
        .iter()
        .flat_map(|&v| mesh.outgoing(v).iter().map(|&h| mesh.half_edges()[h].face))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let scale = mesh.longest_flat_edge();
    let tol = 1e-12 * scale * scale;
    Ok(candidates
        .into_iter()
        .filter(|&f| {
            let [a, b, c] = mesh.faces()[f].map(|v| mesh.xy()[v]);
            let side = |u: [f64; 2], w: [f64; 2]| (w[0] - u[0]) * (p[1] - u[1]) - (w[1] - u[1]) * (p[0] - u[0]);
            side(a, b) >= -tol && side(b, c) >= -tol && side(c, a) >= -tol
        })
        .collect())
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Shortest surface path between two planar points, lifted onto the mesh.
pub fn surface_geodesic(mesh: &HalfEdgeMesh, z: &[f64], src: [f64; 2], dst: [f64; 2], s: usize) -> Result<GeodesicResult> {
    if z.len() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch { expected: mesh.vertex_count(), got: z.len() });
    }
    let (ps, pd) = (mesh.surface_point(src, z)?, mesh.surface_point(dst, z)?);
    if src == dst {
        return Ok(GeodesicResult { length: 0.0, polyline: vec![ps], subdivision: s });
    }
    let graph = SteinerGraph {
        mesh,
        z,
        fractions: steiner_fractions(s),
        queries: [(ps, faces_containing(mesh, src)?), (pd, faces_containing(mesh, dst)?)],
    };
    let (start, goal) = (graph.query_node(0), graph.query_node(1));
    let total = goal + 1;
    let mut dist = vec![f64::INFINITY; total];
    let mut prev = vec![usize::MAX; total];
    let mut done = vec![false; total];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Entry(0.0, start));
    let mut around = Vec::new();
    while let Some(Entry(d, x)) = heap.pop() {
        if done[x] {
            continue;
        }
        done[x] = true;
        if x == goal {
            break;
        }
        let px = graph.position(x);
        around.clear();
        for f in graph.faces_of(x) {
            graph.face_nodes(f, &mut around);
        }
        for &y in &around {
            if done[y] {
                continue;
            }
            let nd = d + dist3(px, graph.position(y));
            if nd < dist[y] {
                dist[y] = nd;
                prev[y] = x;
                heap.push(Entry(nd, y));
            }
        }
    }
    if !done[goal] {
        return Err(Error::InvalidParameter("geodesic endpoints are not connected".into()));
    }
    let mut polyline = vec![graph.position(goal)];
    let mut v = goal;
    while v != start {
        v = prev[v];
        polyline.push(graph.position(v));
    }
    polyline.reverse();
    Ok(GeodesicResult { length: polyline_length(&polyline), polyline, subdivision: s })
}

pub fn polyline_length(polyline: &[[f64; 3]]) -> f64 {
    polyline.windows(2).map(|w| dist3(w[0], w[1])).sum()
}

/// Ordinary least-squares fit of latency against distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LinearFit {
    pub fn predict(&self, distance: f64) -> f64 {
        self.slope * distance + self.intercept
    }
}

/// Fits `rtt = slope * distance (+ intercept)`. Without an intercept the
/// line passes through the origin. `r^2 = 1 - SS_res / SS_tot` with `SS_tot`
/// taken about the mean, and 0 when every RTT is equal.
pub fn fit_latency_predictor(pairs: &[(f64, f64)], with_intercept: bool) -> Result<LinearFit> {
    let distinct = pairs.iter().any(|p| p.0 != pairs[0].0);
    if pairs.len() < 2 || !distinct {
        return Err(Error::DegenerateRegression);
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (slope, intercept) = if with_intercept {
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    } else {
        let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
        let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
        (sxy / sxx, 0.0)
    };
    let ss_res: f64 = pairs.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let ss_tot: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit { slope, intercept, r_squared })
}
